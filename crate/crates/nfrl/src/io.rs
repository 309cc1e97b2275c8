//! Reading datasets and schemas; JSON model and rule files.
//!
//! Model and rule files are JSON documents with a `format` tag and a
//! `version`. Floats are written in shortest round-trip form and parsed with
//! exact rounding, so saving and loading reproduces every weight bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use nfrl_core::{Dataset, NfrlModel, RuleSet, Schema};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT: &str = "nfrl-model";
pub const RULES_FORMAT: &str = "nfrl-rules";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Core { path: PathBuf, source: nfrl_core::Error },
}

pub type Result<T> = std::result::Result<T, IoError>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.into(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.into(), source })?;
    }
    fs::write(path, text).map_err(|source| IoError::Io { path: path.into(), source })
}

pub fn load_schema(path: &Path) -> Result<Schema> {
    Schema::parse(&read_text(path)?).map_err(|source| IoError::Core { path: path.into(), source })
}

/// Reads a delimiter-separated file with a header row.
pub fn load_dataset(data: &Path, schema: &Path, delimiter: u8) -> Result<Dataset> {
    let schema = load_schema(schema)?;
    let csv_err = |source| IoError::Csv { path: data.into(), source };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(data)
        .map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    let records: Vec<Vec<&str>> = records.iter().map(|r| r.iter().collect()).collect();
    Dataset::from_records(schema, &header, records).map_err(|source| IoError::Core { path: data.into(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.into(), source })?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| IoError::Json { path: path.into(), source })
}

fn check_header(path: &Path, format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(IoError::Format { path: path.into(), msg: format!("field `format`: expected `{expected}`, found `{format}`") });
    }
    if version != FORMAT_VERSION {
        return Err(IoError::Format { path: path.into(), msg: format!("field `version`: unsupported version {version}") });
    }
    Ok(())
}

/// A model together with the class names its logits refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub class_names: Vec<String>,
    pub model: NfrlModel,
}

impl ModelFile {
    pub fn new(model: NfrlModel, class_names: Vec<String>) -> Self {
        Self { format: MODEL_FORMAT.into(), version: FORMAT_VERSION, class_names, model }
    }
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    write_json(path, file)
}

/// Loads and validates a model file: shapes, finiteness and class count.
pub fn load_model(path: &Path) -> Result<ModelFile> {
    let file: ModelFile = read_json(path)?;
    check_header(path, &file.format, file.version, MODEL_FORMAT)?;
    let model = NfrlModel::new(file.model.binarizer, file.model.net)
        .map_err(|source| IoError::Core { path: path.into(), source })?;
    if file.class_names.len() != model.net.classes() {
        return Err(IoError::Format {
            path: path.into(),
            msg: format!(
                "field `class_names`: {} names for {} logits",
                file.class_names.len(),
                model.net.classes()
            ),
        });
    }
    Ok(ModelFile { model, ..file })
}

/// Structured rule export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesFile {
    pub format: String,
    pub version: u32,
    pub class_names: Vec<String>,
    pub rules: RuleSet,
}

impl RulesFile {
    pub fn new(rules: RuleSet, class_names: Vec<String>) -> Self {
        Self { format: RULES_FORMAT.into(), version: FORMAT_VERSION, class_names, rules }
    }
}

pub fn save_rules(path: &Path, file: &RulesFile) -> Result<()> {
    write_json(path, file)
}

pub fn load_rules(path: &Path) -> Result<RulesFile> {
    let file: RulesFile = read_json(path)?;
    check_header(path, &file.format, file.version, RULES_FORMAT)?;
    if file.rules.bias.len() != file.class_names.len() {
        return Err(IoError::Format { path: path.into(), msg: "field `bias`: length differs from `class_names`".into() });
    }
    if let Some(r) = file.rules.rules.iter().find(|r| r.scores.len() != file.class_names.len()) {
        return Err(IoError::Format { path: path.into(), msg: format!("rule {}: field `scores` has the wrong length", r.id) });
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nfrl_core::{BinarizerModel, Binning};

    #[test]
    fn model_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let schema = dir.path().join("s.schema");
        let data = dir.path().join("d.csv");
        fs::write(&schema, "a continuous\nc categorical\ny label\n").unwrap();
        fs::write(&data, "a,c,y\n0.1,u,p\n0.7,v,n\n0.3333333333333333,u,p\n").unwrap();
        let ds = load_dataset(&data, &schema, b',').unwrap();
        let b = BinarizerModel::fit(Binning::RanInt, &ds, 3, 9).unwrap();
        let m = NfrlModel::init(b, 4, 4, 2, 3).unwrap();
        let path = dir.path().join("model");
        save_model(&path, &ModelFile::new(m.clone(), ds.class_names().to_vec())).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.model, m);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.model.net.neg.w_neg.data), bits(&m.net.neg.w_neg.data));
    }

    #[test]
    fn corrupt_model_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model");
        fs::write(&path, r#"{"format":"nfrl-model","version":1,"class_names":[]}"#).unwrap();
        let err = load_model(&path).unwrap_err().to_string();
        assert!(err.contains("model"), "{err}");
        fs::write(&path, r#"{"format":"other","version":1,"class_names":[],"model":null}"#).unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn semicolon_delimiter() {
        let dir = tempfile::tempdir().unwrap();
        let schema = dir.path().join("s.schema");
        let data = dir.path().join("d.csv");
        fs::write(&schema, "a continuous\ny label\n").unwrap();
        fs::write(&data, "y;a\nno;1.5\nyes;2.5\n").unwrap();
        let ds = load_dataset(&data, &schema, b';').unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.class_names(), ["no", "yes"]);
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let schema = dir.path().join("s.schema");
        let data = dir.path().join("d.csv");
        fs::write(&schema, "a continuous\ny label\n").unwrap();
        fs::write(&data, "a,y\n1.0,p\nabc,n\n").unwrap();
        let err = load_dataset(&data, &schema, b',').unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("`a`"), "{err}");
    }
}
