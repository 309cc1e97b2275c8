//! Tabular datasets, cross-validation splits and the synthetic Bernoulli
//! generator used for rule-recovery experiments.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::network::Op;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ColumnKind {
    Categorical,
    Continuous,
    Label,
}

impl ColumnKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "categorical" => Some(Self::Categorical),
            "continuous" => Some(Self::Continuous),
            "label" => Some(Self::Label),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Categorical => "categorical",
            Self::Continuous => "continuous",
            Self::Label => "label",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self { name: name.into(), kind }
    }
}

/// Ordered column declarations. Exactly one column is the label.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let labels = columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if labels != 1 {
            return Err(Error::Schema(format!("expected exactly one label column, found {labels}")));
        }
        if columns.len() < 2 {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() {
                return Err(Error::Schema(format!("column {i} has an empty name")));
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(Self { columns })
    }

    /// Parses the sidecar format: one `<name> <categorical|continuous|label>` per line.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Schema(format!(
                    "line {}: expected `<name> <categorical|continuous|label>`",
                    lineno + 1
                )));
            };
            let kind = ColumnKind::parse(kind).ok_or_else(|| {
                Error::Schema(format!("line {}: unknown column kind `{kind}`", lineno + 1))
            })?;
            columns.push(Column::new(name, kind));
        }
        Self::new(columns)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn label_column(&self) -> &Column {
        self.columns.iter().find(|c| c.kind == ColumnKind::Label).expect("validated schema")
    }

    /// Feature columns in declaration order (the label is skipped).
    pub fn features(&self) -> impl Iterator<Item = &Column> + '_ {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Label)
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len() - 1
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.columns {
            writeln!(f, "{} {}", c.name, c.kind.as_str())?;
        }
        Ok(())
    }
}

/// A raw feature value. Categories are interned per column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Continuous(f64),
    Category(u32),
}

/// Typed tabular instances with dense class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    /// One vocabulary per feature column; empty for continuous features.
    vocab: Vec<Vec<String>>,
    rows: Vec<Vec<Value>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        vocab: Vec<Vec<String>>,
        rows: Vec<Vec<Value>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let width = schema.feature_count();
        if vocab.len() != width {
            return Err(Error::Dataset(format!("expected {width} vocabularies, got {}", vocab.len())));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dataset("row and label counts differ".into()));
        }
        if class_names.is_empty() {
            return Err(Error::Dataset("class count must be positive".into()));
        }
        let kinds: Vec<ColumnKind> = schema.features().map(|c| c.kind).collect();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Dataset(format!("row {r} has {} values, expected {width}", row.len())));
            }
            for (c, v) in row.iter().enumerate() {
                let ok = match (kinds[c], v) {
                    (ColumnKind::Continuous, Value::Continuous(x)) => x.is_finite(),
                    (ColumnKind::Categorical, Value::Category(i)) => (*i as usize) < vocab[c].len(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::Dataset(format!("row {r}, column {c}: invalid value {v:?}")));
                }
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Dataset(format!("label {l} out of range for {} classes", class_names.len())));
        }
        Ok(Self { schema, vocab, rows, labels, class_names })
    }

    /// Builds a dataset from delimiter-split text records.
    ///
    /// `header` is matched to the schema by name. Row numbers in errors are
    /// 1-based data rows (the header is not counted).
    pub fn from_records<I, R, S>(schema: Schema, header: &[&str], records: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut position = Vec::with_capacity(schema.columns().len());
        for c in schema.columns() {
            let idx = header
                .iter()
                .position(|h| h.trim() == c.name)
                .ok_or_else(|| Error::Dataset(format!("missing column `{}`", c.name)))?;
            position.push(idx);
        }
        let features: Vec<(usize, &Column)> = schema
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind != ColumnKind::Label)
            .map(|(i, c)| (position[i], c))
            .collect();
        let label_pos = schema
            .columns()
            .iter()
            .zip(&position)
            .find(|(c, _)| c.kind == ColumnKind::Label)
            .map(|(_, &p)| p)
            .expect("validated schema");

        let mut vocab: Vec<Vec<String>> = vec![Vec::new(); features.len()];
        let mut class_names: Vec<String> = Vec::new();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (r, record) in records.into_iter().enumerate() {
            let record = record.as_ref();
            let cell = |p: usize, name: &str| -> Result<&str> {
                let v = record
                    .get(p)
                    .map(|s| s.as_ref().trim())
                    .ok_or_else(|| Error::Dataset(format!("row {}, column `{name}`: missing value", r + 1)))?;
                if v.is_empty() || v == "?" {
                    return Err(Error::Dataset(format!("row {}, column `{name}`: missing value", r + 1)));
                }
                Ok(v)
            };
            let mut row = Vec::with_capacity(features.len());
            for (f, &(p, col)) in features.iter().enumerate() {
                let text = cell(p, &col.name)?;
                let value = match col.kind {
                    ColumnKind::Continuous => {
                        let x: f64 = text.parse().map_err(|_| {
                            Error::Dataset(format!("row {}, column `{}`: cannot parse `{text}`", r + 1, col.name))
                        })?;
                        if !x.is_finite() {
                            return Err(Error::Dataset(format!(
                                "row {}, column `{}`: non-finite value",
                                r + 1,
                                col.name
                            )));
                        }
                        Value::Continuous(x)
                    }
                    _ => Value::Category(intern(&mut vocab[f], text) as u32),
                };
                row.push(value);
            }
            let label = cell(label_pos, &schema.label_column().name)?;
            labels.push(intern(&mut class_names, label));
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Self::new(schema, vocab, rows, labels, class_names)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Interned categories of feature column `feature`, in first-seen order.
    pub fn categories(&self, feature: usize) -> &[String] {
        &self.vocab[feature]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            vocab: self.vocab.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Re-indexes labels to follow `class_names`, e.g. those stored with a model.
    /// A label missing from `class_names` is an error.
    pub fn with_class_order(&self, class_names: &[String]) -> Result<Dataset> {
        let map: Vec<usize> = self
            .class_names
            .iter()
            .map(|c| {
                class_names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::Dataset(format!("label `{c}` is not one of the model's classes")))
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            schema: self.schema.clone(),
            vocab: self.vocab.clone(),
            rows: self.rows.clone(),
            labels: self.labels.iter().map(|&l| map[l]).collect(),
            class_names: class_names.to_vec(),
        })
    }

    /// `k` (train, test) pairs whose test parts partition the rows.
    /// Fold sizes differ by at most one.
    pub fn kfold_split(&self, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
        Ok(kfold_indices(self.len(), k, seed)?
            .into_iter()
            .map(|(train, test)| (self.subset(&train), self.subset(&test)))
            .collect())
    }

    /// Unstratified random split; `test_fraction` of the rows (rounded down) go to test.
    pub fn train_test_split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidArgument(format!("test fraction {test_fraction} not in [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (self.len() as f64 * test_fraction) as usize;
        let (test, train) = order.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

fn intern(vocab: &mut Vec<String>, s: &str) -> usize {
    match vocab.iter().position(|v| v == s) {
        Some(i) => i,
        None => {
            vocab.push(s.to_string());
            vocab.len() - 1
        }
    }
}

/// Index form of [`Dataset::kfold_split`].
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds row count {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k)
        .map(|fold| {
            let mut train = Vec::with_capacity(n - n / k);
            let mut test = Vec::with_capacity(n / k + 1);
            for (pos, &idx) in order.iter().enumerate() {
                if pos % k == fold {
                    test.push(idx);
                } else {
                    train.push(idx);
                }
            }
            (train, test)
        })
        .collect())
}

/// Normal-form shape of a [`GroundTruthRule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundForm {
    /// AND of OR-clauses.
    Cnf,
    /// OR of AND-clauses.
    Dnf,
    /// A single clause with the given connective (a bare literal is a one-literal AND).
    SingleClause(Op),
}

/// Boolean formula used to label synthetic data.
///
/// Variables are 0-based internally; the text form is 1-based (`x1` is variable 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthRule {
    form: GroundForm,
    clauses: Vec<Vec<(usize, bool)>>,
}

impl GroundTruthRule {
    /// `clauses` holds `(variable, negated)` pairs.
    pub fn new(form: GroundForm, clauses: Vec<Vec<(usize, bool)>>) -> Result<Self> {
        if clauses.is_empty() || clauses.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidArgument("ground-truth rule needs non-empty clauses".into()));
        }
        if matches!(form, GroundForm::SingleClause(_)) && clauses.len() != 1 {
            return Err(Error::InvalidArgument("single-clause rule has more than one clause".into()));
        }
        Ok(Self { form, clauses })
    }

    /// Parses the mini-grammar `&`, `|`, `!`, `x<i>` and parentheses.
    /// The formula must already be a literal, a clause, a CNF or a DNF
    /// after pushing negations down to the variables.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let expr = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        normalize(expr.nnf(false)).ok_or(Error::RuleParse {
            pos: 0,
            msg: "formula is not a literal, clause, CNF or DNF".into(),
        })
    }

    pub fn form(&self) -> GroundForm {
        self.form
    }

    pub fn clauses(&self) -> &[Vec<(usize, bool)>] {
        &self.clauses
    }

    /// Largest referenced variable plus one.
    pub fn var_count(&self) -> usize {
        self.clauses.iter().flatten().map(|&(v, _)| v + 1).max().unwrap_or(0)
    }

    /// Evaluates on `±1` (or any sign-coded) bits indexed by variable.
    pub fn evaluate(&self, bits: &[i8]) -> bool {
        let lit = |&(v, neg): &(usize, bool)| (bits[v] > 0) != neg;
        let (outer, inner) = match self.form {
            GroundForm::Cnf => (Op::And, Op::Or),
            GroundForm::Dnf => (Op::Or, Op::And),
            GroundForm::SingleClause(op) => (Op::And, op),
        };
        let clause = |c: &Vec<(usize, bool)>| match inner {
            Op::And => c.iter().all(lit),
            Op::Or => c.iter().any(lit),
        };
        match outer {
            Op::And => self.clauses.iter().all(clause),
            Op::Or => self.clauses.iter().any(clause),
        }
    }
}

impl fmt::Display for GroundTruthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (outer, inner) = match self.form {
            GroundForm::Cnf => (" ∧ ", " ∨ "),
            GroundForm::Dnf => (" ∨ ", " ∧ "),
            GroundForm::SingleClause(Op::And) => ("", " ∧ "),
            GroundForm::SingleClause(Op::Or) => ("", " ∨ "),
        };
        let multi = self.clauses.len() > 1;
        for (ci, clause) in self.clauses.iter().enumerate() {
            if ci > 0 {
                f.write_str(outer)?;
            }
            let paren = multi && clause.len() > 1;
            if paren {
                f.write_str("(")?;
            }
            for (li, &(v, neg)) in clause.iter().enumerate() {
                if li > 0 {
                    f.write_str(inner)?;
                }
                write!(f, "{}x_{}", if neg { "¬" } else { "" }, v + 1)?;
            }
            if paren {
                f.write_str(")")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Expr {
    Var(usize, bool),
    Not(alloc::boxed::Box<Expr>),
    Node(Op, Vec<Expr>),
}

impl Expr {
    /// Negation normal form with same-op children flattened.
    fn nnf(self, negate: bool) -> Expr {
        match self {
            Expr::Var(v, n) => Expr::Var(v, n != negate),
            Expr::Not(e) => e.nnf(!negate),
            Expr::Node(op, kids) => {
                let op = if negate { op.dual() } else { op };
                let mut flat = Vec::new();
                for k in kids {
                    match k.nnf(negate) {
                        Expr::Node(o, inner) if o == op => flat.extend(inner),
                        e => flat.push(e),
                    }
                }
                Expr::Node(op, flat)
            }
        }
    }
}

fn normalize(e: Expr) -> Option<GroundTruthRule> {
    let lits = |kids: &[Expr]| -> Option<Vec<(usize, bool)>> {
        kids.iter()
            .map(|k| match k {
                Expr::Var(v, n) => Some((*v, *n)),
                _ => None,
            })
            .collect()
    };
    match e {
        Expr::Var(v, n) => Some(GroundTruthRule { form: GroundForm::SingleClause(Op::And), clauses: vec![vec![(v, n)]] }),
        Expr::Not(_) => None,
        Expr::Node(op, kids) => {
            if let Some(clause) = lits(&kids) {
                return Some(GroundTruthRule { form: GroundForm::SingleClause(op), clauses: vec![clause] });
            }
            let mut clauses = Vec::new();
            for k in kids {
                match k {
                    Expr::Var(v, n) => clauses.push(vec![(v, n)]),
                    Expr::Node(inner, grand) if inner != op => clauses.push(lits(&grand)?),
                    _ => return None,
                }
            }
            let form = match op {
                Op::And => GroundForm::Cnf,
                Op::Or => GroundForm::Dnf,
            };
            Some(GroundTruthRule { form, clauses })
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::RuleParse { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn binary(&mut self, op: Op, token: u8, next: fn(&mut Self) -> Result<Expr>) -> Result<Expr> {
        let mut kids = vec![next(self)?];
        while self.peek() == Some(token) {
            self.pos += 1;
            kids.push(next(self)?);
        }
        Ok(if kids.len() == 1 { kids.pop().unwrap() } else { Expr::Node(op, kids) })
    }

    fn expr(&mut self) -> Result<Expr> {
        self.binary(Op::Or, b'|', Self::term)
    }

    fn term(&mut self) -> Result<Expr> {
        self.binary(Op::And, b'&', Self::factor)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'!') => {
                self.pos += 1;
                Ok(Expr::Not(alloc::boxed::Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'x') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let digits = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                match digits.parse::<usize>() {
                    Ok(i) if i >= 1 => Ok(Expr::Var(i - 1, false)),
                    _ => {
                        self.pos = start;
                        Err(self.error("expected a 1-based variable index after `x`"))
                    }
                }
            }
            _ => Err(self.error("expected a literal, `!` or `(`")),
        }
    }
}

/// One generated rule-recovery dataset and the Bernoulli parameters behind it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub probabilities: Vec<f64>,
}

/// Bernoulli rule-recovery data: one dataset per rule.
///
/// Each variable gets `p_i ~ U(0, 1)`, every row draws `x_i ~ Bernoulli(p_i)`
/// emitted as `±1`, and the label is 1 exactly when the rule holds.
pub fn generate_synthetic(
    rules: &[GroundTruthRule],
    n: usize,
    var_count: usize,
    seed: u64,
) -> Result<Vec<SyntheticData>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if var_count == 0 {
        return Err(Error::InvalidArgument("var_count must be positive".into()));
    }
    for rule in rules {
        if let Some(&(var, _)) = rule.clauses.iter().flatten().find(|&&(v, _)| v >= var_count) {
            return Err(Error::VariableOutOfRange { var, var_count });
        }
    }
    let mut columns: Vec<Column> =
        (1..=var_count).map(|i| Column::new(format!("x_{i}"), ColumnKind::Continuous)).collect();
    columns.push(Column::new("label", ColumnKind::Label));
    let schema = Schema::new(columns)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rules.len());
    for rule in rules {
        let probabilities: Vec<f64> = (0..var_count).map(|_| rng.gen::<f64>()).collect();
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut bits = vec![0i8; var_count];
        for _ in 0..n {
            for (b, &p) in bits.iter_mut().zip(&probabilities) {
                *b = if rng.gen::<f64>() < p { 1 } else { -1 };
            }
            labels.push(rule.evaluate(&bits) as usize);
            rows.push(bits.iter().map(|&b| Value::Continuous(b as f64)).collect());
        }
        let dataset = Dataset::new(
            schema.clone(),
            vec![Vec::new(); var_count],
            rows,
            labels,
            vec!["0".to_string(), "1".to_string()],
        )?;
        out.push(SyntheticData { dataset, probabilities });
    }
    Ok(out)
}
