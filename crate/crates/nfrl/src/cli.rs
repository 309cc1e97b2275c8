//! The `nfrl` command line: train, eval, extract, simulate, gradcheck.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nfrl_core::data::generate_synthetic;
use nfrl_core::metrics::{grad_liveness_report, macro_f1, rule_stats, ZeroSupport};
use nfrl_core::network::Op;
use nfrl_core::rules::{extract_rules, predict_with_rules, render, simplify, truth_table_equivalent, MAX_ENUMERATION_VARS};
use nfrl_core::train::{minmax_backward, train_with, TieScope, TrainError};
use nfrl_core::{Binning, Dataset, GroundTruthRule, NfrlModel, TrainConfig};

use crate::io::{self, IoError, ModelFile, RulesFile};
use crate::report::{self, FoldResult};
use crate::WallClock;

/// Default report pruning threshold on `max_k |score|`.
pub const DEFAULT_PRUNE_TAU: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "nfrl", version, about = "Normal-form rule learning: train, inspect and check CNF/DNF rule networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validate on a dataset and write per-fold models, rules and metrics.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Eval(EvalArgs),
    /// Print the rule report of a saved model.
    Extract(ExtractArgs),
    /// Recover a known Boolean rule from generated Bernoulli data.
    Simulate(SimulateArgs),
    /// Check gradient conservation and the min/max vs product liveness contrast.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Field delimiter of the data file.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

/// Training hyperparameters; unset values fall back to the command's defaults.
#[derive(Debug, Args, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, value_parser = parse_binning)]
    pub binning: Option<Binning>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `active` or `relaxed`.
    #[arg(long, value_parser = parse_tie_scope)]
    pub tie_scope: Option<TieScope>,
}

impl HyperArgs {
    pub fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(k1, k2, bins, binning, l2, lr, batch, epochs, decay_every, decay_factor, seed, tie_scope);
        c
    }
}

fn parse_binning(s: &str) -> Result<Binning, String> {
    match Binning::parse(s) {
        Some(b) if b != Binning::Passthrough => Ok(b),
        _ => Err(format!("unknown binning `{s}` (expected ranint, kint or entint)")),
    }
}

fn parse_tie_scope(s: &str) -> Result<TieScope, String> {
    match s {
        "active" => Ok(TieScope::Active),
        "relaxed" => Ok(TieScope::Relaxed),
        _ => Err(format!("unknown tie scope `{s}` (expected active or relaxed)")),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Number of cross-validation folds; 1 trains on a single random split.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Held-out fraction when `--folds 1`.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value = "nfrl-out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PRUNE_TAU)]
    pub prune_tau: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Training data for the coverage column; requires `--schema`.
    #[arg(long, requires = "schema")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long, default_value_t = DEFAULT_PRUNE_TAU)]
    pub prune_tau: f64,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the structured rule export.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Report the rules exactly as extracted, without merging.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Rule over `x1, x2, ...` using `&`, `|`, `!` and parentheses.
    #[arg(long)]
    pub rule: String,
    #[arg(long, default_value_t = 50_000)]
    pub n: usize,
    /// Variable count; defaults to the largest index in the rule.
    #[arg(long)]
    pub vars: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = DEFAULT_PRUNE_TAU)]
    pub prune_tau: f64,
    /// Directory for the trained model and rule files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub fan_in: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Random min/max backward cases checked for conservation.
    #[arg(long, default_value_t = 10_000)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Swap in a deliberately wrong backward pass (harness self-test).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Defaults for `train`.
pub fn train_defaults() -> TrainConfig {
    TrainConfig { tie_scope: TieScope::Active, ..TrainConfig::default() }
}

/// Defaults for `simulate`: 64@64 on pass-through bits.
pub fn simulate_defaults() -> TrainConfig {
    TrainConfig {
        k1: 64,
        k2: 64,
        bins: 1,
        binning: Binning::Passthrough,
        epochs: 20,
        tie_scope: TieScope::Active,
        ..TrainConfig::default()
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<nfrl_core::Error> for Failure {
    fn from(e: nfrl_core::Error) -> Self {
        match e {
            nfrl_core::Error::InvalidArgument(_) | nfrl_core::Error::RuleParse { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(flag: &str, path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{flag}: no such file `{}`", path.display())))
    }
}

fn delimiter_byte(c: char) -> Result<u8, Failure> {
    u8::try_from(c).ok().filter(u8::is_ascii).ok_or_else(|| Failure::Usage(format!("--delimiter: `{c}` is not a single ASCII character")))
}

fn load(data: &Path, schema: &Path, delimiter: char) -> Result<Dataset, Failure> {
    require_file("--data", data)?;
    require_file("--schema", schema)?;
    Ok(io::load_dataset(data, schema, delimiter_byte(delimiter)?)?)
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

struct FoldRun {
    fold: usize,
    train: Dataset,
    test: Dataset,
    outcome: Result<(NfrlModel, nfrl_core::TrainHistory), TrainError>,
}

fn write_fold(out: &Path, run: &FoldRun, model: &NfrlModel, history: &nfrl_core::TrainHistory, tau: f64) -> Result<(), Failure> {
    let dir = out.join(format!("fold{}", run.fold));
    let names = run.train.class_names().to_vec();
    io::save_model(&dir.join("model"), &ModelFile::new(model.clone(), names.clone()))?;
    let rules = extract_rules(&model.net);
    let train_bits = model.binarizer.transform_dataset(&run.train);
    let text = render(&simplify(&rules), &model.binarizer, &names, Some(&train_bits), tau);
    io::write_text(&dir.join("rules.txt"), &text)?;
    io::save_rules(&dir.join("rules.json"), &RulesFile::new(rules, names))?;
    io::write_text(&dir.join("history.csv"), &report::history_csv(history))?;
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> CmdResult {
    let config = a.hyper.apply(train_defaults());
    config.validate()?;
    if a.folds == 0 {
        return Err(Failure::Usage("--folds must be at least 1".into()));
    }
    if a.prune_tau.is_nan() || a.prune_tau < 0.0 {
        return Err(Failure::Usage("--prune-tau must be >= 0".into()));
    }
    let dataset = load(&a.data.data, &a.data.schema, a.data.delimiter)?;
    let splits = if a.folds == 1 {
        vec![dataset.train_test_split(a.test_fraction, config.seed)?]
    } else {
        if a.folds > dataset.len() {
            return Err(Failure::Usage(format!("--folds {} exceeds the {} rows", a.folds, dataset.len())));
        }
        dataset.kfold_split(a.folds, config.seed)?
    };

    let runs: Vec<FoldRun> = splits
        .into_par_iter()
        .enumerate()
        .map(|(fold, (train, test))| {
            let cfg = TrainConfig { seed: config.seed.wrapping_add(fold as u64), ..config.clone() };
            let outcome = train_with(&train, Some(&test), &cfg, &WallClock::start());
            FoldRun { fold, train, test, outcome }
        })
        .collect();

    let mut results: Vec<FoldResult> = Vec::new();
    let mut histories = Vec::new();
    let mut failure = None;
    for run in &runs {
        match &run.outcome {
            Ok((model, history)) => {
                write_fold(&a.out, run, model, history, a.prune_tau)?;
                results.push(report::evaluate_fold(run.fold, model, &run.train, &run.test)?);
                histories.push((run.fold, history));
            }
            Err(TrainError::Diverged { epoch, model, history }) => {
                write_fold(&a.out, run, model, history, a.prune_tau)?;
                histories.push((run.fold, history));
                failure.get_or_insert(format!("fold {}: training diverged at epoch {epoch}", run.fold));
            }
            Err(TrainError::Invalid(e)) => return Err(e.clone().into()),
        }
    }

    let data_name = a.data.data.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let summary = report::summary_text(&data_name, a.folds, &config, &results);
    report::write_run_files(
        &a.out,
        &summary,
        &report::metrics_csv(&results),
        &report::combined_history_csv(&histories),
    )?;
    print!("{summary}");
    match failure {
        Some(msg) => Err(Failure::Runtime(format!("{msg}; partial artifacts in {}", a.out.display()))),
        None => Ok(()),
    }
}

pub fn cmd_eval(a: &EvalArgs) -> CmdResult {
    require_file("--model", &a.model)?;
    let file = io::load_model(&a.model)?;
    let dataset = load(&a.data.data, &a.data.schema, a.data.delimiter)?.with_class_order(&file.class_names)?;
    let model = &file.model;
    let bits = model.binarizer.transform_dataset(&dataset);
    let pred = model.predict_bits(&bits);
    let classes = model.net.classes();
    let f1 = macro_f1(&pred, dataset.labels(), classes, ZeroSupport::Skip)?;
    let acc = pred.iter().zip(dataset.labels()).filter(|(p, t)| p == t).count() as f64 / dataset.len() as f64;
    let rules = extract_rules(&model.net);
    let stats = rule_stats(&rules, &bits, dataset.labels());
    let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), |v| format!("{v}"));
    println!("instances: {}", dataset.len());
    println!("macro-F1: {f1}");
    println!("accuracy: {acc}");
    println!("rules: {}", stats.rule_count);
    println!("simplified rules: {}", simplify(&rules).len());
    println!("avg rule length: {}", stats.avg_length);
    println!("mean coverage: {}", stats.mean_coverage);
    println!("mean rule accuracy: {}", opt(stats.mean_accuracy));
    println!("diversity: {}", opt(stats.diversity));
    Ok(())
}

/// Compares rule-set and network logits bit for bit on `rows`.
fn fidelity_mismatch(model: &NfrlModel, rows: &[Vec<i8>]) -> Option<usize> {
    let rules = extract_rules(&model.net);
    rows.iter().position(|bits| {
        let a = predict_with_rules(&rules, bits);
        let b = model.net.logits(bits);
        a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits())
    })
}

fn random_rows(width: usize, count: usize, seed: u64) -> Vec<Vec<i8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..width).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()).collect()
}

pub fn cmd_extract(a: &ExtractArgs) -> CmdResult {
    require_file("--model", &a.model)?;
    let file = io::load_model(&a.model)?;
    let model = &file.model;
    let rows = match (&a.data, &a.schema) {
        (Some(d), Some(s)) => Some(model.binarizer.transform_dataset(&load(d, s, a.delimiter)?)),
        _ => None,
    };
    let mut checked = random_rows(model.net.inputs(), 1000, 0);
    checked.extend(rows.iter().flatten().cloned());
    if let Some(i) = fidelity_mismatch(model, &checked) {
        return Err(Failure::Runtime(format!("rule set disagrees with the network on input {i}")));
    }
    let rules = extract_rules(&model.net);
    let shown = if a.raw { rules.clone() } else { simplify(&rules) };
    let mut text = render(&shown, &model.binarizer, &file.class_names, rows.as_deref(), a.prune_tau);
    text.push_str(&format!("# fidelity: exact on {} inputs\n", checked.len()));
    match &a.out {
        Some(path) => io::write_text(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &a.json {
        io::save_rules(path, &RulesFile::new(rules, file.class_names.clone()))?;
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let truth = GroundTruthRule::parse(&a.rule)?;
    let vars = a.vars.unwrap_or(truth.var_count());
    let config = a.hyper.apply(simulate_defaults());
    config.validate()?;
    if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
        return Err(Failure::Usage("--test-fraction must lie in (0, 1)".into()));
    }
    let data = generate_synthetic(std::slice::from_ref(&truth), a.n, vars, config.seed)?.remove(0);
    let (train, test) = data.dataset.train_test_split(a.test_fraction, config.seed)?;
    if train.is_empty() || test.is_empty() {
        return Err(Failure::Usage("--n is too small for the requested split".into()));
    }
    let (model, _) = match train_with(&train, None, &config, &WallClock::start()) {
        Ok(r) => r,
        Err(TrainError::Diverged { epoch, .. }) => {
            return Err(Failure::Runtime(format!("training diverged at epoch {epoch}")))
        }
        Err(TrainError::Invalid(e)) => return Err(e.into()),
    };
    let bits = model.binarizer.transform_dataset(&test);
    let pred = model.predict_bits(&bits);
    let acc = pred.iter().zip(test.labels()).filter(|(p, t)| p == t).count() as f64 / test.len() as f64;
    let rules = extract_rules(&model.net);
    let names = train.class_names().to_vec();

    println!("rule: {truth}");
    let p: Vec<String> = data.probabilities.iter().map(|p| format!("{p:.3}")).collect();
    println!("variables: {vars}  n: {}  p: {}", a.n, p.join(" "));
    println!("test accuracy: {acc:.6}");
    if vars <= MAX_ENUMERATION_VARS {
        println!("equivalent: {}", truth_table_equivalent(&rules, &truth, vars)?);
    } else {
        println!("equivalent: skipped (more than {MAX_ENUMERATION_VARS} variables)");
    }
    let train_bits = model.binarizer.transform_dataset(&train);
    print!("{}", render(&simplify(&rules), &model.binarizer, &names, Some(&train_bits), a.prune_tau));
    if let Some(out) = &a.out {
        io::save_model(&out.join("model"), &ModelFile::new(model.clone(), names.clone()))?;
        io::save_rules(&out.join("rules.json"), &RulesFile::new(rules, names))?;
    }
    Ok(())
}

/// Deliberately wrong min/max backward: every tie member gets the full upstream.
fn broken_minmax_backward(values: &[f64], mode: Op, upstream: f64) -> Vec<f64> {
    minmax_backward(values, mode, upstream).iter().map(|&g| if g != 0.0 { upstream } else { 0.0 }).collect()
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> CmdResult {
    if a.fan_in < 2 || a.trials == 0 {
        return Err(Failure::Usage("--fan-in must be >= 2 and --trials >= 1".into()));
    }
    let backward: fn(&[f64], Op, f64) -> Vec<f64> =
        if a.inject_fault { broken_minmax_backward } else { minmax_backward };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst: f64 = 0.0;
    for case in 0..a.cases {
        let len = rng.gen_range(1..=16);
        let values: Vec<f64> = (0..len).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let mode = if rng.gen::<bool>() { Op::And } else { Op::Or };
        let upstream: f64 = rng.gen_range(-2.0..2.0);
        let grads = backward(&values, mode, upstream);
        let target = match mode {
            Op::And => values.iter().copied().fold(f64::INFINITY, f64::min),
            Op::Or => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let err = (grads.iter().sum::<f64>() - upstream).abs();
        let off_tie = values.iter().zip(&grads).any(|(&v, &g)| v != target && g != 0.0);
        worst = worst.max(err);
        if err > 1e-12 || off_tie {
            let case_json = serde_json::json!({
                "case": case,
                "values": values,
                "mode": format!("{mode:?}").to_lowercase(),
                "upstream": upstream,
                "grads": grads,
            });
            return Err(Failure::Runtime(format!("conservation violated: {case_json}")));
        }
    }
    println!("conservation: {} cases, max |sum - upstream| = {worst:e}", a.cases);
    let report = grad_liveness_report(a.fan_in, a.trials, a.seed)?;
    println!(
        "liveness (fan-in {}, {} trials): minmax {:.6}, product {:.6}",
        report.fan_in, report.trials, report.minmax, report.product
    );
    if report.minmax != 1.0 {
        return Err(Failure::Runtime(format!("min/max liveness {} is below 1", report.minmax)));
    }
    Ok(())
}
