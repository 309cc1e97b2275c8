//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nfrl::io::load_model;
use nfrl::nfrl_core::data::generate_synthetic;
use nfrl::nfrl_core::metrics::grad_liveness_report;
use nfrl::nfrl_core::rules::{extract_rules, predict_with_rules, truth_table_equivalent};
use nfrl::nfrl_core::train::{minmax_backward, train};
use nfrl::nfrl_core::{GroundTruthRule, Network, NfrlModel, Op};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RULES: [&str; 4] = ["(x1 | x2) & !x3", "x1 | (!x2 & !x3)", "x1 & !x2 & x3", "x1 | !x2 | !x3"];
const SEEDS: u64 = 5;
const RECOVERY_ACCURACY: f64 = 0.99;
const RECOVERY_MIN_SEEDS: usize = 4;
const WINE_F1: f64 = 0.95;
const WINE_LR: &str = "3e-2";
const CONSERVATION_CASES: usize = 10_000;
const CONSERVATION_TOL: f64 = 1e-12;
const LIVENESS_FAN_IN: usize = 100;
const LIVENESS_TRIALS: usize = 1000;
const PRODUCT_LIVENESS_MAX: f64 = 0.01;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} criterion {id} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn random_bits(rng: &mut impl Rng, width: usize) -> Vec<i8> {
    (0..width).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

fn nfrl(args: &[&str]) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_nfrl")).args(args).output().expect("spawn nfrl");
    if !out.status.success() {
        eprintln!("nfrl {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Untrained rule-network model: random head so extraction has something to match.
fn random_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf1de);
    let (d, k1, k2, y) = (rng.gen_range(1..40), rng.gen_range(1..64), rng.gen_range(1..64), rng.gen_range(1..6));
    let mut net = Network::init(d, k1, k2, y, seed).unwrap();
    for w in net.head.scores.data.iter_mut().chain(net.head.bias.iter_mut()) {
        *w = rng.gen_range(-2.0..2.0);
    }
    net
}

fn exact_on_random_inputs(net: &Network, rng: &mut impl Rng) -> bool {
    let rules = extract_rules(net);
    (0..1000).all(|_| {
        let bits = random_bits(rng, net.inputs());
        let a = predict_with_rules(&rules, &bits);
        a.iter().zip(&net.logits(&bits)).all(|(x, y)| x.to_bits() == y.to_bits())
    })
}

/// Every extracted rule is CNF of ORs or DNF of ANDs, and every masked
/// second-layer weight still holds its initial value.
fn nfc_holds(net: &Network) -> bool {
    let well_formed = extract_rules(net).rules.iter().all(|r| r.is_well_formed());
    let init = Network::init(net.inputs(), net.k1(), net.k2(), net.classes(), net.seed).unwrap();
    let mask = net.nfc_mask();
    let untouched = mask.iter().enumerate().all(|(i, row)| {
        row.iter().enumerate().all(|(j, &m)| m == 1 || net.nfl2.w_conn.get(i, j).to_bits() == init.nfl2.w_conn.get(i, j).to_bits())
    });
    well_formed && untouched
}

fn main() {
    let mut report = Report { failed: 0 };
    let work = tempfile::tempdir().unwrap();
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let (wine_csv, wine_schema) = (data_dir.join("wine.csv"), data_dir.join("wine.schema"));

    // 1: synthetic rule recovery, same configuration as `nfrl simulate`
    let start = Instant::now();
    let mut trained: Vec<NfrlModel> = Vec::new();
    let mut per_rule = Vec::new();
    for text in RULES {
        let truth = GroundTruthRule::parse(text).unwrap();
        let mut good = 0;
        for seed in 0..SEEDS {
            let config = nfrl::cli::simulate_defaults();
            let config = nfrl::nfrl_core::TrainConfig { seed, ..config };
            let data = generate_synthetic(std::slice::from_ref(&truth), 50_000, 3, seed).unwrap().remove(0);
            let (tr, te) = data.dataset.train_test_split(0.5, seed).unwrap();
            let (model, _) = train(&tr, &config).unwrap();
            let bits = model.binarizer.transform_dataset(&te);
            let correct = model.predict_bits(&bits).iter().zip(te.labels()).filter(|(p, t)| p == t).count();
            let acc = correct as f64 / te.len() as f64;
            let eq = truth_table_equivalent(&extract_rules(&model.net), &truth, 3).unwrap();
            if acc >= RECOVERY_ACCURACY && eq {
                good += 1;
            }
            trained.push(model);
        }
        per_rule.push((text, good));
    }
    let ok = per_rule.iter().all(|&(_, g)| g >= RECOVERY_MIN_SEEDS);
    let detail: Vec<String> = per_rule.iter().map(|(r, g)| format!("\"{r}\" {g}/{SEEDS}")).collect();
    report.line(
        1,
        "synthetic recovery",
        ok,
        format!(
            "seeds with accuracy >= {RECOVERY_ACCURACY} and equivalent truth table: {} (need >= {RECOVERY_MIN_SEEDS}); {:.0}s",
            detail.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );

    // 2: wine 5-fold cross-validation through the CLI
    let start = Instant::now();
    let wine_out = work.path().join("wine");
    let ran = nfrl(&[
        "train", "--data", s(&wine_csv), "--schema", s(&wine_schema), "--k1", "128", "--k2", "128", "--bins", "15",
        "--l2", "1e-7", "--epochs", "400", "--lr", WINE_LR, "--folds", "5", "--seed", "0", "--out", s(&wine_out),
    ]);
    let mean_f1 = ran
        .then(|| fs::read_to_string(wine_out.join("metrics.csv")).ok())
        .flatten()
        .and_then(|m| m.lines().find(|l| l.starts_with("mean,")).map(|l| l.split(',').nth(4).unwrap().parse::<f64>().unwrap()));
    report.line(
        2,
        "wine cross-validation",
        mean_f1.is_some_and(|f| f >= WINE_F1),
        format!(
            "mean test macro-F1 {} (need >= {WINE_F1}); 128@128, bins 15, l2 1e-7, lr {WINE_LR}, 400 epochs, seed 0; {:.0}s",
            mean_f1.map_or("unavailable".into(), |f| format!("{f:.4}")),
            start.elapsed().as_secs_f64()
        ),
    );
    let wine_models: Vec<NfrlModel> =
        (0..5).filter_map(|f| load_model(&wine_out.join(format!("fold{f}/model"))).ok().map(|m| m.model)).collect();

    // 3: extraction fidelity
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let untrained_ok = (0..100).filter(|&seed| exact_on_random_inputs(&random_network(seed), &mut rng)).count();
    let trained_nets: Vec<&Network> = trained.iter().chain(&wine_models).map(|m| &m.net).take(10).collect();
    let trained_ok = trained_nets.iter().filter(|n| exact_on_random_inputs(n, &mut rng)).count();
    report.line(
        3,
        "extraction fidelity",
        untrained_ok == 100 && trained_nets.len() == 10 && trained_ok == 10,
        format!("bit-exact on 1000 random inputs for {untrained_ok}/100 untrained and {trained_ok}/{} trained models", trained_nets.len()),
    );

    // 4: min/max gradient conservation
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut off_tie = 0;
    for _ in 0..CONSERVATION_CASES {
        let len = rng.gen_range(1..=32);
        let values: Vec<f64> = (0..len).map(|_| f64::from(rng.gen_range(-3i8..=3))).collect();
        let mode = if rng.gen::<bool>() { Op::And } else { Op::Or };
        let upstream = rng.gen_range(-10.0..10.0);
        let g = minmax_backward(&values, mode, upstream);
        let target = match mode {
            Op::And => values.iter().copied().fold(f64::INFINITY, f64::min),
            Op::Or => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        worst = worst.max((g.iter().sum::<f64>() - upstream).abs());
        off_tie += values.iter().zip(&g).filter(|&(&v, &gi)| v != target && gi != 0.0).count();
    }
    report.line(
        4,
        "gradient conservation",
        worst <= CONSERVATION_TOL && off_tie == 0,
        format!("{CONSERVATION_CASES} cases: max |sum - upstream| = {worst:e} (tol {CONSERVATION_TOL:e}), {off_tie} off-tie gradients"),
    );

    // 5: normal-form guarantees on every trained model
    let all: Vec<&Network> = trained.iter().chain(&wine_models).map(|m| &m.net).collect();
    let nfc_ok = all.iter().filter(|n| nfc_holds(n)).count();
    report.line(
        5,
        "normal-form guarantees",
        !all.is_empty() && nfc_ok == all.len(),
        format!("{nfc_ok}/{} trained models well-formed with masked weights at their initial values", all.len()),
    );

    // 6: liveness contrast
    let live = grad_liveness_report(LIVENESS_FAN_IN, LIVENESS_TRIALS, 6).unwrap();
    report.line(
        6,
        "gradient liveness",
        live.minmax == 1.0 && live.product < PRODUCT_LIVENESS_MAX,
        format!(
            "fan-in {LIVENESS_FAN_IN}, {LIVENESS_TRIALS} trials: min/max {} (need 1.0), product {} (need < {PRODUCT_LIVENESS_MAX})",
            live.minmax, live.product
        ),
    );

    // 7: determinism of run artifacts
    let runs: Vec<_> = ["a", "b"].iter().map(|n| work.path().join(n)).collect();
    let ran = runs.iter().all(|out| {
        nfrl(&[
            "train", "--data", s(&wine_csv), "--schema", s(&wine_schema), "--k1", "32", "--k2", "32", "--epochs", "20",
            "--seed", "7", "--out", s(out),
        ])
    });
    let same = |f: &str| fs::read(runs[0].join(f)).ok().is_some_and(|a| Some(a) == fs::read(runs[1].join(f)).ok());
    report.line(
        7,
        "determinism",
        ran && same("summary.txt") && same("metrics.csv"),
        format!(
            "two identical runs (seed 7): summary.txt {}, metrics.csv {}",
            if same("summary.txt") { "identical" } else { "differs" },
            if same("metrics.csv") { "identical" } else { "differs" }
        ),
    );

    println!("{} of 7 criteria passed", 7 - report.failed);
    if report.failed > 0 {
        std::process::exit(1);
    }
}
