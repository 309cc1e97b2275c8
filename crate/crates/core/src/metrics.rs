//! Classification and rule-quality metrics, plus a gradient-liveness check
//! comparing min/max activations with product activations.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::network::Op;
use crate::rules::{Rule, RuleSet};
use crate::train::minmax_backward;
use crate::{Error, Result};

/// How [`macro_f1`] treats a class that never occurs in the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroSupport {
    /// Leave the class out of the average.
    #[default]
    Skip,
    /// Average it in with F1 = 0.
    Zero,
}

/// Unweighted mean of per-class F1 over classes `0..classes`.
pub fn macro_f1(pred: &[usize], truth: &[usize], classes: usize, zero_support: ZeroSupport) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if pred.len() != truth.len() {
        return Err(Error::Shape(alloc::format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut support = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::InvalidArgument(alloc::format!("label {} outside {classes} classes", p.max(t))));
        }
        support[t] += 1;
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
        }
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..classes {
        if support[c] == 0 && zero_support == ZeroSupport::Skip {
            continue;
        }
        counted += 1;
        // F1 = 2TP / (2TP + FP + FN), FN = support - TP
        let denom = 2 * tp[c] + fp[c] + (support[c] - tp[c]);
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    Ok(if counted == 0 { 0.0 } else { sum / counted as f64 })
}

/// Fraction of rows on which the rule holds; `0.0` on no rows.
pub fn rule_coverage(rule: &Rule, rows: &[Vec<i8>]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|b| rule.evaluate(b) > 0).count() as f64 / rows.len() as f64
}

/// Among covered rows, the fraction labelled with the rule's favoured class.
/// `None` when the rule covers nothing.
pub fn rule_accuracy(rule: &Rule, rows: &[Vec<i8>], labels: &[usize]) -> Option<f64> {
    let class = rule.predicted_class();
    let (mut covered, mut hit) = (0usize, 0usize);
    for (b, &l) in rows.iter().zip(labels) {
        if rule.evaluate(b) > 0 {
            covered += 1;
            hit += usize::from(l == class);
        }
    }
    (covered > 0).then(|| hit as f64 / covered as f64)
}

fn cover_set(rule: &Rule, rows: &[Vec<i8>]) -> Vec<bool> {
    rows.iter().map(|b| rule.evaluate(b) > 0).collect()
}

/// `1 - mean pairwise Jaccard overlap` of cover sets, over rules that cover at
/// least one row. `None` with fewer than two such rules.
pub fn ruleset_diversity(rs: &RuleSet, rows: &[Vec<i8>]) -> Option<f64> {
    let covers: Vec<Vec<bool>> =
        rs.rules.iter().map(|r| cover_set(r, rows)).filter(|c| c.iter().any(|&x| x)).collect();
    if covers.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..covers.len() {
        for b in a + 1..covers.len() {
            let (mut inter, mut union) = (0usize, 0usize);
            for (&x, &y) in covers[a].iter().zip(&covers[b]) {
                inter += usize::from(x && y);
                union += usize::from(x || y);
            }
            if union > 0 {
                total += inter as f64 / union as f64;
            }
            pairs += 1;
        }
    }
    Some(1.0 - total / pairs as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RuleStats {
    pub coverage: Vec<f64>,
    pub accuracy: Vec<Option<f64>>,
    pub length: Vec<usize>,
    pub diversity: Option<f64>,
    pub rule_count: usize,
    pub avg_length: f64,
    pub mean_coverage: f64,
    /// Mean over rules that cover something.
    pub mean_accuracy: Option<f64>,
}

pub fn rule_stats(rs: &RuleSet, rows: &[Vec<i8>], labels: &[usize]) -> RuleStats {
    let coverage: Vec<f64> = rs.rules.iter().map(|r| rule_coverage(r, rows)).collect();
    let accuracy: Vec<Option<f64>> = rs.rules.iter().map(|r| rule_accuracy(r, rows, labels)).collect();
    let length: Vec<usize> = rs.rules.iter().map(Rule::length).collect();
    let defined: Vec<f64> = accuracy.iter().flatten().copied().collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    RuleStats {
        diversity: ruleset_diversity(rs, rows),
        rule_count: rs.len(),
        avg_length: rs.avg_length(),
        mean_coverage: mean(&coverage),
        mean_accuracy: (!defined.is_empty()).then(|| mean(&defined)),
        coverage,
        accuracy,
        length,
    }
}

/// Input gradients of a product-relaxed neuron over 0/1 inputs `h` and gates `w`.
///
/// AND: `r = Π F_c(h_k, w_k)` with `F_c(h, w) = 1 - w(1 - h)`, so
/// `∂r/∂h_j = w_j · Π_{k≠j} F_c(h_k, w_k)`.
/// OR: `r = 1 - Π (1 - F_d(h_k, w_k))` with `F_d(h, w) = h·w`, so
/// `∂r/∂h_j = w_j · Π_{k≠j} (1 - h_k w_k)`.
pub fn product_activation_grads(bits: &[u8], weights: &[u8], mode: Op) -> Vec<f64> {
    let factor = |h: u8, w: u8| -> f64 {
        let (h, w) = (f64::from(h), f64::from(w));
        match mode {
            Op::And => 1.0 - w * (1.0 - h),
            Op::Or => 1.0 - h * w,
        }
    };
    (0..bits.len())
        .map(|j| {
            let rest: f64 = (0..bits.len()).filter(|&k| k != j).map(|k| factor(bits[k], weights[k])).product();
            f64::from(weights[j]) * rest
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LivenessReport {
    pub fan_in: usize,
    pub trials: usize,
    /// Fraction of trials where some min/max input gradient is nonzero.
    pub minmax: f64,
    /// Same for the product relaxation with every gate connected.
    pub product: f64,
}

/// Samples `trials` random fully connected neurons of fan-in `m` (operator
/// drawn per trial) and reports how often each relaxation passes gradient
/// to at least one input.
pub fn grad_liveness_report(m: usize, trials: usize, seed: u64) -> Result<LivenessReport> {
    if m < 2 {
        return Err(Error::InvalidArgument("fan-in must be at least 2".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = vec![1u8; m];
    let (mut live_mm, mut live_prod) = (0usize, 0usize);
    let mut bits = vec![0u8; m];
    let mut values = vec![0.0; m];
    for _ in 0..trials {
        let mode = if rng.gen::<bool>() { Op::And } else { Op::Or };
        for (b, v) in bits.iter_mut().zip(values.iter_mut()) {
            *b = u8::from(rng.gen::<bool>());
            *v = if *b == 1 { 1.0 } else { -1.0 };
        }
        live_mm += usize::from(minmax_backward(&values, mode, 1.0).iter().any(|&g| g != 0.0));
        live_prod += usize::from(product_activation_grads(&bits, &weights, mode).iter().any(|&g| g != 0.0));
    }
    Ok(LivenessReport {
        fan_in: m,
        trials,
        minmax: live_mm as f64 / trials as f64,
        product: live_prod as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{Clause, Literal, RuleForm};

    fn unit_rule(bit: usize, negated: bool, scores: Vec<f64>) -> Rule {
        Rule {
            id: bit,
            form: RuleForm::Dnf,
            clauses: vec![Clause { op: Op::And, literals: vec![Literal { bit, negated }] }],
            scores,
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 1], &[0, 1, 1], 2, ZeroSupport::Skip).unwrap(), 1.0);
        assert_eq!(macro_f1(&[1, 0], &[0, 1], 2, ZeroSupport::Skip).unwrap(), 0.0);
        assert!((macro_f1(&[0, 0, 1, 1], &[0, 1, 0, 1], 2, ZeroSupport::Skip).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(macro_f1(&[], &[], 2, ZeroSupport::Skip).unwrap_err(), Error::EmptyDataset);
    }

    #[test]
    fn f1_zero_support_flag() {
        // class 2 absent from truth
        assert_eq!(macro_f1(&[0, 1], &[0, 1], 3, ZeroSupport::Skip).unwrap(), 1.0);
        assert!((macro_f1(&[0, 1], &[0, 1], 3, ZeroSupport::Zero).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_and_accuracy() {
        let always = Rule {
            id: 0,
            form: RuleForm::Dnf,
            clauses: vec![
                Clause { op: Op::And, literals: vec![Literal { bit: 0, negated: false }] },
                Clause { op: Op::And, literals: vec![Literal { bit: 0, negated: true }] },
            ],
            scores: vec![0.0, 1.0],
        };
        let rows = vec![vec![1, -1], vec![-1, 1], vec![-1, -1]];
        assert_eq!(rule_coverage(&always, &rows), 1.0);
        let r = unit_rule(0, false, vec![-0.2, 0.7]);
        assert_eq!(rule_accuracy(&r, &rows, &[1, 0, 0]), Some(1.0));
        let never = unit_rule(0, false, vec![1.0, 0.0]);
        assert_eq!(rule_accuracy(&never, &[vec![-1, 1]], &[0]), None);
    }

    #[test]
    fn diversity_examples() {
        let rows = vec![vec![1, -1, 1], vec![1, 1, 1], vec![-1, 1, -1]];
        // bit 0 covers {0, 1}, bit 1 covers {1, 2}
        let rs = RuleSet { rules: vec![unit_rule(0, false, vec![1.0]), unit_rule(1, false, vec![1.0])], bias: vec![0.0], width: 3 };
        assert!((ruleset_diversity(&rs, &rows).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let same = RuleSet { rules: vec![unit_rule(0, false, vec![1.0]), unit_rule(2, false, vec![1.0])], bias: vec![0.0], width: 3 };
        assert_eq!(ruleset_diversity(&same, &rows), Some(0.0));
        let disjoint = RuleSet { rules: vec![unit_rule(0, false, vec![1.0]), unit_rule(0, true, vec![1.0])], bias: vec![0.0], width: 3 };
        assert_eq!(ruleset_diversity(&disjoint, &rows), Some(1.0));
        let one = RuleSet { rules: vec![unit_rule(0, false, vec![1.0])], bias: vec![0.0], width: 3 };
        assert_eq!(ruleset_diversity(&one, &rows), None);
    }

    #[test]
    fn product_grads_examples() {
        assert_eq!(product_activation_grads(&[1, 1, 0], &[1, 1, 1], Op::And), [0.0, 0.0, 1.0]);
        assert_eq!(product_activation_grads(&[1, 1, 1], &[1, 1, 1], Op::And), [1.0; 3]);
        assert_eq!(product_activation_grads(&[0, 1, 0, 1], &[1; 4], Op::And), [0.0; 4]);
        // OR dual: two true inputs kill every gradient
        assert_eq!(product_activation_grads(&[1, 1, 0], &[1, 1, 1], Op::Or), [0.0; 3]);
        assert_eq!(product_activation_grads(&[0, 0, 1], &[1, 1, 1], Op::Or), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn liveness_contrast() {
        let wide = grad_liveness_report(100, 1000, 7).unwrap();
        assert_eq!(wide.minmax, 1.0);
        assert!(wide.product < 0.01);
        let narrow = grad_liveness_report(2, 1000, 7).unwrap();
        assert!(narrow.product > wide.product);
        assert!(grad_liveness_report(1, 10, 0).is_err());
    }
}
