//! Feature binarization into `±1` literal vectors.
//!
//! Continuous features become `k` "greater than" bits and `k` "less than"
//! bits; categorical features are one-hot coded with `±1`. Every bit keeps a
//! [`LiteralSpec`] so rules can be rendered without the training data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Value};
use crate::math::{self, q};
use crate::{Error, Result};

/// How continuous thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Binning {
    /// Bounds drawn uniformly in the training range.
    #[default]
    RanInt,
    /// Midpoints between sorted 1-D k-means centers.
    KInt,
    /// Recursive class-entropy-minimizing cut points.
    EntInt,
    /// Continuous features that are already `±1` bits pass through as one literal each.
    Passthrough,
}

impl Binning {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ranint" => Some(Self::RanInt),
            "kint" => Some(Self::KInt),
            "entint" => Some(Self::EntInt),
            "passthrough" => Some(Self::Passthrough),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RanInt => "ranint",
            Self::KInt => "kint",
            Self::EntInt => "entint",
            Self::Passthrough => "passthrough",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LiteralKind {
    OneHot(String),
    GreaterThan(f64),
    LessThan(f64),
    /// Identity bit: `q(value)`.
    Bit,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LiteralSpec {
    pub feature_name: String,
    /// Position among the feature columns (label excluded).
    pub feature: usize,
    pub kind: LiteralKind,
}

impl LiteralSpec {
    #[inline]
    fn bit(&self, value: RawValue<'_>) -> i8 {
        match (&self.kind, value) {
            (LiteralKind::GreaterThan(t), RawValue::Continuous(x)) => q(x - t),
            (LiteralKind::LessThan(t), RawValue::Continuous(x)) => q(t - x),
            (LiteralKind::Bit, RawValue::Continuous(x)) => q(x),
            (LiteralKind::OneHot(c), RawValue::Category(s)) if c == s => 1,
            _ => -1,
        }
    }
}

/// A raw feature value with its category resolved to text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawValue<'a> {
    Continuous(f64),
    Category(&'a str),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BinarizerModel {
    specs: Vec<LiteralSpec>,
    method: Binning,
    bins: usize,
    seed: u64,
    #[cfg_attr(feature = "serde", serde(skip))]
    warnings: Vec<String>,
}

impl BinarizerModel {
    /// Fits literal specs on the training split.
    pub fn fit(method: Binning, train: &Dataset, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("bins per feature must be at least 1".into()));
        }
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut specs = Vec::new();
        let mut warnings = Vec::new();
        for (f, col) in train.schema().features().enumerate() {
            match col.kind {
                ColumnKind::Categorical => {
                    let mut seen = vec![false; train.categories(f).len()];
                    for row in train.rows() {
                        if let Value::Category(c) = row[f] {
                            seen[c as usize] = true;
                        }
                    }
                    for (c, name) in train.categories(f).iter().enumerate() {
                        if seen[c] {
                            specs.push(LiteralSpec {
                                feature_name: col.name.clone(),
                                feature: f,
                                kind: LiteralKind::OneHot(name.clone()),
                            });
                        }
                    }
                }
                ColumnKind::Continuous => {
                    let values: Vec<f64> = train
                        .rows()
                        .iter()
                        .map(|r| match r[f] {
                            Value::Continuous(x) => x,
                            Value::Category(_) => unreachable!("validated dataset"),
                        })
                        .collect();
                    let spec = |kind| LiteralSpec { feature_name: col.name.clone(), feature: f, kind };
                    if method == Binning::Passthrough {
                        specs.push(spec(LiteralKind::Bit));
                        continue;
                    }
                    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                        (a.min(x), b.max(x))
                    });
                    let (lower, upper) = if lo == hi {
                        warnings.push(format!("feature `{}` is constant ({lo}) on the training split", col.name));
                        (vec![lo; k], vec![lo; k])
                    } else {
                        match method {
                            Binning::RanInt => {
                                let lower = (0..k).map(|_| rng.gen_range(lo..=hi)).collect();
                                let upper = (0..k).map(|_| rng.gen_range(lo..=hi)).collect();
                                (lower, upper)
                            }
                            Binning::KInt => {
                                let t = pad(kmeans_thresholds(&values, k, &mut rng), k, (lo + hi) / 2.0);
                                (t.clone(), t)
                            }
                            Binning::EntInt => {
                                let t = pad(entropy_thresholds(&values, train.labels(), train.class_count(), k), k, (lo + hi) / 2.0);
                                (t.clone(), t)
                            }
                            Binning::Passthrough => unreachable!(),
                        }
                    };
                    specs.extend(lower.into_iter().map(|t| spec(LiteralKind::GreaterThan(t))));
                    specs.extend(upper.into_iter().map(|t| spec(LiteralKind::LessThan(t))));
                }
                ColumnKind::Label => unreachable!("features() skips the label"),
            }
        }
        if specs.is_empty() {
            return Err(Error::Dataset("binarization produced no bits".into()));
        }
        Ok(Self { specs, method, bins: k, seed, warnings })
    }

    /// Rebuilds a model from stored specs, e.g. after deserialization.
    pub fn from_specs(specs: Vec<LiteralSpec>, method: Binning, bins: usize, seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("binarizer needs at least one literal".into()));
        }
        for s in &specs {
            if let LiteralKind::GreaterThan(t) | LiteralKind::LessThan(t) = s.kind {
                if !t.is_finite() {
                    return Err(Error::InvalidArgument(format!("non-finite threshold on `{}`", s.feature_name)));
                }
            }
        }
        Ok(Self { specs, method, bins, seed, warnings: Vec::new() })
    }

    pub fn specs(&self) -> &[LiteralSpec] {
        &self.specs
    }

    /// Total bit width `D`.
    pub fn width(&self) -> usize {
        self.specs.len()
    }

    pub fn method(&self) -> Binning {
        self.method
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Diagnostics produced while fitting (constant features).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Binarizes one raw instance (feature values in schema order).
    /// Unseen categories leave their whole one-hot block at `-1`.
    pub fn transform(&self, row: &[RawValue<'_>]) -> Vec<i8> {
        self.specs.iter().map(|s| s.bit(row[s.feature])).collect()
    }

    pub fn transform_row(&self, dataset: &Dataset, index: usize) -> Vec<i8> {
        let row = &dataset.rows()[index];
        self.specs
            .iter()
            .map(|s| {
                let raw = match row[s.feature] {
                    Value::Continuous(x) => RawValue::Continuous(x),
                    Value::Category(c) => RawValue::Category(&dataset.categories(s.feature)[c as usize]),
                };
                s.bit(raw)
            })
            .collect()
    }

    pub fn transform_dataset(&self, dataset: &Dataset) -> Vec<Vec<i8>> {
        (0..dataset.len()).map(|i| self.transform_row(dataset, i)).collect()
    }

    /// Human-readable condition for one bit, e.g. `duration > 146.719` or `¬month = jan`.
    pub fn literal_description(&self, bit_index: usize, negated: bool) -> Result<String> {
        let spec = self
            .specs
            .get(bit_index)
            .ok_or(Error::BitOutOfRange { index: bit_index, width: self.width() })?;
        let neg = if negated { "¬" } else { "" };
        let name = &spec.feature_name;
        Ok(match &spec.kind {
            LiteralKind::OneHot(c) => format!("{neg}{name} = {c}"),
            LiteralKind::GreaterThan(t) => format!("{neg}{name} > {t:.3}"),
            LiteralKind::LessThan(t) => format!("{neg}{name} < {t:.3}"),
            LiteralKind::Bit => format!("{neg}{name}"),
        })
    }
}

/// Pads to `k` thresholds by duplicating the extremes (largest first, then
/// smallest, alternating). An empty list starts from `fallback`.
fn pad(mut t: Vec<f64>, k: usize, fallback: f64) -> Vec<f64> {
    t.sort_by(f64::total_cmp);
    t.truncate(k);
    if t.is_empty() {
        t.push(fallback);
    }
    let (lo, hi) = (t[0], t[t.len() - 1]);
    let mut take_hi = true;
    while t.len() < k {
        t.push(if take_hi { hi } else { lo });
        take_hi = !take_hi;
    }
    t
}

/// Midpoints between adjacent sorted 1-D k-means centers (k-means++ init, at most 100 Lloyd rounds).
pub fn kmeans_thresholds(values: &[f64], k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut centers: Vec<f64> = if distinct.len() <= k {
        distinct.clone()
    } else {
        let mut centers = vec![distinct[rng.gen_range(0..distinct.len())]];
        while centers.len() < k {
            let d2: Vec<f64> = distinct
                .iter()
                .map(|&x| centers.iter().map(|&c| (x - c) * (x - c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d2.iter().sum();
            if total <= 0.0 {
                break;
            }
            let mut r = rng.gen::<f64>() * total;
            let mut pick = distinct.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            centers.push(distinct[pick]);
        }
        centers
    };
    for _ in 0..100 {
        let mut sum = vec![0.0; centers.len()];
        let mut count = vec![0usize; centers.len()];
        for &x in values {
            let mut best = 0;
            for (c, &center) in centers.iter().enumerate() {
                if math::abs(x - center) < math::abs(x - centers[best]) {
                    best = c;
                }
            }
            sum[best] += x;
            count[best] += 1;
        }
        let mut moved = false;
        for c in 0..centers.len() {
            if count[c] > 0 {
                let next = sum[c] / count[c] as f64;
                moved |= next != centers[c];
                centers[c] = next;
            }
        }
        if !moved {
            break;
        }
    }
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    centers.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

fn entropy(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * math::ln(p)
        })
        .sum()
}

/// Best-first recursive binary splits minimizing class entropy, stopping at
/// `k` cut points or when no split lowers the entropy.
pub fn entropy_thresholds(values: &[f64], labels: &[usize], classes: usize, k: usize) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize)> = values.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // Best cut inside pairs[lo..hi]: (gain, cut position).
    let best_cut = |lo: usize, hi: usize| -> Option<(f64, usize)> {
        let n = hi - lo;
        let mut total = vec![0usize; classes];
        for &(_, y) in &pairs[lo..hi] {
            total[y] += 1;
        }
        let parent = entropy(&total, n);
        let mut left = vec![0usize; classes];
        let mut right = total.clone();
        let mut best: Option<(f64, usize)> = None;
        for i in lo + 1..hi {
            let y = pairs[i - 1].1;
            left[y] += 1;
            right[y] -= 1;
            if pairs[i].0 == pairs[i - 1].0 {
                continue;
            }
            let nl = i - lo;
            let child = (nl as f64 * entropy(&left, nl) + (n - nl) as f64 * entropy(&right, n - nl)) / n as f64;
            let gain = parent - child;
            if gain > 1e-12 && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        best
    };

    let mut segments = vec![(0, pairs.len())];
    let mut thresholds = Vec::new();
    while thresholds.len() < k {
        let pick = segments
            .iter()
            .enumerate()
            .filter_map(|(s, &(lo, hi))| best_cut(lo, hi).map(|(g, cut)| (g, s, cut)))
            .fold(None, |acc: Option<(f64, usize, usize)>, c| match acc {
                Some(a) if a.0 >= c.0 => Some(a),
                _ => Some(c),
            });
        let Some((_, s, cut)) = pick else { break };
        thresholds.push((pairs[cut - 1].0 + pairs[cut].0) / 2.0);
        let (lo, hi) = segments.remove(s);
        segments.push((lo, cut));
        segments.push((cut, hi));
    }
    thresholds
}

impl core::fmt::Display for LiteralKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LiteralKind::OneHot(c) => write!(f, "one_hot {c}"),
            LiteralKind::GreaterThan(t) => write!(f, "greater_than {t}"),
            LiteralKind::LessThan(t) => write!(f, "less_than {t}"),
            LiteralKind::Bit => f.write_str("bit"),
        }
    }
}

impl core::fmt::Display for Binning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Schema};
    use rand_chacha::ChaCha8Rng;

    fn continuous(values: &[f64], labels: &[usize]) -> Dataset {
        let schema = Schema::new(vec![Column::new("v", ColumnKind::Continuous), Column::new("y", ColumnKind::Label)])
            .unwrap();
        let classes = labels.iter().max().map_or(1, |m| m + 1);
        Dataset::new(
            schema,
            vec![Vec::new()],
            values.iter().map(|&x| vec![Value::Continuous(x)]).collect(),
            labels.to_vec(),
            (0..classes).map(|c| alloc::format!("{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ranint_bounds_in_range() {
        let ds = continuous(&[0.0, 3.0, 10.0, 7.5], &[0, 1, 0, 1]);
        let m = BinarizerModel::fit(Binning::RanInt, &ds, 2, 42).unwrap();
        assert_eq!(m.width(), 4);
        let kinds: Vec<_> = m.specs().iter().map(|s| s.kind.clone()).collect();
        assert!(matches!(kinds[0], LiteralKind::GreaterThan(_)));
        assert!(matches!(kinds[1], LiteralKind::GreaterThan(_)));
        assert!(matches!(kinds[2], LiteralKind::LessThan(_)));
        assert!(matches!(kinds[3], LiteralKind::LessThan(_)));
        for k in kinds {
            let (LiteralKind::GreaterThan(t) | LiteralKind::LessThan(t)) = k else { panic!() };
            assert!((0.0..=10.0).contains(&t));
        }
        assert_eq!(m, BinarizerModel::fit(Binning::RanInt, &ds, 2, 42).unwrap());
    }

    #[test]
    fn kint_two_clusters_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(kmeans_thresholds(&[1.0, 1.0, 1.0, 9.0, 9.0, 9.0], 2, &mut rng), vec![5.0]);
        let ds = continuous(&[1.0, 1.0, 1.0, 9.0, 9.0, 9.0], &[0; 6]);
        let m = BinarizerModel::fit(Binning::KInt, &ds, 2, 0).unwrap();
        let kinds: Vec<_> = m.specs().iter().map(|s| s.kind.clone()).collect();
        assert_eq!(
            kinds,
            [
                LiteralKind::GreaterThan(5.0),
                LiteralKind::GreaterThan(5.0),
                LiteralKind::LessThan(5.0),
                LiteralKind::LessThan(5.0)
            ]
        );
    }

    #[test]
    fn kint_three_separated_groups() {
        let values = [0.0, 0.1, 0.2, 5.0, 5.1, 5.2, 10.0, 10.1, 10.2];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = kmeans_thresholds(&values, 3, &mut rng);
        assert_eq!(t.len(), 2);
        assert!((t[0] - 2.6).abs() < 1e-9 && (t[1] - 7.6).abs() < 1e-9, "{t:?}");
    }

    #[test]
    fn entint_zero_entropy_split() {
        let t = entropy_thresholds(&[1.0, 2.0, 9.0, 10.0], &[0, 0, 1, 1], 2, 1);
        assert_eq!(t.len(), 1);
        assert!(t[0] > 2.0 && t[0] < 9.0);
    }

    #[test]
    fn entint_stops_without_gain() {
        assert!(entropy_thresholds(&[1.0, 2.0, 3.0], &[1, 1, 1], 2, 4).is_empty());
        // oracle: exhaustive search over cut points of a 3-class layout
        let t = entropy_thresholds(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0, 0, 1, 1, 2, 2], 3, 2);
        assert_eq!(t, [2.5, 4.5]);
    }

    #[test]
    fn constant_feature_warns() {
        let ds = continuous(&[4.0, 4.0, 4.0], &[0, 1, 0]);
        let m = BinarizerModel::fit(Binning::RanInt, &ds, 3, 0).unwrap();
        assert_eq!(m.width(), 6);
        assert_eq!(m.warnings().len(), 1);
        assert!(m.specs().iter().all(|s| matches!(s.kind, LiteralKind::GreaterThan(4.0) | LiteralKind::LessThan(4.0))));
    }

    #[test]
    fn transform_examples() {
        let m = BinarizerModel::from_specs(
            vec![
                LiteralSpec { feature_name: "v".into(), feature: 0, kind: LiteralKind::GreaterThan(3.0) },
                LiteralSpec { feature_name: "v".into(), feature: 0, kind: LiteralKind::LessThan(4.0) },
                LiteralSpec { feature_name: "m".into(), feature: 1, kind: LiteralKind::OneHot("jan".into()) },
                LiteralSpec { feature_name: "m".into(), feature: 1, kind: LiteralKind::OneHot("mar".into()) },
            ],
            Binning::RanInt,
            1,
            0,
        )
        .unwrap();
        assert_eq!(m.transform(&[RawValue::Continuous(5.0), RawValue::Category("mar")]), [1, -1, -1, 1]);
        // value on the threshold: both comparisons are false
        let at = BinarizerModel::from_specs(
            vec![
                LiteralSpec { feature_name: "v".into(), feature: 0, kind: LiteralKind::GreaterThan(3.0) },
                LiteralSpec { feature_name: "v".into(), feature: 0, kind: LiteralKind::LessThan(3.0) },
            ],
            Binning::RanInt,
            1,
            0,
        )
        .unwrap();
        assert_eq!(at.transform(&[RawValue::Continuous(3.0)]), [-1, -1]);
        // unseen category
        assert_eq!(m.transform(&[RawValue::Continuous(0.0), RawValue::Category("dec")]), [-1, 1, -1, -1]);
    }

    #[test]
    fn descriptions() {
        let m = BinarizerModel::from_specs(
            vec![
                LiteralSpec { feature_name: "duration".into(), feature: 0, kind: LiteralKind::GreaterThan(146.719) },
                LiteralSpec { feature_name: "month".into(), feature: 1, kind: LiteralKind::OneHot("jan".into()) },
                LiteralSpec { feature_name: "age".into(), feature: 2, kind: LiteralKind::LessThan(66.978) },
                LiteralSpec { feature_name: "duration".into(), feature: 0, kind: LiteralKind::LessThan(850.975) },
            ],
            Binning::RanInt,
            1,
            0,
        )
        .unwrap();
        assert_eq!(m.literal_description(0, false).unwrap(), "duration > 146.719");
        assert_eq!(m.literal_description(1, true).unwrap(), "¬month = jan");
        assert_eq!(m.literal_description(2, false).unwrap(), "age < 66.978");
        assert_eq!(m.literal_description(3, true).unwrap(), "¬duration < 850.975");
        assert_eq!(m.literal_description(4, false).unwrap_err(), Error::BitOutOfRange { index: 4, width: 4 });
    }

    #[test]
    fn empty_train_and_zero_bins_rejected() {
        let ds = continuous(&[1.0], &[0]);
        assert!(BinarizerModel::fit(Binning::RanInt, &ds, 0, 0).is_err());
        let empty = ds.subset(&[]);
        assert_eq!(BinarizerModel::fit(Binning::RanInt, &empty, 2, 0).unwrap_err(), Error::EmptyDataset);
    }
}
