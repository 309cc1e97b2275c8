//! The two-layer normal-form network.
//!
//! Input bits pass through per-edge negation gates into the first normal form
//! layer; the second layer reads first-layer neurons of the opposite operator
//! only (the mask `M[i][j] = -sign(op2[i]) * sign(op1[j])`), so each
//! second-layer neuron is a CNF (AND of ORs) or a DNF (OR of ANDs) rule.
//! A linear head maps rule values to class logits.
//!
//! Every discrete decision reads the latent weights through [`BinaryView`],
//! which is shared by [`forward`](Network::forward) and rule extraction.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::binarize::BinarizerModel;
use crate::math::sign;
use crate::{Error, Result};

/// Smallest initial latent weight magnitude.
pub const INIT_EPS: f64 = 1e-4;
/// Largest initial latent weight magnitude.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Op {
    And,
    Or,
}

impl Op {
    /// `sign(w_op) = +1` selects AND.
    #[inline]
    pub fn from_weight(w: f64) -> Self {
        if sign(w) > 0 {
            Op::And
        } else {
            Op::Or
        }
    }

    pub fn dual(self) -> Self {
        match self {
            Op::And => Op::Or,
            Op::Or => Op::And,
        }
    }

    /// Neutral element: the output of a neuron with no inputs.
    #[inline]
    pub fn identity(self) -> i8 {
        match self {
            Op::And => 1,
            Op::Or => -1,
        }
    }

    #[inline]
    pub fn sign(self) -> i8 {
        match self {
            Op::And => 1,
            Op::Or => -1,
        }
    }

    /// Min for AND, max for OR; the identity on an empty input.
    #[inline]
    pub fn apply(self, values: impl IntoIterator<Item = i8>) -> i8 {
        match self {
            Op::And => values.into_iter().min().unwrap_or(1),
            Op::Or => values.into_iter().max().unwrap_or(-1),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::And => "∧",
            Op::Or => "∨",
        }
    }
}

/// Dense row-major matrix of latent weights.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(alloc::format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Operator logits plus connection logits (rows = downstream neuron, columns = upstream).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NormalFormLayer {
    pub w_op: Vec<f64>,
    pub w_conn: Matrix,
}

impl NormalFormLayer {
    pub fn width(&self) -> usize {
        self.w_op.len()
    }

    pub fn fan_in(&self) -> usize {
        self.w_conn.cols
    }
}

/// Negation-gate logits for input -> first-layer edges (`K1 x D`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NegationLayer {
    pub w_neg: Matrix,
}

/// Per-rule class contribution scores (`K2 x Y`) and a per-class bias.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LinearHead {
    pub scores: Matrix,
    pub bias: Vec<f64>,
}

/// The learnable part of the model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Network {
    pub neg: NegationLayer,
    pub nfl1: NormalFormLayer,
    pub nfl2: NormalFormLayer,
    pub head: LinearHead,
    pub seed: u64,
}

fn init_weight(rng: &mut impl Rng) -> f64 {
    let magnitude = rng.gen_range(INIT_EPS..=INIT_SCALE);
    if rng.gen::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

impl Network {
    /// Latent weights uniform on `[-0.1, -1e-4] ∪ [1e-4, 0.1]`, head at zero.
    pub fn init(inputs: usize, k1: usize, k2: usize, classes: usize, seed: u64) -> Result<Self> {
        if inputs == 0 || k1 == 0 || k2 == 0 || classes == 0 {
            return Err(Error::InvalidArgument("all network dimensions must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = |rows: usize, cols: usize| Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| init_weight(&mut rng)).collect(),
        };
        let w_neg = matrix(k1, inputs);
        let w_conn1 = matrix(k1, inputs);
        let w_conn2 = matrix(k2, k1);
        let w_op1 = (0..k1).map(|_| init_weight(&mut rng)).collect();
        let w_op2 = (0..k2).map(|_| init_weight(&mut rng)).collect();
        Ok(Self {
            neg: NegationLayer { w_neg },
            nfl1: NormalFormLayer { w_op: w_op1, w_conn: w_conn1 },
            nfl2: NormalFormLayer { w_op: w_op2, w_conn: w_conn2 },
            head: LinearHead { scores: Matrix::zeros(k2, classes), bias: vec![0.0; classes] },
            seed,
        })
    }

    pub fn inputs(&self) -> usize {
        self.nfl1.fan_in()
    }

    pub fn k1(&self) -> usize {
        self.nfl1.width()
    }

    pub fn k2(&self) -> usize {
        self.nfl2.width()
    }

    pub fn classes(&self) -> usize {
        self.head.bias.len()
    }

    /// Checks the shape invariants between layers.
    pub fn validate(&self) -> Result<()> {
        let (d, k1, k2, y) = (self.inputs(), self.k1(), self.k2(), self.classes());
        let checks = [
            (self.neg.w_neg.rows == k1 && self.neg.w_neg.cols == d, "w_neg"),
            (self.nfl1.w_conn.rows == k1, "nfl1.w_conn"),
            (self.nfl2.w_conn.rows == k2 && self.nfl2.w_conn.cols == k1, "nfl2.w_conn"),
            (self.head.scores.rows == k2 && self.head.scores.cols == y, "head.scores"),
        ];
        for (ok, name) in checks {
            if !ok {
                return Err(Error::Shape(alloc::format!("{name} does not match the layer widths")));
            }
        }
        for m in [&self.neg.w_neg, &self.nfl1.w_conn, &self.nfl2.w_conn, &self.head.scores] {
            if m.data.len() != m.rows * m.cols {
                return Err(Error::Shape("matrix data length".into()));
            }
        }
        let all = self
            .nfl1
            .w_op
            .iter()
            .chain(&self.nfl2.w_op)
            .chain(&self.neg.w_neg.data)
            .chain(&self.nfl1.w_conn.data)
            .chain(&self.nfl2.w_conn.data)
            .chain(&self.head.scores.data)
            .chain(&self.head.bias);
        if all.into_iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        Ok(())
    }

    /// Sign-binarized structure of the current weights.
    pub fn binary_view(&self) -> BinaryView {
        BinaryView::new(self)
    }

    /// `NFC` mask: `M[i][j] = -sign(op2[i]) * sign(op1[j])`, `K2 x K1`.
    pub fn nfc_mask(&self) -> Vec<Vec<i8>> {
        nfc_mask(&self.nfl1.w_op, &self.nfl2.w_op)
    }

    pub fn forward(&self, bits: &[i8]) -> ForwardTrace {
        let view = self.binary_view();
        let mut trace = ForwardTrace::default();
        view.forward_into(self, bits, &mut trace);
        trace
    }

    /// Class logits only.
    pub fn logits(&self, bits: &[i8]) -> Vec<f64> {
        self.forward(bits).logits
    }
}

/// `M[i][j] = -sign(w_op_2[i]) * sign(w_op_1[j])`; edge `j -> i` is eligible iff `M = +1`.
pub fn nfc_mask(w_op_1: &[f64], w_op_2: &[f64]) -> Vec<Vec<i8>> {
    w_op_2
        .iter()
        .map(|&a| w_op_1.iter().map(|&b| -sign(a) * sign(b)).collect())
        .collect()
}

/// Sign-binarized view of a [`Network`].
///
/// First-layer neurons with no connected input are dead; second-layer edges
/// are active when connected, allowed by the mask and coming from a live
/// neuron. Second-layer neurons without active edges are dead too and feed
/// their operator's identity into the logits through [`BinaryView::base_logits`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryView {
    pub op1: Vec<Op>,
    pub op2: Vec<Op>,
    /// CSR offsets into `in1` / `neg1`, one range per first-layer neuron.
    pub start1: Vec<usize>,
    pub in1: Vec<u32>,
    /// `sign(W_neg)` of each active first-layer edge.
    pub neg1: Vec<i8>,
    pub start2: Vec<usize>,
    pub in2: Vec<u32>,
    pub live1: Vec<bool>,
    pub live2: Vec<bool>,
    /// Bias plus the constant contributions of dead second-layer neurons.
    pub base_logits: Vec<f64>,
}

impl BinaryView {
    pub fn new(net: &Network) -> Self {
        let (d, k1, k2, y) = (net.inputs(), net.k1(), net.k2(), net.classes());
        let op1: Vec<Op> = net.nfl1.w_op.iter().map(|&w| Op::from_weight(w)).collect();
        let op2: Vec<Op> = net.nfl2.w_op.iter().map(|&w| Op::from_weight(w)).collect();

        let mut start1 = Vec::with_capacity(k1 + 1);
        let mut in1 = Vec::new();
        let mut neg1 = Vec::new();
        start1.push(0);
        for i in 0..k1 {
            let conn = net.nfl1.w_conn.row(i);
            let neg = net.neg.w_neg.row(i);
            for j in 0..d {
                if sign(conn[j]) > 0 {
                    in1.push(j as u32);
                    neg1.push(sign(neg[j]));
                }
            }
            start1.push(in1.len());
        }
        let live1: Vec<bool> = (0..k1).map(|i| start1[i + 1] > start1[i]).collect();

        let mut start2 = Vec::with_capacity(k2 + 1);
        let mut in2 = Vec::new();
        start2.push(0);
        for (i, &op) in op2.iter().enumerate() {
            let conn = net.nfl2.w_conn.row(i);
            for (j, (&w, &live)) in conn.iter().zip(&live1).enumerate() {
                if live && op1[j] != op && sign(w) > 0 {
                    in2.push(j as u32);
                }
            }
            start2.push(in2.len());
        }
        let live2: Vec<bool> = (0..k2).map(|i| start2[i + 1] > start2[i]).collect();

        let mut base_logits = net.head.bias.clone();
        for i in (0..k2).filter(|&i| !live2[i]) {
            let v = op2[i].identity() as f64;
            for (k, b) in base_logits.iter_mut().enumerate().take(y) {
                *b += v * net.head.scores.get(i, k);
            }
        }
        Self { op1, op2, start1, in1, neg1, start2, in2, live1, live2, base_logits }
    }

    /// Active inputs of first-layer neuron `i` with their negation signs.
    #[inline]
    pub fn inputs1(&self, i: usize) -> (&[u32], &[i8]) {
        let r = self.start1[i]..self.start1[i + 1];
        (&self.in1[r.clone()], &self.neg1[r])
    }

    #[inline]
    pub fn inputs2(&self, i: usize) -> &[u32] {
        &self.in2[self.start2[i]..self.start2[i + 1]]
    }

    /// Forward pass reusing the buffers of `trace`.
    pub fn forward_into(&self, net: &Network, bits: &[i8], trace: &mut ForwardTrace) {
        let (k1, k2, y) = (self.op1.len(), self.op2.len(), net.classes());
        trace.bits.clear();
        trace.bits.extend_from_slice(bits);
        trace.v1.clear();
        trace.v2.clear();
        trace.tie1.clear();
        trace.tie2.clear();
        trace.tie_start1.clear();
        trace.tie_start2.clear();

        trace.tie_start1.push(0);
        for i in 0..k1 {
            let (idx, neg) = self.inputs1(i);
            let op = self.op1[i];
            let v = op.apply(idx.iter().zip(neg).map(|(&j, &n)| bits[j as usize] * n));
            for (pos, (&j, &n)) in idx.iter().zip(neg).enumerate() {
                if bits[j as usize] * n == v {
                    trace.tie1.push(pos as u32);
                }
            }
            trace.tie_start1.push(trace.tie1.len());
            trace.v1.push(v);
        }

        trace.tie_start2.push(0);
        for i in 0..k2 {
            let idx = self.inputs2(i);
            let v = self.op2[i].apply(idx.iter().map(|&j| trace.v1[j as usize]));
            for (pos, &j) in idx.iter().enumerate() {
                if trace.v1[j as usize] == v {
                    trace.tie2.push(pos as u32);
                }
            }
            trace.tie_start2.push(trace.tie2.len());
            trace.v2.push(v);
        }

        trace.logits.clear();
        trace.logits.extend_from_slice(&self.base_logits);
        for i in (0..k2).filter(|&i| self.live2[i]) {
            let v = trace.v2[i] as f64;
            for k in 0..y {
                trace.logits[k] += v * net.head.scores.get(i, k);
            }
        }
    }
}

/// Everything the backward pass needs from one forward pass.
///
/// Tie sets are stored as positions into each neuron's active-input list of
/// the [`BinaryView`] that produced the trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardTrace {
    pub bits: Vec<i8>,
    pub v1: Vec<i8>,
    pub v2: Vec<i8>,
    pub tie_start1: Vec<usize>,
    pub tie1: Vec<u32>,
    pub tie_start2: Vec<usize>,
    pub tie2: Vec<u32>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    #[inline]
    pub fn ties1(&self, i: usize) -> &[u32] {
        &self.tie1[self.tie_start1[i]..self.tie_start1[i + 1]]
    }

    #[inline]
    pub fn ties2(&self, i: usize) -> &[u32] {
        &self.tie2[self.tie_start2[i]..self.tie_start2[i + 1]]
    }
}

/// A trained or freshly initialized classifier: binarizer plus network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NfrlModel {
    pub binarizer: BinarizerModel,
    pub net: Network,
}

impl NfrlModel {
    pub fn new(binarizer: BinarizerModel, net: Network) -> Result<Self> {
        if binarizer.width() != net.inputs() {
            return Err(Error::Shape(alloc::format!(
                "binarizer width {} differs from network input width {}",
                binarizer.width(),
                net.inputs()
            )));
        }
        net.validate()?;
        Ok(Self { binarizer, net })
    }

    pub fn init(binarizer: BinarizerModel, k1: usize, k2: usize, classes: usize, seed: u64) -> Result<Self> {
        let net = Network::init(binarizer.width(), k1, k2, classes, seed)?;
        Ok(Self { binarizer, net })
    }

    /// Argmax-class predictions over a dataset's binarized rows.
    pub fn predict_bits(&self, rows: &[Vec<i8>]) -> Vec<usize> {
        let view = self.net.binary_view();
        let mut trace = ForwardTrace::default();
        rows.iter()
            .map(|bits| {
                view.forward_into(&self.net, bits, &mut trace);
                argmax(&trace.logits)
            })
            .collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Network {
        // 3 inputs, 2 first-layer neurons, 2 second-layer neurons, 2 classes
        let mut net = Network::init(3, 2, 2, 2, 0).unwrap();
        net.nfl1.w_op = vec![0.5, -0.5]; // AND, OR
        net.nfl2.w_op = vec![-0.5, 0.5]; // OR, AND
        net.neg.w_neg.data = vec![0.1; 6];
        net.nfl1.w_conn.data = vec![0.1, 0.1, 0.1, 0.1, 0.1, -0.1];
        net.nfl2.w_conn.data = vec![0.1, 0.1, 0.1, 0.1];
        net
    }

    #[test]
    fn init_is_deterministic_and_nonzero() {
        let a = Network::init(6, 4, 4, 2, 11).unwrap();
        let b = Network::init(6, 4, 4, 2, 11).unwrap();
        assert_eq!(a, b);
        let all = a.neg.w_neg.data.iter().chain(&a.nfl1.w_conn.data).chain(&a.nfl2.w_conn.data);
        assert!(all.chain(&a.nfl1.w_op).chain(&a.nfl2.w_op).all(|w| w.abs() >= INIT_EPS && w.abs() <= INIT_SCALE));
        assert!(a.logits(&[1, -1, 1, 1, -1, -1]).iter().all(|&l| l == 0.0));
        assert!(Network::init(0, 1, 1, 1, 0).is_err());
    }

    #[test]
    fn mask_examples() {
        assert_eq!(nfc_mask(&[0.3], &[0.7]), [[-1]]);
        assert_eq!(nfc_mask(&[-0.3], &[0.7]), [[1]]);
        // eligible count C1*(K-C2) + (K-C1)*C2
        let w1 = [0.1, 0.2, -0.1, -0.3, 0.4];
        let w2 = [0.1, -0.2, -0.1, -0.3, -0.4];
        let eligible: usize = nfc_mask(&w1, &w2).iter().flatten().filter(|&&m| m == 1).count();
        assert_eq!(eligible, 3 * 4 + 2);
    }

    #[test]
    fn and_or_neurons() {
        assert_eq!(Op::And.apply([1, 1, -1]), -1);
        assert_eq!(Op::Or.apply([-1, -1, 1]), 1);
        assert_eq!(Op::And.apply([]), 1);
        assert_eq!(Op::Or.apply([]), -1);
    }

    #[test]
    fn forward_hand_wired() {
        let net = tiny();
        let t = net.forward(&[1, -1, 1]);
        // neuron 0: AND(x0, x1, x2) = -1; neuron 1: OR(x0, x1) = +1
        assert_eq!(t.v1, [-1, 1]);
        // second layer: neuron 0 is OR, reads AND neuron 0 only -> -1
        // neuron 1 is AND, reads OR neuron 1 only -> +1
        assert_eq!(t.v2, [-1, 1]);
        assert_eq!(t.ties1(0), [1]);
        assert_eq!(t.ties1(1), [0]);
    }

    #[test]
    fn head_combination() {
        let mut net = tiny();
        // negate both edges of the OR neuron: OR(¬x0, ¬x1)
        net.neg.w_neg.data = vec![0.1, 0.1, 0.1, -0.1, -0.1, 0.1];
        net.head.scores.data = vec![0.4, 0.0, 0.3, 0.0];
        let t = net.forward(&[1, 1, 1]);
        assert_eq!(t.v2, [1, -1]);
        assert!((t.logits[0] - 0.1).abs() < 1e-15);
        assert_eq!(t.logits[1], 0.0);
    }

    #[test]
    fn dead_first_layer_neuron_is_cut_from_second_layer() {
        let mut net = tiny();
        net.nfl1.w_conn.data = vec![0.1, 0.1, 0.1, -0.1, -0.1, -0.1];
        let view = net.binary_view();
        assert_eq!(view.live1, [true, false]);
        assert_eq!(view.live2, [true, false]);
        let t = net.forward(&[1, 1, 1]);
        assert_eq!(t.v1[1], Op::Or.identity());
        assert_eq!(t.v2[1], Op::And.identity());
    }

    #[test]
    fn view_is_idempotent() {
        let net = Network::init(5, 3, 3, 2, 4).unwrap();
        assert_eq!(net.binary_view(), net.binary_view());
        assert_eq!(Op::from_weight(0.3), Op::And);
        assert_eq!(Op::from_weight(-1e-4), Op::Or);
    }
}
