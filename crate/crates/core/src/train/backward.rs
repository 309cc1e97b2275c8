//! Hand-written backward pass.
//!
//! * `sign` uses the straight-through estimator.
//! * min/max share the upstream gradient evenly over their tie set.
//! * A connection gate `c = (sign(w) + 1) / 2` is relaxed as
//!   `e = c·v + (1 - c)·η` with `η` the operator's identity, so
//!   `∂e/∂w = (v - η) / 2`.
//! * An operator gate is relaxed as `c·min + (1 - c)·max`, so
//!   `∂v/∂w_op = (min - max) / 2`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::ste_sign_grad;
use crate::network::{BinaryView, ForwardTrace, Network, Op};
use crate::{Error, Result};

use super::GradSet;

/// Which inputs compete for a neuron's min/max gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TieScope {
    /// Only connected inputs; disconnected ones receive nothing.
    #[default]
    Active,
    /// Disconnected but eligible inputs sit at the identity `η` and join the
    /// tie set when the output equals `η`, so their gates can learn to connect.
    Relaxed,
}

/// Gradient of `min`/`max` over `values`: `upstream / |T|` on the tie set `T`, zero elsewhere.
pub fn minmax_backward(values: &[f64], mode: Op, upstream: f64) -> Vec<f64> {
    let Some(target) = (match mode {
        Op::And => values.iter().copied().reduce(f64::min),
        Op::Or => values.iter().copied().reduce(f64::max),
    }) else {
        return Vec::new();
    };
    let ties = values.iter().filter(|&&v| v == target).count();
    let share = upstream / ties as f64;
    values.iter().map(|&v| if v == target { share } else { 0.0 }).collect()
}

/// Gradients of one neuron with respect to its connected inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronGrads {
    /// `∂L/∂v_j` for each connected input.
    pub inputs: Vec<f64>,
    /// `∂L/∂W_conn` for each connected input.
    pub conn: Vec<f64>,
    /// `∂L/∂w_op`.
    pub op: f64,
}

/// Backward through a single neuron over its connected `±1` inputs
/// (connected inputs only; see [`TieScope::Active`]).
pub fn neuron_backward(inputs: &[i8], op: Op, upstream: f64) -> NeuronGrads {
    if inputs.is_empty() {
        return NeuronGrads { inputs: Vec::new(), conn: Vec::new(), op: 0.0 };
    }
    let out = op.apply(inputs.iter().copied());
    let eta = op.identity();
    let ties = inputs.iter().filter(|&&v| v == out).count();
    let share = upstream / ties as f64;
    let mut g_in = vec![0.0; inputs.len()];
    let mut g_conn = vec![0.0; inputs.len()];
    for (j, &v) in inputs.iter().enumerate() {
        if v == out {
            g_in[j] = share;
            g_conn[j] = ste_sign_grad(share * f64::from(v - eta) / 2.0);
        }
    }
    let (mn, mx) = min_max(inputs.iter().copied());
    NeuronGrads { inputs: g_in, conn: g_conn, op: ste_sign_grad(upstream * f64::from(mn - mx) / 2.0) }
}

#[inline]
fn min_max(values: impl Iterator<Item = i8>) -> (i8, i8) {
    values.fold((1, -1), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Scratch space reused across samples.
#[derive(Debug, Default, Clone)]
pub struct BackwardScratch {
    g_v1: Vec<f64>,
}

/// Accumulates `∂L/∂θ` for one sample into `grads`.
///
/// `trace` must come from `view.forward_into(net, ..)` with `view = net.binary_view()`.
pub fn backward(
    net: &Network,
    view: &BinaryView,
    trace: &ForwardTrace,
    dlogits: &[f64],
    scope: TieScope,
    grads: &mut GradSet,
    scratch: &mut BackwardScratch,
) -> Result<()> {
    let (d, k1, k2, y) = (net.inputs(), net.k1(), net.k2(), net.classes());
    if dlogits.len() != y || trace.v1.len() != k1 || trace.v2.len() != k2 || trace.bits.len() != d {
        return Err(Error::Shape("trace or logit gradient does not match the network".into()));
    }
    if grads.w_conn1.len() != k1 * d || grads.w_conn2.len() != k2 * k1 || grads.scores.len() != k2 * y {
        return Err(Error::Shape("gradient buffers do not match the network".into()));
    }
    let scores = &net.head.scores;

    for (b, &d) in grads.bias.iter_mut().zip(dlogits) {
        *b += d;
    }
    scratch.g_v1.clear();
    scratch.g_v1.resize(k1, 0.0);

    for i in 0..k2 {
        let v = trace.v2[i];
        let mut g = 0.0;
        for (k, &d) in dlogits.iter().enumerate() {
            grads.scores[i * y + k] += f64::from(v) * d;
            g += scores.get(i, k) * d;
        }
        if g == 0.0 {
            continue;
        }
        let op = view.op2[i];
        let eta = op.identity();
        let inputs = view.inputs2(i);
        let relaxed_ties = scope == TieScope::Relaxed && v == eta;
        let mut tie_count = trace.ties2(i).len();
        if relaxed_ties {
            tie_count += (0..k1).filter(|&j| eligible_disconnected2(net, view, i, j)).count();
        }
        if tie_count == 0 {
            continue;
        }
        let share = g / tie_count as f64;
        for &pos in trace.ties2(i) {
            let j = inputs[pos as usize] as usize;
            scratch.g_v1[j] += share;
            grads.w_conn2[i * k1 + j] += ste_sign_grad(share * f64::from(trace.v1[j] - eta) / 2.0);
        }
        if relaxed_ties {
            for j in (0..k1).filter(|&j| eligible_disconnected2(net, view, i, j)) {
                grads.w_conn2[i * k1 + j] += ste_sign_grad(share * f64::from(trace.v1[j] - eta) / 2.0);
            }
        }
        if !inputs.is_empty() {
            let (mn, mx) = min_max(inputs.iter().map(|&j| trace.v1[j as usize]));
            grads.w_op2[i] += ste_sign_grad(g * f64::from(mn - mx) / 2.0);
        }
    }

    for i in 0..k1 {
        let g = scratch.g_v1[i];
        if g == 0.0 || !view.live1[i] {
            continue;
        }
        let op = view.op1[i];
        let eta = op.identity();
        let v = trace.v1[i];
        let (inputs, negs) = view.inputs1(i);
        let relaxed_ties = scope == TieScope::Relaxed && v == eta;
        let conn_row = net.nfl1.w_conn.row(i);
        let mut tie_count = trace.ties1(i).len();
        if relaxed_ties {
            tie_count += conn_row.iter().filter(|&&w| crate::math::sign(w) < 0).count();
        }
        let share = g / tie_count as f64;
        for &pos in trace.ties1(i) {
            let pos = pos as usize;
            let j = inputs[pos] as usize;
            let n = trace.bits[j] * negs[pos];
            grads.w_conn1[i * d + j] += ste_sign_grad(share * f64::from(n - eta) / 2.0);
            // n = x · sign(W_neg)  =>  ∂n/∂W_neg = x through the STE
            grads.w_neg[i * d + j] += ste_sign_grad(share * f64::from(trace.bits[j]));
        }
        if relaxed_ties {
            let neg_row = net.neg.w_neg.row(i);
            for j in 0..d {
                if crate::math::sign(conn_row[j]) < 0 {
                    let n = trace.bits[j] * crate::math::sign(neg_row[j]);
                    grads.w_conn1[i * d + j] += ste_sign_grad(share * f64::from(n - eta) / 2.0);
                }
            }
        }
        let (mn, mx) = min_max(inputs.iter().zip(negs).map(|(&j, &s)| trace.bits[j as usize] * s));
        grads.w_op1[i] += ste_sign_grad(g * f64::from(mn - mx) / 2.0);
    }
    Ok(())
}

#[inline]
fn eligible_disconnected2(net: &Network, view: &BinaryView, i: usize, j: usize) -> bool {
    view.live1[j] && view.op1[j] != view.op2[i] && crate::math::sign(net.nfl2.w_conn.get(i, j)) < 0
}
