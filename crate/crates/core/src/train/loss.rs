use alloc::vec::Vec;

use crate::math;
use crate::network::Network;

use super::GradSet;

/// Softmax cross-entropy with max subtraction; returns the loss and `softmax - onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut d = Vec::with_capacity(logits.len());
    let loss = cross_entropy_into(logits, label, &mut d);
    (loss, d)
}

pub(crate) fn cross_entropy_into(logits: &[f64], label: usize, dlogits: &mut Vec<f64>) -> f64 {
    let top = crate::network::argmax(logits);
    let max = logits[top];
    dlogits.clear();
    // Σ e^(l - max) = 1 + rest; log1p(rest) keeps precision for confident logits
    let mut rest = 0.0;
    for (k, &l) in logits.iter().enumerate() {
        let e = math::exp(l - max);
        dlogits.push(e);
        if k != top {
            rest += e;
        }
    }
    let sum = 1.0 + rest;
    for p in dlogits.iter_mut() {
        *p /= sum;
    }
    dlogits[label] -= 1.0;
    (max - logits[label]) + libm::log1p(rest)
}

/// `λ Σ w²` over every latent weight except the bias.
pub fn l2_penalty(net: &Network, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let sq = |s: &[f64]| s.iter().map(|w| w * w).sum::<f64>();
    lambda
        * (sq(&net.neg.w_neg.data)
            + sq(&net.nfl1.w_op)
            + sq(&net.nfl1.w_conn.data)
            + sq(&net.nfl2.w_op)
            + sq(&net.nfl2.w_conn.data)
            + sq(&net.head.scores.data))
}

/// Adds `2λw` to every latent weight gradient (bias excluded).
pub fn l2_grad(net: &Network, lambda: f64, grads: &mut GradSet) {
    if lambda == 0.0 {
        return;
    }
    let add = |g: &mut [f64], w: &[f64]| {
        for (g, w) in g.iter_mut().zip(w) {
            *g += 2.0 * lambda * w;
        }
    };
    add(&mut grads.w_neg, &net.neg.w_neg.data);
    add(&mut grads.w_op1, &net.nfl1.w_op);
    add(&mut grads.w_conn1, &net.nfl1.w_conn.data);
    add(&mut grads.w_op2, &net.nfl2.w_op);
    add(&mut grads.w_conn2, &net.nfl2.w_conn.data);
    add(&mut grads.scores, &net.head.scores.data);
}
