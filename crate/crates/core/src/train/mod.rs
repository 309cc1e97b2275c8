//! Training: backward pass, loss, Adam and the epoch loop.

mod adam;
mod backward;
mod loss;

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub use adam::{AdamState, Moments, BETA1, BETA2, EPSILON};
pub use backward::{backward, minmax_backward, neuron_backward, BackwardScratch, NeuronGrads, TieScope};
pub use loss::{cross_entropy, l2_grad, l2_penalty};

use crate::binarize::{BinarizerModel, Binning};
use crate::data::Dataset;
use crate::math::sign;
use crate::metrics::{macro_f1, ZeroSupport};
use crate::network::{ForwardTrace, Network, NfrlModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainConfig {
    pub k1: usize,
    pub k2: usize,
    pub bins: usize,
    pub binning: Binning,
    /// L2 coefficient λ.
    pub l2: f64,
    /// Initial learning rate.
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub decay_every: usize,
    /// Fractional decrease applied every `decay_every` epochs (`lr ← (1 - f)·lr`).
    pub decay_factor: f64,
    pub seed: u64,
    pub tie_scope: TieScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k1: 64,
            k2: 64,
            bins: 15,
            binning: Binning::RanInt,
            l2: 1e-7,
            lr: 1e-2,
            batch: 32,
            epochs: 400,
            decay_every: 100,
            decay_factor: 0.1,
            seed: 0,
            tie_scope: TieScope::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.k1 == 0 || self.k2 == 0 {
            return bad("layer widths must be at least 1");
        }
        if self.bins == 0 {
            return bad("bins must be at least 1");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be a finite value >= 0");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.decay_every == 0 {
            return bad("decay-every must be at least 1");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay factor must lie in (0, 1]");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.decay_every) as i32;
        self.lr * libm::pow(1.0 - self.decay_factor, decays as f64)
    }
}

/// Gradients mirroring every latent weight of a [`Network`], flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub w_neg: Vec<f64>,
    pub w_op1: Vec<f64>,
    pub w_conn1: Vec<f64>,
    pub w_op2: Vec<f64>,
    pub w_conn2: Vec<f64>,
    pub scores: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            w_neg: vec![0.0; net.neg.w_neg.data.len()],
            w_op1: vec![0.0; net.k1()],
            w_conn1: vec![0.0; net.nfl1.w_conn.data.len()],
            w_op2: vec![0.0; net.k2()],
            w_conn2: vec![0.0; net.nfl2.w_conn.data.len()],
            scores: vec![0.0; net.head.scores.data.len()],
            bias: vec![0.0; net.classes()],
        }
    }

    fn slices_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.w_neg,
            &mut self.w_op1,
            &mut self.w_conn1,
            &mut self.w_op2,
            &mut self.w_conn2,
            &mut self.scores,
            &mut self.bias,
        ]
    }

    pub fn clear(&mut self) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Every gradient entry, in a fixed order.
    pub fn all(&self) -> impl Iterator<Item = f64> + '_ {
        self.w_neg
            .iter()
            .chain(&self.w_op1)
            .chain(&self.w_conn1)
            .chain(&self.w_op2)
            .chain(&self.w_conn2)
            .chain(&self.scores)
            .chain(&self.bias)
            .copied()
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    /// Mean cross-entropy over the epoch's samples plus the L2 penalty at epoch end.
    pub train_loss: f64,
    pub train_f1: f64,
    /// `NaN` when no validation split was given.
    pub val_f1: f64,
    pub live_rules: usize,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

/// Millisecond clock used to stamp epochs; the core crate has no wall clock of its own.
pub trait Clock {
    fn now_ms(&self) -> u64;
}

/// Always reports zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize, model: alloc::boxed::Box<NfrlModel>, history: TrainHistory },
}

/// Mini-batch optimizer state over pre-binarized rows.
pub struct Trainer<'a> {
    pub net: Network,
    pub adam: AdamState,
    init_conn2: Vec<f64>,
    config: TrainConfig,
    bits: &'a [Vec<i8>],
    labels: &'a [usize],
    rng: ChaCha8Rng,
    grads: GradSet,
    trace: ForwardTrace,
    dlogits: Vec<f64>,
    scratch: BackwardScratch,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(net: Network, bits: &'a [Vec<i8>], labels: &'a [usize], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        net.validate()?;
        if bits.is_empty() || bits.len() != labels.len() {
            return Err(Error::InvalidArgument("training rows and labels must be non-empty and aligned".into()));
        }
        if bits.iter().any(|b| b.len() != net.inputs()) {
            return Err(Error::Shape("binarized row width differs from the network input width".into()));
        }
        if labels.iter().any(|&l| l >= net.classes()) {
            return Err(Error::InvalidArgument("label out of range".into()));
        }
        let sizes = [
            net.neg.w_neg.data.len(),
            net.k1(),
            net.nfl1.w_conn.data.len(),
            net.k2(),
            net.nfl2.w_conn.data.len(),
            net.head.scores.data.len(),
            net.classes(),
        ];
        let grads = GradSet::zeros_like(&net);
        let init_conn2 = net.nfl2.w_conn.data.clone();
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0005_eed0_fba7_c4e5);
        Ok(Self {
            net,
            adam: AdamState::new(&sizes),
            init_conn2,
            config,
            bits,
            labels,
            rng,
            grads,
            trace: ForwardTrace::default(),
            dlogits: Vec::new(),
            scratch: BackwardScratch::default(),
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Mean gradient of the cross-entropy over `batch` plus the L2 term.
    /// Returns the summed (not averaged) cross-entropy of the batch.
    pub fn gradient(&mut self, batch: &[usize]) -> Result<f64> {
        let view = self.net.binary_view();
        self.grads.clear();
        let mut loss = 0.0;
        for &idx in batch {
            view.forward_into(&self.net, &self.bits[idx], &mut self.trace);
            loss += loss::cross_entropy_into(&self.trace.logits, self.labels[idx], &mut self.dlogits);
            backward(
                &self.net,
                &view,
                &self.trace,
                &self.dlogits,
                self.config.tie_scope,
                &mut self.grads,
                &mut self.scratch,
            )?;
        }
        self.grads.scale(1.0 / batch.len() as f64);
        l2_grad(&self.net, self.config.l2, &mut self.grads);
        Ok(loss)
    }

    pub fn grads(&self) -> &GradSet {
        &self.grads
    }

    /// One optimizer step on `batch` at learning rate `lr`.
    ///
    /// Second-layer connection weights are only updated where the mask
    /// computed from the pre-step operator signs allows the edge. Edges that
    /// an operator flip masks off go back to their initial value and lose
    /// their moments, so masked weights always equal their initialization.
    pub fn step(&mut self, batch: &[usize], lr: f64) -> Result<f64> {
        let loss = self.gradient(batch)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        let k1 = self.net.k1();
        let op1: Vec<i8> = self.net.nfl1.w_op.iter().map(|&w| sign(w)).collect();
        let op2: Vec<i8> = self.net.nfl2.w_op.iter().map(|&w| sign(w)).collect();
        let eligible = |idx: usize| -op2[idx / k1] * op1[idx % k1] == 1;

        let net = &mut self.net;
        let g = &self.grads;
        let adam = &mut self.adam;
        adam.begin_step();
        adam.update(0, "w_neg", &mut net.neg.w_neg.data, &g.w_neg, lr, None)?;
        adam.update(1, "w_op1", &mut net.nfl1.w_op, &g.w_op1, lr, None)?;
        adam.update(2, "w_conn1", &mut net.nfl1.w_conn.data, &g.w_conn1, lr, None)?;
        adam.update(3, "w_op2", &mut net.nfl2.w_op, &g.w_op2, lr, None)?;
        adam.update(4, "w_conn2", &mut net.nfl2.w_conn.data, &g.w_conn2, lr, Some(&eligible))?;
        adam.update(5, "scores", &mut net.head.scores.data, &g.scores, lr, None)?;
        adam.update(6, "bias", &mut net.head.bias, &g.bias, lr, None)?;

        let new1: Vec<i8> = net.nfl1.w_op.iter().map(|&w| sign(w)).collect();
        let new2: Vec<i8> = net.nfl2.w_op.iter().map(|&w| sign(w)).collect();
        if new1 != op1 || new2 != op2 {
            let moments = &mut adam.slots[4];
            for (idx, w) in net.nfl2.w_conn.data.iter_mut().enumerate() {
                let (i, j) = (idx / k1, idx % k1);
                let was = -op2[i] * op1[j] == 1;
                if was && -new2[i] * new1[j] != 1 {
                    *w = self.init_conn2[idx];
                    moments.m[idx] = 0.0;
                    moments.v[idx] = 0.0;
                }
            }
        }
        Ok(loss)
    }

    /// Runs one shuffled epoch; returns the mean cross-entropy per sample.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let lr = self.config.lr_at(self.epoch);
        let mut order: Vec<usize> = (0..self.bits.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch) {
            total += self.step(batch, lr)?;
            if !total.is_finite() {
                break;
            }
        }
        self.epoch += 1;
        Ok(total / self.bits.len() as f64)
    }
}

/// Trains on the whole dataset without validation or timing.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> core::result::Result<(NfrlModel, TrainHistory), TrainError> {
    train_with(dataset, None, config, &NoClock)
}

/// Fits the binarizer on `dataset`, then runs the configured epochs.
///
/// When given, `validation` only feeds the per-epoch validation F1.
pub fn train_with(
    dataset: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> core::result::Result<(NfrlModel, TrainHistory), TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let start = clock.now_ms();
    let binarizer = BinarizerModel::fit(config.binning, dataset, config.bins, config.seed)?;
    let bits = binarizer.transform_dataset(dataset);
    let val_bits = validation.map(|v| binarizer.transform_dataset(v));
    let net = Network::init(binarizer.width(), config.k1, config.k2, dataset.class_count(), config.seed)?;
    let mut trainer = Trainer::new(net, &bits, dataset.labels(), config.clone())?;
    let mut history = TrainHistory::default();
    let classes = dataset.class_count();

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let ce = trainer.run_epoch()?;
        let train_loss = ce + l2_penalty(&trainer.net, config.l2);
        let model = NfrlModel { binarizer: binarizer.clone(), net: trainer.net.clone() };
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged { epoch: epoch + 1, model: alloc::boxed::Box::new(model), history });
        }
        let train_f1 = macro_f1(&model.predict_bits(&bits), dataset.labels(), classes, ZeroSupport::Skip)?;
        let val_f1 = match (&val_bits, validation) {
            (Some(vb), Some(v)) if !v.is_empty() => {
                macro_f1(&model.predict_bits(vb), v.labels(), classes, ZeroSupport::Skip)?
            }
            _ => f64::NAN,
        };
        let view = trainer.net.binary_view();
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss,
            train_f1,
            val_f1,
            live_rules: view.live2.iter().filter(|&&l| l).count(),
            elapsed_ms: clock.now_ms().saturating_sub(start),
        });
    }
    Ok((NfrlModel { binarizer, net: trainer.net }, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_decays_by_ten_percent() {
        let c = TrainConfig { lr: 1e-2, decay_every: 100, decay_factor: 0.1, ..TrainConfig::default() };
        assert_eq!(c.lr_at(0), 1e-2);
        assert_eq!(c.lr_at(99), 1e-2);
        assert!((c.lr_at(100) - 9e-3).abs() < 1e-15);
        assert!((c.lr_at(250) - 8.1e-3).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { l2: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { decay_factor: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { decay_factor: 1.5, ..TrainConfig::default() }.validate().is_err());
    }
}
