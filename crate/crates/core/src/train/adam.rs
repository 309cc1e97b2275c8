use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Adam with bias correction.
///
/// Each tensor is addressed by a slot index; entries excluded by the update
/// mask keep both their value and their moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub slots: Vec<Moments>,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self { step: 0, slots: sizes.iter().map(|&n| Moments { m: vec![0.0; n], v: vec![0.0; n] }).collect() }
    }

    /// Advances the step counter; call once per optimizer step before [`update`](Self::update).
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one Adam update to `params` using slot `slot`.
    pub fn update(
        &mut self,
        slot: usize,
        name: &'static str,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        mask: Option<&dyn Fn(usize) -> bool>,
    ) -> Result<()> {
        let moments = &mut self.slots[slot];
        if params.len() != grads.len() || moments.m.len() != params.len() {
            return Err(Error::Shape(alloc::format!("{name}: parameter and gradient sizes differ")));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(name));
        }
        let t = self.step.max(1) as i32;
        let c1 = 1.0 - libm::pow(BETA1, t as f64);
        let c2 = 1.0 - libm::pow(BETA2, t as f64);
        for i in 0..params.len() {
            if let Some(mask) = mask {
                if !mask(i) {
                    continue;
                }
            }
            let g = grads[i];
            let m = BETA1 * moments.m[i] + (1.0 - BETA1) * g;
            let v = BETA2 * moments.v[i] + (1.0 - BETA2) * g * g;
            moments.m[i] = m;
            moments.v[i] = v;
            params[i] -= lr * (m / c1) / (math::sqrt(v / c2) + EPSILON);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(&[3]);
        let mut p = [0.5, -0.2, 0.1];
        s.begin_step();
        s.update(0, "p", &mut p, &[0.0; 3], 0.01, None).unwrap();
        assert_eq!(p, [0.5, -0.2, 0.1]);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        // with a constant gradient m/c1 -> g and sqrt(v/c2) -> |g|: step -> lr
        let mut s = AdamState::new(&[1]);
        let mut p = [0.0];
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p[0];
            s.begin_step();
            s.update(0, "p", &mut p, &[0.3], 1e-3, None).unwrap();
            last = before - p[0];
        }
        assert!((last - 1e-3).abs() < 1e-9, "{last}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = AdamState::new(&[1]);
        s.begin_step();
        let err = s.update(0, "w_conn1", &mut [0.0], &[f64::NAN], 0.1, None).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient("w_conn1"));
    }

    #[test]
    fn masked_entries_are_untouched() {
        let mut s = AdamState::new(&[2]);
        let mut p = [1.0, 1.0];
        s.begin_step();
        let mask = |i: usize| i == 0;
        s.update(0, "p", &mut p, &[1.0, 1.0], 0.1, Some(&mask)).unwrap();
        assert!(p[0] < 1.0);
        assert_eq!(p[1], 1.0);
        assert_eq!(s.slots[0].m[1], 0.0);
    }
}
