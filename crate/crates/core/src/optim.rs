//! Bias-corrected Adam on flat parameter slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One update in place. A non-finite gradient leaves both the parameters
    /// and the state untouched and reports the step it would have been.
    pub fn step(&mut self, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape(alloc::format!(
                "adam state holds {} values, got param {} and grad {}",
                self.m.len(),
                param.len(),
                grad.len()
            )));
        }
        let step = self.t + 1;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step });
        }
        self.t = step;
        let t = i32::try_from(step).unwrap_or(i32::MAX);
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        for ((p, g), (m, v)) in param
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(1, 0.1);
        let mut p = [0.0];
        s.step(&mut p, &[1.0]).unwrap();
        // m_hat / sqrt(v_hat) = g / |g| on the first step.
        assert!((p[0] + 0.1).abs() < 1e-6, "{}", p[0]);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = [0.5, -1.0, 2.0];
        for _ in 0..5 {
            s.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let mut s = AdamState::new(2, 0.1);
        let mut p = [0.0, 0.0];
        s.step(&mut p, &[1.0, 1.0]).unwrap();
        let before = (p, s.clone());
        assert_eq!(
            s.step(&mut p, &[f64::NAN, 1.0]),
            Err(Error::NonFiniteGradient { step: 2 })
        );
        assert_eq!((p, s), before);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2, 0.1);
        assert!(matches!(
            s.step(&mut [0.0; 3], &[0.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    /// Worst-case step bound from Cauchy-Schwarz on the bias-corrected
    /// moment sums.
    fn step_bound(s: &AdamState, t: u64) -> f64 {
        let (b1, b2) = (s.beta1, s.beta2);
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        let geo: f64 = (0..t).map(|j| (b1 * b1 / b2).powi(j as i32)).sum();
        s.lr * ((1.0 - b1).powi(2) * bc2 * geo / (bc1 * bc1 * (1.0 - b2))).sqrt()
    }

    proptest! {
        #[test]
        fn step_is_bounded(grads in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let mut s = AdamState::new(1, 0.1);
            let mut p = [0.0];
            for (i, g) in grads.iter().enumerate() {
                let before = p[0];
                s.step(&mut p, &[*g]).unwrap();
                let bound = step_bound(&s, i as u64 + 1);
                prop_assert!((p[0] - before).abs() <= bound * (1.0 + 1e-9));
            }
        }

        #[test]
        fn constant_gradient_steps_at_most_lr(g in -1e3f64..1e3, n in 1usize..200) {
            let mut s = AdamState::new(1, 0.1);
            let mut p = [0.0];
            for _ in 0..n {
                let before = p[0];
                s.step(&mut p, &[g]).unwrap();
                prop_assert!((p[0] - before).abs() <= 0.1 * (1.0 + 1e-9));
            }
        }

        #[test]
        fn identical_inputs_evolve_identically(grads in prop::collection::vec(-5f64..5.0, 1..20)) {
            let mut a = AdamState::new(1, 0.1);
            let mut b = AdamState::new(1, 0.1);
            let (mut pa, mut pb) = ([0.3], [0.3]);
            for g in &grads {
                a.step(&mut pa, &[*g]).unwrap();
                b.step(&mut pb, &[*g]).unwrap();
                prop_assert_eq!(pa[0].to_bits(), pb[0].to_bits());
            }
            prop_assert!(a.second_moment().iter().all(|v| *v >= 0.0));
        }
    }
}
