//! AdamW with decoupled weight decay.
//!
//! ```text
//! θ ← θ · (1 − lr·λ)
//! m ← β₁ m + (1 − β₁) g
//! v ← β₂ v + (1 − β₂) g²
//! θ ← θ − lr · m̂ / (√v̂ + ε),   m̂ = m / (1 − β₁ᵗ),  v̂ = v / (1 − β₂ᵗ)
//! ```

use serde::{Deserialize, Serialize};

use super::{Matrix, Scalar};
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment buffers for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub first_moment: Vec<Matrix<T>>,
    pub second_moment: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(config: AdamWConfig, params: &[Matrix<T>]) -> Result<Self> {
        if !(config.learning_rate >= 0.0) || !(config.epsilon > 0.0) {
            return Err(Error::Parameter(format!(
                "learning rate {} / epsilon {} invalid",
                config.learning_rate, config.epsilon
            )));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::Parameter("betas must lie in [0, 1)".into()));
        }
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Ok(Self {
            config,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        })
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [Matrix<T>], grads: &[Matrix<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(shape_err(format!(
                "{} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(shape_err(format!(
                    "param {i}: {:?} vs grad {:?} vs state {:?}",
                    p.shape(),
                    g.shape(),
                    self.first_moment[i].shape()
                )));
            }
        }

        self.step += 1;
        let c = self.config;
        let lr = T::lit(c.learning_rate);
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let eps = T::lit(c.epsilon);
        let decay = T::one() - lr * T::lit(c.weight_decay);
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (j, &gj) in g.data().iter().enumerate() {
                pd[j] *= decay;
                md[j] = b1 * md[j] + (T::one() - b1) * gj;
                vd[j] = b2 * vd[j] + (T::one() - b2) * gj * gj;
                let m_hat = md[j] / bc1;
                let v_hat = vd[j] / bc2;
                pd[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form: returns updated copies.
pub fn adamw_step<T: Scalar>(
    params: &[Matrix<T>],
    grads: &[Matrix<T>],
    state: &AdamWState<T>,
) -> Result<(Vec<Matrix<T>>, AdamWState<T>)> {
    let mut params = params.to_vec();
    let mut state = state.clone();
    state.step(&mut params, grads)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    fn cfg(lr: f64, wd: f64) -> AdamWConfig {
        AdamWConfig {
            learning_rate: lr,
            weight_decay: wd,
            ..AdamWConfig::default()
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let params = vec![M::from_f64_rows(&[&[1.5, -2.0]]).unwrap()];
        let grads = vec![M::zeros(1, 2)];
        let state = AdamWState::new(cfg(1e-3, 0.0), &params).unwrap();
        let (p, s) = adamw_step(&params, &grads, &state).unwrap();
        assert_eq!(p, params);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let params = vec![M::from_f64_rows(&[&[0.0]]).unwrap()];
        let grads = vec![M::from_f64_rows(&[&[1.0]]).unwrap()];
        let state = AdamWState::new(AdamWConfig::default(), &params).unwrap();
        let (p, _) = adamw_step(&params, &grads, &state).unwrap();
        // m̂ = 1, v̂ = 1 at t=1: step = lr / (1 + ε)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0].get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_closed_form() {
        let mut params = vec![M::from_f64_rows(&[&[2.0]]).unwrap()];
        let grads = vec![M::zeros(1, 1)];
        let mut state = AdamWState::new(cfg(0.1, 0.5), &params).unwrap();
        for k in 1..=5 {
            state.step(&mut params, &grads).unwrap();
            let expected = 2.0 * (1.0f64 - 0.1 * 0.5).powi(k);
            assert!((params[0].get(0, 0) - expected).abs() < 1e-15);
            assert_eq!(state.step, k as u64);
        }
    }

    #[test]
    fn bitwise_deterministic() {
        let params = vec![M::from_f64_rows(&[&[0.3, -0.7], &[1.1, 0.0]]).unwrap()];
        let grads = vec![M::from_f64_rows(&[&[0.01, 2.0], &[-3.0, 0.5]]).unwrap()];
        let state = AdamWState::new(AdamWConfig::default(), &params).unwrap();
        let a = adamw_step(&params, &grads, &state).unwrap();
        let b = adamw_step(&params, &grads, &state).unwrap();
        let bits = |m: &M| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.0[0]), bits(&b.0[0]));
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let params = vec![M::zeros(2, 2)];
        let state = AdamWState::new(AdamWConfig::default(), &params).unwrap();
        assert!(adamw_step(&params, &[M::zeros(2, 3)], &state).is_err());
        assert!(adamw_step(&params, &[], &state).is_err());
    }
}
