use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};

/// Nesterov-momentum SGD with a step learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub initial_lr: f64,
    pub momentum: f64,
    /// Iteration indices at which the rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<u64>,
    /// In `[0, 1]`. Zero freezes training after the first milestone.
    pub lr_decay: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            momentum: 0.9,
            lr_milestones: vec![2000, 7000],
            lr_decay: 0.1,
            batch_size: 64,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidOptimizer(msg));
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return bad(format!("initial_lr must be positive, got {}", self.initial_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.lr_decay) {
            return bad(format!("lr_decay must be in [0, 1], got {}", self.lr_decay));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] > w[1]) {
            return bad("lr_milestones must be sorted".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }

    /// Rate for the step with zero-based global index `iteration`:
    /// `initial_lr * lr_decay^k`, `k` = number of milestones `<= iteration`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        let passed = self
            .lr_milestones
            .iter()
            .take_while(|&&m| m <= iteration)
            .count();
        self.initial_lr * self.lr_decay.powi(passed as i32)
    }
}

/// One Nesterov step with the lookahead folded into the update:
///
/// ```text
/// v <- mu * v - lr * g
/// theta <- theta + mu * v - lr * g
/// ```
///
/// `v` is the updated velocity. With `mu = 0` this is plain SGD. On error the
/// parameters are left untouched.
pub fn sgd_step(params: &mut ParamVector, gradient: &[f64], lr: f64, momentum: f64) -> Result<()> {
    if gradient.len() != params.len() || params.momentum.len() != params.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient length",
            expected: params.len(),
            actual: gradient.len(),
        });
    }
    let mut next_values = params.values.clone();
    let mut next_velocity = params.momentum.clone();
    for ((theta, v), &g) in next_values.iter_mut().zip(&mut next_velocity).zip(gradient) {
        *v = momentum * *v - lr * g;
        *theta += momentum * *v - lr * g;
        if !(theta.is_finite() && v.is_finite()) {
            return Err(Error::NonFinite("parameter update"));
        }
    }
    params.values = next_values;
    params.momentum = next_velocity;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = ParamVector {
            values: vec![1.0, -2.0, 0.5],
            momentum: vec![0.0; 3],
        };
        sgd_step(&mut p, &[0.5, 1.0, -4.0], 0.1, 0.0).unwrap();
        assert_eq!(p.values, vec![1.0 - 0.05, -2.0 - 0.1, 0.5 + 0.4]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = ParamVector {
            values: vec![0.3, 0.7],
            momentum: vec![0.0; 2],
        };
        sgd_step(&mut p, &[0.0, 0.0], 0.1, 0.9).unwrap();
        assert_eq!(p.values, vec![0.3, 0.7]);
    }

    #[test]
    fn quadratic_matches_hand_iterated_recurrence() {
        // J = theta^2 / 2, g = theta, lr 0.1, mu 0.9, theta0 = 1:
        // v1 = -0.1,     theta1 = 1 - 0.09 - 0.1          = 0.81
        // v2 = -0.171,   theta2 = 0.81 - 0.1539 - 0.081    = 0.5751
        // v3 = -0.21141, theta3 = 0.5751 - 0.190269 - 0.05751 = 0.327321
        let expected = [0.81, 0.5751, 0.327321];
        let mut p = ParamVector {
            values: vec![1.0],
            momentum: vec![0.0],
        };
        for want in expected {
            let g = p.values[0];
            sgd_step(&mut p, &[g], 0.1, 0.9).unwrap();
            assert!((p.values[0] - want).abs() < 1e-12, "{} vs {want}", p.values[0]);
        }
    }

    #[test]
    fn non_finite_update_leaves_params_untouched() {
        let mut p = ParamVector {
            values: vec![1.0, 2.0],
            momentum: vec![0.0; 2],
        };
        let err = sgd_step(&mut p, &[f64::NAN, 0.0], 0.1, 0.9).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p.values, vec![1.0, 2.0]);
    }

    #[test]
    fn step_schedule() {
        let cfg = OptimizerConfig::default();
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert_eq!(cfg.lr_at(1999), 1e-3);
        assert!((cfg.lr_at(2000) - 1e-4).abs() < 1e-18);
        assert!((cfg.lr_at(7000) - 1e-5).abs() < 1e-18);
        assert!((cfg.lr_at(9999) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn validation_catches_bad_values() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            OptimizerConfig { initial_lr: 0.0, ..ok.clone() },
            OptimizerConfig { momentum: 1.0, ..ok.clone() },
            OptimizerConfig { lr_decay: 1.5, ..ok.clone() },
            OptimizerConfig { lr_milestones: vec![5, 3], ..ok.clone() },
            OptimizerConfig { batch_size: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
