//! Bias-corrected adaptive-moment optimizer.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Tensor;
use super::NumericsError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Optimizer state: first/second moment per parameter plus the step count.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let m = (0..params.len())
            .map(|i| Tensor::zeros(params.tensor(i).shape()))
            .collect();
        let v = (0..params.len())
            .map(|i| Tensor::zeros(params.tensor(i).shape()))
            .collect();
        Adam {
            config,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads[i]` is the gradient for `params` tensor `i`;
    /// `None` entries (parameters untouched this step) are skipped entirely,
    /// moments included.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &[Option<Tensor>],
    ) -> Result<(), NumericsError> {
        if grads.len() != params.len() {
            return Err(NumericsError::Shape(format!(
                "optimizer got {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        for (i, grad) in grads.iter().enumerate() {
            let Some(g) = grad else { continue };
            if g.shape() != params.tensor(i).shape() {
                return Err(NumericsError::Shape(format!(
                    "gradient shape {:?} does not match parameter {} {:?}",
                    g.shape(),
                    params.name(i),
                    params.tensor(i).shape()
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.tensor_mut(i).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }

    /// Flatten moments into a parameter set for checkpointing.
    pub fn to_params(&self, params: &ParamSet) -> ParamSet {
        let mut out = ParamSet::new();
        for i in 0..params.len() {
            out.add(&format!("adam.m.{}", params.name(i)), self.m[i].clone());
            out.add(&format!("adam.v.{}", params.name(i)), self.v[i].clone());
        }
        out
    }

    /// Restore moments previously saved with [`Adam::to_params`].
    pub fn restore(
        config: AdamConfig,
        step: u64,
        params: &ParamSet,
        saved: &ParamSet,
    ) -> Result<Self, NumericsError> {
        let mut adam = Adam::new(config, params);
        adam.step = step;
        for i in 0..params.len() {
            let name = params.name(i);
            let m = saved
                .get(&format!("adam.m.{name}"))
                .ok_or_else(|| NumericsError::Corrupt(format!("missing adam.m.{name}")))?;
            let v = saved
                .get(&format!("adam.v.{name}"))
                .ok_or_else(|| NumericsError::Corrupt(format!("missing adam.v.{name}")))?;
            adam.m[i] = m.clone();
            adam.v[i] = v.clone();
        }
        Ok(adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", Tensor::full(&[2], value));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = one_param(3.5);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        adam.step(&mut params, &[Some(Tensor::zeros(&[2]))]).unwrap();
        assert_eq!(params.get("w").unwrap().data(), &[3.5, 3.5]);
    }

    #[test]
    fn first_step_moves_by_almost_lr_against_gradient_sign() {
        // From zero state with constant gradient g, the bias-corrected first
        // step is -lr * g / (|g| + eps), i.e. about -lr * sign(g).
        let mut params = one_param(0.0);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(cfg, &params);
        let g = Tensor::from_vec(&[2], vec![3.0, -0.25]).unwrap();
        adam.step(&mut params, &[Some(g)]).unwrap();
        let w = params.get("w").unwrap().data();
        assert!((w[0] + cfg.lr).abs() < 1e-8 * cfg.lr, "w0 {}", w[0]);
        assert!((w[1] - cfg.lr).abs() < 1e-6 * cfg.lr, "w1 {}", w[1]);
    }

    #[test]
    fn identical_runs_produce_identical_state() {
        let run = || {
            let mut params = one_param(1.0);
            let mut adam = Adam::new(AdamConfig::default(), &params);
            for k in 0..10 {
                let g = Tensor::from_vec(&[2], vec![0.1 * k as f64, -0.2]).unwrap();
                adam.step(&mut params, &[Some(g)]).unwrap();
            }
            params.get("w").unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = one_param(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let bad = Tensor::zeros(&[3]);
        assert!(adam.step(&mut params, &[Some(bad)]).is_err());
    }

    #[test]
    fn moments_roundtrip_through_params() {
        let mut params = one_param(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        for _ in 0..5 {
            let g = Tensor::from_vec(&[2], vec![0.3, -0.4]).unwrap();
            adam.step(&mut params, &[Some(g)]).unwrap();
        }
        let saved = adam.to_params(&params);
        let restored = Adam::restore(adam.config, adam.step_count(), &params, &saved).unwrap();

        let mut a = adam.clone();
        let mut b = restored;
        let mut pa = params.clone();
        let mut pb = params.clone();
        let g = Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap();
        a.step(&mut pa, &[Some(g.clone())]).unwrap();
        b.step(&mut pb, &[Some(g)]).unwrap();
        assert_eq!(pa.get("w").unwrap(), pb.get("w").unwrap());
    }
}
