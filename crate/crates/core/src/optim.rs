//! First-order optimizers over flat parameter slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            ..Self::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// Optimizer state for a fixed list of parameter slots.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Per-slot learning-rate multipliers; empty means 1 everywhere.
    slot_scales: Vec<f64>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
            slot_scales: Vec::new(),
        }
    }

    /// Multiplies the learning rate of slot `i` by `scales[i]`.
    pub fn with_slot_scales(mut self, scales: Vec<f64>) -> Self {
        self.slot_scales = scales;
        self
    }

    /// Replaces the base learning rate; moment estimates are kept.
    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Number of completed steps since construction or the last reset.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Forgets all moment estimates.
    pub fn reset(&mut self) {
        self.t = 0;
        self.m.clear();
        self.v.clear();
    }

    /// Applies one update to every slot; `params[i]` and `grads[i]` must keep
    /// the same lengths across calls. Nothing is modified if any gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("optimizer slots", params.len(), grads.len()));
        }
        if !self.slot_scales.is_empty() && self.slot_scales.len() != params.len() {
            return Err(Error::dim(
                "optimizer slot scales",
                params.len(),
                self.slot_scales.len(),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::dim(format!("optimizer slot {i}"), p.len(), g.len()));
            }
            if g.iter().fold(false, |bad, v| bad | !v.is_finite()) {
                let k = g.iter().position(|v| !v.is_finite()).unwrap_or(0);
                return Err(Error::NonFinite(format!(
                    "gradient slot {i} entry {k} is {}",
                    g[k]
                )));
            }
        }
        self.t += 1;
        let scales = &self.slot_scales;
        let lr_of = |i: usize| self.cfg.lr * scales.get(i).copied().unwrap_or(1.0);
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let lr = lr_of(i);
                    for (a, b) in p.iter_mut().zip(g.iter()) {
                        *a -= lr * b;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                }
                let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps);
                let c1 = 1.0 - b1.powi(self.t as i32);
                let c2 = 1.0 - b2.powi(self.t as i32);
                // lr * (m/c1) / (sqrt(v/c2) + eps), with the corrections hoisted.
                let inv_sqrt_c2 = 1.0 / c2.sqrt();
                for (i, (((p, g), m), v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                    .enumerate()
                {
                    let lr = lr_of(i) / c1;
                    for (((a, &gi), mi), vi) in p
                        .iter_mut()
                        .zip(g.iter())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        *a -= lr * *mi / (vi.sqrt() * inv_sqrt_c2 + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step1(opt: &mut Optimizer, theta: &mut f64, g: f64) -> Result<()> {
        let mut p = [*theta];
        opt.step(&mut [&mut p[..]], &[&[g][..]])?;
        *theta = p[0];
        Ok(())
    }

    #[test]
    fn sgd_definition() {
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1));
        let mut t = 1.0;
        step1(&mut opt, &mut t, 2.0).unwrap();
        assert!((t - 0.8).abs() < 1e-15);
        step1(&mut opt, &mut t, 0.0).unwrap();
        assert!((t - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_against_scalar_reference() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.001));
        let mut t = 0.0;
        step1(&mut opt, &mut t, 1.0).unwrap();
        // m = 0.1, v = 0.001; mhat = 1, vhat = 1.
        let want = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((t - want).abs() < 1e-18);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1));
        let mut t = 3.0;
        let err = step1(&mut opt, &mut t, f64::NAN).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(t, 3.0);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn slot_scales_multiply_the_rate() {
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1)).with_slot_scales(vec![1.0, 10.0]);
        let (mut a, mut b) = ([1.0], [1.0]);
        opt.step(&mut [&mut a[..], &mut b[..]], &[&[1.0][..], &[1.0][..]])
            .unwrap();
        assert!((a[0] - 0.9).abs() < 1e-15 && b[0].abs() < 1e-15);
    }

    #[test]
    fn reset_restarts_bias_correction() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.01));
        let mut a = 0.0;
        step1(&mut opt, &mut a, 1.0).unwrap();
        step1(&mut opt, &mut a, -3.0).unwrap();
        opt.reset();
        let mut b = 0.0;
        step1(&mut opt, &mut b, 5.0).unwrap();
        assert!((b + 0.01).abs() < 1e-9);
    }
}
