//! Rectified Adam.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::model::{Checkpoint, ParamSet};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RAdamConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// L2 penalty added to the gradient.
    pub weight_decay: f64,
    /// Rescale the gradient when its global norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            betas: (0.9, 0.999),
            eps: 1e-6,
            weight_decay: 0.0,
            clip_norm: Some(10.0),
        }
    }
}

impl RAdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.betas;
        if !(self.lr >= 0.0 && (0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2) && self.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct RAdam {
    config: RAdamConfig,
    step: u64,
    m: ParamSet,
    v: ParamSet,
}

impl RAdam {
    pub fn new(config: RAdamConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let mut m = ParamSet::new();
        for (k, t) in params.iter() {
            m.insert(k.clone(), Tensor::zeros(t.shape()));
        }
        Ok(Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        })
    }

    pub fn config(&self) -> &RAdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update and return the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Tensor>) -> Result<f64> {
        let norm = grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let scale = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = self.config.betas;
        let (bc1, bc2) = (1.0 - b1.powf(t), 1.0 - b2.powf(t));
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let rho = rho_inf - 2.0 * t * b2.powf(t) / bc2;
        let rect = (rho > 5.0).then(|| {
            ((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt()
        });
        let (lr, eps, wd) = (self.config.lr, self.config.eps, self.config.weight_decay);

        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::InvalidInput(format!("no gradient for `{name}`")))?;
            let m = self.m.get_mut(name).expect("moment layout mirrors params");
            let m = m.data_mut();
            let v = self.v.get_mut(name).expect("moment layout mirrors params").data_mut();
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i] * scale + wd * pd[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                pd[i] -= match rect {
                    Some(r) => lr * r * m_hat / ((v[i] / bc2).sqrt() + eps),
                    None => lr * m_hat,
                };
            }
        }
        Ok(norm)
    }

    /// Store moments under `{group}.m/` and `{group}.v/`; the step count
    /// goes into the checkpoint metadata by the caller.
    pub fn save_into(&self, ck: &mut Checkpoint, group: &str) {
        ck.insert_group(&format!("{group}.m"), &self.m);
        ck.insert_group(&format!("{group}.v"), &self.v);
    }

    pub fn restore(config: RAdamConfig, params: &ParamSet, ck: &Checkpoint, group: &str, step: u64) -> Result<Self> {
        let mut opt = Self::new(config, params)?;
        let (m, v) = (ck.group(&format!("{group}.m")), ck.group(&format!("{group}.v")));
        opt.m.check_layout(&m)?;
        opt.v.check_layout(&v)?;
        opt.m = m;
        opt.v = v;
        opt.step = step;
        Ok(opt)
    }
}
