use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments, shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Scalar = f64> {
    pub config: AdamConfig,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParams<T>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    /// One bias-corrected step of size `lr`.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) -> Result<()> {
        self.steps += 1;
        let c = self.config;
        let (b1, b2, eps) = (T::of(c.beta1), T::of(c.beta2), T::of(c.eps));
        let bc1 = T::of(1.0 - c.beta1.powi(self.steps as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.steps as i32));
        let lr = T::of(lr);
        for (name, p) in params.iter_mut() {
            let missing = || Error::Training(format!("no optimizer state for `{name}`"));
            let g = grads.get(name).ok_or_else(missing)?;
            let m = self.m.get_mut(name).ok_or_else(missing)?;
            let v = self.v.get_mut(name).ok_or_else(missing)?;
            if g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape() {
                return Err(Error::shape("adam", p.shape(), g.shape()));
            }
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((p, &g), (m, v)) in it {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
