//! Adam with bias correction.

use super::{Param, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Seed for minibatch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let positive = [("learning_rate", self.learning_rate), ("eps", self.eps)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Param<T>]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| vec![T::zero(); p.value.len()])
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One Adam update at step `t` (1-based).
pub fn adam_step<T: Scalar>(
    params: &mut [Param<T>],
    grads: &[Param<T>],
    state: &mut AdamState<T>,
    t: u64,
    cfg: &TrainConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("Adam step index starts at 1"));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::shape(format!(
            "{} parameters, {} gradients, {}/{} moment buffers",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let n = p.value.len();
        if p.value.shape() != g.value.shape() || state.m[i].len() != n || state.v[i].len() != n {
            return Err(Error::shape(format!(
                "parameter {} {:?} vs gradient {:?}",
                p.name,
                p.value.shape(),
                g.value.shape()
            )));
        }
    }
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let step = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.eps);
    let c1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (w, &gj)) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.value.data())
            .enumerate()
        {
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w = *w - step * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
