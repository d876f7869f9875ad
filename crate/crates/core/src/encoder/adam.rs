use serde::{Deserialize, Serialize};

use super::EncoderParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: EncoderParams<T>,
    pub v: EncoderParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(like: &EncoderParams<T>) -> Self {
        Self {
            m: EncoderParams::zeros(like.config),
            v: EncoderParams::zeros(like.config),
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(
        &mut self,
        params: &mut EncoderParams<T>,
        grads: &EncoderParams<T>,
        config: &AdamConfig,
    ) -> Result<()> {
        let n = params.num_params();
        if grads.num_params() != n || self.m.num_params() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: grads.num_params(),
                context: "adam gradient size",
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::of(config.beta1);
        let b2 = T::of(config.beta2);
        let one = T::one();
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        let lr = T::of(config.lr);
        let eps = T::of(config.eps);

        let g_tensors = grads.tensors();
        let p_slices = params.slices_mut();
        let m_slices = self.m.slices_mut();
        let v_slices = self.v.slices_mut();
        for (((p, (_, _, g)), m), v) in p_slices
            .into_iter()
            .zip(g_tensors)
            .zip(m_slices)
            .zip(v_slices)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
