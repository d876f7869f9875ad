use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Row-major tensor values in 64-bit precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Versioned, self-describing container for encoder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderCheckpoint {
    pub format_version: u32,
    pub d_sem: usize,
    pub seed: u64,
    pub config: EncoderConfig,
    pub tensors: Vec<NamedTensor>,
}

impl EncoderCheckpoint {
    pub fn from_params<T: Scalar>(params: &EncoderParams<T>, d_sem: usize, seed: u64) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            d_sem,
            seed,
            config: params.config,
            tensors: params
                .tensors()
                .into_iter()
                .map(|(name, shape, values)| NamedTensor {
                    name,
                    shape,
                    values: values.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds parameters, rejecting unknown versions and any tensor whose
    /// name or shape differs from what the stored config implies.
    pub fn to_params<T: Scalar>(&self) -> Result<EncoderParams<T>> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        if self.config.d_in != self.d_sem + 2 {
            return Err(Error::Checkpoint(format!(
                "d_in {} inconsistent with d_sem {}",
                self.config.d_in, self.d_sem
            )));
        }
        self.config.validate()?;
        let mut params = EncoderParams::<T>::zeros(self.config);
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(name, shape, _)| (name, shape))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), stored) in expected.iter().zip(&self.tensors) {
            if *name != stored.name || *shape != stored.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                    stored.name, stored.shape
                )));
            }
            if stored.values.len() != shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` holds {} values for shape {shape:?}",
                    stored.values.len()
                )));
            }
        }
        let flat: Vec<T> = self
            .tensors
            .iter()
            .flat_map(|t| t.values.iter().map(|&v| T::of(v)))
            .collect();
        params.set_flat(&flat)?;
        Ok(params)
    }
}
