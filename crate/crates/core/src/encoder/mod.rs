//! Two-layer multi-head graph attention encoder.
//!
//! Layer 1 runs `heads` attention heads over `d_in` features, concatenates
//! them and applies ELU. Layer 2 runs the same number of heads over the
//! concatenation and averages them into a `d_hidden` embedding. Gradients are
//! derived by hand per layer and checked against finite differences in the
//! test suite.

mod adam;
mod attention;
mod checkpoint;

pub use adam::{AdamConfig, AdamState};
pub use attention::{backward, forward, ForwardPass};
pub use checkpoint::{EncoderCheckpoint, NamedTensor, CHECKPOINT_VERSION};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a node's own representation enters its update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfMode {
    /// The node attends to itself: the softmax runs over `N(i) ∪ {i}`.
    #[default]
    Attend,
    /// The softmax runs over `N(i)` only and `W h_i` is added to the result.
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub heads: usize,
    pub negative_slope: f64,
    pub self_mode: SelfMode,
}

impl EncoderConfig {
    pub fn new(d_in: usize) -> Self {
        Self {
            d_in,
            d_hidden: 32,
            heads: 4,
            negative_slope: 0.2,
            self_mode: SelfMode::Attend,
        }
    }

    /// Input width of each layer.
    pub fn layer_inputs(&self) -> [usize; 2] {
        [self.d_in, self.heads * self.d_hidden]
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_hidden == 0 || self.heads == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if !(self.negative_slope.is_finite() && self.negative_slope >= 0.0) {
            return Err(Error::Config(
                "negative_slope must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One attention head: projection `d_in x d_hidden` and attention vector of
/// length `2 * d_hidden` (source half first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams<T> {
    pub weight: Array2<T>,
    pub attn: Array1<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    /// `layers[l][k]` is head `k` of layer `l`.
    pub layers: Vec<Vec<HeadParams<T>>>,
}

impl<T: Scalar> EncoderParams<T> {
    pub fn zeros(config: EncoderConfig) -> Self {
        let layers = config
            .layer_inputs()
            .iter()
            .map(|&d_in| {
                (0..config.heads)
                    .map(|_| HeadParams {
                        weight: Array2::zeros((d_in, config.d_hidden)),
                        attn: Array1::zeros(2 * config.d_hidden),
                    })
                    .collect()
            })
            .collect();
        Self { config, layers }
    }

    /// Glorot-uniform initialisation, deterministic per seed.
    pub fn init(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(config);
        for layer in &mut params.layers {
            for head in layer.iter_mut() {
                let (fan_in, fan_out) = head.weight.dim();
                let bound = glorot_bound(fan_in, fan_out);
                let dist = Uniform::new_inclusive(-bound, bound);
                head.weight
                    .iter_mut()
                    .for_each(|w| *w = T::of(dist.sample(&mut rng)));
                let bound = glorot_bound(head.attn.len(), 1);
                let dist = Uniform::new_inclusive(-bound, bound);
                head.attn
                    .iter_mut()
                    .for_each(|a| *a = T::of(dist.sample(&mut rng)));
            }
        }
        params
    }

    /// Tensors in a fixed order: per layer, per head, weight then attention.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (k, head) in layer.iter().enumerate() {
                out.push((
                    format!("layer{}.head{}.weight", l + 1, k + 1),
                    head.weight.shape().to_vec(),
                    head.weight.as_slice().expect("standard layout"),
                ));
                out.push((
                    format!("layer{}.head{}.attn", l + 1, k + 1),
                    head.attn.shape().to_vec(),
                    head.attn.as_slice().expect("standard layout"),
                ));
            }
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for head in layer.iter_mut() {
                out.push(head.weight.as_slice_mut().expect("standard layout"));
                out.push(head.attn.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, s)| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, _, s)| s.iter().copied())
            .collect()
    }

    /// Overwrites all entries from a flat vector in [`Self::to_flat`] order.
    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: flat.len(),
                context: "flat parameter vector",
            });
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, s)| s.iter().all(|x| x.is_finite()))
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        EncoderParams {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|h| HeadParams {
                            weight: h.weight.mapv(|x| U::of(x.as_f64())),
                            attn: h.attn.mapv(|x| U::of(x.as_f64())),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
