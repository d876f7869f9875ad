use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{EncoderConfig, EncoderParams, HeadParams, SelfMode};
use crate::error::{Error, Result};
use crate::graph::MessageGraph;
use crate::scalar::Scalar;

/// Attention neighbourhoods in CSR form: node `i` attends to
/// `targets[offsets[i]..offsets[i + 1]]`, in ascending node order.
#[derive(Debug, Clone)]
struct Neighborhoods {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Neighborhoods {
    fn new(graph: &MessageGraph, mode: SelfMode) -> Self {
        let mut offsets = Vec::with_capacity(graph.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for i in 0..graph.len() {
            let ns = graph.neighbors(i);
            match mode {
                SelfMode::Attend => {
                    let split = ns.partition_point(|&j| j < i);
                    targets.extend_from_slice(&ns[..split]);
                    targets.push(i);
                    targets.extend_from_slice(&ns[split..]);
                }
                SelfMode::Add => targets.extend_from_slice(ns),
            }
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[derive(Debug, Clone)]
struct HeadCache<T> {
    z: Array2<T>,
    /// Pre-activation scores per attention edge.
    scores: Vec<T>,
    /// Softmax weights per attention edge.
    alpha: Vec<T>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Array2<T>,
    heads: Vec<HeadCache<T>>,
    /// Concatenated head outputs before ELU (hidden layers only).
    pre_activation: Option<Array2<T>>,
}

/// Result of a forward pass, retaining what the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub embeddings: Array2<T>,
    hoods: Neighborhoods,
    layers: Vec<LayerCache<T>>,
}

fn leaky<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

fn leaky_grad<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        slope
    }
}

fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

fn elu_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

fn head_forward<T: Scalar>(
    input: &Array2<T>,
    head: &HeadParams<T>,
    hoods: &Neighborhoods,
    config: &EncoderConfig,
) -> (Array2<T>, HeadCache<T>) {
    let d = config.d_hidden;
    let slope = T::of(config.negative_slope);
    let z = input.dot(&head.weight);
    let a_src = head.attn.slice(s![..d]);
    let a_dst = head.attn.slice(s![d..]);
    let src: Array1<T> = z.dot(&a_src);
    let dst: Array1<T> = z.dot(&a_dst);

    let n = z.nrows();
    let mut out = Array2::zeros((n, d));
    let mut scores = vec![T::zero(); hoods.targets.len()];
    let mut alpha = vec![T::zero(); hoods.targets.len()];
    for i in 0..n {
        let range = hoods.range(i);
        if !range.is_empty() {
            let mut max = T::neg_infinity();
            for k in range.clone() {
                let s = src[i] + dst[hoods.targets[k]];
                scores[k] = s;
                max = max.max(leaky(s, slope));
            }
            let mut total = T::zero();
            for k in range.clone() {
                let e = (leaky(scores[k], slope) - max).exp();
                alpha[k] = e;
                total += e;
            }
            let mut row = out.row_mut(i);
            for k in range {
                alpha[k] /= total;
                row.scaled_add(alpha[k], &z.row(hoods.targets[k]));
            }
        }
        if config.self_mode == SelfMode::Add {
            out.row_mut(i).zip_mut_with(&z.row(i), |o, &zi| *o += zi);
        }
    }
    (out, HeadCache { z, scores, alpha })
}

/// Gradients of one head. Returns `(d weight, d attn, d input)`; the input
/// gradient is skipped when `need_input` is false.
fn head_backward<T: Scalar>(
    input: &Array2<T>,
    head: &HeadParams<T>,
    cache: &HeadCache<T>,
    upstream: ArrayView2<T>,
    hoods: &Neighborhoods,
    config: &EncoderConfig,
    need_input: bool,
) -> (Array2<T>, Array1<T>, Option<Array2<T>>) {
    let d = config.d_hidden;
    let slope = T::of(config.negative_slope);
    let z = &cache.z;
    let n = z.nrows();
    let mut dz = Array2::<T>::zeros((n, d));
    let mut d_src = vec![T::zero(); n];
    let mut d_dst = vec![T::zero(); n];
    let mut d_alpha = Vec::new();

    for i in 0..n {
        let g = upstream.row(i);
        if config.self_mode == SelfMode::Add {
            dz.row_mut(i).zip_mut_with(&g, |a, &b| *a += b);
        }
        let range = hoods.range(i);
        if range.is_empty() {
            continue;
        }
        d_alpha.clear();
        let mut weighted = T::zero();
        for k in range.clone() {
            let j = hoods.targets[k];
            let da = g.dot(&z.row(j));
            weighted += cache.alpha[k] * da;
            d_alpha.push(da);
            dz.row_mut(j).scaled_add(cache.alpha[k], &g);
        }
        for (k, da) in range.zip(&d_alpha) {
            let de = cache.alpha[k] * (*da - weighted);
            let ds = de * leaky_grad(cache.scores[k], slope);
            d_src[i] += ds;
            d_dst[hoods.targets[k]] += ds;
        }
    }

    let a_src = head.attn.slice(s![..d]);
    let a_dst = head.attn.slice(s![d..]);
    let d_src = ArrayView1::from(&d_src);
    let d_dst = ArrayView1::from(&d_dst);
    let mut d_attn = Array1::zeros(2 * d);
    d_attn.slice_mut(s![..d]).assign(&z.t().dot(&d_src));
    d_attn.slice_mut(s![d..]).assign(&z.t().dot(&d_dst));
    for i in 0..n {
        let mut row = dz.row_mut(i);
        row.scaled_add(d_src[i], &a_src);
        row.scaled_add(d_dst[i], &a_dst);
    }
    let d_weight = input.t().dot(&dz);
    let d_input = need_input.then(|| dz.dot(&head.weight.t()));
    (d_weight, d_attn, d_input)
}

fn check_shapes<T: Scalar>(graph: &MessageGraph, params: &EncoderParams<T>) -> Result<()> {
    let config = &params.config;
    config.validate()?;
    if graph.features.ncols() != config.d_in {
        return Err(Error::Dimension {
            expected: config.d_in,
            actual: graph.features.ncols(),
            context: "graph feature width vs encoder input",
        });
    }
    let inputs = config.layer_inputs();
    if params.layers.len() != inputs.len() {
        return Err(Error::Dimension {
            expected: inputs.len(),
            actual: params.layers.len(),
            context: "encoder layer count",
        });
    }
    for (layer, &d_in) in params.layers.iter().zip(&inputs) {
        if layer.len() != config.heads {
            return Err(Error::Dimension {
                expected: config.heads,
                actual: layer.len(),
                context: "heads per layer",
            });
        }
        for h in layer {
            if h.weight.dim() != (d_in, config.d_hidden) || h.attn.len() != 2 * config.d_hidden {
                return Err(Error::Dimension {
                    expected: d_in * config.d_hidden,
                    actual: h.weight.len(),
                    context: "head parameter shape",
                });
            }
        }
    }
    Ok(())
}

impl<T: Scalar> ForwardPass<T> {
    pub fn run(graph: &MessageGraph, params: &EncoderParams<T>) -> Result<Self> {
        check_shapes(graph, params)?;
        let config = &params.config;
        let hoods = Neighborhoods::new(graph, config.self_mode);
        let mut input: Array2<T> = graph.features.mapv(T::of);
        let mut layers = Vec::with_capacity(params.layers.len());
        let last = params.layers.len() - 1;
        for (l, layer) in params.layers.iter().enumerate() {
            let mut caches = Vec::with_capacity(layer.len());
            let mut outputs = Vec::with_capacity(layer.len());
            for head in layer {
                let (out, cache) = head_forward(&input, head, &hoods, config);
                outputs.push(out);
                caches.push(cache);
            }
            let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
            if l < last {
                let pre = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
                let next = pre.mapv(elu);
                layers.push(LayerCache {
                    input: std::mem::replace(&mut input, next),
                    heads: caches,
                    pre_activation: Some(pre),
                });
            } else {
                let mut mean = Array2::zeros(outputs[0].raw_dim());
                for o in &outputs {
                    mean += o;
                }
                mean /= T::of(outputs.len() as f64);
                layers.push(LayerCache {
                    input: std::mem::replace(&mut input, mean),
                    heads: caches,
                    pre_activation: None,
                });
            }
        }
        Ok(Self {
            embeddings: input,
            hoods,
            layers,
        })
    }

    /// Parameter gradients of `<upstream, embeddings>`.
    pub fn backward(
        &self,
        params: &EncoderParams<T>,
        upstream: &Array2<T>,
    ) -> Result<EncoderParams<T>> {
        self.backward_full(params, upstream).map(|(g, _)| g)
    }

    /// Parameter gradients plus the gradient with respect to the input
    /// features.
    pub fn backward_full(
        &self,
        params: &EncoderParams<T>,
        upstream: &Array2<T>,
    ) -> Result<(EncoderParams<T>, Array2<T>)> {
        if upstream.dim() != self.embeddings.dim() {
            return Err(Error::Dimension {
                expected: self.embeddings.len(),
                actual: upstream.len(),
                context: "upstream gradient shape",
            });
        }
        let config = &params.config;
        let d = config.d_hidden;
        let mut grads = EncoderParams::zeros(*config);
        let mut grad_out = upstream.clone();
        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            let cache = &self.layers[l];
            let heads = &params.layers[l];
            let per_head: Vec<Array2<T>> = if l == last {
                let scale = T::one() / T::of(heads.len() as f64);
                vec![grad_out.mapv(|x| x * scale); heads.len()]
            } else {
                let pre = cache.pre_activation.as_ref().expect("hidden layer cache");
                let mut g = grad_out.clone();
                g.zip_mut_with(pre, |gi, &p| *gi = *gi * elu_grad(p));
                (0..heads.len())
                    .map(|k| g.slice(s![.., k * d..(k + 1) * d]).to_owned())
                    .collect()
            };
            let mut grad_in = Array2::<T>::zeros(cache.input.raw_dim());
            for (k, head) in heads.iter().enumerate() {
                let (dw, da, dx) = head_backward(
                    &cache.input,
                    head,
                    &cache.heads[k],
                    per_head[k].view(),
                    &self.hoods,
                    config,
                    true,
                );
                grads.layers[l][k].weight = dw;
                grads.layers[l][k].attn = da;
                grad_in += &dx.expect("input gradient requested");
            }
            grad_out = grad_in;
        }
        Ok((grads, grad_out))
    }
}

/// Message embeddings, one row per graph node.
pub fn forward<T: Scalar>(graph: &MessageGraph, params: &EncoderParams<T>) -> Result<Array2<T>> {
    ForwardPass::run(graph, params).map(|p| p.embeddings)
}

/// Exact parameter gradients of `<upstream, forward(graph, params)>`.
pub fn backward<T: Scalar>(
    graph: &MessageGraph,
    params: &EncoderParams<T>,
    upstream: &Array2<T>,
) -> Result<EncoderParams<T>> {
    ForwardPass::run(graph, params)?.backward(params, upstream)
}
