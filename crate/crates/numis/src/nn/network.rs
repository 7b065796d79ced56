//! The assembled feed-forward network: parameters bound to a topology, the
//! full forward pass (with caches for training), and the exact backward pass
//! producing a flat gradient list aligned with the flat parameter list.

use crate::error::{Error, Result};
use crate::nn::conv::{conv2d_backward, conv2d_forward_cached, ConvCache};
use crate::nn::dense::{dense_backward, dense_forward};
use crate::nn::dropout::{dropout, dropout_backward, DropoutCache};
use crate::nn::init::init_weights;
use crate::nn::loss::softmax;
use crate::nn::pool::{maxpool_backward, maxpool_forward, PoolCache};
use crate::nn::relu::{relu, relu_backward};
use crate::nn::{Activation, LayerKind, Mode, NetworkTopology};
use crate::tensor::{Scalar, TensorOf};
use rand::Rng;

/// Parameters of one layer; non-parametric layers hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T> {
    Conv { weights: TensorOf<T>, bias: TensorOf<T> },
    Dense { weights: TensorOf<T>, bias: TensorOf<T> },
    None,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub topology: NetworkTopology,
    pub params: Vec<LayerParams<T>>,
}

impl<T: Scalar> Network<T> {
    /// Bind an existing parameter list to a topology.
    pub fn new(topology: NetworkTopology, params: Vec<LayerParams<T>>) -> Result<Self> {
        if params.len() != topology.layers.len() {
            return Err(Error::Contract(format!(
                "{} parameter entries for {} layers",
                params.len(),
                topology.layers.len()
            )));
        }
        Ok(Network { topology, params })
    }

    /// Fresh He-initialized network, deterministic under the seed.
    pub fn init(topology: NetworkTopology, seed: u64) -> Result<Self> {
        let params = init_weights(&topology, seed)?;
        Ok(Network { topology, params })
    }

    /// Names for the flat parameter list: `conv1.weight`, `conv1.bias`,
    /// `dense2.weight`, ... numbered per kind in layer order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let (mut conv_n, mut dense_n) = (0usize, 0usize);
        for layer in &self.topology.layers {
            match layer.kind {
                LayerKind::Conv => {
                    conv_n += 1;
                    names.push(format!("conv{conv_n}.weight"));
                    names.push(format!("conv{conv_n}.bias"));
                }
                LayerKind::Dense => {
                    dense_n += 1;
                    names.push(format!("dense{dense_n}.weight"));
                    names.push(format!("dense{dense_n}.bias"));
                }
                _ => {}
            }
        }
        names
    }

    pub fn param_vec(&self) -> Vec<&TensorOf<T>> {
        let mut out = Vec::new();
        for p in &self.params {
            match p {
                LayerParams::Conv { weights, bias } | LayerParams::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn param_vec_mut(&mut self) -> Vec<&mut TensorOf<T>> {
        let mut out = Vec::new();
        for p in &mut self.params {
            match p {
                LayerParams::Conv { weights, bias } | LayerParams::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_vec().iter().map(|t| t.len()).sum()
    }

    /// Eval-mode forward pass returning class probabilities, without the
    /// training caches. This is the hot path for evaluation and saliency.
    pub fn infer(&self, input: &TensorOf<T>) -> Result<TensorOf<T>> {
        let logits = self.infer_logits(input)?;
        Ok(softmax(&logits))
    }

    /// Probability of the positive class ("contains element").
    pub fn positive_probability(&self, input: &TensorOf<T>) -> Result<T> {
        Ok(self.infer(input)?.data()[POSITIVE_CLASS])
    }

    fn infer_logits(&self, input: &TensorOf<T>) -> Result<TensorOf<T>> {
        self.check_input(input)?;
        let mut cur = input.clone();
        for (i, (layer, params)) in self.topology.layers.iter().zip(&self.params).enumerate() {
            cur = match (layer.kind, params) {
                (LayerKind::Conv, LayerParams::Conv { weights, bias }) => {
                    let out = crate::nn::conv::conv2d_forward(&cur, layer, weights, bias)
                        .map_err(|e| at_layer(i, e))?;
                    apply_activation(layer.activation, out)
                }
                (LayerKind::MaxPool, _) => {
                    maxpool_forward(&cur, layer.kernel_size, layer.stride)
                        .map_err(|e| at_layer(i, e))?
                        .0
                }
                (LayerKind::Flatten, _) => {
                    let n = cur.len();
                    cur.reshape(vec![n])?
                }
                (LayerKind::Dense, LayerParams::Dense { weights, bias }) => {
                    let out = dense_forward(&cur, weights, bias).map_err(|e| at_layer(i, e))?;
                    apply_activation(layer.activation, out)
                }
                (LayerKind::Dropout, _) => cur, // identity in eval mode
                (kind, _) => {
                    return Err(Error::Contract(format!(
                        "layer {i} ({}) has no matching parameters",
                        kind.as_str()
                    )))
                }
            };
        }
        Ok(cur)
    }

    fn check_input(&self, input: &TensorOf<T>) -> Result<()> {
        let (h, w, c) = self.topology.input_shape;
        if input.shape() != [h, w, c] {
            return Err(Error::Contract(format!(
                "input shape {:?} does not match topology input {:?}",
                input.shape(),
                [h, w, c]
            )));
        }
        Ok(())
    }

    /// Diagnostic: run an eval-mode forward and report the first layer whose
    /// output contains a non-finite value (or `usize::MAX` for bad input).
    pub fn first_non_finite_layer(&self, input: &TensorOf<T>) -> Option<(usize, &'static str)> {
        if !input.all_finite() {
            return Some((usize::MAX, "input"));
        }
        let mut cur = input.clone();
        for (i, (layer, params)) in self.topology.layers.iter().zip(&self.params).enumerate() {
            cur = match (layer.kind, params) {
                (LayerKind::Conv, LayerParams::Conv { weights, bias }) => {
                    match crate::nn::conv::conv2d_forward(&cur, layer, weights, bias) {
                        Ok(out) => apply_activation(layer.activation, out),
                        Err(_) => return Some((i, layer.kind.as_str())),
                    }
                }
                (LayerKind::MaxPool, _) => {
                    match maxpool_forward(&cur, layer.kernel_size, layer.stride) {
                        Ok((out, _)) => out,
                        Err(_) => return Some((i, layer.kind.as_str())),
                    }
                }
                (LayerKind::Flatten, _) => {
                    let n = cur.len();
                    cur.reshape(vec![n]).ok()?
                }
                (LayerKind::Dense, LayerParams::Dense { weights, bias }) => {
                    match dense_forward(&cur, weights, bias) {
                        Ok(out) => apply_activation(layer.activation, out),
                        Err(_) => return Some((i, layer.kind.as_str())),
                    }
                }
                (LayerKind::Dropout, _) => cur,
                _ => return Some((i, layer.kind.as_str())),
            };
            if !cur.all_finite() {
                return Some((i, layer.kind.as_str()));
            }
        }
        None
    }
}

/// Index of the positive ("contains element") class in the 2-unit output.
pub const POSITIVE_CLASS: usize = 1;

fn apply_activation<T: Scalar>(activation: Activation, t: TensorOf<T>) -> TensorOf<T> {
    match activation {
        Activation::Relu => relu(&t),
        Activation::Identity => t,
    }
}

fn at_layer(i: usize, e: Error) -> Error {
    match e {
        Error::Topology(msg) => Error::Topology(format!("layer {i}: {msg}")),
        Error::Contract(msg) => Error::Contract(format!("layer {i}: {msg}")),
        other => other,
    }
}

enum CacheEntry<T> {
    Conv { conv: ConvCache<T>, preact: TensorOf<T> },
    Pool(PoolCache),
    Flatten { in_shape: Vec<usize> },
    Dense { input: TensorOf<T>, preact: TensorOf<T> },
    Dropout(DropoutCache<T>),
}

/// Everything backward needs, plus the final logits and probabilities.
pub struct ForwardCache<T> {
    entries: Vec<CacheEntry<T>>,
    pub logits: TensorOf<T>,
    pub probs: TensorOf<T>,
}

/// Full forward pass. Applies the layers in order, returning class
/// probabilities (softmax over the final 2-unit output) and the caches
/// required by [`backward_full`]. The RNG drives dropout in train mode only.
pub fn forward_full<T: Scalar, R: Rng>(
    net: &Network<T>,
    input: &TensorOf<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardCache<T>> {
    net.check_input(input)?;
    let mut entries = Vec::with_capacity(net.topology.layers.len());
    let mut cur = input.clone();
    for (i, (layer, params)) in net.topology.layers.iter().zip(&net.params).enumerate() {
        match (layer.kind, params) {
            (LayerKind::Conv, LayerParams::Conv { weights, bias }) => {
                let (preact, conv) = conv2d_forward_cached(&cur, layer, weights, bias)
                    .map_err(|e| at_layer(i, e))?;
                cur = apply_activation(layer.activation, preact.clone());
                entries.push(CacheEntry::Conv { conv, preact });
            }
            (LayerKind::MaxPool, _) => {
                let (out, cache) = maxpool_forward(&cur, layer.kernel_size, layer.stride)
                    .map_err(|e| at_layer(i, e))?;
                cur = out;
                entries.push(CacheEntry::Pool(cache));
            }
            (LayerKind::Flatten, _) => {
                let in_shape = cur.shape().to_vec();
                let n = cur.len();
                cur = cur.reshape(vec![n])?;
                entries.push(CacheEntry::Flatten { in_shape });
            }
            (LayerKind::Dense, LayerParams::Dense { weights, bias }) => {
                let preact = dense_forward(&cur, weights, bias).map_err(|e| at_layer(i, e))?;
                let out = apply_activation(layer.activation, preact.clone());
                entries.push(CacheEntry::Dense { input: cur, preact });
                cur = out;
            }
            (LayerKind::Dropout, _) => {
                let (out, cache) = dropout(&cur, layer.dropout_rate, mode, rng)?;
                cur = out;
                entries.push(CacheEntry::Dropout(cache));
            }
            (kind, _) => {
                return Err(Error::Contract(format!(
                    "layer {i} ({}) has no matching parameters",
                    kind.as_str()
                )))
            }
        }
    }
    let probs = softmax(&cur);
    Ok(ForwardCache {
        entries,
        logits: cur,
        probs,
    })
}

/// Exact gradients of the full network given the loss gradient w.r.t. the
/// logits. Returns one gradient tensor per entry of `net.param_vec()`, in the
/// same order.
pub fn backward_full<T: Scalar>(
    net: &Network<T>,
    cache: &ForwardCache<T>,
    grad_logits: &TensorOf<T>,
) -> Result<Vec<TensorOf<T>>> {
    if cache.entries.len() != net.topology.layers.len() {
        return Err(Error::Contract("cache does not match topology".into()));
    }
    let mut grads_rev: Vec<TensorOf<T>> = Vec::new();
    let mut grad = grad_logits.clone();
    for (i, (layer, params)) in net
        .topology
        .layers
        .iter()
        .zip(&net.params)
        .enumerate()
        .rev()
    {
        match (&cache.entries[i], params) {
            (CacheEntry::Conv { conv, preact }, LayerParams::Conv { weights, .. }) => {
                if layer.activation == Activation::Relu {
                    grad = relu_backward(&grad, preact)?;
                }
                let (gx, gw, gb) =
                    conv2d_backward(&grad, conv, layer, weights).map_err(|e| at_layer(i, e))?;
                grads_rev.push(gb);
                grads_rev.push(gw);
                grad = gx;
            }
            (CacheEntry::Dense { input, preact }, LayerParams::Dense { weights, .. }) => {
                if layer.activation == Activation::Relu {
                    grad = relu_backward(&grad, preact)?;
                }
                let (gx, gw, gb) =
                    dense_backward(&grad, input, weights).map_err(|e| at_layer(i, e))?;
                grads_rev.push(gb);
                grads_rev.push(gw);
                grad = gx;
            }
            (CacheEntry::Pool(pc), _) => {
                grad = maxpool_backward(&grad, pc).map_err(|e| at_layer(i, e))?;
            }
            (CacheEntry::Flatten { in_shape }, _) => {
                grad = grad.reshape(in_shape.clone())?;
            }
            (CacheEntry::Dropout(dc), _) => {
                grad = dropout_backward(&grad, dc)?;
            }
            _ => {
                return Err(Error::Contract(format!(
                    "layer {i}: cache entry does not match layer kind"
                )))
            }
        }
    }
    grads_rev.reverse();
    Ok(grads_rev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mini_topology, paper_topology, LayerSpec, TopologyOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_net() -> Network<f32> {
        let topo = NetworkTopology::new(
            (8, 8, 2),
            vec![
                LayerSpec::conv(3, 1, 0, 3),
                LayerSpec::maxpool(2, 2),
                LayerSpec::flatten(),
                LayerSpec::dense(5, Activation::Relu),
                LayerSpec::dense(2, Activation::Identity),
            ],
        )
        .unwrap();
        Network::init(topo, 11).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = tiny_net();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let input = {
            let data = (0..128).map(|i| (i as f32 * 0.37).sin()).collect();
            TensorOf::new(vec![8, 8, 2], data).unwrap()
        };
        let cache = forward_full(&net, &input, Mode::Eval, &mut rng).unwrap();
        let sum: f32 = cache.probs.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(cache.probs.data().iter().all(|&p| p >= 0.0));
        // infer agrees with the cached forward in eval mode
        let probs = net.infer(&input).unwrap();
        assert_eq!(probs.data(), cache.probs.data());
    }

    #[test]
    fn backward_produces_one_grad_per_param() {
        let net = tiny_net();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let input = TensorOf::filled(&[8, 8, 2], 0.5f32);
        let cache = forward_full(&net, &input, Mode::Eval, &mut rng).unwrap();
        let grad_logits = TensorOf::from_vec(vec![1.0f32, -1.0]);
        let grads = backward_full(&net, &cache, &grad_logits).unwrap();
        let params = net.param_vec();
        assert_eq!(grads.len(), params.len());
        for (g, p) in grads.iter().zip(params.iter()) {
            assert_eq!(g.shape(), p.shape());
        }
    }

    #[test]
    fn param_names_follow_layer_order() {
        let topo = paper_topology(TopologyOptions::default());
        let net: Network<f32> = Network::init(topo, 0).unwrap();
        let names = net.param_names();
        assert_eq!(names.len(), 16); // 5 conv + 3 dense, weight+bias each
        assert_eq!(names[0], "conv1.weight");
        assert_eq!(names[9], "conv5.bias");
        assert_eq!(names[10], "dense1.weight");
        assert_eq!(names[15], "dense3.bias");
    }

    #[test]
    fn mini_param_count_matches_closed_form() {
        let net: Network<f32> = Network::init(mini_topology(TopologyOptions::default()), 1).unwrap();
        assert_eq!(net.param_count(), net.topology.param_count().unwrap());
        assert_eq!(net.param_count(), 166_498);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = tiny_net();
        let input = TensorOf::<f32>::zeros(&[4, 4, 2]);
        assert!(net.infer(&input).is_err());
    }
}
