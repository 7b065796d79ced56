//! He-normal weight initialization: std = sqrt(2 / fan_in), biases zero,
//! fully deterministic under a seed.

use crate::error::Result;
use crate::nn::network::LayerParams;
use crate::nn::{LayerKind, LayerShape, NetworkTopology};
use crate::tensor::{Scalar, TensorOf};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Build the full parameter set for a topology. Samples are drawn in `f64`
/// and narrowed, so the same seed yields bit-identical parameters.
pub fn init_weights<T: Scalar>(topology: &NetworkTopology, seed: u64) -> Result<Vec<LayerParams<T>>> {
    let chain = topology.shape_chain()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(topology.layers.len());
    let mut prev = LayerShape::Volume {
        h: topology.input_shape.0,
        w: topology.input_shape.1,
        c: topology.input_shape.2,
    };
    for (layer, out) in topology.layers.iter().zip(chain.iter()) {
        let p = match (layer.kind, &prev, out) {
            (LayerKind::Conv, LayerShape::Volume { c, .. }, LayerShape::Volume { c: d, .. }) => {
                let k = layer.kernel_size;
                let fan_in = k * k * c;
                LayerParams::Conv {
                    weights: he_normal(&mut rng, &[k, k, *c, *d], fan_in),
                    bias: TensorOf::zeros(&[*d]),
                }
            }
            (LayerKind::Dense, LayerShape::Vector(fan_in), LayerShape::Vector(fan_out)) => {
                LayerParams::Dense {
                    weights: he_normal(&mut rng, &[*fan_in, *fan_out], *fan_in),
                    bias: TensorOf::zeros(&[*fan_out]),
                }
            }
            _ => LayerParams::None,
        };
        params.push(p);
        prev = out.clone();
    }
    Ok(params)
}

fn he_normal<T: Scalar, R: rand::Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> TensorOf<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("std is finite and positive");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(dist.sample(rng)))
        .collect();
    TensorOf::new(shape.to_vec(), data).expect("shape matches sample count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mini_topology, TopologyOptions};
    use rand::SeedableRng;

    #[test]
    fn std_matches_he_formula() {
        // fan_in 9 -> std = sqrt(2/9) ~= 0.4714, estimated over 1e5 samples
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: TensorOf<f32> = he_normal(&mut rng, &[100_000], 9);
        let mean: f64 = t.data().iter().map(|&v| v as f64).sum::<f64>() / 1e5;
        let var: f64 = t
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / 1e5;
        let std = var.sqrt();
        let expected = (2.0f64 / 9.0).sqrt();
        assert!(
            (std - expected).abs() / expected < 0.02,
            "std = {std}, expected {expected}"
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let topo = mini_topology(TopologyOptions::default());
        let a: Vec<LayerParams<f32>> = init_weights(&topo, 99).unwrap();
        let b: Vec<LayerParams<f32>> = init_weights(&topo, 99).unwrap();
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(b.iter()) {
            match (pa, pb) {
                (
                    LayerParams::Conv { weights: wa, bias: ba },
                    LayerParams::Conv { weights: wb, bias: bb },
                )
                | (
                    LayerParams::Dense { weights: wa, bias: ba },
                    LayerParams::Dense { weights: wb, bias: bb },
                ) => {
                    assert_eq!(wa.data(), wb.data());
                    assert_eq!(ba.data(), bb.data());
                }
                (LayerParams::None, LayerParams::None) => {}
                other => panic!("parameter kinds diverged: {other:?}"),
            }
        }
    }

    #[test]
    fn biases_are_exactly_zero() {
        let topo = mini_topology(TopologyOptions::default());
        let params: Vec<LayerParams<f32>> = init_weights(&topo, 3).unwrap();
        for p in &params {
            match p {
                LayerParams::Conv { bias, .. } | LayerParams::Dense { bias, .. } => {
                    assert!(bias.data().iter().all(|&v| v == 0.0));
                }
                LayerParams::None => {}
            }
        }
    }
}
