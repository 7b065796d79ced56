//! Occlusion saliency: slide a uniform fill window over the input, measure
//! the drop in the positive-class probability, and accumulate per-pixel
//! importance. Three kernel scales are merged into one map.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rayon::prelude::*;
use std::path::Path;

/// What the occlusion window writes over the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Constant(f32),
    /// Per-channel values, normally the training-set mean.
    PerChannel([f32; 3]),
}

impl Fill {
    fn value(&self, channel: usize) -> f32 {
        match self {
            Fill::Constant(v) => *v,
            Fill::PerChannel(v) => v[channel.min(2)],
        }
    }
}

/// Per-channel mean over a set of input tensors (H x W x C).
pub fn dataset_mean_fill(inputs: &[Tensor]) -> Result<Fill> {
    if inputs.is_empty() {
        return Err(Error::Data("cannot compute a dataset mean from no inputs".into()));
    }
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for t in inputs {
        let [_, _, c] = *t.shape() else {
            return Err(Error::Contract("dataset mean expects rank-3 inputs".into()));
        };
        for px in t.data().chunks_exact(c) {
            for (ch, &v) in px.iter().enumerate().take(3) {
                sums[ch] += v as f64;
            }
        }
        count += t.len() / c;
    }
    Ok(Fill::PerChannel([
        (sums[0] / count as f64) as f32,
        (sums[1] / count as f64) as f32,
        (sums[2] / count as f64) as f32,
    ]))
}

#[derive(Debug, Clone)]
pub struct OcclusionConfig {
    /// Window side lengths, one map per entry.
    pub kernel_sizes: Vec<usize>,
    /// Grid stride per kernel; `None` means k/4 (floored, at least 1).
    pub stride: Option<usize>,
    pub fill: Fill,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            kernel_sizes: vec![32, 48, 64],
            stride: None,
            fill: Fill::Constant(0.5),
        }
    }
}

impl OcclusionConfig {
    pub fn stride_for(&self, k: usize) -> usize {
        self.stride.unwrap_or_else(|| (k / 4).max(1))
    }
}

/// Per-pixel importance grid. Raw per-scale maps may hold any finite values;
/// normalized and merged maps lie in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Window side this map came from, or `None` for the merged map.
    pub scale: Option<usize>,
}

impl Heatmap {
    fn zeros(width: usize, height: usize, scale: Option<usize>) -> Self {
        Heatmap {
            width,
            height,
            values: vec![0.0; width * height],
            scale,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Position of the maximum value; ties break to the first row-major index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 % self.width, best.0 / self.width)
    }

    /// Min-max normalize into [0, 1]; an all-equal map becomes all zeros.
    pub fn normalized(&self) -> Heatmap {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|&v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Heatmap {
            width: self.width,
            height: self.height,
            values,
            scale: self.scale,
        }
    }
}

/// Copy of `input` with the k x k window at (x, y) set to the fill value,
/// clipped at the image borders. The input is untouched.
pub fn occlude(input: &Tensor, x: usize, y: usize, k: usize, fill: Fill) -> Result<Tensor> {
    let [h, w, c] = *input.shape() else {
        return Err(Error::Contract("occlude expects an H x W x C tensor".into()));
    };
    if k > h || k > w {
        return Err(Error::Config(format!(
            "occlusion kernel {k} exceeds {h}x{w} image"
        )));
    }
    let mut out = input.clone();
    let data = out.data_mut();
    for yy in y..(y + k).min(h) {
        for xx in x..(x + k).min(w) {
            let base = (yy * w + xx) * c;
            for ch in 0..c {
                data[base + ch] = fill.value(ch);
            }
        }
    }
    Ok(out)
}

/// Grid positions along one axis: multiples of the stride, plus the
/// edge-snapped final position so the last row/column is always covered.
fn grid_positions(side: usize, k: usize, stride: usize) -> Vec<usize> {
    let last = side - k;
    let mut xs: Vec<usize> = (0..=last).step_by(stride).collect();
    if *xs.last().expect("grid is non-empty") != last {
        xs.push(last);
    }
    xs
}

/// Raw occlusion map at one kernel size. `model` maps an input tensor to the
/// positive-class probability; it is evaluated once on the clean input and
/// once per window position. Each window's probability drop is accrued to
/// every pixel it covers, then divided by the pixel's coverage count.
pub fn occlusion_map<M>(model: &M, input: &Tensor, k: usize, config: &OcclusionConfig) -> Result<Heatmap>
where
    M: Fn(&Tensor) -> Result<f32> + Sync,
{
    let [h, w, _] = *input.shape() else {
        return Err(Error::Contract("occlusion_map expects an H x W x C tensor".into()));
    };
    if k > h || k > w {
        return Err(Error::Config(format!(
            "occlusion kernel {k} exceeds {h}x{w} image"
        )));
    }
    let stride = config.stride_for(k);
    let p_clean = model(input)? as f64;

    let mut positions = Vec::new();
    for &y in grid_positions(h, k, stride).iter() {
        for &x in grid_positions(w, k, stride).iter() {
            positions.push((x, y));
        }
    }
    let scores: Vec<Result<f64>> = positions
        .par_iter()
        .map(|&(x, y)| {
            let occluded = occlude(input, x, y, k, config.fill)?;
            Ok(p_clean - model(&occluded)? as f64)
        })
        .collect();

    // deterministic accumulation in grid order
    let mut sum = Heatmap::zeros(w, h, Some(k));
    let mut coverage = vec![0u32; w * h];
    for ((x, y), score) in positions.into_iter().zip(scores) {
        let score = score?;
        for yy in y..y + k {
            for xx in x..x + k {
                sum.values[yy * w + xx] += score;
                coverage[yy * w + xx] += 1;
            }
        }
    }
    for (v, &c) in sum.values.iter_mut().zip(coverage.iter()) {
        if c > 0 {
            *v /= c as f64;
        }
    }
    Ok(sum)
}

/// Merged multi-scale map: each per-scale raw map is min-max normalized,
/// then pixels are averaged across scales. Returns the per-scale raw maps
/// alongside the merged map.
pub fn multiscale_map<M>(
    model: &M,
    input: &Tensor,
    config: &OcclusionConfig,
) -> Result<(Vec<Heatmap>, Heatmap)>
where
    M: Fn(&Tensor) -> Result<f32> + Sync,
{
    if config.kernel_sizes.is_empty() {
        return Err(Error::Config("at least one occlusion kernel size is required".into()));
    }
    let mut raw_maps = Vec::with_capacity(config.kernel_sizes.len());
    for &k in &config.kernel_sizes {
        raw_maps.push(occlusion_map(model, input, k, config)?);
    }
    let [h, w, _] = *input.shape() else { unreachable!() };
    let mut merged = Heatmap::zeros(w, h, None);
    for raw in &raw_maps {
        let norm = raw.normalized();
        for (m, v) in merged.values.iter_mut().zip(norm.values.iter()) {
            *m += v;
        }
    }
    let n = raw_maps.len() as f64;
    for m in merged.values.iter_mut() {
        *m /= n;
    }
    Ok((raw_maps, merged))
}

/// CSV heatmap: H rows of W comma-separated floats.
pub fn write_heatmap_csv(path: &Path, map: &Heatmap) -> Result<()> {
    let mut out = String::new();
    for row in map.values.chunks_exact(map.width) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// 8-bit grayscale PGM of a [0, 1] map: value = round(255 * v).
pub fn write_heatmap_pgm(path: &Path, map: &Heatmap) -> Result<()> {
    let gray: Vec<u8> = map
        .values
        .iter()
        .map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
        .collect();
    crate::preprocess::write_pgm(path, map.width, map.height, &gray)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_input(side: usize, v: f32) -> Tensor {
        Tensor::filled(&[side, side, 3], v)
    }

    /// A probe model that responds only to the mean brightness of a fixed region.
    fn region_model(x0: usize, y0: usize, side: usize) -> impl Fn(&Tensor) -> Result<f32> + Sync {
        move |t: &Tensor| {
            let [_, w, c] = *t.shape() else { unreachable!() };
            let mut sum = 0.0f64;
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    sum += t.data()[(y * w + x) * c] as f64;
                }
            }
            Ok((sum / (side * side) as f64) as f32)
        }
    }

    #[test]
    fn occlude_writes_only_the_window() {
        let input = constant_input(16, 1.0);
        let out = occlude(&input, 4, 6, 5, Fill::Constant(0.0)).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let expected = if (4..9).contains(&x) && (6..11).contains(&y) {
                    0.0
                } else {
                    1.0
                };
                assert_eq!(out.at3(y, x, 0), expected, "({x},{y})");
            }
        }
        // input untouched
        assert!(input.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn occlude_fill_matching_region_is_identity() {
        let input = constant_input(8, 0.5);
        let out = occlude(&input, 0, 0, 4, Fill::Constant(0.5)).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn occlude_whole_image() {
        let input = constant_input(8, 0.9);
        let out = occlude(&input, 0, 0, 8, Fill::Constant(0.1)).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.1).abs() < 1e-7));
    }

    #[test]
    fn occlude_clips_at_the_border() {
        let input = constant_input(300, 1.0);
        let out = occlude(&input, 290, 290, 32, Fill::Constant(0.0)).unwrap();
        let changed = out.data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(changed, 10 * 10 * 3);
    }

    #[test]
    fn oversized_kernel_is_config_error() {
        let input = constant_input(16, 0.0);
        assert!(matches!(
            occlude(&input, 0, 0, 17, Fill::Constant(0.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn constant_model_gives_zero_map() {
        let model = |_: &Tensor| Ok(0.7f32);
        let input = constant_input(32, 0.3);
        let map = occlusion_map(&model, &input, 8, &OcclusionConfig::default()).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_equal_to_fill_gives_zero_map() {
        let model = region_model(4, 4, 8);
        let input = constant_input(32, 0.5);
        let cfg = OcclusionConfig {
            fill: Fill::Constant(0.5),
            ..Default::default()
        };
        let map = occlusion_map(&model, &input, 8, &cfg).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn planted_region_attracts_argmax_at_every_scale() {
        // bright 40x40 region at (30, 20) in a dark 100x100 image
        let mut input = constant_input(100, 0.0);
        for y in 20..60 {
            for x in 30..70 {
                for c in 0..3 {
                    let idx = input.idx3(y, x, c);
                    input.data_mut()[idx] = 1.0;
                }
            }
        }
        let model = region_model(30, 20, 40);
        let cfg = OcclusionConfig {
            kernel_sizes: vec![32, 48, 64],
            stride: None,
            fill: Fill::Constant(0.0),
        };
        for &k in &cfg.kernel_sizes {
            let map = occlusion_map(&model, &input, k, &cfg).unwrap();
            let (x, y) = map.argmax();
            assert!(
                (30..70).contains(&x) && (20..60).contains(&y),
                "k = {k}: argmax at ({x},{y})"
            );
        }
        let (_, merged) = multiscale_map(&model, &input, &cfg).unwrap();
        let (x, y) = merged.argmax();
        assert!((30..70).contains(&x) && (20..60).contains(&y));
        assert!(merged.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn single_scale_merge_is_the_normalized_map() {
        let model = region_model(2, 2, 4);
        let mut input = constant_input(16, 0.0);
        for y in 2..6 {
            for x in 2..6 {
                let idx = input.idx3(y, x, 0);
                input.data_mut()[idx] = 1.0;
            }
        }
        let cfg = OcclusionConfig {
            kernel_sizes: vec![4],
            stride: None,
            fill: Fill::Constant(0.0),
        };
        let (raw, merged) = multiscale_map(&model, &input, &cfg).unwrap();
        assert_eq!(merged.values, raw[0].normalized().values);
    }

    #[test]
    fn all_zero_scales_merge_to_zero() {
        let model = |_: &Tensor| Ok(0.5f32);
        let input = constant_input(32, 0.3);
        let cfg = OcclusionConfig {
            kernel_sizes: vec![8, 16],
            ..Default::default()
        };
        let (_, merged) = multiscale_map(&model, &input, &cfg).unwrap();
        assert!(merged.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_snaps_the_last_position() {
        assert_eq!(grid_positions(10, 4, 4), vec![0, 4, 6]);
        assert_eq!(grid_positions(12, 4, 4), vec![0, 4, 8]);
        assert_eq!(grid_positions(4, 4, 2), vec![0]);
    }

    #[test]
    fn mean_fill_is_per_channel() {
        let mut a = Tensor::zeros(&[2, 2, 3]);
        for y in 0..2 {
            for x in 0..2 {
                let i = a.idx3(y, x, 0);
                a.data_mut()[i] = 1.0;
                a.data_mut()[i + 1] = 0.5;
            }
        }
        let fill = dataset_mean_fill(std::slice::from_ref(&a)).unwrap();
        match fill {
            Fill::PerChannel([r, g, b]) => {
                assert!((r - 1.0).abs() < 1e-6);
                assert!((g - 0.5).abs() < 1e-6);
                assert!(b.abs() < 1e-6);
            }
            other => panic!("expected per-channel fill, got {other:?}"),
        }
    }
}
