//! Image preprocessing: crop the reverse side out of a two-sided auction
//! photograph, isotropically resize to the network input scale, and scale
//! pixel values to [0, 1]. Also the PPM/PNG/PGM file plumbing.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data(format!("degenerate image {width}x{height}")));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::Data(format!(
                "pixel buffer of {} bytes does not match {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(RawImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        RawImage {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Near-zero pixel variance marks crops that probably missed the coin
    /// (blank background, distorted layout). Flagged, never corrected.
    pub fn is_suspect(&self) -> bool {
        let n = self.pixels.len() as f64;
        let mean = self.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
        let var = self
            .pixels
            .iter()
            .map(|&p| (p as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        var < 1.0
    }
}

/// How the photograph is laid out: `LeftRight` pairs show the obverse on the
/// left and the reverse on the right; `Single` images are already just one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    LeftRight,
    Single,
}

impl Layout {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "left-right" => Ok(Layout::LeftRight),
            "single" => Ok(Layout::Single),
            other => Err(Error::Config(format!("unknown image layout {other:?}"))),
        }
    }
}

/// Crop the square region containing the reverse: for `LeftRight`, the
/// centered square within the right half; for `Single`, the centered square
/// of the whole image. No resampling happens here, output pixels are a
/// subset of input pixels.
pub fn crop_reverse(img: &RawImage, layout: Layout) -> Result<RawImage> {
    let (x0, region_w) = match layout {
        Layout::LeftRight => {
            if img.width < 2 {
                return Err(Error::Data(format!(
                    "left-right layout needs width >= 2, got {}",
                    img.width
                )));
            }
            let x0 = img.width / 2;
            (x0, img.width - x0)
        }
        Layout::Single => (0, img.width),
    };
    let side = region_w.min(img.height);
    if side == 0 {
        return Err(Error::Data("zero-area crop".into()));
    }
    let x_off = x0 + (region_w - side) / 2;
    let y_off = (img.height - side) / 2;

    let mut pixels = Vec::with_capacity(3 * side * side);
    for y in 0..side {
        let row = 3 * ((y_off + y) * img.width + x_off);
        pixels.extend_from_slice(&img.pixels[row..row + 3 * side]);
    }
    RawImage::new(side, side, pixels)
}

/// Bilinear resize of a square image to `target` x `target` with one uniform
/// scale factor. Sampling aligns pixel centers, clamping at the borders, so
/// constant images stay constant and outputs never leave the input range.
pub fn isotropic_resize(img: &RawImage, target: usize) -> Result<RawImage> {
    if img.width != img.height {
        return Err(Error::Contract(format!(
            "isotropic_resize expects a square input, got {}x{}",
            img.width, img.height
        )));
    }
    if target == 0 {
        return Err(Error::Config("resize target must be >= 1".into()));
    }
    if target == img.width {
        return Ok(img.clone());
    }
    let side = img.width;
    let scale = side as f64 / target as f64;
    let mut out = RawImage::filled(target, target, [0, 0, 0]);

    let src_coord = |d: usize| -> (usize, usize, f64) {
        let s = (d as f64 + 0.5) * scale - 0.5;
        let s = s.clamp(0.0, (side - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(side - 1);
        (lo, hi, s - lo as f64)
    };

    for y in 0..target {
        let (y0, y1, fy) = src_coord(y);
        for x in 0..target {
            let (x0, x1, fx) = src_coord(x);
            let p00 = img.get(x0, y0);
            let p10 = img.get(x1, y0);
            let p01 = img.get(x0, y1);
            let p11 = img.get(x1, y1);
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                rgb[c] = (v + 0.5).floor() as u8;
            }
            out.set(x, y, rgb);
        }
    }
    Ok(out)
}

/// Pixel values scaled to [0, 1] as an H x W x 3 float tensor.
pub fn to_input_tensor(img: &RawImage) -> Tensor {
    let data: Vec<f32> = img.pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Tensor::new(vec![img.height, img.width, 3], data).expect("pixel count matches shape")
}

/// The standard pipeline: crop, resize to `target`, scale to [0, 1].
pub fn prepare(img: &RawImage, layout: Layout, target: usize) -> Result<Tensor> {
    let cropped = crop_reverse(img, layout)?;
    let resized = isotropic_resize(&cropped, target)?;
    Ok(to_input_tensor(&resized))
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Read PNG or binary PPM, dispatching on the file extension.
pub fn read_image(path: &Path) -> Result<RawImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => read_ppm(path),
        Some("png") => read_png(path),
        other => Err(Error::Data(format!(
            "unsupported image extension {other:?} for {}",
            path.display()
        ))),
    }
}

pub fn write_image(path: &Path, img: &RawImage) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => write_ppm(path, img),
        Some("png") => write_png(path, img),
        other => Err(Error::Data(format!(
            "unsupported image extension {other:?} for {}",
            path.display()
        ))),
    }
}

fn read_png(path: &Path) -> Result<RawImage> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("decoding {}: {e}", path.display())))?
        .to_rgb8();
    RawImage::new(img.width() as usize, img.height() as usize, img.into_raw())
}

fn write_png(path: &Path, img: &RawImage) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .ok_or_else(|| Error::Data("pixel buffer does not match dimensions".into()))?;
    buf.save(path)
        .map_err(|e| Error::Data(format!("encoding {}: {e}", path.display())))
}

/// Binary PPM (P6), maxval 255. Header tokens may be separated by any
/// whitespace and `#` comments.
pub fn read_ppm(path: &Path) -> Result<RawImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Data("unexpected end of PPM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P6" {
        return Err(bad("not a binary PPM (P6)"));
    }
    let width: usize = token(&bytes)?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token(&bytes)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = token(&bytes)?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    pos += 1; // single whitespace after maxval
    let need = 3 * width * height;
    if bytes.len() < pos + need {
        return Err(bad("truncated pixel data"));
    }
    RawImage::new(width, height, bytes[pos..pos + need].to_vec())
}

pub fn write_ppm(path: &Path, img: &RawImage) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let io_err = |e| Error::io(format!("writing {}", path.display()), e);
    write!(f, "P6\n{} {}\n255\n", img.width, img.height).map_err(io_err)?;
    f.write_all(&img.pixels).map_err(io_err)
}

/// Binary PGM (P5), 8-bit grayscale.
pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    if gray.len() != width * height {
        return Err(Error::Contract(format!(
            "PGM buffer of {} bytes does not match {width}x{height}",
            gray.len()
        )));
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let io_err = |e| Error::io(format!("writing {}", path.display()), e);
    write!(f, "P5\n{width} {height}\n255\n").map_err(io_err)?;
    f.write_all(gray).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: usize, h: usize) -> RawImage {
        let mut img = RawImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, [(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        img
    }

    #[test]
    fn left_right_crop_takes_right_half() {
        let mut img = RawImage::filled(800, 400, [1, 1, 1]);
        // mark pixel at x=400 (first column of the right half)
        img.set(400, 0, [9, 9, 9]);
        let crop = crop_reverse(&img, Layout::LeftRight).unwrap();
        assert_eq!((crop.width, crop.height), (400, 400));
        assert_eq!(crop.get(0, 0), [9, 9, 9]);
    }

    #[test]
    fn odd_width_crop_centers_vertically() {
        // 700x400: right half is 350 wide, square from y in [25, 375)
        let img = gradient_image(700, 400);
        let crop = crop_reverse(&img, Layout::LeftRight).unwrap();
        assert_eq!((crop.width, crop.height), (350, 350));
        assert_eq!(crop.get(0, 0), img.get(350, 25));
        assert_eq!(crop.get(349, 349), img.get(699, 374));
    }

    #[test]
    fn single_layout_square_is_identity() {
        let img = gradient_image(64, 64);
        let crop = crop_reverse(&img, Layout::Single).unwrap();
        assert_eq!(crop, img);
    }

    #[test]
    fn crop_pixels_are_subset_of_input() {
        let img = gradient_image(100, 60);
        let crop = crop_reverse(&img, Layout::LeftRight).unwrap();
        assert_eq!((crop.width, crop.height), (50, 50));
        for y in 0..50 {
            for x in 0..50 {
                assert_eq!(crop.get(x, y), img.get(50 + x, 5 + y));
            }
        }
    }

    #[test]
    fn resize_preserves_constant_images() {
        let img = RawImage::filled(600, 600, [77, 120, 200]);
        let down = isotropic_resize(&img, 300).unwrap();
        assert!(down.pixels.chunks(3).all(|p| p == [77, 120, 200]));
        let small = RawImage::filled(150, 150, [13, 14, 15]);
        let up = isotropic_resize(&small, 300).unwrap();
        assert_eq!((up.width, up.height), (300, 300));
        assert!(up.pixels.chunks(3).all(|p| p == [13, 14, 15]));
    }

    #[test]
    fn checkerboard_upscale_interpolates_interior() {
        let mut img = RawImage::filled(2, 2, [0, 0, 0]);
        img.set(1, 0, [255, 255, 255]);
        img.set(0, 1, [255, 255, 255]);
        let up = isotropic_resize(&img, 4).unwrap();
        for (x, y) in [(1usize, 1usize), (2, 1), (1, 2), (2, 2)] {
            let v = up.get(x, y)[0];
            assert!(v > 0 && v < 255, "({x},{y}) = {v}");
        }
    }

    #[test]
    fn resize_stays_in_input_range() {
        let img = gradient_image(10, 10);
        let lo = *img.pixels.iter().min().unwrap();
        let hi = *img.pixels.iter().max().unwrap();
        let up = isotropic_resize(&img, 23).unwrap();
        assert!(up.pixels.iter().all(|&p| p >= lo && p <= hi));
    }

    #[test]
    fn input_tensor_scales_to_unit_interval() {
        let mut img = RawImage::filled(2, 2, [0, 0, 0]);
        img.set(1, 1, [255, 128, 0]);
        let t = to_input_tensor(&img);
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(t.at3(1, 1, 0), 1.0);
        assert_eq!(t.at3(0, 0, 0), 0.0);
        assert!((t.at3(1, 1, 1) - 128.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn prepare_emits_network_shape() {
        let img = gradient_image(640, 480);
        let t = prepare(&img, Layout::LeftRight, 300).unwrap();
        assert_eq!(t.shape(), &[300, 300, 3]);
        // deterministic: same bytes, same tensor
        let t2 = prepare(&img, Layout::LeftRight, 300).unwrap();
        assert_eq!(t.data(), t2.data());
    }

    #[test]
    fn ppm_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let img = gradient_image(33, 17);
        write_ppm(&path, &img).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    #[test]
    fn ppm_reader_handles_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        std::fs::write(&path, b"P6\n# a comment\n2 1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        let img = read_ppm(&path).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.get(1, 0), [4, 5, 6]);
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = gradient_image(20, 20);
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn truncated_ppm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        std::fs::write(&path, b"P6\n4 4\n255\n\x00\x00").unwrap();
        assert!(read_ppm(&path).is_err());
    }

    #[test]
    fn constant_crop_is_suspect() {
        assert!(RawImage::filled(50, 50, [128, 128, 128]).is_suspect());
        assert!(!gradient_image(50, 50).is_suspect());
    }
}
