//! Linear RGB rasters, unit-norm illuminants, pixel masks and PNG I/O.
//!
//! Every pixel value is held as `f64` in linear radiometric units. Files are
//! PNG only; 8- and 16-bit RGB/RGBA/gray are accepted on load (alpha dropped,
//! gray replicated) and 8- or 16-bit RGB is written on save.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb as PxRgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One linear RGB triple.
pub type Rgb = [f64; 3];

/// Norm below which a vector has no usable direction.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Config(format!(
                "pixel buffer holds {} pixels, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|px| px.iter().any(|v| !v.is_finite() || *v < 0.0))
        {
            return Err(Error::Config(format!(
                "pixel {} = {:?} is negative or not finite",
                i, data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: Rgb) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Rgb,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    /// Every channel multiplied by `k` (exposure change).
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data
                .iter()
                .map(|p| [p[0] * k, p[1] * k, p[2] * k])
                .collect(),
        )
    }

    /// Per-pixel map; the result is validated like any constructed image.
    pub fn map(&self, mut f: impl FnMut(Rgb) -> Rgb) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|p| f(*p)).collect(),
        )
    }

    pub fn max_value(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|p| p.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Unit-norm RGB direction with nonnegative components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Illuminant([f64; 3]);

impl Illuminant {
    /// The neutral illuminant (1,1,1)/√3.
    pub fn white() -> Self {
        normalize_to_unit([1.0, 1.0, 1.0]).expect("white is not degenerate")
    }

    pub fn rgb(&self) -> Rgb {
        self.0
    }

    pub fn component(&self, k: usize) -> f64 {
        self.0[k]
    }
}

impl TryFrom<[f64; 3]> for Illuminant {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        normalize_to_unit(v)
    }
}

impl From<Illuminant> for [f64; 3] {
    fn from(l: Illuminant) -> Self {
        l.0
    }
}

/// Scale a nonnegative vector to unit Euclidean norm.
pub fn normalize_to_unit(v: Rgb) -> Result<Illuminant> {
    if v.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Config(format!(
            "illuminant components must be finite and nonnegative, got {v:?}"
        )));
    }
    // summing the squares in sorted order makes the result exactly
    // equivariant under channel permutations
    let mut sq = v.map(|c| c * c);
    sq.sort_by(f64::total_cmp);
    let norm = (sq[0] + sq[1] + sq[2]).sqrt();
    if norm < DEGENERATE_NORM {
        return Err(Error::DegenerateVector {
            threshold: DEGENERATE_NORM,
        });
    }
    Ok(Illuminant([v[0] / norm, v[1] / norm, v[2] / norm]))
}

/// One flag per pixel; `true` marks membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Config(format!(
                "mask holds {} flags, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn union(&self, other: &PixelMask) -> Result<PixelMask> {
        check_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    pub fn intersects(&self, other: &PixelMask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b)
    }
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Pixel encoding used for files on disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    #[default]
    Linear,
    Srgb,
}

impl FromStr for Transfer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Transfer::Linear),
            "srgb" => Ok(Transfer::Srgb),
            other => Err(Error::Config(format!("unknown transfer `{other}`"))),
        }
    }
}

impl fmt::Display for Transfer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transfer::Linear => "linear",
            Transfer::Srgb => "srgb",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// sRGB electro-optical decoding of one encoded value in [0,1].
pub fn srgb_to_linear(e: f64) -> f64 {
    if e <= 0.04045 {
        e / 12.92
    } else {
        ((e + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_to_linear`].
pub fn linear_to_srgb(l: f64) -> f64 {
    if l <= 0.0031308 {
        l * 12.92
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    }
}

fn decode_value(v: f64, transfer: Transfer) -> f64 {
    match transfer {
        Transfer::Linear => v,
        Transfer::Srgb => srgb_to_linear(v),
    }
}

fn encode_value(v: f64, transfer: Transfer) -> f64 {
    let v = v.clamp(0.0, 1.0);
    match transfer {
        Transfer::Linear => v,
        Transfer::Srgb => linear_to_srgb(v),
    }
}

fn from_dynamic(img: DynamicImage, transfer: Transfer) -> Result<LinearImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<Rgb> = match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => img
            .to_rgb8()
            .pixels()
            .map(|p| p.0.map(|c| decode_value(f64::from(c) / 255.0, transfer)))
            .collect(),
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .to_rgb16()
            .pixels()
            .map(|p| p.0.map(|c| decode_value(f64::from(c) / 65535.0, transfer)))
            .collect(),
        other => {
            return Err(Error::Format(format!(
                "unsupported color type {:?}",
                other.color()
            )))
        }
    };
    LinearImage::new(w, h, data)
}

fn map_image_error(path: &Path, err: image::ImageError) -> Error {
    match err {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Format(other.to_string()),
    }
}

/// Load a PNG, scale to [0,1] by bit depth and optionally undo the sRGB curve.
pub fn load_image(path: impl AsRef<Path>, transfer: Transfer) -> Result<LinearImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| map_image_error(path, e))?;
    from_dynamic(img, transfer)
}

pub fn decode_png(bytes: &[u8], transfer: Transfer) -> Result<LinearImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    from_dynamic(img, transfer)
}

/// Width and height from a PNG header without decoding the pixels.
pub fn png_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
    let reader = image::ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((w as usize, h as usize))
}

/// Encode as RGB PNG; channels are clipped to [0,1] before quantization.
pub fn encode_png(img: &LinearImage, transfer: Transfer, depth: BitDepth) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut out = Cursor::new(Vec::new());
    let quantize = |v: f64| (encode_value(v, transfer) * depth.max_code()).round();
    let written = match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = img
                .pixels()
                .iter()
                .flat_map(|p| p.map(|c| quantize(c) as u8))
                .collect();
            ImageBuffer::<PxRgb<u8>, _>::from_raw(w, h, raw)
                .expect("buffer sized from image")
                .write_to(&mut out, ImageFormat::Png)
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = img
                .pixels()
                .iter()
                .flat_map(|p| p.map(|c| quantize(c) as u16))
                .collect();
            ImageBuffer::<PxRgb<u16>, _>::from_raw(w, h, raw)
                .expect("buffer sized from image")
                .write_to(&mut out, ImageFormat::Png)
        }
    };
    written.map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn save_image(
    img: &LinearImage,
    path: impl AsRef<Path>,
    transfer: Transfer,
    depth: BitDepth,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img, transfer, depth)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Standalone reference for the sRGB decoding curve, written against the
    // published piecewise definition rather than the library helper.
    fn reference_srgb_decode(code: u8) -> f64 {
        let c = code as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            let base: f64 = (c + 0.055) / 1.055;
            (base.ln() * 2.4).exp()
        }
    }

    fn write_png8(dir: &Path, name: &str, px: [u8; 3]) -> std::path::PathBuf {
        let path = dir.join(name);
        ImageBuffer::<PxRgb<u8>, _>::from_raw(1, 1, px.to_vec())
            .unwrap()
            .save_with_format(&path, ImageFormat::Png)
            .unwrap();
        path
    }

    #[test]
    fn sixteen_bit_full_scale_red() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red16.png");
        ImageBuffer::<PxRgb<u16>, _>::from_raw(1, 1, vec![65535u16, 0, 0])
            .unwrap()
            .save_with_format(&path, ImageFormat::Png)
            .unwrap();
        let img = load_image(&path, Transfer::Linear).unwrap();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn srgb_black_and_mid_gray() {
        let dir = tempfile::tempdir().unwrap();
        let black = load_image(write_png8(dir.path(), "k.png", [0, 0, 0]), Transfer::Srgb).unwrap();
        assert_eq!(black.get(0, 0), [0.0; 3]);

        let gray = load_image(write_png8(dir.path(), "g.png", [128; 3]), Transfer::Srgb).unwrap();
        let want = reference_srgb_decode(128);
        for c in gray.get(0, 0) {
            assert!((c - want).abs() < 1e-12, "{c} vs {want}");
        }
        assert!((want - 0.215_860_5).abs() < 1e-6);
    }

    #[test]
    fn gray_and_alpha_inputs_become_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let luma = dir.path().join("luma.png");
        ImageBuffer::<image::Luma<u8>, _>::from_raw(1, 1, vec![51u8])
            .unwrap()
            .save_with_format(&luma, ImageFormat::Png)
            .unwrap();
        assert_eq!(
            load_image(&luma, Transfer::Linear).unwrap().get(0, 0),
            [0.2; 3]
        );

        let rgba = dir.path().join("rgba.png");
        ImageBuffer::<image::Rgba<u8>, _>::from_raw(1, 1, vec![255u8, 0, 51, 7])
            .unwrap()
            .save_with_format(&rgba, ImageFormat::Png)
            .unwrap();
        assert_eq!(
            load_image(&rgba, Transfer::Linear).unwrap().get(0, 0),
            [1.0, 0.0, 0.2]
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/nonexistent/nope.png", Transfer::Linear).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn garbage_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(
            load_image(&path, Transfer::Linear),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn save_clips_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.png");
        let img = LinearImage::filled(2, 2, [1.7, 0.5, 0.0]).unwrap();
        save_image(&img, &path, Transfer::Linear, BitDepth::Sixteen).unwrap();
        let back = load_image(&path, Transfer::Linear).unwrap();
        assert_eq!(back.get(1, 1)[0], 1.0);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let img = LinearImage::filled(1, 1, [0.5; 3]).unwrap();
        let err = save_image(
            &img,
            "/nonexistent/dir/x.png",
            Transfer::Linear,
            BitDepth::Eight,
        );
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_to_unit([2.0, 0.0, 0.0]).unwrap().rgb(),
            [1.0, 0.0, 0.0]
        );
        let w = normalize_to_unit([1.0, 1.0, 1.0]).unwrap().rgb();
        for c in w {
            assert!((c - 0.5774).abs() < 1e-4);
        }
        assert!(matches!(
            normalize_to_unit([0.0; 3]),
            Err(Error::DegenerateVector { .. })
        ));
        assert!(matches!(
            normalize_to_unit([-1.0, 0.0, 0.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn image_rejects_bad_pixels() {
        assert!(LinearImage::new(1, 1, vec![[f64::NAN, 0.0, 0.0]]).is_err());
        assert!(LinearImage::new(1, 1, vec![[-0.1, 0.0, 0.0]]).is_err());
        assert!(LinearImage::new(2, 1, vec![[0.0; 3]]).is_err());
        assert!(LinearImage::new(0, 0, vec![]).is_err());
    }

    #[test]
    fn illuminant_deserializes_normalized() {
        let l: Illuminant = serde_json::from_str("[3.0, 0.0, 4.0]").unwrap();
        assert_eq!(l.rgb(), [0.6, 0.0, 0.8]);
        assert!(serde_json::from_str::<Illuminant>("[0.0, 0.0, 0.0]").is_err());
    }
}
