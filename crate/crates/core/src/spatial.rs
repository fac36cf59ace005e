//! Pixel-wise illuminant estimation from a global estimator.
//!
//! The image is cut into β×β blocks, the wrapped estimator runs on every
//! block, each result is placed at its block center, and the sparse set of
//! estimates is spread over the image with a Gaussian kernel and normalized
//! per pixel. Optionally each block estimate is weighted by a confidence map
//! derived from how far each pixel is from white after mean normalization.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorId, Region};
use crate::image::{
    check_dims, decode_png, encode_png, normalize_to_unit, BitDepth, Illuminant, LinearImage,
    PixelMask, Rgb, Transfer,
};

pub const DEFAULT_BETA: usize = 8;
pub const DEFAULT_SIGMA: f64 = 24.0;
pub const DEFAULT_SATURATION: f64 = 0.98;

/// Illuminant components are clamped to this before von Kries division.
pub const MIN_CORRECTION_COMPONENT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub center: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrid {
    pub beta: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major order.
    pub blocks: Vec<Block>,
}

/// Tile a `width`×`height` image with β×β blocks. Remainder pixels on the
/// right and bottom form smaller border blocks with their own centers.
pub fn blockify(width: usize, height: usize, beta: usize) -> Result<BlockGrid> {
    if beta < 2 {
        return Err(Error::Config(format!(
            "block size must be >= 2, got {beta}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "cannot tile a {width}x{height} image"
        )));
    }
    let mut blocks = Vec::with_capacity(width.div_ceil(beta) * height.div_ceil(beta));
    for y0 in (0..height).step_by(beta) {
        let h = beta.min(height - y0);
        for x0 in (0..width).step_by(beta) {
            let w = beta.min(width - x0);
            blocks.push(Block {
                x0,
                y0,
                width: w,
                height: h,
                center: (x0 + w / 2, y0 + h / 2),
            });
        }
    }
    Ok(BlockGrid {
        beta,
        width,
        height,
        blocks,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseEntry {
    pub x: usize,
    pub y: usize,
    pub illuminant: Illuminant,
    pub weight: f64,
    /// Set when the estimator failed on this block and the fallback was used.
    pub degenerate: bool,
}

/// Estimates at isolated pixels of an otherwise empty raster.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseField {
    pub width: usize,
    pub height: usize,
    pub entries: Vec<SparseEntry>,
}

impl SparseField {
    pub fn new(width: usize, height: usize, entries: Vec<SparseEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.x >= width || e.y >= height {
                return Err(Error::Config(format!(
                    "entry at ({}, {}) outside {width}x{height}",
                    e.x, e.y
                )));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::Config(format!(
                    "entry weight {} is invalid",
                    e.weight
                )));
            }
            if !seen.insert((e.x, e.y)) {
                return Err(Error::Config(format!(
                    "duplicate entry at ({}, {})",
                    e.x, e.y
                )));
            }
        }
        Ok(Self {
            width,
            height,
            entries,
        })
    }

    pub fn degenerate_count(&self) -> usize {
        self.entries.iter().filter(|e| e.degenerate).count()
    }
}

/// Dense per-pixel unit-norm illuminant estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminantField {
    width: usize,
    height: usize,
    data: Vec<Illuminant>,
    /// Pixels outside every entry's kernel support, filled from the nearest entry.
    pub fallback_pixels: usize,
}

impl IlluminantField {
    pub fn new(width: usize, height: usize, data: Vec<Illuminant>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Config(format!(
                "field buffer of {} pixels does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            fallback_pixels: 0,
        })
    }

    pub fn constant(width: usize, height: usize, l: Illuminant) -> Result<Self> {
        Self::new(width, height, vec![l; width * height])
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
    pub fn get(&self, x: usize, y: usize) -> Illuminant {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[Illuminant] {
        &self.data
    }

    /// Field as an RGB raster of its unit vectors.
    pub fn to_image(&self) -> LinearImage {
        LinearImage::new(
            self.width,
            self.height,
            self.data.iter().map(|l| l.rgb()).collect(),
        )
        .expect("unit vectors are valid pixels")
    }

    /// 16-bit PNG holding each unit vector scaled by 65535.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        encode_png(&self.to_image(), Transfer::Linear, BitDepth::Sixteen)
    }

    /// Decode a field raster. Pixels that are all zero carry no direction;
    /// they are set to white and reported as `false` in the validity mask.
    pub fn decode_png(bytes: &[u8]) -> Result<(IlluminantField, PixelMask)> {
        Self::from_image(&decode_png(bytes, Transfer::Linear)?)
    }

    pub fn from_image(img: &LinearImage) -> Result<(IlluminantField, PixelMask)> {
        let (w, h) = img.dims();
        let mut valid = vec![true; w * h];
        let white = Illuminant::white();
        let data = img
            .pixels()
            .iter()
            .zip(valid.iter_mut())
            .map(|(px, ok)| match normalize_to_unit(*px) {
                Ok(l) => l,
                Err(_) => {
                    *ok = false;
                    white
                }
            })
            .collect();
        Ok((
            IlluminantField::new(w, h, data)?,
            PixelMask::new(w, h, valid)?,
        ))
    }
}

/// Per-pixel scalar raster (whiteness or confidence).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Pixels assigned by a degenerate-input rule.
    pub flagged_pixels: usize,
    /// Whole map replaced by a degenerate-input rule.
    pub degenerate: bool,
}

impl ScalarMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    #[default]
    Off,
    Whiteness,
}

impl FromStr for Confidence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Confidence::Off),
            "whiteness" => Ok(Confidence::Whiteness),
            other => Err(Error::Config(format!("unknown confidence mode `{other}`"))),
        }
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::Off => "off",
            Confidence::Whiteness => "whiteness",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PipelineParams {
    pub beta: usize,
    pub sigma: f64,
    pub estimator: EstimatorId,
    pub confidence: Confidence,
    pub fallback: Illuminant,
    /// Pixels with any channel at or above this are left out of block
    /// statistics. `None` keeps every pixel.
    pub saturation_threshold: Option<f64>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            sigma: DEFAULT_SIGMA,
            estimator: EstimatorId::GrayWorld,
            confidence: Confidence::Off,
            fallback: Illuminant::white(),
            saturation_threshold: Some(DEFAULT_SATURATION),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 2 {
            return Err(Error::Config(format!(
                "beta must be >= 2, got {}",
                self.beta
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if let Some(t) = self.saturation_threshold {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!(
                    "saturation threshold must be positive, got {t}"
                )));
            }
        }
        self.estimator.validate()
    }
}

/// Pixels with any channel `>= threshold`.
pub fn saturation_mask(img: &LinearImage, threshold: f64) -> PixelMask {
    PixelMask::from_fn(img.width(), img.height(), |x, y| {
        img.get(x, y).iter().any(|c| *c >= threshold)
    })
}

/// Run the estimator on every block and place the results at block centers.
/// Blocks where the estimator has no usable answer get `fallback` and are
/// flagged. All weights start at 1.
pub fn sparse_estimates(
    img: &LinearImage,
    grid: &BlockGrid,
    id: &EstimatorId,
    fallback: Illuminant,
    exclude: Option<&PixelMask>,
) -> Result<SparseField> {
    check_dims((grid.width, grid.height), img.dims())?;
    id.validate()?;
    let entries = grid
        .blocks
        .par_iter()
        .map(|b| {
            let mut region = Region::new(img, b.x0, b.y0, b.width, b.height)?;
            if let Some(mask) = exclude {
                region = region.with_exclusion(mask)?;
            }
            let (illuminant, degenerate) = match estimate(id, &region) {
                Ok(l) => (l, false),
                Err(e) if e.is_degenerate_estimate() => (fallback, true),
                Err(e) => return Err(e),
            };
            Ok(SparseEntry {
                x: b.center.0,
                y: b.center.1,
                illuminant,
                weight: 1.0,
                degenerate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SparseField::new(img.width(), img.height(), entries)
}

/// Kernel support radius in pixels: `ceil(3σ)`.
pub fn truncation_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Spread sparse estimates over the raster with the isotropic Gaussian
/// `exp(-(dx²+dy²)/2σ²) / 2πσ²` and normalize each pixel to unit norm.
///
/// The kernel is zero where `|dx|` or `|dy|` exceeds `ceil(3σ)`. Because it
/// is separable, entries sharing a row are first accumulated along x and the
/// row sums are then spread along y. Pixels with no entry in support take the
/// illuminant of the nearest positive-weight entry.
pub fn gaussian_interpolate(sparse: &SparseField, sigma: f64) -> Result<IlluminantField> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let max_weight = sparse.entries.iter().map(|e| e.weight).fold(0.0, f64::max);
    if max_weight <= 0.0 {
        return Err(Error::EmptyField);
    }
    let (w, h) = (sparse.width, sparse.height);
    let r = truncation_radius(sigma);
    let taps: Vec<f64> = (0..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let amplitude = 1.0 / (2.0 * PI * sigma * sigma);

    let mut rows: BTreeMap<usize, Vec<&SparseEntry>> = BTreeMap::new();
    for e in sparse.entries.iter().filter(|e| e.weight > 0.0) {
        rows.entry(e.y).or_default().push(e);
    }

    // Horizontal pass: one accumulator row per distinct entry row.
    let row_sums: Vec<(usize, Vec<Rgb>)> = rows
        .into_par_iter()
        .map(|(y, entries)| {
            let mut acc = vec![[0.0; 3]; w];
            for e in entries {
                let wt = e.weight / max_weight;
                let l = e.illuminant.rgb();
                for (x, slot) in acc
                    .iter_mut()
                    .enumerate()
                    .take((e.x + r + 1).min(w))
                    .skip(e.x.saturating_sub(r))
                {
                    let g = wt * taps[x.abs_diff(e.x)];
                    for k in 0..3 {
                        slot[k] += g * l[k];
                    }
                }
            }
            (y, acc)
        })
        .collect();

    // Vertical pass, one output row at a time.
    let dense: Vec<Vec<Option<Illuminant>>> = (0..h)
        .into_par_iter()
        .map(|qy| {
            let mut acc = vec![[0.0; 3]; w];
            for (y, sums) in &row_sums {
                let dy = qy.abs_diff(*y);
                if dy > r {
                    continue;
                }
                let g = amplitude * taps[dy];
                for (slot, s) in acc.iter_mut().zip(sums) {
                    for k in 0..3 {
                        slot[k] += g * s[k];
                    }
                }
            }
            acc.into_iter().map(unit_direction).collect()
        })
        .collect();

    let mut fallback_pixels = 0;
    let mut data = Vec::with_capacity(w * h);
    for (qy, row) in dense.into_iter().enumerate() {
        for (qx, px) in row.into_iter().enumerate() {
            data.push(match px {
                Some(l) => l,
                None => {
                    fallback_pixels += 1;
                    nearest_entry(sparse, qx, qy)
                }
            });
        }
    }
    let mut field = IlluminantField::new(w, h, data)?;
    field.fallback_pixels = fallback_pixels;
    Ok(field)
}

/// Direction of an accumulated sum; `None` when nothing landed here.
fn unit_direction(v: Rgb) -> Option<Illuminant> {
    // Rescale by the largest component first: sums far below the generic
    // degeneracy threshold still carry a direction here.
    let max = v[0].max(v[1]).max(v[2]);
    if max > 0.0 && max.is_finite() {
        normalize_to_unit(v.map(|c| c / max)).ok()
    } else {
        None
    }
}

fn nearest_entry(sparse: &SparseField, x: usize, y: usize) -> Illuminant {
    sparse
        .entries
        .iter()
        .filter(|e| e.weight > 0.0)
        .min_by_key(|e| {
            let dx = e.x.abs_diff(x);
            let dy = e.y.abs_diff(y);
            dx * dx + dy * dy
        })
        .map(|e| e.illuminant)
        .expect("caller checked for a positive-weight entry")
}

/// Angle in radians between each mean-normalized pixel and (1,1,1).
///
/// Each channel is divided by its own mean over the whole image. Black
/// pixels have no direction and are assigned π/2.
pub fn whiteness_map(img: &LinearImage) -> Result<ScalarMap> {
    let n = (img.width() * img.height()) as f64;
    let mut mean = [0.0; 3];
    for px in img.pixels() {
        for k in 0..3 {
            mean[k] += px[k];
        }
    }
    for (k, m) in mean.iter_mut().enumerate() {
        *m /= n;
        if *m <= 0.0 {
            return Err(Error::DegenerateImage(format!("channel {k} has zero mean")));
        }
    }
    let mut flagged = 0;
    let values = img
        .pixels()
        .iter()
        .map(|px| {
            let t = [px[0] / mean[0], px[1] / mean[1], px[2] / mean[2]];
            let norm = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
            if norm == 0.0 {
                flagged += 1;
                return PI / 2.0;
            }
            let cross = [t[1] - t[2], t[2] - t[0], t[0] - t[1]];
            let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
            sin.atan2(t[0] + t[1] + t[2])
        })
        .collect();
    Ok(ScalarMap {
        width: img.width(),
        height: img.height(),
        values,
        flagged_pixels: flagged,
        degenerate: false,
    })
}

/// Gaussian of the whiteness map around its own mean:
/// `exp(-(W-μ)²/2s²) / 2πs²` with `s` the population standard deviation.
/// A map with `s < 1e-9` yields a uniform map of ones, marked degenerate.
pub fn confidence_map(whiteness: &ScalarMap) -> ScalarMap {
    let n = whiteness.values.len() as f64;
    let mu = whiteness.values.iter().sum::<f64>() / n;
    let var = whiteness
        .values
        .iter()
        .map(|v| (v - mu) * (v - mu))
        .sum::<f64>()
        / n;
    let sd = var.sqrt();
    let (values, degenerate) = if sd < 1e-9 {
        (vec![1.0; whiteness.values.len()], true)
    } else {
        let norm = 1.0 / (2.0 * PI * var);
        (
            whiteness
                .values
                .iter()
                .map(|v| norm * (-(v - mu) * (v - mu) / (2.0 * var)).exp())
                .collect(),
            false,
        )
    };
    ScalarMap {
        width: whiteness.width,
        height: whiteness.height,
        values,
        flagged_pixels: 0,
        degenerate,
    }
}

/// Normalized per-channel mean of the sparse estimates, weights ignored.
pub fn global_estimate(sparse: &SparseField) -> Result<Illuminant> {
    if sparse.entries.is_empty() {
        return Err(Error::EmptyField);
    }
    let mut sum = [0.0; 3];
    for e in &sparse.entries {
        let l = e.illuminant.rgb();
        for k in 0..3 {
            sum[k] += l[k];
        }
    }
    let n = sparse.entries.len() as f64;
    normalize_to_unit(sum.map(|s| s / n))
}

/// Everything one pipeline run produces.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub sparse: SparseField,
    /// `None` when only the global estimate was requested.
    pub field: Option<IlluminantField>,
    pub global: Illuminant,
    /// Set when confidence weighting was requested but the whiteness map was
    /// flat, so weighting had no effect.
    pub confidence_degenerate: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Pixelwise,
    Global,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixelwise" => Ok(Mode::Pixelwise),
            "global" => Ok(Mode::Global),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pixelwise => "pixelwise",
            Mode::Global => "global",
        })
    }
}

/// Full pipeline. `extra_exclude` adds pixels (e.g. sensor-saturated ones) to
/// the saturation exclusion derived from `params`.
pub fn run_pipeline(
    img: &LinearImage,
    params: &PipelineParams,
    mode: Mode,
    extra_exclude: Option<&PixelMask>,
) -> Result<PipelineOutput> {
    params.validate()?;
    let grid = blockify(img.width(), img.height(), params.beta)?;
    let exclude = match (
        params.saturation_threshold.map(|t| saturation_mask(img, t)),
        extra_exclude,
    ) {
        (Some(a), Some(b)) => Some(a.union(b)?),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b.clone()),
        (None, None) => None,
    };
    let mut sparse = sparse_estimates(
        img,
        &grid,
        &params.estimator,
        params.fallback,
        exclude.as_ref(),
    )?;
    let global = global_estimate(&sparse)?;
    let mut confidence_degenerate = false;
    if mode == Mode::Global {
        return Ok(PipelineOutput {
            sparse,
            field: None,
            global,
            confidence_degenerate,
        });
    }
    if params.confidence == Confidence::Whiteness {
        let conf = confidence_map(&whiteness_map(img)?);
        confidence_degenerate = conf.degenerate;
        for e in &mut sparse.entries {
            e.weight *= conf.get(e.x, e.y);
        }
    }
    let field = gaussian_interpolate(&sparse, params.sigma)?;
    Ok(PipelineOutput {
        sparse,
        field: Some(field),
        global,
        confidence_degenerate,
    })
}

/// Dense per-pixel estimate with the given parameters.
pub fn pixelwise_estimate(img: &LinearImage, params: &PipelineParams) -> Result<IlluminantField> {
    Ok(run_pipeline(img, params, Mode::Pixelwise, None)?
        .field
        .expect("pixelwise mode produces a field"))
}

/// Illuminant to divide out: one global vector or a per-pixel field.
#[derive(Clone, Copy, Debug)]
pub enum IlluminantSource<'a> {
    Global(Illuminant),
    Field(&'a IlluminantField),
}

impl From<Illuminant> for IlluminantSource<'_> {
    fn from(l: Illuminant) -> Self {
        IlluminantSource::Global(l)
    }
}

impl<'a> From<&'a IlluminantField> for IlluminantSource<'a> {
    fn from(f: &'a IlluminantField) -> Self {
        IlluminantSource::Field(f)
    }
}

/// Von Kries correction `out_k = in_k / (√3 · L_k)`.
///
/// The divisor is formed as `L_k / w` with `w` the white component, so the
/// white illuminant maps every pixel to itself bit for bit. Components below
/// [`MIN_CORRECTION_COMPONENT`] are clamped; the clamp count is returned.
pub fn apply_correction<'a>(
    img: &LinearImage,
    illuminant: impl Into<IlluminantSource<'a>>,
) -> Result<(LinearImage, usize)> {
    let white = Illuminant::white().component(0);
    let source = illuminant.into();
    if let IlluminantSource::Field(f) = source {
        check_dims(img.dims(), f.dims())?;
    }
    let mut clamped = 0;
    let mut data = Vec::with_capacity(img.pixels().len());
    for (i, px) in img.pixels().iter().enumerate() {
        let l = match source {
            IlluminantSource::Global(l) => l,
            IlluminantSource::Field(f) => f.pixels()[i],
        };
        let mut out = [0.0; 3];
        for k in 0..3 {
            let mut c = l.component(k);
            if c < MIN_CORRECTION_COMPONENT {
                c = MIN_CORRECTION_COMPONENT;
                clamped += 1;
            }
            out[k] = px[k] / (c / white);
        }
        data.push(out);
    }
    Ok((LinearImage::new(img.width(), img.height(), data)?, clamped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: Rgb) -> Illuminant {
        normalize_to_unit(v).unwrap()
    }

    fn entry(x: usize, y: usize, l: Rgb) -> SparseEntry {
        SparseEntry {
            x,
            y,
            illuminant: unit(l),
            weight: 1.0,
            degenerate: false,
        }
    }

    #[test]
    fn blockify_examples() {
        let g = blockify(16, 16, 8).unwrap();
        let centers: Vec<_> = g.blocks.iter().map(|b| b.center).collect();
        assert_eq!(centers, vec![(4, 4), (12, 4), (4, 12), (12, 12)]);

        let g = blockify(17, 8, 8).unwrap();
        assert_eq!(g.blocks.len(), 3);
        assert_eq!((g.blocks[2].width, g.blocks[2].height), (1, 8));
        assert_eq!(g.blocks[2].center, (16, 4));

        let g = blockify(8, 8, 8).unwrap();
        assert_eq!(g.blocks.len(), 1);
        assert_eq!(g.blocks[0].center, (4, 4));

        assert!(matches!(blockify(8, 8, 1), Err(Error::Config(_))));
        assert_eq!(blockify(3, 5, 8).unwrap().blocks.len(), 1);
    }

    #[test]
    fn sparse_estimates_half_split() {
        let (l1, l2) = ([0.9, 0.5, 0.2], [0.2, 0.5, 0.9]);
        let img = LinearImage::from_fn(32, 16, |x, _| {
            let l = if x < 16 { l1 } else { l2 };
            l.map(|c| 0.5 * c)
        })
        .unwrap();
        let grid = blockify(32, 16, 8).unwrap();
        let s = sparse_estimates(
            &img,
            &grid,
            &EstimatorId::GrayWorld,
            Illuminant::white(),
            None,
        )
        .unwrap();
        for e in &s.entries {
            let want = if e.x < 16 { unit(l1) } else { unit(l2) };
            assert!(crate::bench::angular_error(e.illuminant.rgb(), want.rgb()).unwrap() < 1e-6);
            assert_eq!(e.weight, 1.0);
        }
    }

    #[test]
    fn sparse_estimates_black_image_uses_fallback() {
        let img = LinearImage::filled(16, 16, [0.0; 3]).unwrap();
        let grid = blockify(16, 16, 8).unwrap();
        let fallback = unit([1.0, 2.0, 3.0]);
        let s = sparse_estimates(&img, &grid, &EstimatorId::GrayWorld, fallback, None).unwrap();
        assert!(s
            .entries
            .iter()
            .all(|e| e.degenerate && e.illuminant == fallback));
        assert_eq!(s.degenerate_count(), 4);
    }

    #[test]
    fn single_entry_gives_constant_field() {
        let l = unit([0.3, 0.5, 0.7]);
        let s = SparseField::new(
            40,
            30,
            vec![SparseEntry {
                x: 7,
                y: 21,
                illuminant: l,
                weight: 1.0,
                degenerate: false,
            }],
        )
        .unwrap();
        let f = gaussian_interpolate(&s, 24.0).unwrap();
        for px in f.pixels() {
            assert!(crate::bench::angular_error(px.rgb(), l.rgb()).unwrap() < 1e-9);
        }
        assert_eq!(f.fallback_pixels, 0);
    }

    #[test]
    fn mirror_entries_meet_at_midpoint() {
        let s = SparseField::new(
            21,
            5,
            vec![entry(4, 2, [1.0, 0.0, 0.0]), entry(16, 2, [0.0, 1.0, 0.0])],
        )
        .unwrap();
        let f = gaussian_interpolate(&s, 4.0).unwrap();
        let mid = f.get(10, 2).rgb();
        let h = 0.5f64.sqrt();
        assert!((mid[0] - h).abs() < 1e-12 && (mid[1] - h).abs() < 1e-12 && mid[2] == 0.0);
    }

    #[test]
    fn out_of_support_pixels_take_nearest_entry() {
        let s = SparseField::new(
            100,
            1,
            vec![entry(0, 0, [1.0, 0.0, 0.0]), entry(99, 0, [0.0, 0.0, 1.0])],
        )
        .unwrap();
        let f = gaussian_interpolate(&s, 2.0).unwrap();
        // radius 6: pixels 7..=92 see no entry
        assert_eq!(f.fallback_pixels, 86);
        assert_eq!(f.get(40, 0).rgb(), [1.0, 0.0, 0.0]);
        assert_eq!(f.get(60, 0).rgb(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_or_zero_weight_field_is_error() {
        let s = SparseField::new(4, 4, vec![]).unwrap();
        assert!(matches!(
            gaussian_interpolate(&s, 2.0),
            Err(Error::EmptyField)
        ));
        assert!(matches!(global_estimate(&s), Err(Error::EmptyField)));
        let mut e = entry(1, 1, [1.0; 3]);
        e.weight = 0.0;
        let s = SparseField::new(4, 4, vec![e]).unwrap();
        assert!(matches!(
            gaussian_interpolate(&s, 2.0),
            Err(Error::EmptyField)
        ));
    }

    #[test]
    fn sparse_field_rejects_bad_entries() {
        assert!(SparseField::new(4, 4, vec![entry(4, 0, [1.0; 3])]).is_err());
        assert!(
            SparseField::new(4, 4, vec![entry(1, 1, [1.0; 3]), entry(1, 1, [1.0; 3])]).is_err()
        );
    }

    #[test]
    fn whiteness_examples() {
        let img = LinearImage::filled(5, 5, [0.2, 0.7, 0.4]).unwrap();
        let w = whiteness_map(&img).unwrap();
        assert!(w.values.iter().all(|v| v.abs() < 1e-7));

        // channel means (0.2, 0.1, 0.3): pixel 0 = (0.4, 0, 0) = (2 m_R, 0, 0)
        // scaled → (2, 0, 0), pixel 1 = (0, 0.2, 0.6) scaled → (0, 2, 2)
        let img = LinearImage::new(2, 1, vec![[0.4, 0.0, 0.0], [0.0, 0.2, 0.6]]).unwrap();
        let w = whiteness_map(&img).unwrap();
        let oracle = (1.0 / 3f64.sqrt()).acos();
        assert!((w.values[0] - oracle).abs() < 1e-12);
        assert!((oracle - 0.9553).abs() < 1e-4);
        // (0,1,1)·(1,1,1)/(√2·√3)
        assert!((w.values[1] - (2.0 / 6f64.sqrt()).acos()).abs() < 1e-12);

        let img = LinearImage::new(2, 1, vec![[0.0; 3], [0.5; 3]]).unwrap();
        let w = whiteness_map(&img).unwrap();
        assert_eq!(w.values[0], PI / 2.0);
        assert_eq!(w.flagged_pixels, 1);

        let img = LinearImage::filled(2, 2, [0.5, 0.0, 0.5]).unwrap();
        assert!(matches!(
            whiteness_map(&img),
            Err(Error::DegenerateImage(_))
        ));
    }

    #[test]
    fn confidence_examples() {
        let flat = ScalarMap {
            width: 3,
            height: 1,
            values: vec![0.3; 3],
            flagged_pixels: 0,
            degenerate: false,
        };
        let c = confidence_map(&flat);
        assert!(c.degenerate && c.values.iter().all(|v| *v == 1.0));

        let two = ScalarMap {
            width: 4,
            height: 1,
            values: vec![0.0, 1.0, 0.0, 1.0],
            flagged_pixels: 0,
            degenerate: false,
        };
        let c = confidence_map(&two);
        let want = (1.0 / (2.0 * PI * 0.25)) * (-0.25f64 / 0.5).exp();
        assert!(c.values.iter().all(|v| (v - want).abs() < 1e-15));

        let three = ScalarMap {
            width: 3,
            height: 1,
            values: vec![0.0, 0.5, 1.0],
            flagged_pixels: 0,
            degenerate: false,
        };
        let c = confidence_map(&three);
        let var: f64 = (0.25 + 0.0 + 0.25) / 3.0;
        assert!((c.values[1] - 1.0 / (2.0 * PI * var)).abs() < 1e-12);
        assert!(c.values[1] > c.values[0] && c.values[1] > c.values[2]);
    }

    #[test]
    fn global_estimate_examples() {
        let s = SparseField::new(
            4,
            4,
            vec![entry(0, 0, [1.0, 0.0, 0.0]), entry(1, 0, [0.0, 1.0, 0.0])],
        )
        .unwrap();
        let g = global_estimate(&s).unwrap().rgb();
        let h = 0.5f64.sqrt();
        assert!((g[0] - h).abs() < 1e-15 && (g[1] - h).abs() < 1e-15);

        let l = unit([0.2, 0.3, 0.9]);
        let s = SparseField::new(4, 4, vec![entry(2, 2, l.rgb()), entry(3, 3, l.rgb())]).unwrap();
        assert_eq!(global_estimate(&s).unwrap(), l);
    }

    #[test]
    fn correction_inverts_image_formation() {
        let l = unit([0.8, 0.5, 0.3]);
        let refl = LinearImage::from_fn(6, 4, |x, y| [0.1 * x as f64, 0.05 * y as f64 + 0.1, 0.3])
            .unwrap();
        let white = Illuminant::white().component(0);
        let lit = refl
            .map(|r| [0, 1, 2].map(|k| r[k] * l.component(k) / white))
            .unwrap();
        let (out, clamped) = apply_correction(&lit, l).unwrap();
        assert_eq!(clamped, 0);
        for (a, b) in out.pixels().iter().zip(refl.pixels()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn white_correction_is_bitwise_identity() {
        let img =
            LinearImage::from_fn(7, 3, |x, y| [x as f64 * 0.13, y as f64 * 0.31, 0.777]).unwrap();
        let (out, _) = apply_correction(&img, Illuminant::white()).unwrap();
        assert_eq!(out, img);
        let field = IlluminantField::constant(7, 3, Illuminant::white()).unwrap();
        let (out, _) = apply_correction(&img, &field).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn correction_clamps_tiny_components() {
        let img = LinearImage::filled(2, 2, [0.5; 3]).unwrap();
        let (_, clamped) = apply_correction(&img, unit([1.0, 0.0, 0.0])).unwrap();
        assert_eq!(clamped, 8);
        let wrong = IlluminantField::constant(3, 2, Illuminant::white()).unwrap();
        assert!(matches!(
            apply_correction(&img, &wrong),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn field_png_round_trip() {
        let data: Vec<_> = (0..12)
            .map(|i| unit([1.0 + i as f64, 2.0, 0.5 * i as f64]))
            .collect();
        let f = IlluminantField::new(4, 3, data).unwrap();
        let (back, valid) = IlluminantField::decode_png(&f.encode_png().unwrap()).unwrap();
        assert!(valid.bits().iter().all(|b| *b));
        for (a, b) in f.pixels().iter().zip(back.pixels()) {
            assert!(crate::bench::angular_error(a.rgb(), b.rgb()).unwrap() < 0.01);
        }
    }

    #[test]
    fn uniform_image_gives_constant_field() {
        let c = [0.3, 0.4, 0.2];
        let img = LinearImage::filled(37, 29, c).unwrap();
        let f = pixelwise_estimate(&img, &PipelineParams::default()).unwrap();
        for px in f.pixels() {
            assert!(crate::bench::angular_error(px.rgb(), c).unwrap() < 1e-6);
        }
    }

    #[test]
    fn params_validation() {
        let mut p = PipelineParams::default();
        p.beta = 1;
        assert!(p.validate().is_err());
        let mut p = PipelineParams::default();
        p.sigma = 0.0;
        assert!(p.validate().is_err());
        let json = serde_json::to_string(&PipelineParams::default()).unwrap();
        assert!(json.contains("\"estimator\":\"gray-world\""), "{json}");
        let back: PipelineParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, PipelineParams::default());
    }
}
