//! Color-assimilation stimuli and a measure of how far processing pulls each
//! target toward its surrounding inducers.
//!
//! Every pattern is built from one periodic coordinate `s` (row, radius, or
//! both lattice axes) with period `P = 100 / frequency`. Within a period the
//! phase `[0, thickness)` is inducer and the phase `[P/2, P)` is target where
//! it falls inside a target shape; target wins where the two overlap. Target
//! pixels therefore do not depend on the inducer thickness, and a stimulus
//! with its inducers painted over in the background color is identical to the
//! zero-thickness rendering.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::angular_error;
use crate::error::{Error, Result};
use crate::image::{LinearImage, PixelMask, Rgb};
use crate::spatial::{apply_correction, run_pipeline, Mode, PipelineParams};

pub const DEFAULT_CANVAS: usize = 512;
pub const MIN_CANVAS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Target disks cut into rings by concentric inducer rings; each disk's
    /// rings use one inducer color, cycling across disks.
    ConcentricDisks,
    /// Target bars cut by horizontal inducer stripes; stripe colors cycle.
    StripeGrating,
    /// Target squares inside a square lattice of inducer lines; cell frames
    /// cycle colors in a checkerboard.
    RingLattice,
}

/// Placement of the target shapes, shared by every pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TargetGeometry {
    /// Number of target shapes, spread evenly along the horizontal midline.
    pub count: usize,
    /// Bar width, disk radius, or square side in pixels.
    pub size: usize,
    /// Maximum seeded offset of each shape from its nominal position.
    #[serde(default)]
    pub jitter: usize,
}

/// Missing fields in a JSON document take their [`Default`] values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct IllusionSpec {
    pub pattern: Pattern,
    pub width: usize,
    pub height: usize,
    pub background: Rgb,
    pub target_color: Rgb,
    pub inducer_colors: Vec<Rgb>,
    /// Pixels.
    pub inducer_thickness: usize,
    /// Cycles per 100 pixels.
    pub inducer_frequency: f64,
    pub target_geometry: TargetGeometry,
    pub seed: u64,
}

const GRAY: Rgb = [0.5, 0.5, 0.5];
const ORANGE: Rgb = [0.7, 0.5, 0.3];
const RED: Rgb = [0.75, 0.3, 0.3];
const BLUE: Rgb = [0.2, 0.35, 0.8];
const GREEN: Rgb = [0.25, 0.7, 0.35];

impl Default for IllusionSpec {
    fn default() -> Self {
        Self {
            pattern: Pattern::StripeGrating,
            width: DEFAULT_CANVAS,
            height: DEFAULT_CANVAS,
            background: GRAY,
            target_color: ORANGE,
            inducer_colors: vec![BLUE],
            inducer_thickness: 2,
            inducer_frequency: 10.0,
            target_geometry: TargetGeometry {
                count: 2,
                size: 128,
                jitter: 0,
            },
            seed: 0,
        }
    }
}

impl IllusionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::DegenerateSpec(m));
        if self.width < MIN_CANVAS || self.height < MIN_CANVAS {
            return bad(format!(
                "canvas {}x{} is below the {MIN_CANVAS}x{MIN_CANVAS} minimum",
                self.width, self.height
            ));
        }
        if !(self.inducer_frequency.is_finite() && self.inducer_frequency > 0.0) {
            return bad(format!(
                "inducerFrequency must be positive, got {}",
                self.inducer_frequency
            ));
        }
        if self.inducer_colors.is_empty() {
            return bad("inducerColors must hold at least one color".into());
        }
        let colors = [self.background, self.target_color]
            .into_iter()
            .chain(self.inducer_colors.iter().copied());
        for c in colors {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("color {c:?} is outside [0,1]"));
            }
        }
        if self.target_geometry.count == 0 || self.target_geometry.size == 0 {
            return bad("targetGeometry needs count >= 1 and size >= 1".into());
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        100.0 / self.inducer_frequency
    }

    /// Inducer-to-target search radius used by [`assimilation_shift`].
    pub fn neighborhood_radius(&self) -> usize {
        2 * self.inducer_thickness + 2
    }
}

/// The six stimuli used for parameter checks: a stripe grating at four
/// inducer frequencies, plus one disk and one lattice stimulus.
pub fn default_ladder() -> Vec<IllusionSpec> {
    let mut ladder: Vec<IllusionSpec> = [5.0, 10.0, 15.0, 25.0]
        .into_iter()
        .map(|f| IllusionSpec {
            inducer_frequency: f,
            ..IllusionSpec::default()
        })
        .collect();
    ladder.push(IllusionSpec {
        pattern: Pattern::ConcentricDisks,
        target_color: RED,
        inducer_colors: vec![BLUE, GREEN],
        target_geometry: TargetGeometry {
            count: 2,
            size: 80,
            jitter: 0,
        },
        ..IllusionSpec::default()
    });
    ladder.push(IllusionSpec {
        pattern: Pattern::RingLattice,
        target_color: RED,
        inducer_colors: vec![BLUE, GREEN],
        ..IllusionSpec::default()
    });
    ladder
}

#[derive(Clone, Debug, PartialEq)]
pub struct IllusionStimulus {
    pub image: LinearImage,
    pub target_mask: PixelMask,
    pub inducer_mask: PixelMask,
    pub spec: IllusionSpec,
}

/// Cycle index and in-cycle phase of a coordinate.
fn cycle(s: f64, period: f64) -> (i64, f64) {
    let k = (s / period).floor();
    (k as i64, s - k * period)
}

/// Deterministic rendering of a spec.
pub fn generate_illusion(spec: &IllusionSpec) -> Result<IllusionStimulus> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let geo = spec.target_geometry;
    let period = spec.period();
    let t = spec.inducer_thickness as f64;
    let n_colors = spec.inducer_colors.len() as i64;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = geo.jitter as i64;
    let centers: Vec<(f64, f64)> = (0..geo.count)
        .map(|i| {
            let (dx, dy) = if jitter > 0 {
                (
                    rng.gen_range(-jitter..=jitter),
                    rng.gen_range(-jitter..=jitter),
                )
            } else {
                (0, 0)
            };
            (
                (i as f64 + 0.5) * w as f64 / geo.count as f64 + dx as f64,
                h as f64 / 2.0 + dy as f64,
            )
        })
        .collect();
    let half = geo.size as f64 / 2.0;
    let radius = geo.size as f64;

    let mut data = Vec::with_capacity(w * h);
    let mut target_bits = Vec::with_capacity(w * h);
    let mut inducer_bits = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            // (is target, inducer color index if inducer-phase)
            let (target, inducer) = match spec.pattern {
                Pattern::StripeGrating => {
                    let (k, phase) = cycle(y as f64, period);
                    let in_bar = centers
                        .iter()
                        .any(|(cx, cy)| (px - cx).abs() < half && (py - cy).abs() < h as f64 / 4.0);
                    (
                        in_bar && phase >= period / 2.0,
                        (phase < t).then_some(k.rem_euclid(n_colors)),
                    )
                }
                Pattern::ConcentricDisks => {
                    let (i, d) = centers
                        .iter()
                        .map(|(cx, cy)| ((px - cx).powi(2) + (py - cy).powi(2)).sqrt())
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .expect("at least one target");
                    let (_, phase) = cycle(d, period);
                    (
                        d <= radius && phase >= period / 2.0,
                        (d <= radius + period && phase < t).then_some(i as i64 % n_colors),
                    )
                }
                Pattern::RingLattice => {
                    let (kx, phx) = cycle(x as f64, period);
                    let (ky, phy) = cycle(y as f64, period);
                    let in_square = centers
                        .iter()
                        .any(|(cx, cy)| (px - cx).abs() < half && (py - cy).abs() < half);
                    (
                        in_square && phx >= period / 2.0 && phy >= period / 2.0,
                        (phx < t || phy < t).then_some((kx + ky).rem_euclid(n_colors)),
                    )
                }
            };
            let inducer = if target { None } else { inducer };
            data.push(match (target, inducer) {
                (true, _) => spec.target_color,
                (false, Some(c)) => spec.inducer_colors[c as usize],
                (false, None) => spec.background,
            });
            target_bits.push(target);
            inducer_bits.push(inducer.is_some());
        }
    }
    let target_mask = PixelMask::new(w, h, target_bits)?;
    if target_mask.is_empty() {
        return Err(Error::DegenerateSpec(
            "geometry leaves no target pixels".into(),
        ));
    }
    Ok(IllusionStimulus {
        image: LinearImage::new(w, h, data)?,
        target_mask,
        inducer_mask: PixelMask::new(w, h, inducer_bits)?,
        spec: spec.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetView {
    /// Inducers painted over, background kept.
    InducersRemoved,
    /// Everything but the targets painted over.
    TargetOnly,
}

/// Paint over inducer pixels (or all non-target pixels) of `img` with `fill`.
/// `img` is usually the stimulus itself or a processed version of it.
pub fn extract_target(
    stim: &IllusionStimulus,
    img: &LinearImage,
    fill: Rgb,
    view: TargetView,
) -> Result<LinearImage> {
    crate::image::check_dims(stim.image.dims(), img.dims())?;
    let (w, _) = img.dims();
    let data = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, px)| {
            let (x, y) = (i % w, i / w);
            let replace = match view {
                TargetView::InducersRemoved => stim.inducer_mask.get(x, y),
                TargetView::TargetOnly => !stim.target_mask.get(x, y),
            };
            if replace {
                fill
            } else {
                *px
            }
        })
        .collect();
    LinearImage::new(img.width(), img.height(), data)
}

/// Channel variance summed over target pixels. Values are shifted by the
/// first target pixel so identical pixels give exactly zero.
pub fn target_variance(stim: &IllusionStimulus, img: &LinearImage) -> f64 {
    let px: Vec<Rgb> = img
        .pixels()
        .iter()
        .zip(stim.target_mask.bits())
        .filter_map(|(p, t)| t.then_some(*p))
        .collect();
    let Some(first) = px.first().copied() else {
        return 0.0;
    };
    let n = px.len() as f64;
    (0..3)
        .map(|k| {
            let d = px.iter().map(|p| p[k] - first[k]);
            let mean = d.clone().sum::<f64>() / n;
            (d.map(|v| v * v).sum::<f64>() / n - mean * mean).max(0.0)
        })
        .sum()
}

/// 4-connected components of a mask, as lists of pixel indices.
pub fn connected_regions(mask: &PixelMask) -> Vec<Vec<usize>> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut region = Vec::new();
        while let Some(i) = queue.pop_front() {
            region.push(i);
            let (x, y) = (i % w, i / w);
            let neighbors = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbors.into_iter().flatten() {
                if mask.bits()[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        region.sort_unstable();
        regions.push(region);
    }
    regions
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegionShift {
    pub pixels: usize,
    pub centroid: [f64; 2],
    /// Mean chromaticity `rgb / (r+g+b)` of the target before processing.
    pub before: Rgb,
    pub after: Rgb,
    /// Mean chromaticity of inducer pixels near the target.
    pub inducer: Option<Rgb>,
    pub angle_before: f64,
    pub angle_after: f64,
    /// `angle_before - angle_after` in degrees; positive means the target
    /// moved toward its inducers.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShiftReport {
    pub regions: Vec<RegionShift>,
    pub mean_delta: f64,
    pub min_delta: f64,
}

fn chromaticity(p: Rgb) -> Option<Rgb> {
    let s = p[0] + p[1] + p[2];
    (s > 0.0).then(|| p.map(|c| c / s))
}

fn mean_chromaticity<'a>(pixels: impl Iterator<Item = &'a Rgb>) -> Option<Rgb> {
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for c in pixels.filter_map(|p| chromaticity(*p)) {
        for k in 0..3 {
            acc[k] += c[k];
        }
        n += 1;
    }
    (n > 0).then(|| acc.map(|a| a / n as f64))
}

/// For every connected target region, how much closer (in degrees) its mean
/// chromaticity in `output` is to the nearby inducers than it was in the
/// stimulus. Nearby means within a Chebyshev distance of `2·thickness + 2`.
/// Regions with no inducer in reach report a zero shift.
pub fn assimilation_shift(input: &IllusionStimulus, output: &LinearImage) -> Result<ShiftReport> {
    crate::image::check_dims(input.image.dims(), output.dims())?;
    let (w, h) = output.dims();
    let regions = connected_regions(&input.target_mask);
    if regions.is_empty() {
        return Err(Error::Degenerate("stimulus has no target region".into()));
    }
    let r = input.spec.neighborhood_radius();
    let src = input.image.pixels();
    let mut stamp = vec![usize::MAX; w * h];
    let mut shifts = Vec::with_capacity(regions.len());
    for (id, region) in regions.iter().enumerate() {
        let degenerate = || Error::Degenerate(format!("target region {id} is black"));
        let before = mean_chromaticity(region.iter().map(|&i| &src[i])).ok_or_else(degenerate)?;
        let after = mean_chromaticity(region.iter().map(|&i| &output.pixels()[i]))
            .ok_or_else(degenerate)?;

        let mut near = Vec::new();
        for &i in region {
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for nx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    let j = ny * w + nx;
                    if stamp[j] != id && input.inducer_mask.bits()[j] {
                        stamp[j] = id;
                        near.push(j);
                    }
                }
            }
        }
        let inducer = mean_chromaticity(near.iter().map(|&j| &src[j]));
        let (angle_before, angle_after) = match inducer {
            Some(c) => (angular_error(before, c)?, angular_error(after, c)?),
            None => (0.0, 0.0),
        };
        let (sx, sy) = region.iter().fold((0.0, 0.0), |(sx, sy), &i| {
            (sx + (i % w) as f64, sy + (i / w) as f64)
        });
        let n = region.len() as f64;
        shifts.push(RegionShift {
            pixels: region.len(),
            centroid: [sx / n, sy / n],
            before,
            after,
            inducer,
            angle_before,
            angle_after,
            delta: angle_before - angle_after,
        });
    }
    let mean_delta = shifts.iter().map(|s| s.delta).sum::<f64>() / shifts.len() as f64;
    let min_delta = shifts.iter().map(|s| s.delta).fold(f64::INFINITY, f64::min);
    Ok(ShiftReport {
        regions: shifts,
        mean_delta,
        min_delta,
    })
}

#[derive(Clone, Debug)]
pub struct ProcessedIllusion {
    /// The pixel-wise illuminant estimates rendered as an image. This is the
    /// output whose targets are compared with human perception.
    pub estimates: LinearImage,
    /// The stimulus with the estimates divided out.
    pub corrected: LinearImage,
    pub shift: ShiftReport,
}

/// Run the pixel-wise pipeline on a stimulus and measure the target shift of
/// the resulting estimates.
pub fn process_illusion(
    stim: &IllusionStimulus,
    params: &PipelineParams,
) -> Result<ProcessedIllusion> {
    let out = run_pipeline(&stim.image, params, Mode::Pixelwise, None)?;
    let field = out.field.expect("pixelwise mode produces a field");
    let estimates = field.to_image();
    let (corrected, _) = apply_correction(&stim.image, &field)?;
    let shift = assimilation_shift(stim, &estimates)?;
    Ok(ProcessedIllusion {
        estimates,
        corrected,
        shift,
    })
}
