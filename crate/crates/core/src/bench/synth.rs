//! Mondrian scenes under one or two illuminants, with exact ground truth.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::manifest::{GroundTruth, Manifest, ManifestEntry};
use crate::bench::metrics::angular_error;
use crate::error::{Error, Result};
use crate::image::{
    normalize_to_unit, save_image, BitDepth, Illuminant, LinearImage, Rgb, Transfer,
};
use crate::spatial::IlluminantField;

/// Peak pixel value after rescaling; kept under the default saturation cut.
const PEAK: f64 = 0.9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blend {
    /// Left half under the first illuminant, right half under the second.
    #[default]
    HalfSplit,
    /// Normalized linear mix from the first (left edge) to the second (right edge).
    LinearRamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Typical side of a Mondrian patch in pixels.
    pub patch_size: usize,
    pub illuminants: [Illuminant; 2],
    pub blend: Blend,
    /// Re-balance reflectances so every `gray_block`-sized block averages to gray.
    pub mean_gray: bool,
    pub gray_block: usize,
    /// Replace the Mondrian by a constant reflectance.
    #[serde(default)]
    pub uniform_reflectance: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            patch_size: 16,
            illuminants: [Illuminant::white(), Illuminant::white()],
            blend: Blend::HalfSplit,
            mean_gray: true,
            gray_block: 8,
            uniform_reflectance: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub image: LinearImage,
    pub field: IlluminantField,
    pub reflectance: LinearImage,
}

/// Two random illuminants whose angle lies in `[min_deg, max_deg]`.
pub fn illuminant_pair(seed: u64, min_deg: f64, max_deg: f64) -> Result<(Illuminant, Illuminant)> {
    if !(0.0..=90.0).contains(&min_deg) || max_deg < min_deg {
        return Err(Error::Config(format!(
            "bad angle range [{min_deg}, {max_deg}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100_000 {
        let a: Rgb = [0; 3].map(|_| rng.gen_range(0.15..1.0));
        let b: Rgb = [0; 3].map(|_| rng.gen_range(0.15..1.0));
        let angle = angular_error(a, b)?;
        if (min_deg..=max_deg).contains(&angle) {
            return Ok((normalize_to_unit(a)?, normalize_to_unit(b)?));
        }
    }
    Err(Error::Config(format!(
        "no illuminant pair found in [{min_deg}, {max_deg}] degrees"
    )))
}

fn mondrian(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<Rgb> {
    let (w, h) = (cfg.width, cfg.height);
    let random_reflectance =
        |rng: &mut ChaCha8Rng| -> Rgb { [0; 3].map(|_| rng.gen_range(0.05..0.95)) };
    let mut refl = vec![random_reflectance(rng); w * h];
    let patch = cfg.patch_size.max(1);
    let count = (2 * w * h) / (patch * patch) + 1;
    for _ in 0..count {
        let pw = rng.gen_range(patch / 2 + 1..=patch + patch / 2);
        let ph = rng.gen_range(patch / 2 + 1..=patch + patch / 2);
        let x0 = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h);
        let color = random_reflectance(rng);
        for y in y0..(y0 + ph).min(h) {
            for x in x0..(x0 + pw).min(w) {
                refl[y * w + x] = color;
            }
        }
    }
    refl
}

fn balance_blocks(refl: &mut [Rgb], w: usize, h: usize, block: usize) {
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let (bw, bh) = (block.min(w - bx), block.min(h - by));
            let mut mean = [0.0; 3];
            for y in by..by + bh {
                for x in bx..bx + bw {
                    for k in 0..3 {
                        mean[k] += refl[y * w + x][k];
                    }
                }
            }
            let gray = (mean[0] + mean[1] + mean[2]) / 3.0;
            let gain = mean.map(|m| gray / m);
            for y in by..by + bh {
                for x in bx..bx + bw {
                    for k in 0..3 {
                        refl[y * w + x][k] *= gain[k];
                    }
                }
            }
        }
    }
}

/// Deterministic Mondrian scene: reflectance times a per-pixel illuminant
/// field, scaled so the brightest channel is 0.9.
pub fn synth_scene(seed: u64, cfg: &SynthConfig) -> Result<SyntheticScene> {
    let (w, h) = (cfg.width, cfg.height);
    if w == 0 || h == 0 || cfg.gray_block == 0 {
        return Err(Error::Config(
            "synthetic scene dimensions must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut refl = match cfg.uniform_reflectance {
        Some(r) => vec![[r; 3]; w * h],
        None => mondrian(&mut rng, cfg),
    };
    if cfg.mean_gray && cfg.uniform_reflectance.is_none() {
        balance_blocks(&mut refl, w, h, cfg.gray_block);
    }

    let [l1, l2] = cfg.illuminants.map(|l| l.rgb());
    let mut field = Vec::with_capacity(w * h);
    for _ in 0..h {
        for x in 0..w {
            let l = match cfg.blend {
                Blend::HalfSplit => normalize_to_unit(if x < w / 2 { l1 } else { l2 })?,
                Blend::LinearRamp => {
                    let t = if w > 1 {
                        x as f64 / (w - 1) as f64
                    } else {
                        0.0
                    };
                    normalize_to_unit([0, 1, 2].map(|k| (1.0 - t) * l1[k] + t * l2[k]))?
                }
            };
            field.push(l);
        }
    }

    let lit: Vec<Rgb> = refl
        .iter()
        .zip(&field)
        .map(|(r, l)| {
            [
                r[0] * l.component(0),
                r[1] * l.component(1),
                r[2] * l.component(2),
            ]
        })
        .collect();
    let peak = lit
        .iter()
        .flat_map(|p| p.iter().copied())
        .fold(0.0, f64::max);
    let scale = if peak > 0.0 { PEAK / peak } else { 1.0 };
    let image = LinearImage::new(w, h, lit.iter().map(|p| p.map(|c| c * scale)).collect())?;
    Ok(SyntheticScene {
        image,
        field: IlluminantField::new(w, h, field)?,
        reflectance: LinearImage::new(w, h, refl)?,
    })
}

/// Render scenes to `dir` (16-bit linear PNGs plus ground-truth field
/// rasters) and write `manifest.json`. Returns the manifest path.
pub fn write_synthetic_manifest(
    dir: impl AsRef<Path>,
    name: &str,
    scenes: &[(u64, SynthConfig)],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, (seed, cfg)) in scenes.iter().enumerate() {
        let scene = synth_scene(*seed, cfg)?;
        let image_name = format!("scene_{i:03}.png");
        let field_name = format!("scene_{i:03}_gt.png");
        save_image(
            &scene.image,
            dir.join(&image_name),
            Transfer::Linear,
            BitDepth::Sixteen,
        )?;
        let field_path = dir.join(&field_name);
        std::fs::write(&field_path, scene.field.encode_png()?).map_err(|e| Error::Io {
            path: field_path.clone(),
            source: e,
        })?;
        entries.push(ManifestEntry {
            image: image_name.into(),
            transfer: Transfer::Linear,
            ground_truth: GroundTruth::Field(field_name.into()),
            mask: None,
            black_level: None,
            saturation_level: None,
        });
    }
    let manifest = Manifest {
        name: name.to_string(),
        entries,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
