use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::manifest::{GroundTruth, Manifest, ManifestEntry};
use crate::bench::metrics::{angular_error, pixelwise_error, summary_stats, ErrorStats};
use crate::error::{Error, Result};
use crate::estimators::EstimatorId;
use crate::image::{load_image, Illuminant, LinearImage, PixelMask};
use crate::spatial::{run_pipeline, IlluminantField, Mode, PipelineParams};

/// A manifest entry with its rasters decoded and preprocessed.
#[derive(Clone, Debug)]
pub struct LoadedEntry {
    pub image_path: PathBuf,
    /// Black level already subtracted.
    pub image: LinearImage,
    /// Pixels at or above the entry's saturation level, if one was given.
    pub saturated: Option<PixelMask>,
    /// Pixels to score: the entry mask combined with ground-truth validity.
    pub eval_mask: Option<PixelMask>,
    pub truth: Truth,
}

#[derive(Clone, Debug)]
pub enum Truth {
    Global(Illuminant),
    Field(IlluminantField),
}

fn load_entry(entry: &ManifestEntry) -> Result<LoadedEntry> {
    let raw = load_image(&entry.image, entry.transfer)?;
    let saturated = entry.saturation_level.map(|level| {
        PixelMask::from_fn(raw.width(), raw.height(), |x, y| {
            raw.get(x, y).iter().any(|c| *c >= level)
        })
    });
    let image = match entry.black_level {
        Some(b) if b > 0.0 => raw.map(|p| p.map(|c| (c - b).max(0.0)))?,
        _ => raw,
    };
    let mut eval_mask = match &entry.mask {
        Some(path) => {
            let m = load_image(path, crate::image::Transfer::Linear)?;
            crate::image::check_dims(image.dims(), m.dims())?;
            Some(PixelMask::from_fn(m.width(), m.height(), |x, y| {
                m.get(x, y).iter().any(|c| *c > 0.0)
            }))
        }
        None => None,
    };
    let truth = match &entry.ground_truth {
        GroundTruth::Global(l) => Truth::Global(*l),
        GroundTruth::Field(path) => {
            let raster = load_image(path, crate::image::Transfer::Linear)?;
            crate::image::check_dims(image.dims(), raster.dims())?;
            let (field, valid) = IlluminantField::from_image(&raster)?;
            if valid.bits().iter().any(|b| !b) {
                eval_mask = Some(match eval_mask {
                    Some(m) => PixelMask::from_fn(m.width(), m.height(), |x, y| {
                        m.get(x, y) && valid.get(x, y)
                    }),
                    None => valid,
                });
            }
            Truth::Field(field)
        }
    };
    Ok(LoadedEntry {
        image_path: entry.image.clone(),
        image,
        saturated,
        eval_mask,
        truth,
    })
}

/// Decode every entry. Failures are kept per entry so a run can skip them.
pub fn load_entries(manifest: &Manifest) -> Vec<(PathBuf, Result<LoadedEntry>)> {
    manifest
        .entries
        .par_iter()
        .map(|e| (e.image.clone(), load_entry(e)))
        .collect()
}

/// What an estimator produced for one entry.
#[derive(Clone, Debug)]
pub struct EntryEstimate {
    pub global: Illuminant,
    pub field: Option<IlluminantField>,
    pub degenerate_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntryReport {
    pub image: PathBuf,
    /// Set when the entry was skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_estimate: Option<[f64; 3]>,
    /// Angle between the global estimate and a global ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_error: Option<f64>,
    /// Per-pixel statistics, whenever either side is a field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_stats: Option<ErrorStats>,
    /// The value aggregated over entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default)]
    pub degenerate_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub manifest: String,
    pub params: PipelineParams,
    pub mode: Mode,
    pub entries: Vec<EntryReport>,
    pub aggregate: ErrorStats,
    pub skipped: usize,
    pub elapsed_ms: f64,
}

impl BenchReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.score).collect()
    }
}

fn score_entry(entry: &LoadedEntry, est: &EntryEstimate, mode: Mode) -> Result<EntryReport> {
    let (w, h) = entry.image.dims();
    let global_error = match entry.truth {
        Truth::Global(gt) => Some(angular_error(gt.rgb(), est.global.rgb())?),
        Truth::Field(_) => None,
    };
    let needs_pixels = !(mode == Mode::Global && matches!(entry.truth, Truth::Global(_)));
    let pixel_stats = if needs_pixels {
        let gt_field = match &entry.truth {
            Truth::Global(l) => IlluminantField::constant(w, h, *l)?,
            Truth::Field(f) => f.clone(),
        };
        let est_field = match (&est.field, mode) {
            (Some(f), Mode::Pixelwise) => f.clone(),
            _ => IlluminantField::constant(w, h, est.global)?,
        };
        Some(pixelwise_error(&gt_field, &est_field, entry.eval_mask.as_ref())?.stats)
    } else {
        None
    };
    let score = pixel_stats.map(|s| s.mean).or(global_error);
    Ok(EntryReport {
        image: entry.image_path.clone(),
        error: None,
        global_estimate: Some(est.global.rgb()),
        global_error,
        pixel_stats,
        score,
        degenerate_blocks: est.degenerate_blocks,
    })
}

fn skipped(image: &Path, err: &Error) -> EntryReport {
    EntryReport {
        image: image.to_path_buf(),
        error: Some(err.to_string()),
        global_estimate: None,
        global_error: None,
        pixel_stats: None,
        score: None,
        degenerate_blocks: 0,
    }
}

/// Score already-loaded entries with a caller-supplied estimator. Entries run
/// concurrently; the report keeps manifest order.
pub fn run_loaded<F>(
    name: &str,
    loaded: &[(PathBuf, Result<LoadedEntry>)],
    params: &PipelineParams,
    mode: Mode,
    estimator: F,
) -> Result<BenchReport>
where
    F: Fn(&LoadedEntry) -> Result<EntryEstimate> + Sync,
{
    params.validate()?;
    let start = Instant::now();
    let entries: Vec<EntryReport> = loaded
        .par_iter()
        .map(|(path, entry)| {
            let outcome = entry
                .as_ref()
                .map_err(|e| Error::Degenerate(e.to_string()))
                .and_then(|entry| estimator(entry).and_then(|est| score_entry(entry, &est, mode)));
            outcome.unwrap_or_else(|e| skipped(path, &e))
        })
        .collect();
    let scores: Vec<f64> = entries.iter().filter_map(|e| e.score).collect();
    if scores.is_empty() {
        let first = entries
            .iter()
            .find_map(|e| e.error.clone())
            .unwrap_or_default();
        return Err(Error::Degenerate(format!(
            "every manifest entry failed; first error: {first}"
        )));
    }
    Ok(BenchReport {
        manifest: name.to_string(),
        params: *params,
        mode,
        skipped: entries.len() - scores.len(),
        aggregate: summary_stats(&scores)?,
        entries,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn pipeline_estimate(
    entry: &LoadedEntry,
    params: &PipelineParams,
    mode: Mode,
) -> Result<EntryEstimate> {
    let out = run_pipeline(&entry.image, params, mode, entry.saturated.as_ref())?;
    Ok(EntryEstimate {
        global: out.global,
        degenerate_blocks: out.sparse.degenerate_count(),
        field: out.field,
    })
}

/// Benchmark the pipeline over a manifest.
pub fn run_benchmark(
    manifest: &Manifest,
    params: &PipelineParams,
    mode: Mode,
) -> Result<BenchReport> {
    run_benchmark_with(manifest, params, mode, |entry| {
        pipeline_estimate(entry, params, mode)
    })
}

/// Benchmark with a substitute estimator (e.g. to inject known answers).
pub fn run_benchmark_with<F>(
    manifest: &Manifest,
    params: &PipelineParams,
    mode: Mode,
    estimator: F,
) -> Result<BenchReport>
where
    F: Fn(&LoadedEntry) -> Result<EntryEstimate> + Sync,
{
    run_loaded(
        &manifest.name,
        &load_entries(manifest),
        params,
        mode,
        estimator,
    )
}

/// Mean pixel-wise error for every (β, σ) pair; rows are β, columns σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepGrid {
    pub estimator: EstimatorId,
    pub betas: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub means: Vec<Vec<f64>>,
}

impl SweepGrid {
    pub fn get(&self, beta: usize, sigma: f64) -> Option<f64> {
        let i = self.betas.iter().position(|b| *b == beta)?;
        let j = self.sigmas.iter().position(|s| *s == sigma)?;
        Some(self.means[i][j])
    }

    /// CSV with a header of σ values and one row per β, three decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["beta\\sigma".to_string()];
        header.extend(self.sigmas.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (beta, row) in self.betas.iter().zip(&self.means) {
            let mut rec = vec![beta.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.3}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<csv>"),
            source: e,
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.write_csv(file)
    }
}

/// One pixel-wise benchmark per (β, σ) pair over a manifest with field
/// ground truth. Images are decoded once and shared by all cells.
pub fn param_sweep(
    manifest: &Manifest,
    betas: &[usize],
    sigmas: &[f64],
    estimator: EstimatorId,
) -> Result<SweepGrid> {
    if betas.is_empty() || sigmas.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one beta and one sigma".into(),
        ));
    }
    if let Some(i) = manifest
        .entries
        .iter()
        .position(|e| !matches!(e.ground_truth, GroundTruth::Field(_)))
    {
        return Err(Error::Config(format!(
            "sweep requires field ground truth; entry {i} is global"
        )));
    }
    let loaded = load_entries(manifest);
    let mut means = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut row = Vec::with_capacity(sigmas.len());
        for &sigma in sigmas {
            let params = PipelineParams {
                beta,
                sigma,
                estimator,
                ..PipelineParams::default()
            };
            let report = run_loaded(&manifest.name, &loaded, &params, Mode::Pixelwise, |entry| {
                pipeline_estimate(entry, &params, Mode::Pixelwise)
            })?;
            row.push(report.aggregate.mean);
        }
        means.push(row);
    }
    Ok(SweepGrid {
        estimator,
        betas: betas.to_vec(),
        sigmas: sigmas.to_vec(),
        means,
    })
}
