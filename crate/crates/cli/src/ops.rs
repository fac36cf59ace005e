//! Operations shared by the command line and the HTTP server, so both
//! surfaces produce byte-identical artifacts for identical inputs.

use std::time::Instant;

use illumap::illusion::{extract_target, process_illusion, ShiftReport, TargetView};
use illumap::image::{decode_png, encode_png};
use illumap::spatial::{apply_correction, run_pipeline};
use illumap::{
    generate_illusion, BitDepth, Confidence, EstimatorId, IllusionSpec, LinearImage, Mode,
    PipelineParams, Result, Transfer,
};
use serde::{Deserialize, Serialize};

/// User-facing estimation settings. Missing fields take the defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct EstimateOptions {
    pub beta: usize,
    pub sigma: f64,
    pub estimator: EstimatorId,
    pub confidence: Confidence,
    pub mode: Mode,
    /// Input is sRGB-encoded; image outputs are written as 8-bit sRGB.
    pub srgb: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        let p = PipelineParams::default();
        Self {
            beta: p.beta,
            sigma: p.sigma,
            estimator: p.estimator,
            confidence: p.confidence,
            mode: Mode::Pixelwise,
            srgb: false,
        }
    }
}

impl EstimateOptions {
    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            beta: self.beta,
            sigma: self.sigma,
            estimator: self.estimator,
            confidence: self.confidence,
            ..PipelineParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()
    }

    pub fn transfer(&self) -> Transfer {
        if self.srgb {
            Transfer::Srgb
        } else {
            Transfer::Linear
        }
    }
}

/// How image artifacts are encoded.
pub fn image_encoding(srgb: bool) -> (Transfer, BitDepth) {
    if srgb {
        (Transfer::Srgb, BitDepth::Eight)
    } else {
        (Transfer::Linear, BitDepth::Sixteen)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateFlags {
    pub degenerate_blocks: usize,
    /// Centers of blocks that received the fallback illuminant.
    pub degenerate_block_centers: Vec<[usize; 2]>,
    /// Pixels outside every entry's support, filled from the nearest entry.
    pub fallback_pixels: usize,
    /// Illuminant components raised to the correction floor.
    pub clamped_components: usize,
    pub confidence_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timings {
    pub decode_ms: f64,
    pub estimate_ms: f64,
    pub correct_ms: f64,
    pub encode_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateMeta {
    pub width: usize,
    pub height: usize,
    pub params: EstimateOptions,
    pub global_estimate: [f64; 3],
    pub flags: EstimateFlags,
    pub timings: Timings,
}

#[derive(Clone, Debug)]
pub struct EstimateOutput {
    pub meta: EstimateMeta,
    /// Absent in global mode.
    pub field_png: Option<Vec<u8>>,
    pub corrected_png: Vec<u8>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Decode a PNG and run the estimator and correction on it.
pub fn estimate_png(bytes: &[u8], opts: &EstimateOptions) -> Result<EstimateOutput> {
    opts.validate()?;
    let t = Instant::now();
    let img = decode_png(bytes, opts.transfer())?;
    estimate_inner(&img, opts, ms(t))
}

fn estimate_inner(
    img: &LinearImage,
    opts: &EstimateOptions,
    decode_ms: f64,
) -> Result<EstimateOutput> {
    let params = opts.params();
    let t = Instant::now();
    let out = run_pipeline(img, &params, opts.mode, None)?;
    let estimate_ms = ms(t);

    let t = Instant::now();
    let (corrected, clamped) = match &out.field {
        Some(field) => apply_correction(img, field)?,
        None => apply_correction(img, out.global)?,
    };
    let correct_ms = ms(t);

    let t = Instant::now();
    let (transfer, depth) = image_encoding(opts.srgb);
    let corrected_png = encode_png(&corrected, transfer, depth)?;
    let field_png = out.field.as_ref().map(|f| f.encode_png()).transpose()?;
    let encode_ms = ms(t);

    let degenerate: Vec<[usize; 2]> = out
        .sparse
        .entries
        .iter()
        .filter(|e| e.degenerate)
        .map(|e| [e.x, e.y])
        .collect();
    Ok(EstimateOutput {
        meta: EstimateMeta {
            width: img.width(),
            height: img.height(),
            params: *opts,
            global_estimate: out.global.rgb(),
            flags: EstimateFlags {
                degenerate_blocks: degenerate.len(),
                degenerate_block_centers: degenerate,
                fallback_pixels: out.field.as_ref().map_or(0, |f| f.fallback_pixels),
                clamped_components: clamped,
                confidence_degenerate: out.confidence_degenerate,
            },
            timings: Timings {
                decode_ms,
                estimate_ms,
                correct_ms,
                encode_ms,
            },
        },
        field_png,
        corrected_png,
    })
}

/// Parse and validate an illusion spec document.
pub fn parse_spec(text: &str) -> Result<IllusionSpec> {
    let spec: IllusionSpec =
        serde_json::from_str(text).map_err(|e| illumap::Error::DegenerateSpec(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Render a stimulus, or only its targets on the background color.
pub fn render_illusion(spec: &IllusionSpec, target_only: bool, srgb: bool) -> Result<Vec<u8>> {
    let stim = generate_illusion(spec)?;
    let img = if target_only {
        extract_target(&stim, &stim.image, spec.background, TargetView::TargetOnly)?
    } else {
        stim.image
    };
    let (transfer, depth) = image_encoding(srgb);
    encode_png(&img, transfer, depth)
}

#[derive(Clone, Debug)]
pub struct IllusionOutput {
    pub shift: ShiftReport,
    pub stimulus_png: Vec<u8>,
    pub estimates_png: Vec<u8>,
    pub corrected_png: Vec<u8>,
}

/// Render a stimulus, run the pixel-wise pipeline on it and measure the
/// target shift of the estimates.
pub fn run_illusion(spec: &IllusionSpec, opts: &EstimateOptions) -> Result<IllusionOutput> {
    opts.validate()?;
    let stim = generate_illusion(spec)?;
    let processed = process_illusion(&stim, &opts.params())?;
    let (transfer, depth) = image_encoding(opts.srgb);
    Ok(IllusionOutput {
        shift: processed.shift,
        stimulus_png: encode_png(&stim.image, transfer, depth)?,
        estimates_png: encode_png(&processed.estimates, transfer, depth)?,
        corrected_png: encode_png(&processed.corrected, transfer, depth)?,
    })
}

/// Registry listing served to clients: the four estimator ids plus the
/// parameter ranges the explorer should offer.
pub fn algorithms_listing() -> serde_json::Value {
    let ids: Vec<String> = EstimatorId::registry()
        .iter()
        .map(|id| id.to_string())
        .collect();
    serde_json::json!({
        "algorithms": ids,
        "ranges": {
            "beta": { "min": 2, "max": 48, "default": illumap::spatial::DEFAULT_BETA },
            "sigma": { "min": 2.0, "max": 48.0, "default": illumap::spatial::DEFAULT_SIGMA },
            "minkowskiP": { "min": 1.0, "default": illumap::estimators::DEFAULT_MINKOWSKI_P },
            "edgeSigma": { "min": 0.0, "exclusiveMin": true, "default": illumap::estimators::DEFAULT_EDGE_SIGMA },
        },
        "modes": ["pixelwise", "global"],
        "confidence": ["off", "whiteness"],
    })
}
