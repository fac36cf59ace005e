//! Spatially varying illuminant estimation.
//!
//! An image is cut into blocks, a classical global estimator runs on each
//! block, and the block estimates are spread into a per-pixel illuminant field
//! by Gaussian interpolation. The field (or its global reduction) drives a
//! von Kries correction.
//!
//! ```
//! use illumap::{run_pipeline, apply_correction, LinearImage, Mode, PipelineParams};
//!
//! let img = LinearImage::from_fn(64, 64, |x, _| if x < 32 { [0.6, 0.4, 0.2] } else { [0.2, 0.4, 0.6] }).unwrap();
//! let out = run_pipeline(&img, &PipelineParams::default(), Mode::Pixelwise, None).unwrap();
//! let field = out.field.unwrap();
//! let (corrected, _) = apply_correction(&img, &field).unwrap();
//! assert_eq!(corrected.dims(), (64, 64));
//! ```

pub mod bench;
pub mod error;
pub mod estimators;
pub mod illusion;
pub mod image;
pub mod spatial;

pub use error::{Error, Result};
pub use estimators::{estimate, EstimatorId, Region};
pub use illusion::{
    assimilation_shift, default_ladder, extract_target, generate_illusion, process_illusion,
    IllusionSpec, IllusionStimulus, Pattern, ShiftReport, TargetGeometry, TargetView,
};
pub use image::{
    load_image, normalize_to_unit, save_image, BitDepth, Illuminant, LinearImage, PixelMask, Rgb,
    Transfer,
};
pub use spatial::{
    apply_correction, run_pipeline, Confidence, IlluminantField, Mode, PipelineOutput,
    PipelineParams,
};
