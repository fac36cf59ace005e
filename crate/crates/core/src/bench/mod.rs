//! Evaluation: angular error, summary statistics, synthetic scenes, dataset
//! manifests, and the benchmark and parameter-sweep runners.

mod manifest;
mod metrics;
mod runner;
mod synth;

pub use manifest::{GroundTruth, Manifest, ManifestEntry};
pub use metrics::{angular_error, pixelwise_error, summary_stats, ErrorStats, PixelErrors};
pub use runner::{
    load_entries, param_sweep, run_benchmark, run_benchmark_with, run_loaded, BenchReport,
    EntryEstimate, EntryReport, LoadedEntry, SweepGrid, Truth,
};
pub use synth::{
    illuminant_pair, synth_scene, write_synthetic_manifest, Blend, SynthConfig, SyntheticScene,
};
