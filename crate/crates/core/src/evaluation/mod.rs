//! Metrics, the deployment pipeline and the experiment harnesses.
//!
//! SSIM is measured in a fixed reference transform's `[0, 1]` domain (the
//! quantile transform fitted on HR training data) so that models trained
//! with different preprocessing are scored on the same scale. NMSE is
//! measured in physical units.

mod harness;
mod metrics;
mod pipeline;

pub use harness::{
    evaluate_pairs, format_records, format_table, read_table, run_cross_compound, run_protocol,
    run_scale_invariance, write_records, write_table, write_triptychs, EvalReport, PairRecord,
    ResolutionCorpus, TABLE_HEADER,
};
pub use metrics::{
    distribution_distance, gaussian_taps, nmse_db, ssim, LogBins, DEFAULT_HIST_BINS,
    NMSE_FLOOR_DB, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};
pub(crate) use pipeline::to_emission_grid;
pub use pipeline::{stack_transformed, super_resolve, Bicubic, Pipeline, Upscaler, INFERENCE_BATCH};
