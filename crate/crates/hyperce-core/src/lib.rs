//! Pilot-aided OFDM channel estimation workbench.
//!
//! This crate simulates time-frequency selective fading channels observed
//! through OFDM resource grids, implements the classical estimator stack
//! (least-squares at pilots, bilinear interpolation, Wiener/LMMSE smoothing
//! driven by parametric channel correlations), estimates the conditioning
//! channel parameters from wideband tracking reference signals, and trains a
//! parameter-aware convolutional estimator on top of a small, self-contained
//! automatic-differentiation engine.
//!
//! ## Layout
//!
//! - [`grid`] — OFDM numerology, resource grids, and pilot patterns.
//! - [`linalg`] — dense complex linear algebra used by the Wiener filter.
//! - [`correlation`] — channel parameter set and separable time/frequency
//!   correlation models, including the Wiener filter construction.
//! - [`channel`] — tapped-delay-line fading simulation and pilot observation.
//! - [`estimators`] — LS, bilinear, and Wiener channel estimators plus NMSE.
//! - [`params`] — channel parameter estimation from tracking reference
//!   signals.
//! - [`dataset`] — scenario sweeps and the binary sample container.
//! - [`nn`] — tensors, reverse-mode autodiff, optimizer, and checkpoints.
//! - [`model`] — the hypernetwork + UNet + channel-attention estimator.
//! - [`benchmark`] — the estimator registry and NMSE evaluation pipeline.
//! - [`report`] — benchmark tables with CSV and SVG rendering.
//! - [`reference`] — slow, independent reference implementations used to
//!   cross-check the production code in tests and self-tests.

pub mod benchmark;
pub mod channel;
pub mod correlation;
pub mod dataset;
pub mod model;
pub mod estimators;
pub mod grid;
pub mod linalg;
pub mod nn;
pub mod params;
pub mod reference;
pub mod report;

pub use benchmark::{
    run_benchmark, BenchmarkOptions, EstimatorKind, EstimatorSpec, ReportRow, ReportTable,
};
pub use channel::{
    ChannelRealization, FadingConfig, Observation, TdlProfile, TdlProfileName,
};
pub use correlation::ChannelParams;
pub use dataset::{DatasetManifest, DatasetReader, DatasetSample, SampleRecord, ScenarioSweep};
pub use model::{
    ForwardMode, Model, ModelConfig, NormalizedParams, ParameterCounts, TrainConfig, TrainReport,
    TrainSample,
};
pub use estimators::{EstimateMethod, FullGridEstimate, PilotLsEstimates};
pub use grid::{Numerology, PilotKind, PilotPattern, ResourceGrid};
pub use params::{EstimatedParams, TrsLsField};
pub use report::{read_csv, write_csv, write_svg};

/// Errors produced by the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its documented range or invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// Two arguments have incompatible shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A numerical procedure failed (singular system, degenerate input, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A serialized artifact does not follow its container format.
    #[error("format error: {0}")]
    Format(String),
    /// An underlying I/O operation failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
