//! Noise-centric anomaly detection: wavelet-packet residual extraction,
//! third-order cumulant signatures and chi-square / CUSUM decisions.

pub mod detector;
mod error;
pub mod eval;
pub mod hos;
pub mod pipeline;
pub mod residual;
pub mod signature;
pub mod synth;
pub mod wpt;

pub use detector::{calibrate_cusum, decide, CalibrationOptions, CusumCalibration, CusumState, DetectorConfig};
pub use error::{Error, Result};
pub use hos::{BispectrumGrid, CumulantGrid, HosFeatures, LagSet};
pub use pipeline::{FeatureConfig, FeatureExtractor, FrameAnalysis};
pub use residual::{Mask, SplitResult, ThresholdMode, ThresholdPolicy};
pub use signature::{fit_nominal, fit_vectors, NodeSelection, NominalModel, SignatureVector};
pub use synth::{AnomalySpec, LabeledStream, ScenarioSpec, ShiftRegime};
pub use wpt::{CoefficientTree, FilterKind, QmfPair, WptConfig};
