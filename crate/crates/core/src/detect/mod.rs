//! Detector-side filtering: sharpest-frame selection, per-label confidence
//! thresholds and the colour filter.

pub mod color;
pub mod sharpness;
pub mod threshold;

pub use color::{color_score, filter_detection, passes_threshold, rgb_to_hsv, DropReason};
pub use sharpness::{laplacian_variance, select_images, QueuedFrame};
pub use threshold::{calibrate_thresholds, fit_threshold, CalibrationSample, ThresholdFit};
