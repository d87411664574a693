//! Run configuration: the canonical TOML file and its validation.
//!
//! A run file has a `schema_version` and four tables: `[scenario]`,
//! `[pipeline]`, `[network]` and `[operator]`. Every field has a default,
//! so a minimal file only names what it changes. See `docs/config.md`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error};
use crate::model::{CameraId, CameraModel, Extrinsics, Label};

pub const SCHEMA_VERSION: u32 = 1;

/// HSV acceptance region. `hue_min > hue_max` wraps through 0°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HsvMask {
    pub hue_min: f64,
    pub hue_max: f64,
    pub sat_min: f64,
    pub sat_max: f64,
    pub val_min: f64,
    pub val_max: f64,
}

impl Default for HsvMask {
    fn default() -> Self {
        HsvMask { hue_min: 0.0, hue_max: 360.0, sat_min: 0.0, sat_max: 1.0, val_min: 0.0, val_max: 1.0 }
    }
}

impl HsvMask {
    pub fn hue_band(hue_min: f64, hue_max: f64, sat_min: f64) -> Self {
        HsvMask { hue_min, hue_max, sat_min, ..HsvMask::default() }
    }

    pub fn accepts(&self, h: f64, s: f64, v: f64) -> bool {
        let hue_ok =
            if self.hue_min <= self.hue_max { h >= self.hue_min && h <= self.hue_max } else { h >= self.hue_min || h <= self.hue_max };
        hue_ok && s >= self.sat_min && s <= self.sat_max && v >= self.val_min && v <= self.val_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Detector confidence threshold `t_l`.
    #[serde(default = "defaults::threshold")]
    pub threshold: f64,
    /// Colour multiplier `β_l`.
    #[serde(default = "defaults::color_multiplier")]
    pub color_multiplier: f64,
    #[serde(default)]
    pub mask: HsvMask,
    /// Physical (width, height) in metres; `None` disables size scoring.
    #[serde(default)]
    pub dimensions: Option<[f64; 2]>,
    /// Nominal sRGB colour used by the synthetic renderer.
    #[serde(default = "defaults::color")]
    pub color: [u8; 3],
}

impl LabelConfig {
    fn new(mask: HsvMask, dims: [f64; 2], color: [u8; 3]) -> Self {
        LabelConfig {
            threshold: defaults::threshold(),
            color_multiplier: defaults::color_multiplier(),
            mask,
            dimensions: Some(dims),
            color,
        }
    }
}

/// Default per-label table. Masks follow the usual artifact colouring; the
/// value channel is left unbounded except for the white helmet.
pub fn default_labels() -> BTreeMap<Label, LabelConfig> {
    let red = HsvMask::hue_band(340.0, 20.0, 0.45);
    let orange = HsvMask::hue_band(15.0, 50.0, 0.45);
    let blue = HsvMask::hue_band(190.0, 250.0, 0.40);
    let white = HsvMask { sat_max: 0.2, val_min: 0.75, ..HsvMask::default() };
    BTreeMap::from([
        (Label::Backpack, LabelConfig::new(red, [0.40, 0.50], [200, 30, 30])),
        (Label::Drill, LabelConfig::new(orange, [0.25, 0.25], [230, 120, 20])),
        (Label::FireExtinguisher, LabelConfig::new(red, [0.20, 0.60], [210, 20, 25])),
        (Label::Helmet, LabelConfig::new(white, [0.30, 0.20], [240, 240, 235])),
        (Label::Cube, LabelConfig::new(blue, [0.20, 0.20], [40, 90, 220])),
        (Label::Rope, LabelConfig::new(blue, [0.40, 0.30], [30, 70, 200])),
        (Label::Survivor, LabelConfig::new(orange, [0.60, 1.20], [250, 150, 10])),
    ])
}

/// Functional form of the observation-count penalty `α(n_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaForm {
    /// `min(n / n_sat, 1)`
    #[default]
    Linear,
    /// `1 - exp(-n / n_sat)`
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub labels: BTreeMap<Label, LabelConfig>,
    /// Re-derive `t_l` from a calibration set before running.
    pub calibrate_thresholds: bool,
    pub calibration_samples: usize,

    // f1 image selection
    pub detector_rate_hz: f64,
    pub selector_budget: usize,

    // f3
    pub d_min: f64,
    pub alpha_min_deg: f64,
    pub d_max_detect: f64,
    pub theta_gate_deg: f64,
    pub w_range: f64,
    pub w_angle: f64,
    pub bearing_sigma_deg: f64,
    pub range_sigma_frac: f64,
    pub max_solve_observations: usize,
    pub lidar_min_points: usize,
    pub size_tolerance: f64,

    // f4
    pub min_observations: usize,
    pub image_budget: usize,

    // f5 / f6
    pub d_base_min: f64,
    pub n_sat: f64,
    pub alpha_form: AlphaForm,
    pub band_high: f64,
    pub band_median: f64,

    // scoring
    pub e_max: f64,
    pub s_max: usize,
    pub operator_seconds_per_item: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            labels: default_labels(),
            calibrate_thresholds: true,
            calibration_samples: 400,
            detector_rate_hz: 5.0,
            selector_budget: 1,
            d_min: 0.5,
            alpha_min_deg: 10.0,
            d_max_detect: 10.0,
            theta_gate_deg: 15.0,
            w_range: 0.5,
            w_angle: 0.5,
            bearing_sigma_deg: 1.0,
            range_sigma_frac: 0.1,
            max_solve_observations: 50,
            lidar_min_points: 3,
            size_tolerance: 2.0,
            min_observations: 2,
            image_budget: 4,
            d_base_min: 5.0,
            n_sat: 3.0,
            alpha_form: AlphaForm::Linear,
            band_high: 0.6,
            band_median: 0.3,
            e_max: 5.0,
            s_max: 40,
            operator_seconds_per_item: 7.5,
        }
    }
}

impl PipelineConfig {
    pub fn label(&self, label: &Label) -> Option<&LabelConfig> {
        self.labels.get(label)
    }

    pub fn threshold(&self, label: &Label) -> f64 {
        self.labels.get(label).map_or(defaults::threshold(), |c| c.threshold)
    }
}

/// Ring of identical horizontal cameras, evenly spaced in yaw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub count: u32,
    pub fx: f64,
    pub fy: f64,
    pub width: u32,
    pub height: u32,
    pub mount_height: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig { count: 5, fx: 80.0, fy: 80.0, width: 128, height: 80, mount_height: 0.6 }
    }
}

impl RigConfig {
    pub fn cameras(&self) -> Vec<CameraModel> {
        (0..self.count)
            .map(|i| CameraModel {
                id: CameraId(i),
                fx: self.fx,
                fy: self.fy,
                cx: self.width as f64 / 2.0,
                cy: self.height as f64 / 2.0,
                width: self.width,
                height: self.height,
                extrinsics: Extrinsics::horizontal(i as f64 * std::f64::consts::TAU / self.count as f64, self.mount_height),
            })
            .collect()
    }
}

/// Beta distribution parameters for detector confidences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Statistical stand-in for the object detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorNoiseModel {
    /// Per-label probability of detecting an in-view object on a frame.
    /// Labels not listed use `tp_probability_default`.
    pub tp_probability: BTreeMap<Label, f64>,
    pub tp_probability_default: f64,
    pub tp_confidence: BetaParams,
    pub fp_confidence: BetaParams,
    /// Lowest confidence the raw detector ever reports.
    pub confidence_floor: f64,
    /// False-object bursts per metre travelled.
    pub fp_intensity_per_m: f64,
    /// Mean number of extra pseudo-objects per burst.
    pub fp_burst_extra_mean: f64,
    pub fp_burst_radius: f64,
    /// Probability a burst member shares the burst's label.
    pub fp_burst_same_label_probability: f64,
    /// Pseudo-objects are only hallucinated within this radius (mean of an
    /// exponential) of the viewpoint that spawned them.
    pub fp_view_radius_mean: f64,
    /// Mean time (exponential) a pseudo-object keeps fooling the detector.
    pub fp_active_mean_s: f64,
    pub fp_probability_min: f64,
    pub fp_probability_max: f64,
    /// Probability a pseudo-object carries its label's colour.
    pub fp_color_match_probability: f64,
    /// Log-normal σ of a pseudo-object's size relative to its label.
    pub fp_size_log_sigma: f64,
    pub bbox_jitter_px: f64,
    pub color_corruption_probability: f64,
    pub blur_sigma_min: f64,
    pub blur_sigma_max: f64,
    pub lidar_points_per_object: usize,
    pub lidar_background_points: usize,
    /// Objects further than this from the camera are never detected.
    pub max_range: f64,
}

impl Default for DetectorNoiseModel {
    fn default() -> Self {
        DetectorNoiseModel {
            tp_probability: BTreeMap::new(),
            tp_probability_default: 0.5,
            tp_confidence: BetaParams { alpha: 6.0, beta: 2.0 },
            fp_confidence: BetaParams { alpha: 2.0, beta: 3.5 },
            confidence_floor: 0.05,
            fp_intensity_per_m: 1.4,
            fp_burst_extra_mean: 0.7,
            fp_burst_radius: 2.5,
            fp_burst_same_label_probability: 0.7,
            fp_view_radius_mean: 3.0,
            fp_active_mean_s: 2.5,
            fp_probability_min: 0.1,
            fp_probability_max: 0.5,
            fp_color_match_probability: 0.5,
            fp_size_log_sigma: 0.7,
            bbox_jitter_px: 0.5,
            color_corruption_probability: 0.1,
            blur_sigma_min: 0.3,
            blur_sigma_max: 2.0,
            lidar_points_per_object: 24,
            lidar_background_points: 150,
            max_range: 10.0,
        }
    }
}

impl DetectorNoiseModel {
    pub fn tp_probability(&self, label: &Label) -> f64 {
        self.tp_probability.get(label).copied().unwrap_or(self.tp_probability_default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub robots: u32,
    pub duration_s: f64,
    /// Per-camera frame rate.
    pub frame_rate_hz: f64,
    pub seed: u64,
    pub n_objects: usize,
    pub arena: [f64; 2],
    pub max_speed: f64,
    pub cruise_speed: f64,
    /// Gaussian σ (metres) added to reported robot positions.
    pub pose_noise_sigma: f64,
    /// Time after mission end during which queued reports still drain.
    pub drain_s: f64,
    /// Minimum pairwise object separation; defaults to `2·d_base_min`.
    pub min_object_separation: Option<f64>,
    /// Distance between sweep lanes.
    pub lane_spacing: f64,
    pub rig: RigConfig,
    pub noise: DetectorNoiseModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "default".into(),
            robots: 3,
            duration_s: 1800.0,
            frame_rate_hz: 25.0,
            seed: 7,
            n_objects: 9,
            arena: [100.0, 100.0],
            max_speed: 1.0,
            cruise_speed: 0.8,
            pose_noise_sigma: 0.0,
            drain_s: 60.0,
            min_object_separation: None,
            lane_spacing: 16.0,
            rig: RigConfig::default(),
            noise: DetectorNoiseModel::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn tick(&self) -> f64 {
        1.0 / self.frame_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkOutage {
    pub robot: u32,
    pub start: f64,
    pub end: f64,
}

/// Robot-to-base mesh link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkModel {
    pub bandwidth_bytes_per_s: f64,
    pub per_message_overhead: u64,
    pub metadata_bytes: u64,
    pub image_bytes: u64,
    /// Optional cap on the number of reports put on the wire.
    pub max_reports: Option<usize>,
    pub outages: Vec<LinkOutage>,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            bandwidth_bytes_per_s: 50_000.0,
            per_message_overhead: 64,
            metadata_bytes: 2_000,
            image_bytes: 25_000,
            max_reports: None,
            outages: Vec::new(),
        }
    }
}

impl NetworkModel {
    pub fn link_up(&self, robot: u32, t: f64) -> bool {
        !self.outages.iter().any(|o| o.robot == robot && t >= o.start && t < o.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorModel {
    pub p_tp_accept: f64,
    pub p_fp_accept: f64,
    pub seconds_per_item: f64,
    /// `None` means unlimited.
    pub time_budget_s: Option<f64>,
    pub seed: u64,
}

impl Default for OperatorModel {
    fn default() -> Self {
        OperatorModel { p_tp_accept: 0.95, p_fp_accept: 0.0, seconds_per_item: 7.5, time_budget_s: Some(900.0), seed: 0 }
    }
}

impl OperatorModel {
    /// Reviewable item count `S_op`.
    pub fn capacity(&self) -> Option<usize> {
        self.time_budget_s.map(|b| (b / self.seconds_per_item).floor() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    pub pipeline: PipelineConfig,
    pub network: NetworkModel,
    pub operator: OperatorModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioConfig::default(),
            pipeline: PipelineConfig::default(),
            network: NetworkModel::default(),
            operator: OperatorModel::default(),
        }
    }
}

const PRELIM: &str = include_str!("../../../scenarios/prelim.toml");
const FINAL: &str = include_str!("../../../scenarios/final.toml");

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(vec![ConfigError::new(
                "schema_version",
                format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            )]));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Loads a builtin scenario by name (`prelim`, `final`) or a TOML file.
    /// `prelim.toml` and `final.toml` fall back to the builtins when no such
    /// file exists.
    pub fn load(name_or_path: &str) -> Result<Self, Error> {
        match name_or_path {
            "prelim" => Self::from_toml(PRELIM),
            "final" => Self::from_toml(FINAL),
            "prelim.toml" | "final.toml" if !Path::new(name_or_path).exists() => Self::load(name_or_path.trim_end_matches(".toml")),
            path => {
                let text = std::fs::read_to_string(Path::new(path)).map_err(|e| Error::Io(format!("{path}: {e}")))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "prelim" | "final" => Some(Self::load(name).expect("builtin scenarios parse")),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let errors = validate_config(self);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// Checks every invariant of the run configuration, reporting each
/// violation separately.
pub fn validate_config(cfg: &RunConfig) -> Vec<ConfigError> {
    let mut errs = Vec::new();
    let mut positive = |field: &str, v: f64| {
        if !(v > 0.0 && v.is_finite()) {
            errs.push(ConfigError::new(field, format!("{field} must be > 0")));
        }
    };
    let p = &cfg.pipeline;
    positive("pipeline.d_min", p.d_min);
    positive("pipeline.alpha_min_deg", p.alpha_min_deg);
    positive("pipeline.d_max_detect", p.d_max_detect);
    positive("pipeline.theta_gate_deg", p.theta_gate_deg);
    positive("pipeline.bearing_sigma_deg", p.bearing_sigma_deg);
    positive("pipeline.range_sigma_frac", p.range_sigma_frac);
    positive("pipeline.size_tolerance", p.size_tolerance);
    positive("pipeline.d_base_min", p.d_base_min);
    positive("pipeline.n_sat", p.n_sat);
    positive("pipeline.e_max", p.e_max);
    positive("pipeline.operator_seconds_per_item", p.operator_seconds_per_item);
    positive("pipeline.detector_rate_hz", p.detector_rate_hz);
    positive("scenario.duration_s", cfg.scenario.duration_s);
    positive("scenario.frame_rate_hz", cfg.scenario.frame_rate_hz);
    positive("scenario.max_speed", cfg.scenario.max_speed);
    positive("scenario.cruise_speed", cfg.scenario.cruise_speed);
    positive("scenario.lane_spacing", cfg.scenario.lane_spacing);
    positive("scenario.noise.max_range", cfg.scenario.noise.max_range);
    positive("network.bandwidth_bytes_per_s", cfg.network.bandwidth_bytes_per_s);
    positive("operator.seconds_per_item", cfg.operator.seconds_per_item);

    let mut push = |field: String, msg: String| errs.push(ConfigError::new(&field, msg));
    let unit = |v: f64| (0.0..=1.0).contains(&v);

    if p.w_range < 0.0 || p.w_angle < 0.0 || p.w_range + p.w_angle <= 0.0 {
        push("pipeline.w_range".into(), "association weights must be >= 0 and not both zero".into());
    }
    if p.size_tolerance > 0.0 && p.size_tolerance < 1.0 {
        push("pipeline.size_tolerance".into(), "size_tolerance must be >= 1".into());
    }
    if p.selector_budget == 0 {
        push("pipeline.selector_budget".into(), "selector_budget must be >= 1".into());
    }
    if p.image_budget == 0 {
        push("pipeline.image_budget".into(), "image_budget must be >= 1".into());
    }
    if p.min_observations == 0 {
        push("pipeline.min_observations".into(), "min_observations must be >= 1".into());
    }
    if p.max_solve_observations == 0 {
        push("pipeline.max_solve_observations".into(), "max_solve_observations must be >= 1".into());
    }
    if p.s_max == 0 {
        push("pipeline.s_max".into(), "s_max must be > 0".into());
    }
    if !(unit(p.band_median) && unit(p.band_high) && p.band_median <= p.band_high) {
        push("pipeline.band_high".into(), "band cuts must satisfy 0 <= median <= high <= 1".into());
    }
    if p.detector_rate_hz > cfg.scenario.frame_rate_hz {
        push("pipeline.detector_rate_hz".into(), "detector_rate_hz cannot exceed frame_rate_hz".into());
    }
    for (label, lc) in &p.labels {
        if !unit(lc.threshold) {
            push(format!("pipeline.labels.{label}.threshold"), "threshold outside [0,1]".into());
        }
        if !(lc.color_multiplier > 0.0) {
            push(format!("pipeline.labels.{label}.color_multiplier"), "color_multiplier must be > 0".into());
        }
        if let Some([w, h]) = lc.dimensions {
            if !(w > 0.0 && h > 0.0) {
                push(format!("pipeline.labels.{label}.dimensions"), "dimensions must be > 0".into());
            }
        }
        let m = &lc.mask;
        let hue = |v: f64| (0.0..=360.0).contains(&v);
        if !(hue(m.hue_min) && hue(m.hue_max) && unit(m.sat_min) && unit(m.sat_max) && unit(m.val_min) && unit(m.val_max)) {
            push(format!("pipeline.labels.{label}.mask"), "mask bounds out of range".into());
        }
    }

    let s = &cfg.scenario;
    if s.robots == 0 {
        push("scenario.robots".into(), "robots must be >= 1".into());
    }
    if s.cruise_speed > s.max_speed {
        push("scenario.cruise_speed".into(), "cruise_speed cannot exceed max_speed".into());
    }
    if !(s.arena[0] > 0.0 && s.arena[1] > 0.0) {
        push("scenario.arena".into(), "arena dimensions must be > 0".into());
    }
    if s.pose_noise_sigma < 0.0 || s.drain_s < 0.0 {
        push("scenario.pose_noise_sigma".into(), "noise and drain must be >= 0".into());
    }
    if s.rig.count == 0 {
        push("scenario.rig.count".into(), "camera rig needs at least one camera".into());
    }
    if s.rig.width < 3 || s.rig.height < 3 {
        push("scenario.rig.width".into(), "images must be at least 3x3".into());
    }
    for cam in s.rig.cameras() {
        for e in cam.validate() {
            push("scenario.rig".into(), e);
        }
    }
    let n = &s.noise;
    for (label, v) in &n.tp_probability {
        if !unit(*v) {
            push(format!("scenario.noise.tp_probability.{label}"), "probability outside [0,1]".into());
        }
    }
    for (field, v) in [
        ("tp_probability_default", n.tp_probability_default),
        ("fp_probability_min", n.fp_probability_min),
        ("fp_probability_max", n.fp_probability_max),
        ("fp_color_match_probability", n.fp_color_match_probability),
        ("color_corruption_probability", n.color_corruption_probability),
        ("confidence_floor", n.confidence_floor),
        ("fp_burst_same_label_probability", n.fp_burst_same_label_probability),
    ] {
        if !unit(v) {
            push(format!("scenario.noise.{field}"), "probability outside [0,1]".into());
        }
    }
    for (field, v) in [
        ("fp_intensity_per_m", n.fp_intensity_per_m),
        ("fp_burst_extra_mean", n.fp_burst_extra_mean),
        ("fp_burst_radius", n.fp_burst_radius),
        ("fp_view_radius_mean", n.fp_view_radius_mean),
        ("fp_active_mean_s", n.fp_active_mean_s),
        ("fp_size_log_sigma", n.fp_size_log_sigma),
        ("bbox_jitter_px", n.bbox_jitter_px),
    ] {
        if !(v >= 0.0) {
            push(format!("scenario.noise.{field}"), "intensity must be >= 0".into());
        }
    }
    if !(n.blur_sigma_min > 0.0 && n.blur_sigma_min <= n.blur_sigma_max) {
        push("scenario.noise.blur_sigma_min".into(), "blur range must satisfy 0 < min <= max".into());
    }
    for b in [n.tp_confidence, n.fp_confidence] {
        if !(b.alpha > 0.0 && b.beta > 0.0) {
            push("scenario.noise.confidence".into(), "beta parameters must be > 0".into());
        }
    }

    let o = &cfg.operator;
    if !(unit(o.p_tp_accept) && unit(o.p_fp_accept)) {
        push("operator.p_tp_accept".into(), "acceptance probabilities outside [0,1]".into());
    }
    if let Some(b) = o.time_budget_s {
        if !(b >= 0.0) {
            push("operator.time_budget_s".into(), "time budget must be >= 0".into());
        }
    }
    for out in &cfg.network.outages {
        if !(out.start <= out.end) {
            push("network.outages".into(), "outage start must not exceed end".into());
        }
    }
    errs
}

mod defaults {
    pub fn threshold() -> f64 {
        0.5
    }
    pub fn color_multiplier() -> f64 {
        4.0
    }
    pub fn color() -> [u8; 3] {
        [200, 200, 200]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(errs: &[ConfigError]) -> Vec<String> {
        errs.iter().map(|e| e.to_string()).collect()
    }

    #[test]
    fn defaults_are_valid() {
        assert!(validate_config(&RunConfig::default()).is_empty());
    }

    #[test]
    fn builtins_are_valid() {
        for name in ["prelim", "final"] {
            let cfg = RunConfig::builtin(name).unwrap();
            assert!(validate_config(&cfg).is_empty(), "{name}: {:?}", fields(&validate_config(&cfg)));
        }
    }

    #[test]
    fn zero_d_min_is_reported() {
        let mut cfg = RunConfig::default();
        cfg.pipeline.d_min = 0.0;
        let errs = fields(&validate_config(&cfg));
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("d_min must be > 0"), "{errs:?}");
    }

    #[test]
    fn threshold_out_of_range_is_reported() {
        let mut cfg = RunConfig::default();
        cfg.pipeline.labels.get_mut(&Label::Backpack).unwrap().threshold = 1.5;
        let errs = fields(&validate_config(&cfg));
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("threshold outside [0,1]"));
        assert!(errs[0].contains("backpack"));
    }

    #[test]
    fn each_violation_reported_individually() {
        let mut cfg = RunConfig::default();
        cfg.pipeline.d_min = -1.0;
        cfg.pipeline.e_max = 0.0;
        cfg.scenario.robots = 0;
        assert_eq!(validate_config(&cfg).len(), 3);
    }

    #[test]
    fn toml_round_trip_and_version_check() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let err = RunConfig::from_toml("schema_version = 9").unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn hue_mask_wraps() {
        let red = HsvMask::hue_band(340.0, 20.0, 0.4);
        assert!(red.accepts(350.0, 0.9, 0.5));
        assert!(red.accepts(5.0, 0.9, 0.5));
        assert!(!red.accepts(180.0, 0.9, 0.5));
        assert!(!red.accepts(5.0, 0.1, 0.5));
    }
}
