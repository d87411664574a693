//! HSV colour scoring and the confidence × colour gate.

use serde::{Deserialize, Serialize};

use crate::config::{LabelConfig, PipelineConfig};
use crate::model::Detection;

/// Hexcone RGB → HSV. Hue in degrees `[0, 360)`, zero when undefined.
pub fn rgb_to_hsv(p: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = p.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

/// Fraction of patch pixels accepted by the label mask.
pub fn mask_fraction(lc: &LabelConfig, patch: &[[u8; 3]]) -> f64 {
    if patch.is_empty() {
        return 0.0;
    }
    let hits = patch
        .iter()
        .filter(|&&px| {
            let (h, s, v) = rgb_to_hsv(px);
            lc.mask.accepts(h, s, v)
        })
        .count();
    hits as f64 / patch.len() as f64
}

/// `min(β·p, 1)` where `p` is the masked pixel fraction.
pub fn color_score(lc: &LabelConfig, patch: &[[u8; 3]]) -> f64 {
    score_from_fraction(lc.color_multiplier, mask_fraction(lc, patch))
}

pub fn score_from_fraction(multiplier: f64, fraction: f64) -> f64 {
    (multiplier * fraction).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    BelowThreshold,
    ColorMismatch,
    UnknownLabel,
}

/// Detector threshold gate: `c >= t_l`.
pub fn passes_threshold(det: &Detection, cfg: &PipelineConfig) -> bool {
    det.confidence >= cfg.threshold(&det.label)
}

/// Colour gate: annotates the colour score and passes iff `c·g_col >= t_l`.
/// Labels without configuration are dropped.
pub fn filter_detection(mut det: Detection, patch: &[[u8; 3]], cfg: &PipelineConfig) -> (Detection, Option<DropReason>) {
    let Some(lc) = cfg.label(&det.label) else {
        return (det, Some(DropReason::UnknownLabel));
    };
    let g = color_score(lc, patch);
    det.color_score = Some(g);
    let verdict = apply_color_gate(&det, g, lc.threshold);
    (det, verdict)
}

pub fn apply_color_gate(det: &Detection, color: f64, threshold: f64) -> Option<DropReason> {
    if det.confidence < threshold {
        Some(DropReason::BelowThreshold)
    } else if det.confidence * color < threshold {
        Some(DropReason::ColorMismatch)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::HsvMask;
    use crate::model::{BoundingBox, CameraId, Label, RobotId};

    fn det(c: f64) -> Detection {
        Detection {
            id: "d".into(),
            robot: RobotId(0),
            camera: CameraId(0),
            timestamp: 0.0,
            label: Label::Backpack,
            confidence: c,
            bbox: BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap(),
            image_ref: "img".into(),
            color_score: None,
            range: None,
            size_score: None,
        }
    }

    #[test]
    fn hsv_reference_colors() {
        assert_eq!(rgb_to_hsv([255, 0, 0]), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0, 0, 0]), (0.0, 0.0, 0.0));
        let (h, s, v) = rgb_to_hsv([128, 128, 0]);
        assert!((h - 60.0).abs() < 1e-12);
        assert_eq!(s, 1.0);
        assert!((v - 128.0 / 255.0).abs() < 1e-12);
        assert!((rgb_to_hsv([0, 0, 255]).0 - 240.0).abs() < 1e-12);
        assert!((rgb_to_hsv([255, 0, 1]).0 - 359.7647).abs() < 1e-3);
    }

    #[test]
    fn score_arithmetic() {
        assert_eq!(score_from_fraction(4.0, 0.0), 0.0);
        assert_eq!(score_from_fraction(3.0, 0.5), 1.0);
        assert!((score_from_fraction(2.0, 0.2) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn patch_fraction_through_mask() {
        let mut lc = crate::config::default_labels()[&Label::Backpack].clone();
        lc.mask = HsvMask::hue_band(340.0, 20.0, 0.4);
        lc.color_multiplier = 2.0;
        let patch = [[220, 10, 10], [90, 90, 90], [90, 90, 90], [90, 90, 90], [90, 90, 90]];
        assert!((color_score(&lc, &patch) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn gate_decisions() {
        assert_eq!(apply_color_gate(&det(0.8), 1.0, 0.5), None);
        assert_eq!(apply_color_gate(&det(0.8), 0.4, 0.5), Some(DropReason::ColorMismatch));
        assert_eq!(apply_color_gate(&det(0.5), 1.0, 0.5), None);
    }

    #[test]
    fn unknown_label_dropped() {
        let mut cfg = PipelineConfig::default();
        cfg.labels.clear();
        let (_, r) = filter_detection(det(0.9), &[[255, 0, 0]], &cfg);
        assert_eq!(r, Some(DropReason::UnknownLabel));
    }
}
