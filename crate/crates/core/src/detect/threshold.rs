//! Per-label confidence thresholds chosen to maximize F1.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::Label;

/// One labelled calibration sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub label: Label,
    pub confidence: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Set when the label had no positive samples.
    pub degenerate: bool,
}

impl ThresholdFit {
    pub fn f1(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }
}

pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        2.0 * tp as f64 / den as f64
    }
}

/// Exact comparison of `2a/(2a+b+c)` style ratios via cross-multiplication.
fn cmp_f1(a: (usize, usize, usize), b: (usize, usize, usize)) -> Ordering {
    let num = |t: (usize, usize, usize)| 2 * t.0 as u128;
    let den = |t: (usize, usize, usize)| (2 * t.0 + t.1 + t.2) as u128;
    match (den(a), den(b)) {
        (0, 0) => Ordering::Equal,
        (0, _) => 0u128.cmp(&num(b)),
        (_, 0) => num(a).cmp(&0),
        (da, db) => (num(a) * db).cmp(&(num(b) * da)),
    }
}

/// Threshold maximizing F1 for one label's `(confidence, positive)` samples.
///
/// Candidates are the distinct confidences present; a detection passes when
/// `c >= t`. Among equally good candidates the lowest wins.
pub fn fit_threshold(samples: &[(f64, bool)]) -> ThresholdFit {
    let positives = samples.iter().filter(|s| s.1).count();
    if positives == 0 {
        return ThresholdFit { threshold: 0.0, tp: 0, fp: samples.len(), fn_: 0, degenerate: true };
    }
    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Sweep from the highest confidence down; each distinct value closes a group.
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<ThresholdFit> = None;
    let mut i = 0;
    while i < sorted.len() {
        let c = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == c {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let cand = ThresholdFit { threshold: c, tp, fp, fn_: positives - tp, degenerate: false };
        let better = match &best {
            None => true,
            // lower thresholds come later in the sweep, so ties replace
            Some(b) => cmp_f1((cand.tp, cand.fp, cand.fn_), (b.tp, b.fp, b.fn_)) != Ordering::Less,
        };
        if better {
            best = Some(cand);
        }
    }
    best.expect("at least one positive sample")
}

/// Fits every label present in the calibration set.
pub fn calibrate_thresholds(samples: &[CalibrationSample]) -> BTreeMap<Label, ThresholdFit> {
    let mut by_label: BTreeMap<Label, Vec<(f64, bool)>> = BTreeMap::new();
    for s in samples {
        by_label.entry(s.label.clone()).or_default().push((s.confidence, s.positive));
    }
    by_label
        .into_iter()
        .map(|(label, v)| {
            let fit = fit_threshold(&v);
            if fit.degenerate {
                log::warn!("label {label}: no positive calibration samples, threshold set to 0");
            }
            (label, fit)
        })
        .collect()
}
