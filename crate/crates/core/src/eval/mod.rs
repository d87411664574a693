//! Scoring against ground truth and stage-boundary precision/recall.

pub mod tables;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{GroundTruthObject, Source, SubmissionEntry};

pub use tables::{render_tables, RunCounts, StageCounts, Tables};

/// Distance to the nearest same-label truth object, if the label occurs.
pub fn localization_error(entry: &SubmissionEntry, truth: &[GroundTruthObject]) -> Option<f64> {
    truth.iter().filter(|g| g.label == entry.label).map(|g| g.position.distance(&entry.position)).min_by(f64::total_cmp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub total: usize,
    /// Truth id credited to each entry, in submission order.
    pub credited: Vec<Option<u32>>,
    pub errors: Vec<Option<f64>>,
}

impl Reward {
    pub fn per_entry(&self) -> impl Iterator<Item = u32> + '_ {
        self.credited.iter().map(|c| c.is_some() as u32)
    }
}

/// Each entry within `e_max` (inclusive) of a same-label truth object scores
/// one point; each truth object is credited at most once, pairing the
/// closest entry/object pairs first.
pub fn reward(submissions: &[SubmissionEntry], truth: &[GroundTruthObject], e_max: f64) -> Reward {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, s) in submissions.iter().enumerate() {
        for (j, g) in truth.iter().enumerate() {
            if g.label == s.label {
                let d = g.position.distance(&s.position);
                if d <= e_max {
                    pairs.push((d, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut credited = vec![None; submissions.len()];
    let mut used = vec![false; truth.len()];
    for (_, i, j) in pairs {
        if credited[i].is_none() && !used[j] {
            credited[i] = Some(truth[j].id);
            used[j] = true;
        }
    }
    Reward {
        total: credited.iter().filter(|c| c.is_some()).count(),
        credited,
        errors: submissions.iter().map(|s| localization_error(s, truth)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DetectionOutput,
    RobotOutput,
    BaseOutput,
    OperatorOutput,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::DetectionOutput, Stage::RobotOutput, Stage::BaseOutput, Stage::OperatorOutput];

    pub fn title(self) -> &'static str {
        match self {
            Stage::DetectionOutput => "Detection Output",
            Stage::RobotOutput => "Robot Output",
            Stage::BaseOutput => "Base Output",
            Stage::OperatorOutput => "Operator Output",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    ImageBased,
    ObjectBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: Stage,
    pub granularity: Granularity,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `None` when there are no artifacts at all.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub review_time_s: f64,
}

impl StageMetrics {
    pub fn from_counts(stage: Stage, granularity: Granularity, tp: usize, fp: usize, fn_: usize, seconds_per_item: f64) -> Self {
        StageMetrics {
            stage,
            granularity,
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            review_time_s: review_time_estimate(tp + fp, seconds_per_item),
        }
    }

    pub fn precision_text(&self) -> String {
        format_precision(self.precision)
    }

    pub fn recall_text(&self) -> String {
        format_recall(self.recall)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Counts one stage. `sources` holds the oracle association of every
/// artifact at the stage (detection, report, cluster or submission).
///
/// Image-based counts are per artifact. Object-based counts are per unique
/// physical object: each truth object reached counts once, and so does each
/// distinct false-positive object. Artifacts with an unknown source count as
/// one false object each. In both modes `fn` is the number of truth objects
/// no artifact reached.
pub fn stage_metrics(stage: Stage, granularity: Granularity, sources: &[Source], n_truth: usize, seconds_per_item: f64) -> StageMetrics {
    let truth_hit: BTreeSet<u32> = sources.iter().filter_map(|s| if let Source::Truth(id) = s { Some(*id) } else { None }).collect();
    let fn_ = n_truth.saturating_sub(truth_hit.len());
    let (tp, fp) = match granularity {
        Granularity::ImageBased => {
            let tp = sources.iter().filter(|s| matches!(s, Source::Truth(_))).count();
            (tp, sources.len() - tp)
        }
        Granularity::ObjectBased => {
            let fp_objects: BTreeSet<u32> =
                sources.iter().filter_map(|s| if let Source::FalsePositive(id) = s { Some(*id) } else { None }).collect();
            let unknown = sources.iter().filter(|s| matches!(s, Source::Unknown)).count();
            (truth_hit.len(), fp_objects.len() + unknown)
        }
    };
    StageMetrics::from_counts(stage, granularity, tp, fp, fn_, seconds_per_item)
}

/// The source most of an artifact's member detections came from. Ties go
/// to a truth object, then to the lowest id.
pub fn majority_source<'a>(members: impl IntoIterator<Item = &'a Source>) -> Source {
    let mut counts: std::collections::BTreeMap<&Source, usize> = std::collections::BTreeMap::new();
    for s in members {
        *counts.entry(s).or_default() += 1;
    }
    let rank = |s: &Source| match s {
        Source::Truth(_) => 0,
        Source::FalsePositive(_) => 1,
        Source::Unknown => 2,
    };
    counts
        .into_iter()
        .min_by(|(a, na), (b, nb)| nb.cmp(na).then(rank(a).cmp(&rank(b))).then(a.cmp(b)))
        .map(|(s, _)| *s)
        .unwrap_or(Source::Unknown)
}

pub fn review_time_estimate(items: usize, seconds_per_item: f64) -> f64 {
    items as f64 * seconds_per_item
}

/// Whole hours (rounded) from one hour up, otherwise minutes floored to the
/// half minute: `19h`, `35min`, `7.5min`.
pub fn format_review_time(seconds: f64) -> String {
    if seconds >= 3600.0 {
        format!("{}h", (seconds / 3600.0).round() as u64)
    } else {
        let halves = (seconds / 30.0 + 1e-9).floor() as u64;
        if halves.is_multiple_of(2) {
            format!("{}min", halves / 2)
        } else {
            format!("{}.5min", halves / 2)
        }
    }
}

/// One decimal, with exact 100% shown bare; `-` when undefined.
pub fn format_precision(p: Option<f64>) -> String {
    match p {
        None => "-".into(),
        Some(p) if p >= 1.0 => "100%".into(),
        Some(p) => format!("{:.1}%", p * 100.0),
    }
}

pub fn format_recall(r: Option<f64>) -> String {
    match r {
        None => "-".into(),
        Some(r) => format!("{:.0}%", r * 100.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, Position3};

    fn truth(id: u32, label: Label, x: f64, y: f64) -> GroundTruthObject {
        GroundTruthObject { id, label, position: Position3::new(x, y, 0.0) }
    }

    fn entry(label: Label, x: f64, y: f64) -> SubmissionEntry {
        SubmissionEntry { label, position: Position3::new(x, y, 0.0), cluster: 0, decided_at: 0.0 }
    }

    #[test]
    fn localization_cases() {
        let g = [truth(0, Label::Drill, 0.0, 0.0)];
        assert_eq!(localization_error(&entry(Label::Drill, 3.0, 4.0), &g), Some(5.0));
        assert_eq!(localization_error(&entry(Label::Rope, 3.0, 4.0), &g), None);
        let g2 = [truth(0, Label::Drill, 2.0, 0.0), truth(1, Label::Drill, 7.0, 0.0)];
        assert_eq!(localization_error(&entry(Label::Drill, 0.0, 0.0), &g2), Some(2.0));
    }

    #[test]
    fn reward_boundary_and_single_credit() {
        let g = [truth(0, Label::Cube, 0.0, 0.0)];
        assert_eq!(reward(&[entry(Label::Cube, 5.0, 0.0)], &g, 5.0).total, 1);
        assert_eq!(reward(&[entry(Label::Cube, 5.0 + 1e-9, 0.0)], &g, 5.0).total, 0);
        let two = reward(&[entry(Label::Cube, 1.0, 0.0), entry(Label::Cube, 0.5, 0.0)], &g, 5.0);
        assert_eq!(two.total, 1);
        assert_eq!(two.credited, vec![None, Some(0)]);
        assert_eq!(reward(&[], &g, 5.0).total, 0);
    }

    #[test]
    fn object_counts() {
        let s = [Source::Truth(1), Source::Truth(1), Source::FalsePositive(4), Source::FalsePositive(4), Source::Unknown];
        let m = stage_metrics(Stage::RobotOutput, Granularity::ObjectBased, &s, 3, 7.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 2, 2));
        let m = stage_metrics(Stage::RobotOutput, Granularity::ImageBased, &s, 3, 7.5);
        assert_eq!((m.tp, m.fp, m.fn_), (2, 3, 2));
        assert_eq!(m.review_time_s, 37.5);
        let empty = stage_metrics(Stage::BaseOutput, Granularity::ObjectBased, &[], 0, 7.5);
        assert_eq!((empty.precision, empty.recall), (None, None));
    }

    #[test]
    fn majority_prefers_truth_on_ties() {
        let s = [Source::FalsePositive(2), Source::Truth(5)];
        assert_eq!(majority_source(&s), Source::Truth(5));
        let s = [Source::FalsePositive(2), Source::FalsePositive(2), Source::Truth(5)];
        assert_eq!(majority_source(&s), Source::FalsePositive(2));
        assert_eq!(majority_source(&[]), Source::Unknown);
    }

    #[test]
    fn time_rendering() {
        assert_eq!(format_review_time(0.0), "0min");
        assert_eq!(format_review_time(45.0), "0.5min");
        assert_eq!(format_review_time(3599.0), "59.5min");
        assert_eq!(format_review_time(3600.0), "1h");
        assert_eq!(format_review_time(5399.0), "1h");
        assert_eq!(format_review_time(5400.0), "2h");
    }

    #[test]
    fn percent_rendering() {
        assert_eq!(format_precision(Some(1.0)), "100%");
        assert_eq!(format_precision(None), "-");
        assert_eq!(format_precision(Some(0.0)), "0.0%");
        assert_eq!(format_recall(Some(1.0)), "100%");
        assert_eq!(format_recall(Some(0.5)), "50%");
    }
}
