//! Base-station reconciliation of incoming reports into clusters, cluster
//! scorability, and ranking.

pub mod service;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::comms::{ObservationScore, Report};
use crate::config::{AlphaForm, PipelineConfig};
use crate::model::{Label, Position3};

pub use service::{AuditEntry, BaseStation, ClusterDetail, ClusterFilter, ClusterOrder, ClusterSummary, Decision, Update, UpdateKind};

/// `g_D = c · g_col · g_size`, clamped to [0, 1].
pub fn detection_scorability(confidence: f64, color: f64, size: f64) -> f64 {
    (confidence * color * size).clamp(0.0, 1.0)
}

/// Observation-count penalty `α(n)`.
pub fn alpha(n: usize, n_sat: f64, form: AlphaForm) -> f64 {
    let n = n as f64;
    match form {
        AlphaForm::Linear => (n / n_sat).min(1.0),
        AlphaForm::Exponential => 1.0 - (-n / n_sat).exp(),
    }
}

/// `g_R = α(n) · mean g_D` over the given observations.
pub fn scorability_of<'a>(obs: impl IntoIterator<Item = &'a ObservationScore>, n_sat: f64, form: AlphaForm) -> f64 {
    let (n, sum) =
        obs.into_iter().fold((0usize, 0.0), |(n, s), o| (n + 1, s + detection_scorability(o.confidence, o.color_score, o.size_score)));
    if n == 0 {
        return 0.0;
    }
    alpha(n, n_sat, form) * sum / n as f64
}

/// Scorability over the distinct detections of a set of reports. Repeated
/// snapshots of one candidate share detections, which count once.
pub fn report_scorability<'a>(reports: impl IntoIterator<Item = &'a Report>, cfg: &PipelineConfig) -> (f64, usize) {
    let mut unique: BTreeMap<&str, &ObservationScore> = BTreeMap::new();
    for r in reports {
        for o in &r.observations {
            unique
                .entry(o.detection_id.as_str())
                .and_modify(|cur| {
                    if o.scorability() > cur.scorability() {
                        *cur = o;
                    }
                })
                .or_insert(o);
        }
    }
    (scorability_of(unique.values().copied(), cfg.n_sat, cfg.alpha_form), unique.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    High,
    Median,
    Low,
}

pub fn band(g: f64, cfg: &PipelineConfig) -> Band {
    if g >= cfg.band_high {
        Band::High
    } else if g >= cfg.band_median {
        Band::Median
    } else {
        Band::Low
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Unreviewed,
    Accepted,
    Rejected,
}

impl ReviewState {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewState::Unreviewed => "unreviewed",
            ReviewState::Accepted => "accepted",
            ReviewState::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCluster {
    pub id: u64,
    pub label: Label,
    /// Scorability-weighted mean of member report positions.
    pub position: Position3,
    pub members: Vec<Report>,
    pub scorability: f64,
    pub n_detections: usize,
    pub state: ReviewState,
    pub adjusted_position: Option<Position3>,
    pub decided_at: Option<f64>,
    pub first_report_at: f64,
    pub updated_at: f64,
}

impl ReportCluster {
    /// Position used for submission: the operator's adjustment if any.
    pub fn effective_position(&self) -> Position3 {
        self.adjusted_position.unwrap_or(self.position)
    }

    fn refresh(&mut self, cfg: &PipelineConfig) {
        let (g, n) = report_scorability(&self.members, cfg);
        self.scorability = g;
        self.n_detections = n;
        let weights: Vec<f64> = self.members.iter().map(|r| report_scorability([r], cfg).0).collect();
        let total: f64 = weights.iter().sum();
        let (weights, total) = if total > 0.0 { (weights, total) } else { (vec![1.0; self.members.len()], self.members.len() as f64) };
        let mut p = nalgebra::Vector3::zeros();
        for (r, w) in self.members.iter().zip(&weights) {
            p += r.position.vector() * *w;
        }
        self.position = (p / total).into();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub cluster: u64,
    pub created: bool,
    /// Clusters absorbed because the report bridged them.
    pub merged: Vec<u64>,
}

/// Incremental single-linkage grouping: a report joins the oldest cluster
/// holding a same-label report within `d_base_min`, and any other clusters
/// it also reaches are folded into that one.
#[derive(Debug, Clone, Default)]
pub struct ClusterSet {
    clusters: Vec<ReportCluster>,
    next_id: u64,
}

impl ClusterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// In creation order.
    pub fn clusters(&self) -> &[ReportCluster] {
        &self.clusters
    }

    pub fn get(&self, id: u64) -> Option<&ReportCluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut ReportCluster> {
        self.clusters.iter_mut().find(|c| c.id == id)
    }

    pub fn ingest(&mut self, report: Report, at: f64, cfg: &PipelineConfig) -> IngestOutcome {
        let reach = cfg.d_base_min;
        let hits: Vec<usize> = self
            .clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == report.label && c.members.iter().any(|m| m.position.distance(&report.position) < reach))
            .map(|(i, _)| i)
            .collect();

        let Some(&first) = hits.first() else {
            let id = self.next_id;
            self.next_id += 1;
            let mut c = ReportCluster {
                id,
                label: report.label.clone(),
                position: report.position,
                members: vec![report],
                scorability: 0.0,
                n_detections: 0,
                state: ReviewState::Unreviewed,
                adjusted_position: None,
                decided_at: None,
                first_report_at: at,
                updated_at: at,
            };
            c.refresh(cfg);
            self.clusters.push(c);
            return IngestOutcome { cluster: id, created: true, merged: Vec::new() };
        };

        let mut merged = Vec::new();
        for &i in hits[1..].iter().rev() {
            let absorbed = self.clusters.remove(i);
            merged.push(absorbed.id);
            let target = &mut self.clusters[first];
            target.first_report_at = target.first_report_at.min(absorbed.first_report_at);
            target.members.extend(absorbed.members);
        }
        merged.reverse();
        let target = &mut self.clusters[first];
        target.members.push(report);
        target.updated_at = at;
        target.refresh(cfg);
        IngestOutcome { cluster: target.id, created: false, merged }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: u64,
    pub rank: usize,
    pub scorability: f64,
    pub band: Band,
}

/// Descending scorability; ties go to the earlier first report, then the
/// lower id.
pub fn rank_clusters(clusters: &[ReportCluster], cfg: &PipelineConfig) -> Vec<Ranked> {
    let mut order: Vec<&ReportCluster> = clusters.iter().collect();
    order.sort_by(|a, b| {
        b.scorability.total_cmp(&a.scorability).then(a.first_report_at.total_cmp(&b.first_report_at)).then(a.id.cmp(&b.id))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(rank, c)| Ranked { id: c.id, rank, scorability: c.scorability, band: band(c.scorability, cfg) })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::RobotId;

    pub fn report(id: u64, label: Label, x: f64, y: f64, scores: &[f64]) -> Report {
        Report {
            id,
            robot: RobotId(0),
            candidate: id,
            created_at: 0.0,
            label,
            position: Position3::new(x, y, 0.0),
            covariance: [[0.0; 3]; 3],
            observations: scores
                .iter()
                .enumerate()
                .map(|(i, &c)| ObservationScore {
                    detection_id: format!("{id}-{i}"),
                    timestamp: 0.0,
                    confidence: c,
                    color_score: 1.0,
                    size_score: 1.0,
                })
                .collect(),
            images: Vec::new(),
            priority: 0.0,
            payload_bytes: 0,
        }
    }

    #[test]
    fn scorability_arithmetic() {
        let cfg = PipelineConfig::default();
        assert!((detection_scorability(0.9, 1.0, 0.8) - 0.72).abs() < 1e-12);
        assert_eq!(detection_scorability(0.9, 0.0, 0.8), 0.0);
        assert_eq!(detection_scorability(1.0, 1.0, 1.0), 1.0);
        let (g, n) = report_scorability([&report(0, Label::Cube, 0.0, 0.0, &[0.9, 0.6, 0.6])], &cfg);
        assert!((g - 0.7).abs() < 1e-12);
        assert_eq!(n, 3);
        let (g, _) = report_scorability([&report(0, Label::Cube, 0.0, 0.0, &[1.0])], &cfg);
        assert!((g - 1.0 / 3.0).abs() < 1e-12);
        let many = report(0, Label::Cube, 0.0, 0.0, &[0.4; 500]);
        assert!((report_scorability([&many], &cfg).0 - 0.4).abs() < 1e-12);
        assert!((alpha(3, 3.0, AlphaForm::Exponential) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn repeated_snapshots_count_detections_once() {
        let cfg = PipelineConfig::default();
        let a = report(0, Label::Cube, 0.0, 0.0, &[0.9, 0.6]);
        let mut b = report(0, Label::Cube, 0.0, 0.0, &[0.9, 0.6, 0.6, 0.3]);
        b.id = 1;
        assert_eq!(report_scorability([&a, &b], &cfg), report_scorability([&b], &cfg));
    }

    #[test]
    fn single_linkage_cases() {
        let cfg = PipelineConfig::default();
        let mut s = ClusterSet::new();
        s.ingest(report(0, Label::Rope, 0.0, 0.0, &[0.5]), 0.0, &cfg);
        s.ingest(report(1, Label::Rope, 1.0, 0.0, &[0.5]), 1.0, &cfg);
        assert_eq!(s.clusters().len(), 1);

        let mut s = ClusterSet::new();
        s.ingest(report(0, Label::Rope, 0.0, 0.0, &[0.5]), 0.0, &cfg);
        s.ingest(report(1, Label::Cube, 0.0, 0.0, &[0.5]), 1.0, &cfg);
        assert_eq!(s.clusters().len(), 2);

        let mut s = ClusterSet::new();
        s.ingest(report(0, Label::Rope, 0.0, 0.0, &[0.5]), 0.0, &cfg);
        s.ingest(report(1, Label::Rope, 8.0, 0.0, &[0.5]), 1.0, &cfg);
        assert_eq!(s.clusters().len(), 2);
        let out = s.ingest(report(2, Label::Rope, 4.0, 0.0, &[0.5]), 2.0, &cfg);
        assert_eq!(out, IngestOutcome { cluster: 0, created: false, merged: vec![1] });
        assert_eq!(s.clusters().len(), 1);
        assert_eq!(s.clusters()[0].members.len(), 3);
    }

    #[test]
    fn representative_is_weighted_mean() {
        let cfg = PipelineConfig::default();
        let mut s = ClusterSet::new();
        s.ingest(report(0, Label::Rope, 0.0, 0.0, &[0.9, 0.9, 0.9]), 0.0, &cfg);
        s.ingest(report(1, Label::Rope, 3.0, 0.0, &[0.3, 0.3, 0.3]), 1.0, &cfg);
        let x = s.clusters()[0].position.x;
        assert!((x - 3.0 * 0.3 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn ranking_order_ties_and_bands() {
        let cfg = PipelineConfig::default();
        let mk = |id: u64, g: f64, t: f64| ReportCluster {
            id,
            label: Label::Cube,
            position: Position3::ORIGIN,
            members: Vec::new(),
            scorability: g,
            n_detections: 0,
            state: ReviewState::Unreviewed,
            adjusted_position: None,
            decided_at: None,
            first_report_at: t,
            updated_at: t,
        };
        let r = rank_clusters(&[mk(0, 0.9, 0.0), mk(1, 0.1, 0.0), mk(2, 0.5, 0.0)], &cfg);
        assert_eq!(r.iter().map(|x| x.id).collect::<Vec<_>>(), vec![0, 2, 1]);
        assert_eq!(r.iter().map(|x| x.band).collect::<Vec<_>>(), vec![Band::High, Band::Median, Band::Low]);
        let r = rank_clusters(&[mk(0, 0.5, 9.0), mk(1, 0.5, 2.0)], &cfg);
        assert_eq!(r[0].id, 1);
        assert_eq!(band(0.65, &cfg), Band::High);
    }
}
