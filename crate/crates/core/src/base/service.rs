//! Base-station state behind the review API: report intake, cluster
//! queries, operator decisions, submission and the update feed.
//!
//! All mutations go through `&mut self`; callers serialize access (the HTTP
//! server wraps one instance in a lock). Every mutation bumps a sequence
//! number and appends to the update feed, and decisions are also audited.

use serde::{Deserialize, Serialize};

use crate::comms::{ObservationScore, Report, ReportImage};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{Label, Position3, RobotId, SubmissionEntry};

use super::{band, detection_scorability, rank_clusters, Band, ClusterSet, ReportCluster, ReviewState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterFilter {
    pub band: Option<Band>,
    pub label: Option<Label>,
    pub state: Option<ReviewState>,
}

impl ClusterFilter {
    fn matches(&self, s: &ClusterSummary) -> bool {
        self.band.is_none_or(|b| b == s.band)
            && self.label.as_ref().is_none_or(|l| l == &s.label)
            && self.state.is_none_or(|st| st == s.state)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterOrder {
    #[default]
    Rank,
    Created,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: u64,
    pub label: Label,
    /// Position that would be submitted.
    pub position: Position3,
    pub scorability: f64,
    pub band: Band,
    pub rank: usize,
    pub state: ReviewState,
    pub adjusted: bool,
    pub n_reports: usize,
    pub n_detections: usize,
    pub first_report_at: f64,
    pub updated_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    #[serde(flatten)]
    pub score: ObservationScore,
    pub robot: RobotId,
    pub scorability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDetail {
    #[serde(flatten)]
    pub summary: ClusterSummary,
    pub representative_position: Position3,
    pub adjusted_position: Option<Position3>,
    pub decided_at: Option<f64>,
    pub reports: Vec<u64>,
    /// Images of the newest report from each contributing candidate.
    pub images: Vec<ReportImage>,
    pub detections: Vec<DetectionScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: f64,
    pub action: String,
    pub cluster: Option<u64>,
    pub from: Option<ReviewState>,
    pub to: Option<ReviewState>,
    pub position: Option<Position3>,
    pub entries: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    ClusterCreated,
    ClusterUpdated,
    ClustersMerged,
    Decided,
    Undone,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Update {
    pub seq: u64,
    pub at: f64,
    pub kind: UpdateKind,
    pub cluster: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merged: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct BaseStation {
    cfg: PipelineConfig,
    clusters: ClusterSet,
    audit: Vec<AuditEntry>,
    updates: Vec<Update>,
    submission: Vec<SubmissionEntry>,
    reports_received: usize,
    seq: u64,
}

impl BaseStation {
    pub fn new(cfg: &PipelineConfig) -> Self {
        BaseStation {
            cfg: cfg.clone(),
            clusters: ClusterSet::new(),
            audit: Vec::new(),
            updates: Vec::new(),
            submission: Vec::new(),
            reports_received: 0,
            seq: 0,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Sequence number of the latest mutation.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn reports_received(&self) -> usize {
        self.reports_received
    }

    pub fn clusters(&self) -> &[ReportCluster] {
        self.clusters.clusters()
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn submission(&self) -> &[SubmissionEntry] {
        &self.submission
    }

    pub fn updates_since(&self, seq: u64) -> &[Update] {
        let start = self.updates.partition_point(|u| u.seq <= seq);
        &self.updates[start..]
    }

    fn bump(&mut self, at: f64, kind: UpdateKind, cluster: Option<u64>, merged: Vec<u64>) -> u64 {
        self.seq += 1;
        self.updates.push(Update { seq: self.seq, at, kind, cluster, merged });
        self.seq
    }

    pub fn ingest(&mut self, report: Report, at: f64) -> u64 {
        self.reports_received += 1;
        let out = self.clusters.ingest(report, at, &self.cfg);
        let kind = if out.created {
            UpdateKind::ClusterCreated
        } else if out.merged.is_empty() {
            UpdateKind::ClusterUpdated
        } else {
            UpdateKind::ClustersMerged
        };
        let seq = self.bump(at, kind, Some(out.cluster), out.merged.clone());
        for m in out.merged {
            self.audit.push(AuditEntry {
                seq,
                at,
                action: "merge".into(),
                cluster: Some(m),
                from: None,
                to: None,
                position: None,
                entries: None,
            });
        }
        out.cluster
    }

    pub fn list(&self, filter: &ClusterFilter, order: ClusterOrder) -> Vec<ClusterSummary> {
        let ranked = rank_clusters(self.clusters.clusters(), &self.cfg);
        let mut out: Vec<ClusterSummary> = match order {
            ClusterOrder::Rank => ranked.iter().filter_map(|r| self.clusters.get(r.id).map(|c| self.summary(c, r.rank))).collect(),
            ClusterOrder::Created => self
                .clusters
                .clusters()
                .iter()
                .map(|c| {
                    let rank = ranked.iter().position(|r| r.id == c.id).unwrap_or(0);
                    self.summary(c, rank)
                })
                .collect(),
        };
        out.retain(|s| filter.matches(s));
        out
    }

    fn summary(&self, c: &ReportCluster, rank: usize) -> ClusterSummary {
        ClusterSummary {
            id: c.id,
            label: c.label.clone(),
            position: c.effective_position(),
            scorability: c.scorability,
            band: band(c.scorability, &self.cfg),
            rank,
            state: c.state,
            adjusted: c.adjusted_position.is_some(),
            n_reports: c.members.len(),
            n_detections: c.n_detections,
            first_report_at: c.first_report_at,
            updated_at: c.updated_at,
        }
    }

    fn rank_of(&self, id: u64) -> usize {
        rank_clusters(self.clusters.clusters(), &self.cfg).iter().position(|r| r.id == id).unwrap_or(0)
    }

    pub fn get(&self, id: u64) -> Result<ClusterDetail> {
        let c = self.clusters.get(id).ok_or(Error::UnknownCluster(id))?;
        let mut newest: std::collections::BTreeMap<u64, &Report> = std::collections::BTreeMap::new();
        for r in &c.members {
            let slot = newest.entry(r.candidate).or_insert(r);
            if r.n_observations() > slot.n_observations() {
                *slot = r;
            }
        }
        let mut images: Vec<ReportImage> = Vec::new();
        for r in newest.values() {
            for img in &r.images {
                if !images.iter().any(|i| i.image_ref == img.image_ref) {
                    images.push(img.clone());
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut detections = Vec::new();
        for r in &c.members {
            for o in &r.observations {
                if seen.insert(o.detection_id.clone()) {
                    detections.push(DetectionScore {
                        score: o.clone(),
                        robot: r.robot,
                        scorability: detection_scorability(o.confidence, o.color_score, o.size_score),
                    });
                }
            }
        }
        detections.sort_by(|a, b| a.score.timestamp.total_cmp(&b.score.timestamp));
        Ok(ClusterDetail {
            summary: self.summary(c, self.rank_of(id)),
            representative_position: c.position,
            adjusted_position: c.adjusted_position,
            decided_at: c.decided_at,
            reports: c.members.iter().map(|r| r.id).collect(),
            images,
            detections,
        })
    }

    /// Moves an unreviewed cluster to accepted or rejected. An adjusted
    /// position replaces the representative one in later submissions.
    pub fn decide(&mut self, id: u64, decision: Decision, adjusted: Option<Position3>, at: f64) -> Result<ClusterSummary> {
        let to = match decision {
            Decision::Accept => ReviewState::Accepted,
            Decision::Reject => ReviewState::Rejected,
        };
        let c = self.clusters.get_mut(id).ok_or(Error::UnknownCluster(id))?;
        if c.state != ReviewState::Unreviewed {
            return Err(Error::Transition { cluster: id, from: c.state.as_str(), to: to.as_str() });
        }
        c.state = to;
        c.decided_at = Some(at);
        if adjusted.is_some() {
            c.adjusted_position = adjusted;
        }
        let seq = self.bump(at, UpdateKind::Decided, Some(id), Vec::new());
        self.audit.push(AuditEntry {
            seq,
            at,
            action: to.as_str().trim_end_matches("ed").to_string(),
            cluster: Some(id),
            from: Some(ReviewState::Unreviewed),
            to: Some(to),
            position: adjusted,
            entries: None,
        });
        Ok(self.summary(self.clusters.get(id).expect("exists"), self.rank_of(id)))
    }

    /// Returns a decided cluster to unreviewed, keeping any adjusted position.
    pub fn undo(&mut self, id: u64, at: f64) -> Result<ClusterSummary> {
        let c = self.clusters.get_mut(id).ok_or(Error::UnknownCluster(id))?;
        if c.state == ReviewState::Unreviewed {
            return Err(Error::Transition { cluster: id, from: "unreviewed", to: "unreviewed" });
        }
        let from = c.state;
        c.state = ReviewState::Unreviewed;
        c.decided_at = None;
        let seq = self.bump(at, UpdateKind::Undone, Some(id), Vec::new());
        self.audit.push(AuditEntry {
            seq,
            at,
            action: "undo".into(),
            cluster: Some(id),
            from: Some(from),
            to: Some(ReviewState::Unreviewed),
            position: None,
            entries: None,
        });
        Ok(self.summary(self.clusters.get(id).expect("exists"), self.rank_of(id)))
    }

    /// Materializes the accepted clusters, in rank order, as the submission
    /// set. Fails without changing the previous submission when more than
    /// `s_max` clusters are accepted.
    pub fn submit(&mut self, at: f64) -> Result<Vec<SubmissionEntry>> {
        let ranked = rank_clusters(self.clusters.clusters(), &self.cfg);
        let entries: Vec<SubmissionEntry> = ranked
            .iter()
            .filter_map(|r| self.clusters.get(r.id))
            .filter(|c| c.state == ReviewState::Accepted)
            .map(|c| SubmissionEntry {
                label: c.label.clone(),
                position: c.effective_position(),
                cluster: c.id,
                decided_at: c.decided_at.unwrap_or(at),
            })
            .collect();
        if entries.len() > self.cfg.s_max {
            return Err(Error::SubmissionBudget { accepted: entries.len(), limit: self.cfg.s_max });
        }
        self.submission = entries.clone();
        let seq = self.bump(at, UpdateKind::Submitted, None, Vec::new());
        self.audit.push(AuditEntry {
            seq,
            at,
            action: "submit".into(),
            cluster: None,
            from: None,
            to: None,
            position: None,
            entries: Some(entries.len()),
        });
        Ok(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::report;
    use super::*;

    fn station_with(n: usize) -> BaseStation {
        let mut b = BaseStation::new(&PipelineConfig { s_max: 3, ..Default::default() });
        for i in 0..n {
            b.ingest(report(i as u64, Label::Helmet, 20.0 * i as f64, 0.0, &[0.5, 0.6]), i as f64);
        }
        b
    }

    #[test]
    fn accept_and_submit() {
        let mut b = station_with(3);
        for id in 0..3 {
            b.decide(id, Decision::Accept, None, 10.0).unwrap();
        }
        assert_eq!(b.submit(11.0).unwrap().len(), 3);
        assert_eq!(b.submission().len(), 3);
    }

    #[test]
    fn over_budget_submission_is_refused() {
        let mut b = station_with(4);
        for id in 0..4 {
            b.decide(id, Decision::Accept, None, 10.0).unwrap();
        }
        assert!(matches!(b.submit(11.0), Err(Error::SubmissionBudget { accepted: 4, limit: 3 })));
        assert!(b.submission().is_empty());
    }

    #[test]
    fn unknown_cluster_and_bad_transitions() {
        let mut b = station_with(1);
        assert!(matches!(b.decide(9, Decision::Accept, None, 0.0), Err(Error::UnknownCluster(9))));
        assert!(matches!(b.undo(0, 0.0), Err(Error::Transition { .. })));
        b.decide(0, Decision::Reject, None, 1.0).unwrap();
        assert!(matches!(b.decide(0, Decision::Accept, None, 2.0), Err(Error::Transition { .. })));
        b.undo(0, 3.0).unwrap();
        b.decide(0, Decision::Accept, None, 4.0).unwrap();
        let actions: Vec<_> = b.audit().iter().map(|a| a.action.as_str()).collect();
        assert_eq!(actions, vec!["reject", "undo", "accept"]);
    }

    #[test]
    fn adjusted_position_reaches_submission() {
        let mut b = station_with(2);
        let p = Position3::new(1.0, 2.0, 3.0);
        b.decide(1, Decision::Accept, Some(p), 5.0).unwrap();
        let s = b.submit(6.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].position, p);
        assert_eq!(s[0].cluster, 1);
        assert_eq!(s[0].decided_at, 5.0);
    }

    #[test]
    fn update_feed_and_filters() {
        let mut b = station_with(2);
        assert_eq!(b.updates_since(0).len(), 2);
        let mark = b.seq();
        b.ingest(report(7, Label::Helmet, 1.0, 0.0, &[0.9, 0.9, 0.9]), 3.0);
        let ups = b.updates_since(mark);
        assert_eq!(ups.len(), 1);
        assert_eq!(ups[0].kind, UpdateKind::ClusterUpdated);
        let high = b.list(&ClusterFilter { band: Some(Band::High), ..Default::default() }, ClusterOrder::Rank);
        assert!(high.iter().all(|s| s.band == Band::High));
        let all = b.list(&ClusterFilter::default(), ClusterOrder::Rank);
        assert!(all.windows(2).all(|w| w[0].scorability >= w[1].scorability));
        let d = b.get(0).unwrap();
        assert_eq!(d.reports.len(), 2);
        assert_eq!(d.detections.len(), 5);
    }
}
