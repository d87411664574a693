//! Report construction: eligibility, priority, and role-tagged images.

use serde::{Deserialize, Serialize};

use crate::config::{NetworkModel, PipelineConfig};
use crate::model::{Label, Position3, RobotId};
use crate::reconcile::{ObjectCandidate, ObservationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Brightest,
    LeastBlurry,
    HighestConfidence,
    Closest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportImage {
    pub image_ref: String,
    pub roles: Vec<ImageRole>,
}

/// Per-observation score tuple carried on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationScore {
    pub detection_id: String,
    pub timestamp: f64,
    pub confidence: f64,
    pub color_score: f64,
    pub size_score: f64,
}

impl ObservationScore {
    /// Detection scorability `c · g_col · g_size`.
    pub fn scorability(&self) -> f64 {
        self.confidence * self.color_score * self.size_score
    }
}

impl From<&ObservationRecord> for ObservationScore {
    fn from(o: &ObservationRecord) -> Self {
        ObservationScore {
            detection_id: o.detection_id.clone(),
            timestamp: o.timestamp,
            confidence: o.confidence,
            color_score: o.color_score,
            size_score: o.size_score,
        }
    }
}

/// A candidate snapshot packaged for the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: u64,
    pub robot: RobotId,
    pub candidate: u64,
    pub created_at: f64,
    pub label: Label,
    pub position: Position3,
    pub covariance: [[f64; 3]; 3],
    pub observations: Vec<ObservationScore>,
    pub images: Vec<ReportImage>,
    pub priority: f64,
    pub payload_bytes: u64,
}

impl Report {
    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }
}

/// Result of the communications filter for one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eligibility {
    pub eligible: bool,
    /// Median of `c · g_col · g_size`; higher is sent first.
    pub priority: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn comms_filter(candidate: &ObjectCandidate, cfg: &PipelineConfig) -> Eligibility {
    let mut scores: Vec<f64> = candidate.observations.iter().map(ObservationRecord::scorability).collect();
    Eligibility { eligible: candidate.n_observations() >= cfg.min_observations, priority: median(&mut scores) }
}

/// One image per role; an image winning several roles is sent once.
/// Ties go to the earliest observation.
pub fn select_report_images(observations: &[ObservationRecord]) -> Vec<ReportImage> {
    if observations.is_empty() {
        return Vec::new();
    }
    let argbest = |key: &dyn Fn(&ObservationRecord) -> f64| {
        let mut best = 0;
        for (i, o) in observations.iter().enumerate() {
            if key(o) > key(&observations[best]) {
                best = i;
            }
        }
        best
    };
    let picks = [
        (ImageRole::Brightest, argbest(&|o| o.frame.brightness)),
        (ImageRole::LeastBlurry, argbest(&|o| o.frame.sharpness)),
        (ImageRole::HighestConfidence, argbest(&|o| o.confidence)),
        (ImageRole::Closest, argbest(&|o| -o.distance)),
    ];
    let mut out: Vec<ReportImage> = Vec::new();
    for (role, idx) in picks {
        let image_ref = &observations[idx].image_ref;
        match out.iter_mut().find(|r| &r.image_ref == image_ref) {
            Some(r) => r.roles.push(role),
            None => out.push(ReportImage { image_ref: image_ref.clone(), roles: vec![role] }),
        }
    }
    out
}

/// Builds a report from a candidate snapshot. The image set is truncated to
/// the configured budget.
pub fn build_report(id: u64, candidate: &ObjectCandidate, created_at: f64, cfg: &PipelineConfig, net: &NetworkModel) -> Report {
    let mut images = select_report_images(&candidate.observations);
    images.truncate(cfg.image_budget);
    let priority = comms_filter(candidate, cfg).priority;
    Report {
        id,
        robot: candidate.robot,
        candidate: candidate.id,
        created_at,
        label: candidate.label.clone(),
        position: candidate.position,
        covariance: candidate.covariance,
        observations: candidate.observations.iter().map(ObservationScore::from).collect(),
        payload_bytes: net.metadata_bytes + net.image_bytes * images.len() as u64,
        images,
        priority,
    }
}

/// Tracks when each candidate is due for (re-)reporting: first at
/// `min_observations`, then each time its observation count doubles.
#[derive(Debug, Clone, Default)]
pub struct ReportScheduler {
    last_reported: std::collections::BTreeMap<u64, usize>,
    next_id: u64,
    robot: u32,
}

impl ReportScheduler {
    pub fn new(robot: RobotId) -> Self {
        ReportScheduler { robot: robot.0, ..Default::default() }
    }

    pub fn maybe_report(&mut self, candidate: &ObjectCandidate, now: f64, cfg: &PipelineConfig, net: &NetworkModel) -> Option<Report> {
        if !comms_filter(candidate, cfg).eligible {
            return None;
        }
        let n = candidate.n_observations();
        let due = match self.last_reported.get(&candidate.id) {
            None => true,
            Some(&last) => n >= 2 * last,
        };
        if !due {
            return None;
        }
        self.last_reported.insert(candidate.id, n);
        let id = ((self.robot as u64) << 32) | self.next_id;
        self.next_id += 1;
        Some(build_report(id, candidate, now, cfg, net))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FrameStats;
    use crate::reconcile::BearingObservation;
    use nalgebra::Vector3;

    fn obs(i: usize, c: f64, brightness: f64, sharpness: f64, distance: f64) -> ObservationRecord {
        ObservationRecord {
            detection_id: format!("d{i}"),
            timestamp: i as f64,
            bearing: BearingObservation::new(Vector3::zeros(), Vector3::x(), i as f64, None),
            confidence: c,
            color_score: 1.0,
            size_score: 1.0,
            distance,
            image_ref: format!("img{i}"),
            frame: FrameStats { brightness, sharpness },
        }
    }

    fn candidate(observations: Vec<ObservationRecord>) -> ObjectCandidate {
        ObjectCandidate {
            id: 1,
            robot: RobotId(0),
            label: Label::Drill,
            position: Position3::ORIGIN,
            covariance: [[0.0; 3]; 3],
            degenerate: false,
            observations,
            created: 0.0,
            updated: 0.0,
        }
    }

    #[test]
    fn eligibility_and_median_priority() {
        let cfg = PipelineConfig::default();
        assert!(!comms_filter(&candidate(vec![obs(0, 0.9, 0.0, 0.0, 1.0)]), &cfg).eligible);
        let c = candidate(vec![obs(0, 0.2, 0.0, 0.0, 1.0), obs(1, 0.9, 0.0, 0.0, 1.0), obs(2, 0.4, 0.0, 0.0, 1.0)]);
        let e = comms_filter(&c, &cfg);
        assert!(e.eligible);
        assert!((e.priority - 0.4).abs() < 1e-12);
    }

    #[test]
    fn image_roles() {
        let single = select_report_images(&[obs(0, 0.5, 1.0, 1.0, 1.0)]);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].roles.len(), 4);

        let many: Vec<_> = (0..10)
            .map(|i| {
                obs(
                    i,
                    if i == 3 { 0.99 } else { 0.5 },
                    if i == 5 { 200.0 } else { 50.0 },
                    if i == 7 { 90.0 } else { 10.0 },
                    if i == 9 { 1.0 } else { 5.0 },
                )
            })
            .collect();
        let imgs = select_report_images(&many);
        assert_eq!(imgs.len(), 4);

        let shared: Vec<_> = (0..10)
            .map(|i| {
                obs(
                    i,
                    if i == 3 { 0.99 } else { 0.5 },
                    if i == 3 { 200.0 } else { 50.0 },
                    if i == 7 { 90.0 } else { 10.0 },
                    if i == 9 { 1.0 } else { 5.0 },
                )
            })
            .collect();
        let imgs = select_report_images(&shared);
        assert_eq!(imgs.len(), 3);
        assert_eq!(imgs[0].roles, vec![ImageRole::Brightest, ImageRole::HighestConfidence]);
    }

    #[test]
    fn rereport_when_count_doubles() {
        let cfg = PipelineConfig::default();
        let net = NetworkModel::default();
        let mut sched = ReportScheduler::new(RobotId(2));
        let mut sent = Vec::new();
        let mut observations = Vec::new();
        for i in 0..17 {
            observations.push(obs(i, 0.8, 0.0, 0.0, 1.0));
            if let Some(r) = sched.maybe_report(&candidate(observations.clone()), i as f64, &cfg, &net) {
                sent.push(r.n_observations());
                assert_eq!(r.id >> 32, 2);
                assert!(r.images.len() <= cfg.image_budget);
                assert_eq!(r.payload_bytes, net.metadata_bytes + net.image_bytes * r.images.len() as u64);
            }
        }
        assert_eq!(sent, vec![2, 4, 8, 16]);
    }
}
