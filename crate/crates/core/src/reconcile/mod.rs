//! Robot-side reconciliation: gate detections, associate them to object
//! candidates and localize each candidate from its bearings and ranges.

pub mod gate;
pub mod geometry;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::model::{CameraModel, Detection, FrameStats, Label, Pose, Position3, RobotId};

pub use gate::{candidate_gate, match_or_create, movement_gate, Association, CandidateRef, Feasible};
pub use geometry::{lidar_range, size_score, triangulate, BearingObservation, Triangulation, TriangulationParams};

/// Everything kept about one accepted detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub detection_id: String,
    pub timestamp: f64,
    pub bearing: BearingObservation,
    pub confidence: f64,
    pub color_score: f64,
    pub size_score: f64,
    /// Camera-to-candidate distance at association time.
    pub distance: f64,
    pub image_ref: String,
    pub frame: FrameStats,
}

impl ObservationRecord {
    /// `c · g_col · g_size`
    pub fn scorability(&self) -> f64 {
        self.confidence * self.color_score * self.size_score
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectCandidate {
    pub id: u64,
    pub robot: RobotId,
    pub label: Label,
    pub position: Position3,
    pub covariance: [[f64; 3]; 3],
    pub degenerate: bool,
    pub observations: Vec<ObservationRecord>,
    pub created: f64,
    pub updated: f64,
}

impl ObjectCandidate {
    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Gated,
    Matched { candidate: u64, cost: f64 },
    Created { candidate: u64 },
}

/// One line of the association audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationEvent {
    pub detection_id: String,
    pub robot: RobotId,
    pub timestamp: f64,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl AssociationEvent {
    pub fn candidate(&self) -> Option<u64> {
        match self.outcome {
            Outcome::Gated => None,
            Outcome::Matched { candidate, .. } | Outcome::Created { candidate } => Some(candidate),
        }
    }
}

/// Per-robot reconciler. Processing order is part of the contract: feed
/// detections in timestamp order.
#[derive(Debug, Clone)]
pub struct RobotReconciler {
    robot: RobotId,
    cfg: PipelineConfig,
    params: TriangulationParams,
    last_accepted: BTreeMap<Label, Pose>,
    candidates: Vec<ObjectCandidate>,
    next_seq: u64,
}

impl RobotReconciler {
    pub fn new(robot: RobotId, cfg: &PipelineConfig) -> Self {
        RobotReconciler {
            robot,
            params: TriangulationParams {
                bearing_sigma: cfg.bearing_sigma_deg.to_radians(),
                range_sigma_frac: cfg.range_sigma_frac,
                nominal_range: cfg.d_max_detect / 2.0,
            },
            cfg: cfg.clone(),
            last_accepted: BTreeMap::new(),
            candidates: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn candidates(&self) -> &[ObjectCandidate] {
        &self.candidates
    }

    pub fn candidate(&self, id: u64) -> Option<&ObjectCandidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    pub fn into_candidates(self) -> Vec<ObjectCandidate> {
        self.candidates
    }

    /// Processes one colour-filtered detection taken at `pose` by `camera`.
    /// Returns the detection annotated with its LiDAR range and size score
    /// (when accepted) and the association outcome.
    pub fn process(
        &mut self,
        mut det: Detection,
        pose: &Pose,
        camera: &CameraModel,
        cloud: Option<&[Vector3<f64>]>,
        frame: FrameStats,
    ) -> (Detection, AssociationEvent) {
        let event = |outcome| AssociationEvent { detection_id: det.id.clone(), robot: self.robot, timestamp: det.timestamp, outcome };
        if !movement_gate(self.last_accepted.get(&det.label), pose, &self.cfg) {
            let ev = event(Outcome::Gated);
            return (det, ev);
        }
        self.last_accepted.insert(det.label.clone(), *pose);

        let cam_pose = camera.world_pose(pose);
        let (u, v) = det.bbox.center();
        let direction = cam_pose.orientation.apply(&camera.pixel_ray(u, v));
        let origin = cam_pose.position.vector();
        let range = cloud.and_then(|c| lidar_range(c, camera, &det.bbox, self.cfg.lidar_min_points));
        let bearing = BearingObservation::new(origin, direction, det.timestamp, range);

        let feasible = candidate_gate(
            &bearing,
            &det.label,
            pose,
            self.candidates.iter().map(|c| CandidateRef { id: c.id, label: &c.label, position: c.position.vector() }),
            &self.cfg,
        );
        let seed_range = range.unwrap_or(self.params.nominal_range);
        let (idx, outcome) = match match_or_create(&bearing, &feasible, seed_range, &self.cfg) {
            Association::Existing { id, cost } => {
                let idx = self.candidates.iter().position(|c| c.id == id).expect("gated candidate exists");
                (idx, Outcome::Matched { candidate: id, cost })
            }
            Association::New { seed } => {
                let id = ((self.robot.0 as u64) << 32) | self.next_seq;
                self.next_seq += 1;
                self.candidates.push(ObjectCandidate {
                    id,
                    robot: self.robot,
                    label: det.label.clone(),
                    position: seed.into(),
                    covariance: [[0.0; 3]; 3],
                    degenerate: true,
                    observations: Vec::new(),
                    created: det.timestamp,
                    updated: det.timestamp,
                });
                (self.candidates.len() - 1, Outcome::Created { candidate: id })
            }
        };

        let record = ObservationRecord {
            detection_id: det.id.clone(),
            timestamp: det.timestamp,
            bearing,
            confidence: det.confidence,
            color_score: det.color_score.unwrap_or(1.0),
            size_score: 1.0,
            distance: 0.0,
            image_ref: det.image_ref.clone(),
            frame,
        };
        let params = self.params;
        let cfg_max = self.cfg.max_solve_observations;
        let cand = &mut self.candidates[idx];
        cand.observations.push(record);
        cand.updated = det.timestamp;
        resolve(cand, cfg_max, &params);

        let distance = range.unwrap_or_else(|| (cand.position.vector() - origin).norm()).max(1e-3);
        let dims = self.cfg.label(&det.label).and_then(|l| l.dimensions);
        let g_size = size_score(dims, &det.bbox, distance, camera, self.cfg.size_tolerance);
        let last = cand.observations.last_mut().expect("just pushed");
        last.size_score = g_size;
        last.distance = distance;

        det.range = range;
        det.size_score = Some(g_size);
        let ev = event(outcome);
        (det, ev)
    }
}

/// Full re-solve over the most confident stored observations.
fn resolve(cand: &mut ObjectCandidate, max_obs: usize, params: &TriangulationParams) {
    let mut order: Vec<usize> = (0..cand.observations.len()).collect();
    order.sort_by(|&a, &b| {
        let (oa, ob) = (&cand.observations[a], &cand.observations[b]);
        ob.confidence.total_cmp(&oa.confidence).then(oa.timestamp.total_cmp(&ob.timestamp))
    });
    let rays: Vec<BearingObservation> = order.iter().take(max_obs).map(|&i| cand.observations[i].bearing).collect();
    if let Some(t) = triangulate(&rays, params) {
        cand.position = t.position.into();
        cand.covariance = matrix_rows(&t.covariance);
        cand.degenerate = t.degenerate;
    }
}

pub fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, CameraId, Extrinsics, Rotation};

    fn camera() -> CameraModel {
        CameraModel {
            id: CameraId(0),
            fx: 100.0,
            fy: 100.0,
            cx: 64.0,
            cy: 40.0,
            width: 128,
            height: 80,
            extrinsics: Extrinsics::horizontal(0.0, 0.0),
        }
    }

    fn detection(id: &str, t: f64, bbox: BoundingBox) -> Detection {
        Detection {
            id: id.into(),
            robot: RobotId(0),
            camera: CameraId(0),
            timestamp: t,
            label: Label::Backpack,
            confidence: 0.9,
            bbox,
            image_ref: format!("img-{id}"),
            color_score: Some(1.0),
            range: None,
            size_score: None,
        }
    }

    fn pose_at(x: f64, y: f64, t: f64) -> Pose {
        Pose { position: Position3::new(x, y, 0.0), orientation: Rotation::IDENTITY, timestamp: t }
    }

    /// Box around the projection of `target` seen from a robot at `robot`.
    fn box_for(target: Vector3<f64>, robot: &Pose) -> BoundingBox {
        let cam = camera();
        let pc = cam.world_to_camera(robot, &target);
        let (u, v) = cam.project(&pc).unwrap();
        BoundingBox::from_center(u, v, 4.0, 4.0).unwrap()
    }

    #[test]
    fn repeated_sightings_build_one_candidate_and_converge() {
        let mut rec = RobotReconciler::new(RobotId(0), &PipelineConfig::default());
        let target = Vector3::new(6.0, 0.0, 0.3);
        let mut errors = Vec::new();
        for i in 0..20 {
            let pose = pose_at(0.1 * i as f64, -4.5 + 0.5 * i as f64, i as f64);
            let det = detection(&format!("d{i}"), i as f64, box_for(target, &pose));
            let (_, ev) = rec.process(det, &pose, &camera(), None, FrameStats::default());
            assert_ne!(ev.outcome, Outcome::Gated);
            let c = &rec.candidates()[0];
            errors.push((c.position.vector() - target).norm());
        }
        assert_eq!(rec.candidates().len(), 1);
        assert_eq!(rec.candidates()[0].n_observations(), 20);
        assert!(errors.last().unwrap() < &1e-6, "{errors:?}");
    }

    #[test]
    fn stationary_robot_is_gated() {
        let mut rec = RobotReconciler::new(RobotId(0), &PipelineConfig::default());
        let pose = pose_at(0.0, 0.0, 0.0);
        let b = box_for(Vector3::new(5.0, 0.0, 0.0), &pose);
        let (_, first) = rec.process(detection("a", 0.0, b), &pose, &camera(), None, FrameStats::default());
        assert!(matches!(first.outcome, Outcome::Created { .. }));
        let (_, second) = rec.process(detection("b", 0.2, b), &pose, &camera(), None, FrameStats::default());
        assert_eq!(second.outcome, Outcome::Gated);
    }

    #[test]
    fn lidar_range_seeds_new_candidate() {
        let mut rec = RobotReconciler::new(RobotId(0), &PipelineConfig::default());
        let pose = pose_at(0.0, 0.0, 0.0);
        let b = BoundingBox::from_center(64.0, 40.0, 6.0, 6.0).unwrap();
        let cloud = vec![Vector3::new(0.0, 0.0, 4.0); 4];
        let (det, _) = rec.process(detection("a", 0.0, b), &pose, &camera(), Some(&cloud), FrameStats::default());
        assert_eq!(det.range, Some(4.0));
        let c = &rec.candidates()[0];
        assert!((c.position.vector() - Vector3::new(4.0, 0.0, 0.0)).norm() < 1e-9);
        assert!(!c.degenerate);
    }
}
