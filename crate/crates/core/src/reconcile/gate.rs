//! Detection gating and candidate association.

use nalgebra::Vector3;

use crate::config::PipelineConfig;
use crate::model::{Label, Pose};

use super::geometry::BearingObservation;

/// Passes when there is no earlier accepted observation of the label, or
/// the robot has since moved at least `d_min` or turned at least `α_min`.
pub fn movement_gate(last: Option<&Pose>, current: &Pose, cfg: &PipelineConfig) -> bool {
    let Some(last) = last else { return true };
    let moved = last.position.distance(&current.position);
    let turned = last.orientation.angle_to(&current.orientation).to_degrees();
    moved >= cfg.d_min || turned >= cfg.alpha_min_deg
}

/// Minimal view of a candidate used for gating.
#[derive(Debug, Clone, Copy)]
pub struct CandidateRef<'a> {
    pub id: u64,
    pub label: &'a Label,
    pub position: Vector3<f64>,
}

/// A candidate that survived gating, with its association geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasible {
    pub id: u64,
    pub range: f64,
    /// Radians.
    pub angle: f64,
}

/// Keeps same-label candidates within `d_max_detect` of the robot whose
/// direction from the camera lies within `θ_gate` of the ray.
pub fn candidate_gate<'a>(
    obs: &BearingObservation,
    label: &Label,
    robot: &Pose,
    candidates: impl IntoIterator<Item = CandidateRef<'a>>,
    cfg: &PipelineConfig,
) -> Vec<Feasible> {
    let gate = cfg.theta_gate_deg.to_radians();
    let robot_pos = robot.position.vector();
    candidates
        .into_iter()
        .filter(|c| c.label == label)
        .filter_map(|c| {
            let range = (c.position - robot_pos).norm();
            let angle = obs.angle_to(&c.position);
            (range <= cfg.d_max_detect && angle <= gate).then_some(Feasible { id: c.id, range, angle })
        })
        .collect()
}

/// Normalized association cost; lower is better.
pub fn association_cost(f: &Feasible, cfg: &PipelineConfig) -> f64 {
    cfg.w_range * f.range / cfg.d_max_detect + cfg.w_angle * f.angle / cfg.theta_gate_deg.to_radians()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Association {
    Existing {
        id: u64,
        cost: f64,
    },
    /// No feasible candidate; seed a new one at this point.
    New {
        seed: Vector3<f64>,
    },
}

/// Picks the cheapest feasible candidate, or seeds a new candidate along the
/// ray at `range` metres. Equal costs keep the lower id.
pub fn match_or_create(obs: &BearingObservation, feasible: &[Feasible], range: f64, cfg: &PipelineConfig) -> Association {
    feasible
        .iter()
        .map(|f| (f.id, association_cost(f, cfg)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, cost)| Association::Existing { id, cost })
        .unwrap_or_else(|| Association::New { seed: obs.origin() + obs.dir() * range })
}
