//! Ground-truth placement and the false-positive object process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{default_labels, DetectorNoiseModel, ScenarioConfig};
use crate::error::{Error, Result};
use crate::model::{GroundTruthObject, Label, Position3};

use super::trajectory::Trajectory;
use super::{label_color, label_dimensions, seed_for};

pub const PLACEMENT_ATTEMPTS_PER_OBJECT: usize = 10_000;
const EDGE_MARGIN: f64 = 5.0;

/// Places `n` objects uniformly in the arena with pairwise separation
/// strictly above `separation`. Labels cycle through the built-in classes
/// in shuffled order.
pub fn generate_world(scenario: &ScenarioConfig, n: usize, separation: f64, seed: u64) -> Result<Vec<GroundTruthObject>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &[0x77]));
    let [w, h] = scenario.arena;
    let mut labels = Label::BUILTIN.to_vec();
    let mut objects: Vec<GroundTruthObject> = Vec::with_capacity(n);
    let budget = PLACEMENT_ATTEMPTS_PER_OBJECT * n.max(1);
    let mut attempts = 0;
    while objects.len() < n {
        if attempts >= budget {
            return Err(Error::Placement { n, attempts });
        }
        attempts += 1;
        let x = rng.random_range(EDGE_MARGIN.min(w / 2.0)..=(w - EDGE_MARGIN).max(w / 2.0));
        let y = rng.random_range(EDGE_MARGIN.min(h / 2.0)..=(h - EDGE_MARGIN).max(h / 2.0));
        if objects.iter().any(|o| (o.position.x - x).hypot(o.position.y - y) <= separation) {
            continue;
        }
        let k = objects.len() % labels.len();
        if k == 0 {
            shuffle(&mut labels, &mut rng);
        }
        let label = labels[k].clone();
        let z = label_dimensions(&label)[1] / 2.0;
        objects.push(GroundTruthObject { id: objects.len() as u32, label, position: Position3::new(x, y, z) });
    }
    Ok(objects)
}

fn shuffle<T>(v: &mut [T], rng: &mut impl Rng) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
}

/// Background clutter the detector misreads as `label`, but only for a
/// while after it is first noticed and only from near that viewpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoObject {
    pub id: u32,
    pub label: Label,
    pub position: Position3,
    /// Width and height in metres.
    pub size: [f64; 2],
    pub color: [u8; 3],
    /// Per-frame probability of a detection while hallucination is active.
    pub detect_probability: f64,
    pub viewpoint: Position3,
    pub view_radius: f64,
    pub appears_at: f64,
    pub vanishes_at: f64,
}

impl PseudoObject {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.appears_at && t <= self.vanishes_at
    }

    pub fn active(&self, camera: &Position3, t: f64) -> bool {
        self.active_at(t) && (camera.x - self.viewpoint.x).hypot(camera.y - self.viewpoint.y) <= self.view_radius
    }
}

/// Colours no built-in mask accepts.
const OFF_COLORS: [[u8; 3]; 4] = [[70, 140, 60], [120, 90, 60], [95, 95, 100], [140, 120, 160]];

/// Walks each trajectory, spawning bursts of pseudo-objects as a Poisson
/// process in distance travelled. Burst centres lie ahead of the robot
/// within detector range and never within `exclusion` of a truth object.
pub fn spawn_pseudo_objects(
    trajectories: &[Trajectory],
    truth: &[GroundTruthObject],
    noise: &DetectorNoiseModel,
    max_range: f64,
    exclusion: f64,
    seed: u64,
) -> Vec<PseudoObject> {
    let mut out = Vec::new();
    if noise.fp_intensity_per_m <= 0.0 {
        return out;
    }
    let labels = default_labels();
    let gap = Exp::new(noise.fp_intensity_per_m).expect("positive intensity");
    let extra = (noise.fp_burst_extra_mean > 0.0).then(|| Poisson::new(noise.fp_burst_extra_mean).expect("positive mean"));
    let view = Exp::new(1.0 / noise.fp_view_radius_mean.max(1e-6)).expect("positive radius");
    let size = LogNormal::new(0.0, noise.fp_size_log_sigma.max(1e-9)).expect("valid sigma");
    let lifetime = Exp::new(1.0 / noise.fp_active_mean_s.max(1e-6)).expect("positive lifetime");
    for traj in trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &[0xF9, traj.robot.0 as u64]));
        let mut next_at: f64 = gap.sample(&mut rng);
        let mut travelled = 0.0;
        for pair in traj.poses.windows(2) {
            travelled += pair[0].position.distance(&pair[1].position);
            while travelled >= next_at {
                next_at += gap.sample(&mut rng);
                let pose = &pair[1];
                let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let dist = rng.random_range(1.5..max_range.max(2.0) * 0.8);
                let yaw = heading + yaw_of(pose);
                let centre = (pose.position.x + dist * yaw.cos(), pose.position.y + dist * yaw.sin());
                let members = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
                let burst_label = Label::BUILTIN[rng.random_range(0..Label::BUILTIN.len())].clone();
                for _ in 0..members {
                    let r = noise.fp_burst_radius * rng.random::<f64>().sqrt();
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    let (x, y) = (centre.0 + r * a.cos(), centre.1 + r * a.sin());
                    if truth.iter().any(|g| (g.position.x - x).hypot(g.position.y - y) < exclusion) {
                        continue;
                    }
                    let label = if rng.random::<f64>() < noise.fp_burst_same_label_probability {
                        burst_label.clone()
                    } else {
                        Label::BUILTIN[rng.random_range(0..Label::BUILTIN.len())].clone()
                    };
                    let dims = label_dimensions(&label);
                    let scale: f64 = size.sample(&mut rng);
                    let size = [dims[0] * scale, dims[1] * scale];
                    let color = if rng.random::<f64>() < noise.fp_color_match_probability {
                        labels.get(&label).map_or_else(|| label_color(&label), |l| l.color)
                    } else {
                        OFF_COLORS[rng.random_range(0..OFF_COLORS.len())]
                    };
                    out.push(PseudoObject {
                        id: out.len() as u32,
                        label,
                        position: Position3::new(x, y, size[1] / 2.0 + rng.random_range(0.0..0.5)),
                        size,
                        color,
                        detect_probability: rng.random_range(noise.fp_probability_min..=noise.fp_probability_max),
                        viewpoint: pose.position,
                        view_radius: view.sample(&mut rng).max(0.5),
                        appears_at: pose.timestamp,
                        vanishes_at: pose.timestamp + lifetime.sample(&mut rng),
                    });
                }
            }
        }
    }
    out
}

fn yaw_of(pose: &crate::model::Pose) -> f64 {
    let f = pose.orientation.apply(&nalgebra::Vector3::x());
    f.y.atan2(f.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_world() {
        assert!(generate_world(&ScenarioConfig::default(), 0, 10.0, 7).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_separated() {
        let sc = ScenarioConfig { arena: [100.0, 100.0], ..Default::default() };
        let a = generate_world(&sc, 9, 10.0, 7).unwrap();
        assert_eq!(a, generate_world(&sc, 9, 10.0, 7).unwrap());
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert!(a[i].position.distance(&a[j].position) > 10.0);
            }
        }
        let labels: std::collections::BTreeSet<_> = a.iter().take(7).map(|o| o.label.clone()).collect();
        assert_eq!(labels.len(), 7);
    }

    #[test]
    fn crowded_arena_fails_cleanly() {
        let sc = ScenarioConfig { arena: [12.0, 12.0], ..Default::default() };
        assert!(matches!(generate_world(&sc, 9, 10.0, 1), Err(Error::Placement { n: 9, .. })));
    }
}
