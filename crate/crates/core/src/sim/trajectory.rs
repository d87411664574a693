//! Robot routes: each robot sweeps lanes through its own band of the arena,
//! detouring to approach the objects assigned to it, and retraces the sweep
//! for as long as the mission lasts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::model::{GroundTruthObject, Pose, Position3, RobotId, Rotation};

use super::seed_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub robot: RobotId,
    pub tick: f64,
    /// Sample `k` is taken at `k · tick`.
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn pose(&self, frame: usize) -> &Pose {
        &self.poses[frame.min(self.poses.len() - 1)]
    }

    pub fn max_speed(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].position.distance(&w[1].position) / (w[1].timestamp - w[0].timestamp)).fold(0.0, f64::max)
    }

    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].position.distance(&w[1].position)).sum()
    }
}

const MARGIN: f64 = 3.0;

/// Waypoints for robot `j`: a boustrophedon over its band with approach
/// detours. Every object is assigned to the robot owning its band and, with
/// probability one half, to a neighbouring robot as well.
pub fn plan_waypoints(scenario: &ScenarioConfig, objects: &[GroundTruthObject], seed: u64) -> Vec<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &[0x7A]));
    let r = scenario.robots.max(1) as usize;
    let [w, h] = scenario.arena;
    let band = h / r as f64;
    let owner = |y: f64| ((y / band).floor() as usize).min(r - 1);

    let mut assigned: Vec<Vec<(f64, f64)>> = vec![Vec::new(); r];
    for o in objects {
        let j = owner(o.position.y);
        let mut robots = vec![j];
        if r > 1 && rng.random::<f64>() < 0.5 {
            let k = if j == 0 {
                1
            } else if j == r - 1 || rng.random::<bool>() {
                j - 1
            } else {
                j + 1
            };
            robots.push(k);
        }
        for k in robots {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let d = rng.random_range(1.5..3.0);
            let p = ((o.position.x + d * a.cos()).clamp(MARGIN, w - MARGIN), (o.position.y + d * a.sin()).clamp(MARGIN, h - MARGIN));
            assigned[k].push(p);
        }
    }

    (0..r)
        .map(|j| {
            let y0 = j as f64 * band;
            let spacing = scenario.lane_spacing.min(band);
            let n_lanes = ((band / spacing).floor() as usize).max(1);
            let lanes: Vec<f64> = (0..n_lanes).map(|k| y0 + (k as f64 + 0.5) * band / n_lanes as f64).collect();
            let mut per_lane: Vec<Vec<(f64, f64)>> = vec![Vec::new(); lanes.len()];
            for &p in &assigned[j] {
                let k = (0..lanes.len()).min_by(|&a, &b| (lanes[a] - p.1).abs().total_cmp(&(lanes[b] - p.1).abs())).unwrap();
                per_lane[k].push(p);
            }
            let mut wps = Vec::new();
            for (k, &y) in lanes.iter().enumerate() {
                let forward = k % 2 == 0;
                let (xa, xb) = if forward { (MARGIN, w - MARGIN) } else { (w - MARGIN, MARGIN) };
                wps.push((xa, y));
                let mut stops = per_lane[k].clone();
                stops.sort_by(|a, b| if forward { a.0.total_cmp(&b.0) } else { b.0.total_cmp(&a.0) });
                for p in stops {
                    let x = p.0.clamp(MARGIN, w - MARGIN);
                    wps.push((x, y));
                    wps.push(p);
                    wps.push((x, y));
                }
                wps.push((xb, y));
            }
            wps
        })
        .collect()
}

/// Follows `waypoints` at constant `speed`, ping-ponging along the route,
/// sampling a pose every `tick` for `duration` seconds. Heading follows the
/// direction of travel.
pub fn follow(robot: RobotId, waypoints: &[(f64, f64)], speed: f64, tick: f64, duration: f64) -> Trajectory {
    let mut route: Vec<(f64, f64)> = Vec::with_capacity(waypoints.len());
    for &p in waypoints {
        if route.last().is_none_or(|q: &(f64, f64)| (q.0 - p.0).hypot(q.1 - p.1) > 1e-9) {
            route.push(p);
        }
    }
    let n = (duration / tick).floor() as usize + 1;
    let mut poses = Vec::with_capacity(n);
    if route.len() < 2 {
        let p = route.first().copied().unwrap_or((0.0, 0.0));
        for k in 0..n {
            poses.push(Pose { position: Position3::new(p.0, p.1, 0.0), orientation: Rotation::IDENTITY, timestamp: k as f64 * tick });
        }
        return Trajectory { robot, tick, poses };
    }
    let mut seg = 0usize;
    let mut dir = 1isize;
    let step = speed * tick;
    let mut cur = route[0];
    for k in 0..n {
        if k > 0 {
            let mut left = step;
            loop {
                let next = route[(seg as isize + dir) as usize];
                let seg_len = (next.0 - cur.0).hypot(next.1 - cur.1);
                if left < seg_len {
                    let f = left / seg_len;
                    cur = (cur.0 + (next.0 - cur.0) * f, cur.1 + (next.1 - cur.1) * f);
                    break;
                }
                left -= seg_len;
                cur = next;
                seg = (seg as isize + dir) as usize;
                if seg == route.len() - 1 || (seg == 0 && dir < 0) {
                    dir = -dir;
                }
            }
        }
        let next = route[(seg as isize + dir) as usize];
        let yaw = (next.1 - cur.1).atan2(next.0 - cur.0);
        poses.push(Pose { position: Position3::new(cur.0, cur.1, 0.0), orientation: Rotation::from_yaw(yaw), timestamp: k as f64 * tick });
    }
    Trajectory { robot, tick, poses }
}

pub fn generate_trajectories(scenario: &ScenarioConfig, objects: &[GroundTruthObject], seed: u64) -> Vec<Trajectory> {
    let speed = scenario.cruise_speed.min(scenario.max_speed);
    plan_waypoints(scenario, objects, seed)
        .iter()
        .enumerate()
        .map(|(j, wps)| follow(RobotId(j as u32), wps, speed, scenario.tick(), scenario.duration_s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;

    #[test]
    fn timestamps_increase_and_speed_is_capped() {
        let sc = ScenarioConfig { duration_s: 120.0, ..Default::default() };
        let objs = [GroundTruthObject { id: 0, label: Label::Cube, position: Position3::new(40.0, 10.0, 0.1) }];
        for t in generate_trajectories(&sc, &objs, 3) {
            assert!(t.poses.windows(2).all(|w| w[1].timestamp > w[0].timestamp));
            assert!(t.max_speed() <= sc.max_speed + 1e-9);
            assert_eq!(t.poses.len(), 3001);
        }
    }

    #[test]
    fn route_reverses_at_the_end() {
        let t = follow(RobotId(0), &[(0.0, 0.0), (1.0, 0.0)], 1.0, 0.1, 3.0);
        assert!((t.pose(10).position.x - 1.0).abs() < 1e-9);
        assert!((t.pose(15).position.x - 0.5).abs() < 1e-9);
        assert!((t.pose(20).position.x).abs() < 1e-9);
    }

    #[test]
    fn assigned_objects_are_approached() {
        let sc = ScenarioConfig::default();
        let objs: Vec<_> = (0..6)
            .map(|i| GroundTruthObject {
                id: i,
                label: Label::Drill,
                position: Position3::new(15.0 + 14.0 * i as f64, 10.0 + 15.0 * i as f64, 0.1),
            })
            .collect();
        let trajs = generate_trajectories(&sc, &objs, 9);
        for o in &objs {
            let closest = trajs
                .iter()
                .flat_map(|t| t.poses.iter())
                .map(|p| p.position.distance(&Position3::new(o.position.x, o.position.y, 0.0)))
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 3.1, "object {} closest {closest}", o.id);
        }
    }
}
