//! Seeded inputs shared by the benchmarks.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semmap_core::comms::{ObservationScore, Report};
use semmap_core::detect::CalibrationSample;
use semmap_core::raster::GrayGrid;
use semmap_core::reconcile::BearingObservation;
use semmap_core::{Label, Position3, RobotId};

pub fn textured_image(width: usize, height: usize, seed: u64) -> GrayGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayGrid::from_fn(width, height, |_, _| rng.random_range(0.0..255.0))
}

/// `n` reports over a square sized so that some of them chain together.
pub fn scattered_reports(n: usize, seed: u64) -> Vec<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).sqrt() * 2.0;
    (0..n as u64)
        .map(|id| Report {
            id,
            robot: RobotId((id % 3) as u32),
            candidate: id,
            created_at: id as f64,
            label: if rng.random_bool(0.5) { Label::Backpack } else { Label::Drill },
            position: Position3::new(rng.random_range(0.0..side), rng.random_range(0.0..side), 0.0),
            covariance: [[0.0; 3]; 3],
            observations: (0..4)
                .map(|k| ObservationScore {
                    detection_id: format!("{id}-{k}"),
                    timestamp: id as f64,
                    confidence: rng.random_range(0.2..1.0),
                    color_score: 1.0,
                    size_score: 1.0,
                })
                .collect(),
            images: Vec::new(),
            priority: 0.0,
            payload_bytes: 0,
        })
        .collect()
}

/// Rays from a ring of viewpoints towards one point, half of them ranged.
pub fn ring_of_rays(n: usize) -> Vec<BearingObservation> {
    let target = Vector3::new(3.0, -2.0, 0.5);
    (0..n)
        .map(|i| {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            let origin = target + Vector3::new(a.cos() * 6.0, a.sin() * 6.0, 0.3);
            let range = (i % 2 == 0).then(|| (target - origin).norm());
            BearingObservation::new(origin, target - origin, i as f64, range)
        })
        .collect()
}

pub fn calibration_set(n: usize, seed: u64) -> Vec<CalibrationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let positive = rng.random_bool(0.3);
            let c: f64 = if positive { rng.random_range(0.3..1.0) } else { rng.random_range(0.0..0.8) };
            CalibrationSample { label: Label::BUILTIN[rng.random_range(0..7)].clone(), confidence: (c * 1000.0).round() / 1000.0, positive }
        })
        .collect()
}
