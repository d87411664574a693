//! Bearing triangulation, LiDAR range in a box, and the size score.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, CameraModel, Position3};

/// A ray from the camera centre through the detection's box centre, in the
/// global frame, with an optional measured range along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingObservation {
    pub origin: Position3,
    /// Unit direction.
    pub direction: Position3,
    pub timestamp: f64,
    #[serde(default)]
    pub range: Option<f64>,
}

impl BearingObservation {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>, timestamp: f64, range: Option<f64>) -> Self {
        BearingObservation { origin: origin.into(), direction: direction.normalize().into(), timestamp, range }
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin.vector()
    }

    pub fn dir(&self) -> Vector3<f64> {
        self.direction.vector()
    }

    /// Angle between the ray and the direction to `p`, radians.
    pub fn angle_to(&self, p: &Vector3<f64>) -> f64 {
        let v = p - self.origin();
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        (self.dir().dot(&v) / n).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationParams {
    /// Bearing noise, radians.
    pub bearing_sigma: f64,
    /// Range noise as a fraction of the measured range.
    pub range_sigma_frac: f64,
    /// Range assumed for bearing weights before any estimate exists.
    pub nominal_range: f64,
}

impl Default for TriangulationParams {
    fn default() -> Self {
        TriangulationParams { bearing_sigma: 1f64.to_radians(), range_sigma_frac: 0.1, nominal_range: 5.0 }
    }
}

/// Per-observation information weights of the final solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayWeight {
    pub perpendicular: f64,
    pub along: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub position: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// True when the geometry does not constrain every direction.
    pub degenerate: bool,
    pub weights: Vec<RayWeight>,
}

/// Variance assigned to unconstrained directions.
pub const UNCONSTRAINED_VARIANCE: f64 = 1e6;

/// Weighted objective `Σ w⊥·|P(x−o)|² + w∥·((x−o)·u − d)²`.
pub fn objective(obs: &[BearingObservation], weights: &[RayWeight], x: &Vector3<f64>) -> f64 {
    obs.iter()
        .zip(weights)
        .map(|(o, w)| {
            let u = o.dir();
            let v = x - o.origin();
            let along = v.dot(&u);
            let perp = (v - u * along).norm_squared();
            let mut r = w.perpendicular * perp;
            if let Some(d) = o.range {
                r += w.along * (along - d).powi(2);
            }
            r
        })
        .sum()
}

fn weights_for(obs: &[BearingObservation], params: &TriangulationParams, estimate: Option<&Vector3<f64>>) -> Vec<RayWeight> {
    obs.iter()
        .map(|o| {
            let r = match (o.range, estimate) {
                (Some(d), _) if d > 0.0 => d,
                (_, Some(x)) => (x - o.origin()).norm(),
                _ => params.nominal_range,
            }
            .max(0.1);
            let along = match o.range {
                Some(d) if d > 0.0 => 1.0 / (params.range_sigma_frac * d).max(1e-6).powi(2),
                _ => 0.0,
            };
            RayWeight { perpendicular: 1.0 / (params.bearing_sigma * r).powi(2), along }
        })
        .collect()
}

fn normal_equations(obs: &[BearingObservation], weights: &[RayWeight]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (o, w) in obs.iter().zip(weights) {
        let u = o.dir();
        let uu = u * u.transpose();
        let p = Matrix3::identity() - uu;
        a += p * w.perpendicular;
        b += p * o.origin() * w.perpendicular;
        if let Some(d) = o.range {
            a += uu * w.along;
            b += uu * (o.origin() + u * d) * w.along;
        }
    }
    (a, b)
}

fn solve(obs: &[BearingObservation], weights: Vec<RayWeight>, params: &TriangulationParams) -> Triangulation {
    let (a, b) = normal_equations(obs, &weights);
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = max * 1e-10;
    let mut pinv = Matrix3::zeros();
    let mut null = Matrix3::zeros();
    for i in 0..3 {
        let v = eig.eigenvectors.column(i).into_owned();
        let l = eig.eigenvalues[i];
        if max > 0.0 && l > tol {
            pinv += v * v.transpose() / l;
        } else {
            null += v * v.transpose();
        }
    }
    let degenerate = null != Matrix3::zeros();
    let mut position = pinv * b;
    let mut covariance = pinv;
    if degenerate {
        // fill the unconstrained part from a nominal-range guess
        let n = obs.len() as f64;
        let mean_origin = obs.iter().map(|o| o.origin()).sum::<Vector3<f64>>() / n;
        let mean_dir = obs.iter().map(|o| o.dir()).sum::<Vector3<f64>>();
        let dir = if mean_dir.norm() > 0.0 { mean_dir.normalize() } else { obs[0].dir() };
        let guess = mean_origin + dir * params.nominal_range;
        position += null * (guess - position);
        covariance += null * UNCONSTRAINED_VARIANCE;
    }
    Triangulation { position, covariance, degenerate, weights }
}

/// Weighted linear least-squares point closest to all rays, with each
/// measured range acting as a pseudo-measurement at `origin + d·direction`.
///
/// Bearing weights scale with the inverse squared range to the point, so the
/// solve runs twice: once with measured or nominal ranges, then with ranges
/// to the first estimate. Rank-deficient geometry (parallel rays, no range)
/// is flagged rather than rejected.
pub fn triangulate(obs: &[BearingObservation], params: &TriangulationParams) -> Option<Triangulation> {
    if obs.is_empty() {
        return None;
    }
    let first = solve(obs, weights_for(obs, params, None), params);
    if first.degenerate || obs.iter().all(|o| o.range.is_some()) {
        return Some(first);
    }
    Some(solve(obs, weights_for(obs, params, Some(&first.position)), params))
}

/// Mean camera-frame distance of the LiDAR points projecting into `bbox`.
/// `None` when fewer than `min_points` land inside.
pub fn lidar_range(points: &[Vector3<f64>], camera: &CameraModel, bbox: &BoundingBox, min_points: usize) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for p in points {
        if let Some((u, v)) = camera.project(p) {
            if bbox.contains(u, v) {
                sum += p.norm();
                n += 1;
            }
        }
    }
    (n >= min_points.max(1)).then(|| sum / n as f64)
}

/// Metric (width, height) of a box seen at range `d`.
pub fn metric_extent(bbox: &BoundingBox, d: f64, camera: &CameraModel) -> (f64, f64) {
    (bbox.width() * d / camera.fx, bbox.height() * d / camera.fy)
}

/// Trapezoid membership: 1 on `[dim/ρ, dim·ρ]`, linear to 0 at `dim/(2ρ)`
/// and `2ρ·dim`.
pub fn trapezoid(value: f64, dim: f64, rho: f64) -> f64 {
    let (lo0, lo1, hi1, hi0) = (dim / (2.0 * rho), dim / rho, dim * rho, dim * 2.0 * rho);
    if value <= lo0 || value >= hi0 {
        0.0
    } else if value < lo1 {
        (value - lo0) / (lo1 - lo0)
    } else if value <= hi1 {
        1.0
    } else {
        (hi0 - value) / (hi0 - hi1)
    }
}

/// How well the box matches the label's physical size; 1 when the label has
/// no configured dimensions.
pub fn size_score(dimensions: Option<[f64; 2]>, bbox: &BoundingBox, d: f64, camera: &CameraModel, rho: f64) -> f64 {
    let Some([w, h]) = dimensions else {
        log::debug!("no dimensions configured; neutral size score");
        return 1.0;
    };
    let (ew, eh) = metric_extent(bbox, d, camera);
    trapezoid(ew, w, rho).min(trapezoid(eh, h, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CameraId, Extrinsics};

    fn cam(fx: f64, fy: f64) -> CameraModel {
        CameraModel { id: CameraId(0), fx, fy, cx: 64.0, cy: 40.0, width: 128, height: 80, extrinsics: Extrinsics::horizontal(0.0, 0.0) }
    }

    fn ray(o: [f64; 3], d: [f64; 3], range: Option<f64>) -> BearingObservation {
        BearingObservation::new(Vector3::from(o), Vector3::from(d), 0.0, range)
    }

    #[test]
    fn two_rays_intersect_exactly() {
        let obs = [ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], None), ray([5.0, -5.0, 0.0], [0.0, 1.0, 0.0], None)];
        let t = triangulate(&obs, &TriangulationParams::default()).unwrap();
        assert!(!t.degenerate);
        assert!((t.position - Vector3::new(5.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn single_ranged_observation() {
        let obs = [ray([1.0, 2.0, 0.5], [0.0, 0.6, 0.8], Some(4.0))];
        let t = triangulate(&obs, &TriangulationParams::default()).unwrap();
        assert!(!t.degenerate);
        assert!((t.position - Vector3::new(1.0, 4.4, 3.7)).norm() < 1e-9);
    }

    #[test]
    fn parallel_rays_without_range_are_flagged() {
        let obs = [ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], None), ray([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], None)];
        let t = triangulate(&obs, &TriangulationParams::default()).unwrap();
        assert!(t.degenerate);
        assert!(t.covariance[(0, 0)] >= UNCONSTRAINED_VARIANCE);
        assert!(t.position.iter().all(|v| v.is_finite()));
        assert!(triangulate(&[], &TriangulationParams::default()).is_none());
    }

    #[test]
    fn lidar_range_cases() {
        let c = cam(100.0, 100.0);
        let bbox = BoundingBox::new(60.0, 36.0, 68.0, 44.0).unwrap();
        let on_axis = vec![Vector3::new(0.0, 0.0, 10.0); 5];
        assert_eq!(lidar_range(&on_axis, &c, &bbox, 3), Some(10.0));
        let outside = vec![Vector3::new(5.0, 0.0, 10.0); 5];
        assert_eq!(lidar_range(&outside, &c, &bbox, 3), None);
        assert_eq!(lidar_range(&on_axis[..2], &c, &bbox, 3), None);
        let behind = vec![Vector3::new(0.0, 0.0, -10.0); 5];
        assert_eq!(lidar_range(&behind, &c, &bbox, 3), None);
    }

    #[test]
    fn pinhole_extent() {
        let c = cam(500.0, 500.0);
        let b = BoundingBox::new(0.0, 0.0, 100.0, 50.0).unwrap();
        let (w, h) = metric_extent(&b, 5.0, &c);
        assert!((w - 1.0).abs() < 1e-12 && (h - 0.5).abs() < 1e-12);
        assert_eq!(size_score(Some([1.0, 0.5]), &b, 5.0, &c, 2.0), 1.0);
        assert_eq!(size_score(None, &b, 5.0, &c, 2.0), 1.0);
    }

    #[test]
    fn trapezoid_shape() {
        assert_eq!(trapezoid(1.0, 1.0, 2.0), 1.0);
        assert_eq!(trapezoid(0.5, 1.0, 2.0), 1.0);
        assert_eq!(trapezoid(2.0, 1.0, 2.0), 1.0);
        assert!((trapezoid(3.0, 1.0, 2.0) - 0.5).abs() < 1e-12);
        assert!((trapezoid(0.375, 1.0, 2.0) - 0.5).abs() < 1e-12);
        assert_eq!(trapezoid(8.0, 1.0, 2.0), 0.0);
        assert_eq!(trapezoid(0.1, 1.0, 2.0), 0.0);
    }
}
