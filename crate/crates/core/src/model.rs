//! Domain types shared by every pipeline stage.
//!
//! Conventions:
//! - Global frame: metres, z up, origin at the calibration gate.
//! - Body frame: x forward, y left, z up.
//! - Camera frame: x right, y down, z along the optical axis.
//! - Pixel column `i` covers `[i, i + 1)`; bounding boxes are half-open.

use std::fmt;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Semantic class of an object.
///
/// The seven built-in classes serialize as snake_case strings; any other
/// string becomes [`Label::Custom`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Label {
    Backpack,
    Drill,
    FireExtinguisher,
    Helmet,
    Cube,
    Rope,
    Survivor,
    Custom(String),
}

impl Label {
    pub const BUILTIN: [Label; 7] =
        [Label::Backpack, Label::Drill, Label::FireExtinguisher, Label::Helmet, Label::Cube, Label::Rope, Label::Survivor];

    pub fn as_str(&self) -> &str {
        match self {
            Label::Backpack => "backpack",
            Label::Drill => "drill",
            Label::FireExtinguisher => "fire_extinguisher",
            Label::Helmet => "helmet",
            Label::Cube => "cube",
            Label::Rope => "rope",
            Label::Survivor => "survivor",
            Label::Custom(s) => s,
        }
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        match s.as_str() {
            "backpack" => Label::Backpack,
            "drill" => Label::Drill,
            "fire_extinguisher" => Label::FireExtinguisher,
            "helmet" => Label::Helmet,
            "cube" => Label::Cube,
            "rope" => Label::Rope,
            "survivor" => Label::Survivor,
            _ => Label::Custom(s),
        }
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::from(s.to_string())
    }
}

impl From<Label> for String {
    fn from(l: Label) -> Self {
        l.as_str().to_string()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub u32);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A point in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const ORIGIN: Position3 = Position3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position3 { x, y, z }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        (self.vector() - other.vector()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<Vector3<f64>> for Position3 {
    fn from(v: Vector3<f64>) -> Self {
        Position3::new(v.x, v.y, v.z)
    }
}

/// Unit-quaternion rotation, renormalized after every composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

#[derive(Serialize, Deserialize)]
struct QuaternionRepr {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let q = self.0.quaternion();
        QuaternionRepr { w: q.w, x: q.i, y: q.j, z: q.k }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = QuaternionRepr::deserialize(d)?;
        let q = Quaternion::new(r.w, r.x, r.y, r.z);
        if !(q.norm() > 0.0) || !q.norm().is_finite() {
            return Err(serde::de::Error::custom("quaternion must have finite nonzero norm"));
        }
        Ok(Rotation(UnitQuaternion::from_quaternion(q)))
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation(UnitQuaternion::new_unchecked(Quaternion::new(1.0, 0.0, 0.0, 0.0)));

    pub fn from_yaw(yaw: f64) -> Self {
        Rotation(UnitQuaternion::from_euler_angles(0.0, 0.0, yaw))
    }

    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rotation(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(q)
    }

    /// Builds a rotation from raw quaternion components, normalizing them.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        Rotation(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let q = self.0.quaternion() * other.0.quaternion();
        Rotation(UnitQuaternion::from_quaternion(q))
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(self.0.inverse())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transform_vector(v)
    }

    /// Angle of the relative rotation, in radians within `[0, π]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.0.angle_to(&other.0)
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn norm_error(&self) -> f64 {
        (self.0.quaternion().norm() - 1.0).abs()
    }
}

/// Robot pose. `orientation` is the body attitude: it maps body-frame
/// vectors into the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Position3,
    pub orientation: Rotation,
    pub timestamp: f64,
}

impl Pose {
    pub fn body_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.apply(p) + self.position.vector()
    }

    pub fn world_to_body(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse().apply(&(p - self.position.vector()))
    }

    /// Composes a transform expressed in this pose's frame.
    pub fn compose(&self, rotation: &Rotation, translation: &Vector3<f64>) -> Pose {
        Pose {
            position: self.body_to_world(translation).into(),
            orientation: self.orientation.compose(rotation),
            timestamp: self.timestamp,
        }
    }
}

/// Rigid mounting of a camera on the robot body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    /// Maps camera-frame vectors into the body frame.
    pub rotation: Rotation,
    /// Camera centre in the body frame, metres.
    pub translation: Position3,
}

impl Extrinsics {
    /// Camera looking horizontally along body yaw `yaw`, mounted at `height`.
    pub fn horizontal(yaw: f64, height: f64) -> Self {
        // camera (x right, y down, z forward) -> body looking along +x
        let base = Rotation::from_unit_quaternion(UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(
            nalgebra::Matrix3::new(
                0.0, 0.0, 1.0, //
                -1.0, 0.0, 0.0, //
                0.0, -1.0, 0.0,
            ),
        )));
        Extrinsics { rotation: Rotation::from_yaw(yaw).compose(&base), translation: Position3::new(0.0, 0.0, height) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: CameraId,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsics: Extrinsics,
}

impl CameraModel {
    /// Pinhole projection of a camera-frame point. `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Unit ray through pixel coordinates `(u, v)`, camera frame.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// World pose of the camera centre for a given robot pose.
    pub fn world_pose(&self, robot: &Pose) -> Pose {
        robot.compose(&self.extrinsics.rotation, &self.extrinsics.translation.vector())
    }

    pub fn world_to_camera(&self, robot: &Pose, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_pose(robot).world_to_body(p)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.fx > 0.0) {
            errs.push(format!("camera {}: fx must be > 0", self.id));
        }
        if !(self.fy > 0.0) {
            errs.push(format!("camera {}: fy must be > 0", self.id));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            errs.push(format!("camera {}: cx must lie in [0, width)", self.id));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            errs.push(format!("camera {}: cy must lie in [0, height)", self.id));
        }
        errs
    }
}

/// Half-open pixel rectangle `[x_min, x_max) × [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        (x_min < x_max && y_min < y_max).then_some(BoundingBox { x_min, y_min, x_max, y_max })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Option<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x_min && u < self.x_max && v >= self.y_min && v < self.y_max
    }

    pub fn clip(&self, width: u32, height: u32) -> Option<Self> {
        Self::new(self.x_min.max(0.0), self.y_min.max(0.0), self.x_max.min(width as f64), self.y_max.min(height as f64))
    }

    /// Integer pixel ranges whose centres fall inside the box; at least the
    /// pixel containing the box centre when the box is smaller than a pixel.
    pub fn pixel_ranges(&self, width: u32, height: u32) -> (std::ops::Range<u32>, std::ops::Range<u32>) {
        let span = |lo: f64, hi: f64, n: u32| {
            let a = (lo - 0.5).ceil().max(0.0) as u32;
            let b = ((hi - 0.5).ceil().max(0.0) as u32).min(n);
            if a < b {
                a..b
            } else {
                let c = (((lo + hi) / 2.0).floor().max(0.0) as u32).min(n.saturating_sub(1));
                c..c + 1
            }
        };
        (span(self.x_min, self.x_max, width), span(self.y_min, self.y_max, height))
    }
}

/// One bounding-box observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: String,
    pub robot: RobotId,
    pub camera: CameraId,
    pub timestamp: f64,
    pub label: Label,
    pub confidence: f64,
    pub bbox: BoundingBox,
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_score: Option<f64>,
}

impl Detection {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} {v} outside [0,1]"))
            }
        };
        unit("confidence", self.confidence)?;
        if let Some(c) = self.color_score {
            unit("color_score", c)?;
        }
        if let Some(s) = self.size_score {
            unit("size_score", s)?;
        }
        if !(self.bbox.x_min < self.bbox.x_max && self.bbox.y_min < self.bbox.y_max) {
            return Err("degenerate bounding box".into());
        }
        if !self.timestamp.is_finite() {
            return Err("timestamp must be finite".into());
        }
        Ok(())
    }
}

/// Whole-image statistics recorded alongside a detection's source frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameStats {
    /// Mean luminance, 0–255.
    pub brightness: f64,
    /// Laplacian variance.
    pub sharpness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: u32,
    pub label: Label,
    pub position: Position3,
}

/// What physically produced an artifact. Only the simulator knows this; it
/// travels on a separate oracle channel and is never read by ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Source {
    Truth(u32),
    FalsePositive(u32),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionEntry {
    pub label: Label,
    pub position: Position3,
    pub cluster: u64,
    pub decided_at: f64,
}
