//! Synthetic multi-robot search mission: world, routes, cameras, LiDAR and
//! a statistical stand-in for the object detector.
//!
//! Every random draw is keyed by a hash of the run seed and the draw's
//! coordinates (robot, camera, frame, ...), so any frame can be regenerated
//! on demand and results do not depend on evaluation order.

pub mod render;
pub mod trajectory;
pub mod world;

use std::path::PathBuf;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::config::{default_labels, BetaParams, DetectorNoiseModel, RunConfig};
use crate::detect::sharpness::select_by_score;
use crate::detect::{laplacian_variance, CalibrationSample};
use crate::error::{Error, Result};
use crate::model::{BoundingBox, CameraId, CameraModel, Detection, FrameStats, GroundTruthObject, Label, Pose, Position3, RobotId, Source};
use crate::raster::{GrayGrid, RgbGrid};

pub use render::{FrameLook, Sprite};
pub use trajectory::{generate_trajectories, Trajectory};
pub use world::{generate_world, spawn_pseudo_objects, PseudoObject};

/// Mixes `parts` into `seed` (splitmix64 finalizer per step).
pub fn seed_for(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x6A09_E667_F3BC_C908;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_for(seed, parts))
}

/// Physical (width, height) of a label's objects.
pub fn label_dimensions(label: &Label) -> [f64; 2] {
    default_labels().get(label).and_then(|l| l.dimensions).unwrap_or([0.5, 0.5])
}

pub fn label_color(label: &Label) -> [u8; 3] {
    default_labels().get(label).map_or([200, 200, 200], |l| l.color)
}

/// Anything the cameras can see.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub source: Source,
    pub label: Label,
    pub position: Position3,
    pub size: [f64; 2],
    pub color: [u8; 3],
    pub detect_probability: f64,
    /// Index into the pseudo-objects for bodies that are not real.
    pub pseudo: Option<usize>,
}

/// A body as projected into one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InView {
    pub body: usize,
    pub sprite: Sprite,
    /// Unclipped projected centre lies inside the image.
    pub centred: bool,
    pub distance: f64,
}

impl InView {
    pub fn resolvable(&self) -> bool {
        let b = &self.sprite.bbox;
        self.centred && b.width() >= MIN_DETECTABLE_PX && b.height() >= MIN_DETECTABLE_PX
    }
}

/// One detector frame and what the detector reported on it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub robot: RobotId,
    pub camera: CameraId,
    pub frame: usize,
    pub timestamp: f64,
    pub stats: FrameStats,
    pub detections: Vec<(Detection, Source)>,
}

pub fn image_ref(robot: u32, camera: u32, frame: usize) -> String {
    format!("r{robot}-c{camera}-f{frame}")
}

/// Inverse of [`image_ref`].
pub fn parse_image_ref(s: &str) -> Option<(u32, u32, usize)> {
    let mut it = s.split('-');
    let r = it.next()?.strip_prefix('r')?.parse().ok()?;
    let c = it.next()?.strip_prefix('c')?.parse().ok()?;
    let f = it.next()?.strip_prefix('f')?.parse().ok()?;
    it.next().is_none().then_some((r, c, f))
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub config: RunConfig,
    pub seed: u64,
    pub objects: Vec<GroundTruthObject>,
    pub pseudo: Vec<PseudoObject>,
    pub bodies: Vec<Body>,
    pub trajectories: Vec<Trajectory>,
    pub cameras: Vec<CameraModel>,
    /// Truth body indices.
    truth: Vec<usize>,
    /// Pseudo-object body indices bucketed by the whole seconds of their
    /// active interval.
    active_by_second: Vec<Vec<usize>>,
}

/// Boxes narrower or shorter than this are below the detector's resolution.
const MIN_DETECTABLE_PX: f64 = 4.0;
const NEAR_PLANE: f64 = 0.3;

impl Scene {
    /// Builds the world for `cfg` with its own scenario seed.
    pub fn new(cfg: &RunConfig) -> Result<Scene> {
        Self::with_seed(cfg, cfg.scenario.seed)
    }

    pub fn with_seed(cfg: &RunConfig, seed: u64) -> Result<Scene> {
        let sc = &cfg.scenario;
        let separation = sc.min_object_separation.unwrap_or(2.0 * cfg.pipeline.d_base_min);
        let objects = generate_world(sc, sc.n_objects, separation, seed)?;
        let trajectories = generate_trajectories(sc, &objects, seed);
        let pseudo = spawn_pseudo_objects(&trajectories, &objects, &sc.noise, sc.noise.max_range, cfg.pipeline.d_base_min, seed);
        let mut bodies: Vec<Body> = objects
            .iter()
            .map(|o| Body {
                source: Source::Truth(o.id),
                label: o.label.clone(),
                position: o.position,
                size: label_dimensions(&o.label),
                color: cfg.pipeline.label(&o.label).map_or_else(|| label_color(&o.label), |l| l.color),
                detect_probability: sc.noise.tp_probability(&o.label),
                pseudo: None,
            })
            .collect();
        bodies.extend(pseudo.iter().enumerate().map(|(k, p)| Body {
            source: Source::FalsePositive(p.id),
            label: p.label.clone(),
            position: p.position,
            size: p.size,
            color: p.color,
            detect_probability: p.detect_probability,
            pseudo: Some(k),
        }));
        let truth = (0..objects.len()).collect();
        let mut active_by_second: Vec<Vec<usize>> = vec![Vec::new(); sc.duration_s.max(0.0).ceil() as usize + 1];
        for (k, p) in pseudo.iter().enumerate() {
            let last = active_by_second.len() - 1;
            let (a, b) = (p.appears_at.max(0.0).floor() as usize, p.vanishes_at.max(0.0).floor() as usize);
            for bucket in &mut active_by_second[a.min(last)..=b.min(last)] {
                bucket.push(objects.len() + k);
            }
        }
        Ok(Scene { config: cfg.clone(), seed, objects, pseudo, bodies, trajectories, cameras: sc.rig.cameras(), truth, active_by_second })
    }

    pub fn noise(&self) -> &DetectorNoiseModel {
        &self.config.scenario.noise
    }

    pub fn tick(&self) -> f64 {
        self.config.scenario.tick()
    }

    pub fn n_frames(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.poses.len())
    }

    /// Camera frames per detector window.
    pub fn window_len(&self) -> usize {
        let p = &self.config;
        ((p.scenario.frame_rate_hz / p.pipeline.detector_rate_hz).round() as usize).max(1)
    }

    pub fn frame_at(&self, timestamp: f64) -> usize {
        (timestamp / self.tick()).round().max(0.0) as usize
    }

    pub fn true_pose(&self, robot: u32, frame: usize) -> &Pose {
        self.trajectories[robot as usize].pose(frame)
    }

    /// Pose as the robot's own localization reports it.
    pub fn reported_pose(&self, robot: u32, frame: usize) -> Pose {
        let mut pose = *self.true_pose(robot, frame);
        let sigma = self.config.scenario.pose_noise_sigma;
        if sigma > 0.0 {
            let mut rng = rng_for(self.seed, &[0x50, robot as u64, frame as u64]);
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            pose.position.x += n.sample(&mut rng);
            pose.position.y += n.sample(&mut rng);
        }
        pose
    }

    /// Bodies projecting into the frame, in no particular order. Pseudo-objects
    /// only exist while they are fooling the detector; otherwise they are
    /// part of the background.
    pub fn in_view(&self, robot: u32, camera: u32, frame: usize) -> Vec<InView> {
        let pose = self.true_pose(robot, frame);
        let cam = &self.cameras[camera as usize];
        let max_range = self.noise().max_range;
        let (w, h) = (cam.width, cam.height);
        let cam_pose = cam.world_pose(pose);
        let to_cam = cam_pose.orientation.inverse();
        let origin = cam_pose.position.vector();
        let mut out = Vec::new();
        let t = frame as f64 * self.tick();
        let second = (t.max(0.0).floor() as usize).min(self.active_by_second.len() - 1);
        for &i in self.truth.iter().chain(&self.active_by_second[second]) {
            let b = &self.bodies[i];
            if b.pseudo.is_some_and(|k| !self.pseudo[k].active(&cam_pose.position, t)) {
                continue;
            }
            let pc = to_cam.apply(&(b.position.vector() - origin));
            if pc.z < NEAR_PLANE {
                continue;
            }
            let distance = pc.norm();
            if distance > max_range {
                continue;
            }
            let Some((u, v)) = cam.project(&pc) else { continue };
            let Some(full) = BoundingBox::from_center(u, v, cam.fx * b.size[0] / pc.z, cam.fy * b.size[1] / pc.z) else {
                continue;
            };
            let Some(bbox) = full.clip(w, h) else { continue };
            let washed = self.color_washed(robot, camera, frame, i);
            let color = if washed { render::wash_out(b.color) } else { b.color };
            out.push(InView { body: i, sprite: Sprite { bbox, depth: pc.z, color }, centred: cam.in_image(u, v), distance });
        }
        out
    }

    fn color_washed(&self, robot: u32, camera: u32, frame: usize, body: usize) -> bool {
        let h = seed_for(self.seed, &[0xC0, robot as u64, camera as u64, frame as u64, body as u64]);
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.noise().color_corruption_probability
    }

    pub fn look(&self, robot: u32, camera: u32, frame: usize) -> FrameLook {
        let mut rng = rng_for(self.seed, &[0x10, robot as u64, camera as u64, frame as u64]);
        let n = self.noise();
        FrameLook {
            texture_seed: rng.random(),
            gain: rng.random_range(0.45..=1.0),
            blur_sigma: render::quantize_sigma(rng.random_range(n.blur_sigma_min..=n.blur_sigma_max)),
        }
    }

    fn sprites(view: &[InView]) -> Vec<Sprite> {
        view.iter().map(|v| v.sprite).collect()
    }

    pub fn gray(&self, robot: u32, camera: u32, frame: usize) -> GrayGrid {
        let cam = &self.cameras[camera as usize];
        let view = self.in_view(robot, camera, frame);
        render::render_gray(cam.width as usize, cam.height as usize, &Self::sprites(&view), &self.look(robot, camera, frame))
    }

    /// Full colour frame, blurred like the luminance the selector saw.
    pub fn rgb(&self, robot: u32, camera: u32, frame: usize) -> RgbGrid {
        let cam = &self.cameras[camera as usize];
        let view = self.in_view(robot, camera, frame);
        render::render_rgb(cam.width as usize, cam.height as usize, &Self::sprites(&view), &self.look(robot, camera, frame), None, true)
    }

    /// Unblurred colour pixels inside `bbox`.
    pub fn patch(&self, robot: u32, camera: u32, frame: usize, bbox: &BoundingBox) -> Vec<[u8; 3]> {
        let cam = &self.cameras[camera as usize];
        let view = self.in_view(robot, camera, frame);
        let img = render::render_rgb(
            cam.width as usize,
            cam.height as usize,
            &Self::sprites(&view),
            &self.look(robot, camera, frame),
            Some(bbox),
            false,
        );
        render::patch(&img, bbox)
    }

    /// Camera-frame LiDAR returns: unoccluded points on the face of every body
    /// in range plus far background returns not hidden behind a body.
    pub fn cloud(&self, robot: u32, camera: u32, frame: usize) -> Vec<Vector3<f64>> {
        let cam = &self.cameras[camera as usize];
        let pose = self.true_pose(robot, frame);
        let n = self.noise();
        let mut rng = rng_for(self.seed, &[0x1D, robot as u64, camera as u64, frame as u64]);
        let view = self.in_view(robot, camera, frame);
        let mut pts = Vec::with_capacity(view.len() * n.lidar_points_per_object + n.lidar_background_points);
        for v in &view {
            let b = &self.bodies[v.body];
            let centre = cam.world_to_camera(pose, &b.position.vector());
            let toward = centre.normalize();
            let right = Vector3::y().cross(&toward).normalize();
            let up = toward.cross(&right);
            for _ in 0..n.lidar_points_per_object {
                let a: f64 = rng.random_range(-0.5..0.5);
                let c: f64 = rng.random_range(-0.5..0.5);
                let p = centre + right * (a * b.size[0]) + up * (c * b.size[1]);
                let hidden = cam
                    .project(&p)
                    .is_some_and(|(u, w)| view.iter().any(|o| o.sprite.depth < v.sprite.depth && o.sprite.bbox.contains(u, w)));
                if !hidden {
                    pts.push(p);
                }
            }
        }
        for _ in 0..n.lidar_background_points {
            let u = rng.random_range(0.0..cam.width as f64);
            let v = rng.random_range(0.0..cam.height as f64);
            let r = rng.random_range(12.0..30.0);
            if view.iter().any(|s| s.sprite.bbox.contains(u, v)) {
                continue;
            }
            pts.push(cam.pixel_ray(u, v) * r);
        }
        pts
    }

    /// Whether the detector could fire on anything in this frame.
    fn anything_detectable(&self, robot: u32, camera: u32, frame: usize) -> bool {
        self.in_view(robot, camera, frame).iter().any(InView::resolvable)
    }

    /// Runs image selection and the detector on detector window `window` of
    /// one camera. Windows where nothing detectable is in view are skipped
    /// without rendering.
    pub fn detect_window(&self, robot: u32, camera: u32, window: usize) -> Result<Vec<FrameResult>> {
        let k = self.window_len();
        let f0 = window * k;
        let f1 = (f0 + k).min(self.n_frames());
        if f0 >= f1 || !self.anything_detectable(robot, camera, f0 + (f1 - f0) / 2) {
            return Ok(Vec::new());
        }
        let mut scored = Vec::with_capacity(f1 - f0);
        let mut grays = Vec::with_capacity(f1 - f0);
        for f in f0..f1 {
            let g = self.gray(robot, camera, f);
            scored.push((f as f64 * self.tick(), laplacian_variance(&g)?));
            grays.push(g);
        }
        select_by_score(scored, self.config.pipeline.selector_budget)
            .into_iter()
            .map(|i| {
                let frame = f0 + i;
                let stats = FrameStats { brightness: grays[i].mean(), sharpness: laplacian_variance(&grays[i])? };
                Ok(self.detect_frame(robot, camera, frame, stats))
            })
            .collect()
    }

    /// Detector output on one frame.
    pub fn detect_frame(&self, robot: u32, camera: u32, frame: usize, stats: FrameStats) -> FrameResult {
        let cam = &self.cameras[camera as usize];
        let n = self.noise();
        let mut rng = rng_for(self.seed, &[0xDE, robot as u64, camera as u64, frame as u64]);
        let jitter = Normal::new(0.0, n.bbox_jitter_px.max(1e-12)).expect("finite jitter");
        let tp_conf = beta(n.tp_confidence);
        let fp_conf = beta(n.fp_confidence);
        let timestamp = frame as f64 * self.tick();
        let iref = image_ref(robot, camera, frame);
        let mut view = self.in_view(robot, camera, frame);
        view.sort_by_key(|v| v.body);
        let mut detections = Vec::new();
        for v in view {
            let b = &self.bodies[v.body];
            let roll: f64 = rng.random();
            let conf_draw: f64 = match b.source {
                Source::Truth(_) => tp_conf.sample(&mut rng),
                _ => fp_conf.sample(&mut rng),
            };
            let d: [f64; 4] = std::array::from_fn(|_| jitter.sample(&mut rng));
            if !v.resolvable() || roll >= b.detect_probability {
                continue;
            }
            let s = v.sprite.bbox;
            let Some(bbox) = BoundingBox::new(s.x_min + d[0], s.y_min + d[1], s.x_max + d[2], s.y_max + d[3])
                .and_then(|b| b.clip(cam.width, cam.height))
            else {
                continue;
            };
            let det = Detection {
                id: format!("{iref}-{}", detections.len()),
                robot: RobotId(robot),
                camera: CameraId(camera),
                timestamp,
                label: b.label.clone(),
                confidence: conf_draw.max(n.confidence_floor).min(1.0),
                bbox,
                image_ref: iref.clone(),
                color_score: None,
                range: None,
                size_score: None,
            };
            detections.push((det, b.source));
        }
        FrameResult { robot: RobotId(robot), camera: CameraId(camera), frame, timestamp, stats, detections }
    }

    /// All detector output of one robot in time order.
    pub fn robot_frames(&self, robot: u32) -> Result<Vec<FrameResult>> {
        let k = self.window_len();
        let windows = self.n_frames().div_ceil(k);
        let mut out = Vec::new();
        for w in 0..windows {
            for c in 0..self.cameras.len() as u32 {
                out.extend(self.detect_window(robot, c, w)?);
            }
        }
        out.sort_by(|a, b| a.frame.cmp(&b.frame).then(a.camera.cmp(&b.camera)));
        Ok(out)
    }
}

fn beta(p: BetaParams) -> Beta<f64> {
    Beta::new(p.alpha, p.beta).expect("validated beta parameters")
}

/// Labelled detector confidences for threshold calibration: each sample is
/// a target with probability one half.
pub fn calibration_set(noise: &DetectorNoiseModel, labels: &[Label], per_label: usize, seed: u64) -> Vec<CalibrationSample> {
    let tp = beta(noise.tp_confidence);
    let fp = beta(noise.fp_confidence);
    let mut out = Vec::with_capacity(labels.len() * per_label);
    for (i, label) in labels.iter().enumerate() {
        let mut rng = rng_for(seed, &[0xCA, i as u64]);
        for _ in 0..per_label {
            let positive = rng.random::<bool>();
            let c: f64 = if positive { tp.sample(&mut rng) } else { fp.sample(&mut rng) };
            out.push(CalibrationSample { label: label.clone(), confidence: c.max(noise.confidence_floor).min(1.0), positive });
        }
    }
    out
}

/// Source of full frames for report images and colour patches.
pub trait ImageStore: Sync {
    fn image(&self, image_ref: &str) -> Result<RgbGrid>;

    fn patch(&self, image_ref: &str, bbox: &BoundingBox) -> Result<Vec<[u8; 3]>> {
        Ok(render::patch(&self.image(image_ref)?, bbox))
    }
}

impl ImageStore for Scene {
    fn image(&self, image_ref: &str) -> Result<RgbGrid> {
        let (r, c, f) = self.locate(image_ref)?;
        Ok(self.rgb(r, c, f))
    }

    fn patch(&self, image_ref: &str, bbox: &BoundingBox) -> Result<Vec<[u8; 3]>> {
        let (r, c, f) = self.locate(image_ref)?;
        Ok(Scene::patch(self, r, c, f, bbox))
    }
}

impl Scene {
    fn locate(&self, image_ref: &str) -> Result<(u32, u32, usize)> {
        parse_image_ref(image_ref)
            .filter(|&(r, c, f)| (r as usize) < self.trajectories.len() && (c as usize) < self.cameras.len() && f < self.n_frames())
            .ok_or_else(|| Error::Io(format!("no synthetic frame {image_ref:?}")))
    }
}

/// PNG frames stored as `<dir>/<image_ref>.png`.
#[derive(Debug, Clone)]
pub struct DirImageStore {
    pub root: PathBuf,
}

impl ImageStore for DirImageStore {
    fn image(&self, image_ref: &str) -> Result<RgbGrid> {
        let path = self.root.join(format!("{image_ref}.png"));
        let img = image::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?.to_rgb8();
        let (w, h) = img.dimensions();
        Ok(RgbGrid { width: w as usize, height: h as usize, data: img.pixels().map(|p| p.0).collect() })
    }
}

/// PNG encoding of `img`.
pub fn encode_png(img: &RgbGrid) -> Result<Vec<u8>> {
    let buf: Vec<u8> = img.data.iter().flatten().copied().collect();
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(&mut out, &buf, img.width as u32, img.height as u32, image::ColorType::Rgb8, image::ImageFormat::Png)
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_png(img: &RgbGrid, path: &std::path::Path) -> Result<()> {
    let buf: Vec<u8> = img.data.iter().flatten().copied().collect();
    image::save_buffer(path, &buf, img.width as u32, img.height as u32, image::ColorType::Rgb8)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
