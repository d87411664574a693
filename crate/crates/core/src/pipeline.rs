//! End-to-end mission run: detector output through the robot filters,
//! the link, base-station clustering and the simulated reviewer, plus the
//! per-stage evaluation against ground truth.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::base::{BaseStation, ClusterFilter, ClusterOrder, ClusterSummary};
use crate::comms::{transmit, Report, ReportScheduler, TransmitOutcome};
use crate::config::RunConfig;
use crate::detect::{calibrate_thresholds, filter_detection, passes_threshold, DropReason, ThresholdFit};
use crate::error::{Error, Result};
use crate::eval::tables::{RunCounts, StageCounts};
use crate::eval::{majority_source, reward, stage_metrics, Granularity, Reward, Stage, StageMetrics};
use crate::model::{Detection, FrameStats, Label, RobotId, Source, SubmissionEntry};
use crate::operator::{simulate_operator, OperatorOutcome};
use crate::reconcile::{AssociationEvent, ObjectCandidate, RobotReconciler};
use crate::sim::{calibration_set, parse_image_ref, seed_for, FrameResult, ImageStore, Scene};

/// What happened to one raw detection on the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    BelowThreshold,
    ColorMismatch,
    UnknownLabel,
}

impl From<DropReason> for Verdict {
    fn from(r: DropReason) -> Self {
        match r {
            DropReason::BelowThreshold => Verdict::BelowThreshold,
            DropReason::ColorMismatch => Verdict::ColorMismatch,
            DropReason::UnknownLabel => Verdict::UnknownLabel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(flatten)]
    pub detection: Detection,
    pub verdict: Verdict,
}

/// Oracle line: which physical thing produced a detection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub detection_id: String,
    pub source: Source,
}

/// Everything one robot produced.
#[derive(Debug, Clone, Default)]
pub struct RobotLog {
    pub detections: Vec<DetectionRecord>,
    pub oracle: Vec<OracleEntry>,
    pub associations: Vec<AssociationEvent>,
    pub reports: Vec<Report>,
    pub candidates: Vec<ObjectCandidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub image: Vec<StageMetrics>,
    pub object: Vec<StageMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSummary {
    pub reports_generated: usize,
    pub delivered: usize,
    pub superseded: usize,
    pub undelivered: usize,
    pub refused: usize,
    pub bytes_delivered: u64,
}

/// Headline numbers of one run, written as `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub robots: u32,
    pub n_truth: usize,
    pub thresholds: BTreeMap<Label, f64>,
    pub raw_detections: usize,
    pub stages: StageSummary,
    pub link: LinkSummary,
    pub clusters: usize,
    pub reviewed: usize,
    pub review_time_s: f64,
    pub submitted: usize,
    pub reward: usize,
}

/// Everything up to and including the link. The base station and the
/// reviewer run on top of it, either headless or behind the live API.
#[derive(Debug, Clone)]
pub struct Mission {
    pub config: RunConfig,
    pub scene: Scene,
    pub thresholds: BTreeMap<Label, ThresholdFit>,
    pub robots: Vec<RobotLog>,
    /// All generated reports, by creation time.
    pub reports: Vec<Report>,
    pub link: TransmitOutcome,
    index: HashMap<u64, usize>,
}

pub struct RunOutput {
    pub mission: Mission,
    pub base: BaseStation,
    pub operator: OperatorOutcome,
    pub cluster_sources: BTreeMap<u64, Source>,
    pub counts: RunCounts,
    pub reward: Reward,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn ranked_clusters(&self) -> Vec<ClusterSummary> {
        self.base.list(&ClusterFilter::default(), ClusterOrder::Rank)
    }
}

/// Replaces the configured thresholds with F1-optimal ones fitted on a
/// synthetic calibration set. Labels without positives keep their value.
pub fn calibrate(cfg: &mut RunConfig, seed: u64) -> BTreeMap<Label, ThresholdFit> {
    let labels: Vec<Label> = cfg.pipeline.labels.keys().cloned().collect();
    let set = calibration_set(&cfg.scenario.noise, &labels, cfg.pipeline.calibration_samples, seed_for(seed, &[0xCA1]));
    let fits = calibrate_thresholds(&set);
    for (label, fit) in &fits {
        if !fit.degenerate {
            if let Some(lc) = cfg.pipeline.labels.get_mut(label) {
                lc.threshold = fit.threshold;
            }
        }
    }
    fits
}

/// Robot-side processing of one robot's detector output, in time order.
pub fn process_robot(scene: &Scene, cfg: &RunConfig, robot: u32, frames: &[FrameResult], store: &dyn ImageStore) -> Result<RobotLog> {
    let p = &cfg.pipeline;
    let mut log = RobotLog::default();
    let mut rec = RobotReconciler::new(RobotId(robot), p);
    let mut sched = ReportScheduler::new(RobotId(robot));
    for fr in frames {
        let camera = &scene.cameras[fr.camera.0 as usize];
        let mut cloud = None;
        for (det, source) in &fr.detections {
            log.oracle.push(OracleEntry { detection_id: det.id.clone(), source: *source });
            if !passes_threshold(det, p) {
                log.detections.push(DetectionRecord { detection: det.clone(), verdict: Verdict::BelowThreshold });
                continue;
            }
            let patch = store.patch(&det.image_ref, &det.bbox)?;
            let (det, drop) = filter_detection(det.clone(), &patch, p);
            if let Some(reason) = drop {
                log.detections.push(DetectionRecord { detection: det, verdict: reason.into() });
                continue;
            }
            let pts = cloud.get_or_insert_with(|| scene.cloud(robot, fr.camera.0, fr.frame));
            let pose = scene.reported_pose(robot, fr.frame);
            let (det, event) = rec.process(det, &pose, camera, Some(pts), fr.stats);
            if let Some(id) = event.candidate() {
                let cand = rec.candidate(id).expect("associated candidate exists");
                if let Some(report) = sched.maybe_report(cand, det.timestamp, p, &cfg.network) {
                    log.reports.push(report);
                }
            }
            log.associations.push(event);
            log.detections.push(DetectionRecord { detection: det, verdict: Verdict::Passed });
        }
    }
    log.candidates = rec.into_candidates();
    Ok(log)
}

/// Groups replayed detections into per-robot frames. Frame statistics and
/// oracle sources are recomputed from the scene: a detection is credited to
/// the nearest same-label body whose projection contains its box centre.
pub fn replay_frames(scene: &Scene, detections: Vec<Detection>) -> Result<Vec<Vec<FrameResult>>> {
    let mut per_robot: Vec<BTreeMap<(usize, u32), FrameResult>> = vec![BTreeMap::new(); scene.trajectories.len()];
    for det in detections {
        let r = det.robot.0 as usize;
        if r >= per_robot.len() || det.camera.0 as usize >= scene.cameras.len() {
            return Err(Error::Parse(format!("detection {} refers to an unknown robot or camera", det.id)));
        }
        let frame = parse_image_ref(&det.image_ref).map_or_else(|| scene.frame_at(det.timestamp), |(_, _, f)| f);
        let key = (frame, det.camera.0);
        let fr = per_robot[r].entry(key).or_insert_with(|| {
            let gray = scene.gray(det.robot.0, det.camera.0, frame);
            let stats = FrameStats { brightness: gray.mean(), sharpness: crate::detect::laplacian_variance(&gray).unwrap_or(0.0) };
            FrameResult { robot: det.robot, camera: det.camera, frame, timestamp: det.timestamp, stats, detections: Vec::new() }
        });
        let (u, v) = det.bbox.center();
        let source = scene
            .in_view(det.robot.0, det.camera.0, frame)
            .into_iter()
            .filter(|iv| iv.sprite.bbox.contains(u, v) && scene.bodies[iv.body].label == det.label)
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
            .map_or(Source::Unknown, |iv| scene.bodies[iv.body].source);
        fr.detections.push((det, source));
    }
    Ok(per_robot.into_iter().map(|m| m.into_values().collect()).collect())
}

fn artifact_source<'a>(ids: impl IntoIterator<Item = &'a str>, oracle: &HashMap<&str, Source>) -> Source {
    let members: Vec<Source> = ids.into_iter().map(|id| oracle.get(id).copied().unwrap_or(Source::Unknown)).collect();
    majority_source(&members)
}

/// Runs detection, the robot filters and the link for `seed`. `replay`
/// substitutes recorded detector output for the synthetic detector; `store`
/// substitutes recorded frames.
pub fn simulate(cfg: &RunConfig, seed: u64, replay: Option<Vec<Detection>>, store: Option<&dyn ImageStore>) -> Result<Mission> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let thresholds = if cfg.pipeline.calibrate_thresholds { calibrate(&mut cfg, seed) } else { BTreeMap::new() };
    let scene = Scene::with_seed(&cfg, seed)?;
    let store: &dyn ImageStore = store.unwrap_or(&scene);
    let n_robots = scene.trajectories.len();

    let frames: Vec<Vec<FrameResult>> = match replay {
        Some(dets) => replay_frames(&scene, dets)?,
        None => std::thread::scope(|s| {
            let handles: Vec<_> = (0..n_robots as u32)
                .map(|r| {
                    let scene = &scene;
                    s.spawn(move || scene.robot_frames(r))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("detector thread")).collect::<Result<Vec<_>>>()
        })?,
    };
    let robots: Vec<RobotLog> = std::thread::scope(|s| {
        let handles: Vec<_> = frames
            .iter()
            .enumerate()
            .map(|(r, fr)| {
                let (scene, cfg) = (&scene, &cfg);
                s.spawn(move || process_robot(scene, cfg, r as u32, fr, store))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("robot thread")).collect::<Result<Vec<_>>>()
    })?;
    drop(frames);

    let mut reports: Vec<Report> = robots.iter().flat_map(|r| r.reports.iter().cloned()).collect();
    reports.sort_by(|a, b| a.created_at.total_cmp(&b.created_at).then(a.id.cmp(&b.id)));
    let close_at = cfg.scenario.duration_s + cfg.scenario.drain_s;
    let link = transmit(&reports, &cfg.network, cfg.pipeline.min_observations, close_at);
    let index = reports.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    Ok(Mission { config: cfg, scene, thresholds, robots, reports, link, index })
}

impl Mission {
    pub fn seed(&self) -> u64 {
        self.scene.seed
    }

    /// When the link closes and review starts.
    pub fn close_at(&self) -> f64 {
        self.config.scenario.duration_s + self.config.scenario.drain_s
    }

    pub fn report(&self, id: u64) -> Option<&Report> {
        self.index.get(&id).map(|&i| &self.reports[i])
    }

    pub fn oracle(&self) -> HashMap<&str, Source> {
        self.robots.iter().flat_map(|r| r.oracle.iter()).map(|o| (o.detection_id.as_str(), o.source)).collect()
    }

    /// A fresh base station that has received every delivery.
    pub fn base_station(&self) -> BaseStation {
        let mut base = BaseStation::new(&self.config.pipeline);
        for d in &self.link.deliveries {
            base.ingest(self.reports[self.index[&d.report_id]].clone(), d.arrived_at);
        }
        base
    }

    /// Majority oracle source over each cluster's distinct member detections.
    pub fn cluster_sources(&self, base: &BaseStation) -> BTreeMap<u64, Source> {
        let oracle = self.oracle();
        base.clusters()
            .iter()
            .map(|c| {
                let mut ids: Vec<&str> = c.members.iter().flat_map(|m| m.observations.iter().map(|o| o.detection_id.as_str())).collect();
                ids.sort_unstable();
                ids.dedup();
                (c.id, artifact_source(ids, &oracle))
            })
            .collect()
    }

    /// Per-stage metrics given the base station's current clusters and a
    /// submission.
    pub fn stage_summary(&self, base: &BaseStation, submission: &[SubmissionEntry]) -> StageSummary {
        let oracle = self.oracle();
        let cluster_sources = self.cluster_sources(base);
        let detection_sources: Vec<Source> = self
            .robots
            .iter()
            .flat_map(|r| r.detections.iter())
            .filter(|d| d.verdict == Verdict::Passed)
            .map(|d| oracle.get(d.detection.id.as_str()).copied().unwrap_or(Source::Unknown))
            .collect();
        let mut latest: BTreeMap<u64, &Report> = BTreeMap::new();
        for d in &self.link.deliveries {
            latest.insert(d.candidate, &self.reports[self.index[&d.report_id]]);
        }
        let robot_sources: Vec<Source> =
            latest.values().map(|r| artifact_source(r.observations.iter().map(|o| o.detection_id.as_str()), &oracle)).collect();
        let base_sources: Vec<Source> = cluster_sources.values().copied().collect();
        let operator_sources: Vec<Source> =
            submission.iter().map(|s| cluster_sources.get(&s.cluster).copied().unwrap_or(Source::Unknown)).collect();

        let n_truth = self.scene.objects.len();
        let spi = self.config.pipeline.operator_seconds_per_item;
        let stage_sources = [&detection_sources, &robot_sources, &base_sources, &operator_sources];
        let metrics = |g: Granularity, n: usize| -> Vec<StageMetrics> {
            Stage::ALL.iter().zip(stage_sources).take(n).map(|(&s, src)| stage_metrics(s, g, src, n_truth, spi)).collect()
        };
        StageSummary { image: metrics(Granularity::ImageBased, 3), object: metrics(Granularity::ObjectBased, 4) }
    }

    pub fn run_counts(&self, stages: &StageSummary) -> RunCounts {
        let sc = &self.config.scenario;
        RunCounts {
            name: sc.name.clone(),
            robots: sc.robots,
            n_truth: self.scene.objects.len(),
            seconds_per_item: self.config.pipeline.operator_seconds_per_item,
            image: std::array::from_fn(|i| StageCounts::from(&stages.image[i])),
            object: std::array::from_fn(|i| StageCounts::from(&stages.object[i])),
        }
    }

    pub fn link_summary(&self) -> LinkSummary {
        let link = &self.link;
        LinkSummary {
            reports_generated: self.reports.len(),
            delivered: link.deliveries.len(),
            superseded: link.superseded.len(),
            undelivered: link.undelivered.len(),
            refused: link.refused.len(),
            bytes_delivered: link.deliveries.iter().map(|d| d.bytes).sum(),
        }
    }
}

/// Runs the full mission for `seed` with the simulated reviewer.
pub fn run(cfg: &RunConfig, seed: u64, replay: Option<Vec<Detection>>, store: Option<&dyn ImageStore>) -> Result<RunOutput> {
    let mission = simulate(cfg, seed, replay, store)?;
    let mut base = mission.base_station();
    let cluster_sources = mission.cluster_sources(&base);
    let cfg = &mission.config;
    let mut model = cfg.operator.clone();
    model.seed = seed_for(seed, &[0x0B, cfg.operator.seed]);
    let operator =
        simulate_operator(&mut base, &model, |id| matches!(cluster_sources.get(&id), Some(Source::Truth(_))), mission.close_at())?;

    let stages = mission.stage_summary(&base, &operator.submission);
    let counts = mission.run_counts(&stages);
    let reward = reward(&operator.submission, &mission.scene.objects, cfg.pipeline.e_max);
    let summary = RunSummary {
        scenario: cfg.scenario.name.clone(),
        seed,
        robots: cfg.scenario.robots,
        n_truth: mission.scene.objects.len(),
        thresholds: cfg.pipeline.labels.iter().map(|(l, c)| (l.clone(), c.threshold)).collect(),
        raw_detections: mission.robots.iter().map(|r| r.detections.len()).sum(),
        stages,
        link: mission.link_summary(),
        clusters: base.clusters().len(),
        reviewed: operator.reviewed,
        review_time_s: operator.time_spent_s,
        submitted: operator.submission.len(),
        reward: reward.total,
    };
    Ok(RunOutput { mission, base, operator, cluster_sources, counts, reward, summary })
}
