use std::sync::OnceLock;

use semmap_core::artifacts::{digest_dir, read_detections_file, write_run};
use semmap_core::eval::Stage;
use semmap_core::pipeline::{run, RunOutput, Verdict};
use semmap_core::{RunConfig, Source};

fn short() -> RunConfig {
    let mut cfg = RunConfig::load("prelim").unwrap();
    cfg.scenario.duration_s = 300.0;
    cfg.scenario.n_objects = 4;
    cfg
}

fn shared() -> &'static RunOutput {
    static OUT: OnceLock<RunOutput> = OnceLock::new();
    OUT.get_or_init(|| run(&short(), 3, None, None).unwrap())
}

#[test]
fn stage_invariants_hold() {
    let out = shared();
    let s = &out.summary;
    let obj = &s.stages.object;
    for w in obj.windows(2) {
        assert!(w[1].tp <= w[0].tp, "recall increased from {:?} to {:?}", w[0].stage, w[1].stage);
    }
    for (o, i) in obj.iter().zip(&s.stages.image) {
        assert!(o.tp <= i.tp);
        assert_eq!(o.tp + o.fn_, s.n_truth);
    }
    assert!(s.reward <= s.submitted.min(s.n_truth));
    assert!(s.submitted <= out.mission.config.pipeline.s_max);
    assert_eq!(s.review_time_s, s.reviewed as f64 * out.mission.config.operator.seconds_per_item);
    assert_eq!(obj[3].stage, Stage::ALL[3]);
}

#[test]
fn only_multi_observation_reports_are_sent() {
    let out = shared();
    let min = out.mission.config.pipeline.min_observations;
    for d in &out.mission.link.deliveries {
        assert!(out.mission.report(d.report_id).unwrap().n_observations() >= min);
    }
}

#[test]
fn clusters_are_credited_by_majority() {
    let out = shared();
    assert_eq!(out.cluster_sources.len(), out.base.clusters().len());
    let truth: usize = out.cluster_sources.values().filter(|s| matches!(s, Source::Truth(_))).count();
    assert!(truth >= out.summary.stages.object[2].tp);
}

#[test]
fn artifacts_are_reproducible_and_replayable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = shared();
    let first = write_run(out, a.path(), Some(&out.mission.scene)).unwrap();
    let again = run(&short(), 3, None, None).unwrap();
    let second = write_run(&again, b.path(), Some(&again.mission.scene)).unwrap();
    assert_eq!(first, second);
    assert_eq!(digest_dir(a.path()).unwrap(), first);
    assert!(first.iter().any(|(p, _)| p.starts_with("images/")));

    let cfg = RunConfig::load(a.path().join("config.toml").to_str().unwrap()).unwrap();
    assert_eq!(cfg.pipeline, out.mission.config.pipeline);

    let dets = read_detections_file(&a.path().join("detections.jsonl")).unwrap();
    assert_eq!(dets.len(), out.summary.raw_detections);
    let replayed = run(&short(), 3, Some(dets), None).unwrap();
    let ids = |o: &RunOutput| o.mission.link.deliveries.iter().map(|d| d.report_id).collect::<Vec<_>>();
    assert_eq!(ids(&replayed), ids(out));
    assert_eq!(replayed.mission.link.deliveries, out.mission.link.deliveries);
    let passed = |o: &RunOutput| o.mission.robots.iter().flat_map(|r| &r.detections).filter(|d| d.verdict == Verdict::Passed).count();
    assert_eq!(passed(&replayed), passed(out));
    assert_eq!(replayed.summary.stages.object[0].tp, out.summary.stages.object[0].tp);
}

#[test]
fn different_seeds_differ() {
    let other = run(&short(), 4, None, None).unwrap();
    assert_ne!(other.summary.raw_detections, shared().summary.raw_detections);
}
