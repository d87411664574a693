//! On-disk run artifacts and the recorded-detection reader.
//!
//! Every file is a pure function of the configuration and seed, so two runs
//! produce byte-identical directories; `MANIFEST.sha256` lists a digest per
//! file in `sha256sum` format.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::base::ClusterSummary;
use crate::comms::{schedule_csv, write_frame, WireMessage};
use crate::error::{Error, Result};
use crate::eval::tables::render_tables;
use crate::model::{Detection, Source};
use crate::pipeline::RunOutput;
use crate::sim::{write_png, ImageStore, PseudoObject};

pub const MANIFEST: &str = "MANIFEST.sha256";

#[derive(Serialize)]
struct World<'a> {
    seed: u64,
    objects: &'a [crate::model::GroundTruthObject],
    pseudo_objects: &'a [PseudoObject],
}

#[derive(Serialize)]
struct ClusterRecord<'a> {
    #[serde(flatten)]
    summary: &'a ClusterSummary,
    reports: Vec<u64>,
    source: Source,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn put(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Parse(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes the artifacts of `out` into `dir`, creating it if needed. With
/// `images`, the frames referenced by delivered reports are written as PNG
/// under `images/`. Returns the manifest entries.
pub fn write_run(out: &RunOutput, dir: &Path, images: Option<&dyn ImageStore>) -> Result<Vec<(String, String)>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let m = &out.mission;

    let config = toml::to_string_pretty(&m.config).map_err(|e| Error::Parse(e.to_string()))?;
    put(dir, "config.toml", config.as_bytes())?;
    put(dir, "thresholds.json", &json(&m.thresholds)?)?;
    put(dir, "world.json", &json(&World { seed: m.seed(), objects: &m.scene.objects, pseudo_objects: &m.scene.pseudo })?)?;
    put(dir, "detections.jsonl", &jsonl(m.robots.iter().flat_map(|r| r.detections.iter()))?)?;
    put(dir, "oracle.jsonl", &jsonl(m.robots.iter().flat_map(|r| r.oracle.iter()))?)?;
    put(dir, "associations.jsonl", &jsonl(m.robots.iter().flat_map(|r| r.associations.iter()))?)?;

    let mut wire = Vec::new();
    for d in &m.link.deliveries {
        let report = m.report(d.report_id).expect("delivered report exists").clone();
        write_frame(&mut wire, &WireMessage::Report { sent_at: d.enqueued_at, report })?;
    }
    put(dir, "reports.wire", &wire)?;
    put(dir, "schedule.csv", schedule_csv(&m.link.deliveries).as_bytes())?;

    let ranked = out.ranked_clusters();
    let clusters: Vec<ClusterRecord> = ranked
        .iter()
        .map(|s| ClusterRecord {
            summary: s,
            reports: out.base.get(s.id).map(|d| d.reports).unwrap_or_default(),
            source: out.cluster_sources.get(&s.id).copied().unwrap_or(Source::Unknown),
        })
        .collect();
    put(dir, "clusters.json", &json(&clusters)?)?;
    put(dir, "audit.jsonl", &jsonl(out.base.audit())?)?;
    put(dir, "decisions.jsonl", &jsonl(&out.operator.decisions)?)?;
    put(dir, "submission.json", &json(&out.operator.submission)?)?;
    put(dir, "reward.json", &json(&out.reward)?)?;

    let tables = render_tables(std::slice::from_ref(&out.counts));
    put(dir, "images_table.csv", tables.images_csv.as_bytes())?;
    put(dir, "objects_table.csv", tables.objects_csv.as_bytes())?;
    put(dir, "tables.txt", format!("{}\n{}", tables.images_text, tables.objects_text).as_bytes())?;
    put(dir, "metrics.json", &json(&out.summary)?)?;

    if let Some(store) = images {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir).map_err(|e| io_err(&img_dir, e))?;
        let refs: BTreeSet<&str> = m
            .link
            .deliveries
            .iter()
            .filter_map(|d| m.report(d.report_id))
            .flat_map(|r| r.images.iter().map(|i| i.image_ref.as_str()))
            .collect();
        for r in refs {
            write_png(&store.image(r)?, &img_dir.join(format!("{r}.png")))?;
        }
    }

    let entries = digest_dir(dir)?;
    let mut manifest = String::new();
    for (path, digest) in &entries {
        manifest.push_str(&format!("{digest}  {path}\n"));
    }
    put(dir, MANIFEST, manifest.as_bytes())?;
    Ok(entries)
}

/// SHA-256 of the manifest in `dir`: one digest for the whole run.
pub fn run_checksum(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of every file under `dir` except the manifest, by relative path.
pub fn digest_dir(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    files
        .into_iter()
        .filter(|rel| rel != MANIFEST)
        .map(|rel| {
            let path = dir.join(&rel);
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            Ok((rel, hex(&Sha256::digest(&bytes))))
        })
        .collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path: PathBuf = entry.map_err(|e| io_err(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

/// Reads detections from JSON lines. Blank lines are skipped; extra fields
/// such as a recorded verdict are ignored. Errors carry the 1-based line
/// number.
pub fn read_detections(input: impl BufRead) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Line { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let det: Detection = serde_json::from_str(&line).map_err(|e| Error::Line { line: i + 1, message: e.to_string() })?;
        det.validate().map_err(|message| Error::Line { line: i + 1, message })?;
        out.push(det);
    }
    Ok(out)
}

pub fn read_detections_file(path: &Path) -> Result<Vec<Detection>> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_detections(std::io::BufReader::new(file))
}

/// Writes detections as JSON lines.
pub fn write_detections(mut w: impl Write, detections: &[Detection]) -> Result<()> {
    w.write_all(&jsonl(detections)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, CameraId, Label, RobotId};

    fn det(id: &str) -> Detection {
        Detection {
            id: id.into(),
            robot: RobotId(0),
            camera: CameraId(1),
            timestamp: 2.0,
            label: Label::Backpack,
            confidence: 0.8,
            bbox: BoundingBox::from_center(10.0, 10.0, 6.0, 6.0).unwrap(),
            image_ref: "r0-c1-f50".into(),
            color_score: None,
            range: None,
            size_score: None,
        }
    }

    #[test]
    fn detections_round_trip() {
        let dets = vec![det("a"), det("b")];
        let mut buf = Vec::new();
        write_detections(&mut buf, &dets).unwrap();
        assert_eq!(read_detections(buf.as_slice()).unwrap(), dets);
    }

    #[test]
    fn malformed_line_is_numbered() {
        let mut buf = Vec::new();
        write_detections(&mut buf, &[det("a")]).unwrap();
        buf.extend_from_slice(b"\n{\"id\": 3}\n");
        match read_detections(buf.as_slice()) {
            Err(Error::Line { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_confidence_is_rejected() {
        let mut d = det("a");
        d.confidence = 1.5;
        let mut buf = Vec::new();
        write_detections(&mut buf, &[d]).unwrap();
        assert!(matches!(read_detections(buf.as_slice()), Err(Error::Line { line: 1, .. })));
    }

    #[test]
    fn digests_skip_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/a.txt"), b"abc").unwrap();
        fs::write(dir.path().join(MANIFEST), b"x").unwrap();
        let d = digest_dir(dir.path()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].0, "sub/a.txt");
        assert_eq!(d[0].1, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
