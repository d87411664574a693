//! Image-level (TP/FP/review time) and object-level (TP/FP/recall/precision)
//! summary tables, as CSV and aligned text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{format_precision, format_recall, format_review_time, Granularity, Stage, StageMetrics};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl StageCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        StageCounts { tp, fp, fn_ }
    }
}

impl From<&StageMetrics> for StageCounts {
    fn from(m: &StageMetrics) -> Self {
        StageCounts { tp: m.tp, fp: m.fp, fn_: m.fn_ }
    }
}

/// Recorded counts of one run: image-level for the detection, robot and
/// base outputs, object-level for all four stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub name: String,
    pub robots: u32,
    pub n_truth: usize,
    pub seconds_per_item: f64,
    pub image: [StageCounts; 3],
    pub object: [StageCounts; 4],
}

impl RunCounts {
    pub fn image_metrics(&self) -> Vec<StageMetrics> {
        self.image
            .iter()
            .zip(Stage::ALL)
            .map(|(c, s)| StageMetrics::from_counts(s, Granularity::ImageBased, c.tp, c.fp, c.fn_, self.seconds_per_item))
            .collect()
    }

    pub fn object_metrics(&self) -> Vec<StageMetrics> {
        self.object
            .iter()
            .zip(Stage::ALL)
            .map(|(c, s)| StageMetrics::from_counts(s, Granularity::ObjectBased, c.tp, c.fp, c.fn_, self.seconds_per_item))
            .collect()
    }

    fn heading(&self) -> String {
        format!("{} ({} robots) ({} true objects)", self.name, self.robots, self.n_truth)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tables {
    pub images_csv: String,
    pub images_text: String,
    pub objects_csv: String,
    pub objects_text: String,
}

/// Cell grid of the image-level table for one run: rows TP, FP, time.
pub fn image_rows(run: &RunCounts) -> Vec<(String, Vec<String>)> {
    let m = run.image_metrics();
    vec![
        ("TP".into(), m.iter().map(|x| x.tp.to_string()).collect()),
        ("FP".into(), m.iter().map(|x| x.fp.to_string()).collect()),
        ("time".into(), m.iter().map(|x| format_review_time(x.review_time_s)).collect()),
    ]
}

/// Cell grid of the object-level table for one run: rows TP, FP, Recall,
/// Precision.
pub fn object_rows(run: &RunCounts) -> Vec<(String, Vec<String>)> {
    let m = run.object_metrics();
    vec![
        ("TP".into(), m.iter().map(|x| x.tp.to_string()).collect()),
        ("FP".into(), m.iter().map(|x| x.fp.to_string()).collect()),
        ("Recall".into(), m.iter().map(|x| format_recall(x.recall)).collect()),
        ("Precision".into(), m.iter().map(|x| format_precision(x.precision)).collect()),
    ]
}

pub fn render_tables(runs: &[RunCounts]) -> Tables {
    let image_stages = &Stage::ALL[..3];
    let images: Vec<_> = runs.iter().map(|r| (r.heading(), image_rows(r))).collect();
    let objects: Vec<_> = runs.iter().map(|r| (r.heading(), object_rows(r))).collect();
    Tables {
        images_csv: csv_table(runs, image_stages, &images),
        images_text: text_table("TP and FP images/reports per stage", image_stages, &images),
        objects_csv: csv_table(runs, &Stage::ALL, &objects),
        objects_text: text_table("TP and FP objects per stage", &Stage::ALL, &objects),
    }
}

type Block = (String, Vec<(String, Vec<String>)>);

fn csv_table(runs: &[RunCounts], stages: &[Stage], blocks: &[Block]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run".to_string(), "row".to_string()];
    header.extend(stages.iter().map(|s| serde_json::to_value(s).unwrap().as_str().unwrap().to_string()));
    w.write_record(&header).expect("in-memory csv");
    for (run, (_, rows)) in runs.iter().zip(blocks) {
        for (row, cells) in rows {
            let mut rec = vec![run.name.clone(), row.clone()];
            rec.extend(cells.iter().cloned());
            w.write_record(&rec).expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

fn text_table(title: &str, stages: &[Stage], blocks: &[Block]) -> String {
    let label_w = blocks.iter().map(|(h, _)| h.len()).max().unwrap_or(0).max(10);
    let col_w = stages.iter().map(|s| s.title().len()).max().unwrap_or(8) + 2;
    let mut out = String::new();
    writeln!(out, "{title}").unwrap();
    write!(out, "{:label_w$}  {:9}", "", "").unwrap();
    for s in stages {
        write!(out, "{:>col_w$}", s.title()).unwrap();
    }
    out.push('\n');
    for (heading, rows) in blocks {
        for (i, (row, cells)) in rows.iter().enumerate() {
            let h = if i == 0 { heading.as_str() } else { "" };
            write!(out, "{h:label_w$}  {row:9}").unwrap();
            for c in cells {
                write!(out, "{c:>col_w$}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> RunCounts {
        RunCounts {
            name: "empty".into(),
            robots: 1,
            n_truth: 0,
            seconds_per_item: 7.5,
            image: [StageCounts::default(); 3],
            object: [StageCounts::default(); 4],
        }
    }

    #[test]
    fn empty_run_is_all_zero() {
        let r = empty();
        for (_, cells) in &image_rows(&r)[..2] {
            assert!(cells.iter().all(|c| c == "0"));
        }
        assert!(image_rows(&r)[2].1.iter().all(|c| c == "0min"));
        let t = render_tables(&[r]);
        assert_eq!(t.objects_csv.lines().count(), 5);
        assert!(t.images_csv.starts_with("run,row,detection_output,robot_output,base_output\n"));
    }

    #[test]
    fn perfect_operator_row_reads_full_precision() {
        let mut r = empty();
        r.n_truth = 3;
        r.object[3] = StageCounts::new(3, 0, 0);
        let rows = object_rows(&r);
        assert_eq!(rows[3].1[3], "100%");
        assert_eq!(rows[2].1[3], "100%");
    }

    #[test]
    fn text_lists_every_stage() {
        let t = render_tables(&[empty()]);
        for s in Stage::ALL {
            assert!(t.objects_text.contains(s.title()));
        }
        assert!(!t.images_text.contains("Operator Output"));
    }
}
