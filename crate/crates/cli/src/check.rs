//! Per-run self checks behind `run --check`.

use semmap_core::comms::{message_bytes, peak_window_bytes};
use semmap_core::pipeline::RunOutput;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn pct(p: Option<f64>) -> String {
    p.map_or("n/a".into(), |p| format!("{:.2}%", 100.0 * p))
}

pub fn run_checks(out: &RunOutput) -> Vec<Check> {
    let m = &out.mission;
    let obj = &out.summary.stages.object;
    let img = &out.summary.stages.image;
    let mut checks = Vec::new();

    let recall: Vec<Option<f64>> = obj[..3].iter().map(|s| s.recall).collect();
    checks.push(Check {
        name: "full object recall at detection, robot and base",
        passed: recall.iter().all(|r| *r == Some(1.0)),
        detail: recall.iter().map(|r| pct(*r)).collect::<Vec<_>>().join(" / "),
    });

    let precision: Vec<Option<f64>> = obj[..3].iter().map(|s| s.precision).collect();
    let increasing = precision.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b > a));
    checks.push(Check {
        name: "object precision increases across detection, robot, base",
        passed: increasing,
        detail: precision.iter().map(|p| pct(*p)).collect::<Vec<_>>().join(" < "),
    });

    let uplift = match (precision[0], precision[2]) {
        (Some(d), Some(b)) if d > 0.0 => Some(b / d),
        _ => None,
    };
    checks.push(Check {
        name: "base over detection precision uplift at least 3x",
        passed: uplift.is_some_and(|u| u >= 3.0),
        detail: uplift.map_or("n/a".into(), |u| format!("{u:.2}x")),
    });

    let net = &m.config.network;
    let largest = m.reports.iter().map(|r| message_bytes(r, net)).max().unwrap_or(0);
    let peak = peak_window_bytes(&m.link.deliveries, 1.0);
    let limit = net.bandwidth_bytes_per_s + largest as f64;
    checks.push(Check {
        name: "wire bytes per 1 s window within bandwidth plus one message",
        passed: peak as f64 <= limit,
        detail: format!("peak {peak} B, limit {limit:.0} B"),
    });

    let min = m.config.pipeline.min_observations;
    let thin = m.link.deliveries.iter().filter(|d| d.n_observations < min).count();
    checks.push(Check {
        name: "no report below the observation minimum on the wire",
        passed: thin == 0,
        detail: format!("{thin} of {} deliveries below {min}", m.link.deliveries.len()),
    });

    let s_max = m.config.pipeline.s_max;
    checks.push(Check {
        name: "submission within the size limit",
        passed: out.operator.submission.len() <= s_max,
        detail: format!("{} of at most {s_max}", out.operator.submission.len()),
    });

    let (tp, fp) = (img[0].tp, img[0].fp);
    let ratio = if fp > 0 { tp as f64 / fp as f64 } else { f64::INFINITY };
    checks.push(Check {
        name: "detection-level image TP:FP within 3x of 1:1",
        passed: (1.0 / 3.0..=3.0).contains(&ratio),
        detail: format!("{tp}:{fp} ({ratio:.2})"),
    });
    checks
}
