//! Discrete-event model of the shared robot-to-base link.
//!
//! The link is a token bucket that starts empty, refills at the configured
//! bandwidth and holds at most one maximum-size message. Queued reports go
//! out highest priority first; a newer report for the same candidate
//! replaces one still waiting in the queue.

use serde::{Deserialize, Serialize};

use crate::config::NetworkModel;

use super::report::Report;

/// One report that made it to the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub report_id: u64,
    pub robot: u32,
    pub candidate: u64,
    pub label: String,
    pub n_observations: usize,
    pub priority: f64,
    pub bytes: u64,
    pub enqueued_at: f64,
    pub arrived_at: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransmitOutcome {
    /// In arrival order.
    pub deliveries: Vec<Delivery>,
    /// Replaced in the queue by a newer snapshot of the same candidate.
    pub superseded: Vec<u64>,
    /// Still queued when the link closed, or cut by the report cap.
    pub undelivered: Vec<u64>,
    /// Below the observation minimum; never put on the wire.
    pub refused: Vec<u64>,
}

impl TransmitOutcome {
    pub fn delivered_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.deliveries.iter().map(|d| d.report_id)
    }
}

pub fn message_bytes(report: &Report, net: &NetworkModel) -> u64 {
    report.payload_bytes + net.per_message_overhead
}

struct Queued {
    idx: usize,
    bytes: u64,
}

/// Simulates delivery of `reports` (enqueued at their `created_at`) until
/// `close_at`. Reports with fewer than `min_observations` observations are
/// refused outright.
pub fn transmit(reports: &[Report], net: &NetworkModel, min_observations: usize, close_at: f64) -> TransmitOutcome {
    let mut out = TransmitOutcome::default();
    let mut order: Vec<usize> = Vec::with_capacity(reports.len());
    for (i, r) in reports.iter().enumerate() {
        if r.n_observations() < min_observations {
            out.refused.push(r.id);
        } else {
            order.push(i);
        }
    }
    order.sort_by(|&a, &b| reports[a].created_at.total_cmp(&reports[b].created_at).then(reports[a].id.cmp(&reports[b].id)));

    let rate = net.bandwidth_bytes_per_s;
    let depth = order.iter().map(|&i| message_bytes(&reports[i], net)).max().unwrap_or(0) as f64;
    let mut tokens = 0.0_f64;
    let mut t = 0.0_f64;
    let mut next = 0;
    let mut queue: Vec<Queued> = Vec::new();
    let cap = net.max_reports.unwrap_or(usize::MAX);

    let advance = |tokens: &mut f64, from: f64, to: f64| {
        *tokens = (*tokens + rate * (to - from)).min(depth);
    };

    loop {
        while next < order.len() && reports[order[next]].created_at <= t {
            let idx = order[next];
            let r = &reports[idx];
            if let Some(pos) = queue.iter().position(|q| reports[q.idx].candidate == r.candidate) {
                out.superseded.push(reports[queue[pos].idx].id);
                queue.remove(pos);
            }
            queue.push(Queued { idx, bytes: message_bytes(r, net) });
            next += 1;
        }
        let next_arrival = order.get(next).map(|&i| reports[i].created_at);

        let best = queue
            .iter()
            .enumerate()
            .filter(|(_, q)| net.link_up(reports[q.idx].robot.0, t))
            .max_by(|(_, a), (_, b)| {
                let (ra, rb) = (&reports[a.idx], &reports[b.idx]);
                ra.priority.total_cmp(&rb.priority).then(rb.created_at.total_cmp(&ra.created_at)).then(rb.id.cmp(&ra.id))
            })
            .map(|(pos, _)| pos);

        let Some(pos) = best else {
            // Nothing sendable now: wait for a new report or a link to return.
            let reopen = queue.iter().filter_map(|q| outage_end(net, reports[q.idx].robot.0, t)).min_by(f64::total_cmp);
            let wake = [next_arrival, reopen].into_iter().flatten().min_by(f64::total_cmp);
            match wake {
                Some(w) if w <= close_at => {
                    advance(&mut tokens, t, w);
                    t = w;
                    continue;
                }
                _ => break,
            }
        };

        let q = &queue[pos];
        let robot = reports[q.idx].robot.0;
        let ready = t + ((q.bytes as f64 - tokens) / rate).max(0.0);
        let interrupt = [next_arrival, outage_start(net, robot, t)].into_iter().flatten().filter(|&w| w < ready).min_by(f64::total_cmp);
        if let Some(w) = interrupt {
            if w > close_at {
                break;
            }
            advance(&mut tokens, t, w);
            t = w;
            continue;
        }
        if ready > close_at {
            break;
        }
        advance(&mut tokens, t, ready);
        t = ready;
        tokens = (tokens - q.bytes as f64).max(0.0);
        let r = &reports[q.idx];
        out.deliveries.push(Delivery {
            report_id: r.id,
            robot,
            candidate: r.candidate,
            label: r.label.to_string(),
            n_observations: r.n_observations(),
            priority: r.priority,
            bytes: q.bytes,
            enqueued_at: r.created_at,
            arrived_at: t,
        });
        queue.remove(pos);
        if out.deliveries.len() >= cap {
            break;
        }
    }

    out.undelivered.extend(queue.iter().map(|q| reports[q.idx].id));
    out.undelivered.extend(order[next..].iter().map(|&i| reports[i].id));
    out
}

fn outage_end(net: &NetworkModel, robot: u32, t: f64) -> Option<f64> {
    net.outages.iter().filter(|o| o.robot == robot && t >= o.start && t < o.end).map(|o| o.end).max_by(f64::total_cmp)
}

fn outage_start(net: &NetworkModel, robot: u32, t: f64) -> Option<f64> {
    net.outages.iter().filter(|o| o.robot == robot && o.start > t).map(|o| o.start).min_by(f64::total_cmp)
}

/// Largest number of bytes arriving in any window `[t, t + width)`.
pub fn peak_window_bytes(deliveries: &[Delivery], width: f64) -> u64 {
    let mut arrivals: Vec<(f64, u64)> = deliveries.iter().map(|d| (d.arrived_at, d.bytes)).collect();
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = 0;
    let mut sum = 0;
    let mut lo = 0;
    for hi in 0..arrivals.len() {
        sum += arrivals[hi].1;
        while arrivals[hi].0 - arrivals[lo].0 >= width {
            sum -= arrivals[lo].1;
            lo += 1;
        }
        best = best.max(sum);
    }
    best
}

/// Delivery schedule as CSV, one row per delivered report.
pub fn schedule_csv(deliveries: &[Delivery]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for d in deliveries {
        w.serialize(d).expect("delivery rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LinkOutage;
    use crate::model::{Label, Position3, RobotId};

    fn report(id: u64, robot: u32, candidate: u64, at: f64, priority: f64, bytes: u64, n: usize) -> Report {
        Report {
            id,
            robot: RobotId(robot),
            candidate,
            created_at: at,
            label: Label::Helmet,
            position: Position3::ORIGIN,
            covariance: [[0.0; 3]; 3],
            observations: (0..n)
                .map(|i| super::super::ObservationScore {
                    detection_id: format!("{id}-{i}"),
                    timestamp: at,
                    confidence: 1.0,
                    color_score: 1.0,
                    size_score: 1.0,
                })
                .collect(),
            images: Vec::new(),
            priority,
            payload_bytes: bytes,
        }
    }

    fn net(bw: f64) -> NetworkModel {
        NetworkModel { bandwidth_bytes_per_s: bw, per_message_overhead: 0, ..Default::default() }
    }

    #[test]
    fn single_report_arrives_within_a_second() {
        let out = transmit(&[report(1, 0, 1, 0.0, 0.5, 5_000, 2)], &net(10_000.0), 2, 100.0);
        assert_eq!(out.deliveries.len(), 1);
        assert!(out.deliveries[0].arrived_at <= 1.0);
    }

    #[test]
    fn bytes_are_conserved() {
        let reports: Vec<_> = (0..10).map(|i| report(i, 0, i, 0.0, 0.5, 5_000, 2)).collect();
        let out = transmit(&reports, &net(1_000.0), 2, 1_000.0);
        assert_eq!(out.deliveries.len(), 10);
        assert!(out.deliveries.last().unwrap().arrived_at >= 50.0 - 1e-9);
    }

    #[test]
    fn outage_delays_first_arrival() {
        let mut n = net(10_000.0);
        n.outages.push(LinkOutage { robot: 0, start: 0.0, end: 60.0 });
        let out = transmit(&[report(1, 0, 1, 0.0, 0.5, 5_000, 2)], &n, 2, 1_000.0);
        assert!(out.deliveries[0].arrived_at >= 60.0);
    }

    #[test]
    fn higher_priority_first() {
        let reports = [report(1, 0, 1, 0.0, 0.3, 5_000, 2), report(2, 1, 2, 0.0, 0.8, 5_000, 2)];
        let out = transmit(&reports, &net(1_000.0), 2, 1_000.0);
        assert_eq!(out.delivered_ids().collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn refuses_single_observation_reports() {
        let out = transmit(&[report(1, 0, 1, 0.0, 0.9, 10, 1)], &net(1_000.0), 2, 1_000.0);
        assert!(out.deliveries.is_empty());
        assert_eq!(out.refused, vec![1]);
    }

    #[test]
    fn newer_snapshot_supersedes_queued_one() {
        let reports = [report(1, 0, 10, 0.0, 0.9, 5_000, 2), report(2, 0, 11, 0.0, 0.5, 5_000, 2), report(3, 0, 11, 1.0, 0.5, 5_000, 4)];
        let out = transmit(&reports, &net(1_000.0), 2, 1_000.0);
        assert_eq!(out.superseded, vec![2]);
        assert_eq!(out.delivered_ids().collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn closing_time_leaves_reports_undelivered() {
        let reports: Vec<_> = (0..10).map(|i| report(i, 0, i, 0.0, 0.5, 5_000, 2)).collect();
        let out = transmit(&reports, &net(1_000.0), 2, 12.0);
        assert_eq!(out.deliveries.len(), 2);
        assert_eq!(out.undelivered.len(), 8);
    }

    #[test]
    fn window_budget_holds() {
        let reports: Vec<_> =
            (0..200).map(|i| report(i, (i % 3) as u32, i, i as f64 * 0.1, (i % 7) as f64 / 7.0, 3_000 + 700 * (i % 5), 2)).collect();
        let out = transmit(&reports, &net(8_000.0), 2, 1e6);
        let max_msg = out.deliveries.iter().map(|d| d.bytes).max().unwrap();
        assert!(peak_window_bytes(&out.deliveries, 1.0) <= 8_000 + max_msg);
    }

    #[test]
    fn schedule_has_header_and_rows() {
        let out = transmit(&[report(1, 0, 1, 0.0, 0.5, 5_000, 2)], &net(10_000.0), 2, 100.0);
        let csv = schedule_csv(&out.deliveries);
        assert!(csv.starts_with("report_id,robot,candidate,label,n_observations,priority,bytes,enqueued_at,arrived_at"));
        assert_eq!(csv.lines().count(), 2);
    }
}
