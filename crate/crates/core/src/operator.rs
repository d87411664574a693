//! Headless reviewer: walks the ranked cluster list through the same API
//! the console uses, accepting or rejecting each item at random according
//! to whether it is really a target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::{BaseStation, ClusterFilter, ClusterOrder, Decision};
use crate::config::OperatorModel;
use crate::error::{Error, Result};
use crate::model::{Label, SubmissionEntry};

/// One line of the decision trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDecision {
    pub index: usize,
    pub cluster: u64,
    pub rank: usize,
    pub label: Label,
    pub scorability: f64,
    /// Oracle view; never used for ranking.
    pub is_target: bool,
    pub decision: Decision,
    pub started_at: f64,
    pub finished_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorOutcome {
    pub decisions: Vec<OperatorDecision>,
    pub submission: Vec<SubmissionEntry>,
    pub reviewed: usize,
    pub time_spent_s: f64,
    /// Accepted clusters withdrawn to fit the submission limit.
    pub withdrawn: Vec<u64>,
}

/// Reviews unreviewed clusters in rank order, one `seconds_per_item` each,
/// until the list or the time budget runs out, then submits. If the
/// submission is refused for exceeding the limit, the lowest-ranked
/// acceptances are withdrawn until it fits.
pub fn simulate_operator(
    base: &mut BaseStation,
    model: &OperatorModel,
    is_target: impl Fn(u64) -> bool,
    start_at: f64,
) -> Result<OperatorOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let queue = base.list(&ClusterFilter::default(), ClusterOrder::Rank);
    let capacity = model.capacity().unwrap_or(usize::MAX);
    let mut decisions = Vec::new();
    let mut t = start_at;
    for item in queue.iter().filter(|s| s.state == crate::base::ReviewState::Unreviewed).take(capacity) {
        let target = is_target(item.id);
        let p = if target { model.p_tp_accept } else { model.p_fp_accept };
        let decision = if rng.random::<f64>() < p { Decision::Accept } else { Decision::Reject };
        let started_at = t;
        t = start_at + (decisions.len() + 1) as f64 * model.seconds_per_item;
        base.decide(item.id, decision, None, t)?;
        decisions.push(OperatorDecision {
            index: decisions.len(),
            cluster: item.id,
            rank: item.rank,
            label: item.label.clone(),
            scorability: item.scorability,
            is_target: target,
            decision,
            started_at,
            finished_at: t,
        });
    }

    let mut withdrawn = Vec::new();
    let submission = loop {
        match base.submit(t) {
            Ok(s) => break s,
            Err(Error::SubmissionBudget { .. }) => {
                let last = decisions
                    .iter()
                    .rev()
                    .find(|d| d.decision == Decision::Accept && !withdrawn.contains(&d.cluster))
                    .map(|d| d.cluster)
                    .expect("over budget implies an accepted cluster");
                base.undo(last, t)?;
                base.decide(last, Decision::Reject, None, t)?;
                withdrawn.push(last);
            }
            Err(e) => return Err(e),
        }
    };
    let reviewed = decisions.len();
    Ok(OperatorOutcome { decisions, submission, reviewed, time_spent_s: reviewed as f64 * model.seconds_per_item, withdrawn })
}
