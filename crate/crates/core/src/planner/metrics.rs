use std::collections::BTreeSet;

use super::{PlanError, PlannerConfig};
use crate::model::{Eid, Emergency, InfluenceSpec, ResourceId, TaskSet};
use crate::num::Exact;

/// Influence-adjusted success probability, execution time and deadline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustedMetrics {
    pub p: Exact,
    pub t: Exact,
    pub ed: Exact,
}

/// Applies the influence of the still-active emergencies in the group to
/// `e` running task-set `ts`.
///
/// Several influencers combine per property as `1 - Π(1 - σ_j)`, so one
/// influencer reduces to its own sigma and the effective value stays below 1.
pub fn adjust_metrics<'a>(
    e: &Emergency,
    ts: &TaskSet,
    active_others: impl IntoIterator<Item = &'a Eid>,
    infl: &InfluenceSpec,
    cfg: &PlannerConfig,
) -> AdjustedMetrics {
    let mut keep_p = Exact::one();
    let mut keep_t = Exact::one();
    let mut keep_ed = Exact::one();
    for other in active_others {
        debug_assert_ne!(other, &e.eid, "an emergency does not influence itself");
        if let Some(s) = infl.get(other, &e.eid) {
            keep_p = keep_p * s.p.complement();
            keep_t = keep_t * s.t.complement();
            keep_ed = keep_ed * s.ed.complement();
        }
    }
    let sigma_p = keep_p.complement();
    let sigma_t = keep_t.complement();
    let sigma_ed = keep_ed.complement();
    AdjustedMetrics {
        p: sigma_p.complement() * &ts.prob,
        t: (Exact::one() + &cfg.alpha * &sigma_t) * &ts.exec_time,
        ed: (Exact::one() - &cfg.beta * &sigma_ed) * &e.ed,
    }
}

fn rank(a: &TaskSet, b: &TaskSet) -> std::cmp::Ordering {
    b.prob
        .cmp(&a.prob)
        .then_with(|| a.exec_time.cmp(&b.exec_time))
        .then_with(|| a.tsid.cmp(&b.tsid))
}

/// Highest-probability task-set among those whose resources are all
/// available (none of them in `blocked`). Ties go to the shorter execution
/// time, then the smaller tsid.
pub fn select_task_set<'e>(
    e: &'e Emergency,
    blocked: &BTreeSet<ResourceId>,
) -> Result<&'e TaskSet, PlanError> {
    e.task_sets
        .iter()
        .filter(|ts| ts.resources.is_disjoint(blocked))
        .min_by(|a, b| rank(a, b))
        .ok_or_else(|| PlanError::NoExecutableTaskSet(e.eid.clone()))
}

/// Same ranking with resource availability ignored; used to keep a
/// non-executable branch in the graph for the fallback heuristics.
pub(crate) fn best_task_set(e: &Emergency) -> Option<&TaskSet> {
    e.task_sets.iter().min_by(|a, b| rank(a, b))
}
