//! Response-path planning for one emergency-group.
//!
//! The planner enumerates (or samples) the processing orders allowed by
//! priorities and time-dependencies, turns them into a prefix tree of
//! response links whose metrics are degraded by the still-pending
//! emergencies, scores nodes with the recursive max-product P-value and
//! picks a path: the optimal one when some path meets every deadline,
//! otherwise one of two fallback heuristics.

mod graph;
mod metrics;
mod order;
mod select;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::model::{Eid, EmergencyGroup, EntityId, InfluenceSpec, PolicyStore, ResourceId};
use crate::num::Exact;

pub use graph::{
    build_transition_graph, build_transition_graph_with, compute_p_value, EdgeId, GraphNode,
    NodeId, ResponseLink, TransitionGraph,
};
pub use metrics::{adjust_metrics, select_task_set, AdjustedMetrics};
pub use order::{Order, OrderSpace};
pub use select::{prob_first_select, select_optimal_path, select_with, time_first_select, PlannedPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FallbackStrategy {
    #[default]
    ProbabilityFirst,
    TimeFirst,
}

impl FallbackStrategy {
    pub fn as_str(self) -> &'static str {
        Strategy::from(self).as_str()
    }
}

impl FromStr for FallbackStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "probability_first" => Ok(FallbackStrategy::ProbabilityFirst),
            "time_first" => Ok(FallbackStrategy::TimeFirst),
            other => Err(format!("unknown fallback strategy `{other}`")),
        }
    }
}

/// Which selection produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Optimal,
    ProbabilityFirst,
    TimeFirst,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Optimal => "optimal",
            Strategy::ProbabilityFirst => "probability_first",
            Strategy::TimeFirst => "time_first",
        }
    }
}

impl From<FallbackStrategy> for Strategy {
    fn from(f: FallbackStrategy) -> Self {
        match f {
            FallbackStrategy::ProbabilityFirst => Strategy::ProbabilityFirst,
            FallbackStrategy::TimeFirst => Strategy::TimeFirst,
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(Strategy::Optimal),
            other => other.parse::<FallbackStrategy>().map(Strategy::from),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerConfig {
    /// Execution-time influence coefficient, `>= 0`.
    pub alpha: Exact,
    /// Deadline influence coefficient, in `[0, 1]`.
    pub beta: Exact,
    /// Cap on the number of orders put in the graph.
    pub k: usize,
    pub seed: u64,
    pub fallback: FallbackStrategy,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            alpha: Exact::one(),
            beta: Exact::one(),
            k: 64,
            seed: 0,
            fallback: FallbackStrategy::default(),
        }
    }
}

/// Run-time circumstances of a planning request.
#[derive(Debug, Clone, Default)]
pub struct PlanContext {
    /// Root elapsed time: waiting on environment gates (and on the group's
    /// in-flight action) before the first link may start.
    pub gate_release: Exact,
    /// Minutes each emergency has already been active; counts against Ed.
    pub consumed: BTreeMap<Eid, Exact>,
    /// Resources that are not available to any task-set.
    pub blocked_resources: BTreeSet<ResourceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("emergency-group is empty")]
    EmptyGroup,
    #[error("emergency-group of {0} members exceeds the supported 64")]
    GroupTooLarge(usize),
    #[error("emergency {0} has no task-sets")]
    NoTaskSets(Eid),
    #[error("no executable task-set for {0}")]
    NoExecutableTaskSet(Eid),
    #[error("time-dependency {0} -> {1} runs against priority")]
    PriorityInversion(Eid, Eid),
    #[error("no feasible path")]
    NoFeasiblePath,
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Selected path for a group together with the root P-value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub group: EntityId,
    pub pv: Exact,
    pub strategy: Strategy,
    pub path: PlannedPath,
}

impl Plan {
    /// One `rl` line per response link, then `pv=... strategy=...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (link, cum) in self.path.links.iter().zip(&self.path.cumulative) {
            let _ = writeln!(
                out,
                "rl eid={} ts={} p={} t={} ed={} cum={}",
                link.eid, link.tsid, link.p, link.t, link.ed, cum
            );
        }
        let _ = writeln!(out, "pv={} strategy={}", self.pv, self.strategy);
        out
    }
}

/// Builds the graph, scores it and selects a path: optimal when the root
/// P-value is positive, else `cfg.fallback`. `force_fallback` treats the
/// group as failed regardless of its P-value.
pub fn plan_group(
    group: &EmergencyGroup,
    store: &PolicyStore,
    infl: &InfluenceSpec,
    cfg: &PlannerConfig,
    ctx: &PlanContext,
    force_fallback: bool,
) -> Result<Plan, PlanError> {
    let mut g = build_transition_graph_with(group, store, infl, cfg, ctx)?;
    let mut pv = compute_p_value(&mut g);
    if force_fallback {
        pv = Exact::zero();
    }
    let strategy = if pv.is_positive() {
        Strategy::Optimal
    } else {
        cfg.fallback.into()
    };
    let path = select_with(&g, strategy)?;
    Ok(Plan {
        group: group.entity.clone(),
        pv,
        strategy,
        path,
    })
}
