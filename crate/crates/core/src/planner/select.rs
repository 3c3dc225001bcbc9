use std::cmp::Ordering;

use super::graph::{ResponseLink, TransitionGraph};
use super::{PlanError, Strategy};
use crate::model::Eid;
use crate::num::Exact;

/// One root-to-terminal path through the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedPath {
    pub links: Vec<ResponseLink>,
    /// Elapsed time at each link's target, planning epoch included.
    pub cumulative: Vec<Exact>,
    /// Product of `p'` along the path, expiry ignored.
    pub probability: Exact,
    pub total_time: Exact,
    /// No link expires and every link is executable.
    pub feasible: bool,
}

impl PlannedPath {
    pub fn eids(&self) -> Vec<Eid> {
        self.links.iter().map(|l| l.eid.clone()).collect()
    }
}

fn collect(g: &TransitionGraph) -> Vec<PlannedPath> {
    g.paths()
        .into_iter()
        .map(|edges| {
            let links: Vec<ResponseLink> = edges.iter().map(|&e| g.edges[e].clone()).collect();
            PlannedPath {
                cumulative: links.iter().map(|l| g.nodes[l.target].elapsed.clone()).collect(),
                probability: links.iter().map(|l| &l.p).product(),
                total_time: links.iter().map(|l| &l.t).sum(),
                feasible: links.iter().all(|l| l.executable && !l.expired),
                links,
            }
        })
        .collect()
}

fn by_probability(a: &PlannedPath, b: &PlannedPath) -> Ordering {
    b.probability
        .cmp(&a.probability)
        .then_with(|| a.total_time.cmp(&b.total_time))
        .then_with(|| a.eids().cmp(&b.eids()))
}

fn by_time(a: &PlannedPath, b: &PlannedPath) -> Ordering {
    a.total_time
        .cmp(&b.total_time)
        .then_with(|| b.probability.cmp(&a.probability))
        .then_with(|| a.eids().cmp(&b.eids()))
}

/// Highest-probability feasible path; ties go to the shorter total time,
/// then the lexicographically smaller eid sequence.
pub fn select_optimal_path(g: &TransitionGraph) -> Result<PlannedPath, PlanError> {
    match g.root_pvalue() {
        Some(pv) if pv.is_positive() => {}
        _ => return Err(PlanError::NoFeasiblePath),
    }
    collect(g)
        .into_iter()
        .filter(|p| p.feasible)
        .min_by(by_probability)
        .ok_or(PlanError::NoFeasiblePath)
}

/// Fallback: maximum success probability with deadlines ignored.
pub fn prob_first_select(g: &TransitionGraph) -> Result<PlannedPath, PlanError> {
    collect(g).into_iter().min_by(by_probability).ok_or(PlanError::EmptyGroup)
}

/// Fallback: minimum total execution time with deadlines ignored.
pub fn time_first_select(g: &TransitionGraph) -> Result<PlannedPath, PlanError> {
    collect(g).into_iter().min_by(by_time).ok_or(PlanError::EmptyGroup)
}

pub fn select_with(g: &TransitionGraph, strategy: Strategy) -> Result<PlannedPath, PlanError> {
    match strategy {
        Strategy::Optimal => select_optimal_path(g),
        Strategy::ProbabilityFirst => prob_first_select(g),
        Strategy::TimeFirst => time_first_select(g),
    }
}
