//! Scenario language: parsing, canonical printing and simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::engine::{Engine, EngineConfig, EngineError, TimedEvent};
use crate::model::{
    group_by_entity, validate_influence, validate_store, Eid, Emergency, EmergencyGroup, EntityId,
    InfluenceSpec, PolicyStore, ResourceId, Violation,
};
use crate::num::Exact;
use crate::planner::{FallbackStrategy, PlannerConfig};

mod lexer;
mod parser;
mod printer;
mod sim;

pub use lexer::Pos;
pub use parser::parse_scenario;
pub use printer::print_scenario;
pub use sim::{run_simulation, SimError, SimTrace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub tp: Exact,
    pub alpha: Exact,
    pub beta: Exact,
    pub k: usize,
    pub seed: u64,
    pub fallback: FallbackStrategy,
    pub blocked: BTreeSet<ResourceId>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        ScenarioConfig {
            tp: e.tp,
            alpha: e.planner.alpha,
            beta: e.planner.beta,
            k: e.planner.k,
            seed: e.planner.seed,
            fallback: e.planner.fallback,
            blocked: BTreeSet::new(),
        }
    }
}

/// A parsed scenario: initial store, emergencies and the event schedule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scenario {
    pub name: Option<String>,
    pub config: ScenarioConfig,
    pub store: PolicyStore,
    /// In declaration order.
    pub emergencies: Vec<Emergency>,
    pub influence: InfluenceSpec,
    /// Sorted by time; ties keep source order.
    pub events: Vec<TimedEvent>,
}

impl Scenario {
    pub fn engine_config(&self) -> EngineConfig {
        let c = &self.config;
        EngineConfig {
            tp: c.tp.clone(),
            planner: PlannerConfig {
                alpha: c.alpha.clone(),
                beta: c.beta.clone(),
                k: c.k,
                seed: c.seed,
                fallback: c.fallback,
            },
            blocked_resources: c.blocked.clone(),
        }
    }

    /// Engine over the initial store with every event scheduled.
    pub fn engine(&self) -> Result<Engine, EngineError> {
        let mut e = Engine::new(
            self.store.clone(),
            self.emergencies.iter().cloned(),
            self.influence.clone(),
            self.engine_config(),
        )?;
        e.schedule(self.events.iter().cloned());
        Ok(e)
    }

    pub fn emergency(&self, eid: &Eid) -> Option<&Emergency> {
        self.emergencies.iter().find(|e| &e.eid == eid)
    }

    /// Static emergency-groups over all declared emergencies.
    pub fn groups(&self) -> BTreeMap<EntityId, EmergencyGroup> {
        group_by_entity(&self.emergencies)
    }

    /// Table and influence invariants of the initial state.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = validate_store(&self.store, &self.emergencies);
        v.extend(validate_influence(&self.influence, &self.emergencies));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Syntax,
    Unresolved,
    Duplicate,
    Invalid,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::Syntax => "syntax",
            DiagnosticKind::Unresolved => "unresolved",
            DiagnosticKind::Duplicate => "duplicate",
            DiagnosticKind::Invalid => "invalid",
        }
    }
}

/// A positioned parse or resolution error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub pos: Pos,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} error: {}", self.pos, self.kind.as_str(), self.message)
    }
}
