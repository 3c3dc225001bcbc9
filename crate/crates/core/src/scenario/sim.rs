use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::Scenario;
use crate::engine::{AuditRecord, EngineError, Mode, Outcome};
use crate::model::{Eid, PolicyStore};
use crate::num::Exact;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("horizon must be positive, got {0}")]
    Horizon(Exact),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Result of one simulation run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub records: Vec<AuditRecord>,
    pub final_store: PolicyStore,
    pub final_mode: Mode,
    /// Every declared emergency; never-raised ones count as unprocessed.
    pub outcomes: BTreeMap<Eid, Outcome>,
}

impl SimTrace {
    pub fn trace_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn count(&self, o: Outcome) -> usize {
        self.outcomes.values().filter(|x| **x == o).count()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "final mode: {}\n{} eliminated, {} expired, {} unprocessed\n",
            self.final_mode,
            self.count(Outcome::Eliminated),
            self.count(Outcome::Expired),
            self.count(Outcome::Unprocessed)
        );
        for (eid, o) in &self.outcomes {
            let _ = writeln!(s, "  {eid}: {}", o.as_str());
        }
        s
    }
}

/// Ticks until the clock passes `horizon` or the system is in disaster,
/// then closes the trace.
pub fn run_simulation(sc: &Scenario, horizon: &Exact) -> Result<SimTrace, SimError> {
    if !horizon.is_positive() {
        return Err(SimError::Horizon(horizon.clone()));
    }
    let mut e = sc.engine()?;
    while e.clock() <= horizon && e.mode() != Mode::Disaster {
        e.tick()?;
    }
    e.close()?;
    let mut outcomes: BTreeMap<Eid, Outcome> = sc
        .emergencies
        .iter()
        .map(|em| (em.eid.clone(), Outcome::Unprocessed))
        .collect();
    outcomes.extend(e.outcomes().iter().map(|(k, v)| (k.clone(), *v)));
    Ok(SimTrace {
        records: e.audit().records().to_vec(),
        final_store: e.store().clone(),
        final_mode: e.mode(),
        outcomes,
    })
}
