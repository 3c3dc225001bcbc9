//! Python bindings for `feac-core`.
//!
//! Times and probabilities cross the boundary as decimal strings so no
//! precision is lost; `float` inputs are accepted and read through `str()`.

#[pyo3::pymodule]
mod feac {
    use std::collections::BTreeMap;

    use feac_core::engine::{self, AuditRecord};
    use feac_core::model::{Eid, EntityId};
    use feac_core::num::Exact;
    use feac_core::planner::{self, PlanContext};
    use feac_core::scenario;
    use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
    use pyo3::prelude::*;
    use pyo3::types::PyDict;

    fn exact(v: &Bound<'_, PyAny>) -> PyResult<Exact> {
        let s = v.str()?;
        let s = s.to_str()?;
        s.parse()
            .map_err(|_| PyValueError::new_err(format!("not a decimal number: {s}")))
    }

    fn record_dict<'py>(py: Python<'py>, r: &AuditRecord) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("seq", r.seq)?;
        d.set_item("time", r.time.to_string())?;
        d.set_item("kind", r.kind.as_str())?;
        for (k, v) in r.values() {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    /// A parsed scenario file.
    #[pyclass(frozen)]
    struct Scenario {
        inner: scenario::Scenario,
    }

    #[pymethods]
    impl Scenario {
        #[staticmethod]
        fn parse(text: &str) -> PyResult<Self> {
            parse_scenario(text)
        }

        #[getter]
        fn name(&self) -> Option<String> {
            self.inner.name.clone()
        }

        #[getter]
        fn emergencies(&self) -> Vec<String> {
            self.inner.emergencies.iter().map(|e| e.eid.to_string()).collect()
        }

        /// Entity id -> member eids, in declaration order.
        fn groups(&self) -> BTreeMap<String, Vec<String>> {
            self.inner
                .groups()
                .into_iter()
                .map(|(k, g)| (k.to_string(), g.members.iter().map(|m| m.eid.to_string()).collect()))
                .collect()
        }

        /// Table-invariant violations; empty when the scenario is sound.
        fn validate(&self) -> Vec<String> {
            self.inner.validate().iter().map(ToString::to_string).collect()
        }

        fn to_text(&self) -> String {
            scenario::print_scenario(&self.inner)
        }

        /// Plans one emergency-group whose gates open at `at`.
        #[pyo3(signature = (group, at = None))]
        fn plan(&self, group: &str, at: Option<&Bound<'_, PyAny>>) -> PyResult<Plan> {
            let groups = self.inner.groups();
            let g = groups
                .get(&EntityId::new(group))
                .ok_or_else(|| PyKeyError::new_err(format!("no emergency-group {group}")))?;
            let ctx = PlanContext {
                gate_release: at.map(exact).transpose()?.unwrap_or_default(),
                blocked_resources: self.inner.config.blocked.clone(),
                ..PlanContext::default()
            };
            let cfg = self.inner.engine_config().planner;
            planner::plan_group(g, &self.inner.store, &self.inner.influence, &cfg, &ctx, false)
                .map(|inner| Plan { inner })
                .map_err(|e| PyValueError::new_err(e.to_string()))
        }

        /// Runs the scenario up to `until` minutes.
        #[pyo3(signature = (until = None, seed = None))]
        fn simulate(&self, until: Option<&Bound<'_, PyAny>>, seed: Option<u64>) -> PyResult<SimTrace> {
            let mut sc = self.inner.clone();
            if let Some(seed) = seed {
                sc.config.seed = seed;
            }
            let horizon = until.map(exact).transpose()?.unwrap_or_else(|| Exact::from_int(60));
            scenario::run_simulation(&sc, &horizon)
                .map(|inner| SimTrace { inner })
                .map_err(|e| PyValueError::new_err(e.to_string()))
        }

        fn engine(&self) -> PyResult<Engine> {
            let inner = self
                .inner
                .engine()
                .map_err(|e| PyValueError::new_err(e.to_string()))?;
            Ok(Engine { inner })
        }

        fn __eq__(&self, other: &Self) -> bool {
            self.inner == other.inner
        }

        fn __repr__(&self) -> String {
            format!(
                "Scenario(name={:?}, emergencies={})",
                self.inner.name.as_deref().unwrap_or(""),
                self.inner.emergencies.len()
            )
        }
    }

    /// A selected response path.
    #[pyclass(frozen)]
    struct Plan {
        inner: planner::Plan,
    }

    #[pymethods]
    impl Plan {
        #[getter]
        fn pv(&self) -> String {
            self.inner.pv.to_string()
        }

        #[getter]
        fn strategy(&self) -> &'static str {
            self.inner.strategy.as_str()
        }

        #[getter]
        fn path(&self) -> Vec<String> {
            self.inner.path.eids().iter().map(ToString::to_string).collect()
        }

        #[getter]
        fn task_sets(&self) -> Vec<String> {
            self.inner.path.links.iter().map(|l| l.tsid.to_string()).collect()
        }

        #[getter]
        fn cumulative(&self) -> Vec<String> {
            self.inner.path.cumulative.iter().map(ToString::to_string).collect()
        }

        fn to_text(&self) -> String {
            self.inner.to_text()
        }

        fn __repr__(&self) -> String {
            format!("Plan(pv={}, strategy={}, path={:?})", self.pv(), self.strategy(), self.path())
        }
    }

    #[pyclass(frozen)]
    struct SimTrace {
        inner: scenario::SimTrace,
    }

    #[pymethods]
    impl SimTrace {
        #[getter]
        fn final_mode(&self) -> &'static str {
            self.inner.final_mode.as_str()
        }

        /// Eid -> eliminated / expired / unprocessed.
        #[getter]
        fn outcomes(&self) -> BTreeMap<String, &'static str> {
            self.inner
                .outcomes
                .iter()
                .map(|(k, v)| (k.to_string(), v.as_str()))
                .collect()
        }

        fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
            self.inner.records.iter().map(|r| record_dict(py, r)).collect()
        }

        fn trace_text(&self) -> String {
            self.inner.trace_text()
        }

        fn summary(&self) -> String {
            self.inner.summary()
        }

        fn __len__(&self) -> usize {
            self.inner.records.len()
        }
    }

    /// Tick-by-tick access to the engine.
    #[pyclass]
    struct Engine {
        inner: engine::Engine,
    }

    #[pymethods]
    impl Engine {
        /// Runs one poll period; returns the records it produced.
        fn tick<'py>(&mut self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
            let rs = self
                .inner
                .tick()
                .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            rs.iter().map(|r| record_dict(py, r)).collect()
        }

        #[getter]
        fn mode(&self) -> &'static str {
            self.inner.mode().as_str()
        }

        /// Time of the next tick.
        #[getter]
        fn clock(&self) -> String {
            self.inner.clock().to_string()
        }

        /// Active emergencies per entity.
        fn active(&self) -> BTreeMap<String, Vec<String>> {
            self.inner
                .check_sys_state()
                .active
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(Eid::to_string).collect()))
                .collect()
        }

        fn close(&mut self) -> PyResult<()> {
            self.inner
                .close()
                .map_err(|e| PyRuntimeError::new_err(e.to_string()))
        }

        fn trace_text(&self) -> String {
            self.inner.audit().to_text()
        }
    }

    /// Parses scenario text; raises `ValueError` listing every diagnostic.
    #[pyfunction]
    fn parse_scenario(text: &str) -> PyResult<Scenario> {
        scenario::parse_scenario(text)
            .map(|inner| Scenario { inner })
            .map_err(|diags| {
                let lines: Vec<String> = diags.iter().map(ToString::to_string).collect();
                PyValueError::new_err(lines.join("\n"))
            })
    }

    /// Re-checks a trace; returns the violations (empty when all hold).
    /// With `scenario`, the final store is replayed from its initial one.
    #[pyfunction]
    #[pyo3(signature = (trace, scenario = None))]
    fn check_trace(trace: &str, scenario: Option<&Scenario>) -> PyResult<Vec<String>> {
        let records = engine::parse_trace(trace).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let report = engine::check_trace(&records, scenario.map(|s| &s.inner.store));
        Ok(report.violations.iter().map(ToString::to_string).collect())
    }

    /// Runs the command line in-process; returns `(exit code, stdout, stderr)`.
    #[pyfunction]
    fn run_cli(args: Vec<String>) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("feac".to_string()).chain(args);
        let code = feac_core::cli::run_cli(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8_lossy(&out).into_owned(),
            String::from_utf8_lossy(&err).into_owned(),
        )
    }
}
