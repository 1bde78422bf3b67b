//! 2D staggered-grid integrator for the non-isothermal simplified model and
//! its isothermal reduction, on a rectangle with no-slip velocity and
//! Neumann temperature and director conditions.

pub mod fields;
pub mod grid;
pub mod scenarios;
pub mod state;
pub mod step;

use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsRecord, Reference};
use crate::linalg::LinalgError;
use crate::material::{MaterialError, MaterialModel};

pub use grid::{Grid, Operators};
pub use scenarios::{initialize, ScenarioKind, ScenarioSpec};
pub use state::StateField;
pub use step::{freeze, DirectorUpdate, Frozen, Solver, StepReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("initial temperature {value} in cell {cell} is not admissible")]
    InitialTemperature { cell: usize, value: f64 },
    #[error("material evaluation failed in cell {cell}: {source}")]
    Material { cell: usize, source: MaterialError },
    #[error("coefficient {name} = {value} is inadmissible in cell {cell} (theta={theta}, tau={tau})")]
    Coefficient {
        name: &'static str,
        value: f64,
        cell: usize,
        theta: f64,
        tau: f64,
    },
    #[error("{what} solve failed: {source}")]
    LinearSolve {
        what: &'static str,
        source: LinalgError,
    },
    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("temperature {value} in cell {cell} fell below the floor {floor} at t={t}")]
    ThetaFloor {
        t: f64,
        cell: usize,
        value: f64,
        floor: f64,
    },
    #[error("parameters outside the simplified model are non-zero: {0}")]
    UnsupportedParameters(String),
    #[error("invalid step configuration: {0}")]
    Config(String),
    #[error("state invariant violated: {0}")]
    Invariant(String),
    #[error("diagnostics failed: {0}")]
    Diagnostics(String),
    #[error("output failed: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub renormalize_director: bool,
    pub isothermal: bool,
    pub theta_floor: f64,
    /// Diagnostics are recorded every this many steps (and at the end).
    pub output_every: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            t_end: 1.0,
            cfl_safety: 0.9,
            renormalize_director: true,
            isothermal: false,
            theta_floor: 1e-6,
            output_every: 1,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt > 0.0) {
            return Err(SolverError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(SolverError::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(SolverError::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if self.output_every == 0 {
            return Err(SolverError::Config("output_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`; the last step is shortened when
    /// `t_end` is not a multiple of `dt`.
    pub fn n_steps(&self) -> usize {
        if self.t_end <= 0.0 {
            return 0;
        }
        let r = self.t_end / self.dt;
        if (r - r.round()).abs() < 1e-9 * r.max(1.0) {
            r.round() as usize
        } else {
            r.ceil() as usize
        }
    }
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub material: MaterialModel,
    pub grid: Grid,
    pub step: StepConfig,
    pub scenario: ScenarioSpec,
    /// Snapshot cadence in steps; `None` disables snapshots.
    pub snapshot_every: Option<usize>,
    /// Equilibrium used for the distance series; `None` uses the state's
    /// own mean temperature and normalised mean director.
    pub reference: Option<Reference>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: StateField,
    pub records: Vec<DiagnosticsRecord>,
    /// `(t, equilibrium distance)` at every output time.
    pub distance: Vec<(f64, f64)>,
    pub steps: usize,
}

/// A run stopped early; carries the last valid state.
#[derive(Debug, Clone)]
pub struct RunAbort {
    pub t: f64,
    pub error: SolverError,
    pub state: StateField,
    pub records: Vec<DiagnosticsRecord>,
    pub distance: Vec<(f64, f64)>,
}

impl std::fmt::Display for RunAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at t={}: {}", self.t, self.error)
    }
}

impl std::error::Error for RunAbort {}

/// Integrates from the scenario's initial state to `t_end`. `on_snapshot`
/// receives the state at the snapshot cadence (including `t = 0` and the
/// final state).
pub fn run<F>(setup: &RunSetup, mut on_snapshot: F) -> Result<RunOutput, Box<RunAbort>>
where
    F: FnMut(&StateField) -> Result<(), String>,
{
    let cfg = setup.step;
    let grid = setup.grid;
    let abort_at = |state: &StateField, error: SolverError, records: Vec<_>, distance: Vec<_>| {
        Box::new(RunAbort {
            t: state.t,
            error,
            state: state.clone(),
            records,
            distance,
        })
    };
    let blank = StateField::constant(grid, setup.scenario.theta_ref, [1.0, 0.0]);
    let ops = Operators::new(grid);
    let solver = Solver::new(ops, setup.material.clone(), cfg)
        .map_err(|e| abort_at(&blank, e, Vec::new(), Vec::new()))?;
    let mut state = initialize(grid, &setup.scenario, cfg.theta_floor)
        .map_err(|e| abort_at(&blank, e, Vec::new(), Vec::new()))?;

    let mut records = Vec::new();
    let mut distance = Vec::new();
    let record = |state: &StateField, drift: f64, records: &mut Vec<DiagnosticsRecord>, distance: &mut Vec<(f64, f64)>| {
        let rec = diagnostics::totals(&solver.ops, &solver.material, state, drift)
            .map_err(|e| SolverError::Diagnostics(e.to_string()))?;
        records.push(rec);
        distance.push((state.t, diagnostics::equilibrium_distance(state, setup.reference.as_ref())));
        Ok::<(), SolverError>(())
    };

    if let Err(e) = record(&state, 0.0, &mut records, &mut distance) {
        return Err(abort_at(&state, e, records, distance));
    }
    if setup.snapshot_every.is_some() {
        if let Err(e) = on_snapshot(&state) {
            return Err(abort_at(&state, SolverError::Output(e), records, distance));
        }
    }

    let n = cfg.n_steps();
    for k in 1..=n {
        let t_next = if k == n { cfg.t_end } else { k as f64 * cfg.dt };
        let h = t_next - state.t;
        let (mut next, rep) = match solver.step(&state, h) {
            Ok(r) => r,
            Err(e) => return Err(abort_at(&state, e, records, distance)),
        };
        next.t = t_next;
        state = next;
        if k % cfg.output_every == 0 || k == n {
            if let Err(e) = record(&state, rep.drift, &mut records, &mut distance) {
                return Err(abort_at(&state, e, records, distance));
            }
        }
        if let Some(every) = setup.snapshot_every {
            if every > 0 && (k % every == 0 || k == n) {
                if let Err(e) = on_snapshot(&state) {
                    return Err(abort_at(&state, SolverError::Output(e), records, distance));
                }
            }
        }
    }
    Ok(RunOutput {
        state,
        records,
        distance,
        steps: n,
    })
}
