use std::f64::consts::PI;

use nematoflow::diagnostics::{energy_identity_defect, totals};
use nematoflow::solver::fields::grad_sq_cells;
use nematoflow::solver::{freeze, run, Grid, Operators, RunSetup, ScenarioKind, ScenarioSpec, Solver, StateField, StepConfig};
use nematoflow::{FreeEnergy, MaterialModel, ParameterSet};

fn material() -> MaterialModel {
    MaterialModel::new(FreeEnergy::ideal_linear(2.0, 0.5), ParameterSet::simplified(0.5, 1.0, 0.25, 1.0))
}

/// For a planar director `d = (cos phi, sin phi)` at rest, the director
/// equation reduces to `gamma phi_t = lambda phi_xx`; a single cosine mode in
/// `x` decays like `exp(-lambda/gamma t)` on `[0, pi]`.
#[test]
fn planar_director_follows_angle_heat_equation() {
    let n = 64;
    let grid = Grid::new(n, 4, PI, PI);
    let amp = 1e-3;
    let mut state = StateField::constant(grid, 1.0, [1.0, 0.0]);
    for c in 0..grid.ncells() {
        let (x, _) = grid.cell_center(c);
        let phi = amp * x.cos();
        state.d[0][c] = phi.cos();
        state.d[1][c] = phi.sin();
    }
    let m = material();
    let solver = Solver::new(Operators::new(grid), m.clone(), StepConfig::default()).unwrap();
    let dt = 1e-3;
    let mut energy = f64::INFINITY;
    for _ in 0..500 {
        let fr = freeze(&solver.ops, &m, &state).unwrap();
        let (upd, _) = solver.director_step(&state, &fr, dt).unwrap();
        state.d = upd.d;
        state.t += dt;
        let e: f64 = grad_sq_cells(&solver.ops, &state.d).iter().sum();
        assert!(e < energy);
        energy = e;
    }
    // lambda = k = 0.5, gamma = 0.25.
    let h = grid.dx;
    let discrete = 2.0 * (1.0 - (PI / n as f64).cos()) / (h * h);
    let rate = 0.5 / 0.25 * discrete;
    let c0 = 0;
    let (x0, _) = grid.cell_center(c0);
    let phi = state.d[1][c0].atan2(state.d[0][c0]);
    let expected = amp * x0.cos() * (-rate * state.t).exp();
    assert!((phi - expected).abs() < 2e-3 * expected.abs(), "{phi} vs {expected}");
}

#[test]
fn taylor_green_run_keeps_mass_and_divergence() {
    let setup = RunSetup {
        material: material(),
        grid: Grid::new(24, 24, PI, PI),
        step: StepConfig {
            dt: 2e-3,
            t_end: 0.2,
            ..StepConfig::default()
        },
        scenario: ScenarioSpec::new(ScenarioKind::TaylorGreenDirector, 0.2, 3),
        snapshot_every: None,
        reference: None,
    };
    let out = run(&setup, |_| Ok(())).unwrap();
    let defect = energy_identity_defect(&out.records).unwrap();
    assert_eq!(defect.max_mass_defect, 0.0);
    assert!(defect.max_rel_defect < 1e-3);
    assert!(defect.entropy_decreases.is_empty());
    assert!(out.records.iter().all(|r| r.div_u_max < 1e-8));
    assert!(out.records.iter().all(|r| r.d_drift < 1e-3));
    let last = out.records.last().unwrap();
    let again = totals(&Operators::new(setup.grid), &setup.material, &out.state, last.d_drift).unwrap();
    assert_eq!(&again, last);
}

#[test]
fn isothermal_available_energy_decreases() {
    let setup = RunSetup {
        material: material(),
        grid: Grid::new(16, 16, PI, PI),
        step: StepConfig {
            dt: 5e-3,
            t_end: 0.5,
            isothermal: true,
            ..StepConfig::default()
        },
        scenario: ScenarioSpec::new(ScenarioKind::RandomSmooth, 0.3, 9),
        snapshot_every: None,
        reference: None,
    };
    let out = run(&setup, |_| Ok(())).unwrap();
    for w in out.records.windows(2) {
        assert!(w[1].available_energy <= w[0].available_energy);
        assert_eq!(w[1].theta_min, w[0].theta_min);
    }
}
