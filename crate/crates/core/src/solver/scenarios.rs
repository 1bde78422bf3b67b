//! Initial conditions.

use std::f64::consts::PI;

use rand::Rng;

use super::grid::{velocity_from_streamfunction, Grid};
use super::state::StateField;
use super::SolverError;
use crate::rng::{normal, stream, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    EquilibriumPerturbation,
    TaylorGreenDirector,
    RandomSmooth,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<Self, SolverError> {
        match name {
            "equilibrium_perturbation" => Ok(Self::EquilibriumPerturbation),
            "taylor_green_director" => Ok(Self::TaylorGreenDirector),
            "random_smooth" => Ok(Self::RandomSmooth),
            other => Err(SolverError::UnknownScenario(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::EquilibriumPerturbation => "equilibrium_perturbation",
            Self::TaylorGreenDirector => "taylor_green_director",
            Self::RandomSmooth => "random_smooth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub amplitude: f64,
    pub seed: u64,
    /// Base temperature of the perturbed equilibrium.
    pub theta_ref: f64,
    /// Base director angle of the perturbed equilibrium.
    pub phi_ref: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, amplitude: f64, seed: u64) -> Self {
        Self {
            kind,
            amplitude,
            seed,
            theta_ref: 1.0,
            phi_ref: 0.0,
        }
    }
}

/// `cos(p pi x / Lx) cos(q pi y / Ly)` at a cell centre.
fn cos_mode(g: &Grid, c: usize, p: usize, q: usize) -> f64 {
    let (x, y) = g.cell_center(c);
    (p as f64 * PI * x / g.lx).cos() * (q as f64 * PI * y / g.ly).cos()
}

fn node_xy(g: &Grid, n: usize) -> (f64, f64) {
    let (i, j) = g.node_ij(n);
    (i as f64 * g.dx, j as f64 * g.dy)
}

/// Builds the initial state; velocities come from a node streamfunction and
/// are discretely divergence-free.
pub fn initialize(grid: Grid, spec: &ScenarioSpec, theta_floor: f64) -> Result<StateField, SolverError> {
    let a = spec.amplitude;
    let mut rng = stream(spec.seed, streams::SCENARIO);
    let nc = grid.ncells();
    let mut theta = vec![spec.theta_ref; nc];
    let mut phi = vec![spec.phi_ref; nc];
    let mut psi = vec![0.0; grid.nnodes()];
    let lscale = grid.lx.min(grid.ly) / PI;

    match spec.kind {
        ScenarioKind::EquilibriumPerturbation => {
            let mut weight = || {
                let w: f64 = rng.gen_range(0.5..1.0);
                if rng.gen::<bool>() {
                    w
                } else {
                    -w
                }
            };
            let theta_modes = [(1, 0), (0, 1), (1, 1), (2, 1)];
            let phi_modes = [(1, 0), (0, 1), (1, 1)];
            let tw: Vec<f64> = theta_modes.iter().map(|_| weight()).collect();
            let pw: Vec<f64> = phi_modes.iter().map(|_| weight()).collect();
            let sw = weight();
            for c in 0..nc {
                let dt: f64 = theta_modes
                    .iter()
                    .zip(&tw)
                    .map(|(&(p, q), w)| w * cos_mode(&grid, c, p, q))
                    .sum();
                let dp: f64 = phi_modes
                    .iter()
                    .zip(&pw)
                    .map(|(&(p, q), w)| w * cos_mode(&grid, c, p, q))
                    .sum();
                theta[c] = spec.theta_ref * (1.0 + a * dt);
                phi[c] = spec.phi_ref + a * dp;
            }
            for (n, s) in psi.iter_mut().enumerate() {
                let (x, y) = node_xy(&grid, n);
                *s = a * sw * lscale * (PI * x / grid.lx).sin().powi(2) * (PI * y / grid.ly).sin().powi(2);
            }
        }
        ScenarioKind::TaylorGreenDirector => {
            for (c, p) in phi.iter_mut().enumerate() {
                *p = spec.phi_ref + a * cos_mode(&grid, c, 1, 1);
            }
            for (n, s) in psi.iter_mut().enumerate() {
                let (x, y) = node_xy(&grid, n);
                *s = a * lscale * (PI * x / grid.lx).sin() * (PI * y / grid.ly).sin();
            }
        }
        ScenarioKind::RandomSmooth => {
            let mut tmodes = Vec::new();
            let mut pmodes = Vec::new();
            let mut smodes = Vec::new();
            for p in 0..=3usize {
                for q in 0..=3usize {
                    if p + q == 0 {
                        continue;
                    }
                    let damp = 1.0 / (1.0 + (p * p + q * q) as f64);
                    tmodes.push((p, q, normal(&mut rng) * damp));
                    pmodes.push((p, q, normal(&mut rng) * damp));
                    if p > 0 && q > 0 {
                        smodes.push((p, q, normal(&mut rng) * damp));
                    }
                }
            }
            for c in 0..nc {
                let dt: f64 = tmodes.iter().map(|&(p, q, w)| w * cos_mode(&grid, c, p, q)).sum();
                let dp: f64 = pmodes.iter().map(|&(p, q, w)| w * cos_mode(&grid, c, p, q)).sum();
                theta[c] = spec.theta_ref * (1.0 + a * dt);
                phi[c] = spec.phi_ref + a * dp;
            }
            for (n, s) in psi.iter_mut().enumerate() {
                let (x, y) = node_xy(&grid, n);
                *s = a * lscale
                    * smodes
                        .iter()
                        .map(|&(p, q, w)| {
                            w * (p as f64 * PI * x / grid.lx).sin() * (q as f64 * PI * y / grid.ly).sin()
                        })
                        .sum::<f64>();
            }
        }
    }

    if let Some((c, &v)) = theta
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0) || v < theta_floor)
    {
        return Err(SolverError::InitialTemperature { cell: c, value: v });
    }

    let vel = if a == 0.0 {
        vec![0.0; grid.nfaces()]
    } else {
        velocity_from_streamfunction(&grid, &psi)
    };
    let mut state = StateField {
        grid,
        vel,
        theta,
        d: [phi.iter().map(|p| p.cos()).collect(), phi.iter().map(|p| p.sin()).collect()],
        pi: vec![0.0; nc],
        t: 0.0,
    };
    state.normalize_director();
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::grid::Operators;

    #[test]
    fn amplitude_zero_is_constant_equilibrium() {
        let g = Grid::new(8, 8, PI, PI);
        for kind in [
            ScenarioKind::EquilibriumPerturbation,
            ScenarioKind::TaylorGreenDirector,
            ScenarioKind::RandomSmooth,
        ] {
            let s = initialize(g, &ScenarioSpec::new(kind, 0.0, 5), 1e-3).unwrap();
            assert_eq!(s, StateField::constant(g, 1.0, [1.0, 0.0]));
        }
    }

    #[test]
    fn random_smooth_is_deterministic_and_divergence_free() {
        let g = Grid::new(16, 12, PI, 2.0);
        let spec = ScenarioSpec::new(ScenarioKind::RandomSmooth, 0.2, 42);
        let a = initialize(g, &spec, 1e-3).unwrap();
        let b = initialize(g, &spec, 1e-3).unwrap();
        assert_eq!(a, b);
        let other = initialize(g, &ScenarioSpec { seed: 43, ..spec }, 1e-3).unwrap();
        assert_ne!(a, other);
        let ops = Operators::new(g);
        let div = ops.div.mul_vec(&a.vel);
        let scale = crate::linalg::max_abs(&a.vel) / g.dx.min(g.dy);
        assert!(crate::linalg::max_abs(&div) <= 1e-10 * scale);
        assert!(a.director_drift() <= 1e-15);
    }

    #[test]
    fn rejects_bad_temperature_and_scenario() {
        let g = Grid::new(8, 8, PI, PI);
        let spec = ScenarioSpec::new(ScenarioKind::EquilibriumPerturbation, 100.0, 1);
        assert!(matches!(
            initialize(g, &spec, 1e-3),
            Err(SolverError::InitialTemperature { .. })
        ));
        assert!(ScenarioKind::parse("vortex").is_err());
    }
}
