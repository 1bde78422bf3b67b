//! IMEX sub-steps: director, temperature, momentum with projection.

use rayon::prelude::*;

use super::fields::{
    advect, director_stress_rows, div_flux, face_energy_cells, jump_sq, momentum_advection, tau_cells,
};
use super::grid::Operators;
use super::state::StateField;
use super::{SolverError, StepConfig};
use crate::linalg::{cg, max_abs, norm2, CgOptions, Csr};
use crate::material::{MaterialModel, ThermoState};

/// Cell values of every coefficient, frozen at the start of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Frozen {
    pub tau: Vec<f64>,
    /// `lambda = rho psi_tau / theta`.
    pub lambda: Vec<f64>,
    /// `theta lambda = rho psi_tau`, the Ericksen stress coefficient.
    pub big_lambda: Vec<f64>,
    pub kappa: Vec<f64>,
    pub dtau_eps: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
}

struct CellCoeffs {
    lambda: f64,
    big_lambda: f64,
    kappa: f64,
    dtau_eps: f64,
    alpha: f64,
    gamma: f64,
    mu: f64,
}

fn cell_coeffs(m: &MaterialModel, c: usize, theta: f64, tau: f64) -> Result<CellCoeffs, SolverError> {
    let rho = m.rho();
    let s = ThermoState { theta, tau, rho };
    s.validate().map_err(|e| SolverError::Material { cell: c, source: e })?;
    let p = m.free_energy.partials(&s);
    let k = m.params.at(theta, tau);
    let out = CellCoeffs {
        lambda: rho * p.d_tau / theta,
        big_lambda: rho * p.d_tau,
        kappa: -theta * p.d_theta2,
        dtau_eps: p.d_tau - theta * p.d_theta_tau,
        alpha: k.alpha_0,
        gamma: k.gamma,
        mu: k.mu_s,
    };
    let checks = [
        ("lambda", out.lambda, true),
        ("kappa", out.kappa, true),
        ("gamma", out.gamma, true),
        ("alpha_0", out.alpha, false),
        ("mu_s", out.mu, false),
        ("dtau_eps", out.dtau_eps, false),
    ];
    for (name, v, strict) in checks {
        let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 || name == "dtau_eps" };
        if !ok {
            return Err(SolverError::Coefficient {
                name,
                value: v,
                cell: c,
                theta,
                tau,
            });
        }
    }
    Ok(out)
}

/// Evaluates the frozen coefficients of `state` (data-parallel over cells).
pub fn freeze(ops: &Operators, m: &MaterialModel, state: &StateField) -> Result<Frozen, SolverError> {
    let tau = tau_cells(ops, &state.d);
    let cells: Vec<CellCoeffs> = (0..ops.grid.ncells())
        .into_par_iter()
        .map(|c| cell_coeffs(m, c, state.theta[c], tau[c]))
        .collect::<Result<_, _>>()?;
    let pick = |f: fn(&CellCoeffs) -> f64| cells.iter().map(f).collect::<Vec<f64>>();
    Ok(Frozen {
        lambda: pick(|c| c.lambda),
        big_lambda: pick(|c| c.big_lambda),
        kappa: pick(|c| c.kappa),
        dtau_eps: pick(|c| c.dtau_eps),
        alpha: pick(|c| c.alpha),
        gamma: pick(|c| c.gamma),
        mu: pick(|c| c.mu),
        tau,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectorUpdate {
    pub d: [Vec<f64>; 2],
    /// `max | |d| - 1 |` before renormalisation.
    pub drift: f64,
    /// Discrete material derivative `(d^{n+1} - d^n)/dt + u . grad d^n`.
    pub dt_d: [Vec<f64>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub drift: f64,
    pub div_max: f64,
    pub cg_iterations: usize,
}

/// Time integrator for one grid and material.
#[derive(Debug, Clone)]
pub struct Solver {
    pub ops: Operators,
    pub material: MaterialModel,
    pub config: StepConfig,
    pub cg: CgOptions,
}

fn add_diag(a: &Csr, diag: &[f64]) -> Csr {
    a.add_scaled(1.0, &Csr::diagonal_matrix(diag), 1.0)
}

impl Solver {
    /// Rejects materials outside the simplified model.
    pub fn new(ops: Operators, material: MaterialModel, config: StepConfig) -> Result<Self, SolverError> {
        let extra = material.params.nonzero_leslie();
        if !extra.is_empty() {
            return Err(SolverError::UnsupportedParameters(extra.join(", ")));
        }
        config.validate()?;
        Ok(Self {
            ops,
            material,
            config,
            cg: CgOptions::default(),
        })
    }

    /// Solves `a x = b` for the correction to the warm start `x`, so the
    /// tolerance is relative to the change over the step rather than to `b`.
    fn solve(&self, a: &Csr, b: &[f64], x: &mut [f64], what: &'static str) -> Result<usize, SolverError> {
        let mut r = a.mul_vec(x);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        if norm2(&r) <= 1e-15 * norm2(b) {
            return Ok(0);
        }
        let mut dx = vec![0.0; x.len()];
        let info = cg(a, &r, &mut dx, self.cg).map_err(|e| SolverError::LinearSolve { what, source: e })?;
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        Ok(info.iterations)
    }

    /// Largest stable step of the explicit parts.
    pub fn cfl_limit(&self, state: &StateField, frozen: &Frozen) -> f64 {
        let g = &self.ops.grid;
        let h = g.dx.min(g.dy);
        let mu_max = frozen.mu.iter().copied().fold(0.0, f64::max);
        let visc = if mu_max > 0.0 {
            self.material.rho() * h * h / (4.0 * mu_max)
        } else {
            f64::INFINITY
        };
        let umax = max_abs(&state.vel);
        let adv = if umax > 0.0 { h / umax } else { f64::INFINITY };
        self.config.cfl_safety * visc.min(adv)
    }

    pub fn check_cfl(&self, state: &StateField, frozen: &Frozen, dt: f64) -> Result<(), SolverError> {
        let limit = self.cfl_limit(state, frozen);
        if dt > limit {
            Err(SolverError::Cfl { dt, limit })
        } else {
            Ok(())
        }
    }

    /// Semi-implicit director update: implicit `div(lambda grad)`, explicit
    /// advection and reaction.
    pub fn director_step(
        &self,
        state: &StateField,
        frozen: &Frozen,
        dt: f64,
    ) -> Result<(DirectorUpdate, usize), SolverError> {
        let ops = &self.ops;
        let g = &ops.grid;
        let nc = g.ncells();
        let lam_face = ops.face_average(&frozen.lambda);
        let reaction = face_energy_cells(ops, Some(&lam_face), &jump_sq(ops, &state.d));
        let diag: Vec<f64> = frozen.gamma.iter().map(|gm| gm / dt).collect();
        let a = add_diag(&ops.neg_laplacian(&lam_face), &diag);
        let mut iters = 0;
        let mut new = [state.d[0].clone(), state.d[1].clone()];
        let mut adv: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for k in 0..2 {
            adv[k] = advect(g, &state.vel, &state.d[k]);
            let rhs: Vec<f64> = (0..nc)
                .map(|c| diag[c] * state.d[k][c] - frozen.gamma[c] * adv[k][c] + reaction[c] * state.d[k][c])
                .collect();
            iters += self.solve(&a, &rhs, &mut new[k], "director")?;
        }
        let drift = (0..nc)
            .map(|c| (new[0][c].hypot(new[1][c]) - 1.0).abs())
            .fold(0.0, f64::max);
        if self.config.renormalize_director {
            let [d1, d2] = &mut new;
            for (a, b) in d1.iter_mut().zip(d2.iter_mut()) {
                let n = a.hypot(*b);
                *a /= n;
                *b /= n;
            }
        }
        let dt_d = [0, 1].map(|k| {
            (0..nc)
                .map(|c| (new[k][c] - state.d[k][c]) / dt + adv[k][c])
                .collect::<Vec<f64>>()
        });
        Ok((DirectorUpdate { d: new, drift, dt_d }, iters))
    }

    /// Heat sources: stress power `(S_N + S_E) : D`, the `-rho d_tau eps D_t tau`
    /// term and the divergence of the couple-stress flux.
    pub fn heat_sources(&self, state: &StateField, frozen: &Frozen, upd: &DirectorUpdate, dt: f64) -> Vec<f64> {
        let ops = &self.ops;
        let g = &ops.grid;
        let nc = g.ncells();
        let rho = self.material.rho();

        let strain = ops.strain.mul_vec(&state.vel);
        let mu_rows = ops.row_values(&frozen.mu);
        let lam_rows = ops.row_values(&frozen.big_lambda);
        let m_rows = director_stress_rows(g, &state.d);
        let power: Vec<f64> = (0..strain.len())
            .map(|r| {
                let t = 2.0 * mu_rows[r] * strain[r] - lam_rows[r] * m_rows[r];
                ops.strain_weights[r] * t * strain[r]
            })
            .collect();
        let mut src = ops.rows_to_cells(&power);

        if frozen.dtau_eps.iter().any(|&e| e != 0.0) {
            let tau_new = tau_cells(ops, &upd.d);
            let tau_adv = div_flux(ops, &state.vel, &frozen.tau);
            for c in 0..nc {
                let dt_tau = (tau_new[c] - frozen.tau[c]) / dt + tau_adv[c];
                src[c] -= rho * frozen.dtau_eps[c] * dt_tau;
            }
        }

        let lam_face = ops.face_average(&frozen.big_lambda);
        for (fi, f) in ops.faces.iter().enumerate() {
            let mut flux = 0.0;
            for k in 0..2 {
                let grad = (state.d[k][f.hi] - state.d[k][f.lo]) / f.h;
                flux += grad * 0.5 * (upd.dt_d[k][f.lo] + upd.dt_d[k][f.hi]);
            }
            let flux = lam_face[fi] * flux / f.h;
            src[f.lo] += flux;
            src[f.hi] -= flux;
        }
        src
    }

    /// Semi-implicit temperature update with implicit conduction.
    pub fn temperature_step(
        &self,
        state: &StateField,
        frozen: &Frozen,
        upd: &DirectorUpdate,
        dt: f64,
    ) -> Result<(Vec<f64>, usize), SolverError> {
        let ops = &self.ops;
        let nc = ops.grid.ncells();
        let rho = self.material.rho();
        let diag: Vec<f64> = frozen.kappa.iter().map(|k| rho * k / dt).collect();
        let a = add_diag(&ops.neg_laplacian(&ops.face_average(&frozen.alpha)), &diag);
        let conv = div_flux(ops, &state.vel, &state.theta);
        let src = self.heat_sources(state, frozen, upd, dt);
        let rhs: Vec<f64> = (0..nc)
            .map(|c| diag[c] * state.theta[c] - rho * frozen.kappa[c] * conv[c] + src[c])
            .collect();
        let mut theta = state.theta.clone();
        let iters = self.solve(&a, &rhs, &mut theta, "temperature")?;
        if let Some((c, &v)) = theta
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= self.config.theta_floor))
        {
            return Err(SolverError::ThetaFloor {
                t: state.t + dt,
                cell: c,
                value: v,
                floor: self.config.theta_floor,
            });
        }
        Ok((theta, iters))
    }

    /// Viscous solve with explicit advection and Ericksen forcing, then
    /// projection onto discretely divergence-free velocities.
    pub fn momentum_step(
        &self,
        state: &StateField,
        frozen: &Frozen,
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, usize), SolverError> {
        let ops = &self.ops;
        let g = &ops.grid;
        let rho = self.material.rho();
        let nf = g.nfaces();
        let a = add_diag(&ops.viscous(&frozen.mu), &vec![rho / dt; nf]);
        let adv = momentum_advection(g, &state.vel);
        let lam_rows = ops.row_values(&frozen.big_lambda);
        let m_rows = director_stress_rows(g, &state.d);
        let stress: Vec<f64> = (0..m_rows.len())
            .map(|r| ops.strain_weights[r] * lam_rows[r] * m_rows[r])
            .collect();
        let force = ops.strain_t.mul_vec(&stress);
        let rhs: Vec<f64> = (0..nf)
            .map(|f| rho / dt * state.vel[f] - rho * adv[f] + force[f])
            .collect();
        let mut vel = state.vel.clone();
        let mut iters = self.solve(&a, &rhs, &mut vel, "viscous")?;

        let mut prhs = ops.div.mul_vec(&vel);
        let mean = prhs.iter().sum::<f64>() / prhs.len() as f64;
        prhs.iter_mut().for_each(|v| *v = mean - *v);
        let mut phi: Vec<f64> = state.pi.iter().map(|p| p * dt / rho).collect();
        iters += self.solve(&ops.pressure_laplacian, &prhs, &mut phi, "pressure")?;
        let pmean = phi.iter().sum::<f64>() / phi.len() as f64;
        phi.iter_mut().for_each(|p| *p -= pmean);
        let corr = ops.div.transpose().mul_vec(&phi);
        vel.iter_mut().zip(&corr).for_each(|(v, c)| *v += c);
        let pi = phi.iter().map(|p| rho * p / dt).collect();
        Ok((vel, pi, iters))
    }

    /// One full step `d -> theta -> u` of length `dt`.
    pub fn step(&self, state: &StateField, dt: f64) -> Result<(StateField, StepReport), SolverError> {
        let frozen = freeze(&self.ops, &self.material, state)?;
        self.check_cfl(state, &frozen, dt)?;
        let (upd, mut iters) = self.director_step(state, &frozen, dt)?;
        let theta = if self.config.isothermal {
            state.theta.clone()
        } else {
            let (theta, it) = self.temperature_step(state, &frozen, &upd, dt)?;
            iters += it;
            theta
        };
        let (vel, pi, it) = self.momentum_step(state, &frozen, dt)?;
        iters += it;
        let div_max = max_abs(&self.ops.div.mul_vec(&vel));
        let next = StateField {
            grid: state.grid,
            vel,
            theta,
            d: upd.d,
            pi,
            t: state.t + dt,
        };
        if self.config.renormalize_director {
            let drift = next.director_drift();
            if drift > 1e-12 {
                return Err(SolverError::Invariant(format!(
                    "director drift {drift:e} after renormalisation"
                )));
            }
        }
        Ok((
            next,
            StepReport {
                drift: upd.drift,
                div_max,
                cg_iterations: iters,
            },
        ))
    }
}
