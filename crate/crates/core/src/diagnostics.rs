//! Discrete functionals of a state and of a diagnostics series: conserved and
//! monotone totals, distance to equilibrium, decay-rate fits, energy and
//! entropy audits and the second variation of the entropy.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::material::{self, MaterialError, MaterialModel, ThermoState};
use crate::solver::fields::{cell_gradient, jump_sq, weighted_laplacian};
use crate::solver::grid::Operators;
use crate::solver::state::StateField;
use crate::stress::{self, ProductionInputs, StressError};

#[derive(Debug, Error)]
pub enum DiagError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Stress(#[from] StressError),
    #[error("no decay fit: {0}")]
    NoFit(String),
    #[error("series too short: need at least {need} records, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("diagnostics CSV: {0}")]
    Csv(String),
    #[error("field size mismatch: {0}")]
    Shape(String),
}

/// Column order of the diagnostics CSV.
pub const CSV_COLUMNS: [&str; 13] = [
    "t",
    "mass",
    "energy",
    "entropy",
    "available_energy",
    "entropy_production",
    "d_drift",
    "u_l2",
    "grad_theta_l2",
    "grad_d_l2",
    "theta_min",
    "theta_max",
    "div_u_max",
];

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub available_energy: f64,
    pub entropy_production: f64,
    pub d_drift: f64,
    pub u_l2: f64,
    pub grad_theta_l2: f64,
    pub grad_d_l2: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub div_u_max: f64,
}

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.mass,
            self.energy,
            self.entropy,
            self.available_energy,
            self.entropy_production,
            self.d_drift,
            self.u_l2,
            self.grad_theta_l2,
            self.grad_d_l2,
            self.theta_min,
            self.theta_max,
            self.div_u_max,
        ]
    }
}

/// Constant equilibrium `(theta*, d*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub theta: f64,
    pub d: [f64; 2],
}

fn face_l2(ops: &Operators, jumps: &[f64]) -> f64 {
    let area = ops.grid.cell_area();
    ops.faces
        .iter()
        .zip(jumps)
        .map(|(f, j)| j / (f.h * f.h) * area)
        .sum::<f64>()
        .sqrt()
}

/// Kinetic energy density per cell, averaging squared face velocities; the
/// cell sum equals the face sum exactly.
pub fn kinetic_density(state: &StateField) -> Vec<f64> {
    let g = &state.grid;
    let sq = |f: Option<usize>| f.map_or(0.0, |f| state.vel[f] * state.vel[f]);
    (0..g.ncells())
        .map(|c| {
            let (i, j) = g.cell_ij(c);
            let ul = (i > 0).then(|| g.uface(i - 1, j));
            let ur = (i + 1 < g.nx).then(|| g.uface(i, j));
            let vb = (j > 0).then(|| g.vface(i, j - 1));
            let vt = (j + 1 < g.ny).then(|| g.vface(i, j));
            0.25 * (sq(ul) + sq(ur) + sq(vb) + sq(vt))
        })
        .collect()
}

/// Totals of one state. `drift` is the pre-normalisation director defect of
/// the step that produced the state.
pub fn totals(
    ops: &Operators,
    m: &MaterialModel,
    state: &StateField,
    drift: f64,
) -> Result<DiagnosticsRecord, DiagError> {
    let g = &ops.grid;
    let nc = g.ncells();
    let area = g.cell_area();
    let rho = m.rho();
    let fe = &m.free_energy;
    let tau = crate::solver::fields::tau_cells(ops, &state.d);
    let ke = kinetic_density(state);

    let lambda: Vec<f64> = (0..nc)
        .map(|c| material::lambda_coeff(fe, &ThermoState { theta: state.theta[c], tau: tau[c], rho }))
        .collect::<Result<_, _>>()?;
    let lam_face = ops.face_average(&lambda);
    let lap = [
        weighted_laplacian(ops, &lam_face, &state.d[0]),
        weighted_laplacian(ops, &lam_face, &state.d[1]),
    ];
    let (tx, ty) = cell_gradient(g, &state.theta);
    let cu: Vec<f64> = (0..nc).map(|c| g.cell_velocity(&state.vel, c).0).collect();
    let cv: Vec<f64> = (0..nc).map(|c| g.cell_velocity(&state.vel, c).1).collect();
    let (ux, uy) = cell_gradient(g, &cu);
    let (vx, vy) = cell_gradient(g, &cv);
    let strain = ops.strain.mul_vec(&state.vel);

    let (mut energy, mut entropy, mut avail, mut prod) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..nc {
        let s = ThermoState {
            theta: state.theta[c],
            tau: tau[c],
            rho,
        };
        let p = fe.partials(&s);
        let eta = -p.d_theta;
        let eps = p.psi + s.theta * eta;
        energy += rho * (ke[c] + eps) * area;
        entropy += rho * eta * area;
        avail += rho * (ke[c] + p.psi) * area;

        let (dx, dy) = (state.d[0][c], state.d[1][c]);
        let n = dx.hypot(dy);
        let inputs = ProductionInputs {
            grad_u: DMatrix::from_row_slice(2, 2, &[strain[c], vx[c], uy[c], strain[nc + c]]),
            d: DVector::from_vec(vec![dx / n, dy / n]),
            grad_theta: DVector::from_vec(vec![tx[c], ty[c]]),
            lap_weighted_d: DVector::from_vec(vec![lap[0][c], lap[1][c]]),
        };
        let _ = (ux[c], vy[c]);
        prod += stress::entropy_production(&m.params, &s, &inputs)? * area;
    }

    let theta_jumps: Vec<f64> = ops
        .faces
        .iter()
        .map(|f| (state.theta[f.hi] - state.theta[f.lo]).powi(2))
        .collect();
    Ok(DiagnosticsRecord {
        t: state.t,
        mass: rho * area * nc as f64,
        energy,
        entropy,
        available_energy: avail,
        entropy_production: prod,
        d_drift: drift,
        u_l2: (crate::linalg::dot(&state.vel, &state.vel) * area).sqrt(),
        grad_theta_l2: face_l2(ops, &theta_jumps),
        grad_d_l2: face_l2(ops, &jump_sq(ops, &state.d)),
        theta_min: state.theta_min(),
        theta_max: state.theta_max(),
        div_u_max: crate::linalg::max_abs(&ops.div.mul_vec(&state.vel)),
    })
}

/// `||u|| + ||theta - theta*|| + ||d - d*|| + ||grad d||` in discrete `L2`.
/// Without a reference, the mean temperature and normalised mean director
/// of the state are used.
pub fn equilibrium_distance(state: &StateField, reference: Option<&Reference>) -> f64 {
    let g = &state.grid;
    let nc = g.ncells();
    let area = g.cell_area();
    let r = reference.copied().unwrap_or_else(|| {
        let mt = state.theta.iter().sum::<f64>() / nc as f64;
        let m0 = state.d[0].iter().sum::<f64>() / nc as f64;
        let m1 = state.d[1].iter().sum::<f64>() / nc as f64;
        let n = m0.hypot(m1);
        let d = if n > 0.0 { [m0 / n, m1 / n] } else { [1.0, 0.0] };
        Reference { theta: mt, d }
    });
    let u = (crate::linalg::dot(&state.vel, &state.vel) * area).sqrt();
    let th = (state.theta.iter().map(|t| (t - r.theta).powi(2)).sum::<f64>() * area).sqrt();
    let dd = ((0..nc)
        .map(|c| (state.d[0][c] - r.d[0]).powi(2) + (state.d[1][c] - r.d[1]).powi(2))
        .sum::<f64>()
        * area)
        .sqrt();
    let mut grad = 0.0;
    let mut add = |a: usize, b: usize, h: f64| {
        grad += ((state.d[0][a] - state.d[0][b]).powi(2) + (state.d[1][a] - state.d[1][b]).powi(2)) / (h * h);
    };
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            if i + 1 < g.nx {
                add(c, g.cell(i + 1, j), g.dx);
            }
            if j + 1 < g.ny {
                add(c, g.cell(i, j + 1), g.dy);
            }
        }
    }
    u + th + dd + (grad * area).sqrt()
}

/// Lower and upper end of the decay-fit window.
pub const FIT_WINDOW: (f64, f64) = (1e-8, 1e-2);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    /// Root-mean-square residual of `ln(distance)`.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares slope of `ln(distance)` against `t` inside [`FIT_WINDOW`].
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit, DiagError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, d)| *d >= FIT_WINDOW.0 && *d <= FIT_WINDOW.1)
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(DiagError::NoFit(format!(
            "{} samples inside the window [{:e}, {:e}], need 10",
            pts.len(),
            FIT_WINDOW.0,
            FIT_WINDOW.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(DiagError::NoFit("all samples at the same time".into()));
    }
    let slope = sxy / sxx;
    let rate = -slope;
    if !(rate > 0.0) {
        return Err(DiagError::NoFit(format!("series does not decay (slope {slope:e})")));
    }
    let residual = (pts
        .iter()
        .map(|p| (p.1 - (my + slope * (p.0 - mt))).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        rate,
        residual,
        samples: pts.len(),
    })
}

/// Energy and entropy audit of a diagnostics series.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDefect {
    /// `max_k |E_k - E_0| / |E_0|`.
    pub max_rel_defect: f64,
    /// Record index attaining `max_rel_defect`.
    pub worst_index: usize,
    /// Record index `k` with the largest `|E_k - E_{k-1}|`.
    pub largest_jump_index: usize,
    pub largest_jump: f64,
    /// Per-step entropy increments `N_k - N_{k-1}`.
    pub entropy_increments: Vec<f64>,
    /// `(k, N_k - N_{k-1})` for decreases beyond round-off.
    pub entropy_decreases: Vec<(usize, f64)>,
    /// `(k, Ea_k - Ea_{k-1})` for increases beyond round-off.
    pub available_increases: Vec<(usize, f64)>,
    pub min_entropy_increment: f64,
    pub max_mass_defect: f64,
}

impl EnergyDefect {
    pub fn all_zero(&self) -> bool {
        self.max_rel_defect == 0.0
            && self.max_mass_defect == 0.0
            && self.entropy_increments.iter().all(|&x| x == 0.0)
            && self.available_increases.is_empty()
    }
}

/// Round-off allowance for monotonicity checks: `64 eps max|X|`.
pub fn roundoff(values: impl Iterator<Item = f64>) -> f64 {
    64.0 * f64::EPSILON * values.fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn energy_identity_defect(series: &[DiagnosticsRecord]) -> Result<EnergyDefect, DiagError> {
    if series.len() < 2 {
        return Err(DiagError::TooShort {
            need: 2,
            got: series.len(),
        });
    }
    let e0 = series[0].energy;
    let m0 = series[0].mass;
    let scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
    let (mut worst, mut worst_i) = (0.0, 0);
    let (mut jump, mut jump_i) = (0.0, 0);
    let mut mass = 0.0f64;
    for (k, r) in series.iter().enumerate() {
        let d = (r.energy - e0).abs() / scale;
        if d > worst {
            worst = d;
            worst_i = k;
        }
        if k > 0 {
            let j = (r.energy - series[k - 1].energy).abs();
            if j > jump {
                jump = j;
                jump_i = k;
            }
        }
        mass = mass.max((r.mass - m0).abs() / m0.abs().max(f64::MIN_POSITIVE));
    }
    let tol_n = roundoff(series.iter().map(|r| r.entropy));
    let tol_a = roundoff(series.iter().map(|r| r.available_energy));
    let incs: Vec<f64> = series.windows(2).map(|w| w[1].entropy - w[0].entropy).collect();
    let decreases = incs
        .iter()
        .enumerate()
        .filter(|(_, &x)| x < -tol_n)
        .map(|(k, &x)| (k + 1, x))
        .collect();
    let available_increases = series
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k + 1, w[1].available_energy - w[0].available_energy))
        .filter(|&(_, x)| x > tol_a)
        .collect();
    Ok(EnergyDefect {
        max_rel_defect: worst,
        worst_index: worst_i,
        largest_jump_index: jump_i,
        largest_jump: jump,
        min_entropy_increment: incs.iter().copied().fold(f64::INFINITY, f64::min),
        entropy_increments: incs,
        entropy_decreases: decreases,
        available_increases,
        max_mass_defect: mass,
    })
}

/// Plain-text audit of a series; identical whether computed during a run or
/// from the CSV afterwards.
pub fn audit_text(series: &[DiagnosticsRecord]) -> Result<String, DiagError> {
    let d = energy_identity_defect(series)?;
    let rows = |v: &[(usize, f64)]| {
        if v.is_empty() {
            "none".to_string()
        } else {
            v.iter().map(|(k, _)| k.to_string()).collect::<Vec<_>>().join(" ")
        }
    };
    let mut out = String::new();
    out.push_str(&format!("records: {}\n", series.len()));
    out.push_str(&format!("mass_defect_max_rel: {:.16e}\n", d.max_mass_defect));
    out.push_str(&format!("energy_defect_max_rel: {:.16e}\n", d.max_rel_defect));
    out.push_str(&format!("energy_defect_worst_row: {}\n", d.worst_index));
    out.push_str(&format!("energy_largest_jump: {:.16e}\n", d.largest_jump));
    out.push_str(&format!("energy_largest_jump_row: {}\n", d.largest_jump_index));
    out.push_str(&format!("entropy_min_increment: {:.16e}\n", d.min_entropy_increment));
    out.push_str(&format!("entropy_decreases: {}\n", d.entropy_decreases.len()));
    out.push_str(&format!("entropy_decrease_rows: {}\n", rows(&d.entropy_decreases)));
    out.push_str(&format!("available_energy_increases: {}\n", d.available_increases.len()));
    out.push_str(&format!(
        "available_energy_increase_rows: {}\n",
        rows(&d.available_increases)
    ));
    let verdict = if d.all_zero() {
        "all defects zero".to_string()
    } else if d.entropy_decreases.is_empty() {
        "entropy non-decreasing".to_string()
    } else {
        format!("entropy decreases at rows {}", rows(&d.entropy_decreases))
    };
    out.push_str(&format!("verdict: {verdict}\n"));
    Ok(out)
}

/// Serialises a series with 17 significant digits.
pub fn records_to_csv(series: &[DiagnosticsRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in series {
        let vals: Vec<String> = r.values().iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<DiagnosticsRecord>, DiagError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| DiagError::Csv(e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols != CSV_COLUMNS {
        return Err(DiagError::Csv(format!(
            "unexpected header {:?}, expected {:?}",
            cols, CSV_COLUMNS
        )));
    }
    let mut out: Vec<DiagnosticsRecord> = Vec::new();
    for (k, row) in rdr.deserialize().enumerate() {
        let r: DiagnosticsRecord = row.map_err(|e| DiagError::Csv(format!("row {}: {e}", k + 1)))?;
        if let Some(prev) = out.last() {
            if !(r.t > prev.t) {
                return Err(DiagError::Csv(format!("row {}: time {} does not increase", k + 1, r.t)));
            }
        }
        if r.values().iter().any(|v| !v.is_finite()) {
            return Err(DiagError::Csv(format!("row {}: non-finite entry", k + 1)));
        }
        out.push(r);
    }
    Ok(out)
}

/// Perturbation of an equilibrium: density, temperature and director parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTriple {
    /// Omitted in incompressible runs.
    pub sigma: Option<Vec<f64>>,
    pub vartheta: Vec<f64>,
    pub delta: [Vec<f64>; 2],
}

impl PerturbationTriple {
    pub fn scaled(&self, s: f64) -> Self {
        let sc = |v: &Vec<f64>| v.iter().map(|x| s * x).collect::<Vec<f64>>();
        Self {
            sigma: self.sigma.as_ref().map(sc),
            vartheta: sc(&self.vartheta),
            delta: [sc(&self.delta[0]), sc(&self.delta[1])],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondVariation {
    pub value: f64,
    /// Stability conditions that fail at the equilibrium.
    pub warnings: Vec<String>,
}

/// `int (d_rho pi/(rho theta)) sigma^2 + (kappa/theta^2) vartheta^2 + lambda |grad delta|^2`
/// at the equilibrium `(rho*, theta*)`, with `|grad delta|^2` from face jumps.
pub fn second_variation(
    ops: &Operators,
    m: &MaterialModel,
    rho: f64,
    theta: f64,
    p: &PerturbationTriple,
) -> Result<SecondVariation, DiagError> {
    let g = &ops.grid;
    let nc = g.ncells();
    let sizes_ok = p.vartheta.len() == nc
        && p.delta[0].len() == nc
        && p.delta[1].len() == nc
        && p.sigma.as_ref().is_none_or(|s| s.len() == nc);
    if !sizes_ok {
        return Err(DiagError::Shape(format!("perturbation fields must have {nc} cells")));
    }
    let s = ThermoState::new(theta, 0.0, rho)?;
    let part = m.free_energy.partials(&s);
    let kappa = -theta * part.d_theta2;
    let lambda = rho * part.d_tau / theta;
    let dpi = 2.0 * rho * part.d_rho + rho * rho * part.d_rho2;
    let c = m.params.at(theta, 0.0);
    let n = m.params.n_dim as f64;

    let mut warnings = Vec::new();
    let mut need = |ok: bool, what: &str| {
        if !ok {
            warnings.push(what.to_string());
        }
    };
    need(kappa > 0.0, "kappa>0");
    need(lambda > 0.0, "lambda>0");
    if p.sigma.is_some() {
        need(dpi > 0.0, "drho_pi>0");
    }
    need(c.mu_s > 0.0, "mu_s>0");
    need(2.0 * c.mu_s + n * c.mu_b > 0.0, "2mu_s+n*mu_b>0");
    need(c.alpha_0 > 0.0, "alpha_0>0");
    need(c.alpha_0 + c.alpha_1 > 0.0, "alpha_0+alpha_1>0");
    need(c.gamma > 0.0, "gamma>0");

    let area = g.cell_area();
    let mut cells = 0.0;
    for k in 0..nc {
        let mut v = kappa / (theta * theta) * p.vartheta[k] * p.vartheta[k];
        if let Some(sig) = &p.sigma {
            v += dpi / (rho * theta) * sig[k] * sig[k];
        }
        cells += v;
    }
    let jumps = jump_sq(ops, &p.delta);
    let faces: f64 = ops
        .faces
        .iter()
        .zip(&jumps)
        .map(|(f, j)| lambda * j / (f.h * f.h))
        .sum();
    Ok(SecondVariation {
        value: (cells + faces) * area,
        warnings,
    })
}
