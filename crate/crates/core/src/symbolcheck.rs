//! Normal ellipticity and Lopatinskii-Shapiro checks of the reduced
//! temperature/director symbol, and the decay spectrum of the linearization
//! at a constant equilibrium.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{self, CMat2, SqrtMethod, C64};
use crate::material::{MaterialError, MaterialModel, ThermoState};
use crate::rng::{self, streams};
use crate::solver::grid::{streamfunction_basis, Grid, Operators};

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("regularity violated at theta={theta}, tau={tau}: {condition} (value {value:e})")]
    Regularity {
        condition: &'static str,
        value: f64,
        theta: f64,
        tau: f64,
    },
    #[error("invalid frozen data: {0}")]
    InvalidInput(String),
    #[error("covariable must be nonzero")]
    ZeroCovariable,
    #[error("E_red is singular (a0={a0:e}, lambda0/gamma0={l:e})")]
    SingularE { a0: f64, l: f64 },
    #[error("spectral parameter z={0} lies on the closed negative real axis")]
    BadSpectralParameter(C64),
    #[error("grid {nx}x{ny} exceeds the dense eigensolve limit of {limit} per axis")]
    GridTooFine { nx: usize, ny: usize, limit: usize },
    #[error("eigensolve failed: {0}")]
    Eigen(String),
}

/// Coefficients of the principal linearization frozen at `(theta0, tau0, grad d0, d0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCoefficients {
    pub n: usize,
    pub rho: f64,
    pub theta0: f64,
    pub tau0: f64,
    pub d0: DVector<f64>,
    /// `grad_d0[(i, j)] = d_i d0_j`.
    pub grad_d0: DMatrix<f64>,
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub lambda0: f64,
    pub dtau_lambda0: f64,
    pub gamma0: f64,
    pub kappa0: f64,
    pub alpha0: f64,
    pub mu0: f64,
    pub dtau_eta0: f64,
}

const TOL: f64 = 1e-10;

fn validate_geometry(theta0: f64, tau0: f64, grad_d0: &DMatrix<f64>, d0: &DVector<f64>) -> Result<(), SymbolError> {
    let n = d0.len();
    if grad_d0.nrows() != n || grad_d0.ncols() != n {
        return Err(SymbolError::InvalidInput(format!(
            "grad_d0 is {}x{}, expected {n}x{n}",
            grad_d0.nrows(),
            grad_d0.ncols()
        )));
    }
    if !(theta0 > 0.0) || !(tau0 >= 0.0) || !tau0.is_finite() || !theta0.is_finite() {
        return Err(SymbolError::InvalidInput(format!("theta0={theta0}, tau0={tau0}")));
    }
    if grad_d0.iter().chain(d0.iter()).any(|v| !v.is_finite()) {
        return Err(SymbolError::InvalidInput("non-finite director data".into()));
    }
    if (d0.norm() - 1.0).abs() > TOL {
        return Err(SymbolError::InvalidInput(format!("|d0| = {}", d0.norm())));
    }
    let g = grad_d0.norm();
    if (grad_d0 * d0).norm() > TOL * g.max(1.0) {
        return Err(SymbolError::InvalidInput("grad_d0 * d0 must vanish".into()));
    }
    if (0.5 * g * g - tau0).abs() > TOL * tau0.max(1.0) {
        return Err(SymbolError::InvalidInput(format!(
            "tau0={tau0} differs from |grad d0|^2/2={}",
            0.5 * g * g
        )));
    }
    Ok(())
}

fn compute(
    m: &MaterialModel,
    theta0: f64,
    tau0: f64,
    grad_d0: &DMatrix<f64>,
    d0: &DVector<f64>,
    checked: bool,
) -> Result<FrozenCoefficients, SymbolError> {
    validate_geometry(theta0, tau0, grad_d0, d0)?;
    let rho = m.rho();
    let s = ThermoState::new(theta0, tau0, rho)?;
    let p = m.free_energy.partials(&s);
    let c = m.params.at_checked(theta0, tau0)?;
    let kappa0 = -theta0 * p.d_theta2;
    let lambda0 = rho * p.d_tau / theta0;
    let dtau_lambda0 = rho * p.d_tau2 / theta0;
    let dtau_eta0 = -p.d_theta_tau;
    let gamma0 = c.gamma;
    if checked {
        let conds = [
            ("mu>0", c.mu_s),
            ("alpha>0", c.alpha_0),
            ("kappa>0", kappa0),
            ("gamma>0", gamma0),
            ("lambda>0", lambda0),
            ("lambda+2tau*dtau_lambda>0", lambda0 + 2.0 * tau0 * dtau_lambda0),
        ];
        for (condition, value) in conds {
            if !(value > 0.0) {
                return Err(SymbolError::Regularity {
                    condition,
                    value,
                    theta: theta0,
                    tau: tau0,
                });
            }
        }
    }
    Ok(FrozenCoefficients {
        n: d0.len(),
        rho,
        theta0,
        tau0,
        d0: d0.clone(),
        grad_d0: grad_d0.clone(),
        a0: c.alpha_0 / (rho * kappa0),
        a1: rho * theta0 * dtau_eta0 * dtau_eta0 / (gamma0 * kappa0),
        b0: theta0 * dtau_eta0 / (gamma0 * kappa0),
        b1: rho * dtau_eta0 / gamma0,
        lambda0,
        dtau_lambda0,
        gamma0,
        kappa0,
        alpha0: c.alpha_0,
        mu0: c.mu_s,
        dtau_eta0,
    })
}

/// Freezes the coefficients; fails when the regularity conditions do not hold.
pub fn freeze(
    m: &MaterialModel,
    theta0: f64,
    tau0: f64,
    grad_d0: &DMatrix<f64>,
    d0: &DVector<f64>,
) -> Result<FrozenCoefficients, SymbolError> {
    compute(m, theta0, tau0, grad_d0, d0, true)
}

/// Like [`freeze`] but without the positivity conditions, for probing
/// materials that violate them.
pub fn freeze_unchecked(
    m: &MaterialModel,
    theta0: f64,
    tau0: f64,
    grad_d0: &DMatrix<f64>,
    d0: &DVector<f64>,
) -> Result<FrozenCoefficients, SymbolError> {
    compute(m, theta0, tau0, grad_d0, d0, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSymbol {
    pub xi: Vec<f64>,
    pub xi_sq: f64,
    /// `c(xi) = xi . grad d0`.
    pub c_xi: Vec<f64>,
    pub c_sq: f64,
    pub matrix: CMat2,
    pub e_red: CMat2,
}

fn i(x: f64) -> C64 {
    C64::new(0.0, x)
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Coefficient of the second normal derivative in the half-space problem.
pub fn e_red(fc: &FrozenCoefficients) -> CMat2 {
    CMat2::new(r(fc.a0), i(-fc.b0 * fc.lambda0), r(0.0), r(fc.lambda0 / fc.gamma0))
}

pub fn reduced_symbol(fc: &FrozenCoefficients, xi: &[f64]) -> Result<ReducedSymbol, SymbolError> {
    if xi.len() != fc.n {
        return Err(SymbolError::InvalidInput(format!("xi has {} components, expected {}", xi.len(), fc.n)));
    }
    let xi_sq: f64 = xi.iter().map(|x| x * x).sum();
    if xi_sq == 0.0 {
        return Err(SymbolError::ZeroCovariable);
    }
    let c_xi: Vec<f64> = (0..fc.n)
        .map(|j| (0..fc.n).map(|k| xi[k] * fc.grad_d0[(k, j)]).sum())
        .collect();
    let c_sq: f64 = c_xi.iter().map(|x| x * x).sum();
    let x = fc.lambda0 * xi_sq + fc.dtau_lambda0 * c_sq;
    let matrix = CMat2::new(
        r(fc.a0 * xi_sq + fc.a1 * c_sq),
        i(-fc.b0 * x),
        i(fc.b1 * c_sq),
        r(x / fc.gamma0),
    );
    Ok(ReducedSymbol {
        xi: xi.to_vec(),
        xi_sq,
        c_xi,
        c_sq,
        matrix,
        e_red: e_red(fc),
    })
}

/// Result of the normal-ellipticity check at one covariable.
#[derive(Debug, Clone, PartialEq)]
pub struct NeVerdict {
    /// Zeros of `det(z + A_red(xi))`, larger magnitude first.
    pub roots: [C64; 2],
    pub pass: bool,
    pub detail: Option<String>,
}

/// Roots of `z^2 + t z + d` with the cancellation-free formula.
pub fn quadratic_roots(t: f64, d: f64) -> [C64; 2] {
    let disc = t * t - 4.0 * d;
    if disc >= 0.0 {
        let q = -0.5 * (t + t.signum() * disc.sqrt());
        if q == 0.0 {
            return [r(0.0), r(0.0)];
        }
        [r(q), r(d / q)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [C64::new(-0.5 * t, im), C64::new(-0.5 * t, -im)]
    }
}

pub fn check_normal_ellipticity(fc: &FrozenCoefficients, xi: &[f64]) -> Result<NeVerdict, SymbolError> {
    let s = reduced_symbol(fc, xi)?;
    let a = s.matrix;
    let tr = (a[(0, 0)] + a[(1, 1)]).re;
    let det = (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).re;
    let roots = quadratic_roots(tr, det);
    let detail = if !tr.is_finite() || !det.is_finite() {
        Some("non-finite symbol".to_string())
    } else if roots[0].im != 0.0 {
        Some(format!("complex roots {} and {}", roots[0], roots[1]))
    } else {
        roots
            .iter()
            .find(|z| !(z.re < 0.0))
            .map(|z| format!("root {} is not negative", z.re))
    };
    Ok(NeVerdict {
        roots,
        pass: detail.is_none(),
        detail,
    })
}

/// Result of the Lopatinskii-Shapiro check at one `(xi, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsVerdict {
    pub m: CMat2,
    pub m_eigs: [C64; 2],
    pub b: Option<CMat2>,
    pub b_eigs: Option<[C64; 2]>,
    pub min_re_eig_b: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub method: Option<SqrtMethod>,
    pub pass: bool,
    pub detail: Option<String>,
}

/// True when `mu` counts as lying on `(-inf, 0]`.
pub fn on_closed_negative_axis(mu: C64) -> bool {
    mu.re <= 0.0 && mu.im.abs() <= 1e-12 * mu.re.abs()
}

/// Square-root part of the check, for a given `M = E_red^{-1}(z + A_red)`.
pub fn ls_verdict_from_m(m: &CMat2) -> LsVerdict {
    let m_eigs = linalg::eigenvalues2(m);
    let mut v = LsVerdict {
        m: *m,
        m_eigs,
        b: None,
        b_eigs: None,
        min_re_eig_b: f64::NAN,
        sigma_min: f64::NAN,
        sigma_max: f64::NAN,
        method: None,
        pass: false,
        detail: None,
    };
    if let Some(mu) = m_eigs.iter().find(|mu| on_closed_negative_axis(**mu)) {
        v.detail = Some(format!("M has eigenvalue {mu} on (-inf, 0]"));
        return v;
    }
    let (b, method) = match linalg::sqrtm2(m) {
        Ok(x) => x,
        Err(e) => {
            v.detail = Some(format!("square root failed: {e}"));
            return v;
        }
    };
    let b_eigs = linalg::eigenvalues2(&b);
    let (smax, smin) = linalg::singular_values2(&b);
    let residual = (b * b - m).norm() / m.norm();
    v.min_re_eig_b = b_eigs[0].re.min(b_eigs[1].re);
    v.sigma_max = smax;
    v.sigma_min = smin;
    v.b = Some(b);
    v.b_eigs = Some(b_eigs);
    v.method = Some(method);
    v.detail = if !(v.min_re_eig_b > 0.0) {
        Some(format!("B has eigenvalue with real part {:e}", v.min_re_eig_b))
    } else if !(smin > 1e-12 * smax) {
        Some(format!("B is singular (sigma_min={smin:e}, sigma_max={smax:e})"))
    } else if !(residual <= 1e-8) {
        Some(format!("B^2 misses M by {residual:e}"))
    } else {
        None
    };
    v.pass = v.detail.is_none();
    v
}

/// Checks that `-E w'' + (z + A_red(xi)) w = 0, w'(0) = 0` has only the
/// trivial decaying solution. `nu` is the unit normal; `xi` must be tangent.
pub fn check_ls(fc: &FrozenCoefficients, xi: &[f64], nu: &[f64], z: C64) -> Result<LsVerdict, SymbolError> {
    if nu.len() != fc.n || xi.len() != fc.n {
        return Err(SymbolError::InvalidInput("xi and nu must have n components".into()));
    }
    let nn: f64 = nu.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (nn - 1.0).abs() > TOL {
        return Err(SymbolError::InvalidInput(format!("|nu| = {nn}")));
    }
    let xn: f64 = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = xi.iter().zip(nu).map(|(a, b)| a * b).sum();
    if dot.abs() > TOL * xn.max(1.0) {
        return Err(SymbolError::InvalidInput(format!("xi . nu = {dot:e}, xi must be tangent")));
    }
    let c_nu = (0..fc.n)
        .map(|j| (0..fc.n).map(|k| nu[k] * fc.grad_d0[(k, j)]).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt();
    if c_nu > TOL * fc.grad_d0.norm().max(1.0) {
        return Err(SymbolError::InvalidInput(format!("nu . grad d0 = {c_nu:e}, must vanish")));
    }
    if on_closed_negative_axis(z) && !(z.norm() == 0.0 && xn > 0.0) {
        return Err(SymbolError::BadSpectralParameter(z));
    }
    let l = fc.lambda0 / fc.gamma0;
    if !(fc.a0 != 0.0 && l != 0.0 && fc.a0.is_finite() && l.is_finite()) {
        return Err(SymbolError::SingularE { a0: fc.a0, l });
    }
    let a = if xn > 0.0 {
        reduced_symbol(fc, xi)?.matrix
    } else {
        CMat2::zeros()
    };
    let e = e_red(fc);
    let einv = e
        .try_inverse()
        .ok_or(SymbolError::SingularE { a0: fc.a0, l })?;
    let m = einv * (CMat2::identity() * z + a);
    Ok(ls_verdict_from_m(&m))
}

/// Sampling ranges of a symbol sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub samples: usize,
    pub dim: usize,
    pub seed: u64,
    pub theta: (f64, f64),
    pub tau_max: f64,
}

impl SweepSpec {
    pub fn new(samples: usize, dim: usize, seed: u64) -> Self {
        Self {
            samples,
            dim,
            seed,
            theta: (0.5, 2.0),
            tau_max: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sample_id: usize,
    pub theta0: f64,
    pub tau0: f64,
    pub xi: Vec<f64>,
    pub roots: [C64; 2],
    pub min_re_eig_b: f64,
    pub pass: bool,
    pub verdict: String,
}

/// Random frozen director data `(tau0, d0, grad d0)` with `grad d0 d0 = 0`.
pub fn sample_director<R: Rng>(rng: &mut R, n: usize, tau0: f64) -> (DVector<f64>, DMatrix<f64>) {
    let d0 = DVector::from_vec(rng::unit_vector(rng, n));
    let g = DMatrix::from_fn(n, n, |_, _| rng::normal(rng));
    let proj = DMatrix::identity(n, n) - &d0 * d0.transpose();
    let mut grad = g * proj;
    let norm = grad.norm();
    if tau0 == 0.0 || norm == 0.0 {
        grad.fill(0.0);
    } else {
        grad *= (2.0 * tau0).sqrt() / norm;
    }
    (d0, grad)
}

/// Unit vector `nu` with `nu . grad d0 = 0`.
pub fn boundary_normal<R: Rng>(rng: &mut R, grad_d0: &DMatrix<f64>) -> Vec<f64> {
    let n = grad_d0.nrows();
    if grad_d0.norm() == 0.0 {
        return rng::unit_vector(rng, n);
    }
    let eig = SymmetricEigen::new(grad_d0 * grad_d0.transpose());
    let k = eig.eigenvalues.imin();
    eig.eigenvectors.column(k).iter().copied().collect()
}

/// Random direction orthogonal to `nu`.
pub fn tangent_direction<R: Rng>(rng: &mut R, nu: &[f64]) -> Vec<f64> {
    loop {
        let v = rng::unit_vector(rng, nu.len());
        let p: f64 = v.iter().zip(nu).map(|(a, b)| a * b).sum();
        let t: Vec<f64> = v.iter().zip(nu).map(|(a, b)| a - p * b).collect();
        let n = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return t.into_iter().map(|x| x / n).collect();
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.gen_range(lo.log10()..=hi.log10()))
}

/// Draws `(theta0, tau0, d0, grad d0)` for one sample.
fn sample_point<R: Rng>(rng: &mut R, spec: &SweepSpec) -> (f64, f64, DVector<f64>, DMatrix<f64>) {
    let theta0 = rng.gen_range(spec.theta.0..=spec.theta.1);
    let tau0 = rng.gen_range(0.0..=spec.tau_max);
    let (d0, grad) = sample_director(rng, spec.dim, tau0);
    let tau0 = 0.5 * grad.norm_squared();
    (theta0, tau0, d0, grad)
}

fn freeze_for_sweep(
    m: &MaterialModel,
    theta0: f64,
    tau0: f64,
    grad: &DMatrix<f64>,
    d0: &DVector<f64>,
) -> (Option<FrozenCoefficients>, Option<String>) {
    match freeze(m, theta0, tau0, grad, d0) {
        Ok(fc) => (Some(fc), None),
        Err(e) => (freeze_unchecked(m, theta0, tau0, grad, d0).ok(), Some(e.to_string())),
    }
}

/// Normal-ellipticity sweep over random frozen data and covariables. A
/// regularity violation at the freeze point counts as a failure.
pub fn sweep_normal_ellipticity(m: &MaterialModel, spec: &SweepSpec) -> Vec<SweepRow> {
    (0..spec.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::sample_stream(spec.seed, streams::SYMBOL_NE, k as u64);
            let (theta0, tau0, d0, grad) = sample_point(&mut rng, spec);
            let mag = log_uniform(&mut rng, 1e-2, 1e2);
            let xi: Vec<f64> = rng::unit_vector(&mut rng, spec.dim).into_iter().map(|x| x * mag).collect();
            let (fc, freeze_err) = freeze_for_sweep(m, theta0, tau0, &grad, &d0);
            let ne = fc.as_ref().map(|fc| check_normal_ellipticity(fc, &xi));
            let (roots, mut failure) = match ne {
                Some(Ok(v)) => (v.roots, v.detail),
                Some(Err(e)) => ([r(f64::NAN); 2], Some(e.to_string())),
                None => ([r(f64::NAN); 2], None),
            };
            if let Some(e) = freeze_err {
                failure = Some(e);
            }
            SweepRow {
                sample_id: k,
                theta0,
                tau0,
                xi,
                roots,
                min_re_eig_b: f64::NAN,
                pass: failure.is_none(),
                verdict: failure.unwrap_or_else(|| "pass".into()),
            }
        })
        .collect()
}

/// Lopatinskii-Shapiro sweep: tangent covariables and `z = r e^{i phi}` with
/// `phi` in `[-pi/2, pi/2]` and `r` in `[1e-3, 1e3]`. Each row also carries
/// the normal-ellipticity roots at the same covariable.
pub fn sweep_ls(m: &MaterialModel, spec: &SweepSpec) -> Vec<SweepRow> {
    (0..spec.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::sample_stream(spec.seed, streams::SYMBOL_LS, k as u64);
            let (theta0, tau0, d0, grad) = sample_point(&mut rng, spec);
            let nu = boundary_normal(&mut rng, &grad);
            let mag = log_uniform(&mut rng, 1e-3, 1e3);
            let xi: Vec<f64> = tangent_direction(&mut rng, &nu).into_iter().map(|x| x * mag).collect();
            let z = C64::from_polar(log_uniform(&mut rng, 1e-3, 1e3), rng.gen_range(-PI / 2.0..=PI / 2.0));
            let (fc, freeze_err) = freeze_for_sweep(m, theta0, tau0, &grad, &d0);
            let mut roots = [r(f64::NAN); 2];
            let mut min_re = f64::NAN;
            let mut failure = freeze_err;
            if let Some(fc) = fc {
                match check_normal_ellipticity(&fc, &xi) {
                    Ok(v) => {
                        roots = v.roots;
                        if failure.is_none() {
                            failure = v.detail;
                        }
                    }
                    Err(e) => failure = failure.or(Some(e.to_string())),
                }
                match check_ls(&fc, &xi, &nu, z) {
                    Ok(v) => {
                        min_re = v.min_re_eig_b;
                        if failure.is_none() {
                            failure = v.detail;
                        }
                    }
                    Err(e) => failure = failure.or(Some(e.to_string())),
                }
            }
            SweepRow {
                sample_id: k,
                theta0,
                tau0,
                xi,
                roots,
                min_re_eig_b: min_re,
                pass: failure.is_none(),
                verdict: failure.unwrap_or_else(|| "pass".into()),
            }
        })
        .collect()
}

fn fmt_root(z: C64) -> String {
    if z.im == 0.0 {
        format!("{:.16e}", z.re)
    } else {
        format!("{:.16e}{:+.16e}i", z.re, z.im)
    }
}

pub fn sweep_csv(rows: &[SweepRow], dim: usize) -> String {
    let mut out = String::from("sample_id,theta0,tau0");
    for k in 1..=dim {
        out.push_str(&format!(",xi_{k}"));
    }
    out.push_str(",root1,root2,min_re_eig_B,verdict\n");
    for row in rows {
        out.push_str(&format!("{},{:.16e},{:.16e}", row.sample_id, row.theta0, row.tau0));
        for x in &row.xi {
            out.push_str(&format!(",{x:.16e}"));
        }
        let verdict = row.verdict.replace(['"', ','], ";");
        out.push_str(&format!(
            ",{},{},{:.16e},{}\n",
            fmt_root(row.roots[0]),
            fmt_root(row.roots[1]),
            row.min_re_eig_b,
            verdict
        ));
    }
    out
}

/// Largest grid size per axis for the dense Stokes eigensolve.
pub const STOKES_DENSE_LIMIT: usize = 64;

/// Smallest Dirichlet Stokes eigenvalue on a square of side `L` is this over `L^2`.
pub const STOKES_SQUARE_CONSTANT: f64 = 52.344691168;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    /// `alpha/(rho kappa)`, `lambda/gamma`, `mu/rho` at the equilibrium.
    pub theta_coeff: f64,
    pub d_coeff: f64,
    pub u_coeff: f64,
    /// First nonzero eigenvalue of the discrete Neumann Laplacian.
    pub neumann_eigenvalue: f64,
    /// Smallest eigenvalue of the discrete Dirichlet Stokes operator.
    pub stokes_eigenvalue: f64,
    pub theta_rate: f64,
    pub d_rate: f64,
    pub u_rate: f64,
    pub continuum_neumann: f64,
    /// Available on squares only.
    pub continuum_stokes: Option<f64>,
}

impl SpectrumTable {
    /// Slowest block and its rate.
    pub fn slowest(&self) -> (&'static str, f64) {
        [("theta", self.theta_rate), ("d", self.d_rate), ("u", self.u_rate)]
            .into_iter()
            .fold(("theta", f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    pub fn to_text(&self) -> String {
        let cs = self
            .continuum_stokes
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.10e}"));
        let (name, rate) = self.slowest();
        format!(
            "block  coefficient        discrete eigenvalue  rate\n\
             theta  {:.10e}  {:.10e}     {:.10e}\n\
             d      {:.10e}  {:.10e}     {:.10e}\n\
             u      {:.10e}  {:.10e}     {:.10e}\n\
             continuum neumann eigenvalue: {:.10e}\n\
             continuum stokes eigenvalue: {}\n\
             slowest: {} {:.10e}\n",
            self.theta_coeff,
            self.neumann_eigenvalue,
            self.theta_rate,
            self.d_coeff,
            self.neumann_eigenvalue,
            self.d_rate,
            self.u_coeff,
            self.stokes_eigenvalue,
            self.u_rate,
            self.continuum_neumann,
            cs,
            name,
            rate
        )
    }
}

/// First nonzero eigenvalue of the cell-centred Neumann Laplacian.
pub fn neumann_first_eigenvalue(g: &Grid) -> f64 {
    let ax = |n: usize, h: f64| 2.0 * (1.0 - (PI / n as f64).cos()) / (h * h);
    ax(g.nx, g.dx).min(ax(g.ny, g.dy))
}

/// Smallest eigenvalue of `C^T (2 G^T W G) C` relative to `C^T C`, with `C`
/// the streamfunction basis of discretely divergence-free velocities.
pub fn stokes_first_eigenvalue(g: &Grid) -> Result<f64, SymbolError> {
    if g.nx > STOKES_DENSE_LIMIT || g.ny > STOKES_DENSE_LIMIT {
        return Err(SymbolError::GridTooFine {
            nx: g.nx,
            ny: g.ny,
            limit: STOKES_DENSE_LIMIT,
        });
    }
    let ops = Operators::new(*g);
    let c = streamfunction_basis(g);
    let ct = c.transpose();
    let visc = ops.viscous(&vec![1.0; g.ncells()]);
    let k = ct.matmul(&visc.matmul(&c)).to_dense();
    let mass = ct.matmul(&c).to_dense();
    let chol = mass
        .cholesky()
        .ok_or_else(|| SymbolError::Eigen("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&k)
        .ok_or_else(|| SymbolError::Eigen("triangular solve failed".into()))?;
    let s = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| SymbolError::Eigen("triangular solve failed".into()))?;
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    Ok(eig.eigenvalues.min())
}

/// Decay rates of the linearization at the constant equilibrium `(theta*, d*)`.
pub fn equilibrium_spectrum(
    m: &MaterialModel,
    theta_star: f64,
    d_star: &[f64],
    g: &Grid,
) -> Result<SpectrumTable, SymbolError> {
    let n = d_star.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > TOL {
        return Err(SymbolError::InvalidInput(format!("|d*| = {n}")));
    }
    let rho = m.rho();
    let s = ThermoState::new(theta_star, 0.0, rho)?;
    let p = m.free_energy.partials(&s);
    let c = m.params.at_checked(theta_star, 0.0)?;
    let kappa = -theta_star * p.d_theta2;
    let lambda = rho * p.d_tau / theta_star;
    let conds = [
        ("mu_s>0", c.mu_s),
        ("alpha_0>0", c.alpha_0),
        ("alpha_0+alpha_1>0", c.alpha_0 + c.alpha_1),
        ("kappa>0", kappa),
        ("lambda>0", lambda),
        ("gamma>0", c.gamma),
    ];
    for (condition, value) in conds {
        if !(value > 0.0) {
            return Err(SymbolError::Regularity {
                condition,
                value,
                theta: theta_star,
                tau: 0.0,
            });
        }
    }
    let neumann = neumann_first_eigenvalue(g);
    let stokes = stokes_first_eigenvalue(g)?;
    let theta_coeff = c.alpha_0 / (rho * kappa);
    let d_coeff = lambda / c.gamma;
    let u_coeff = c.mu_s / rho;
    let lmax = g.lx.max(g.ly);
    Ok(SpectrumTable {
        theta_coeff,
        d_coeff,
        u_coeff,
        neumann_eigenvalue: neumann,
        stokes_eigenvalue: stokes,
        theta_rate: theta_coeff * neumann,
        d_rate: d_coeff * neumann,
        u_rate: u_coeff * stokes,
        continuum_neumann: (PI / lmax).powi(2),
        continuum_stokes: (g.lx == g.ly).then(|| STOKES_SQUARE_CONSTANT / (g.lx * g.lx)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cg, CgOptions};
    use crate::material::{FreeEnergy, ParameterSet};
    use approx::assert_relative_eq;

    fn model(fe: FreeEnergy) -> MaterialModel {
        MaterialModel::new(fe, ParameterSet::simplified(0.5, 1.0, 0.25, 1.0))
    }

    fn flat(n: usize) -> (DVector<f64>, DMatrix<f64>) {
        let mut d = DVector::zeros(n);
        d[0] = 1.0;
        (d, DMatrix::zeros(n, n))
    }

    #[test]
    fn ideal_linear_coefficients() {
        let m = model(FreeEnergy::ideal_linear(2.0, 0.5));
        let (d0, g) = flat(2);
        let fc = freeze(&m, 1.5, 0.0, &g, &d0).unwrap();
        // kappa = a, dtau_eta = -k / rho
        assert_relative_eq!(fc.a1, 1.5 * 0.25 / (0.25 * 2.0), max_relative = 1e-12);
        assert_relative_eq!(fc.a0, 1.0 / 2.0, max_relative = 1e-12);
        assert_relative_eq!(fc.b0 * fc.b1, fc.a1 / fc.gamma0, max_relative = 1e-12);
        let s = reduced_symbol(&fc, &[0.3, -0.4]).unwrap();
        assert_eq!(s.c_sq, 0.0);
        assert_eq!(s.matrix[(0, 1)], i(-fc.b0 * fc.lambda0 * 0.25));
        assert_eq!(s.matrix[(1, 0)], r(0.0));
    }

    #[test]
    fn freeze_rejects_bad_material() {
        let (d0, g) = flat(2);
        let cold = model(FreeEnergy::custom("cold", |_r, th, t| th * th + 0.5 * th * t));
        assert!(matches!(
            freeze(&cold, 1.0, 0.0, &g, &d0),
            Err(SymbolError::Regularity { condition: "kappa>0", .. })
        ));
        assert!(freeze(&model(FreeEnergy::ideal_linear(2.0, 0.5)), 1.0, 0.3, &g, &d0).is_err());
    }

    #[test]
    fn diagonal_roots() {
        // a0 = 1 and lambda/gamma = 2 with grad d0 = 0
        let m = MaterialModel::new(
            FreeEnergy::ideal_linear(1.0, 0.5),
            ParameterSet::simplified(0.5, 1.0, 0.25, 1.0),
        );
        let (d0, g) = flat(2);
        let fc = freeze(&m, 1.0, 0.0, &g, &d0).unwrap();
        let v = check_normal_ellipticity(&fc, &[0.6, 0.8]).unwrap();
        assert!(v.pass);
        let mut re = [v.roots[0].re, v.roots[1].re];
        re.sort_by(f64::total_cmp);
        assert_relative_eq!(re[0], -2.0, max_relative = 1e-14);
        assert_relative_eq!(re[1], -1.0, max_relative = 1e-14);
    }

    fn random_fc(m: &MaterialModel, seed: u64, n: usize) -> (FrozenCoefficients, Vec<f64>) {
        let mut rng = rng::stream(seed, 99);
        let spec = SweepSpec::new(1, n, seed);
        let (th, tau, d0, g) = sample_point(&mut rng, &spec);
        let xi = rng::unit_vector(&mut rng, n);
        (freeze(m, th, tau, &g, &d0).unwrap(), xi)
    }

    #[test]
    fn roots_match_companion_matrix_and_closed_form() {
        let m = model(FreeEnergy::coupled(2.0, 0.5, 0.3));
        for seed in 0..200 {
            let n = 2 + (seed as usize % 2);
            let (fc, xi) = random_fc(&m, seed, n);
            let s = reduced_symbol(&fc, &xi).unwrap();
            let a22 = (fc.lambda0 * s.xi_sq + fc.dtau_lambda0 * s.c_sq) / fc.gamma0;
            let det = fc.a0 * s.xi_sq * a22;
            let tr = fc.a0 * s.xi_sq + fc.a1 * s.c_sq + a22;
            let comp = nalgebra::Matrix2::new(0.0, -det, 1.0, -tr);
            let mut ev: Vec<f64> = comp.complex_eigenvalues().iter().map(|z| z.re).collect();
            ev.sort_by(f64::total_cmp);
            let v = check_normal_ellipticity(&fc, &xi).unwrap();
            assert!(v.pass, "{:?}", v.detail);
            let mut got = [v.roots[0].re, v.roots[1].re];
            got.sort_by(f64::total_cmp);
            assert_relative_eq!(got[0], ev[0], max_relative = 1e-9);
            assert_relative_eq!(got[1], ev[1], max_relative = 1e-9);
            let tr_m = (s.matrix[(0, 0)] + s.matrix[(1, 1)]).re;
            assert_relative_eq!(tr_m, tr, max_relative = 1e-13);
        }
    }

    #[test]
    fn homogeneity() {
        let m = model(FreeEnergy::quadratic_tau(2.0, 0.5));
        let (fc, xi) = random_fc(&m, 4, 3);
        let a = check_normal_ellipticity(&fc, &xi).unwrap().roots;
        let s = 3.7;
        let xs: Vec<f64> = xi.iter().map(|x| s * x).collect();
        let b = check_normal_ellipticity(&fc, &xs).unwrap().roots;
        for k in 0..2 {
            assert_relative_eq!(b[k].re, s * s * a[k].re, max_relative = 1e-12);
        }
        assert!(matches!(reduced_symbol(&fc, &[0.0; 3]), Err(SymbolError::ZeroCovariable)));
    }

    #[test]
    fn lambda_violation_is_reported() {
        // log_tau has lambda + 2 tau dtau_lambda < 0 for tau > 1
        let m = model(FreeEnergy::log_tau(2.0, 0.5));
        let d0 = DVector::from_vec(vec![1.0, 0.0]);
        let tau: f64 = 2.0;
        let g = DMatrix::from_row_slice(2, 2, &[0.0, (2.0 * tau).sqrt(), 0.0, 0.0]);
        assert!(matches!(
            freeze(&m, 1.0, tau, &g, &d0),
            Err(SymbolError::Regularity {
                condition: "lambda+2tau*dtau_lambda>0",
                ..
            })
        ));
        let fc = freeze_unchecked(&m, 1.0, tau, &g, &d0).unwrap();
        // xi along the singular direction of grad d0 maximises |c(xi)|
        let v = check_normal_ellipticity(&fc, &[1.0, 0.0]).unwrap();
        assert!(!v.pass);
        assert!(v.roots.iter().any(|z| z.re > 0.0));
    }

    #[test]
    fn e_red_matches_normal_shift() {
        let m = model(FreeEnergy::coupled(2.0, 0.5, 0.3));
        let mut rng = rng::stream(11, 5);
        let (d0, g) = sample_director(&mut rng, 3, 0.4);
        let fc = freeze(&m, 1.2, 0.4, &g, &d0).unwrap();
        let nu = boundary_normal(&mut rng, &g);
        let xi = tangent_direction(&mut rng, &nu);
        let w = 0.7;
        let shifted: Vec<f64> = xi.iter().zip(&nu).map(|(a, b)| a + w * b).collect();
        let diff = reduced_symbol(&fc, &shifted).unwrap().matrix - reduced_symbol(&fc, &xi).unwrap().matrix;
        assert!((diff - e_red(&fc) * r(w * w)).norm() < 1e-12);
    }

    #[test]
    fn ls_examples() {
        let m = model(FreeEnergy::ideal_linear(2.0, 0.5));
        let (d0, g) = flat(2);
        let fc = freeze(&m, 1.0, 0.0, &g, &d0).unwrap();
        let v = check_ls(&fc, &[0.0, 1.0], &[1.0, 0.0], r(1.0)).unwrap();
        assert!(v.pass, "{:?}", v.detail);
        let b = v.b.unwrap();
        assert!((b * b - v.m).norm() < 1e-12);
        assert_eq!(v.m[(1, 0)], r(0.0));

        let bad = CMat2::new(r(-2.0), r(1.0), r(0.0), r(3.0));
        let v = ls_verdict_from_m(&bad);
        assert!(!v.pass);
        assert!(v.detail.unwrap().contains("-2"));

        assert!(matches!(
            check_ls(&fc, &[0.0, 1.0], &[1.0, 0.0], r(-1.0)),
            Err(SymbolError::BadSpectralParameter(_))
        ));
        assert!(check_ls(&fc, &[1.0, 1.0], &[1.0, 0.0], r(1.0)).is_err());
        let mut sing = fc.clone();
        sing.a0 = 0.0;
        assert!(matches!(
            check_ls(&sing, &[0.0, 1.0], &[1.0, 0.0], r(1.0)),
            Err(SymbolError::SingularE { .. })
        ));
    }

    #[test]
    fn ls_sqrt_matches_eigendecomposition() {
        let m = model(FreeEnergy::coupled(2.0, 0.5, 0.3));
        let rows = sweep_ls(&m, &SweepSpec::new(100, 2, 8));
        assert!(rows.iter().all(|r| r.pass));
        for seed in 0..50 {
            let mut rng = rng::stream(seed, 7);
            let (d0, g) = sample_director(&mut rng, 2, 0.3);
            let fc = freeze(&m, 1.0, 0.3, &g, &d0).unwrap();
            let nu = boundary_normal(&mut rng, &g);
            let xi = tangent_direction(&mut rng, &nu);
            let z = C64::from_polar(1.0, rng.gen_range(-PI / 2.0..PI / 2.0));
            let v = check_ls(&fc, &xi, &nu, z).unwrap();
            // independent root from the general complex eigendecomposition
            let eig = nalgebra::Schur::new(v.m).eigenvalues().unwrap();
            let sum: C64 = eig.iter().map(|mu| mu.sqrt()).sum();
            let b = v.b.unwrap();
            assert!((b[(0, 0)] + b[(1, 1)] - sum).norm() < 1e-9 * sum.norm());
        }
    }

    #[test]
    fn sweeps_are_deterministic_and_sized() {
        let m = model(FreeEnergy::ideal_linear(2.0, 0.5));
        let spec = SweepSpec::new(64, 3, 5);
        let a = sweep_normal_ellipticity(&m, &spec);
        assert_eq!(a.len(), 64);
        assert!(a.iter().all(|r| r.pass));
        assert_eq!(sweep_csv(&a, 3), sweep_csv(&sweep_normal_ellipticity(&m, &spec), 3));
        let csv = sweep_csv(&sweep_ls(&m, &spec), 3);
        assert_eq!(csv.lines().count(), 65);
        assert!(csv.starts_with("sample_id,theta0,tau0,xi_1,xi_2,xi_3,root1,root2,min_re_eig_B,verdict"));
    }

    #[test]
    fn violating_sweep_fails() {
        let m = model(FreeEnergy::log_tau(2.0, 0.5));
        let mut spec = SweepSpec::new(200, 2, 1);
        spec.tau_max = 3.0;
        let rows = sweep_ls(&m, &spec);
        assert!(rows.iter().any(|r| !r.pass));
    }

    #[test]
    fn neumann_eigenvalue_closed_form() {
        let g = Grid::new(64, 4, PI, 0.2);
        let ops = Operators::new(g);
        let lap = ops.neg_laplacian(&vec![1.0; ops.faces.len()]).to_dense();
        let mut ev: Vec<f64> = SymmetricEigen::new(lap).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-10);
        assert_relative_eq!(ev[1], neumann_first_eigenvalue(&g), max_relative = 1e-10);
        assert_relative_eq!(ev[1], 2.0 * (1.0 - (PI / 64.0).cos()) / g.dx.powi(2), max_relative = 1e-10);
        let ones = vec![1.0; g.ncells()];
        let k = ops.neg_laplacian(&vec![1.0; ops.faces.len()]).mul_vec(&ones);
        assert!(k.iter().all(|&v| v.abs() <= 1e-12 / g.dy.powi(2)));
    }

    #[test]
    fn stokes_eigenvalue_matches_inverse_iteration() {
        let g = Grid::new(16, 16, PI, PI);
        let dense = stokes_first_eigenvalue(&g).unwrap();
        let ops = Operators::new(g);
        let c = streamfunction_basis(&g);
        let ct = c.transpose();
        let k = ct.matmul(&ops.viscous(&vec![1.0; g.ncells()]).matmul(&c));
        let mass = ct.matmul(&c);
        let mut x = vec![1.0; c.ncols];
        let mut rq = 0.0;
        for _ in 0..200 {
            let rhs = mass.mul_vec(&x);
            let mut y = vec![0.0; x.len()];
            cg(&k, &rhs, &mut y, CgOptions { rel_tol: 1e-13, max_iter: None }).unwrap();
            let ky = k.mul_vec(&y);
            let my = mass.mul_vec(&y);
            rq = linalg::dot(&y, &ky) / linalg::dot(&y, &my);
            let n = linalg::dot(&y, &my).sqrt();
            x = y.iter().map(|v| v / n).collect();
        }
        assert_relative_eq!(dense, rq, max_relative = 1e-8);
        // close to the continuum value on the pi x pi square
        assert!((dense - STOKES_SQUARE_CONSTANT / (PI * PI)).abs() < 0.1 * dense);
        assert!(matches!(
            stokes_first_eigenvalue(&Grid::new(65, 8, 1.0, 1.0)),
            Err(SymbolError::GridTooFine { .. })
        ));
    }

    #[test]
    fn spectrum_rates() {
        let m = model(FreeEnergy::ideal_linear(2.0, 0.5));
        let g = Grid::new(16, 16, PI, PI);
        let t = equilibrium_spectrum(&m, 1.0, &[1.0, 0.0], &g).unwrap();
        assert_eq!(t.continuum_neumann, 1.0);
        assert_relative_eq!(t.theta_coeff, 0.5, max_relative = 1e-12);
        assert_relative_eq!(t.d_coeff, 2.0, max_relative = 1e-12);
        assert_eq!(t.slowest().0, "theta");
        assert!(t.theta_rate > 0.0 && t.d_rate > 0.0 && t.u_rate > 0.0);
        assert!(t.to_text().contains("slowest: theta"));
    }
}
