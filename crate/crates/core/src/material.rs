//! Free energies, thermodynamic relations and the consistency audit of the
//! parameter functions.
//!
//! Every constitutive coefficient of the model is either derived from the free
//! energy `psi(rho, theta, tau)` (entropy, internal energy, heat capacity,
//! `lambda`, pressure) or given as a [`ParameterRule`] of `(theta, tau)`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("non-finite {quantity} at theta={theta}, tau={tau}, rho={rho}")]
    NonFinite {
        quantity: &'static str,
        theta: f64,
        tau: f64,
        rho: f64,
    },
    #[error("inadmissible state theta={theta}, tau={tau}, rho={rho}: need theta > 0, tau >= 0, rho > 0")]
    Inadmissible { theta: f64, tau: f64, rho: f64 },
    #[error("{quantity} = {value} must be positive at theta={theta}, tau={tau}")]
    NotPositive {
        quantity: &'static str,
        value: f64,
        theta: f64,
        tau: f64,
    },
    #[error("empty sampling domain: {0}")]
    EmptyDomain(String),
    #[error("parameter `{name}` is non-finite ({value}) at theta={theta}, tau={tau}")]
    NonFiniteParameter {
        name: &'static str,
        value: f64,
        theta: f64,
        tau: f64,
    },
    #[error("director must be a unit vector (|d| = {0})")]
    NotUnit(f64),
    #[error("unknown free energy `{0}`")]
    UnknownFreeEnergy(String),
}

/// Admissible thermodynamic point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoState {
    pub theta: f64,
    pub tau: f64,
    pub rho: f64,
}

impl ThermoState {
    pub fn new(theta: f64, tau: f64, rho: f64) -> Result<Self, MaterialError> {
        let s = Self { theta, tau, rho };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        if self.theta > 0.0 && self.tau >= 0.0 && self.rho > 0.0 {
            Ok(())
        } else {
            Err(MaterialError::Inadmissible {
                theta: self.theta,
                tau: self.tau,
                rho: self.rho,
            })
        }
    }
}

/// `psi` and its partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub psi: f64,
    pub d_theta: f64,
    pub d_tau: f64,
    pub d_rho: f64,
    pub d_theta2: f64,
    pub d_theta_tau: f64,
    pub d_tau2: f64,
    pub d_rho2: f64,
}

type PsiFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Closed forms shipped with the crate, plus a user closure differentiated
/// numerically.
///
/// All catalog forms share the thermal part `-a theta (ln theta - 1)` and an
/// optional barotropic part `c_rho ln rho`; they differ in the elastic part.
#[derive(Clone)]
pub enum FreeEnergyForm {
    /// `k theta tau / rho`
    IdealLinear { a: f64, k: f64, c_rho: f64 },
    /// `(k0 + k1 theta) tau / rho`
    Coupled { a: f64, k0: f64, k1: f64, c_rho: f64 },
    /// `k theta tau^2 / (2 rho)`
    QuadraticTau { a: f64, k: f64, c_rho: f64 },
    /// `k theta ln(1 + tau) / rho`
    LogTau { a: f64, k: f64, c_rho: f64 },
    /// Arbitrary `psi(rho, theta, tau)`; partials by finite differences.
    Custom(PsiFn),
}

impl fmt::Debug for FreeEnergyForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IdealLinear { a, k, c_rho } => {
                write!(f, "IdealLinear {{ a: {a}, k: {k}, c_rho: {c_rho} }}")
            }
            Self::Coupled { a, k0, k1, c_rho } => {
                write!(f, "Coupled {{ a: {a}, k0: {k0}, k1: {k1}, c_rho: {c_rho} }}")
            }
            Self::QuadraticTau { a, k, c_rho } => {
                write!(f, "QuadraticTau {{ a: {a}, k: {k}, c_rho: {c_rho} }}")
            }
            Self::LogTau { a, k, c_rho } => write!(f, "LogTau {{ a: {a}, k: {k}, c_rho: {c_rho} }}"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FreeEnergy {
    pub name: String,
    pub form: FreeEnergyForm,
    /// Relative step scale of the finite-difference fallback; the actual step
    /// per variable is `max(1, |x|) * fd_step^p` with `p` chosen per stencil.
    pub fd_step: f64,
}

/// Elastic factor `g(theta) h(tau) / rho` of the catalog forms.
struct Elastic {
    g: f64,
    g1: f64,
    h: f64,
    h1: f64,
    h2: f64,
}

impl FreeEnergy {
    pub fn ideal_linear(a: f64, k: f64) -> Self {
        Self::from_form("ideal_linear", FreeEnergyForm::IdealLinear { a, k, c_rho: 1.0 })
    }

    pub fn coupled(a: f64, k0: f64, k1: f64) -> Self {
        Self::from_form("coupled", FreeEnergyForm::Coupled { a, k0, k1, c_rho: 1.0 })
    }

    pub fn quadratic_tau(a: f64, k: f64) -> Self {
        Self::from_form("quadratic_tau", FreeEnergyForm::QuadraticTau { a, k, c_rho: 1.0 })
    }

    pub fn log_tau(a: f64, k: f64) -> Self {
        Self::from_form("log_tau", FreeEnergyForm::LogTau { a, k, c_rho: 1.0 })
    }

    pub fn custom<F>(name: &str, psi: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_form(name, FreeEnergyForm::Custom(Arc::new(psi)))
    }

    fn from_form(name: &str, form: FreeEnergyForm) -> Self {
        Self {
            name: name.to_string(),
            form,
            fd_step: f64::EPSILON,
        }
    }

    /// Replaces the barotropic coefficient `c_rho` of a catalog form.
    pub fn with_c_rho(mut self, value: f64) -> Self {
        match &mut self.form {
            FreeEnergyForm::IdealLinear { c_rho, .. }
            | FreeEnergyForm::Coupled { c_rho, .. }
            | FreeEnergyForm::QuadraticTau { c_rho, .. }
            | FreeEnergyForm::LogTau { c_rho, .. } => *c_rho = value,
            FreeEnergyForm::Custom(_) => {}
        }
        self
    }

    /// `psi(rho, theta, tau)`.
    pub fn eval(&self, s: &ThermoState) -> f64 {
        let (theta, tau, rho) = (s.theta, s.tau, s.rho);
        match &self.form {
            FreeEnergyForm::Custom(f) => f(rho, theta, tau),
            _ => {
                let (a, c_rho) = self.thermal_coeffs();
                let e = self.elastic(theta, tau);
                -a * theta * (theta.ln() - 1.0) + e.g * e.h / rho + c_rho * rho.ln()
            }
        }
    }

    fn thermal_coeffs(&self) -> (f64, f64) {
        match self.form {
            FreeEnergyForm::IdealLinear { a, c_rho, .. }
            | FreeEnergyForm::Coupled { a, c_rho, .. }
            | FreeEnergyForm::QuadraticTau { a, c_rho, .. }
            | FreeEnergyForm::LogTau { a, c_rho, .. } => (a, c_rho),
            FreeEnergyForm::Custom(_) => (0.0, 0.0),
        }
    }

    fn elastic(&self, theta: f64, tau: f64) -> Elastic {
        match self.form {
            FreeEnergyForm::IdealLinear { k, .. } => Elastic {
                g: k * theta,
                g1: k,
                h: tau,
                h1: 1.0,
                h2: 0.0,
            },
            FreeEnergyForm::Coupled { k0, k1, .. } => Elastic {
                g: k0 + k1 * theta,
                g1: k1,
                h: tau,
                h1: 1.0,
                h2: 0.0,
            },
            FreeEnergyForm::QuadraticTau { k, .. } => Elastic {
                g: k * theta,
                g1: k,
                h: 0.5 * tau * tau,
                h1: tau,
                h2: 1.0,
            },
            FreeEnergyForm::LogTau { k, .. } => Elastic {
                g: k * theta,
                g1: k,
                h: tau.ln_1p(),
                h1: 1.0 / (1.0 + tau),
                h2: -1.0 / ((1.0 + tau) * (1.0 + tau)),
            },
            FreeEnergyForm::Custom(_) => unreachable!("custom forms have no closed elastic part"),
        }
    }

    /// Analytic partials for catalog forms.
    fn analytic_partials(&self, s: &ThermoState) -> Option<Partials> {
        if matches!(self.form, FreeEnergyForm::Custom(_)) {
            return None;
        }
        let (theta, tau, rho) = (s.theta, s.tau, s.rho);
        let (a, c_rho) = self.thermal_coeffs();
        let e = self.elastic(theta, tau);
        let gh = e.g * e.h;
        Some(Partials {
            psi: self.eval(s),
            d_theta: -a * theta.ln() + e.g1 * e.h / rho,
            d_tau: e.g * e.h1 / rho,
            d_rho: -gh / (rho * rho) + c_rho / rho,
            d_theta2: -a / theta,
            d_theta_tau: e.g1 * e.h1 / rho,
            d_tau2: e.g * e.h2 / rho,
            d_rho2: 2.0 * gh / (rho * rho * rho) - c_rho / (rho * rho),
        })
    }

    /// Finite-difference partials, independent of the closed forms.
    ///
    /// First derivatives use centered differences with `h ~ eps^(1/3)`,
    /// pure second derivatives the five-point formula with `h ~ eps^(1/6)`
    /// and the mixed derivative the four-point cross stencil with
    /// `h ~ eps^(1/4)`, each scaled by `max(1, |x|)`.
    pub fn fd_partials(&self, s: &ThermoState) -> Partials {
        let f = |rho: f64, theta: f64, tau: f64| self.eval(&ThermoState { theta, tau, rho });
        let (theta, tau, rho) = (s.theta, s.tau, s.rho);
        let step = |x: f64, p: f64| x.abs().max(1.0) * self.fd_step.powf(p);

        let d1 = |g: &dyn Fn(f64) -> f64, x: f64| {
            let h = step(x, 1.0 / 3.0);
            (g(x + h) - g(x - h)) / (2.0 * h)
        };
        let d2 = |g: &dyn Fn(f64) -> f64, x: f64| {
            let h = step(x, 1.0 / 6.0);
            (-g(x + 2.0 * h) + 16.0 * g(x + h) - 30.0 * g(x) + 16.0 * g(x - h) - g(x - 2.0 * h))
                / (12.0 * h * h)
        };

        let in_theta = |x: f64| f(rho, x, tau);
        let in_tau = |x: f64| f(rho, theta, x);
        let in_rho = |x: f64| f(x, theta, tau);

        let ht = step(theta, 0.25);
        let hs = step(tau, 0.25);
        let d_theta_tau = (f(rho, theta + ht, tau + hs) - f(rho, theta + ht, tau - hs)
            - f(rho, theta - ht, tau + hs)
            + f(rho, theta - ht, tau - hs))
            / (4.0 * ht * hs);

        Partials {
            psi: f(rho, theta, tau),
            d_theta: d1(&in_theta, theta),
            d_tau: d1(&in_tau, tau),
            d_rho: d1(&in_rho, rho),
            d_theta2: d2(&in_theta, theta),
            d_theta_tau,
            d_tau2: d2(&in_tau, tau),
            d_rho2: d2(&in_rho, rho),
        }
    }

    /// Analytic partials where the form permits, finite differences otherwise.
    pub fn partials(&self, s: &ThermoState) -> Partials {
        self.analytic_partials(s).unwrap_or_else(|| self.fd_partials(s))
    }

    pub fn has_analytic_partials(&self) -> bool {
        !matches!(self.form, FreeEnergyForm::Custom(_))
    }
}

fn finite(quantity: &'static str, value: f64, s: &ThermoState) -> Result<f64, MaterialError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MaterialError::NonFinite {
            quantity,
            theta: s.theta,
            tau: s.tau,
            rho: s.rho,
        })
    }
}

/// Entropy `eta = -d psi / d theta`.
pub fn entropy(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    finite("entropy", -fe.partials(s).d_theta, s)
}

/// Internal energy `eps = psi + theta eta`.
pub fn internal_energy(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    let p = fe.partials(s);
    finite("internal energy", p.psi - s.theta * p.d_theta, s)
}

/// Heat capacity `kappa = -theta d^2 psi / d theta^2`; must be positive.
pub fn heat_capacity(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    let kappa = finite("heat capacity", -s.theta * fe.partials(s).d_theta2, s)?;
    positive("kappa", kappa, s)
}

/// `lambda = rho (d psi / d tau) / theta`; must be positive.
pub fn lambda_coeff(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    let lambda = finite("lambda", s.rho * fe.partials(s).d_tau / s.theta, s)?;
    positive("lambda", lambda, s)
}

/// `d lambda / d tau = rho (d^2 psi / d tau^2) / theta`.
pub fn dtau_lambda(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    finite("dtau_lambda", s.rho * fe.partials(s).d_tau2 / s.theta, s)
}

/// `d eta / d tau = -d^2 psi / (d theta d tau)`.
pub fn dtau_entropy(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    finite("dtau_eta", -fe.partials(s).d_theta_tau, s)
}

/// `d eps / d tau = d psi / d tau - theta d^2 psi / (d theta d tau)`.
pub fn dtau_internal_energy(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    let p = fe.partials(s);
    finite("dtau_eps", p.d_tau - s.theta * p.d_theta_tau, s)
}

/// Maxwell pressure `pi = rho^2 d psi / d rho`.
pub fn pressure(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    finite("pressure", s.rho * s.rho * fe.partials(s).d_rho, s)
}

/// `d pi / d rho = 2 rho psi_rho + rho^2 psi_rho_rho`.
pub fn drho_pressure(fe: &FreeEnergy, s: &ThermoState) -> Result<f64, MaterialError> {
    s.validate()?;
    let p = fe.partials(s);
    finite(
        "drho_pi",
        2.0 * s.rho * p.d_rho + s.rho * s.rho * p.d_rho2,
        s,
    )
}

fn positive(quantity: &'static str, value: f64, s: &ThermoState) -> Result<f64, MaterialError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(MaterialError::NotPositive {
            quantity,
            value,
            theta: s.theta,
            tau: s.tau,
        })
    }
}

/// Oseen-Frank elastic energy density for a 3D director.
///
/// `grad_d[i][j]` is `d_i d_j`, the derivative of component `j` along axis `i`.
pub fn oseen_frank_density(
    d: [f64; 3],
    grad_d: [[f64; 3]; 3],
    k: [f64; 4],
) -> Result<f64, MaterialError> {
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(MaterialError::NotUnit(norm));
    }
    let g = grad_d;
    let div = g[0][0] + g[1][1] + g[2][2];
    let curl = [g[1][2] - g[2][1], g[2][0] - g[0][2], g[0][1] - g[1][0]];
    let d_cross_curl = [
        d[1] * curl[2] - d[2] * curl[1],
        d[2] * curl[0] - d[0] * curl[2],
        d[0] * curl[1] - d[1] * curl[0],
    ];
    let twist = d[0] * curl[0] + d[1] * curl[1] + d[2] * curl[2];
    let mut tr_sq = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, gij) in row.iter().enumerate() {
            tr_sq += gij * g[j][i];
        }
    }
    let bend: f64 = d_cross_curl.iter().map(|c| c * c).sum();
    Ok(k[0] * div * div + k[1] * bend + k[2] * twist * twist + (k[1] + k[3]) * (tr_sq - div * div))
}

/// Scalar parameter function of `(theta, tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParameterRule {
    Const(f64),
    /// `c0 + c_theta theta + c_tau tau`
    Linear { c0: f64, c_theta: f64, c_tau: f64 },
    /// `c exp(e / theta)`
    Arrhenius { c: f64, e: f64 },
    /// `c theta^p (1 + tau)^q`
    Power { c: f64, p: f64, q: f64 },
}

impl ParameterRule {
    pub fn eval(&self, theta: f64, tau: f64) -> f64 {
        match *self {
            Self::Const(c) => c,
            Self::Linear { c0, c_theta, c_tau } => c0 + c_theta * theta + c_tau * tau,
            Self::Arrhenius { c, e } => c * (e / theta).exp(),
            Self::Power { c, p, q } => c * theta.powf(p) * (1.0 + tau).powf(q),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self, Self::Const(c) if c == 0.0)
    }
}

impl From<f64> for ParameterRule {
    fn from(c: f64) -> Self {
        Self::Const(c)
    }
}

/// Point values of every parameter function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub mu_s: f64,
    pub mu_b: f64,
    pub mu_v: f64,
    pub mu_d: f64,
    pub mu_p: f64,
    pub mu_l: f64,
    pub mu_0: f64,
    pub alpha_0: f64,
    pub alpha_1: f64,
    pub gamma: f64,
}

impl Coefficients {
    fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("mu_s", self.mu_s),
            ("mu_b", self.mu_b),
            ("mu_V", self.mu_v),
            ("mu_D", self.mu_d),
            ("mu_P", self.mu_p),
            ("mu_L", self.mu_l),
            ("mu_0", self.mu_0),
            ("alpha_0", self.alpha_0),
            ("alpha_1", self.alpha_1),
            ("gamma", self.gamma),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub mu_s: ParameterRule,
    pub mu_b: ParameterRule,
    pub mu_v: ParameterRule,
    pub mu_d: ParameterRule,
    pub mu_p: ParameterRule,
    pub mu_l: ParameterRule,
    pub mu_0: ParameterRule,
    pub alpha_0: ParameterRule,
    pub alpha_1: ParameterRule,
    pub gamma: ParameterRule,
    pub rho: f64,
    pub n_dim: usize,
}

impl ParameterSet {
    /// Simplified-model parameters: every Leslie coefficient and `alpha_1` zero.
    pub fn simplified(mu: f64, alpha: f64, gamma: f64, rho: f64) -> Self {
        Self {
            mu_s: mu.into(),
            mu_b: 0.0.into(),
            mu_v: 0.0.into(),
            mu_d: 0.0.into(),
            mu_p: 0.0.into(),
            mu_l: 0.0.into(),
            mu_0: 0.0.into(),
            alpha_0: alpha.into(),
            alpha_1: 0.0.into(),
            gamma: gamma.into(),
            rho,
            n_dim: 2,
        }
    }

    pub fn at(&self, theta: f64, tau: f64) -> Coefficients {
        Coefficients {
            mu_s: self.mu_s.eval(theta, tau),
            mu_b: self.mu_b.eval(theta, tau),
            mu_v: self.mu_v.eval(theta, tau),
            mu_d: self.mu_d.eval(theta, tau),
            mu_p: self.mu_p.eval(theta, tau),
            mu_l: self.mu_l.eval(theta, tau),
            mu_0: self.mu_0.eval(theta, tau),
            alpha_0: self.alpha_0.eval(theta, tau),
            alpha_1: self.alpha_1.eval(theta, tau),
            gamma: self.gamma.eval(theta, tau),
        }
    }

    /// Like [`ParameterSet::at`] but rejects non-finite values.
    pub fn at_checked(&self, theta: f64, tau: f64) -> Result<Coefficients, MaterialError> {
        let c = self.at(theta, tau);
        for (name, value) in c.named() {
            if !value.is_finite() {
                return Err(MaterialError::NonFiniteParameter {
                    name,
                    value,
                    theta,
                    tau,
                });
            }
        }
        Ok(c)
    }

    /// Names of the Leslie/anisotropic-conduction parameters that are not
    /// identically zero.
    pub fn nonzero_leslie(&self) -> Vec<&'static str> {
        [
            ("mu_V", &self.mu_v),
            ("mu_D", &self.mu_d),
            ("mu_P", &self.mu_p),
            ("mu_L", &self.mu_l),
            ("mu_0", &self.mu_0),
            ("alpha_1", &self.alpha_1),
        ]
        .into_iter()
        .filter(|(_, r)| !r.is_zero())
        .map(|(n, _)| n)
        .collect()
    }
}

/// Free energy together with its parameter functions.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub free_energy: FreeEnergy,
    pub params: ParameterSet,
}

impl MaterialModel {
    pub fn new(free_energy: FreeEnergy, params: ParameterSet) -> Self {
        Self {
            free_energy,
            params,
        }
    }

    pub fn rho(&self) -> f64 {
        self.params.rho
    }

    pub fn state(&self, theta: f64, tau: f64) -> ThermoState {
        ThermoState {
            theta,
            tau,
            rho: self.params.rho,
        }
    }
}

/// Which constraint family an inequality belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InequalitySet {
    /// Non-strict thermodynamic consistency (plus `gamma > 0`).
    Consistency,
    /// Sharper algebraic conditions replacing `mu_0, mu_L >= 0`.
    Refined,
    /// Strict stability conditions.
    Stability,
    /// Extra positivity needed for well-posedness of the director equation.
    Regularity,
}

impl InequalitySet {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Consistency => "consistency",
            Self::Refined => "refined",
            Self::Stability => "stability",
            Self::Regularity => "regularity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCheck {
    pub id: &'static str,
    pub set: InequalitySet,
    pub strict: bool,
    pub min_slack: f64,
    pub arg_min_theta: f64,
    pub arg_min_tau: f64,
    pub arg_min_rho: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub checks: Vec<InequalityCheck>,
    /// Least-squares constant in `mu_V = c0 gamma`.
    pub c0_estimate: f64,
    /// Largest `|mu_V - c0 gamma|` over the sample.
    pub c0_residual: f64,
    pub samples: usize,
}

impl ConsistencyReport {
    fn all_pass(&self, pred: impl Fn(&InequalityCheck) -> bool) -> bool {
        self.checks.iter().filter(|c| pred(c)).all(|c| c.pass)
    }

    /// Every non-strict consistency inequality holds.
    pub fn consistent(&self) -> bool {
        self.all_pass(|c| c.set == InequalitySet::Consistency)
    }

    /// Consistency with `mu_0, mu_L >= 0` replaced by the refined conditions.
    pub fn refined_consistent(&self) -> bool {
        self.all_pass(|c| match c.set {
            InequalitySet::Consistency => !matches!(c.id, "mu_0>=0" | "mu_L>=0"),
            InequalitySet::Refined => true,
            _ => false,
        })
    }

    /// Every strict stability inequality holds (including `gamma > 0`).
    pub fn stable(&self) -> bool {
        self.all_pass(|c| c.set == InequalitySet::Stability || c.id == "gamma>0")
    }

    pub fn regular(&self) -> bool {
        self.all_pass(|c| c.set == InequalitySet::Regularity)
    }

    pub fn failures(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn failures_in(&self, set: InequalitySet) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.pass && c.set == set)
            .map(|c| c.id)
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("inequality_id,min_slack,arg_min_theta,arg_min_tau,pass\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{}\n",
                c.id, c.min_slack, c.arg_min_theta, c.arg_min_tau, c.pass
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.id.len()).max().unwrap_or(10).max(13);
        let mut out = format!(
            "{:<width$}  {:<11}  {:>14}  {:>12}  {:>12}  verdict\n",
            "inequality", "set", "min slack", "theta", "tau"
        );
        for c in &self.checks {
            out.push_str(&format!(
                "{:<width$}  {:<11}  {:>14.6e}  {:>12.5e}  {:>12.5e}  {}\n",
                c.id,
                c.set.label(),
                c.min_slack,
                c.arg_min_theta,
                c.arg_min_tau,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "c0 = mu_V/gamma fit: {:.6e} (max residual {:.3e}) over {} samples\n",
            self.c0_estimate, self.c0_residual, self.samples
        ));
        out.push_str(&format!(
            "consistent: {}  refined: {}  stable: {}  regular: {}\n",
            self.consistent(),
            self.refined_consistent(),
            self.stable(),
            self.regular()
        ));
        out
    }
}

/// Box in `(theta, tau[, rho])` sampled with a Halton sequence plus corners.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDomain {
    pub theta: (f64, f64),
    pub tau: (f64, f64),
    /// Density range; required for the compressible refined inequality.
    pub rho: Option<(f64, f64)>,
    pub samples: usize,
    /// Index offset into the Halton sequence.
    pub offset: u64,
}

impl Default for SamplingDomain {
    fn default() -> Self {
        Self {
            theta: (0.5, 2.0),
            tau: (0.0, 10.0),
            rho: None,
            samples: 4096,
            offset: 0,
        }
    }
}

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

impl SamplingDomain {
    fn validate(&self) -> Result<(), MaterialError> {
        let bad = |msg: &str| Err(MaterialError::EmptyDomain(msg.to_string()));
        if self.samples == 0 {
            return bad("sample count is zero");
        }
        if !(self.theta.0 <= self.theta.1) || self.theta.0 <= 0.0 {
            return bad("theta range must satisfy 0 < min <= max");
        }
        if !(self.tau.0 <= self.tau.1) || self.tau.0 < 0.0 {
            return bad("tau range must satisfy 0 <= min <= max");
        }
        if let Some((lo, hi)) = self.rho {
            if !(lo <= hi) || lo <= 0.0 {
                return bad("rho range must satisfy 0 < min <= max");
            }
        }
        Ok(())
    }

    /// Deterministic sample points `(theta, tau, rho)`.
    pub fn points(&self, default_rho: f64) -> Vec<(f64, f64, f64)> {
        let lerp = |r: (f64, f64), t: f64| r.0 + (r.1 - r.0) * t;
        let rho_range = self.rho.unwrap_or((default_rho, default_rho));
        let mut pts = Vec::with_capacity(self.samples + 8);
        for &tt in &[0.0, 1.0] {
            for &ts in &[0.0, 1.0] {
                for &tr in &[0.0, 1.0] {
                    pts.push((
                        lerp(self.theta, tt),
                        lerp(self.tau, ts),
                        lerp(rho_range, tr),
                    ));
                }
            }
        }
        for i in 0..self.samples as u64 {
            let idx = self.offset + i + 1;
            pts.push((
                lerp(self.theta, halton(idx, 2)),
                lerp(self.tau, halton(idx, 3)),
                lerp(rho_range, halton(idx, 5)),
            ));
        }
        pts
    }
}

struct Tracker {
    id: &'static str,
    set: InequalitySet,
    strict: bool,
    min_slack: f64,
    arg: (f64, f64, f64),
    pass: bool,
}

impl Tracker {
    fn new(id: &'static str, set: InequalitySet, strict: bool) -> Self {
        Self {
            id,
            set,
            strict,
            min_slack: f64::INFINITY,
            arg: (f64::NAN, f64::NAN, f64::NAN),
            pass: true,
        }
    }

    fn record(&mut self, slack: f64, scale: f64, at: (f64, f64, f64)) {
        let ok = if self.strict {
            slack > 1e-12 * scale
        } else {
            slack >= 0.0
        };
        if !ok || slack.is_nan() {
            self.pass = false;
        }
        if slack < self.min_slack || self.min_slack.is_infinite() && self.arg.0.is_nan() {
            self.min_slack = slack;
            self.arg = at;
        }
    }

    fn finish(self) -> InequalityCheck {
        InequalityCheck {
            id: self.id,
            set: self.set,
            strict: self.strict,
            min_slack: self.min_slack,
            arg_min_theta: self.arg.0,
            arg_min_tau: self.arg.1,
            arg_min_rho: self.arg.2,
            pass: self.pass,
        }
    }
}

/// Evaluates every consistency, refined, stability and regularity inequality
/// on the sampled domain.
pub fn check_consistency(
    fe: &FreeEnergy,
    p: &ParameterSet,
    domain: &SamplingDomain,
) -> Result<ConsistencyReport, MaterialError> {
    use InequalitySet::*;
    domain.validate()?;
    let n = p.n_dim as f64;
    let compressible = domain.rho.is_some();

    let mut t: Vec<Tracker> = vec![
        Tracker::new("mu_s>=0", Consistency, false),
        Tracker::new("2mu_s+n*mu_b>=0", Consistency, false),
        Tracker::new("alpha_0>=0", Consistency, false),
        Tracker::new("alpha_0+alpha_1>=0", Consistency, false),
        Tracker::new("mu_0>=0", Consistency, false),
        Tracker::new("mu_L>=0", Consistency, false),
        Tracker::new("gamma>0", Consistency, true),
        Tracker::new("2mu_s+mu_L>=0", Refined, false),
        Tracker::new("2mu_s+mu_0>=0", Refined, false),
        Tracker::new("mu_s>0", Stability, true),
        Tracker::new("2mu_s+n*mu_b>0", Stability, true),
        Tracker::new("alpha_0>0", Stability, true),
        Tracker::new("alpha_0+alpha_1>0", Stability, true),
        Tracker::new("kappa>0", Stability, true),
        Tracker::new("lambda>0", Stability, true),
        Tracker::new("drho_pi>0", Stability, true),
        Tracker::new("lambda+2tau*dtau_lambda>0", Regularity, true),
    ];
    if compressible {
        t.push(Tracker::new(
            "mu_0^2/n^2<=(2mu_s+mu_0)(2mu_s/n+mu_b+mu_0/n^2)",
            Refined,
            false,
        ));
    }

    let mut sum_vg = 0.0;
    let mut sum_gg = 0.0;
    let points = domain.points(p.rho);
    let mut coeff_samples = Vec::with_capacity(points.len());

    for &(theta, tau, rho) in &points {
        let c = p.at_checked(theta, tau)?;
        let s = ThermoState { theta, tau, rho };
        let at = (theta, tau, rho);
        let part = fe.partials(&s);
        let kappa = finite("heat capacity", -theta * part.d_theta2, &s)?;
        let lambda = finite("lambda", rho * part.d_tau / theta, &s)?;
        let dlambda = finite("dtau_lambda", rho * part.d_tau2 / theta, &s)?;
        let dpi = finite("drho_pi", 2.0 * rho * part.d_rho + rho * rho * part.d_rho2, &s)?;

        let two_mu = 2.0 * c.mu_s;
        let values: Vec<(f64, f64)> = {
            let mut v = vec![
                (c.mu_s, c.mu_s.abs()),
                (two_mu + n * c.mu_b, two_mu.abs() + (n * c.mu_b).abs()),
                (c.alpha_0, c.alpha_0.abs()),
                (c.alpha_0 + c.alpha_1, c.alpha_0.abs() + c.alpha_1.abs()),
                (c.mu_0, c.mu_0.abs()),
                (c.mu_l, c.mu_l.abs()),
                (c.gamma, c.gamma.abs()),
                (two_mu + c.mu_l, two_mu.abs() + c.mu_l.abs()),
                (two_mu + c.mu_0, two_mu.abs() + c.mu_0.abs()),
                (c.mu_s, c.mu_s.abs()),
                (two_mu + n * c.mu_b, two_mu.abs() + (n * c.mu_b).abs()),
                (c.alpha_0, c.alpha_0.abs()),
                (c.alpha_0 + c.alpha_1, c.alpha_0.abs() + c.alpha_1.abs()),
                (kappa, kappa.abs()),
                (lambda, lambda.abs()),
                (dpi, dpi.abs()),
                (
                    lambda + 2.0 * tau * dlambda,
                    lambda.abs() + (2.0 * tau * dlambda).abs(),
                ),
            ];
            if compressible {
                let lhs = c.mu_0 * c.mu_0 / (n * n);
                let rhs = (two_mu + c.mu_0) * (two_mu / n + c.mu_b + c.mu_0 / (n * n));
                v.push((rhs - lhs, rhs.abs() + lhs.abs()));
            }
            v
        };
        for (tr, (slack, scale)) in t.iter_mut().zip(values) {
            tr.record(slack, scale, at);
        }
        sum_vg += c.mu_v * c.gamma;
        sum_gg += c.gamma * c.gamma;
        coeff_samples.push((c.mu_v, c.gamma));
    }

    let c0 = if sum_gg > 0.0 { sum_vg / sum_gg } else { 0.0 };
    let c0_residual = coeff_samples
        .iter()
        .map(|(v, g)| (v - c0 * g).abs())
        .fold(0.0, f64::max);

    Ok(ConsistencyReport {
        checks: t.into_iter().map(Tracker::finish).collect(),
        c0_estimate: c0,
        c0_residual,
        samples: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn st(theta: f64, tau: f64, rho: f64) -> ThermoState {
        ThermoState::new(theta, tau, rho).unwrap()
    }

    #[test]
    fn entropy_of_pure_thermal_part() {
        let fe = FreeEnergy::custom("thermal", |_r, th, _t| -2.0 * th * (th.ln() - 1.0));
        assert!(entropy(&fe, &st(1.0, 0.0, 1.0)).unwrap().abs() < 1e-9);
        let flat = FreeEnergy::custom("flat", |_r, _th, t| t * t);
        assert!(entropy(&flat, &st(1.7, 0.3, 1.0)).unwrap().abs() < 1e-9);
    }

    #[test]
    fn ideal_linear_entropy_matches_fd_oracle() {
        let fe = FreeEnergy::ideal_linear(2.0, 0.5);
        let s = st(2.0, 3.0, 1.0);
        let expected = 2.0 * 2f64.ln() - 1.5;
        assert_relative_eq!(entropy(&fe, &s).unwrap(), expected, max_relative = 1e-14);
        // independent numeric derivative of psi
        let h = 1e-5;
        let f = |th: f64| fe.eval(&st(th, 3.0, 1.0));
        let fd = -(f(2.0 + h) - f(2.0 - h)) / (2.0 * h);
        assert_relative_eq!(fd, expected, max_relative = 1e-8);
    }

    #[test]
    fn internal_energy_and_heat_capacity_of_ideal_linear() {
        let fe = FreeEnergy::ideal_linear(2.0, 0.5);
        for &th in &[0.3, 1.0, 4.0] {
            for &tau in &[0.0, 2.5] {
                let s = st(th, tau, 1.0);
                assert_relative_eq!(internal_energy(&fe, &s).unwrap(), 2.0 * th, max_relative = 1e-13);
                assert_relative_eq!(heat_capacity(&fe, &s).unwrap(), 2.0, max_relative = 1e-13);
                assert_relative_eq!(lambda_coeff(&fe, &s).unwrap(), 0.5, max_relative = 1e-13);
            }
        }
        assert_relative_eq!(internal_energy(&fe, &st(1.0, 0.0, 1.0)).unwrap(), 2.0);
    }

    #[test]
    fn lambda_rejects_tau_independent_energy() {
        let fe = FreeEnergy::ideal_linear(2.0, 0.0);
        assert!(matches!(
            lambda_coeff(&fe, &st(1.0, 1.0, 1.0)),
            Err(MaterialError::NotPositive { quantity: "lambda", .. })
        ));
    }

    #[test]
    fn quadratic_tau_fails_regularity_at_zero_tau() {
        let fe = FreeEnergy::quadratic_tau(2.0, 0.5);
        let s = st(1.3, 0.8, 1.0);
        // lambda = k tau, lambda + 2 tau dlambda = 3 k tau
        assert_relative_eq!(lambda_coeff(&fe, &s).unwrap(), 0.4, max_relative = 1e-13);
        let reg = lambda_coeff(&fe, &s).unwrap() + 2.0 * 0.8 * dtau_lambda(&fe, &s).unwrap();
        assert_relative_eq!(reg, 3.0 * 0.5 * 0.8, max_relative = 1e-13);
        assert!(lambda_coeff(&fe, &st(1.3, 0.0, 1.0)).is_err());

        let p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        let rep = check_consistency(&fe, &p, &SamplingDomain::default()).unwrap();
        assert!(!rep.get("lambda+2tau*dtau_lambda>0").unwrap().pass);
        assert!(!rep.get("lambda>0").unwrap().pass);
        assert_eq!(rep.get("lambda>0").unwrap().arg_min_tau, 0.0);
    }

    #[test]
    fn pressure_examples() {
        let log_rho = FreeEnergy::custom("log_rho", |r, _th, _t| r.ln());
        assert_relative_eq!(pressure(&log_rho, &st(1.0, 0.0, 2.0)).unwrap(), 2.0, max_relative = 1e-9);

        let flat = FreeEnergy::custom("flat", |_r, th, _t| -th * (th.ln() - 1.0));
        assert!(pressure(&flat, &st(1.0, 0.0, 1.5)).unwrap().abs() < 1e-12);
        assert!(drho_pressure(&flat, &st(1.0, 0.0, 1.5)).unwrap().abs() < 1e-12);

        let linear = FreeEnergy::custom("linear", |r, _th, _t| 0.7 * r);
        let s = st(1.0, 0.0, 1.5);
        assert_relative_eq!(pressure(&linear, &s).unwrap(), 0.7 * 1.5 * 1.5, max_relative = 1e-9);
        assert_relative_eq!(drho_pressure(&linear, &s).unwrap(), 2.0 * 0.7 * 1.5, max_relative = 1e-6);
    }

    #[test]
    fn catalog_pressure_uses_barotropic_term() {
        let fe = FreeEnergy::ideal_linear(2.0, 0.5);
        let s = st(1.5, 2.0, 1.2);
        // pi = c rho - k theta tau
        assert_relative_eq!(pressure(&fe, &s).unwrap(), 1.2 - 0.5 * 1.5 * 2.0, max_relative = 1e-13);
        assert_relative_eq!(drho_pressure(&fe, &s).unwrap(), 1.0, max_relative = 1e-12);
        let incompressible = FreeEnergy::ideal_linear(2.0, 0.5).with_c_rho(0.0);
        assert!(drho_pressure(&incompressible, &s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn oseen_frank_examples() {
        let k = [1.0, 2.0, 3.0, 0.5];
        assert_eq!(oseen_frank_density([1.0, 0.0, 0.0], [[0.0; 3]; 3], k).unwrap(), 0.0);
        // d = (cos x, sin x, 0) at x = 0: only d_x d_y = 1 is non-zero.
        let mut g = [[0.0; 3]; 3];
        g[0][1] = 1.0;
        let v = oseen_frank_density([1.0, 0.0, 0.0], g, k).unwrap();
        // curl = e_z, |d x curl|^2 = 1, tr(grad d ^2) = 0, div = 0
        assert_relative_eq!(v, k[1], max_relative = 1e-15);
        assert!(oseen_frank_density([1.0, 0.1, 0.0], g, k).is_err());
    }

    #[test]
    fn consistency_examples() {
        let fe = FreeEnergy::ideal_linear(2.0, 0.5);
        let mut p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        p.alpha_1 = ParameterRule::Const(-0.5);
        let dom = SamplingDomain {
            samples: 256,
            ..Default::default()
        };
        let rep = check_consistency(&fe, &p, &dom).unwrap();
        assert!(rep.consistent() && rep.stable(), "{}", rep.to_table());
        assert_eq!(rep.c0_estimate, 0.0);

        p.alpha_1 = ParameterRule::Const(-2.0);
        let rep = check_consistency(&fe, &p, &dom).unwrap();
        assert_eq!(rep.failures_in(InequalitySet::Consistency), vec!["alpha_0+alpha_1>=0"]);

        p.alpha_1 = ParameterRule::Const(0.0);
        p.mu_0 = ParameterRule::Const(-1.0);
        let rep = check_consistency(&fe, &p, &dom).unwrap();
        assert!(!rep.consistent());
        assert!(rep.get("2mu_s+mu_0>=0").unwrap().pass);
        assert!(rep.refined_consistent());
    }

    #[test]
    fn c0_fit_recovers_proportional_mu_v() {
        let fe = FreeEnergy::ideal_linear(2.0, 0.5);
        let mut p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        p.gamma = ParameterRule::Linear {
            c0: 0.5,
            c_theta: 0.25,
            c_tau: 0.1,
        };
        p.mu_v = ParameterRule::Linear {
            c0: 1.5,
            c_theta: 0.75,
            c_tau: 0.3,
        };
        let rep = check_consistency(&fe, &p, &SamplingDomain::default()).unwrap();
        assert_relative_eq!(rep.c0_estimate, 3.0, max_relative = 1e-12);
        assert!(rep.c0_residual < 1e-12);
    }

    #[test]
    fn empty_domain_and_non_finite_rules_are_errors() {
        let fe = FreeEnergy::ideal_linear(2.0, 0.5);
        let p = ParameterSet::simplified(1.0, 1.0, 1.0, 1.0);
        let dom = SamplingDomain {
            samples: 0,
            ..Default::default()
        };
        assert!(matches!(
            check_consistency(&fe, &p, &dom),
            Err(MaterialError::EmptyDomain(_))
        ));
        let mut bad = p.clone();
        bad.gamma = ParameterRule::Power {
            c: 1.0,
            p: -1.0,
            q: 0.0,
        };
        let dom = SamplingDomain {
            theta: (0.0, 1.0),
            ..Default::default()
        };
        assert!(check_consistency(&fe, &bad, &dom).is_err());
        let dom = SamplingDomain {
            theta: (1e-300, 1.0),
            ..Default::default()
        };
        bad.gamma = ParameterRule::Arrhenius { c: 1.0, e: 1.0 };
        assert!(matches!(
            check_consistency(&fe, &bad, &dom),
            Err(MaterialError::NonFiniteParameter { name: "gamma", .. })
        ));
    }

    #[test]
    fn report_is_deterministic() {
        let fe = FreeEnergy::coupled(2.0, 0.3, 0.4);
        let p = ParameterSet::simplified(0.5, 1.0, 0.25, 1.0);
        let dom = SamplingDomain {
            rho: Some((0.5, 2.0)),
            ..Default::default()
        };
        let a = check_consistency(&fe, &p, &dom).unwrap();
        let b = check_consistency(&fe, &p, &dom).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("inequality_id,min_slack,arg_min_theta,arg_min_tau,pass\n"));
    }

    #[test]
    fn halton_radical_inverse() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(3, 2), 0.75);
        assert_relative_eq!(halton(5, 3), 7.0 / 9.0, max_relative = 1e-15);
    }
}
