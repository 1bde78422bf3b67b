//! Run configuration. TOML documents are walked key by key so that unknown
//! and missing keys are reported with their full path.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::value::Table;
use toml::Value;

use crate::material::{FreeEnergy, MaterialModel, ParameterRule, ParameterSet, SamplingDomain};
use crate::solver::grid::Grid;
use crate::solver::scenarios::{ScenarioKind, ScenarioSpec};
use crate::solver::StepConfig;
use crate::symbolcheck::SweepSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path} is not valid TOML: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("config key `{key}`: {message}")]
    Key { key: String, message: String },
}

fn key_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key: key.to_string(),
        message: message.into(),
    }
}

/// A table being consumed; keys that are never read are reported as unknown.
struct Section<'a> {
    path: String,
    table: &'a Table,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: &'a Table) -> Self {
        Self {
            path: path.to_string(),
            table,
            used: BTreeSet::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn raw(&mut self, k: &str) -> Option<&'a Value> {
        self.used.insert(k.to_string());
        self.table.get(k)
    }

    fn opt_f64(&mut self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Float(x)) if x.is_finite() => Ok(Some(*x)),
            Some(Value::Integer(x)) => Ok(Some(*x as f64)),
            Some(other) => Err(key_err(&self.key(k), format!("expected a finite number, got {other}"))),
        }
    }

    fn f64(&mut self, k: &str) -> Result<f64, ConfigError> {
        self.opt_f64(k)?
            .ok_or_else(|| key_err(&self.key(k), "missing required key"))
    }

    fn positive(&mut self, k: &str) -> Result<f64, ConfigError> {
        let v = self.f64(k)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(key_err(&self.key(k), format!("must be positive, got {v}")))
        }
    }

    fn opt_int(&mut self, k: &str) -> Result<Option<i64>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Integer(x)) => Ok(Some(*x)),
            Some(other) => Err(key_err(&self.key(k), format!("expected an integer, got {other}"))),
        }
    }

    fn opt_usize(&mut self, k: &str) -> Result<Option<usize>, ConfigError> {
        match self.opt_int(k)? {
            None => Ok(None),
            Some(x) if x >= 0 => Ok(Some(x as usize)),
            Some(x) => Err(key_err(&self.key(k), format!("must be non-negative, got {x}"))),
        }
    }

    fn usize(&mut self, k: &str) -> Result<usize, ConfigError> {
        self.opt_usize(k)?
            .ok_or_else(|| key_err(&self.key(k), "missing required key"))
    }

    fn opt_str(&mut self, k: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(other) => Err(key_err(&self.key(k), format!("expected a string, got {other}"))),
        }
    }

    fn str(&mut self, k: &str) -> Result<&'a str, ConfigError> {
        self.opt_str(k)?
            .ok_or_else(|| key_err(&self.key(k), "missing required key"))
    }

    fn opt_bool(&mut self, k: &str) -> Result<Option<bool>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(key_err(&self.key(k), format!("expected true or false, got {other}"))),
        }
    }

    fn opt_table(&mut self, k: &str) -> Result<Option<Section<'a>>, ConfigError> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section::new(&self.key(k), t))),
            Some(other) => Err(key_err(&self.key(k), format!("expected a table, got {other}"))),
        }
    }

    fn table(&mut self, k: &str) -> Result<Section<'a>, ConfigError> {
        self.opt_table(k)?
            .ok_or_else(|| key_err(&self.key(k), "missing required section"))
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(key_err(&self.key(k), "unknown key")),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Snapshot cadence in steps; `None` disables snapshots.
    pub snapshot_every: Option<usize>,
}

/// Sampling ranges for `analyze-symbol`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolConfig {
    pub samples: usize,
    pub dim: usize,
    pub theta: (f64, f64),
    pub tau_max: f64,
}

impl SymbolConfig {
    pub fn sweep(&self, seed: u64) -> SweepSpec {
        SweepSpec {
            samples: self.samples,
            dim: self.dim,
            seed,
            theta: self.theta,
            tau_max: self.tau_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: PathBuf,
    pub material: MaterialModel,
    pub grid: Grid,
    pub step: StepConfig,
    pub scenario: ScenarioSpec,
    pub output: OutputConfig,
    pub check: SamplingDomain,
    pub symbol: SymbolConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parses `text`; relative output directories are resolved against `base`.
    pub fn parse(text: &str, source: &Path, base: &Path) -> Result<Self, ConfigError> {
        let doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax {
            path: source.to_path_buf(),
            message: e.message().to_string(),
        })?;
        let mut root = Section::new("", &doc);

        let material = parse_material(root.table("material")?)?;

        let mut g = root.table("grid")?;
        let nx = g.usize("nx")?;
        let ny = g.usize("ny")?;
        for (k, n) in [("nx", nx), ("ny", ny)] {
            if n < 2 {
                return Err(key_err(&g.key(k), format!("need at least 2 cells, got {n}")));
            }
        }
        let grid = Grid::new(nx, ny, g.positive("lx")?, g.positive("ly")?);
        g.finish()?;

        let mut t = root.table("time")?;
        let defaults = StepConfig::default();
        let mut step = StepConfig {
            dt: t.positive("dt")?,
            t_end: t.f64("t_end")?,
            cfl_safety: t.opt_f64("cfl_safety")?.unwrap_or(defaults.cfl_safety),
            output_every: t.opt_usize("output_every")?.unwrap_or(defaults.output_every),
            ..defaults
        };
        if !(step.t_end >= 0.0) {
            return Err(key_err("time.t_end", "must be non-negative"));
        }
        if !(step.cfl_safety > 0.0 && step.cfl_safety <= 1.0) {
            return Err(key_err("time.cfl_safety", "must lie in (0, 1]"));
        }
        if step.output_every == 0 {
            return Err(key_err("time.output_every", "must be at least 1"));
        }
        t.finish()?;

        step.isothermal = match root.opt_str("mode")?.unwrap_or("nonisothermal") {
            "nonisothermal" => false,
            "isothermal" => true,
            other => {
                return Err(key_err(
                    "mode",
                    format!("expected \"nonisothermal\" or \"isothermal\", got \"{other}\""),
                ))
            }
        };

        if let Some(mut tg) = root.opt_table("toggles")? {
            if let Some(b) = tg.opt_bool("renormalize_director")? {
                step.renormalize_director = b;
            }
            if let Some(f) = tg.opt_f64("theta_floor")? {
                if !(f > 0.0) {
                    return Err(key_err("toggles.theta_floor", "must be positive"));
                }
                step.theta_floor = f;
            }
            tg.finish()?;
        }

        let mut s = root.table("scenario")?;
        let name = s.str("name")?;
        let kind = ScenarioKind::parse(name).map_err(|_| {
            key_err(
                "scenario.name",
                format!(
                    "unknown scenario \"{name}\" (expected equilibrium_perturbation, taylor_green_director or random_smooth)"
                ),
            )
        })?;
        let amplitude = s.f64("amplitude")?;
        if amplitude < 0.0 {
            return Err(key_err("scenario.amplitude", "must be non-negative"));
        }
        let seed = s
            .opt_int("seed")?
            .ok_or_else(|| key_err("scenario.seed", "missing required key"))?;
        if seed < 0 {
            return Err(key_err("scenario.seed", "must be non-negative"));
        }
        let mut scenario = ScenarioSpec::new(kind, amplitude, seed as u64);
        if let Some(th) = s.opt_f64("theta_ref")? {
            if !(th > 0.0) {
                return Err(key_err("scenario.theta_ref", "must be positive"));
            }
            scenario.theta_ref = th;
        }
        if let Some(phi) = s.opt_f64("phi_ref")? {
            scenario.phi_ref = phi;
        }
        s.finish()?;

        let mut o = root.table("output")?;
        let dir = PathBuf::from(o.str("directory")?);
        let directory = if dir.is_absolute() { dir } else { base.join(dir) };
        let snapshot_every = match o.opt_usize("snapshot_every")? {
            None | Some(0) => None,
            Some(n) => Some(n),
        };
        o.finish()?;

        let mut check = SamplingDomain::default();
        if let Some(mut c) = root.opt_table("check")? {
            let lo = c.opt_f64("theta_min")?.unwrap_or(check.theta.0);
            let hi = c.opt_f64("theta_max")?.unwrap_or(check.theta.1);
            check.theta = (lo, hi);
            let lo = c.opt_f64("tau_min")?.unwrap_or(check.tau.0);
            let hi = c.opt_f64("tau_max")?.unwrap_or(check.tau.1);
            check.tau = (lo, hi);
            match (c.opt_f64("rho_min")?, c.opt_f64("rho_max")?) {
                (Some(a), Some(b)) => check.rho = Some((a, b)),
                (None, None) => {}
                _ => return Err(key_err("check.rho_max", "rho_min and rho_max must be given together")),
            }
            check.samples = c.opt_usize("samples")?.unwrap_or(check.samples);
            check.offset = c.opt_usize("offset")?.unwrap_or(0) as u64;
            c.finish()?;
        }

        let mut symbol = SymbolConfig {
            samples: 10_000,
            dim: 2,
            theta: (0.5, 2.0),
            tau_max: 0.5,
        };
        if let Some(mut c) = root.opt_table("symbol")? {
            symbol.samples = c.opt_usize("samples")?.unwrap_or(symbol.samples);
            symbol.dim = c.opt_usize("dim")?.unwrap_or(symbol.dim);
            if symbol.dim != 2 && symbol.dim != 3 {
                return Err(key_err("symbol.dim", "must be 2 or 3"));
            }
            let lo = c.opt_f64("theta_min")?.unwrap_or(symbol.theta.0);
            let hi = c.opt_f64("theta_max")?.unwrap_or(symbol.theta.1);
            if !(lo > 0.0 && hi >= lo) {
                return Err(key_err("symbol.theta_max", "need 0 < theta_min <= theta_max"));
            }
            symbol.theta = (lo, hi);
            symbol.tau_max = c.opt_f64("tau_max")?.unwrap_or(symbol.tau_max);
            if !(symbol.tau_max >= 0.0) {
                return Err(key_err("symbol.tau_max", "must be non-negative"));
            }
            c.finish()?;
        }
        root.finish()?;

        Ok(Self {
            source: source.to_path_buf(),
            material,
            grid,
            step,
            scenario,
            output: OutputConfig {
                directory,
                snapshot_every,
            },
            check,
            symbol,
        })
    }
}

fn parse_rule(sec: &mut Section<'_>, k: &str) -> Result<Option<ParameterRule>, ConfigError> {
    let key = sec.key(k);
    match sec.raw(k) {
        None => Ok(None),
        Some(Value::Float(x)) if x.is_finite() => Ok(Some(ParameterRule::Const(*x))),
        Some(Value::Integer(x)) => Ok(Some(ParameterRule::Const(*x as f64))),
        Some(Value::Table(t)) => {
            let mut r = Section::new(&key, t);
            let rule = match r.str("rule")? {
                "const" => ParameterRule::Const(r.f64("value")?),
                "linear" => ParameterRule::Linear {
                    c0: r.f64("c0")?,
                    c_theta: r.opt_f64("c_theta")?.unwrap_or(0.0),
                    c_tau: r.opt_f64("c_tau")?.unwrap_or(0.0),
                },
                "arrhenius" => ParameterRule::Arrhenius {
                    c: r.f64("c")?,
                    e: r.f64("e")?,
                },
                "power" => ParameterRule::Power {
                    c: r.f64("c")?,
                    p: r.f64("p")?,
                    q: r.opt_f64("q")?.unwrap_or(0.0),
                },
                other => {
                    return Err(key_err(
                        &format!("{key}.rule"),
                        format!("unknown rule \"{other}\" (expected const, linear, arrhenius or power)"),
                    ))
                }
            };
            r.finish()?;
            Ok(Some(rule))
        }
        Some(other) => Err(key_err(&key, format!("expected a number or a rule table, got {other}"))),
    }
}

fn parse_material(mut m: Section<'_>) -> Result<MaterialModel, ConfigError> {
    let name = m.str("free_energy")?;
    let mut fe = match name {
        "ideal_linear" => FreeEnergy::ideal_linear(m.f64("a")?, m.f64("k")?),
        "coupled" => FreeEnergy::coupled(m.f64("a")?, m.f64("k0")?, m.f64("k1")?),
        "quadratic_tau" => FreeEnergy::quadratic_tau(m.f64("a")?, m.f64("k")?),
        "log_tau" => FreeEnergy::log_tau(m.f64("a")?, m.f64("k")?),
        other => {
            return Err(key_err(
                "material.free_energy",
                format!("unknown free energy \"{other}\" (expected ideal_linear, coupled, quadratic_tau or log_tau)"),
            ))
        }
    };
    if let Some(c) = m.opt_f64("c_rho")? {
        fe = fe.with_c_rho(c);
    }
    let rho = m.positive("rho")?;
    let n_dim = m.opt_usize("n_dim")?.unwrap_or(2);
    if n_dim != 2 && n_dim != 3 {
        return Err(key_err("material.n_dim", "must be 2 or 3"));
    }

    let mut p = m.table("params")?;
    let mut params = ParameterSet::simplified(0.0, 0.0, 0.0, rho);
    params.n_dim = n_dim;
    let required: [(&str, &mut ParameterRule); 3] = [
        ("mu_s", &mut params.mu_s),
        ("alpha_0", &mut params.alpha_0),
        ("gamma", &mut params.gamma),
    ];
    for (k, slot) in required {
        *slot = parse_rule(&mut p, k)?.ok_or_else(|| key_err(&p.key(k), "missing required key"))?;
    }
    let optional: [(&str, &mut ParameterRule); 7] = [
        ("mu_b", &mut params.mu_b),
        ("mu_v", &mut params.mu_v),
        ("mu_d", &mut params.mu_d),
        ("mu_p", &mut params.mu_p),
        ("mu_l", &mut params.mu_l),
        ("mu_0", &mut params.mu_0),
        ("alpha_1", &mut params.alpha_1),
    ];
    for (k, slot) in optional {
        if let Some(r) = parse_rule(&mut p, k)? {
            *slot = r;
        }
    }
    p.finish()?;
    m.finish()?;
    Ok(MaterialModel::new(fe, params))
}
