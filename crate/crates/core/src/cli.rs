//! Command-line entry points: `simulate`, `check`, `analyze-symbol` and
//! `report`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::{self, DecayFit, DiagError, DiagnosticsRecord};
use crate::material::{self, MaterialError};
use crate::solver::{self, Grid, RunSetup, SolverError, StateField};
use crate::symbolcheck::{self, SweepRow};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const ABORT: i32 = 2;
    pub const FAILURE: i32 = 3;
}

pub const LOCK_FILE: &str = ".nematoflow.lock";
pub const THREADS_ENV: &str = "NEMATOFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nematoflow", version, about = "Non-isothermal nematic flow simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation and write diagnostics, snapshots and a summary.
    Simulate { config: PathBuf },
    /// Audit the material's parameter inequalities.
    Check {
        config: PathBuf,
        /// Require the strict stability set as well.
        #[arg(long)]
        strict: bool,
    },
    /// Sweep the symbol checks and print predicted decay rates.
    AnalyzeSymbol {
        config: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        dim: Option<u8>,
    },
    /// Re-audit a run directory from its diagnostics CSV.
    Report { dir: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("output directory {0} is locked by another run (remove {LOCK_FILE} if stale)")]
    Locked(PathBuf),
    #[error("{THREADS_ENV}: {0}")]
    Threads(String),
    #[error("{path}: {source}")]
    Diagnostics { path: PathBuf, source: DiagError },
    #[error("material: {0}")]
    Material(#[from] MaterialError),
    #[error("symbol analysis: {0}")]
    Symbol(#[from] symbolcheck::SymbolError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => exit::ABORT,
            _ => exit::VALIDATION,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Result of a command: exit code and the text printed on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub message: String,
}

/// Exclusive claim on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(dir.to_path_buf())),
            Err(e) => Err(CliError::Io { path, source: e }),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Output goes to stdout, errors to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::VALIDATION } else { exit::OK };
        }
    };
    let result = thread_pool().and_then(|pool| pool.install(|| dispatch(cli.command)));
    match result {
        Ok(o) => {
            print!("{}", o.message);
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Threads(format!("expected a positive integer, got \"{v}\"")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Threads(e.to_string()))
}

fn dispatch(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Simulate { config } => simulate(&config),
        Command::Check { config, strict } => check(&config, strict),
        Command::AnalyzeSymbol { config, samples, dim } => analyze_symbol(&config, samples, dim.map(usize::from)),
        Command::Report { dir } => report(&dir),
    }
}

/// Plain-text snapshot: a header, then per field `# field <name> <rows> <cols>`
/// followed by one line per row.
pub fn snapshot_text(state: &StateField) -> String {
    let g = &state.grid;
    let nu = g.nu();
    let mut out = format!(
        "# nematoflow snapshot\n# t {:.17e}\n# grid {} {} {:.17e} {:.17e}\n",
        state.t, g.nx, g.ny, g.lx, g.ly
    );
    let mut field = |name: &str, rows: usize, cols: usize, v: &[f64]| {
        out.push_str(&format!("# field {name} {rows} {cols}\n"));
        for r in 0..rows {
            let line: Vec<String> = v[r * cols..(r + 1) * cols].iter().map(|x| format!("{x:.17e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    };
    field("u", g.ny, g.nx - 1, &state.vel[..nu]);
    field("v", g.ny - 1, g.nx, &state.vel[nu..]);
    field("theta", g.ny, g.nx, &state.theta);
    field("d1", g.ny, g.nx, &state.d[0]);
    field("d2", g.ny, g.nx, &state.d[1]);
    field("pi", g.ny, g.nx, &state.pi);
    out
}

/// Inverse of [`snapshot_text`].
pub fn parse_snapshot(text: &str) -> Result<StateField, String> {
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| format!("truncated snapshot: missing {what}"));
    if next("header")? != "# nematoflow snapshot" {
        return Err("not a snapshot file".into());
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
    let t_line = next("time")?;
    let t = num(t_line.strip_prefix("# t ").ok_or("missing time line")?)?;
    let gl = next("grid")?;
    let parts: Vec<&str> = gl.strip_prefix("# grid ").ok_or("missing grid line")?.split(' ').collect();
    if parts.len() != 4 {
        return Err("grid line needs 4 entries".into());
    }
    let nx: usize = parts[0].parse().map_err(|_| "bad nx")?;
    let ny: usize = parts[1].parse().map_err(|_| "bad ny")?;
    if nx < 2 || ny < 2 {
        return Err("grid needs at least 2 cells per axis".into());
    }
    let grid = Grid::new(nx, ny, num(parts[2])?, num(parts[3])?);
    let mut fields = Vec::new();
    for name in ["u", "v", "theta", "d1", "d2", "pi"] {
        let h = next("field header")?;
        let p: Vec<&str> = h.split(' ').collect();
        if p.len() != 5 || p[0] != "#" || p[1] != "field" || p[2] != name {
            return Err(format!("expected field {name}, got {h:?}"));
        }
        let rows: usize = p[3].parse().map_err(|_| "bad row count")?;
        let cols: usize = p[4].parse().map_err(|_| "bad column count")?;
        let mut v = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = next("field row")?;
            let vals = row.split(' ').map(num).collect::<Result<Vec<_>, _>>()?;
            if vals.len() != cols {
                return Err(format!("field {name}: row with {} entries, expected {cols}", vals.len()));
            }
            v.extend(vals);
        }
        fields.push(v);
    }
    let pi = fields.pop().unwrap();
    let d2 = fields.pop().unwrap();
    let d1 = fields.pop().unwrap();
    let theta = fields.pop().unwrap();
    let v = fields.pop().unwrap();
    let mut vel = fields.pop().unwrap();
    vel.extend(v);
    if vel.len() != grid.nfaces() || theta.len() != grid.ncells() {
        return Err("field sizes do not match the grid".into());
    }
    Ok(StateField {
        grid,
        vel,
        theta,
        d: [d1, d2],
        pi,
        t,
    })
}

fn setup_of(cfg: &RunConfig) -> RunSetup {
    RunSetup {
        material: cfg.material.clone(),
        grid: cfg.grid,
        step: cfg.step,
        scenario: cfg.scenario,
        snapshot_every: cfg.output.snapshot_every,
        reference: None,
    }
}

fn is_validation(e: &SolverError) -> bool {
    matches!(
        e,
        SolverError::UnknownScenario(_)
            | SolverError::InitialTemperature { .. }
            | SolverError::UnsupportedParameters(_)
            | SolverError::Config(_)
    )
}

fn distance_csv(d: &[(f64, f64)]) -> String {
    let mut out = String::from("t,distance\n");
    for (t, x) in d {
        out.push_str(&format!("{t:.16e},{x:.16e}\n"));
    }
    out
}

/// Audit block shared by the run summary and `report`; computed from the
/// CSV text so both agree bit for bit.
fn audit_from_csv(csv: &str, path: &Path) -> Result<(Vec<DiagnosticsRecord>, String), CliError> {
    let diag = |source| CliError::Diagnostics {
        path: path.to_path_buf(),
        source,
    };
    let records = diagnostics::records_from_csv(csv).map_err(diag)?;
    let audit = if records.len() >= 2 {
        diagnostics::audit_text(&records).map_err(diag)?
    } else {
        format!("records: {}\nverdict: too few records to audit\n", records.len())
    };
    Ok((records, audit))
}

fn predicted_rate(cfg: &RunConfig) -> String {
    let phi = cfg.scenario.phi_ref;
    match symbolcheck::equilibrium_spectrum(&cfg.material, cfg.scenario.theta_ref, &[phi.cos(), phi.sin()], &cfg.grid) {
        Ok(t) => {
            let (name, rate) = t.slowest();
            format!("{name} {rate:.10e}")
        }
        Err(e) => format!("n/a ({e})"),
    }
}

pub fn simulate(path: &Path) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(path)?;
    let dir = cfg.output.directory.clone();
    let _lock = DirLock::acquire(&dir)?;
    let snap_dir = dir.join("snapshots");
    if snap_dir.exists() {
        for entry in fs::read_dir(&snap_dir).map_err(io_err(&snap_dir))? {
            let p = entry.map_err(io_err(&snap_dir))?.path();
            if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("snap_")) {
                fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
    }
    for stale in ["abort.txt", "summary.txt"] {
        let p = dir.join(stale);
        if p.exists() {
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    if cfg.output.snapshot_every.is_some() {
        fs::create_dir_all(&snap_dir).map_err(io_err(&snap_dir))?;
    }

    let setup = setup_of(&cfg);
    let dt = cfg.step.dt;
    let result = solver::run(&setup, |state| {
        let step = (state.t / dt).round() as usize;
        let p = snap_dir.join(format!("snap_{step:06}.txt"));
        fs::write(&p, snapshot_text(state)).map_err(|e| format!("{}: {e}", p.display()))
    });

    let diag_path = dir.join("diagnostics.csv");
    match result {
        Ok(out) => {
            let csv = diagnostics::records_to_csv(&out.records);
            write_file(&diag_path, &csv)?;
            write_file(&dir.join("distance.csv"), &distance_csv(&out.distance))?;
            let (records, audit) = audit_from_csv(&csv, &diag_path)?;
            let at_rest = out.distance.iter().all(|&(_, d)| d == 0.0);
            let fit = diagnostics::fit_decay_rate(&out.distance);
            let defect = diagnostics::energy_identity_defect(&records).ok();
            let summary = summary_text(&cfg, out.steps, &out.distance, at_rest, &fit, defect.as_ref(), &audit);
            write_file(&dir.join("summary.txt"), &summary)?;
            Ok(Outcome {
                code: exit::OK,
                message: summary,
            })
        }
        Err(abort) => {
            write_file(&diag_path, &diagnostics::records_to_csv(&abort.records))?;
            write_file(&dir.join("distance.csv"), &distance_csv(&abort.distance))?;
            let text = format!(
                "run aborted\nt: {:.16e}\nerror: {}\nrecords written: {}\n",
                abort.t,
                abort.error,
                abort.records.len()
            );
            write_file(&dir.join("abort.txt"), &text)?;
            let final_state = dir.join("abort_state.txt");
            write_file(&final_state, &snapshot_text(&abort.state))?;
            let code = if is_validation(&abort.error) {
                exit::VALIDATION
            } else {
                exit::ABORT
            };
            eprintln!("error: {abort}");
            Ok(Outcome { code, message: text })
        }
    }
}

fn summary_text(
    cfg: &RunConfig,
    steps: usize,
    distance: &[(f64, f64)],
    at_rest: bool,
    fit: &Result<DecayFit, DiagError>,
    defect: Option<&diagnostics::EnergyDefect>,
    audit: &str,
) -> String {
    let g = &cfg.grid;
    let s = &cfg.scenario;
    let (t_final, d_final) = distance.last().copied().unwrap_or((0.0, 0.0));
    let fit = match fit {
        Ok(f) => format!("{:.10e} (samples {}, residual {:.3e})", f.rate, f.samples, f.residual),
        Err(e) => format!("none ({e})"),
    };
    let (e_def, n_min) = defect.map_or(("n/a".to_string(), "n/a".to_string()), |d| {
        (
            format!("{:.16e}", d.max_rel_defect),
            format!("{:.16e}", d.min_entropy_increment),
        )
    });
    format!(
        "nematoflow run summary\n\
         scenario: {} amplitude {:e} seed {}\n\
         grid: {} x {} on {:e} x {:e}\n\
         mode: {}\n\
         steps: {}\n\
         t_final: {:.16e}\n\
         status: {}\n\
         final_equilibrium_distance: {:.16e}\n\
         fitted_decay_rate: {}\n\
         predicted_slowest_rate: {}\n\
         max_energy_defect: {}\n\
         min_entropy_increment: {}\n\
         [audit]\n{}",
        s.kind.name(),
        s.amplitude,
        s.seed,
        g.nx,
        g.ny,
        g.lx,
        g.ly,
        if cfg.step.isothermal { "isothermal" } else { "nonisothermal" },
        steps,
        t_final,
        if at_rest { "already at equilibrium" } else { "completed" },
        d_final,
        fit,
        predicted_rate(cfg),
        e_def,
        n_min,
        audit
    )
}

pub fn check(path: &Path, strict: bool) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(path)?;
    let report = material::check_consistency(&cfg.material.free_energy, &cfg.material.params, &cfg.check)?;
    let dir = cfg.output.directory.clone();
    let _lock = DirLock::acquire(&dir)?;
    write_file(&dir.join("consistency.csv"), &report.to_csv())?;

    let consistent = report.consistent() || report.refined_consistent();
    let stable = report.stable();
    let pass = consistent && (!strict || stable);
    let mut failed: Vec<&str> = Vec::new();
    if !consistent {
        failed.extend(report.failures_in(material::InequalitySet::Consistency));
    }
    if strict && !stable {
        failed.extend(report.failures_in(material::InequalitySet::Stability));
        if report.get("gamma>0").is_some_and(|c| !c.pass) && !failed.contains(&"gamma>0") {
            failed.push("gamma>0");
        }
    }
    let mut text = report.to_table();
    text.push_str(&format!(
        "samples: {}\nmode: {}\n",
        report.samples,
        if strict { "strict" } else { "non-strict" }
    ));
    if pass {
        text.push_str("verdict: PASS\n");
    } else {
        text.push_str(&format!("verdict: FAIL ({})\n", failed.join(", ")));
    }
    write_file(&dir.join("consistency.txt"), &text)?;
    Ok(Outcome {
        code: if pass { exit::OK } else { exit::FAILURE },
        message: text,
    })
}

fn first_failure(rows: &[SweepRow]) -> String {
    match rows.iter().find(|r| !r.pass) {
        Some(r) => format!(
            "first failing sample {} (theta0={:e}, tau0={:e}): {}",
            r.sample_id, r.theta0, r.tau0, r.verdict
        ),
        None => "no failures".into(),
    }
}

pub fn analyze_symbol(path: &Path, samples: Option<usize>, dim: Option<usize>) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(path)?;
    let mut sc = cfg.symbol.clone();
    if let Some(n) = samples {
        sc.samples = n;
    }
    if let Some(d) = dim {
        sc.dim = d;
    }
    let spec = sc.sweep(cfg.scenario.seed);
    let dir = cfg.output.directory.clone();
    let _lock = DirLock::acquire(&dir)?;

    let ne = symbolcheck::sweep_normal_ellipticity(&cfg.material, &spec);
    let ls = symbolcheck::sweep_ls(&cfg.material, &spec);
    write_file(&dir.join("symbol_sweep_ne.csv"), &symbolcheck::sweep_csv(&ne, spec.dim))?;
    write_file(&dir.join("symbol_sweep_ls.csv"), &symbolcheck::sweep_csv(&ls, spec.dim))?;
    let ne_fail = ne.iter().filter(|r| !r.pass).count();
    let ls_fail = ls.iter().filter(|r| !r.pass).count();

    let phi = cfg.scenario.phi_ref;
    let spectrum = match symbolcheck::equilibrium_spectrum(
        &cfg.material,
        cfg.scenario.theta_ref,
        &[phi.cos(), phi.sin()],
        &cfg.grid,
    ) {
        Ok(t) => t.to_text(),
        Err(e) => format!("spectrum: n/a ({e})\n"),
    };
    write_file(&dir.join("spectrum.txt"), &spectrum)?;
    let text = format!(
        "symbol sweep: {} samples, dimension {}, seed {}\n\
         normal ellipticity failures: {}\n  {}\n\
         lopatinskii-shapiro failures: {}\n  {}\n\
         predicted decay rates on {} x {} grid:\n{}",
        spec.samples,
        spec.dim,
        spec.seed,
        ne_fail,
        first_failure(&ne),
        ls_fail,
        first_failure(&ls),
        cfg.grid.nx,
        cfg.grid.ny,
        spectrum
    );
    Ok(Outcome {
        code: if ne_fail + ls_fail == 0 { exit::OK } else { exit::FAILURE },
        message: text,
    })
}

/// Re-audits a run directory from `diagnostics.csv` alone.
pub fn report(dir: &Path) -> Result<Outcome, CliError> {
    let path = dir.join("diagnostics.csv");
    let csv = fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let (_, audit) = audit_from_csv(&csv, &path)?;
    Ok(Outcome {
        code: exit::OK,
        message: audit,
    })
}
