//! Command-line front end: configuration files, named presets and the
//! `kernel`, `simulate`, `reproduce` and `verify` subcommands.
//!
//! Configuration is an INI file with the sections
//!
//! ```text
//! [coefficient]  family = zero | constant | x_linear_t, mu, b, c
//! [kernel]       family = dirichlet | neumann, n_terms = <int> | auto,
//!                grid_m, lambda, t_valid
//! [simulation]   nx, dt, t_end, actuation = none | dirichlet | neumann,
//!                initial = benchmark | sine, snapshot_stride
//! [output]       dir
//! ```
//!
//! Command-line flags override the file. A preset fixes every parameter, so
//! it cannot be combined with a config file or parameter flags (only `--out`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use ini::Ini;
use rayon::prelude::*;

use crate::analysis::{diff_trajectories, fit_decay, h1_norm, l2_norm, DecayNorm, DecayReport};
use crate::coefficient::CoefficientFamily;
use crate::error::{Error, Result};
use crate::grid::SampledFunction;
use crate::kernel::{KernelFamily, KernelSeries};
use crate::sim::{run, Actuation, LeftBc, SimConfig, Trajectory};
use crate::verify::{run_suite, VerifyConfig};

/// Stop criterion for `n_terms = auto`.
pub const AUTO_TERM_TOL: f64 = 1e-10;
pub const AUTO_MAX_TERMS: usize = 60;
/// Presets run by `reproduce` when none are named.
pub const FIGURE_PRESETS: [&str; 6] = ["fig1a", "fig1b", "fig1c", "fig1d", "fig1e", "fig1f"];
pub const THREADS_ENV: &str = "BACKSTEP_HEAT_THREADS";

/// Initial condition of the plant.
///
/// `u0(x) = 10 (1/4 - (x-1/2)^2) sin(4 pi x) + 5 (1/4 - (x-1/2)^2)`.
pub fn benchmark_initial(x: f64) -> f64 {
    let bump = 0.25 - (x - 0.5) * (x - 0.5);
    10.0 * bump * (4.0 * std::f64::consts::PI * x).sin() + 5.0 * bump
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    Benchmark,
    Sine,
}

impl InitialData {
    pub fn sample(self, nx: usize) -> Result<SampledFunction> {
        match self {
            Self::Benchmark => SampledFunction::from_fn(nx, benchmark_initial),
            Self::Sine => SampledFunction::from_fn(nx, |x| (std::f64::consts::PI * x).sin()),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Benchmark => "benchmark",
            Self::Sine => "sine",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NTerms {
    Fixed(usize),
    Auto,
}

impl FromStr for NTerms {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Self::Fixed(n)),
            _ => Err(Error::Config(format!("n_terms must be a positive integer or 'auto', got '{s}'"))),
        }
    }
}

fn parse_family(s: &str) -> Result<KernelFamily> {
    match s.trim().to_ascii_lowercase().as_str() {
        "dirichlet" => Ok(KernelFamily::DirichletLeft),
        "neumann" => Ok(KernelFamily::NeumannLeft),
        other => Err(Error::Config(format!("unknown family '{other}' (dirichlet|neumann)"))),
    }
}

fn parse_actuation(s: &str) -> Result<Actuation> {
    match s.trim().to_ascii_lowercase().as_str() {
        "none" => Ok(Actuation::None),
        "dirichlet" => Ok(Actuation::DirichletFeedback),
        "neumann" => Ok(Actuation::NeumannFeedback),
        other => Err(Error::Config(format!("unknown actuation '{other}' (none|dirichlet|neumann)"))),
    }
}

fn actuation_name(a: Actuation) -> &'static str {
    match a {
        Actuation::None => "none",
        Actuation::DirichletFeedback => "dirichlet",
        Actuation::NeumannFeedback => "neumann",
    }
}

fn family_short(f: KernelFamily) -> &'static str {
    match f {
        KernelFamily::DirichletLeft => "dirichlet",
        KernelFamily::NeumannLeft => "neumann",
    }
}

/// Everything one subcommand needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub coefficient: CoefficientFamily,
    pub family: KernelFamily,
    pub n_terms: NTerms,
    pub grid_m: usize,
    pub lambda: f64,
    pub t_valid: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    pub actuation: Actuation,
    pub initial: InitialData,
    pub snapshot_stride: usize,
    /// When set, `simulate` runs a second closed loop with this many terms
    /// and writes the pointwise difference.
    pub compare_n_terms: Option<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    /// Benchmark-scale closed loop: `a = x(200t + 5)`, `lambda = 10`, three terms.
    fn default() -> Self {
        Self {
            preset: None,
            coefficient: CoefficientFamily::XLinearT { b: 200.0, c: 5.0 },
            family: KernelFamily::DirichletLeft,
            n_terms: NTerms::Fixed(3),
            grid_m: 200,
            lambda: 10.0,
            t_valid: 0.9,
            nx: 100,
            dt: 1e-5,
            t_end: 1.0,
            actuation: Actuation::DirichletFeedback,
            initial: InitialData::Benchmark,
            snapshot_stride: 100,
            compare_n_terms: None,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for `verify`: the small-`C` regime.
    pub fn verify_default() -> Self {
        let v = VerifyConfig::default();
        Self {
            coefficient: v.coefficient,
            family: v.family,
            n_terms: NTerms::Fixed(v.n_terms),
            grid_m: v.grid_m,
            lambda: v.lambda,
            nx: v.nx,
            dt: v.dt,
            t_end: v.t_end,
            ..Self::default()
        }
    }

    /// Named, fully specified scenario.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            preset: Some(name.to_string()),
            ..Self::default()
        };
        let uncontrolled = |b: f64| Self {
            coefficient: CoefficientFamily::XLinearT { b, c: 5.0 },
            actuation: Actuation::None,
            ..base.clone()
        };
        let cfg = match name {
            "fig1a" => uncontrolled(200.0),
            "fig1b" | "fig1b-kernel" => base,
            "fig1c" => uncontrolled(150.0),
            "fig1d" => Self {
                lambda: 40.0,
                ..base
            },
            "fig1e" => Self {
                compare_n_terms: Some(4),
                ..base
            },
            "fig1f" => Self { t_end: 2.0, ..base },
            "constant-mu" => Self {
                coefficient: CoefficientFamily::Constant { mu: 5.0 },
                n_terms: NTerms::Auto,
                ..base
            },
            "verify-default" => Self {
                preset: Some(name.to_string()),
                ..Self::verify_default()
            },
            "verify-zero" => Self {
                preset: Some(name.to_string()),
                coefficient: CoefficientFamily::Zero,
                lambda: 0.0,
                n_terms: NTerms::Fixed(2),
                ..Self::verify_default()
            },
            other => return Err(Error::Config(format!("unknown preset '{other}'"))),
        };
        Ok(cfg)
    }

    /// Applies an INI document on top of `self`. Unknown keys are errors.
    pub fn apply_ini(&mut self, doc: &Ini) -> Result<()> {
        let bad_key = |sec: &str, key: &str| Error::Config(format!("unknown key '{key}' in [{sec}]"));
        for (sec, props) in doc.iter() {
            let sec = sec.unwrap_or("");
            match sec {
                "coefficient" => {
                    let get = |k: &str| props.get(k).map(|v| num(k, v)).transpose();
                    for (k, _) in props.iter() {
                        if !["family", "mu", "b", "c"].contains(&k) {
                            return Err(bad_key(sec, k));
                        }
                    }
                    let fam = props.get("family").unwrap_or(self.coefficient.name());
                    let (old_mu, old_b, old_c) = match self.coefficient {
                        CoefficientFamily::Zero => (0.0, 200.0, 5.0),
                        CoefficientFamily::Constant { mu } => (mu, 200.0, 5.0),
                        CoefficientFamily::XLinearT { b, c } => (0.0, b, c),
                    };
                    self.coefficient = match fam.trim() {
                        "zero" => CoefficientFamily::Zero,
                        "constant" => CoefficientFamily::Constant {
                            mu: get("mu")?.unwrap_or(old_mu),
                        },
                        "x_linear_t" => CoefficientFamily::XLinearT {
                            b: get("b")?.unwrap_or(old_b),
                            c: get("c")?.unwrap_or(old_c),
                        },
                        other => {
                            return Err(Error::Config(format!(
                                "unknown coefficient family '{other}' (zero|constant|x_linear_t)"
                            )))
                        }
                    };
                }
                "kernel" => {
                    for (k, v) in props.iter() {
                        match k {
                            "family" => self.family = parse_family(v)?,
                            "n_terms" => self.n_terms = v.parse()?,
                            "grid_m" => self.grid_m = int(k, v)?,
                            "lambda" => self.lambda = num(k, v)?,
                            "t_valid" => self.t_valid = num(k, v)?,
                            _ => return Err(bad_key(sec, k)),
                        }
                    }
                }
                "simulation" => {
                    for (k, v) in props.iter() {
                        match k {
                            "nx" => self.nx = int(k, v)?,
                            "dt" => self.dt = num(k, v)?,
                            "t_end" => self.t_end = num(k, v)?,
                            "actuation" => self.actuation = parse_actuation(v)?,
                            "initial" => {
                                self.initial = match v.trim() {
                                    "benchmark" => InitialData::Benchmark,
                                    "sine" => InitialData::Sine,
                                    other => {
                                        return Err(Error::Config(format!(
                                            "unknown initial data '{other}' (benchmark|sine)"
                                        )))
                                    }
                                }
                            }
                            "snapshot_stride" => self.snapshot_stride = int(k, v)?,
                            _ => return Err(bad_key(sec, k)),
                        }
                    }
                }
                "output" => {
                    for (k, v) in props.iter() {
                        match k {
                            "dir" => self.out = PathBuf::from(v.trim()),
                            _ => return Err(bad_key(sec, k)),
                        }
                    }
                }
                "" if props.is_empty() => {}
                other => return Err(Error::Config(format!("unknown section [{other}]"))),
            }
        }
        Ok(())
    }

    pub fn load_ini(&mut self, path: &Path) -> Result<()> {
        let doc = Ini::load_from_file(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_ini(&doc)
    }

    fn validate(&self) -> Result<()> {
        if self.grid_m < 8 {
            return Err(Error::Config(format!("grid_m must be >= 8, got {}", self.grid_m)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn build_kernel(&self) -> Result<KernelSeries> {
        self.build_kernel_with(self.n_terms)
    }

    fn build_kernel_with(&self, n_terms: NTerms) -> Result<KernelSeries> {
        self.validate()?;
        let a = self.coefficient.build();
        let ks = match n_terms {
            NTerms::Fixed(n) => KernelSeries::synthesize(self.family, &a, self.lambda, n, self.grid_m)?,
            NTerms::Auto => KernelSeries::synthesize_until(
                self.family,
                &a,
                self.lambda,
                self.grid_m,
                AUTO_TERM_TOL,
                AUTO_MAX_TERMS,
            )?,
        };
        ks.with_t_valid(self.t_valid)
    }

    fn sim_config(&self, kernel: Option<Arc<KernelSeries>>) -> Result<SimConfig> {
        let u0 = self.initial.sample(self.nx)?;
        let mut cfg = match (self.actuation, kernel) {
            (Actuation::None, _) => {
                let mut c = SimConfig::uncontrolled(self.coefficient.build(), u0, self.t_end);
                c.left_bc = match self.family {
                    KernelFamily::DirichletLeft => LeftBc::DirichletZero,
                    KernelFamily::NeumannLeft => LeftBc::NeumannZero,
                };
                c
            }
            (act, Some(ks)) => SimConfig::controlled(ks, act, u0, self.t_end),
            (_, None) => return Err(Error::InvalidArgument("feedback actuation needs a kernel".into())),
        };
        cfg.dt = self.dt;
        cfg.snapshot_stride = self.snapshot_stride;
        Ok(cfg)
    }

    fn to_verify(&self, inject_fault: bool) -> Result<VerifyConfig> {
        let n_terms = match self.n_terms {
            NTerms::Fixed(n) => n,
            NTerms::Auto => self.build_kernel()?.n_terms(),
        };
        Ok(VerifyConfig {
            coefficient: self.coefficient,
            family: self.family,
            lambda: self.lambda,
            n_terms,
            grid_m: self.grid_m,
            nx: self.nx,
            dt: self.dt,
            t_end: self.t_end,
            inject_fault,
        })
    }

    fn describe(&self) -> String {
        let mut s = String::new();
        let coef = match self.coefficient {
            CoefficientFamily::Zero => "zero".to_string(),
            CoefficientFamily::Constant { mu } => format!("constant mu={mu}"),
            CoefficientFamily::XLinearT { b, c } => format!("x_linear_t b={b} c={c}"),
        };
        let n_terms = match self.n_terms {
            NTerms::Fixed(n) => n.to_string(),
            NTerms::Auto => "auto".into(),
        };
        let _ = writeln!(s, "preset={}", self.preset.as_deref().unwrap_or(""));
        let _ = writeln!(s, "coefficient={coef}");
        let _ = writeln!(s, "family={}", family_short(self.family));
        let _ = writeln!(s, "n_terms={n_terms}");
        let _ = writeln!(s, "grid_m={}", self.grid_m);
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "t_valid={}", self.t_valid);
        let _ = writeln!(s, "nx={}", self.nx);
        let _ = writeln!(s, "dt={}", self.dt);
        let _ = writeln!(s, "t_end={}", self.t_end);
        let _ = writeln!(s, "actuation={}", actuation_name(self.actuation));
        let _ = writeln!(s, "initial={}", self.initial.name());
        let _ = writeln!(s, "snapshot_stride={}", self.snapshot_stride);
        if let Some(n) = self.compare_n_terms {
            let _ = writeln!(s, "compare_n_terms={n}");
        }
        s
    }
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn int(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{v}'")))
}

#[derive(Debug, Parser)]
#[command(name = "backstep-heat", version, about = "Backstepping boundary control of the reaction-diffusion heat equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a kernel and write its grids, term norms and residuals.
    Kernel(RunArgs),
    /// Run one simulation and write the trajectory and decay analysis.
    Simulate(RunArgs),
    /// Rerun the figure scenarios, one subdirectory per preset.
    Reproduce {
        /// Presets to run (default: fig1a..fig1f).
        presets: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the invariant suite; exits nonzero if any check fails.
    Verify {
        #[command(flatten)]
        args: RunArgs,
        /// Perturb one kernel node first (the residual check should fail).
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of series terms, or `auto`.
    #[arg(long)]
    pub n_terms: Option<String>,
    #[arg(long)]
    pub grid_m: Option<usize>,
    /// dirichlet | neumann
    #[arg(long)]
    pub family: Option<String>,
    /// none | dirichlet | neumann
    #[arg(long)]
    pub actuation: Option<String>,
}

impl RunArgs {
    fn has_overrides(&self) -> bool {
        self.config.is_some()
            || self.nx.is_some()
            || self.dt.is_some()
            || self.t_end.is_some()
            || self.lambda.is_some()
            || self.n_terms.is_some()
            || self.grid_m.is_some()
            || self.family.is_some()
            || self.actuation.is_some()
    }

    /// Resolves preset, config file and flags into one configuration.
    pub fn resolve(&self, base: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = if let Some(p) = &self.preset {
            if self.has_overrides() {
                return Err(Error::Config(format!(
                    "preset '{p}' fixes all parameters; only --out may accompany it"
                )));
            }
            ExperimentConfig::preset(p)?
        } else {
            let mut cfg = base;
            if let Some(path) = &self.config {
                cfg.load_ini(path)?;
            }
            if let Some(v) = self.nx {
                cfg.nx = v;
            }
            if let Some(v) = self.dt {
                cfg.dt = v;
            }
            if let Some(v) = self.t_end {
                cfg.t_end = v;
            }
            if let Some(v) = self.lambda {
                cfg.lambda = v;
            }
            if let Some(v) = &self.n_terms {
                cfg.n_terms = v.parse()?;
            }
            if let Some(v) = self.grid_m {
                cfg.grid_m = v;
            }
            if let Some(v) = &self.family {
                cfg.family = parse_family(v)?;
            }
            if let Some(v) = &self.actuation {
                cfg.actuation = parse_actuation(v)?;
            }
            cfg
        };
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

/// Applies `BACKSTEP_HEAT_THREADS` to the global rayon pool. Only the first
/// call has an effect.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be >= 1")));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `argv`-style arguments and runs the command. Returns the process
/// exit code: 0 on success, 1 if verification failed.
pub fn run_cli<I, T>(args: I) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    dispatch(cli)
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    init_threads()?;
    match cli.command {
        Command::Kernel(args) => {
            let cfg = args.resolve(ExperimentConfig::default())?;
            cmd_kernel(&cfg)?;
            Ok(0)
        }
        Command::Simulate(args) => {
            let cfg = args.resolve(ExperimentConfig::default())?;
            cmd_simulate(&cfg)?;
            Ok(0)
        }
        Command::Reproduce { presets, out } => {
            cmd_reproduce(&presets, &out)?;
            Ok(0)
        }
        Command::Verify { args, inject_fault } => {
            let cfg = args.resolve(ExperimentConfig::verify_default())?;
            let passed = cmd_verify(&cfg, inject_fault)?;
            Ok(if passed { 0 } else { 1 })
        }
    }
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::write(dir.join(name), body)?;
    Ok(())
}

/// Writes `kernel.csv`, `kernel_eval.csv`, `term_norms.csv`, `residual.txt`
/// and `config.txt` into `cfg.out`.
pub fn cmd_kernel(cfg: &ExperimentConfig) -> Result<KernelSeries> {
    let ks = cfg.build_kernel()?;
    fs::create_dir_all(&cfg.out)?;
    let fam = family_short(ks.family());
    let m = ks.grid_m();
    let h = ks.h();

    let mut body = String::from("family,n,xi,eta,t_power,value\n");
    for term in ks.terms() {
        for (p, grid) in term.powers().iter().enumerate() {
            for i in 0..=m {
                for j in 0..=i {
                    let _ = writeln!(body, "{fam},{},{},{},{p},{}", term.order(), i as f64 * h, j as f64 * h, grid.get(i, j));
                }
            }
        }
    }
    write_file(&cfg.out, "kernel.csv", &body)?;

    let n = cfg.nx;
    let dx = ks.default_dx_step();
    let mut body = String::from("x,y,t,k,k_x\n");
    for &t in &[0.0, 0.5 * ks.t_valid()] {
        for i in 0..=n {
            let x = i as f64 / n as f64;
            for j in 0..=i {
                let y = j as f64 / n as f64;
                let _ = writeln!(body, "{x},{y},{t},{},{}", ks.eval(x, y, t)?, ks.eval_dx(x, y, t, dx)?);
            }
        }
    }
    write_file(&cfg.out, "kernel_eval.csv", &body)?;

    let c = cfg.coefficient.build().dominant_constant(cfg.lambda, 1001)?;
    let mut body = String::from("n,sup_norm,dominance_bound\n");
    for (k, s) in ks.term_sup_norms().iter().enumerate() {
        let _ = writeln!(body, "{k},{s},{}", KernelSeries::dominance_bound(k, c, ks.t_valid()));
    }
    write_file(&cfg.out, "term_norms.csv", &body)?;

    let rep = ks.verify_residual(&cfg.coefficient.build(), cfg.lambda, 41, 2.0 * h)?;
    let mut body = String::new();
    let _ = writeln!(body, "n_terms={}", ks.n_terms());
    let _ = writeln!(body, "max_pde_residual={}", rep.max_pde_residual);
    if let Some(r) = rep.max_pde_residual_static {
        let _ = writeln!(body, "max_pde_residual_static={r}");
    }
    let _ = writeln!(body, "max_bc_residual={}", rep.max_bc_residual);
    let _ = writeln!(body, "max_diagonal_residual={}", rep.max_diagonal_residual);
    let _ = writeln!(body, "grid_m={}", rep.grid_m);
    let _ = writeln!(body, "fd_step={}", rep.fd_step);
    let _ = writeln!(body, "n_points={}", rep.n_points);
    let _ = writeln!(body, "dominance_constant={c}");
    write_file(&cfg.out, "residual.txt", &body)?;
    write_file(&cfg.out, "config.txt", &cfg.describe())?;
    Ok(ks)
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,x,u\n");
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (i, u) in snap.values().iter().enumerate() {
            let _ = writeln!(s, "{t},{},{u}", snap.x(i));
        }
    }
    s
}

fn boundary_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,control_value\n");
    for (t, v) in traj.input_times.iter().zip(&traj.boundary_inputs) {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

fn decay_summary(out: &mut String, tag: &str, traj: &Trajectory, lambda: f64) -> Option<DecayReport> {
    match fit_decay(traj, DecayNorm::L2, None, lambda) {
        Ok(rep) => {
            let _ = writeln!(out, "{tag}fitted_rate={}", rep.fitted_rate);
            let _ = writeln!(out, "{tag}claimed_rate={}", rep.claimed_rate);
            let _ = writeln!(out, "{tag}estimated_m={}", rep.estimated_m);
            let _ = writeln!(out, "{tag}fit_window={},{}", rep.window.0, rep.window.1);
            let _ = writeln!(out, "{tag}n_fit_samples={}", rep.n_fit_samples);
            Some(rep)
        }
        Err(e) => {
            let _ = writeln!(out, "{tag}fit=unavailable ({e})");
            None
        }
    }
}

/// Runs the configured simulation and writes `trajectory.csv`,
/// `boundary.csv`, `decay.csv`, `metadata.txt`, `summary.txt` and
/// `config.txt`. With `compare_n_terms` the trajectory file holds the
/// difference of the two closed loops.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let kernel = match cfg.actuation {
        Actuation::None => None,
        _ => Some(Arc::new(cfg.build_kernel()?)),
    };
    let sim = cfg.sim_config(kernel.clone())?;
    let traj = run(sim.clone())?;

    let mut summary = String::new();
    let mut meta = String::new();
    let _ = writeln!(meta, "scheme=ftcs");
    let _ = writeln!(meta, "mesh_ratio={}", sim.mesh_ratio());
    let _ = writeln!(meta, "n_steps={}", sim.n_steps());
    let _ = writeln!(meta, "compatibility_margin={}", traj.compatibility_margin);
    let _ = writeln!(meta, "diverged={}", traj.diverged);
    if let Some(t) = traj.divergence_time {
        let _ = writeln!(meta, "divergence_time={t}");
    }
    let _ = writeln!(meta, "past_horizon={}", traj.past_horizon);
    if let Some(ks) = &kernel {
        let _ = writeln!(meta, "kernel_terms={}", ks.n_terms());
    }

    let lambda = cfg.lambda;
    let mut written = traj.clone();
    match cfg.compare_n_terms {
        None => {
            decay_summary(&mut summary, "", &traj, lambda);
        }
        Some(n2) => {
            if cfg.actuation == Actuation::None {
                return Err(Error::Config("compare_n_terms needs a feedback actuation".into()));
            }
            let ks2 = Arc::new(cfg.build_kernel_with(NTerms::Fixed(n2))?);
            let other = run(cfg.sim_config(Some(ks2))?)?;
            let _ = writeln!(meta, "compare_n_terms={n2}");
            let _ = writeln!(meta, "compare_diverged={}", other.diverged);
            decay_summary(&mut summary, "base_", &traj, lambda);
            decay_summary(&mut summary, "compare_", &other, lambda);
            if traj.times.len() == other.times.len() {
                written = diff_trajectories(&traj, &other)?;
            } else {
                let _ = writeln!(summary, "difference=unavailable (runs stopped at different times)");
            }
        }
    }
    let final_l2 = traj.final_state().map(l2_norm).unwrap_or(f64::NAN);
    let _ = writeln!(summary, "initial_l2={}", l2_norm(&traj.snapshots[0]));
    let _ = writeln!(summary, "final_l2={final_l2}");
    let _ = writeln!(summary, "diverged={}", traj.diverged);

    let mut decay = String::from("t,l2,h1,margin\n");
    let n0 = l2_norm(&traj.snapshots[0]);
    let rate = lambda;
    for (t, s) in traj.times.iter().zip(&traj.snapshots) {
        let l2 = l2_norm(s);
        let margin = if n0 > 0.0 { (-rate * t).exp() - l2 / n0 } else { f64::NAN };
        let _ = writeln!(decay, "{t},{l2},{},{margin}", h1_norm(s));
    }

    fs::create_dir_all(&cfg.out)?;
    write_file(&cfg.out, "trajectory.csv", &trajectory_csv(&written))?;
    write_file(&cfg.out, "boundary.csv", &boundary_csv(&written))?;
    write_file(&cfg.out, "decay.csv", &decay)?;
    write_file(&cfg.out, "metadata.txt", &meta)?;
    write_file(&cfg.out, "summary.txt", &summary)?;
    write_file(&cfg.out, "config.txt", &cfg.describe())?;
    Ok(written)
}

const PLOT_SCRIPT: &str = r#"# Plots trajectory.csv (u(x,t) surface) and boundary.csv from this directory.
import csv, os, sys
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(sys.argv[0]))
rows = list(csv.DictReader(open(os.path.join(here, "trajectory.csv"))))
ts = sorted({float(r["t"]) for r in rows})
xs = sorted({float(r["x"]) for r in rows})
u = {(float(r["t"]), float(r["x"])): float(r["u"]) for r in rows}
Z = [[u[(t, x)] for x in xs] for t in ts]

fig = plt.figure(figsize=(10, 4))
ax = fig.add_subplot(1, 2, 1, projection="3d")
import numpy as np
X, T = np.meshgrid(xs, ts)
ax.plot_surface(X, T, np.array(Z), cmap="viridis", linewidth=0)
ax.set_xlabel("x"); ax.set_ylabel("t"); ax.set_zlabel("u")

b = list(csv.DictReader(open(os.path.join(here, "boundary.csv"))))
ax2 = fig.add_subplot(1, 2, 2)
if b:
    ax2.plot([float(r["t"]) for r in b], [float(r["control_value"]) for r in b])
ax2.set_xlabel("t"); ax2.set_ylabel("u(1,t)")
fig.tight_layout()
fig.savefig(os.path.join(here, "figure.png"), dpi=120)
"#;

/// Runs each figure preset into `out/<preset>/` (concurrently) and drops a
/// plotting script next to each CSV set.
pub fn cmd_reproduce(presets: &[String], out: &Path) -> Result<()> {
    let names: Vec<String> = if presets.is_empty() {
        FIGURE_PRESETS.iter().map(|s| s.to_string()).collect()
    } else {
        presets.to_vec()
    };
    let cfgs = names
        .iter()
        .map(|name| {
            if !FIGURE_PRESETS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown figure preset '{name}' (expected one of {})",
                    FIGURE_PRESETS.join(", ")
                )));
            }
            let mut cfg = ExperimentConfig::preset(name)?;
            cfg.out = out.join(name);
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    cfgs.par_iter()
        .map(|cfg| {
            cmd_simulate(cfg)?;
            write_file(&cfg.out, "plot.py", PLOT_SCRIPT)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(())
}

/// Runs the invariant suite, prints and writes `report.txt`. Returns whether
/// every check passed.
pub fn cmd_verify(cfg: &ExperimentConfig, inject_fault: bool) -> Result<bool> {
    let checks = run_suite(&cfg.to_verify(inject_fault)?)?;
    let mut report = String::new();
    for c in &checks {
        let _ = writeln!(report, "{}", c.line());
    }
    let passed = checks.iter().all(|c| c.passed);
    let _ = writeln!(
        report,
        "{} {}/{} checks passed",
        if passed { "OK" } else { "FAILED" },
        checks.iter().filter(|c| c.passed).count(),
        checks.len()
    );
    print!("{report}");
    fs::create_dir_all(&cfg.out)?;
    write_file(&cfg.out, "report.txt", &report)?;
    write_file(&cfg.out, "config.txt", &cfg.describe())?;
    Ok(passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_data_values() {
        assert!((benchmark_initial(0.5) - 1.25).abs() < 1e-14);
        assert!(benchmark_initial(0.0).abs() < 1e-14);
        assert!(benchmark_initial(1.0).abs() < 1e-14);
    }

    #[test]
    fn n_terms_parsing() {
        assert_eq!("auto".parse::<NTerms>().unwrap(), NTerms::Auto);
        assert_eq!(" 4 ".parse::<NTerms>().unwrap(), NTerms::Fixed(4));
        assert!("0".parse::<NTerms>().is_err());
        assert!("three".parse::<NTerms>().is_err());
    }

    #[test]
    fn presets_are_complete() {
        for name in FIGURE_PRESETS {
            let p = ExperimentConfig::preset(name).unwrap();
            assert_eq!(p.nx, 100);
            assert_eq!(p.dt, 1e-5);
            assert_eq!(p.initial, InitialData::Benchmark);
        }
        assert_eq!(ExperimentConfig::preset("fig1a").unwrap().actuation, Actuation::None);
        assert_eq!(
            ExperimentConfig::preset("fig1c").unwrap().coefficient,
            CoefficientFamily::XLinearT { b: 150.0, c: 5.0 }
        );
        assert_eq!(ExperimentConfig::preset("fig1d").unwrap().lambda, 40.0);
        assert_eq!(ExperimentConfig::preset("fig1f").unwrap().t_end, 2.0);
        assert!(ExperimentConfig::preset("fig9").is_err());
    }

    #[test]
    fn preset_rejects_overrides() {
        let args = RunArgs {
            preset: Some("fig1b".into()),
            lambda: Some(3.0),
            ..RunArgs::default()
        };
        assert!(args.resolve(ExperimentConfig::default()).is_err());
        let args = RunArgs {
            preset: Some("fig1b".into()),
            out: Some("elsewhere".into()),
            ..RunArgs::default()
        };
        assert_eq!(args.resolve(ExperimentConfig::default()).unwrap().out, PathBuf::from("elsewhere"));
    }

    #[test]
    fn ini_overrides_and_errors() {
        let doc = Ini::load_from_str(
            "[coefficient]\nfamily = constant\nmu = 3\n[kernel]\nfamily = neumann\nn_terms = auto\n\
             [simulation]\nnx = 50\nactuation = neumann\n[output]\ndir = /tmp/x\n",
        )
        .unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.apply_ini(&doc).unwrap();
        assert_eq!(cfg.coefficient, CoefficientFamily::Constant { mu: 3.0 });
        assert_eq!(cfg.family, KernelFamily::NeumannLeft);
        assert_eq!(cfg.n_terms, NTerms::Auto);
        assert_eq!(cfg.nx, 50);
        assert_eq!(cfg.actuation, Actuation::NeumannFeedback);
        assert_eq!(cfg.out, PathBuf::from("/tmp/x"));

        for bad in ["[kernel]\ngrid = 3\n", "[bogus]\nx=1\n", "[simulation]\ndt = fast\n"] {
            let doc = Ini::load_from_str(bad).unwrap();
            assert!(ExperimentConfig::default().apply_ini(&doc).is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_config() {
        let args = RunArgs {
            nx: Some(40),
            n_terms: Some("5".into()),
            family: Some("neumann".into()),
            actuation: Some("none".into()),
            ..RunArgs::default()
        };
        let cfg = args.resolve(ExperimentConfig::default()).unwrap();
        assert_eq!((cfg.nx, cfg.n_terms), (40, NTerms::Fixed(5)));
        assert_eq!(cfg.actuation, Actuation::None);
        let args = RunArgs {
            family: Some("robin".into()),
            ..RunArgs::default()
        };
        assert!(args.resolve(ExperimentConfig::default()).is_err());
    }
}
