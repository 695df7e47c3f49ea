//! Explicit finite-difference simulation of
//!
//! ```text
//! u_t = u_xx + a(x,t) u
//! ```
//!
//! with a homogeneous left boundary condition and either no control (the
//! right end mirrors the left condition) or a backstepping feedback at
//! `x = 1`:
//!
//! ```text
//! Dirichlet:  u(1,t)   = - int_0^1 k(1,y,t) u(y,t) dy
//! Neumann:    u_x(1,t) = - k(1,1,t) u(1,t) - int_0^1 k_x(1,y,t) u(y,t) dy
//! ```
//!
//! The feedback is computed from the pre-step state. Neumann-type
//! conditions are imposed with the second-order one-sided difference
//! `(3u_N - 4u_{N-1} + u_{N-2}) / 2h`.

use std::sync::Arc;

use crate::coefficient::CoefficientPolyT;
use crate::error::{Error, Result};
use crate::grid::{horner, trapezoid, SampledFunction};
use crate::kernel::{KernelFamily, KernelSeries};

/// `|u|` above this marks a run as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
pub const DEFAULT_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftBc {
    DirichletZero,
    NeumannZero,
}

impl LeftBc {
    pub fn kernel_family(self) -> KernelFamily {
        match self {
            Self::DirichletZero => KernelFamily::DirichletLeft,
            Self::NeumannZero => KernelFamily::NeumannLeft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actuation {
    None,
    DirichletFeedback,
    NeumannFeedback,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    pub left_bc: LeftBc,
    pub actuation: Actuation,
    pub lambda: f64,
    pub kernel: Option<Arc<KernelSeries>>,
    pub coefficient: CoefficientPolyT,
    pub initial: SampledFunction,
    pub snapshot_stride: usize,
    pub safety: f64,
}

impl SimConfig {
    /// Uncontrolled run with the benchmark-scale grid defaults
    /// (`nx = 100`, `dt = 1e-5`).
    pub fn uncontrolled(coefficient: CoefficientPolyT, initial: SampledFunction, t_end: f64) -> Self {
        Self {
            nx: initial.nx(),
            dt: 1e-5,
            t_end,
            left_bc: LeftBc::DirichletZero,
            actuation: Actuation::None,
            lambda: 0.0,
            kernel: None,
            coefficient,
            initial,
            snapshot_stride: 100,
            safety: DEFAULT_SAFETY,
        }
    }

    /// Closed loop driven by `kernel`; the left condition follows the
    /// kernel family.
    pub fn controlled(kernel: Arc<KernelSeries>, actuation: Actuation, initial: SampledFunction, t_end: f64) -> Self {
        let left_bc = match kernel.family() {
            KernelFamily::DirichletLeft => LeftBc::DirichletZero,
            KernelFamily::NeumannLeft => LeftBc::NeumannZero,
        };
        Self {
            nx: initial.nx(),
            dt: 1e-5,
            t_end,
            left_bc,
            actuation,
            lambda: kernel.lambda(),
            coefficient: kernel.coefficient().clone(),
            kernel: Some(kernel),
            initial,
            snapshot_stride: 100,
            safety: DEFAULT_SAFETY,
        }
    }

    pub fn mesh_ratio(&self) -> f64 {
        self.dt * (self.nx * self.nx) as f64
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.nx < 2 {
            return bad(format!("nx must be >= 2, got {}", self.nx));
        }
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return bad(format!("need dt > 0 and t_end >= 0, got dt={} t_end={}", self.dt, self.t_end));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad(format!("safety must lie in (0,1], got {}", self.safety));
        }
        if self.mesh_ratio() > 0.5 * self.safety {
            return bad(format!(
                "dt * nx^2 = {} exceeds the explicit stability limit {}",
                self.mesh_ratio(),
                0.5 * self.safety
            ));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be >= 1".into());
        }
        if self.initial.nx() != self.nx {
            return Err(Error::Mismatch(format!(
                "initial data has nx = {}, config nx = {}",
                self.initial.nx(),
                self.nx
            )));
        }
        if self.actuation != Actuation::None {
            match &self.kernel {
                None => return bad("feedback actuation needs a kernel".into()),
                Some(k) if k.family() != self.left_bc.kernel_family() => {
                    return bad(format!(
                        "kernel family {:?} does not match left boundary {:?}",
                        k.family(),
                        self.left_bc
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<SampledFunction>,
    /// Step times at which a control value was applied.
    pub input_times: Vec<f64>,
    /// `u(1,t)` (Dirichlet feedback), `u_x(1,t)` (Neumann feedback), or the
    /// homogeneous boundary value when uncontrolled.
    pub boundary_inputs: Vec<f64>,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub compatibility_margin: f64,
    /// Some step evaluated the kernel past its validity horizon.
    pub past_horizon: bool,
}

impl Trajectory {
    pub fn nx(&self) -> usize {
        self.snapshots.first().map_or(0, SampledFunction::nx)
    }

    pub fn final_state(&self) -> Option<&SampledFunction> {
        self.snapshots.last()
    }

    /// Snapshot closest to `t`.
    pub fn at(&self, t: f64) -> Option<(f64, &SampledFunction)> {
        self.times
            .iter()
            .zip(&self.snapshots)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(t, s)| (*t, s))
    }
}

/// Kernel traces at `x = 1` as `t`-polynomials, one per grid node.
#[derive(Debug, Clone)]
struct BoundaryGains {
    k_row: Vec<Vec<f64>>,
    kx_row: Vec<Vec<f64>>,
}

impl BoundaryGains {
    fn new(ks: &KernelSeries, nx: usize, need_dx: bool) -> Result<Self> {
        let ys = (0..=nx).map(|j| j as f64 / nx as f64);
        let k_row = ys.clone().map(|y| ks.k_coeffs(1.0, y)).collect::<Result<Vec<_>>>()?;
        let kx_row = if need_dx {
            ys.map(|y| ks.kx_coeffs(1.0, y, ks.default_dx_step())).collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { k_row, kx_row })
    }

    fn weighted(row: &[Vec<f64>], u: &[f64], t: f64, h: f64) -> f64 {
        let prod: Vec<f64> = row.iter().zip(u).map(|(c, v)| horner(c, t) * v).collect();
        trapezoid(&prod, h)
    }

    fn dirichlet_value(&self, u: &[f64], t: f64, h: f64) -> f64 {
        -Self::weighted(&self.k_row, u, t, h)
    }

    fn neumann_flux(&self, u: &[f64], t: f64, h: f64) -> f64 {
        let n = u.len() - 1;
        -horner(&self.k_row[n], t) * u[n] - Self::weighted(&self.kx_row, u, t, h)
    }
}

/// Stepper with the coefficient and kernel traces sampled once.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    a_nodes: Vec<Vec<f64>>,
    gains: Option<BoundaryGains>,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let nx = cfg.nx;
        let a_nodes = (0..=nx)
            .map(|i| {
                let x = i as f64 / nx as f64;
                (0..=cfg.coefficient.degree_t()).map(|j| cfg.coefficient.coeff(j, x)).collect()
            })
            .collect();
        let gains = match (&cfg.kernel, cfg.actuation) {
            (Some(ks), act) if act != Actuation::None => {
                Some(BoundaryGains::new(ks, nx, act == Actuation::NeumannFeedback)?)
            }
            _ => None,
        };
        Ok(Self { cfg, a_nodes, gains })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn h(&self) -> f64 {
        1.0 / self.cfg.nx as f64
    }

    /// Control value the feedback law would apply to `state` at time `t`.
    pub fn control_value(&self, state: &[f64], t: f64) -> f64 {
        let h = self.h();
        match (self.cfg.actuation, &self.gains) {
            (Actuation::DirichletFeedback, Some(g)) => g.dirichlet_value(state, t, h),
            (Actuation::NeumannFeedback, Some(g)) => g.neumann_flux(state, t, h),
            _ => 0.0,
        }
    }

    /// One FTCS step from `t` to `t + dt`. Returns the new state and the
    /// applied control value.
    pub fn step(&self, state: &SampledFunction, t: f64) -> Result<(SampledFunction, f64)> {
        if state.nx() != self.cfg.nx {
            return Err(Error::Mismatch(format!("state nx {} vs config nx {}", state.nx(), self.cfg.nx)));
        }
        let u = state.values();
        let n = self.cfg.nx;
        let h = self.h();
        let dt = self.cfg.dt;
        let r = dt / (h * h);
        let control = self.control_value(u, t);

        let mut next = vec![0.0; n + 1];
        for i in 1..n {
            let a = horner(&self.a_nodes[i], t);
            next[i] = u[i] + r * (u[i + 1] - 2.0 * u[i] + u[i - 1]) + dt * a * u[i];
        }
        next[0] = match self.cfg.left_bc {
            LeftBc::DirichletZero => 0.0,
            LeftBc::NeumannZero => (4.0 * next[1] - next[2]) / 3.0,
        };
        next[n] = match self.cfg.actuation {
            Actuation::None => match self.cfg.left_bc {
                LeftBc::DirichletZero => 0.0,
                LeftBc::NeumannZero => (4.0 * next[n - 1] - next[n - 2]) / 3.0,
            },
            Actuation::DirichletFeedback => control,
            Actuation::NeumannFeedback => (2.0 * h * control + 4.0 * next[n - 1] - next[n - 2]) / 3.0,
        };
        Ok((SampledFunction::from_raw(next), control))
    }

    pub fn run(&self) -> Result<Trajectory> {
        let cfg = &self.cfg;
        let n_steps = cfg.n_steps();
        let mut state = cfg.initial.clone();
        let mut traj = Trajectory {
            times: vec![0.0],
            snapshots: vec![state.clone()],
            input_times: Vec::with_capacity(n_steps),
            boundary_inputs: Vec::with_capacity(n_steps),
            diverged: false,
            divergence_time: None,
            compatibility_margin: check_compatibility(
                &cfg.initial,
                cfg.kernel.as_deref(),
                cfg.actuation,
                cfg.left_bc,
            )?,
            past_horizon: false,
        };
        for k in 0..n_steps {
            let t = k as f64 * cfg.dt;
            if let Some(ks) = &cfg.kernel {
                traj.past_horizon |= cfg.actuation != Actuation::None && ks.past_horizon(t);
            }
            let (next, control) = self.step(&state, t)?;
            traj.input_times.push(t);
            traj.boundary_inputs.push(control);
            state = next;
            let t_next = (k + 1) as f64 * cfg.dt;
            let blown = state.values().iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD);
            if blown {
                traj.diverged = true;
                traj.divergence_time = Some(t_next);
                if state.values().iter().all(|v| v.is_finite()) {
                    traj.times.push(t_next);
                    traj.snapshots.push(state);
                }
                return Ok(traj);
            }
            if (k + 1) % cfg.snapshot_stride == 0 || k + 1 == n_steps {
                traj.times.push(t_next);
                traj.snapshots.push(state.clone());
            }
        }
        Ok(traj)
    }
}

pub fn run(cfg: SimConfig) -> Result<Trajectory> {
    Simulator::new(cfg)?.run()
}

/// Residual of the initial data against the boundary conditions at `t = 0`
/// (left condition and the selected feedback law or homogeneous right
/// condition). Zero means compatible.
pub fn check_compatibility(
    u0: &SampledFunction,
    ks: Option<&KernelSeries>,
    actuation: Actuation,
    left_bc: LeftBc,
) -> Result<f64> {
    let u = u0.values();
    let n = u0.nx();
    let h = u0.h();
    let left = match left_bc {
        LeftBc::DirichletZero => u[0].abs(),
        LeftBc::NeumannZero => ((-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)).abs(),
    };
    let slope_right = (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h);
    let right = match actuation {
        Actuation::None => match left_bc {
            LeftBc::DirichletZero => u[n].abs(),
            LeftBc::NeumannZero => slope_right.abs(),
        },
        Actuation::DirichletFeedback | Actuation::NeumannFeedback => {
            let ks = ks.ok_or_else(|| Error::InvalidArgument("feedback actuation needs a kernel".into()))?;
            let gains = BoundaryGains::new(ks, n, actuation == Actuation::NeumannFeedback)?;
            if actuation == Actuation::DirichletFeedback {
                (u[n] - gains.dirichlet_value(u, 0.0, h)).abs()
            } else {
                (slope_right - gains.neumann_flux(u, 0.0, h)).abs()
            }
        }
    };
    Ok(left.max(right))
}

/// Overwrites the end nodes of `u0` so that [`check_compatibility`] returns
/// zero (up to rounding).
pub fn compatibilize(
    u0: &SampledFunction,
    ks: Option<&KernelSeries>,
    actuation: Actuation,
    left_bc: LeftBc,
) -> Result<SampledFunction> {
    let mut u = u0.values().to_vec();
    let n = u0.nx();
    let h = u0.h();
    u[0] = match left_bc {
        LeftBc::DirichletZero => 0.0,
        LeftBc::NeumannZero => (4.0 * u[1] - u[2]) / 3.0,
    };
    let need_kernel = || ks.ok_or_else(|| Error::InvalidArgument("feedback actuation needs a kernel".into()));
    u[n] = match actuation {
        Actuation::None => match left_bc {
            LeftBc::DirichletZero => 0.0,
            LeftBc::NeumannZero => (4.0 * u[n - 1] - u[n - 2]) / 3.0,
        },
        Actuation::DirichletFeedback => {
            let g = BoundaryGains::new(need_kernel()?, n, false)?;
            u[n] = 0.0;
            // u_N = -S - (h/2) k(1,1) u_N, S the trapezoid sum without node N.
            let s = BoundaryGains::weighted(&g.k_row, &u, 0.0, h);
            -s / (1.0 + 0.5 * h * horner(&g.k_row[n], 0.0))
        }
        Actuation::NeumannFeedback => {
            let g = BoundaryGains::new(need_kernel()?, n, true)?;
            u[n] = 0.0;
            let s = BoundaryGains::weighted(&g.kx_row, &u, 0.0, h);
            let k11 = horner(&g.k_row[n], 0.0);
            let kx11 = horner(&g.kx_row[n], 0.0);
            ((4.0 * u[n - 1] - u[n - 2]) / (2.0 * h) - s) / (1.5 / h + k11 + 0.5 * h * kx11)
        }
    };
    SampledFunction::new(u)
}
