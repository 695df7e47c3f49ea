//! Invariant suite behind `backstep-heat verify`.

use std::sync::Arc;

use crate::analysis::{energy, fit_decay, h1_seminorm_sq, DecayNorm};
use crate::bessel;
use crate::coefficient::{CoefficientFamily, CoefficientPolyT};
use crate::error::Result;
use crate::grid::SampledFunction;
use crate::kernel::{KernelFamily, KernelSeries};
use crate::sim::{run, Actuation, SimConfig};
use crate::transform::BacksteppingTransform;

/// Residual thresholds, relative to `sup_x |a| + lambda` (floored at 1).
pub const PDE_RESIDUAL_TOL: f64 = 1e-2;
pub const EDGE_RESIDUAL_TOL: f64 = 1e-3;
pub const ROUNDTRIP_TOL: f64 = 1e-6;
pub const TARGET_ENERGY_FACTOR: f64 = 1.05;
pub const CLOSED_LOOP_FACTOR: f64 = 1.10;
pub const BESSEL_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub coefficient: CoefficientFamily,
    pub family: KernelFamily,
    pub lambda: f64,
    pub n_terms: usize,
    pub grid_m: usize,
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Perturb one kernel node before the residual check.
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    /// Small-`C` regime where the series converges in a few terms.
    fn default() -> Self {
        Self {
            coefficient: CoefficientFamily::XLinearT { b: 0.2, c: 0.5 },
            family: KernelFamily::DirichletLeft,
            lambda: 2.0,
            n_terms: 8,
            grid_m: 100,
            nx: 100,
            dt: 1e-5,
            t_end: 0.5,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: value={:.6e} threshold={:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

fn smooth_data(nx: usize, family: KernelFamily) -> Result<SampledFunction> {
    match family {
        KernelFamily::DirichletLeft => SampledFunction::from_fn(nx, |x| x * (1.0 - x) * (1.0 + 2.0 * x)),
        KernelFamily::NeumannLeft => {
            SampledFunction::from_fn(nx, |x| (std::f64::consts::PI * x).cos() + 0.5 * x * x)
        }
    }
}

pub fn run_suite(cfg: &VerifyConfig) -> Result<Vec<CheckResult>> {
    let a = cfg.coefficient.build();
    let mut ks = KernelSeries::synthesize(cfg.family, &a, cfg.lambda, cfg.n_terms, cfg.grid_m)?;
    if cfg.inject_fault {
        let m = cfg.grid_m;
        let bump = 0.1 * ks.term_sup_norms().first().copied().unwrap_or(0.0).max(1.0);
        ks.perturb_node(0, 0, m / 2, m / 8, bump)?;
    }
    let scale = (a.dominant_constant(cfg.lambda, 1001)?).max(1.0);
    let mut checks = Vec::new();

    let fd = 2.0 / cfg.grid_m as f64;
    let res = ks.verify_residual(&a, cfg.lambda, 41, fd)?;
    checks.push(CheckResult::at_most("kernel_pde_residual", res.max_pde_residual, PDE_RESIDUAL_TOL * scale));
    checks.push(CheckResult::at_most("kernel_bc_residual", res.max_bc_residual, EDGE_RESIDUAL_TOL * scale));
    checks.push(CheckResult::at_most(
        "kernel_diagonal_residual",
        res.max_diagonal_residual,
        EDGE_RESIDUAL_TOL * scale,
    ));

    if let Some(mu) = cfg.coefficient.as_constant() {
        let beta = mu + cfg.lambda;
        let (mut err, mut sup) = (0.0f64, 0.0f64);
        for i in 0..=20 {
            for j in 0..=i {
                let (x, y) = (i as f64 / 20.0, j as f64 / 20.0);
                let want = bessel::constant_kernel(cfg.family, beta, x, y);
                err = err.max((ks.eval(x, y, 0.0)? - want).abs());
                sup = sup.max(want.abs());
            }
        }
        let rel = if sup > 0.0 { err / sup } else { err };
        checks.push(CheckResult::at_most("bessel_oracle_rel_error", rel, BESSEL_REL_TOL));
    }

    let tr = BacksteppingTransform::new(&ks, cfg.nx, 0.5 * ks.t_valid())?;
    let u = smooth_data(cfg.nx, cfg.family)?;
    let back = tr.inverse(&tr.forward(&u)?, 1e-13, 500)?;
    checks.push(CheckResult::at_most(
        "transform_roundtrip_sup_error",
        back.scaled_add(1.0, &u, -1.0)?.sup_norm(),
        ROUNDTRIP_TOL,
    ));

    // Target system w_t = w_xx - lambda w, simulated directly.
    let stride = ((cfg.t_end / cfg.dt) / 50.0).round().max(1.0) as usize;
    let w0 = SampledFunction::from_fn(cfg.nx, |x| x * (1.0 - x) * (1.0 + (3.0 * x).sin()))?;
    let mut target = SimConfig::uncontrolled(CoefficientPolyT::constant(-cfg.lambda), w0, cfg.t_end);
    target.dt = cfg.dt;
    target.snapshot_stride = stride;
    let traj = run(target)?;
    let (e0, v0) = (energy(&traj.snapshots[0]), h1_seminorm_sq(&traj.snapshots[0]));
    let (mut e_ratio, mut v_ratio) = (0.0f64, 0.0f64);
    for (t, s) in traj.times.iter().zip(&traj.snapshots) {
        let g = (2.0 * cfg.lambda * t).exp();
        e_ratio = e_ratio.max(energy(s) * g / e0);
        v_ratio = v_ratio.max(h1_seminorm_sq(s) * g / v0);
    }
    checks.push(CheckResult::at_most("target_energy_ratio", e_ratio, TARGET_ENERGY_FACTOR));
    checks.push(CheckResult::at_most("target_h1_seminorm_ratio", v_ratio, TARGET_ENERGY_FACTOR));

    // Closed loop: E(Ku) <= E(Ku0) e^{-2 lambda t} (1 + eps).
    let ks = Arc::new(ks);
    let u0 = smooth_data(cfg.nx, cfg.family)?;
    let mut closed = SimConfig::controlled(ks.clone(), Actuation::DirichletFeedback, u0, cfg.t_end);
    closed.dt = cfg.dt;
    closed.snapshot_stride = stride;
    let traj = run(closed)?;
    let rep = fit_decay(&traj, DecayNorm::WEnergy(&ks), None, cfg.lambda)?;
    checks.push(CheckResult::at_most("closed_loop_w_energy_ratio", rep.estimated_m, CLOSED_LOOP_FACTOR));

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let checks = run_suite(&VerifyConfig::default()).unwrap();
        for c in &checks {
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn corrupted_kernel_fails_residual() {
        let cfg = VerifyConfig {
            inject_fault: true,
            t_end: 0.05,
            ..VerifyConfig::default()
        };
        let checks = run_suite(&cfg).unwrap();
        let pde = checks.iter().find(|c| c.name == "kernel_pde_residual").unwrap();
        assert!(!pde.passed, "{}", pde.line());
    }

    #[test]
    fn zero_suite_passes_trivially() {
        let cfg = VerifyConfig {
            coefficient: CoefficientFamily::Zero,
            lambda: 0.0,
            n_terms: 2,
            grid_m: 32,
            nx: 50,
            dt: 1e-4,
            t_end: 0.2,
            ..VerifyConfig::default()
        };
        let checks = run_suite(&cfg).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
        let bessel = checks.iter().find(|c| c.name == "bessel_oracle_rel_error").unwrap();
        assert_eq!(bessel.value, 0.0);
    }
}
