//! Norms, energies and exponential decay fits on trajectories.

use crate::error::{Error, Result};
use crate::grid::{trapezoid, SampledFunction};
use crate::kernel::KernelSeries;
use crate::sim::Trajectory;
use crate::transform::BacksteppingTransform;

/// Minimum number of samples inside a fit window.
pub const MIN_FIT_SAMPLES: usize = 10;
/// Default fit window as fractions of the trajectory span.
pub const DEFAULT_WINDOW: (f64, f64) = (0.2, 0.9);

/// `E = 1/2 int_0^1 f^2 dx`.
pub fn energy(f: &SampledFunction) -> f64 {
    let sq: Vec<f64> = f.values().iter().map(|v| 0.5 * v * v).collect();
    trapezoid(&sq, f.h())
}

/// Second-order finite-difference derivative on the grid (one-sided at the
/// ends).
pub fn derivative(f: &SampledFunction) -> Vec<f64> {
    let u = f.values();
    let n = f.nx();
    let h = f.h();
    (0..=n)
        .map(|i| match i {
            0 => (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h),
            i if i == n => (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h),
            i => (u[i + 1] - u[i - 1]) / (2.0 * h),
        })
        .collect()
}

/// `V = int_0^1 f_x^2 dx`.
pub fn h1_seminorm_sq(f: &SampledFunction) -> f64 {
    let sq: Vec<f64> = derivative(f).iter().map(|d| d * d).collect();
    trapezoid(&sq, f.h())
}

pub fn l2_norm(f: &SampledFunction) -> f64 {
    (2.0 * energy(f)).sqrt()
}

pub fn h1_norm(f: &SampledFunction) -> f64 {
    (2.0 * energy(f) + h1_seminorm_sq(f)).sqrt()
}

/// Quantity whose decay is fitted.
#[derive(Debug, Clone, Copy)]
pub enum DecayNorm<'a> {
    /// `||u||_{L2}`, claimed rate `lambda`.
    L2,
    /// `||u||_{H1}`, claimed rate `lambda`.
    H1,
    /// `E(w)` with `w = K u`, claimed rate `2 lambda`.
    WEnergy(&'a KernelSeries),
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    /// `-slope` of the least-squares line through `ln norm(t)` in the window.
    pub fitted_rate: f64,
    pub claimed_rate: f64,
    /// `max_t norm(t) e^{claimed t} / norm(0)` over all samples.
    pub estimated_m: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// `e^{-claimed t} - norm(t)/norm(0)`; non-negative where the bound
    /// holds with constant 1.
    pub margin_series: Vec<f64>,
    pub window: (f64, f64),
    pub n_fit_samples: usize,
}

impl DecayReport {
    /// `norm(t) <= factor * norm(0) e^{-claimed t}` at every sample.
    pub fn bound_holds(&self, factor: f64) -> bool {
        self.estimated_m <= factor
    }
}

/// Norm series of a trajectory.
pub fn norm_series(traj: &Trajectory, norm: DecayNorm<'_>) -> Result<Vec<f64>> {
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .map(|(&t, u)| match norm {
            DecayNorm::L2 => Ok(l2_norm(u)),
            DecayNorm::H1 => Ok(h1_norm(u)),
            DecayNorm::WEnergy(ks) => {
                let tr = BacksteppingTransform::new(ks, u.nx(), t)?;
                Ok(energy(&tr.forward(u)?))
            }
        })
        .collect()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits `norm(t) ~ A e^{-rate t}` over `window` (absolute times; defaults to
/// `[0.2, 0.9]` of the span).
pub fn fit_decay(
    traj: &Trajectory,
    norm: DecayNorm<'_>,
    window: Option<(f64, f64)>,
    lambda: f64,
) -> Result<DecayReport> {
    let t_end = *traj
        .times
        .last()
        .ok_or_else(|| Error::DegenerateFit("empty trajectory".into()))?;
    let window = window.unwrap_or((DEFAULT_WINDOW.0 * t_end, DEFAULT_WINDOW.1 * t_end));
    if !(window.0 < window.1) || window.0 < 0.0 || window.1 > t_end + 1e-12 {
        return Err(Error::DegenerateFit(format!(
            "window {window:?} not inside trajectory span [0, {t_end}]"
        )));
    }
    let claimed_rate = match norm {
        DecayNorm::WEnergy(_) => 2.0 * lambda,
        _ => lambda,
    };
    let norms = norm_series(traj, norm)?;
    let (fx, fy): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= window.0 - 1e-12 && **t <= window.1 + 1e-12)
        .map(|(t, n)| (*t, *n))
        .unzip();
    if fx.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateFit(format!(
            "{} samples in window, need {MIN_FIT_SAMPLES}",
            fx.len()
        )));
    }
    if fy.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::DegenerateFit("non-positive norm inside the fit window".into()));
    }
    let logs: Vec<f64> = fy.iter().map(|n| n.ln()).collect();
    let (slope, _) = linear_fit(&fx, &logs);

    let n0 = norms[0];
    let (estimated_m, margin_series) = if n0 > 0.0 {
        let m = traj
            .times
            .iter()
            .zip(&norms)
            .map(|(t, n)| n * (claimed_rate * t).exp() / n0)
            .fold(0.0, f64::max);
        let margins = traj
            .times
            .iter()
            .zip(&norms)
            .map(|(t, n)| (-claimed_rate * t).exp() - n / n0)
            .collect();
        (m, margins)
    } else {
        (f64::NAN, vec![f64::NAN; norms.len()])
    };

    Ok(DecayReport {
        fitted_rate: -slope,
        claimed_rate,
        estimated_m,
        times: traj.times.clone(),
        norms,
        margin_series,
        window,
        n_fit_samples: fx.len(),
    })
}

/// Pointwise `t1 - t2` on matching grids and sample times.
pub fn diff_trajectories(t1: &Trajectory, t2: &Trajectory) -> Result<Trajectory> {
    if t1.times.len() != t2.times.len()
        || t1.times.iter().zip(&t2.times).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Mismatch("trajectories have different sample times".into()));
    }
    if t1.nx() != t2.nx() {
        return Err(Error::Mismatch(format!("nx {} vs {}", t1.nx(), t2.nx())));
    }
    let snapshots = t1
        .snapshots
        .iter()
        .zip(&t2.snapshots)
        .map(|(a, b)| a.scaled_add(1.0, b, -1.0))
        .collect::<Result<Vec<_>>>()?;
    let (input_times, boundary_inputs) = if t1.input_times == t2.input_times {
        (
            t1.input_times.clone(),
            t1.boundary_inputs.iter().zip(&t2.boundary_inputs).map(|(a, b)| a - b).collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(Trajectory {
        times: t1.times.clone(),
        snapshots,
        input_times,
        boundary_inputs,
        diverged: t1.diverged || t2.diverged,
        divergence_time: None,
        compatibility_margin: 0.0,
        past_horizon: t1.past_horizon || t2.past_horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientPolyT;
    use crate::sim::{run, SimConfig};
    use std::f64::consts::PI;

    #[test]
    fn energy_cases() {
        assert_eq!(energy(&SampledFunction::zeros(10).unwrap()), 0.0);
        assert!((energy(&SampledFunction::from_fn(10, |_| 1.0).unwrap()) - 0.5).abs() < 1e-15);
        let s = SampledFunction::from_fn(200, |x| (PI * x).sin()).unwrap();
        assert!((energy(&s) - 0.25).abs() < 1e-4);
    }

    #[test]
    fn seminorm_cases() {
        assert_eq!(h1_seminorm_sq(&SampledFunction::from_fn(10, |_| 3.0).unwrap()), 0.0);
        assert!((h1_seminorm_sq(&SampledFunction::from_fn(10, |x| x).unwrap()) - 1.0).abs() < 1e-10);
        let s = SampledFunction::from_fn(200, |x| (PI * x).sin()).unwrap();
        assert!((h1_seminorm_sq(&s) / (PI * PI / 2.0) - 1.0).abs() < 0.01);
    }

    fn free_decay() -> Trajectory {
        let u0 = SampledFunction::from_fn(100, |x| (PI * x).sin()).unwrap();
        let mut cfg = SimConfig::uncontrolled(CoefficientPolyT::zero(), u0, 0.2);
        cfg.snapshot_stride = 500;
        run(cfg).unwrap()
    }

    #[test]
    fn free_decay_rate_is_pi_squared() {
        let rep = fit_decay(&free_decay(), DecayNorm::L2, None, 0.0).unwrap();
        assert!((rep.fitted_rate / (PI * PI) - 1.0).abs() < 0.02, "{}", rep.fitted_rate);
        assert!(rep.n_fit_samples >= MIN_FIT_SAMPLES);
        assert!(rep.estimated_m >= 1.0);
    }

    #[test]
    fn degenerate_fits() {
        let u0 = SampledFunction::zeros(50).unwrap();
        let mut cfg = SimConfig::uncontrolled(CoefficientPolyT::zero(), u0, 0.1);
        cfg.dt = 1e-4;
        cfg.snapshot_stride = 10;
        let traj = run(cfg).unwrap();
        assert!(matches!(fit_decay(&traj, DecayNorm::L2, None, 1.0), Err(Error::DegenerateFit(_))));
        let traj = free_decay();
        assert!(fit_decay(&traj, DecayNorm::L2, Some((0.0, 0.001)), 1.0).is_err());
        assert!(fit_decay(&traj, DecayNorm::L2, Some((0.1, 5.0)), 1.0).is_err());
    }

    #[test]
    fn self_difference_is_zero() {
        let t = free_decay();
        let d = diff_trajectories(&t, &t).unwrap();
        assert!(d.snapshots.iter().all(|s| s.sup_norm() == 0.0));
        let mut short = t.clone();
        short.times.pop();
        short.snapshots.pop();
        assert!(diff_trajectories(&t, &short).is_err());
    }

    #[test]
    fn linear_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-14 && (c - 2.0).abs() < 1e-14);
    }
}
