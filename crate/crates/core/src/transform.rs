//! Backstepping transformation `w = u + int_0^x k(x,y,t) u(y) dy` and its
//! inverse.
//!
//! Quadrature uses the nodes of the sampled function itself, so the
//! transform shares its grid with the simulator. The inverse solves
//! `v = int_0^x k (w - v) dy` by successive approximation
//! (`v_0 = int k w`, `v_n = -int k v_{n-1}`) and returns `u = w - sum v_n`.

use crate::error::{Error, Result};
use crate::grid::{horner, trapezoid, SampledFunction};
use crate::kernel::KernelSeries;

/// Kernel frozen at one time on the `nx` grid: row `i` holds
/// `k(x_i, x_j, t)` for `j <= i`.
#[derive(Debug, Clone)]
pub struct BacksteppingTransform {
    nx: usize,
    t: f64,
    rows: Vec<Vec<f64>>,
}

/// Iterate diagnostics from [`BacksteppingTransform::inverse_with_trace`].
#[derive(Debug, Clone)]
pub struct InverseTrace {
    pub u: SampledFunction,
    /// `sup_x |v_n(x)|` for each computed iterate.
    pub iterate_sups: Vec<f64>,
}

impl BacksteppingTransform {
    pub fn new(ks: &KernelSeries, nx: usize, t: f64) -> Result<Self> {
        if nx < 2 {
            return Err(Error::InvalidArgument("nx must be >= 2".into()));
        }
        let rows = (0..=nx)
            .map(|i| {
                let x = i as f64 / nx as f64;
                (0..=i)
                    .map(|j| ks.k_coeffs(x, j as f64 / nx as f64).map(|c| horner(&c, t)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nx, t, rows })
    }

    /// Identity transform (`k = 0`).
    pub fn identity(nx: usize) -> Self {
        Self {
            nx,
            t: 0.0,
            rows: (0..=nx).map(|i| vec![0.0; i + 1]).collect(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `sup |k(x,y,t)|` over the grid.
    pub fn kernel_sup(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, f: &SampledFunction) -> Result<()> {
        if f.nx() != self.nx {
            return Err(Error::Mismatch(format!(
                "function has nx = {}, transform built for nx = {}",
                f.nx(),
                self.nx
            )));
        }
        Ok(())
    }

    /// `(T f)(x_i) = trapezoid over y in [0, x_i] of k(x_i, y) f(y)`.
    fn volterra(&self, f: &[f64]) -> Vec<f64> {
        let h = 1.0 / self.nx as f64;
        self.rows
            .iter()
            .map(|row| {
                let prod: Vec<f64> = row.iter().zip(f).map(|(k, v)| k * v).collect();
                trapezoid(&prod, h)
            })
            .collect()
    }

    pub fn forward(&self, u: &SampledFunction) -> Result<SampledFunction> {
        self.check(u)?;
        let v = self.volterra(u.values());
        Ok(SampledFunction::from_raw(
            u.values().iter().zip(v).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn inverse(&self, w: &SampledFunction, tol: f64, max_iter: usize) -> Result<SampledFunction> {
        self.inverse_with_trace(w, tol, max_iter).map(|tr| tr.u)
    }

    pub fn inverse_with_trace(&self, w: &SampledFunction, tol: f64, max_iter: usize) -> Result<InverseTrace> {
        self.check(w)?;
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument("need tol > 0 and max_iter >= 1".into()));
        }
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut iterate = self.volterra(w.values());
        let mut total = iterate.clone();
        let mut sups = vec![sup(&iterate)];
        while sups.last().copied().unwrap_or(0.0) > tol {
            if sups.len() >= max_iter {
                return Err(Error::NonConvergence {
                    iterations: sups.len(),
                    last_sup: *sups.last().unwrap_or(&f64::NAN),
                });
            }
            iterate = self.volterra(&iterate).into_iter().map(|v| -v).collect();
            for (t, v) in total.iter_mut().zip(&iterate) {
                *t += v;
            }
            sups.push(sup(&iterate));
        }
        let u = w.values().iter().zip(&total).map(|(a, b)| a - b).collect();
        Ok(InverseTrace {
            u: SampledFunction::from_raw(u),
            iterate_sups: sups,
        })
    }
}

/// One-shot `w = K u` at time `t`.
pub fn forward(ks: &KernelSeries, u: &SampledFunction, t: f64) -> Result<SampledFunction> {
    BacksteppingTransform::new(ks, u.nx(), t)?.forward(u)
}

/// One-shot `u = K^{-1} w` at time `t`.
pub fn inverse(ks: &KernelSeries, w: &SampledFunction, t: f64, tol: f64, max_iter: usize) -> Result<SampledFunction> {
    BacksteppingTransform::new(ks, w.nx(), t)?.inverse(w, tol, max_iter)
}
