//! Gain kernel synthesis by successive approximation.
//!
//! The kernel `k(x,y,t)` is stored in characteristic coordinates
//! `xi = (x+y)/2`, `eta = (x-y)/2` as `G(xi,eta,t) = sum_n G_n(xi,eta,t)`.
//! In these coordinates the kernel equation reads
//!
//! ```text
//! G_{xi eta} = (a(xi - eta, t) + lambda + d/dt) G
//! ```
//!
//! Dirichlet-left plants (`u(0,t) = 0`) use
//!
//! ```text
//! G_0     = 1/2 int_eta^xi (a(tau,t) + lambda) dtau
//! G_{n+1} = int_eta^xi int_0^eta (a(tau-s,t) + lambda + d/dt) G_n(tau,s,t) ds dtau
//! ```
//!
//! and Neumann-left plants (`u_x(0,t) = 0`, hence `k_y(x,0,t) = 0`) use
//!
//! ```text
//! H_n(xi,eta) = int_0^eta (a(xi-s,t) + lambda + d/dt) G_{n-1}(xi,s,t) ds   (n >= 1)
//! H_0(xi,eta) = 1/2 (a(xi,t) + lambda)
//! G_n(xi,eta) = 2 int_0^eta H_n(s,s) ds + int_eta^xi H_n(tau,eta) dtau
//! ```
//!
//! normalized by `G(0,0,t) = 0`.
//!
//! Every term is a polynomial in `t` with node-valued coefficients, so the
//! time derivative is an exact coefficient shift. Space integrals use
//! cumulative trapezoid sums on the uniform triangle `0 <= eta <= xi <= 1`.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::coefficient::CoefficientPolyT;
use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, horner, TriGrid};

pub const DEFAULT_T_VALID: f64 = 0.9;
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// Plant with `u(0,t) = 0`; kernel satisfies `k(x,0,t) = 0`.
    DirichletLeft,
    /// Plant with `u_x(0,t) = 0`; kernel satisfies `k_y(x,0,t) = 0`.
    NeumannLeft,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DirichletLeft => "dirichlet",
            Self::NeumannLeft => "neumann",
        }
    }
}

/// One term `G_n` of the series: node grids of its `t`-power coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTermGrid {
    order_n: usize,
    tpoly_grids: Vec<TriGrid>,
}

impl KernelTermGrid {
    pub fn order(&self) -> usize {
        self.order_n
    }

    /// `t`-degree of this term.
    pub fn degree(&self) -> usize {
        self.tpoly_grids.len() - 1
    }

    pub fn power(&self, p: usize) -> &TriGrid {
        &self.tpoly_grids[p]
    }

    pub fn powers(&self) -> &[TriGrid] {
        &self.tpoly_grids
    }

    fn node_coeffs(&self, i: usize, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.tpoly_grids.iter().map(move |g| g.get(i, j))
    }
}

/// Residual statistics of a synthesized kernel against the kernel equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `max |k_xx - k_yy - k_t - (a(y,t)+lambda) k|`.
    pub max_pde_residual: f64,
    /// Neumann family only: the same residual with `k_t` dropped.
    pub max_pde_residual_static: Option<f64>,
    /// `|k(x,0,t)|` (Dirichlet) or `|k_y(x,0,t)|` (Neumann).
    pub max_bc_residual: f64,
    /// `|2 d/dx k(x,x,t) - (a(x,t) + lambda)|`.
    pub max_diagonal_residual: f64,
    pub grid_m: usize,
    pub fd_step: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone)]
pub struct KernelSeries {
    terms: Vec<KernelTermGrid>,
    lambda: f64,
    family: KernelFamily,
    grid_m: usize,
    coefficient: CoefficientPolyT,
    t_valid: f64,
}

/// `(a + lambda)` coefficient samples indexed by `[t-power][node]` at
/// `y = node * h`.
struct Synthesizer<'a> {
    family: KernelFamily,
    m: usize,
    h: f64,
    shifted: Vec<Vec<f64>>,
    _a: &'a CoefficientPolyT,
}

impl<'a> Synthesizer<'a> {
    fn new(family: KernelFamily, a: &'a CoefficientPolyT, lambda: f64, m: usize) -> Self {
        let h = 1.0 / m as f64;
        let shifted = (0..=a.degree_t())
            .map(|j| {
                (0..=m)
                    .map(|i| a.coeff(j, i as f64 * h) + if j == 0 { lambda } else { 0.0 })
                    .collect()
            })
            .collect();
        Self {
            family,
            m,
            h,
            shifted,
            _a: a,
        }
    }

    fn degree_a(&self) -> usize {
        self.shifted.len() - 1
    }

    fn first_term(&self) -> KernelTermGrid {
        let grids = self
            .shifted
            .par_iter()
            .map(|c| {
                let cum = cumulative_trapezoid(c, self.h);
                let rows = (0..=self.m)
                    .map(|i| {
                        (0..=i)
                            .map(|j| match self.family {
                                KernelFamily::DirichletLeft => 0.5 * (cum[i] - cum[j]),
                                KernelFamily::NeumannLeft => 0.5 * (cum[i] + cum[j]),
                            })
                            .collect()
                    })
                    .collect();
                TriGrid::from_rows(rows)
            })
            .collect();
        KernelTermGrid {
            order_n: 0,
            tpoly_grids: grids,
        }
    }

    fn next_term(&self, prev: &KernelTermGrid) -> KernelTermGrid {
        let deg_prev = prev.degree();
        let deg_new = deg_prev + self.degree_a();
        let grids = (0..=deg_new)
            .into_par_iter()
            .map(|p| self.integrate_power(prev, p))
            .collect();
        KernelTermGrid {
            order_n: prev.order_n + 1,
            tpoly_grids: grids,
        }
    }

    /// `t^p` coefficient of the next term.
    fn integrate_power(&self, prev: &KernelTermGrid, p: usize) -> TriGrid {
        let deg_prev = prev.degree();
        let h = self.h;
        // Inner integral P(k, l) = int_0^{s_l} F(tau_k, s) ds, one row per tau.
        let inner: Vec<Vec<f64>> = (0..=self.m)
            .into_par_iter()
            .map(|k| {
                let f: Vec<f64> = (0..=k)
                    .map(|l| {
                        let y = k - l;
                        let mut acc = 0.0;
                        for (j, c) in self.shifted.iter().enumerate().take(p + 1) {
                            if p - j <= deg_prev {
                                acc += c[y] * prev.tpoly_grids[p - j].get(k, l);
                            }
                        }
                        if p < deg_prev {
                            acc += (p + 1) as f64 * prev.tpoly_grids[p + 1].get(k, l);
                        }
                        acc
                    })
                    .collect();
                cumulative_trapezoid(&f, h)
            })
            .collect();

        // Outer integral Q(i, j) = int_{eta_j}^{xi_i} P(tau, j) dtau.
        let mut out = TriGrid::zeros(self.m);
        for i in 1..=self.m {
            for j in 0..i {
                let q = out.get(i - 1, j) + 0.5 * h * (inner[i - 1][j] + inner[i][j]);
                out.set(i, j, q);
            }
        }

        if self.family == KernelFamily::NeumannLeft {
            let diag: Vec<f64> = (0..=self.m).map(|l| inner[l][l]).collect();
            let along = cumulative_trapezoid(&diag, h);
            for i in 0..=self.m {
                for (j, d) in along.iter().enumerate().take(i + 1) {
                    out.set(i, j, out.get(i, j) + 2.0 * d);
                }
            }
        }
        out
    }
}

fn check_synthesis_args(lambda: f64, n_terms: usize, grid_m: usize) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if n_terms == 0 {
        return Err(Error::InvalidArgument("n_terms must be >= 1".into()));
    }
    if grid_m < 8 {
        return Err(Error::InvalidArgument(format!("grid_m must be >= 8, got {grid_m}")));
    }
    Ok(())
}

fn check_term(term: &KernelTermGrid) -> Result<()> {
    if term.tpoly_grids.iter().all(TriGrid::all_finite) {
        Ok(())
    } else {
        Err(Error::SynthesisFailure {
            term: term.order_n,
        })
    }
}

/// Derivative of a coefficient-vector valued function of one variable at
/// `c`, restricted to `[lo, hi]`: central when both neighbours fit,
/// otherwise the second-order three-point one-sided formula.
fn line_derivative<F>(f: F, c: f64, step: f64, lo: f64, hi: f64) -> Option<Vec<f64>>
where
    F: Fn(f64) -> Vec<f64>,
{
    let combine = |parts: &[(f64, Vec<f64>)]| {
        let len = parts.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        let mut out = vec![0.0; len];
        for (w, v) in parts {
            for (o, x) in out.iter_mut().zip(v) {
                *o += w * x;
            }
        }
        out
    };
    let eps = DOMAIN_SLACK;
    if c - step >= lo - eps && c + step <= hi + eps {
        let s = 0.5 / step;
        Some(combine(&[(s, f(c + step)), (-s, f(c - step))]))
    } else if c - 2.0 * step >= lo - eps {
        let s = 0.5 / step;
        Some(combine(&[(3.0 * s, f(c)), (-4.0 * s, f(c - step)), (s, f(c - 2.0 * step))]))
    } else if c + 2.0 * step <= hi + eps {
        let s = 0.5 / step;
        Some(combine(&[(-3.0 * s, f(c)), (4.0 * s, f(c + step)), (-s, f(c + 2.0 * step))]))
    } else {
        None
    }
}

impl KernelSeries {
    /// Kernel for the plant with `u(0,t) = 0`.
    pub fn synthesize_dirichlet(
        a: &CoefficientPolyT,
        lambda: f64,
        n_terms: usize,
        grid_m: usize,
    ) -> Result<Self> {
        Self::synthesize(KernelFamily::DirichletLeft, a, lambda, n_terms, grid_m)
    }

    /// Kernel for the plant with `u_x(0,t) = 0`.
    pub fn synthesize_neumann(
        a: &CoefficientPolyT,
        lambda: f64,
        n_terms: usize,
        grid_m: usize,
    ) -> Result<Self> {
        Self::synthesize(KernelFamily::NeumannLeft, a, lambda, n_terms, grid_m)
    }

    pub fn synthesize(
        family: KernelFamily,
        a: &CoefficientPolyT,
        lambda: f64,
        n_terms: usize,
        grid_m: usize,
    ) -> Result<Self> {
        check_synthesis_args(lambda, n_terms, grid_m)?;
        let syn = Synthesizer::new(family, a, lambda, grid_m);
        let mut terms = Vec::with_capacity(n_terms);
        let first = syn.first_term();
        check_term(&first)?;
        terms.push(first);
        while terms.len() < n_terms {
            let next = syn.next_term(terms.last().expect("non-empty"));
            check_term(&next)?;
            terms.push(next);
        }
        Ok(Self {
            terms,
            lambda,
            family,
            grid_m,
            coefficient: a.clone(),
            t_valid: DEFAULT_T_VALID,
        })
    }

    /// Adds terms until the last one's sup norm (at `t_valid`) drops below
    /// `tol`, or `max_terms` is reached.
    pub fn synthesize_until(
        family: KernelFamily,
        a: &CoefficientPolyT,
        lambda: f64,
        grid_m: usize,
        tol: f64,
        max_terms: usize,
    ) -> Result<Self> {
        check_synthesis_args(lambda, max_terms, grid_m)?;
        let syn = Synthesizer::new(family, a, lambda, grid_m);
        let mut ks = Self {
            terms: vec![syn.first_term()],
            lambda,
            family,
            grid_m,
            coefficient: a.clone(),
            t_valid: DEFAULT_T_VALID,
        };
        check_term(&ks.terms[0])?;
        while ks.terms.len() < max_terms && ks.term_sup_norm(ks.terms.len() - 1) >= tol {
            let next = syn.next_term(ks.terms.last().expect("non-empty"));
            check_term(&next)?;
            ks.terms.push(next);
        }
        Ok(ks)
    }

    pub fn with_t_valid(mut self, t_valid: f64) -> Result<Self> {
        if !(t_valid > 0.0 && t_valid < 1.0) {
            return Err(Error::InvalidArgument(format!("t_valid must lie in (0,1), got {t_valid}")));
        }
        self.t_valid = t_valid;
        Ok(self)
    }

    pub fn terms(&self) -> &[KernelTermGrid] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn grid_m(&self) -> usize {
        self.grid_m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.grid_m as f64
    }

    pub fn coefficient(&self) -> &CoefficientPolyT {
        &self.coefficient
    }

    pub fn t_valid(&self) -> f64 {
        self.t_valid
    }

    /// Finite-difference step for kernel derivatives: two grid spacings, so
    /// stencils in `x` move `xi` and `eta` by whole nodes.
    pub fn default_dx_step(&self) -> f64 {
        2.0 * self.h()
    }

    /// True when `t` lies past the validity horizon of the series bound.
    /// Evaluation still works there; callers report it as a warning.
    pub fn past_horizon(&self, t: f64) -> bool {
        t > self.t_valid
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(KernelTermGrid::degree).max().unwrap_or(0)
    }

    /// Adds `delta` to one stored node value. Used to check that the
    /// verifiers catch a corrupted kernel.
    pub fn perturb_node(&mut self, term: usize, power: usize, i: usize, j: usize, delta: f64) -> Result<()> {
        let grid = self
            .terms
            .get_mut(term)
            .and_then(|t| t.tpoly_grids.get_mut(power))
            .ok_or_else(|| Error::InvalidArgument(format!("no term {term} / power {power}")))?;
        if j > i || i > grid.m() {
            return Err(Error::Domain(format!("node ({i},{j}) outside triangle")));
        }
        grid.set(i, j, grid.get(i, j) + delta);
        Ok(())
    }

    /// `t`-coefficients of `G(xi, eta, .)` at fractional grid position.
    pub fn g_coeffs(&self, xi: f64, eta: f64) -> Vec<f64> {
        let m = self.grid_m as f64;
        let (u, v) = (xi * m, eta * m);
        let mut out = vec![0.0; self.max_degree() + 1];
        for term in &self.terms {
            for (o, g) in out.iter_mut().zip(&term.tpoly_grids) {
                *o += g.interpolate(u, v);
            }
        }
        out
    }

    fn check_xy(x: f64, y: f64) -> Result<(f64, f64)> {
        let s = DOMAIN_SLACK;
        if !(x <= 1.0 + s && y >= -s && y <= x + s) {
            return Err(Error::Domain(format!(
                "kernel evaluated at (x,y) = ({x},{y}) outside 0 <= y <= x <= 1"
            )));
        }
        let x = x.min(1.0);
        let y = y.max(0.0).min(x);
        Ok((x, y))
    }

    /// `t`-coefficients of `k(x, y, .)`.
    pub fn k_coeffs(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        let (x, y) = Self::check_xy(x, y)?;
        Ok(self.g_coeffs(0.5 * (x + y), 0.5 * (x - y)))
    }

    /// `t`-coefficients of `k_x(x, y, .)` by finite differences with step
    /// `h`. Central where possible, three-point one-sided at `x = 1` or
    /// near the diagonal; at the corner `x = y = 1` the derivative is taken
    /// as `(G_xi + G_eta) / 2`.
    pub fn kx_coeffs(&self, x: f64, y: f64, h: f64) -> Result<Vec<f64>> {
        let (x, y) = Self::check_xy(x, y)?;
        if let Some(d) = line_derivative(|s| self.g_coeffs(0.5 * (s + y), 0.5 * (s - y)), x, h, y, 1.0) {
            return Ok(d);
        }
        let (g_xi, g_eta) = self.g_gradient(0.5 * (x + y), 0.5 * (x - y), h)?;
        Ok(g_xi.iter().zip(&g_eta).map(|(a, b)| 0.5 * (a + b)).collect())
    }

    /// `t`-coefficients of `k_y(x, y, .)`, same conventions as
    /// [`Self::kx_coeffs`].
    pub fn ky_coeffs(&self, x: f64, y: f64, h: f64) -> Result<Vec<f64>> {
        let (x, y) = Self::check_xy(x, y)?;
        if let Some(d) = line_derivative(|s| self.g_coeffs(0.5 * (x + s), 0.5 * (x - s)), y, h, 0.0, x) {
            return Ok(d);
        }
        let (g_xi, g_eta) = self.g_gradient(0.5 * (x + y), 0.5 * (x - y), h)?;
        Ok(g_xi.iter().zip(&g_eta).map(|(a, b)| 0.5 * (a - b)).collect())
    }

    fn g_gradient(&self, xi: f64, eta: f64, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let hs = 0.5 * h;
        let g_xi = line_derivative(|s| self.g_coeffs(s, eta), xi, hs, eta, 1.0);
        let g_eta = line_derivative(|s| self.g_coeffs(xi, s), eta, hs, 0.0, xi);
        match (g_xi, g_eta) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Domain(format!(
                "no room for a derivative stencil of step {h} at (xi,eta) = ({xi},{eta})"
            ))),
        }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(horner(&self.k_coeffs(x, y)?, t))
    }

    pub fn eval_dx(&self, x: f64, y: f64, t: f64, h: f64) -> Result<f64> {
        Ok(horner(&self.kx_coeffs(x, y, h)?, t))
    }

    pub fn eval_dy(&self, x: f64, y: f64, t: f64, h: f64) -> Result<f64> {
        Ok(horner(&self.ky_coeffs(x, y, h)?, t))
    }

    fn term_sup_norm(&self, n: usize) -> f64 {
        let term = &self.terms[n];
        let m = self.grid_m;
        let mut sup = 0.0f64;
        for i in 0..=m {
            // Only the image of 0 <= y <= x <= 1, i.e. xi + eta <= 1.
            for j in 0..=i.min(m - i) {
                let c: Vec<f64> = term.node_coeffs(i, j).collect();
                sup = sup.max(horner(&c, self.t_valid).abs());
            }
        }
        sup
    }

    /// `sup |G_n(xi, eta, t_valid)|` over the grid nodes of the physical
    /// region, one entry per term.
    pub fn term_sup_norms(&self) -> Vec<f64> {
        (0..self.terms.len()).map(|n| self.term_sup_norm(n)).collect()
    }

    /// Majorant `2^n C^n (xi eta)^n / n! (1-t)^-(n+1)` maximized over the
    /// physical region (`xi eta <= 1/4`). Diagnostic only.
    pub fn dominance_bound(n: usize, c: f64, t: f64) -> f64 {
        let mut b = 1.0 / (1.0 - t);
        for k in 1..=n {
            b *= 2.0 * c * 0.25 / k as f64 / (1.0 - t);
        }
        b
    }

    /// Checks the kernel equation, the boundary condition at `y = 0` and the
    /// diagonal condition at interior sample points.
    ///
    /// Sample points are snapped to grid nodes, so with `fd_step` a multiple
    /// of `2 / grid_m` every stencil point is a node and the residual
    /// measures discretization error without interpolation error.
    pub fn verify_residual(
        &self,
        a: &CoefficientPolyT,
        lambda: f64,
        n_samples: usize,
        fd_step: f64,
    ) -> Result<ResidualReport> {
        if !(fd_step > 0.0 && fd_step < 0.25) {
            return Err(Error::Domain(format!(
                "fd_step {fd_step} does not fit a stencil inside the triangle"
            )));
        }
        if n_samples < 2 {
            return Err(Error::InvalidArgument("n_samples must be >= 2".into()));
        }
        let h = self.h();
        let d = fd_step;
        let eps = DOMAIN_SLACK;
        let times: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|f| f * self.t_valid).collect();

        let mut interior = BTreeSet::new();
        for ia in 0..n_samples {
            for ib in 0..n_samples {
                let x = ia as f64 / (n_samples - 1) as f64;
                let y = x * ib as f64 / (n_samples - 1) as f64;
                let i = (0.5 * (x + y) / h).round() as usize;
                let j = (0.5 * (x - y) / h).round() as usize;
                let (xs, ys) = ((i + j) as f64 * h, (i as f64 - j as f64) * h);
                if j <= i && ys >= d - eps && xs + d <= 1.0 + eps && xs - ys >= d - eps {
                    interior.insert((i, j));
                }
            }
        }
        if interior.is_empty() {
            return Err(Error::Domain(format!(
                "fd_step {fd_step} leaves no interior sample points"
            )));
        }

        let k = |x: f64, y: f64| self.g_coeffs(0.5 * (x + y), 0.5 * (x - y));
        let mut max_pde = 0.0f64;
        let mut max_static = 0.0f64;
        for &(i, j) in &interior {
            let (x, y) = ((i + j) as f64 * h, (i as f64 - j as f64) * h);
            let c0 = k(x, y);
            let cxp = k(x + d, y);
            let cxm = k(x - d, y);
            let cyp = k(x, y + d);
            let cym = k(x, y - d);
            let kt: Vec<f64> = c0.iter().enumerate().skip(1).map(|(p, c)| p as f64 * c).collect();
            for &t in &times {
                let kxx = (horner(&cxp, t) - 2.0 * horner(&c0, t) + horner(&cxm, t)) / (d * d);
                let kyy = (horner(&cyp, t) - 2.0 * horner(&c0, t) + horner(&cym, t)) / (d * d);
                let react = (a.eval_unchecked(y, t) + lambda) * horner(&c0, t);
                let stat = kxx - kyy - react;
                max_pde = max_pde.max((stat - horner(&kt, t)).abs());
                max_static = max_static.max(stat.abs());
            }
        }

        // Boundary y = 0 at xi = eta = x/2 nodes, diagonal y = x at eta = 0 nodes.
        let mut max_bc = 0.0f64;
        let mut max_diag = 0.0f64;
        let mut n_edge = 0;
        for i in 0..=self.grid_m {
            let x = i as f64 * h;
            if i % 2 == 0 && x > 0.0 {
                let c0 = k(x, 0.0);
                let stencil = if self.family == KernelFamily::NeumannLeft && x >= 2.0 * d - eps {
                    Some((c0.clone(), k(x, d), k(x, 2.0 * d)))
                } else {
                    None
                };
                for &t in &times {
                    let r = match self.family {
                        KernelFamily::DirichletLeft => horner(&c0, t).abs(),
                        KernelFamily::NeumannLeft => match &stencil {
                            Some((a0, a1, a2)) => {
                                ((-3.0 * horner(a0, t) + 4.0 * horner(a1, t) - horner(a2, t)) / (2.0 * d)).abs()
                            }
                            None => continue,
                        },
                    };
                    max_bc = max_bc.max(r);
                }
                n_edge += 1;
            }
            if x >= d - eps && x + d <= 1.0 + eps {
                let cp = k(x + d, x + d);
                let cm = k(x - d, x - d);
                for &t in &times {
                    let slope = (horner(&cp, t) - horner(&cm, t)) / (2.0 * d);
                    let target = a.eval_unchecked(x, t) + lambda;
                    max_diag = max_diag.max((2.0 * slope - target).abs());
                }
                n_edge += 1;
            }
        }

        Ok(ResidualReport {
            max_pde_residual: max_pde,
            max_pde_residual_static: (self.family == KernelFamily::NeumannLeft).then_some(max_static),
            max_bc_residual: max_bc,
            max_diagonal_residual: max_diag,
            grid_m: self.grid_m,
            fd_step,
            n_points: interior.len() + n_edge,
        })
    }
}
