//! Uniform grids shared by the kernel, the transform and the simulator.

use crate::error::{Error, Result};

/// Node values on the uniform grid `x_i = i / nx`, `i = 0..=nx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "sampled function needs nx >= 2, got {} nodes",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at node {i}")));
        }
        Ok(Self { values })
    }

    pub fn from_fn(nx: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..=nx).map(|i| f(i as f64 / nx as f64)).collect())
    }

    pub fn zeros(nx: usize) -> Result<Self> {
        Self::new(vec![0.0; nx + 1])
    }

    /// Wraps values without the finiteness check; used for simulator states
    /// that may have blown up.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn nx(&self) -> usize {
        self.values.len() - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.nx() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.nx() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid `L2` norm over [0,1].
    pub fn l2_norm(&self) -> f64 {
        trapezoid(&self.values.iter().map(|v| v * v).collect::<Vec<_>>(), self.h()).sqrt()
    }

    pub fn scaled_add(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.nx() != other.nx() {
            return Err(Error::Mismatch(format!("nx {} vs {}", self.nx(), other.nx())));
        }
        Ok(Self::from_raw(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        ))
    }
}

/// Composite trapezoid rule over uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Running trapezoid integral, `out[0] = 0`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// Horner evaluation of `sum_p coeffs[p] t^p`.
pub fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Node values over the closed triangle `{0 <= j <= i <= m}`, row-major by
/// `i` (the `xi` index).
#[derive(Debug, Clone, PartialEq)]
pub struct TriGrid {
    m: usize,
    data: Vec<f64>,
}

impl TriGrid {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; (m + 1) * (m + 2) / 2],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let m = rows.len() - 1;
        debug_assert!(rows.iter().enumerate().all(|(i, r)| r.len() == i + 1));
        Self {
            m,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    fn offset(i: usize) -> usize {
        i * (i + 1) / 2
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i && i <= self.m);
        self.data[Self::offset(i) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i <= self.m);
        self.data[Self::offset(i) + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[Self::offset(i)..Self::offset(i + 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Piecewise interpolation at fractional indices `(u, v)` with
    /// `0 <= v <= u <= m`: bilinear on interior cells, linear on the half
    /// cells cut by the diagonal.
    pub fn interpolate(&self, u: f64, v: f64) -> f64 {
        let m = self.m;
        let u = u.clamp(0.0, m as f64);
        let v = v.clamp(0.0, u);
        let i = (u.floor() as usize).min(m.saturating_sub(1));
        let j = (v.floor() as usize).min(i);
        let a = u - i as f64;
        let b = v - j as f64;
        if j == i {
            // Lower half of the diagonal cell: nodes (i,i), (i+1,i), (i+1,i+1).
            let b = b.min(a);
            (1.0 - a) * self.get(i, i) + (a - b) * self.get(i + 1, i) + b * self.get(i + 1, i + 1)
        } else {
            (1.0 - a) * (1.0 - b) * self.get(i, j)
                + a * (1.0 - b) * self.get(i + 1, j)
                + (1.0 - a) * b * self.get(i, j + 1)
                + a * b * self.get(i + 1, j + 1)
        }
    }
}
