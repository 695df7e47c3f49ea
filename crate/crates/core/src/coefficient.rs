//! Reaction coefficient `a(x,t) = sum_j c_j(x) t^j`.
//!
//! Synthesis needs the exact time derivative of every kernel term, so the
//! coefficient is kept polynomial in `t` while the `x` dependence is an
//! arbitrary evaluator.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type CoeffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default number of uniform samples used for `sup_x` estimates.
pub const DEFAULT_SUP_SAMPLES: usize = 1001;

#[derive(Clone)]
pub struct CoefficientPolyT {
    coeff_fns: Vec<CoeffFn>,
    label: String,
}

impl fmt::Debug for CoefficientPolyT {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientPolyT")
            .field("label", &self.label)
            .field("degree_t", &self.degree_t())
            .finish()
    }
}

impl CoefficientPolyT {
    /// Builds `a(x,t) = sum_j coeff_fns[j](x) t^j`. The list must be
    /// non-empty and every function finite on a probe grid of [0,1].
    pub fn new(coeff_fns: Vec<CoeffFn>, label: impl Into<String>) -> Result<Self> {
        if coeff_fns.is_empty() {
            return Err(Error::InvalidArgument(
                "coefficient needs at least one t-power".into(),
            ));
        }
        for (j, c) in coeff_fns.iter().enumerate() {
            for i in 0..=64 {
                let x = i as f64 / 64.0;
                if !c(x).is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient c_{j} is not finite at x = {x}"
                    )));
                }
            }
        }
        Ok(Self {
            coeff_fns,
            label: label.into(),
        })
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(mu: f64) -> Self {
        Self {
            coeff_fns: vec![Arc::new(move |_| mu)],
            label: format!("constant(mu={mu})"),
        }
    }

    /// `a(x,t) = x (b t + c)`.
    pub fn x_linear_t(b: f64, c: f64) -> Self {
        Self {
            coeff_fns: vec![Arc::new(move |x| c * x), Arc::new(move |x| b * x)],
            label: format!("x_linear_t(b={b},c={c})"),
        }
    }

    pub fn degree_t(&self) -> usize {
        self.coeff_fns.len() - 1
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `c_j(x)` without range checking.
    pub fn coeff(&self, j: usize, x: f64) -> f64 {
        self.coeff_fns.get(j).map_or(0.0, |c| c(x))
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0,1]")));
        }
        Ok(self.eval_unchecked(x, t))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, t: f64) -> f64 {
        self.coeff_fns.iter().rev().fold(0.0, |acc, c| acc * t + c(x))
    }

    /// Smallest `C` with `a + lambda << C (1-t)^-1` coefficient-wise, with each
    /// `sup_x` taken over `n_samples` uniform points.
    pub fn dominant_constant(&self, lambda: f64, n_samples: usize) -> Result<f64> {
        if n_samples < 2 {
            return Err(Error::InvalidArgument("n_samples must be >= 2".into()));
        }
        let sup = |j: usize, shift: f64| {
            (0..n_samples)
                .map(|i| (self.coeff(j, i as f64 / (n_samples - 1) as f64) + shift).abs())
                .fold(0.0, f64::max)
        };
        let mut c = sup(0, lambda);
        for j in 1..self.coeff_fns.len() {
            c = c.max(sup(j, 0.0));
        }
        Ok(c)
    }
}

/// Named coefficient families accepted by the config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientFamily {
    Zero,
    Constant { mu: f64 },
    XLinearT { b: f64, c: f64 },
}

impl CoefficientFamily {
    pub fn build(&self) -> CoefficientPolyT {
        match *self {
            Self::Zero => CoefficientPolyT::zero(),
            Self::Constant { mu } => CoefficientPolyT::constant(mu),
            Self::XLinearT { b, c } => CoefficientPolyT::x_linear_t(b, c),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Constant { .. } => "constant",
            Self::XLinearT { .. } => "x_linear_t",
        }
    }

    /// The constant value when `a` does not depend on `x` or `t`.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Self::Zero => Some(0.0),
            Self::Constant { mu } => Some(mu),
            Self::XLinearT { .. } => None,
        }
    }
}
