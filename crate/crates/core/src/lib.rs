//! Backstepping boundary stabilization of the unstable heat equation
//!
//! ```text
//! u_t = u_xx + a(x,t) u,   0 < x < 1
//! ```
//!
//! with a reaction coefficient that depends on both space and time. The
//! crate synthesizes the gain kernel `k(x,y,t)` as a truncated
//! successive-approximation series in the characteristic coordinates
//! `xi = (x+y)/2`, `eta = (x-y)/2`, applies the resulting Dirichlet or Neumann
//! boundary feedback in an explicit finite-difference simulator, and
//! measures the closed-loop decay against the exponentially stable target
//! system `w_t = w_xx - lambda w`.
//!
//! Module map:
//!
//! - [`coefficient`]: the reaction coefficient as a polynomial in `t`.
//! - [`kernel`]: kernel synthesis for the Dirichlet-left and Neumann-left
//!   plants, evaluation and residual verification.
//! - [`transform`]: the Volterra transformation `w = u + int_0^x k u dy` and
//!   its inverse by successive approximation.
//! - [`sim`]: FTCS closed-loop simulator.
//! - [`analysis`]: energies, norms, decay fits.
//! - [`verify`]: the invariant suite run by `backstep-heat verify`.
//! - [`cli`]: configuration, presets and subcommands.

pub mod analysis;
pub mod bessel;
pub mod cli;
pub mod coefficient;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod sim;
pub mod transform;
pub mod verify;

pub use coefficient::{CoefficientFamily, CoefficientPolyT};
pub use error::{Error, Result};
pub use grid::SampledFunction;
pub use kernel::{KernelFamily, KernelSeries, ResidualReport};
pub use sim::{Actuation, LeftBc, SimConfig, Trajectory};
