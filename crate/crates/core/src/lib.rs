//! Stochastic control barrier functions for control-affine Itô SDEs.
//!
//! The crate is organised bottom-up:
//!
//! - [`calculus`]: plants `dx = {f + g(u_o + u)} dt + σ dw`, scalar fields
//!   with analytic derivatives, and the generator operators built on them.
//! - [`certificates`]: safe sets, grid-based certificate checks and the
//!   closed-form safety probability bounds.
//! - [`compensators`]: the closed-form min-norm compensator and the
//!   worked-example compensators together with their derived constants.
//! - [`sim`]: Euler–Maruyama ensembles with first-exit detection.
//! - [`analysis`]: exit-probability verdicts, binomial intervals and the
//!   μ-zone statistic.

pub mod analysis;
pub mod calculus;
pub mod certificates;
pub mod compensators;
mod error;
pub mod sim;

pub use calculus::{ControlAffineSde, Diffusion, FieldRef, PreInput, ScalarField};
pub use certificates::{CertificateKind, CertificateReport, Grid, SafeSet};
pub use compensators::{Compensator, CompensatorRef};
pub use error::{Error, Result};
