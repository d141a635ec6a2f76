//! Identification of oscillator models in descriptor form
//! `dξ/dt = (g1(r) I + g2(r) J) ξ`, `a3 = g3(r)` from amplitude, phase and
//! shift-mode measurements, with adjoint-based gradients, Sobolev smoothing,
//! conjugate-gradient optimization and POD preprocessing.

// `!(x > 0.0)` is the NaN-rejecting form used throughout, and index loops
// over small fixed-size arrays read closer to the formulas.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod gridfn;
pub mod model;
pub mod ode;
pub mod optimize;
pub mod pod;
pub mod sobolev;
pub mod validate;

pub use error::{Error, Result};
