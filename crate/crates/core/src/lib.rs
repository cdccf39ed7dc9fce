//! Security analysis for unidimensional continuous-variable
//! measurement-device-independent QKD.
//!
//! The two physical links to the relay are reduced to one equivalent
//! channel (`channel`), the resulting two-mode Gaussian state is analyzed
//! (`gaussian`), and key rates are computed asymptotically (`keyrate`) or
//! for finite blocks (`finite_size`). `mc` samples the estimation model to
//! check the finite-size statistics independently, and `sweep` drives
//! parameter sweeps and figure presets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod finite_size;
pub mod gaussian;
pub mod keyrate;
pub mod mc;
pub mod sweep;

pub use error::{Error, Result};
