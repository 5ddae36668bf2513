//! Delay margin of hybrid loops: a continuous plant closed through a discrete controller.
//!
//! The discrete controller's response on the unit circle is sampled, re-identified as a
//! continuous descriptor model by Loewner interpolation, and the loop margin is computed
//! in the continuous domain. A sampled-data time-domain simulator with a transport delay
//! serves as an independent reference.

// `!(x <= limit)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretize;
pub mod error;
pub mod hybrid_sim;
pub mod io;
pub mod linalg;
pub mod loewner;
pub mod lti;
pub mod margin;
pub mod ode;
pub mod pipeline;

pub use error::{Error, Result};
pub use lti::{ContinuousStateSpace, DiscreteStateSpace, PoleSet};
