//! Numerical laboratory for the stochastic Hodgkin-Huxley neuron driven by
//! periodic Ornstein-Uhlenbeck input.

pub mod calculus;
pub mod control;
pub mod ergodic;
pub mod error;
pub mod export;
pub mod hormander;
pub mod model;
pub mod quad;
pub mod sde;

pub use error::{Error, Result};
