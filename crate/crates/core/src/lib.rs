//! Neural solvers for forward-backward SDEs with jumps.
//!
//! * [`nn`]: reverse-mode tape, tanh networks, Adam
//! * [`kernels`]: seedable Gaussian, Poisson, Merton, Variance Gamma and Cox draws
//! * [`models`]: pricing FBSDE instances and the Euler forward step
//! * [`oracles`]: Black-Scholes, Merton, Variance Gamma (FFT) and Riccati references
//! * [`solvers`]: the seven training schemes and the compensator estimator
//! * [`mfg`]: smart-grid mean-field game, aggregator transform, costs and Price of Anarchy
//! * [`report`]: CSV bodies for training and trajectory output

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernels;
pub mod mfg;
pub mod models;
pub mod nn;
pub mod oracles;
pub mod report;
pub mod solvers;

pub use error::{Error, Result};
