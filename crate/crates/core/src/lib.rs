//! Guided trajectory diffusion for point-mass maze navigation, with a
//! self-evolving data pool.
//!
//! The crate is organized bottom-up:
//!
//! - [`maze`]: layouts, double-integrator dynamics, PD tracking and the
//!   expert dataset.
//! - [`diffusion`]: noise schedules, forward corruption, guided reverse
//!   sampling with inpainting, and the noise-prediction loss.
//! - [`denoiser`]: the temporal residual network with hand-written
//!   backpropagation and Adam.
//! - [`guidance`]: rewards, returns and trajectory-space gradients.
//! - [`evolve`]: synthetic data generation, the rule-based discriminator,
//!   the append-only data pool and the phase loop.
//! - [`eval`]: closed-loop episodes, benchmark suites and reports.
//! - [`persist`]: configuration, checkpoints and pool files.
//! - [`pipeline`]: config-driven end-to-end steps shared by the CLI.
//!
//! Batch work (gradients, sampling, episodes) runs on rayon when the
//! `parallel` feature is enabled and sequentially otherwise, with identical
//! results.

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod evolve;
pub mod guidance;
pub mod maze;
pub mod par;
pub mod persist;
pub mod pipeline;
pub mod planner;
pub mod rng;

pub use error::{Error, Result};
