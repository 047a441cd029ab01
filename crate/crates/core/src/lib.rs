//! Adaptive sparse system identification with affine filter combinations.
//!
//! This crate simulates the identification of an unknown sparse FIR system by
//! four adaptive algorithms driven on a shared input/noise stream:
//!
//! * **LMS** — the classic stochastic-gradient filter with a fixed step size;
//! * **L0-LMS** — LMS plus a zero-attracting term derived from an
//!   approximate l0-norm penalty, which pulls small taps toward exactly zero;
//! * **AC-LMS** — an affine combination of a fast and a slow LMS filter whose
//!   mixing parameter adapts by stochastic gradient (affine, not convex:
//!   the mixing parameter may leave `[0, 1]`);
//! * **AC-L0LMS** — the same combination built from two L0-LMS filters.
//!
//! The [`experiment`] module runs seeded Monte-Carlo scenarios producing mean
//! square deviation (MSD) learning curves, and [`cli`] provides config
//! handling, CSV emission, and a selftest for the binary front end.

pub mod adaptive_filters;
pub mod affine_combiner;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod signal_model;

pub use error::{Error, Result};
