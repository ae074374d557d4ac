//! Dual averaging and its modernized, momentum-carrying variant, together
//! with the methods they are compared against and the analytic objects used
//! to certify them.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches a file
//! system, a clock or a terminal lives in the `mda-bench` companion crate.
//!
//! Layout:
//!
//! * [`vector`], [`rng`], [`trace`]: dense vectors, seeded sampling streams
//!   and per-step telemetry.
//! * [`schedules`]: the `λ_k`, `β_k`, `α_k`, `η_k`, `c_k` sequences and the
//!   inequalities they satisfy.
//! * [`optimizers`]: one state type and one step function per method.
//! * [`problems`]: desk-scale objectives with exact gradient oracles.
//! * [`runner`]: drives an optimizer over a problem and records a trace.
//! * [`analysis`]: Lyapunov functions, the per-step descent audit, step-size
//!   condition, convergence bounds and log-log rate fitting.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod error;
mod math;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod runner;
pub mod schedules;
pub mod trace;
pub mod vector;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use trace::{RunTrace, TraceRow};
pub use vector::Vector;

/// Version string recorded in trace metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
