//! Simulation and measurement toolkit for hybrid (Markov-switching)
//! stochastic differential equations with bounded delays.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. The `parallel` feature (on by default) fans path ensembles out
//! over rayon; results are identical with or without it because every path
//! draws from its own counter-based random stream.
//!
//! Layout:
//! - [`switching`]: generators of the switching chain and exact mode paths.
//! - [`model`]: coefficient contracts, delays, controlled systems and the
//!   assumption checkers.
//! - [`simulate`]: Euler-Maruyama on grids refined at mode jumps.
//! - [`measure`]: empirical measures on segment space, the bounded-Lipschitz
//!   distance and Krylov-Bogolyubov averages.
//! - [`experiments`]: scenario suites that produce tabular reports.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod linalg;
mod par;
mod prelude;

pub mod experiments;
pub mod measure;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod switching;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use switching::{Generator, Mode, ModePath};

/// Version of this crate, recorded in output provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
