//! Numerics for heavy-tailed distribution classes and random-walk suprema.
//!
//! The library has three layers:
//!
//! * exact piecewise tail constructions and transforms ([`tailfn`],
//!   [`distops`]), evaluated in log-domain arithmetic so values stay
//!   accurate far beyond `f64` underflow;
//! * a convolution and tail-integral engine with certified error
//!   ([`quad`], [`convolve`]) feeding class-constant estimators and
//!   membership diagnostics ([`classify`]);
//! * the random-walk supremum machinery ([`supremum`]) built on
//!   compound-geometric ladder representations, with ruin and M/G/1
//!   applications ([`apps`]).
//!
//! Everything downstream of a probe list is deterministic, and every Monte
//! Carlo entry point takes an explicit seed with counter-based per-path
//! streams, so results do not depend on thread scheduling.

pub mod apps;
pub mod classify;
pub mod cli;
pub mod convolve;
pub mod dist;
pub mod distops;
pub mod error;
pub mod logmag;
pub mod quad;
pub mod supremum;
pub mod tailfn;

pub use dist::HtDist;
pub use error::{Error, Result};
pub use logmag::Mag;
pub use tailfn::{Family, PiecewiseTail};
