//! Noisy leader-follower consensus on directed networks, and the
//! reconstruction of its full dynamical matrix from follower-only time
//! series.
//!
//! The model: followers update toward a weighted average of their
//! neighbors plus Gaussian noise, while hidden leaders follow the same
//! weighted averaging deterministically, each with a pull `α` toward its
//! own state. In block form the full state evolves as
//! `x(t+1) = [[B, C], [D, E]] x(t) + [noise; 0]`, and only the follower
//! components of `x` are observed.
//!
//! Eliminating the hidden components turns follower data into a short
//! autoregression whose lag blocks are `B`, `C·D`, and `C·E·D`
//! ([`arfit`]). From those, [`single`] rebuilds one hidden leader exactly
//! in the noiseless limit, and [`multi`] rebuilds several under symmetric
//! disjoint coupling. [`evaluate`] scores reconstructions against ground
//! truth, and [`pipeline`] wires the whole chain together.
//!
//! ```
//! use lfrecon::network::{generate_paper_network, GenerateParams};
//! use lfrecon::simulate::{run, RunParams};
//! use lfrecon::arfit::fit_trajectory;
//! use lfrecon::single::recover_single;
//! use lfrecon::threshold::ThresholdRule;
//!
//! # fn main() -> lfrecon::Result<()> {
//! let params = GenerateParams {
//!     alphas: Some(vec![0.1]),
//!     ..GenerateParams::new(5, 1, 0.5)
//! };
//! let spec = generate_paper_network(&params, 7)?;
//! let trajectory = run(&spec, &RunParams::new(50_000), 1)?;
//! let blocks = fit_trajectory(&trajectory, 3)?;
//! let recovered = recover_single(&blocks, &ThresholdRule::default())?;
//! assert!((recovered.alpha_hat - 0.1).abs() < 0.5);
//! # Ok(())
//! # }
//! ```

pub mod arfit;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod multi;
pub mod network;
pub mod pipeline;
pub mod simulate;
pub mod single;
pub mod threshold;
mod util;

pub use error::{Error, RejectReason, Result};
pub use util::{derive_seed, log_log_slope, median, percentile};
