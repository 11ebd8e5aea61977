//! difflab: one-dimensional diffusion models end to end.
//!
//! The crate covers the pipeline from model specification to inference and
//! pricing:
//!
//! - [`model`] — parametric families (GBM, Vasicek, CIR, CKLS), generic and
//!   time-varying coefficient models, closed-form invariant and transition
//!   densities where they exist.
//! - [`simulate`] — Euler, strong order-one and exact trajectory samplers
//!   with reproducible counter-based seeding.
//! - [`smoothing`] — kernels, kernel density estimation, Nadaraya–Watson and
//!   local-linear regression, bandwidth selection by cross-validation.
//! - [`state_estimators`] — drift/volatility estimation localized in the
//!   state variable, including higher-order difference schemes and their
//!   variance inflation factors.
//! - [`time_estimators`] — time-localized fits of time-varying models, with
//!   a generalized likelihood ratio test of coefficient constancy.
//! - [`inference`] — parametric fitting (pseudo/exact MLE, GMM, indirect
//!   inference), nonparametric transition densities, and specification tests.
//! - [`derivatives`] — payoffs, Black–Scholes pricing and implied
//!   volatility, Monte Carlo pricing, state-price density extraction.
//!
//! Heavy inner loops (Monte Carlo batches, bootstrap replicates, grid
//! evaluations) run on rayon when the default `parallel` feature is enabled
//! and fall back to equivalent sequential code otherwise; see [`exec`].

pub mod error;
pub mod exec;
pub mod model;
pub mod numerics;
pub mod path;
pub mod report;
pub mod simulate;
pub mod smoothing;
pub mod state_estimators;
pub mod time_estimators;

pub use error::{Error, Result};
pub use model::{Family, ModelSpec};
pub use path::SamplePath;
