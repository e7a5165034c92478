//! GMSDB clustering: approximate data by a BIC-optimal Gaussian mixture,
//! measure statistical separation between its components with Mahalanobis
//! pair percentiles, and group components into the largest set of
//! statistically separable superclusters.
//!
//! ```no_run
//! use gmsdb::{datasets, pipeline};
//!
//! let data = datasets::generate(&datasets::preset("grains", None)?, 1)?;
//! let model = pipeline::fit(&data.points, &pipeline::GmsdbConfig::default())?;
//! let labels = pipeline::predict_hard(&model, &data.points)?;
//! # Ok::<(), gmsdb::Error>(())
//! ```

pub mod data;
pub mod datasets;
pub mod distance;
mod error;
pub mod gmm;
pub mod grouping;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
mod seed;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use pipeline::{fit, predict_hard, predict_soft, GmsdbConfig, GmsdbModel};
pub use seed::derive_seed;
