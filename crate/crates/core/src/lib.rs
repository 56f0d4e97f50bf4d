//! Self-explaining link prediction on continuous-time interaction graphs.
//!
//! A query `(u, v, t)` is answered from the `L` most recent interactions
//! touching `u` or `v`. The window is encoded by an MLP-Mixer, a stochastic
//! edge mask selects an explanatory subset, and a frequency-guided split
//! separates recurring-pair evidence (stability) from first-time-pair
//! evidence (transition) before the two views are fused into a prediction.

pub mod bottleneck;
pub mod disentangler;
pub mod ensembler;
pub mod error;
pub mod event_store;
pub mod evaluator;
pub mod features;
pub mod mixer;
pub mod model;
pub mod par;
pub mod params;
pub mod rng;
pub mod synthetic;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};
