//! Core machinery for structured evaluation of AI-generated videos.
//!
//! The pieces fit together like this: [`sampler`] turns a frame stream into a
//! small set of representative frames, [`schema`] defines the nine-aspect
//! report (comments plus scores) that an evaluator model produces for those
//! frames, [`weighter`] maps report spans onto tokenizer offsets to build
//! weighted loss masks for training such an evaluator, and [`metrics`]
//! measures how well predicted reports line up with human ratings.
//!
//! Everything here is pure and synchronous; model-endpoint plumbing lives in
//! the gateway crate.

pub mod clock;
pub mod dataset;
pub mod hash;
pub mod metrics;
pub mod sampler;
pub mod schema;
pub mod weighter;
