//! Distribution-diverse multi-expert (DDME) distillation for long-tail,
//! multi-label query classification.
//!
//! Three teacher networks trained under PV-forward, uniform and PV-inverse
//! weighted losses label the historical click data; their predictions are
//! merged into the training set with prior-preserving PV allocation, and a
//! FastText-style student memorizes the result.

pub mod binio;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod eval;
pub mod experts;
pub mod featurizer;
pub mod hashing;
pub mod pipeline;
pub mod student;

pub use crate::error::{Error, Result};
