//! Hybrid topic-model / word-embedding document features.

mod binio;
pub mod classify;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod features;
pub mod fingerprint;
pub mod hybrid;
pub mod lda;
pub mod linalg;
pub mod par;
pub mod pca;
pub mod pipeline;
pub mod special;
pub mod synthetic;

pub use error::{Error, Result};
