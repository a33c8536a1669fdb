//! Retrieval-augmented unit-test generation for embedded C code bases.

pub mod chunker;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod evalharness;
pub mod genpipe;
pub mod http;
pub mod lexical;
pub mod retrieval;
pub mod validate;

pub use error::{Error, Result};
