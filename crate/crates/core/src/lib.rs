//! Hybrid decoding of LDPC codes: a neural min-sum first stage with an
//! adaptive ordered statistics post-processor for its failures.

pub mod adam;
pub mod channel;
pub mod codes;
pub mod corpus;
pub mod decoder;
pub mod dia;
pub mod error;
pub mod gf2;
pub mod harness;
pub mod osd;
pub mod training;

pub use error::{Error, Result};
