//! Dual-order entity classification for Bangla medical text.
//!
//! Records pair a sentence with an entity span. Each pair is packed twice,
//! text-first and entity-first, and two independent encoders read one layout
//! each before a shared head classifies the entity.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod pairseq;
pub mod pipeline;
pub mod textprep;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
