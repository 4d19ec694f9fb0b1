//! Query-aware frame retrieval for video question answering.
//!
//! A query is decomposed into captions that prefilter the candidate frames,
//! a lightweight vision-language scorer rates the survivors, grouped inverse
//! transform sampling picks the final frame budget, and an answer model
//! replies over several views with a vote. Model inference goes through the
//! traits in [`backends`]; everything else is deterministic computation.
//!
//! With the default `engine` feature off, only the pure parts are built.

pub mod backends;
pub mod config;
pub mod costmodel;
pub mod decompose;
pub mod error;
pub mod eval;
pub mod grouping;
pub mod manifest;
pub mod multiview;
pub mod pipeline;
pub mod prefilter;
pub mod report;
pub mod retrieval;
pub mod score;
pub mod types;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use types::{FrameRecord, Query};
