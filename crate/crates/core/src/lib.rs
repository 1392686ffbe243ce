//! Verbalized vs. internal confidence for multiple-choice QA.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`data`]: normalized dataset loading and balanced per-subject sampling
//! - [`prompting`]: the fixed elicitation prompt
//! - [`backend`]: generation backends (seeded mock, chat-completions client)
//! - [`confidence`]: parsing the stated probability, reading the answer
//!   token's probability, per-question records
//! - [`preference`]: chosen/rejected pairs with the stated probability
//!   overwritten by the internal one
//! - [`metrics`]: rank correlation and calibration-error statistics
//! - [`report`]: Markdown/CSV tables and plot data
//!
//! Interchangeable pieces (backends, internal-confidence readers, p-value
//! methods) are looked up by name in registries so configuration can pick
//! them at runtime.

pub mod backend;
pub mod confidence;
pub mod data;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod preference;
pub mod prompting;
pub mod registry;
pub mod report;

pub use error::{BackendError, ConfidenceError, DataError, MetricError, ParseError, PreferenceError};
