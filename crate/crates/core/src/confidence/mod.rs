//! Verbalized and internal confidence, joined into per-question records.
//!
//! Both confidences are kept on the 0-100 percent scale.

mod internal;
mod records;
mod verbal;

pub use internal::{
    extract_internal, extractors, locate_answer_token, ChoiceRenormalized, ConfidenceExtractor,
    TokenProbability,
};
pub use records::{
    build_records, build_records_with_diagnostics, extraction_failure_rate, read_records,
    records_from_jsonl, records_to_jsonl, write_records, ConfidenceRecord, Diagnostics,
    RecordStatus, RecordsFileError,
};
pub use verbal::{parse_verbalized, Verbalized};

/// CLI warns when the share of non-ok records exceeds this.
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.05;
