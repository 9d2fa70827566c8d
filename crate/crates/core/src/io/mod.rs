//! File formats: rectangular input matrices, binary chain storage, and the
//! analysis report with its tabular companions.
//!
//! Every writer here is deterministic. Identical inputs produce identical
//! bytes, so a fixed seed yields a byte-for-byte reproducible output
//! directory.

pub mod dataset;
pub mod persist;
pub mod report;

pub use dataset::{load_dataset, save_dataset};
pub use persist::{load_chains, read_chain, save_chains, store_paths, write_chain, ChainStoreManifest};
pub use report::{
    decisions_csv, detections_csv, quantile, read_probs, read_report, write_report,
    AnalysisReport, ChainDiagnostic, DecisionSummary, GlobalSummary, RuleKind, REPORT_FILES,
};
