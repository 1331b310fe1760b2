//! Chest radiograph report evaluation toolkit.
//!
//! - [`taxonomy`], [`report`], [`corpus`]: domain types and corpus files
//! - [`labeler`]: rule-based 14-finding report labeler
//! - [`radgraph`]: entity/relation graph F1
//! - [`classification`]: confusion counts, F1, Cohen's kappa, ROC/AUC
//! - [`stats`]: paired t, repeated-measures ANOVA, Kendall's W, power
//! - [`evaluation`]: blinded rater instruments and their summaries

pub mod classification;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod labeler;
pub mod radgraph;
pub mod report;
pub mod stats;
pub mod taxonomy;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::CoreError;
pub use labeler::{Labeler, Lexicon};
pub use report::{Arm, AuthorRole, CaseId, Report, ReportId};
pub use taxonomy::{
    validate_label_vector, AssertionLabel, Finding, FindingTaxonomy, LabelVector, ScoredLabelVector,
};
