//! Oracle-assisted vetting of ontology alignments.

pub mod alignment;
pub mod eval;
pub mod ontology;
pub mod oracle;
pub mod prompt;
pub mod task;

pub use alignment::{AlignmentSet, Decision, Mapping, MappingKey, Relation};
pub use eval::{DiagnosticReport, PairedTestResult, TaskReport};
pub use ontology::{EntityRecord, LexicalConfig, Ontology};
pub use oracle::{Oracle, OracleConfig, OracleVerdict};
pub use prompt::{PromptInstance, PromptTemplateId, SystemPromptId};
pub use task::{RunConfig, TaskRunReport, TaskSpec};

/// Version string stamped into run manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
