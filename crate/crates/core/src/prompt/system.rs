//! System-message variants that can precede any user prompt.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PromptError;

const SP_OM_EXPERT: &str = "You are an ontology matching expert. You assess whether two entities \
drawn from different ontologies refer to the same concept, answering strictly with \"True\" or \
\"False\".";

const SP_BIOMEDICAL_SPECIALIST: &str = "You are a biomedical terminology specialist with deep \
knowledge of anatomy and of hierarchical vocabulary structure. Judge concept equivalence \
carefully, considering that the same structure may be named differently across species and \
resources, and answer strictly with \"True\" or \"False\".";

const SP_SYNONYM_AWARE: &str = "You are an ontology matching expert. Entity names may be \
accompanied by synonyms; treat every synonym as an alternative name of the same concept, not as \
a separate entity. Answer strictly with \"True\" or \"False\".";

const SP_EXPLAIN_NLF: &str = "You are an ontology matching expert. The question describes two \
entities in plain language, including the broader categories they belong to. Decide whether they \
denote the same concept and answer strictly with \"True\" or \"False\".";

/// Identifier for a system-message variant. `None` sends no system message.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum SystemPromptId {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "om-expert")]
    OmExpert,
    #[serde(rename = "biomedical-specialist")]
    BiomedicalSpecialist,
    #[serde(rename = "synonym-aware")]
    SynonymAware,
    #[serde(rename = "explain-nlf")]
    ExplainNlf,
}

impl SystemPromptId {
    pub const ALL: [SystemPromptId; 5] = [
        SystemPromptId::None,
        SystemPromptId::OmExpert,
        SystemPromptId::BiomedicalSpecialist,
        SystemPromptId::SynonymAware,
        SystemPromptId::ExplainNlf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemPromptId::None => "none",
            SystemPromptId::OmExpert => "om-expert",
            SystemPromptId::BiomedicalSpecialist => "biomedical-specialist",
            SystemPromptId::SynonymAware => "synonym-aware",
            SystemPromptId::ExplainNlf => "explain-nlf",
        }
    }
}

impl fmt::Display for SystemPromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemPromptId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SystemPromptId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PromptError::UnknownSystemPrompt(s.to_string()))
    }
}

/// The system-message texts in effect for a run: built-in defaults, with
/// per-id overrides from configuration.
#[derive(Debug, Clone, Default)]
pub struct SystemPrompts {
    overrides: BTreeMap<SystemPromptId, String>,
}

impl SystemPrompts {
    pub fn with_overrides(overrides: BTreeMap<SystemPromptId, String>) -> Self {
        SystemPrompts { overrides }
    }

    /// Text for `id`, or `None` when no system message should be sent.
    pub fn text(&self, id: SystemPromptId) -> Option<&str> {
        if let Some(text) = self.overrides.get(&id) {
            return Some(text.as_str());
        }
        match id {
            SystemPromptId::None => None,
            SystemPromptId::OmExpert => Some(SP_OM_EXPERT),
            SystemPromptId::BiomedicalSpecialist => Some(SP_BIOMEDICAL_SPECIALIST),
            SystemPromptId::SynonymAware => Some(SP_SYNONYM_AWARE),
            SystemPromptId::ExplainNlf => Some(SP_EXPLAIN_NLF),
        }
    }
}
