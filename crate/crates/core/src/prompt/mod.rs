//! Byte-deterministic rendering of the six mapping-assessment prompts.
//!
//! The template texts are frozen resources; every placeholder is filled from
//! ontology data in a single pass, so rendering the same mapping against the
//! same ontologies yields identical bytes on every run and platform (LF
//! endings only). Template wording is intentionally not normalized across
//! variants: each template preserves its own published phrasing, including
//! the "belongs to broader category" wording in the EC+S variant that differs
//! from the EC variant's "belongs to the broader category". Do not "fix" one
//! to match the other.

mod system;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::{Mapping, MappingKey};
use crate::ontology::{lineage, EntityRecord, Lineage, LineageEntry, Ontology};

pub use system::{SystemPromptId, SystemPrompts};

const TPL_P: &str = include_str!("templates/p.tmpl");
const TPL_P_EC: &str = include_str!("templates/p_ec.tmpl");
const TPL_P_NLF: &str = include_str!("templates/p_nlf.tmpl");
const TPL_P_NLF_EC: &str = include_str!("templates/p_nlf_ec.tmpl");
const TPL_P_NLF_S: &str = include_str!("templates/p_nlf_s.tmpl");
const TPL_P_NLF_EC_S: &str = include_str!("templates/p_nlf_ec_s.tmpl");

/// Placeholder text for the parent slot of an entity without named parents.
const TOP_LEVEL_CONCEPT: &str = "a top-level concept";

/// Most synonyms ever rendered for one entity, keeping prompts inside the
/// intended input-token envelope.
pub const SYNONYM_CAP: usize = 4;

/// The six prompt variants: base, extended context (EC), natural-language
/// friendly (NLF), and synonym inclusion (S) in the published combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptTemplateId {
    #[serde(rename = "P")]
    P,
    #[serde(rename = "P_EC")]
    PEc,
    #[serde(rename = "P_NLF")]
    PNlf,
    #[serde(rename = "P_NLF_EC")]
    PNlfEc,
    #[serde(rename = "P_NLF_S")]
    PNlfS,
    #[serde(rename = "P_NLF_EC_S")]
    PNlfEcS,
}

impl PromptTemplateId {
    pub const ALL: [PromptTemplateId; 6] = [
        PromptTemplateId::P,
        PromptTemplateId::PEc,
        PromptTemplateId::PNlf,
        PromptTemplateId::PNlfEc,
        PromptTemplateId::PNlfS,
        PromptTemplateId::PNlfEcS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptTemplateId::P => "P",
            PromptTemplateId::PEc => "P_EC",
            PromptTemplateId::PNlf => "P_NLF",
            PromptTemplateId::PNlfEc => "P_NLF_EC",
            PromptTemplateId::PNlfS => "P_NLF_S",
            PromptTemplateId::PNlfEcS => "P_NLF_EC_S",
        }
    }

    /// Natural-language friendly phrasing.
    pub fn is_nlf(self) -> bool {
        matches!(
            self,
            PromptTemplateId::PNlf
                | PromptTemplateId::PNlfEc
                | PromptTemplateId::PNlfS
                | PromptTemplateId::PNlfEcS
        )
    }

    /// Two hierarchy levels instead of one.
    pub fn has_extended_context(self) -> bool {
        matches!(
            self,
            PromptTemplateId::PEc | PromptTemplateId::PNlfEc | PromptTemplateId::PNlfEcS
        )
    }

    /// Explicit synonym clauses.
    pub fn includes_synonyms(self) -> bool {
        matches!(self, PromptTemplateId::PNlfS | PromptTemplateId::PNlfEcS)
    }

    fn text(self) -> &'static str {
        match self {
            PromptTemplateId::P => TPL_P,
            PromptTemplateId::PEc => TPL_P_EC,
            PromptTemplateId::PNlf => TPL_P_NLF,
            PromptTemplateId::PNlfEc => TPL_P_NLF_EC,
            PromptTemplateId::PNlfS => TPL_P_NLF_S,
            PromptTemplateId::PNlfEcS => TPL_P_NLF_EC_S,
        }
    }
}

impl fmt::Display for PromptTemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptTemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptTemplateId::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

/// Rendered prompt for one mapping, ready to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub template: PromptTemplateId,
    pub system: SystemPromptId,
    pub user_text: String,
    pub system_text: Option<String>,
    pub mapping_key: MappingKey,
}

impl PromptInstance {
    /// Attaches a system message variant. The prompt text is unchanged.
    pub fn with_system(mut self, id: SystemPromptId, prompts: &SystemPrompts) -> Self {
        self.system = id;
        self.system_text = prompts.text(id).map(|t| t.to_string());
        self
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("unknown prompt template {0:?} (expected one of P, P_EC, P_NLF, P_NLF_EC, P_NLF_S, P_NLF_EC_S)")]
    UnknownTemplate(String),
    #[error("unknown system prompt {0:?} (expected one of none, om-expert, biomedical-specialist, synonym-aware, explain-nlf)")]
    UnknownSystemPrompt(String),
    #[error("source entity {iri} not found in {ontology}")]
    UnresolvedSource { iri: String, ontology: String },
    #[error("target entity {iri} not found in {ontology}")]
    UnresolvedTarget { iri: String, ontology: String },
}

/// Renders `template` for `mapping`, resolving both endpoints in their
/// ontologies. No system message is attached; see
/// [`PromptInstance::with_system`].
pub fn render(
    template: PromptTemplateId,
    mapping: &Mapping,
    source_onto: &Ontology,
    target_onto: &Ontology,
) -> Result<PromptInstance, PromptError> {
    let source = source_onto
        .get(&mapping.source)
        .ok_or_else(|| PromptError::UnresolvedSource {
            iri: mapping.source.clone(),
            ontology: source_onto.source_path().to_string(),
        })?;
    let target = target_onto
        .get(&mapping.target)
        .ok_or_else(|| PromptError::UnresolvedTarget {
            iri: mapping.target.clone(),
            ontology: target_onto.source_path().to_string(),
        })?;

    let depth = if template.has_extended_context() {
        2
    } else {
        1
    };
    let source_lineage = lineage(source, source_onto, depth);
    let target_lineage = lineage(target, target_onto, depth);

    let user_text = fill_template(template, source, &source_lineage, target, &target_lineage);
    debug_assert!(user_text.ends_with("Respond with \"True\" or \"False\"."));
    Ok(PromptInstance {
        template,
        system: SystemPromptId::None,
        user_text,
        system_text: None,
        mapping_key: mapping.key(),
    })
}

fn fill_template(
    template: PromptTemplateId,
    source: &EntityRecord,
    source_lineage: &Lineage,
    target: &EntityRecord,
    target_lineage: &Lineage,
) -> String {
    let mut vars: Vec<(&str, String)> = vec![
        ("source_label", source.display_label().to_string()),
        ("target_label", target.display_label().to_string()),
    ];
    match template {
        PromptTemplateId::P | PromptTemplateId::PNlf => {
            vars.push(("source_parent", single_parent(source_lineage)));
            vars.push(("target_parent", single_parent(target_lineage)));
        }
        PromptTemplateId::PEc => {
            vars.push(("source_lineage", level_lines(source_lineage)));
            vars.push(("target_lineage", level_lines(target_lineage)));
        }
        PromptTemplateId::PNlfEc => {
            vars.push((
                "source_parents",
                joined_labels_or_top(&source_lineage.level1),
            ));
            vars.push((
                "target_parents",
                joined_labels_or_top(&target_lineage.level1),
            ));
            vars.push((
                "source_grandparent_clause",
                grandparent_clause(source_lineage, template),
            ));
            vars.push((
                "target_grandparent_clause",
                grandparent_clause(target_lineage, template),
            ));
        }
        PromptTemplateId::PNlfS => {
            vars.push(("source_parent", single_parent(source_lineage)));
            vars.push(("target_parent", single_parent(target_lineage)));
            vars.push((
                "source_synonyms",
                known_as_clause(&source.synonyms, template),
            ));
            vars.push((
                "target_synonyms",
                known_as_clause(&target.synonyms, template),
            ));
        }
        PromptTemplateId::PNlfEcS => {
            vars.push((
                "source_parents",
                joined_labels_or_top(&source_lineage.level1),
            ));
            vars.push((
                "target_parents",
                joined_labels_or_top(&target_lineage.level1),
            ));
            vars.push((
                "source_synonyms",
                known_as_clause(&source.synonyms, template),
            ));
            vars.push((
                "target_synonyms",
                known_as_clause(&target.synonyms, template),
            ));
            vars.push((
                "source_parent_synonyms",
                paren_synonyms(&level_synonyms(&source_lineage.level1), template),
            ));
            vars.push((
                "target_parent_synonyms",
                paren_synonyms(&level_synonyms(&target_lineage.level1), template),
            ));
            vars.push((
                "source_grandparent_clause",
                grandparent_clause(source_lineage, template),
            ));
            vars.push((
                "target_grandparent_clause",
                grandparent_clause(target_lineage, template),
            ));
        }
    }
    fill(template.text(), &vars)
}

/// Single-parent presentation: the lexicographically-smallest-labeled parent,
/// or the orphan placeholder.
fn single_parent(lineage: &Lineage) -> String {
    match lineage.level1.first() {
        Some(entry) => entry.label.clone(),
        None => TOP_LEVEL_CONCEPT.to_string(),
    }
}

/// Comma-joined labels of one level, or the orphan placeholder when empty.
fn joined_labels_or_top(entries: &[LineageEntry]) -> String {
    if entries.is_empty() {
        TOP_LEVEL_CONCEPT.to_string()
    } else {
        joined_labels(entries)
    }
}

fn joined_labels(entries: &[LineageEntry]) -> String {
    entries
        .iter()
        .map(|e| e.label.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Tab-indented `Level 0..2` lines for the structured extended-context
/// layout. Absent levels are omitted, except that an orphan entity still
/// gets a Level 1 line carrying the placeholder.
fn level_lines(lineage: &Lineage) -> String {
    let mut lines = vec![format!("\tLevel 0: {}", lineage.level0)];
    if lineage.level1.is_empty() {
        lines.push(format!("\tLevel 1: {TOP_LEVEL_CONCEPT}"));
    } else {
        lines.push(format!("\tLevel 1: {}", joined_labels(&lineage.level1)));
        if !lineage.level2.is_empty() {
            lines.push(format!("\tLevel 2: {}", joined_labels(&lineage.level2)));
        }
    }
    lines.join("\n")
}

/// `, under the even broader category "..."` with the level-2 labels, plus
/// the grandparents' synonyms in the synonym template. Empty when there are
/// no grandparents (including the orphan case).
fn grandparent_clause(lineage: &Lineage, template: PromptTemplateId) -> String {
    if lineage.level2.is_empty() {
        return String::new();
    }
    let mut clause = format!(
        ", under the even broader category \"{}\"",
        joined_labels(&lineage.level2)
    );
    if template.includes_synonyms() {
        clause.push_str(&paren_synonyms(&level_synonyms(&lineage.level2), template));
    }
    clause
}

/// Synonyms of a whole level: concatenated in entry order, deduplicated.
fn level_synonyms(entries: &[LineageEntry]) -> Vec<String> {
    let mut seen = Vec::new();
    for entry in entries {
        for synonym in &entry.synonyms {
            if !seen.contains(synonym) {
                seen.push(synonym.clone());
            }
        }
    }
    seen
}

/// Presentation order of synonyms differs per template and is part of the
/// frozen wording: the plain synonym template keeps load order, the
/// extended-context synonym template sorts shortest-first (ties by byte
/// order). Both cap at [`SYNONYM_CAP`].
fn presentation_synonyms(synonyms: &[String], template: PromptTemplateId) -> Vec<&str> {
    let mut view: Vec<&str> = synonyms.iter().map(|s| s.as_str()).collect();
    if template == PromptTemplateId::PNlfEcS {
        view.sort_by_key(|s| (s.len(), s.as_bytes().to_vec()));
    }
    view.truncate(SYNONYM_CAP);
    view
}

/// `, also known as "a", "b"` or empty.
fn known_as_clause(synonyms: &[String], template: PromptTemplateId) -> String {
    let view = presentation_synonyms(synonyms, template);
    if view.is_empty() {
        String::new()
    } else {
        format!(", also known as {}", quoted_list(&view))
    }
}

/// ` (also known as "a", "b")` or empty.
fn paren_synonyms(synonyms: &[String], template: PromptTemplateId) -> String {
    let view = presentation_synonyms(synonyms, template);
    if view.is_empty() {
        String::new()
    } else {
        format!(" (also known as {})", quoted_list(&view))
    }
}

fn quoted_list(items: &[&str]) -> String {
    items
        .iter()
        .map(|s| format!("\"{s}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Substitutes `{name}` placeholders in one pass. Values are emitted
/// verbatim, so braces inside ontology labels cannot trigger re-expansion.
fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len() + 128);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .unwrap_or_else(|| panic!("unterminated placeholder in template"));
        let name = &after[..close];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .unwrap_or_else(|| panic!("template placeholder {name:?} has no value"));
        out.push_str(&value.1);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}
