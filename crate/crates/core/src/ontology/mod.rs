//! Lexical and hierarchical slice of an OWL ontology.
//!
//! Only what prompt construction needs is kept per entity: labels, synonyms,
//! and named direct parents. Everything else in the source file (restrictions,
//! equivalence axioms, imports, ABox relations) is skipped at parse time.

mod rdfxml;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use rdfxml::load_ontology;

/// Category of a named entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Class,
    Property,
    Individual,
}

/// One ontology entity with its lexical representation and named parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub iri: String,
    pub kind: EntityKind,
    /// Label-property values, ordered by property priority then
    /// lexicographically within a property. Deduplicated case-sensitively.
    pub labels: Vec<String>,
    /// Synonym-property values in (property priority, document) order,
    /// deduplicated and excluding anything already in `labels`.
    pub synonyms: Vec<String>,
    /// Named superclasses (classes/properties) or asserted types
    /// (individuals), in document order. Never contains the top entity or
    /// anonymous superclasses.
    pub direct_parents: Vec<String>,
}

impl EntityRecord {
    /// Preferred human-readable name: the first label, or the IRI fragment
    /// verbatim (underscores preserved) when the entity has no label.
    pub fn display_label(&self) -> &str {
        match self.labels.first() {
            Some(label) => label.as_str(),
            None => iri_fragment(&self.iri),
        }
    }
}

/// Fragment of an IRI: the part after the last `#`, else after the last `/`,
/// else the whole IRI.
pub fn iri_fragment(iri: &str) -> &str {
    match iri.rsplit_once('#') {
        Some((_, frag)) if !frag.is_empty() => frag,
        _ => match iri.rsplit_once('/') {
            Some((_, frag)) if !frag.is_empty() => frag,
            _ => iri,
        },
    }
}

/// Which annotation properties carry labels and synonyms, in priority order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexicalConfig {
    pub label_properties: Vec<String>,
    pub synonym_properties: Vec<String>,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        LexicalConfig {
            label_properties: vec![
                "http://www.w3.org/2000/01/rdf-schema#label".into(),
                "http://www.w3.org/2004/02/skos/core#prefLabel".into(),
            ],
            synonym_properties: vec![
                "http://www.geneontology.org/formats/oboInOwl#hasExactSynonym".into(),
                "http://www.geneontology.org/formats/oboInOwl#hasRelatedSynonym".into(),
                "http://www.geneontology.org/formats/oboInOwl#hasBroadSynonym".into(),
                "http://www.w3.org/2004/02/skos/core#altLabel".into(),
                "http://ncicb.nci.nih.gov/xml/owl/EVS/Thesaurus.owl#FULL_SYN".into(),
            ],
        }
    }
}

/// A loaded ontology. Immutable after load; share freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    source_path: String,
    entities: BTreeMap<String, EntityRecord>,
    /// Parent IRIs referenced by some entity but not declared in this file.
    unresolved_parents: BTreeSet<String>,
}

impl Ontology {
    pub(crate) fn new(source_path: String, entities: BTreeMap<String, EntityRecord>) -> Self {
        let unresolved_parents = entities
            .values()
            .flat_map(|e| e.direct_parents.iter())
            .filter(|p| !entities.contains_key(p.as_str()))
            .cloned()
            .collect();
        Ontology {
            source_path,
            entities,
            unresolved_parents,
        }
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn get(&self, iri: &str) -> Option<&EntityRecord> {
        self.entities.get(iri)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn unresolved_parents(&self) -> impl Iterator<Item = &str> {
        self.unresolved_parents.iter().map(|s| s.as_str())
    }
}

/// One ancestor in a [`Lineage`] level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub iri: String,
    pub label: String,
    pub synonyms: Vec<String>,
}

/// Up to two ancestor levels of an entity, ready for prompt rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub level0: String,
    pub level0_synonyms: Vec<String>,
    /// Direct parents, sorted by (label, IRI). Empty iff the entity has no
    /// named parents resolvable in its ontology.
    pub level1: Vec<LineageEntry>,
    /// Parents of parents, deduplicated by IRI, sorted by (label, IRI).
    /// Populated only at depth 2.
    pub level2: Vec<LineageEntry>,
}

/// Collects the ancestor levels of `entity` within `ontology`.
///
/// `depth` is 1 or 2. Parent IRIs that do not resolve in the ontology are
/// skipped (they remain visible via [`Ontology::unresolved_parents`]).
pub fn lineage(entity: &EntityRecord, ontology: &Ontology, depth: u8) -> Lineage {
    debug_assert!(depth == 1 || depth == 2);
    let level1 = resolve_level(entity.direct_parents.iter(), ontology);
    let level2 = if depth >= 2 && !level1.is_empty() {
        let grandparent_iris: Vec<&String> = level1
            .iter()
            .filter_map(|e| ontology.get(&e.iri))
            .flat_map(|e| e.direct_parents.iter())
            .collect();
        resolve_level(grandparent_iris.into_iter(), ontology)
    } else {
        Vec::new()
    };
    Lineage {
        level0: entity.display_label().to_string(),
        level0_synonyms: entity.synonyms.clone(),
        level1,
        level2,
    }
}

fn resolve_level<'a>(
    iris: impl Iterator<Item = &'a String>,
    ontology: &Ontology,
) -> Vec<LineageEntry> {
    let mut seen = BTreeSet::new();
    let mut entries: Vec<LineageEntry> = iris
        .filter(|iri| seen.insert(iri.as_str().to_string()))
        .filter_map(|iri| ontology.get(iri))
        .map(|record| LineageEntry {
            iri: record.iri.clone(),
            label: record.display_label().to_string(),
            synonyms: record.synonyms.clone(),
        })
        .collect();
    entries.sort_by(|a, b| (&a.label, &a.iri).cmp(&(&b.label, &b.iri)));
    entries
}

#[derive(Debug, thiserror::Error)]
pub enum OntologyError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed XML near byte {offset}: {message}")]
    Xml {
        path: String,
        offset: u64,
        message: String,
    },
}

impl OntologyError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        OntologyError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
