//! Alignment data model: mappings, alignment sets, and the merge step.
//!
//! A mapping is a directed correspondence between one entity of a source
//! ontology and one of a target ontology, carrying a relation and a
//! confidence. Alignment sets deduplicate on the (source, target, relation)
//! identity and keep the highest confidence seen for a key, so parsing the
//! same file twice or unioning overlapping sets is harmless.

mod rdf;
mod tsv;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use rdf::{parse_alignment_rdf, write_alignment_rdf};
pub use tsv::{parse_alignment_tsv, write_alignment_tsv};

/// Relation asserted by a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    /// `=` in the text formats.
    #[serde(rename = "=")]
    Equivalence,
    /// `>`: the source entity subsumes the target entity.
    #[serde(rename = ">")]
    Subsumes,
    /// `<`: the source entity is subsumed by the target entity.
    #[serde(rename = "<")]
    SubsumedBy,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Equivalence => "=",
            Relation::Subsumes => ">",
            Relation::SubsumedBy => "<",
        }
    }

    pub fn from_symbol(s: &str) -> Result<Self, AlignmentError> {
        match s.trim() {
            "=" => Ok(Relation::Equivalence),
            ">" => Ok(Relation::Subsumes),
            "<" => Ok(Relation::SubsumedBy),
            other => Err(AlignmentError::BadRelation(other.to_string())),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Identity of a mapping. Two mappings with the same key are the same
/// correspondence regardless of confidence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MappingKey {
    pub source: String,
    pub target: String,
    pub relation: Relation,
}

impl fmt::Display for MappingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.source, self.relation, self.target)
    }
}

/// A single correspondence between two entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub source: String,
    pub target: String,
    pub relation: Relation,
    /// Confidence in (0, 1]. Zero-confidence mappings are rejected at
    /// construction so later stages never have to special-case them.
    pub confidence: f64,
}

impl Mapping {
    pub fn new(
        source: impl Into<String>,
        target: impl Into<String>,
        relation: Relation,
        confidence: f64,
    ) -> Result<Self, AlignmentError> {
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(AlignmentError::BadConfidence(confidence));
        }
        Ok(Mapping {
            source: source.into(),
            target: target.into(),
            relation,
            confidence,
        })
    }

    /// Equivalence mapping with confidence 1.0.
    pub fn equivalence(source: impl Into<String>, target: impl Into<String>) -> Self {
        Mapping {
            source: source.into(),
            target: target.into(),
            relation: Relation::Equivalence,
            confidence: 1.0,
        }
    }

    pub fn key(&self) -> MappingKey {
        MappingKey {
            source: self.source.clone(),
            target: self.target.clone(),
            relation: self.relation,
        }
    }
}

/// What an alignment set is used as within a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentRole {
    /// Full or trusted output of a matching system.
    SystemOutput,
    /// The uncertain subset put to the oracle.
    AskSet,
    /// Gold-standard reference.
    Reference,
}

/// Ordered, deduplicated collection of mappings.
///
/// Iteration order is the `MappingKey` order, which makes every downstream
/// artifact (prompts, logs, reports) independent of input file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSet {
    role: AlignmentRole,
    mappings: BTreeMap<MappingKey, Mapping>,
}

impl AlignmentSet {
    pub fn new(role: AlignmentRole) -> Self {
        AlignmentSet {
            role,
            mappings: BTreeMap::new(),
        }
    }

    pub fn from_mappings(role: AlignmentRole, mappings: impl IntoIterator<Item = Mapping>) -> Self {
        let mut set = AlignmentSet::new(role);
        for m in mappings {
            set.insert(m);
        }
        set
    }

    pub fn role(&self) -> AlignmentRole {
        self.role
    }

    /// Inserts a mapping. On a duplicate key the higher confidence wins, so
    /// insertion order never matters.
    pub fn insert(&mut self, mapping: Mapping) {
        let key = mapping.key();
        match self.mappings.get_mut(&key) {
            Some(existing) => {
                if mapping.confidence > existing.confidence {
                    *existing = mapping;
                }
            }
            None => {
                self.mappings.insert(key, mapping);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.mappings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mappings.is_empty()
    }

    pub fn contains(&self, key: &MappingKey) -> bool {
        self.mappings.contains_key(key)
    }

    pub fn get(&self, key: &MappingKey) -> Option<&Mapping> {
        self.mappings.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mapping> {
        self.mappings.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &MappingKey> {
        self.mappings.keys()
    }

    /// Set intersection on mapping identity; keeps `self`'s confidences.
    pub fn intersection(&self, other: &AlignmentSet) -> AlignmentSet {
        AlignmentSet {
            role: self.role,
            mappings: self
                .mappings
                .iter()
                .filter(|(k, _)| other.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Set difference on mapping identity.
    pub fn difference(&self, other: &AlignmentSet) -> AlignmentSet {
        AlignmentSet {
            role: self.role,
            mappings: self
                .mappings
                .iter()
                .filter(|(k, _)| !other.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Set union; on shared keys the higher confidence wins.
    pub fn union(&self, other: &AlignmentSet) -> AlignmentSet {
        let mut out = self.clone();
        for m in other.iter() {
            out.insert(m.clone());
        }
        out
    }

    /// Restriction to equivalence mappings, the default scoring universe.
    pub fn equivalences_only(&self) -> AlignmentSet {
        AlignmentSet {
            role: self.role,
            mappings: self
                .mappings
                .iter()
                .filter(|(k, _)| k.relation == Relation::Equivalence)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

impl<'a> IntoIterator for &'a AlignmentSet {
    type Item = &'a Mapping;
    type IntoIter = std::collections::btree_map::Values<'a, MappingKey, Mapping>;

    fn into_iter(self) -> Self::IntoIter {
        self.mappings.values()
    }
}

/// Oracle decision about one mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    /// No usable answer was obtained. Must be resolved by the caller before
    /// scoring; the merge step falls back to the base alignment's decision.
    Abstain,
}

/// Confusion counts over an ask set, with membership in the reference as the
/// positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Mappings of the ask set that are in the reference.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Mappings of the ask set that are not in the reference.
    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }
}

/// Tallies oracle decisions over `ask` against `reference`.
///
/// Every ask mapping must have an `Accept` or `Reject` entry in `decisions`;
/// abstentions must have been resolved by the caller first (the pipeline maps
/// them to the base alignment's decision). Entries for keys outside the ask
/// set are ignored.
pub fn confusion(
    ask: &AlignmentSet,
    decisions: &BTreeMap<MappingKey, Decision>,
    reference: &AlignmentSet,
) -> Result<ConfusionCounts, AlignmentError> {
    let mut missing = Vec::new();
    let mut counts = ConfusionCounts::default();
    for key in ask.keys() {
        let decided = match decisions.get(key) {
            Some(Decision::Accept) => true,
            Some(Decision::Reject) => false,
            Some(Decision::Abstain) | None => {
                missing.push(key.clone());
                continue;
            }
        };
        match (decided, reference.contains(key)) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, false) => counts.tn += 1,
            (false, true) => counts.fn_ += 1,
        }
    }
    if !missing.is_empty() {
        return Err(AlignmentError::UnresolvedDecisions(missing));
    }
    Ok(counts)
}

/// Applies oracle decisions to a base alignment.
///
/// The result is `(base \ ask)` plus the accepted ask mappings plus, for
/// abstentions, whatever the base alignment said (an abstained mapping stays
/// if and only if the base contained it). Accepted mappings keep the ask
/// set's confidence; carried-over base mappings keep the base confidence.
pub fn merge_decisions(
    base: &AlignmentSet,
    ask: &AlignmentSet,
    decisions: &BTreeMap<MappingKey, Decision>,
) -> Result<AlignmentSet, AlignmentError> {
    let mut missing = Vec::new();
    let mut merged = base.difference(ask);
    merged.role = AlignmentRole::SystemOutput;
    for mapping in ask.iter() {
        let key = mapping.key();
        match decisions.get(&key) {
            Some(Decision::Accept) => merged.insert(mapping.clone()),
            Some(Decision::Reject) => {}
            Some(Decision::Abstain) => {
                if let Some(from_base) = base.get(&key) {
                    merged.insert(from_base.clone());
                }
            }
            None => missing.push(key),
        }
    }
    if !missing.is_empty() {
        return Err(AlignmentError::UnresolvedDecisions(missing));
    }
    Ok(merged)
}

/// On-disk alignment format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentFormat {
    /// The RDF/XML exchange format used by matcher evaluation campaigns.
    AlignmentRdf,
    /// Four tab-separated columns: source, target, relation, confidence.
    Tsv,
}

impl AlignmentFormat {
    /// Infers the format from a file extension: `.tsv`/`.txt` is TSV,
    /// anything else is treated as the RDF format.
    pub fn infer(path: &Path) -> AlignmentFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => AlignmentFormat::Tsv,
            _ => AlignmentFormat::AlignmentRdf,
        }
    }
}

/// Parses an alignment file, inferring the format from the extension unless
/// one is given.
pub fn parse_alignment(
    path: &Path,
    role: AlignmentRole,
    format: Option<AlignmentFormat>,
) -> Result<AlignmentSet, AlignmentError> {
    let format = format.unwrap_or_else(|| AlignmentFormat::infer(path));
    let text = std::fs::read_to_string(path).map_err(|e| AlignmentError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    match format {
        AlignmentFormat::AlignmentRdf => {
            parse_alignment_rdf(&text, role).map_err(|e| e.with_path(path))
        }
        AlignmentFormat::Tsv => parse_alignment_tsv(&text, role).map_err(|e| e.with_path(path)),
    }
}

/// Writes an alignment in the requested format. Output is deterministic:
/// mappings are emitted in key order with LF line endings.
pub fn write_alignment(
    path: &Path,
    set: &AlignmentSet,
    format: Option<AlignmentFormat>,
) -> Result<(), AlignmentError> {
    let format = format.unwrap_or_else(|| AlignmentFormat::infer(path));
    let text = match format {
        AlignmentFormat::AlignmentRdf => write_alignment_rdf(set),
        AlignmentFormat::Tsv => write_alignment_tsv(set),
    };
    std::fs::write(path, text).map_err(|e| AlignmentError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum AlignmentError {
    #[error("confidence {0} outside (0, 1]")]
    BadConfidence(f64),
    #[error("unknown relation symbol {0:?} (expected =, > or <)")]
    BadRelation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{}cell {cell}: {message}", fmt_path(.path))]
    BadCell {
        path: Option<String>,
        /// 1-based index of the offending cell in document order.
        cell: usize,
        message: String,
    },
    #[error("{}line {line}: {message}", fmt_path(.path))]
    BadLine {
        path: Option<String>,
        /// 1-based line number.
        line: usize,
        message: String,
    },
    #[error("{}malformed XML near byte {offset}: {message}", fmt_path(.path))]
    Xml {
        path: Option<String>,
        offset: u64,
        message: String,
    },
    #[error("{} mapping(s) without an accept/reject decision, first: {}", .0.len(), .0[0])]
    UnresolvedDecisions(Vec<MappingKey>),
}

fn fmt_path(path: &Option<String>) -> String {
    match path {
        Some(p) => format!("{p}: "),
        None => String::new(),
    }
}

impl AlignmentError {
    fn with_path(mut self, path: &Path) -> Self {
        let p = path.display().to_string();
        match &mut self {
            AlignmentError::BadCell { path, .. }
            | AlignmentError::BadLine { path, .. }
            | AlignmentError::Xml { path, .. } => *path = Some(p),
            _ => {}
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str, t: &str) -> MappingKey {
        MappingKey {
            source: s.to_string(),
            target: t.to_string(),
            relation: Relation::Equivalence,
        }
    }

    #[test]
    fn confidence_range_is_enforced() {
        assert!(Mapping::new("a", "b", Relation::Equivalence, 0.0).is_err());
        assert!(Mapping::new("a", "b", Relation::Equivalence, 1.2).is_err());
        assert!(Mapping::new("a", "b", Relation::Equivalence, f64::NAN).is_err());
        assert!(Mapping::new("a", "b", Relation::Equivalence, 1.0).is_ok());
        assert!(Mapping::new("a", "b", Relation::Equivalence, 0.003).is_ok());
    }

    #[test]
    fn duplicate_keys_keep_max_confidence() {
        let mut set = AlignmentSet::new(AlignmentRole::SystemOutput);
        set.insert(Mapping::new("a", "b", Relation::Equivalence, 0.4).unwrap());
        set.insert(Mapping::new("a", "b", Relation::Equivalence, 0.9).unwrap());
        set.insert(Mapping::new("a", "b", Relation::Equivalence, 0.6).unwrap());
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(&key("a", "b")).unwrap().confidence, 0.9);

        // A different relation is a different mapping.
        set.insert(Mapping::new("a", "b", Relation::Subsumes, 0.5).unwrap());
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn iteration_is_key_ordered() {
        let mut set = AlignmentSet::new(AlignmentRole::Reference);
        set.insert(Mapping::equivalence("z", "1"));
        set.insert(Mapping::equivalence("a", "2"));
        set.insert(Mapping::equivalence("m", "3"));
        let sources: Vec<&str> = set.iter().map(|m| m.source.as_str()).collect();
        assert_eq!(sources, ["a", "m", "z"]);
    }

    #[test]
    fn set_operations_use_identity_not_confidence() {
        let left = AlignmentSet::from_mappings(
            AlignmentRole::SystemOutput,
            [
                Mapping::new("a", "1", Relation::Equivalence, 0.8).unwrap(),
                Mapping::new("b", "2", Relation::Equivalence, 0.7).unwrap(),
            ],
        );
        let right = AlignmentSet::from_mappings(
            AlignmentRole::Reference,
            [Mapping::new("a", "1", Relation::Equivalence, 0.2).unwrap()],
        );
        let inter = left.intersection(&right);
        assert_eq!(inter.len(), 1);
        assert_eq!(inter.get(&key("a", "1")).unwrap().confidence, 0.8);
        let diff = left.difference(&right);
        assert_eq!(diff.len(), 1);
        assert!(diff.contains(&key("b", "2")));
        assert_eq!(left.union(&right).len(), 2);
    }

    #[test]
    fn confusion_counts_match_hand_tally() {
        let ask = AlignmentSet::from_mappings(
            AlignmentRole::AskSet,
            [
                Mapping::equivalence("a", "1"), // in ref, accepted -> tp
                Mapping::equivalence("b", "2"), // in ref, rejected -> fn
                Mapping::equivalence("c", "3"), // not in ref, accepted -> fp
                Mapping::equivalence("d", "4"), // not in ref, rejected -> tn
            ],
        );
        let reference = AlignmentSet::from_mappings(
            AlignmentRole::Reference,
            [
                Mapping::equivalence("a", "1"),
                Mapping::equivalence("b", "2"),
            ],
        );
        let mut decisions = BTreeMap::new();
        decisions.insert(key("a", "1"), Decision::Accept);
        decisions.insert(key("b", "2"), Decision::Reject);
        decisions.insert(key("c", "3"), Decision::Accept);
        decisions.insert(key("d", "4"), Decision::Reject);
        let c = confusion(&ask, &decisions, &reference).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 1, 1, 1));
        assert_eq!(c.positives(), 2);
        assert_eq!(c.negatives(), 2);
    }

    #[test]
    fn confusion_rejects_abstentions_and_gaps() {
        let ask = AlignmentSet::from_mappings(
            AlignmentRole::AskSet,
            [
                Mapping::equivalence("a", "1"),
                Mapping::equivalence("b", "2"),
            ],
        );
        let reference = AlignmentSet::new(AlignmentRole::Reference);
        let mut decisions = BTreeMap::new();
        decisions.insert(key("a", "1"), Decision::Abstain);
        let err = confusion(&ask, &decisions, &reference).unwrap_err();
        match err {
            AlignmentError::UnresolvedDecisions(keys) => assert_eq!(keys.len(), 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn merge_applies_accept_reject_and_abstain() {
        let base = AlignmentSet::from_mappings(
            AlignmentRole::SystemOutput,
            [
                Mapping::new("keep", "1", Relation::Equivalence, 0.9).unwrap(),
                Mapping::new("drop", "2", Relation::Equivalence, 0.8).unwrap(),
                Mapping::new("held", "3", Relation::Equivalence, 0.7).unwrap(),
            ],
        );
        let ask = AlignmentSet::from_mappings(
            AlignmentRole::AskSet,
            [
                Mapping::new("drop", "2", Relation::Equivalence, 0.5).unwrap(),
                Mapping::new("held", "3", Relation::Equivalence, 0.5).unwrap(),
                Mapping::new("new", "4", Relation::Equivalence, 0.6).unwrap(),
                Mapping::new("veto", "5", Relation::Equivalence, 0.6).unwrap(),
            ],
        );
        let mut decisions = BTreeMap::new();
        decisions.insert(key("drop", "2"), Decision::Reject);
        decisions.insert(key("held", "3"), Decision::Abstain);
        decisions.insert(key("new", "4"), Decision::Accept);
        decisions.insert(key("veto", "5"), Decision::Reject);
        let merged = merge_decisions(&base, &ask, &decisions).unwrap();

        assert!(
            merged.contains(&key("keep", "1")),
            "untouched base mapping survives"
        );
        assert!(
            !merged.contains(&key("drop", "2")),
            "rejected mapping removed"
        );
        assert!(
            merged.contains(&key("held", "3")),
            "abstain falls back to base membership"
        );
        assert!(merged.contains(&key("new", "4")), "accepted mapping added");
        assert!(
            !merged.contains(&key("veto", "5")),
            "rejected non-base mapping stays out"
        );
        assert_eq!(merged.len(), 3);
        // Abstained mapping keeps the base confidence, accepted one the ask confidence.
        assert_eq!(merged.get(&key("held", "3")).unwrap().confidence, 0.7);
        assert_eq!(merged.get(&key("new", "4")).unwrap().confidence, 0.6);
    }

    #[test]
    fn merge_requires_a_decision_per_ask_mapping() {
        let base = AlignmentSet::new(AlignmentRole::SystemOutput);
        let ask =
            AlignmentSet::from_mappings(AlignmentRole::AskSet, [Mapping::equivalence("a", "1")]);
        assert!(merge_decisions(&base, &ask, &BTreeMap::new()).is_err());
    }

    #[test]
    fn relation_symbols_round_trip() {
        for r in [
            Relation::Equivalence,
            Relation::Subsumes,
            Relation::SubsumedBy,
        ] {
            assert_eq!(Relation::from_symbol(r.symbol()).unwrap(), r);
        }
        assert!(Relation::from_symbol("~").is_err());
    }
}
