//! Streaming RDF/XML reader for the OWL subset this pipeline needs.
//!
//! One pass over the file; memory holds only the entity map being built plus
//! the element currently open. Each direct child of `rdf:RDF` is either an
//! entity declaration (typed OWL element, typed node, or `rdf:Description`)
//! or skipped wholesale. Inside an entity only label properties, synonym
//! properties, `rdfs:subClassOf` / `rdfs:subPropertyOf`, and `rdf:type` are
//! inspected; any other nested structure (restrictions, equivalence axioms,
//! union classes) is consumed without interpretation.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::name::ResolveResult;
use quick_xml::reader::NsReader;

use super::{EntityKind, EntityRecord, LexicalConfig, Ontology, OntologyError};

const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
const OWL_NS: &str = "http://www.w3.org/2002/07/owl#";
const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";

const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";

/// Loads the lexical/hierarchical slice of an RDF/XML OWL file.
///
/// A file that parses but declares no entities is accepted with a warning;
/// broken XML is an error carrying the byte offset.
pub fn load_ontology(path: &Path, lexical: &LexicalConfig) -> Result<Ontology, OntologyError> {
    let file = File::open(path).map_err(|e| OntologyError::io(path, e))?;
    let mut reader = NsReader::from_reader(BufReader::with_capacity(64 * 1024, file));
    reader.config_mut().trim_text(true);

    let mut parser = Parser {
        path: path.display().to_string(),
        lexical,
        base: None,
        entities: BTreeMap::new(),
        deferred: Vec::new(),
    };
    parser.run(&mut reader)?;

    let Parser { path, entities, .. } = {
        parser.merge_deferred();
        parser
    };
    if entities.is_empty() {
        tracing::warn!("{path}: no entities found");
    }
    Ok(Ontology::new(path, entities))
}

/// Entity element being built. `kind` stays `None` for an untyped
/// `rdf:Description` until an `rdf:type` child settles it.
struct Pending {
    iri: String,
    kind: Option<EntityKind>,
    labels: Vec<(usize, String)>,
    synonyms: Vec<(usize, usize, String)>,
    parents: Vec<String>,
    /// Non-vocabulary `rdf:type` targets; become parents for individuals.
    type_iris: Vec<String>,
    seq: usize,
}

impl Pending {
    fn new(iri: String, kind: Option<EntityKind>) -> Self {
        Pending {
            iri,
            kind,
            labels: Vec::new(),
            synonyms: Vec::new(),
            parents: Vec::new(),
            type_iris: Vec::new(),
            seq: 0,
        }
    }
}

struct Parser<'a> {
    path: String,
    lexical: &'a LexicalConfig,
    base: Option<String>,
    entities: BTreeMap<String, EntityRecord>,
    /// Untyped descriptions seen before (or without) a typed declaration.
    deferred: Vec<Pending>,
}

type FileReader = NsReader<BufReader<File>>;

impl Parser<'_> {
    fn run(&mut self, reader: &mut FileReader) -> Result<(), OntologyError> {
        let mut buf = Vec::new();
        // Envelope elements (rdf:RDF) left open at EOF; entity subtrees are
        // consumed whole by the handlers, so this only tracks the outer shell.
        let mut open = 0usize;
        loop {
            buf.clear();
            let event = reader
                .read_event_into(&mut buf)
                .map_err(|e| self.xml_error(reader, e))?;
            match event {
                Event::Start(e) => {
                    let iri = self.element_iri(reader, &e);
                    if iri == format!("{RDF_NS}RDF") {
                        open += 1;
                        if let Some(b) = self.attr(reader, &e, XML_NS, "base") {
                            self.base = Some(b);
                        }
                        continue;
                    }
                    self.handle_top_level(reader, e, iri, false)?;
                }
                Event::Empty(e) => {
                    let iri = self.element_iri(reader, &e);
                    if iri != format!("{RDF_NS}RDF") {
                        self.handle_top_level(reader, e, iri, true)?;
                    }
                }
                Event::End(_) => open = open.saturating_sub(1),
                Event::Eof => {
                    if open > 0 {
                        return Err(OntologyError::Xml {
                            path: self.path.clone(),
                            offset: reader.buffer_position(),
                            message: "unexpected EOF before the document envelope closed".into(),
                        });
                    }
                    break;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn handle_top_level(
        &mut self,
        reader: &mut FileReader,
        e: BytesStart<'_>,
        element_iri: String,
        is_empty: bool,
    ) -> Result<(), OntologyError> {
        let kind = match element_iri.as_str() {
            iri if iri == format!("{OWL_NS}Class") => Some(Some(EntityKind::Class)),
            iri if iri == format!("{OWL_NS}ObjectProperty")
                || iri == format!("{OWL_NS}DatatypeProperty") =>
            {
                Some(Some(EntityKind::Property))
            }
            iri if iri == format!("{OWL_NS}NamedIndividual") => Some(Some(EntityKind::Individual)),
            iri if iri == format!("{RDF_NS}Description") => Some(None),
            iri if is_vocabulary(iri) => None,
            // Typed node: the element name is a class IRI, the subject is an
            // individual of that class.
            _ => Some(Some(EntityKind::Individual)),
        };

        let Some(kind) = kind else {
            // Ontology header, annotation-property declarations, axiom
            // containers and the like: not entities here.
            return self.skip_element(reader, &e, is_empty);
        };
        let Some(subject) = self.subject_iri(reader, &e) else {
            // Anonymous node; nothing to record it under.
            return self.skip_element(reader, &e, is_empty);
        };

        let mut pending = Pending::new(subject, kind);
        if kind == Some(EntityKind::Individual) && !is_vocabulary(&element_iri) {
            pending.type_iris.push(element_iri);
        }
        if !is_empty {
            self.read_entity_children(reader, &mut pending)?;
        }
        self.finish(pending);
        Ok(())
    }

    fn read_entity_children(
        &mut self,
        reader: &mut FileReader,
        pending: &mut Pending,
    ) -> Result<(), OntologyError> {
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let event = reader
                .read_event_into(&mut buf)
                .map_err(|e| self.xml_error(reader, e))?;
            match event {
                Event::Start(e) => {
                    let iri = self.element_iri(reader, &e);
                    self.handle_entity_property(reader, &e, iri, false, pending)?;
                }
                Event::Empty(e) => {
                    let iri = self.element_iri(reader, &e);
                    self.handle_entity_property(reader, &e, iri, true, pending)?;
                }
                Event::End(_) => return Ok(()),
                Event::Eof => {
                    return Err(OntologyError::Xml {
                        path: self.path.clone(),
                        offset: reader.buffer_position(),
                        message: format!("unexpected EOF inside <{}>", pending.iri),
                    })
                }
                _ => {}
            }
        }
    }

    fn handle_entity_property(
        &mut self,
        reader: &mut FileReader,
        e: &BytesStart<'_>,
        prop_iri: String,
        is_empty: bool,
        pending: &mut Pending,
    ) -> Result<(), OntologyError> {
        if let Some(priority) = position(&self.lexical.label_properties, &prop_iri) {
            if !is_empty {
                if let Some(text) = self.read_lexical_value(reader)? {
                    pending.labels.push((priority, text));
                }
            }
            return Ok(());
        }
        if let Some(priority) = position(&self.lexical.synonym_properties, &prop_iri) {
            if !is_empty {
                if let Some(text) = self.read_lexical_value(reader)? {
                    pending.synonyms.push((priority, pending.seq, text));
                    pending.seq += 1;
                }
            }
            return Ok(());
        }
        match prop_iri.as_str() {
            iri if iri == format!("{RDFS_NS}subClassOf")
                || iri == format!("{RDFS_NS}subPropertyOf") =>
            {
                match self.attr(reader, e, RDF_NS, "resource") {
                    Some(parent) if !is_vocabulary(&parent) && parent != pending.iri => {
                        pending.parents.push(parent);
                    }
                    // owl:Thing and friends are never parents; an anonymous
                    // superclass (restriction) is skipped below.
                    _ => {}
                }
                if !is_empty {
                    self.skip_to_end(reader)?;
                }
            }
            iri if iri == format!("{RDF_NS}type") => {
                if let Some(ty) = self.attr(reader, e, RDF_NS, "resource") {
                    match ty.as_str() {
                        t if t == format!("{OWL_NS}Class") => {
                            pending.kind.get_or_insert(EntityKind::Class);
                        }
                        t if t == format!("{OWL_NS}ObjectProperty")
                            || t == format!("{OWL_NS}DatatypeProperty") =>
                        {
                            pending.kind.get_or_insert(EntityKind::Property);
                        }
                        t if t == format!("{OWL_NS}NamedIndividual") => {
                            pending.kind.get_or_insert(EntityKind::Individual);
                        }
                        t if is_vocabulary(t) => {}
                        t => pending.type_iris.push(t.to_string()),
                    }
                }
                if !is_empty {
                    self.skip_to_end(reader)?;
                }
            }
            _ => {
                if !is_empty {
                    self.skip_to_end(reader)?;
                }
            }
        }
        Ok(())
    }

    /// Consumes the content of the just-opened property element and extracts
    /// a literal: direct text if present, otherwise the first nested
    /// `rdfs:label` (some vocabularies wrap synonyms in structured nodes).
    fn read_lexical_value(
        &mut self,
        reader: &mut FileReader,
    ) -> Result<Option<String>, OntologyError> {
        let mut buf = Vec::new();
        let mut depth = 0usize;
        let mut direct = String::new();
        let mut nested_label: Option<String> = None;
        let mut in_nested_label = false;
        loop {
            buf.clear();
            let event = reader
                .read_event_into(&mut buf)
                .map_err(|e| self.xml_error(reader, e))?;
            match event {
                Event::Start(e) => {
                    in_nested_label = self.element_iri(reader, &e) == RDFS_LABEL;
                    depth += 1;
                }
                Event::Empty(_) => {}
                Event::End(_) => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    in_nested_label = false;
                }
                Event::Text(t) => {
                    let text = t.unescape().map_err(|e| self.xml_error(reader, e))?;
                    if depth == 0 {
                        direct.push_str(&text);
                    } else if in_nested_label && nested_label.is_none() {
                        let trimmed = text.trim();
                        if !trimmed.is_empty() {
                            nested_label = Some(trimmed.to_string());
                        }
                    }
                }
                Event::CData(c) => {
                    if depth == 0 {
                        direct.push_str(&String::from_utf8_lossy(&c));
                    }
                }
                Event::Eof => {
                    return Err(OntologyError::Xml {
                        path: self.path.clone(),
                        offset: reader.buffer_position(),
                        message: "unexpected EOF inside literal".into(),
                    })
                }
                _ => {}
            }
        }
        let direct = direct.trim();
        if !direct.is_empty() {
            Ok(Some(direct.to_string()))
        } else {
            Ok(nested_label)
        }
    }

    fn finish(&mut self, pending: Pending) {
        let kind = match pending.kind {
            Some(kind) => kind,
            None if !pending.type_iris.is_empty() => EntityKind::Individual,
            None => {
                // Untyped description: lexical annotations for an entity that
                // may be declared elsewhere in the file.
                self.deferred.push(pending);
                return;
            }
        };
        let record = build_record(pending, kind);
        self.insert_or_merge(record);
    }

    fn insert_or_merge(&mut self, record: EntityRecord) {
        match self.entities.get_mut(&record.iri) {
            Some(existing) => merge_records(existing, record),
            None => {
                self.entities.insert(record.iri.clone(), record);
            }
        }
    }

    fn merge_deferred(&mut self) {
        let deferred = std::mem::take(&mut self.deferred);
        for pending in deferred {
            if self.entities.contains_key(&pending.iri) {
                let record = build_record(pending, EntityKind::Class);
                // Kind is a placeholder; merging keeps the declared one.
                self.insert_or_merge(record);
            } else {
                tracing::debug!(
                    "{}: dropping untyped description {}",
                    self.path,
                    pending.iri
                );
            }
        }
    }

    fn skip_element(
        &mut self,
        reader: &mut FileReader,
        e: &BytesStart<'_>,
        is_empty: bool,
    ) -> Result<(), OntologyError> {
        let _ = e;
        if !is_empty {
            self.skip_to_end(reader)?;
        }
        Ok(())
    }

    /// Consumes events up to and including the End matching the element that
    /// was just opened.
    fn skip_to_end(&mut self, reader: &mut FileReader) -> Result<(), OntologyError> {
        let mut buf = Vec::new();
        let mut depth = 0usize;
        loop {
            buf.clear();
            match reader
                .read_event_into(&mut buf)
                .map_err(|e| self.xml_error(reader, e))?
            {
                Event::Start(_) => depth += 1,
                Event::End(_) => {
                    if depth == 0 {
                        return Ok(());
                    }
                    depth -= 1;
                }
                Event::Eof => {
                    return Err(OntologyError::Xml {
                        path: self.path.clone(),
                        offset: reader.buffer_position(),
                        message: "unexpected EOF while skipping element".into(),
                    })
                }
                _ => {}
            }
        }
    }

    /// Full IRI of an element name under the in-scope namespaces.
    fn element_iri(&self, reader: &FileReader, e: &BytesStart<'_>) -> String {
        let (resolution, local) = reader.resolve_element(e.name());
        let local = String::from_utf8_lossy(local.as_ref());
        match resolution {
            ResolveResult::Bound(ns) => {
                format!("{}{}", String::from_utf8_lossy(ns.as_ref()), local)
            }
            _ => local.into_owned(),
        }
    }

    /// Looks up an attribute by namespace + local name; accepts an unprefixed
    /// attribute with the right local name as a lenient fallback. `rdf:about`
    /// and `rdf:resource` values are resolved against `xml:base`.
    fn attr(
        &self,
        reader: &FileReader,
        e: &BytesStart<'_>,
        ns: &str,
        local: &str,
    ) -> Option<String> {
        for attr in e.attributes().with_checks(false).flatten() {
            let (resolution, attr_local) = reader.resolve_attribute(attr.key);
            if attr_local.as_ref() != local.as_bytes() {
                continue;
            }
            let matches = match resolution {
                ResolveResult::Bound(bound) => bound.as_ref() == ns.as_bytes(),
                ResolveResult::Unbound => true,
                ResolveResult::Unknown(_) => false,
            };
            if matches {
                let value = attr.unescape_value().ok()?;
                let resolved = if local == "base" {
                    value.into_owned()
                } else {
                    self.resolve_iri(&value)
                };
                return Some(resolved);
            }
        }
        None
    }

    /// Subject IRI of an entity element: `rdf:about` (resolved) or `rdf:ID`
    /// (always base-relative).
    fn subject_iri(&self, reader: &FileReader, e: &BytesStart<'_>) -> Option<String> {
        if let Some(about) = self.attr(reader, e, RDF_NS, "about") {
            if !about.is_empty() {
                return Some(about);
            }
        }
        for attr in e.attributes().with_checks(false).flatten() {
            let (resolution, local) = reader.resolve_attribute(attr.key);
            if local.as_ref() == b"ID" {
                if let ResolveResult::Bound(ns) = resolution {
                    if ns.as_ref() != RDF_NS.as_bytes() {
                        continue;
                    }
                }
                let id = attr.unescape_value().ok()?;
                let base = self.base.as_deref().unwrap_or("").trim_end_matches('#');
                return Some(format!("{base}#{id}"));
            }
        }
        None
    }

    /// Resolves a possibly-relative IRI reference against the document base.
    fn resolve_iri(&self, value: &str) -> String {
        if has_scheme(value) {
            return value.to_string();
        }
        let Some(base) = self.base.as_deref() else {
            return value.to_string();
        };
        if value.is_empty() {
            return base.trim_end_matches('#').to_string();
        }
        if let Some(frag) = value.strip_prefix('#') {
            return format!("{}#{}", base.trim_end_matches('#'), frag);
        }
        match base.rfind('/') {
            Some(idx) => format!("{}{}", &base[..=idx], value),
            None => format!("{base}/{value}"),
        }
    }

    fn xml_error(&self, reader: &FileReader, e: quick_xml::Error) -> OntologyError {
        OntologyError::Xml {
            path: self.path.clone(),
            offset: reader.buffer_position(),
            message: e.to_string(),
        }
    }
}

fn position(properties: &[String], iri: &str) -> Option<usize> {
    properties.iter().position(|p| p == iri)
}

/// True for IRIs in the RDF/RDFS/OWL/XSD namespaces; those are never entities
/// or parents of this pipeline's entities.
fn is_vocabulary(iri: &str) -> bool {
    iri.starts_with(RDF_NS)
        || iri.starts_with(RDFS_NS)
        || iri.starts_with(OWL_NS)
        || iri.starts_with("http://www.w3.org/2001/XMLSchema#")
}

fn build_record(pending: Pending, kind: EntityKind) -> EntityRecord {
    let Pending {
        iri,
        labels,
        synonyms,
        mut parents,
        type_iris,
        ..
    } = pending;

    let mut sorted_labels = labels;
    sorted_labels.sort();
    let mut seen = HashSet::new();
    let labels: Vec<String> = sorted_labels
        .into_iter()
        .filter(|(_, text)| seen.insert(text.clone()))
        .map(|(_, text)| text)
        .collect();

    // A synonym may repeat a label verbatim; downstream presentation keeps
    // it, so only duplicates within the synonym list itself are dropped.
    let mut sorted_synonyms = synonyms;
    sorted_synonyms.sort_by_key(|a| (a.0, a.1));
    let mut seen_syn: HashSet<&str> = HashSet::new();
    let synonyms: Vec<String> = sorted_synonyms
        .iter()
        .filter(|(_, _, text)| seen_syn.insert(text))
        .map(|(_, _, text)| text.clone())
        .collect();

    if kind == EntityKind::Individual {
        let mut combined = type_iris;
        combined.append(&mut parents);
        parents = combined;
    }
    let mut seen_parent = HashSet::new();
    let direct_parents: Vec<String> = parents
        .into_iter()
        .filter(|p| p != &iri && seen_parent.insert(p.clone()))
        .collect();

    EntityRecord {
        iri,
        kind,
        labels,
        synonyms,
        direct_parents,
    }
}

/// Merges a re-declaration into an existing record: lexical values and
/// parents are appended (deduplicated), the first-seen kind wins.
fn merge_records(existing: &mut EntityRecord, incoming: EntityRecord) {
    for label in incoming.labels {
        if !existing.labels.contains(&label) {
            existing.labels.push(label);
        }
    }
    for synonym in incoming.synonyms {
        if !existing.synonyms.contains(&synonym) {
            existing.synonyms.push(synonym);
        }
    }
    for parent in incoming.direct_parents {
        if !existing.direct_parents.contains(&parent) {
            existing.direct_parents.push(parent);
        }
    }
}

fn has_scheme(value: &str) -> bool {
    let Some(colon) = value.find(':') else {
        return false;
    };
    if colon == 0 {
        return false;
    }
    if let Some(slash) = value.find('/') {
        if slash < colon {
            return false;
        }
    }
    value[..colon]
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '+' || c == '-' || c == '.')
}
