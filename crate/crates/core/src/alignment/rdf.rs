//! RDF/XML alignment exchange format.
//!
//! The reader is deliberately lenient about envelope details (namespaces,
//! `onto1`/`onto2` headers, extension elements) and strict about cells: a
//! `Cell` without both entities, with an unknown relation symbol, or with a
//! confidence outside (0, 1] is an error that names the offending cell.

use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::reader::NsReader;

use super::{AlignmentError, AlignmentRole, AlignmentSet, Mapping, Relation};

const RESOURCE_ATTR: &[u8] = b"resource";

pub fn parse_alignment_rdf(
    text: &str,
    role: AlignmentRole,
) -> Result<AlignmentSet, AlignmentError> {
    let mut reader = NsReader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut set = AlignmentSet::new(role);
    let mut cell_index = 0usize;
    // Open-element depth: the reader itself reports EOF without error even
    // with unclosed tags, and a truncated file must not parse as a shorter
    // alignment.
    let mut depth = 0usize;

    // Per-cell state; only meaningful while `in_cell`.
    let mut in_cell = false;
    let mut entity1: Option<String> = None;
    let mut entity2: Option<String> = None;
    let mut measure: Option<f64> = None;
    let mut relation: Option<Relation> = None;
    // Element inside the current cell whose text content we are reading.
    let mut field: Option<CellField> = None;

    loop {
        let event = reader.read_event().map_err(|e| AlignmentError::Xml {
            path: None,
            offset: reader.buffer_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                if !empty {
                    depth += 1;
                }
                let local = e.local_name();
                match local.as_ref() {
                    b"Cell" => {
                        cell_index += 1;
                        in_cell = true;
                        entity1 = None;
                        entity2 = None;
                        measure = None;
                        relation = None;
                        field = None;
                        if empty {
                            // <Cell/> carries nothing.
                            return Err(bad_cell(cell_index, "cell has no entity1"));
                        }
                    }
                    b"entity1" | b"entity2" if in_cell => {
                        let iri = resource_attr(e, &reader, cell_index)?;
                        if local.as_ref() == b"entity1" {
                            entity1 = Some(iri);
                        } else {
                            entity2 = Some(iri);
                        }
                    }
                    b"measure" if in_cell && !empty => field = Some(CellField::Measure),
                    b"relation" if in_cell && !empty => field = Some(CellField::Relation),
                    _ => {}
                }
            }
            Event::Text(ref t) => {
                let Some(current) = field else { continue };
                let value = t.unescape().map_err(|e| AlignmentError::Xml {
                    path: None,
                    offset: reader.buffer_position(),
                    message: e.to_string(),
                })?;
                match current {
                    CellField::Measure => {
                        let parsed: f64 = value.trim().parse().map_err(|_| {
                            bad_cell(cell_index, &format!("unparseable measure {value:?}"))
                        })?;
                        measure = Some(parsed);
                    }
                    CellField::Relation => {
                        relation = Some(
                            Relation::from_symbol(&value)
                                .map_err(|e| bad_cell(cell_index, &e.to_string()))?,
                        );
                    }
                }
            }
            Event::End(ref e) => {
                depth = depth.saturating_sub(1);
                match e.local_name().as_ref() {
                    b"measure" | b"relation" => field = None,
                    b"Cell" if in_cell => {
                        in_cell = false;
                        let source = entity1
                            .take()
                            .ok_or_else(|| bad_cell(cell_index, "cell has no entity1"))?;
                        let target = entity2
                            .take()
                            .ok_or_else(|| bad_cell(cell_index, "cell has no entity2"))?;
                        let mapping = Mapping::new(
                            source,
                            target,
                            relation.take().unwrap_or(Relation::Equivalence),
                            measure.take().unwrap_or(1.0),
                        )
                        .map_err(|e| bad_cell(cell_index, &e.to_string()))?;
                        set.insert(mapping);
                    }
                    _ => {}
                }
            }
            Event::Eof => {
                if depth > 0 {
                    return Err(AlignmentError::Xml {
                        path: None,
                        offset: reader.buffer_position(),
                        message: format!("unexpected EOF with {depth} unclosed element(s)"),
                    });
                }
                break;
            }
            _ => {}
        }
    }
    Ok(set)
}

#[derive(Clone, Copy)]
enum CellField {
    Measure,
    Relation,
}

fn bad_cell(cell: usize, message: &str) -> AlignmentError {
    AlignmentError::BadCell {
        path: None,
        cell,
        message: message.to_string(),
    }
}

fn resource_attr(
    e: &quick_xml::events::BytesStart<'_>,
    reader: &NsReader<&[u8]>,
    cell: usize,
) -> Result<String, AlignmentError> {
    for attr in e.attributes().with_checks(false).flatten() {
        if attr.key.local_name().as_ref() == RESOURCE_ATTR {
            let value = attr.unescape_value().map_err(|err| AlignmentError::Xml {
                path: None,
                offset: reader.buffer_position(),
                message: err.to_string(),
            })?;
            return Ok(value.into_owned());
        }
    }
    Err(bad_cell(
        cell,
        &format!(
            "<{}> without rdf:resource",
            String::from_utf8_lossy(e.name().as_ref())
        ),
    ))
}

/// Serializes an alignment to the RDF exchange format. Cells are emitted in
/// mapping-key order with LF endings, so equal sets produce equal bytes.
pub fn write_alignment_rdf(set: &AlignmentSet) -> String {
    let mut out = String::with_capacity(512 + set.len() * 256);
    out.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    out.push_str(
        "<rdf:RDF xmlns=\"http://knowledgeweb.semanticweb.org/heterogeneity/alignment\"\n",
    );
    out.push_str("         xmlns:rdf=\"http://www.w3.org/1999/02/22-rdf-syntax-ns#\"\n");
    out.push_str("         xmlns:xsd=\"http://www.w3.org/2001/XMLSchema#\">\n");
    out.push_str("  <Alignment>\n");
    out.push_str("    <xml>yes</xml>\n");
    out.push_str("    <level>0</level>\n");
    out.push_str("    <type>??</type>\n");
    for mapping in set.iter() {
        out.push_str("    <map>\n      <Cell>\n");
        out.push_str(&format!(
            "        <entity1 rdf:resource=\"{}\"/>\n",
            escape(mapping.source.as_str())
        ));
        out.push_str(&format!(
            "        <entity2 rdf:resource=\"{}\"/>\n",
            escape(mapping.target.as_str())
        ));
        out.push_str(&format!(
            "        <measure rdf:datatype=\"xsd:float\">{:?}</measure>\n",
            mapping.confidence
        ));
        out.push_str(&format!(
            "        <relation>{}</relation>\n",
            escape(mapping.relation.symbol())
        ));
        out.push_str("      </Cell>\n    </map>\n");
    }
    out.push_str("  </Alignment>\n</rdf:RDF>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::MappingKey;

    const SAMPLE: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<rdf:RDF xmlns="http://knowledgeweb.semanticweb.org/heterogeneity/alignment"
         xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#">
  <Alignment>
    <xml>yes</xml>
    <level>0</level>
    <map><Cell>
      <entity1 rdf:resource="http://mouse.owl#MA_0000087"/>
      <entity2 rdf:resource="http://human.owl#NCI_C12372"/>
      <measure rdf:datatype="xsd:float">0.87</measure>
      <relation>=</relation>
    </Cell></map>
    <map><Cell>
      <entity1 rdf:resource="http://mouse.owl#MA_0000168"/>
      <entity2 rdf:resource="http://human.owl#NCI_C12394"/>
      <relation>&lt;</relation>
    </Cell></map>
  </Alignment>
</rdf:RDF>
"#;

    #[test]
    fn parses_cells_with_defaults() {
        let set = parse_alignment_rdf(SAMPLE, AlignmentRole::SystemOutput).unwrap();
        assert_eq!(set.len(), 2);
        let first = set
            .get(&MappingKey {
                source: "http://mouse.owl#MA_0000087".into(),
                target: "http://human.owl#NCI_C12372".into(),
                relation: Relation::Equivalence,
            })
            .unwrap();
        assert_eq!(first.confidence, 0.87);
        // Missing measure defaults to 1.0; escaped relation symbol decodes.
        let second = set
            .get(&MappingKey {
                source: "http://mouse.owl#MA_0000168".into(),
                target: "http://human.owl#NCI_C12394".into(),
                relation: Relation::SubsumedBy,
            })
            .unwrap();
        assert_eq!(second.confidence, 1.0);
    }

    #[test]
    fn missing_entity_names_the_cell() {
        let text = r#"<rdf:RDF xmlns="http://x" xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#">
  <Alignment>
    <map><Cell>
      <entity1 rdf:resource="http://a#1"/>
      <entity2 rdf:resource="http://b#1"/>
    </Cell></map>
    <map><Cell>
      <entity1 rdf:resource="http://a#2"/>
    </Cell></map>
  </Alignment>
</rdf:RDF>"#;
        let err = parse_alignment_rdf(text, AlignmentRole::AskSet).unwrap_err();
        match err {
            AlignmentError::BadCell {
                cell, ref message, ..
            } => {
                assert_eq!(cell, 2);
                assert!(message.contains("entity2"), "{message}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn zero_measure_is_rejected_with_cell_index() {
        let text = r#"<rdf:RDF xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#">
  <Alignment><map><Cell>
    <entity1 rdf:resource="http://a#1"/>
    <entity2 rdf:resource="http://b#1"/>
    <measure>0.0</measure>
  </Cell></map></Alignment>
</rdf:RDF>"#;
        let err = parse_alignment_rdf(text, AlignmentRole::AskSet).unwrap_err();
        match err {
            AlignmentError::BadCell {
                cell: 1,
                ref message,
                ..
            } => {
                assert!(message.contains("confidence"), "{message}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn truncated_xml_reports_byte_offset() {
        let text = "<rdf:RDF xmlns:rdf=\"http://www.w3.org/1999/02/22-rdf-syntax-ns#\">\n  <Alignment><map><Cell>";
        let err = parse_alignment_rdf(text, AlignmentRole::AskSet).unwrap_err();
        match err {
            AlignmentError::Xml { offset, .. } => assert!(offset > 0),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn write_then_parse_round_trips() {
        let set = AlignmentSet::from_mappings(
            AlignmentRole::SystemOutput,
            [
                Mapping::new("http://a#x&y", "http://b#1", Relation::Subsumes, 0.25).unwrap(),
                Mapping::new("http://a#2", "http://b#2", Relation::Equivalence, 1.0).unwrap(),
            ],
        );
        let text = write_alignment_rdf(&set);
        let back = parse_alignment_rdf(&text, AlignmentRole::SystemOutput).unwrap();
        assert_eq!(set, back);
        // Deterministic bytes for equal content.
        assert_eq!(text, write_alignment_rdf(&back));
    }
}
