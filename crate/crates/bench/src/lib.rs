//! Synthetic input generators shared by the benchmarks.

use std::fmt::Write as _;

use alignvet_core::alignment::{write_alignment_rdf, AlignmentRole, AlignmentSet};
use alignvet_core::Mapping;

pub const SOURCE_BASE: &str = "http://bench.example/source.owl";
pub const TARGET_BASE: &str = "http://bench.example/target.owl";

/// OWL document with `classes` classes in a ten-ary tree, each carrying a
/// label and one synonym.
pub fn synthetic_ontology_xml(base_iri: &str, classes: usize) -> String {
    let mut xml = String::with_capacity(classes * 220);
    xml.push_str(concat!(
        "<?xml version=\"1.0\"?>\n",
        "<rdf:RDF xmlns:rdf=\"http://www.w3.org/1999/02/22-rdf-syntax-ns#\"\n",
        "         xmlns:rdfs=\"http://www.w3.org/2000/01/rdf-schema#\"\n",
        "         xmlns:owl=\"http://www.w3.org/2002/07/owl#\"\n",
        "         xmlns:oboInOwl=\"http://www.geneontology.org/formats/oboInOwl#\">\n",
    ));
    for i in 0..classes {
        write!(
            xml,
            "  <owl:Class rdf:about=\"{base_iri}#E{i}\">\n    \
             <rdfs:label>entity number {i}</rdfs:label>\n    \
             <oboInOwl:hasRelatedSynonym>synonym {i}</oboInOwl:hasRelatedSynonym>\n"
        )
        .unwrap();
        if i > 0 {
            writeln!(
                xml,
                "    <rdfs:subClassOf rdf:resource=\"{base_iri}#E{}\"/>",
                (i - 1) / 10
            )
            .unwrap();
        }
        xml.push_str("  </owl:Class>\n");
    }
    xml.push_str("</rdf:RDF>\n");
    xml
}

/// `cells` equivalence mappings pairing `SOURCE_BASE#Ei` with `TARGET_BASE#Ei`.
pub fn synthetic_mappings(cells: usize) -> Vec<Mapping> {
    (0..cells)
        .map(|i| Mapping::equivalence(format!("{SOURCE_BASE}#E{i}"), format!("{TARGET_BASE}#E{i}")))
        .collect()
}

/// Alignment document with `cells` equivalence cells.
pub fn synthetic_alignment_rdf(cells: usize) -> String {
    let set = AlignmentSet::from_mappings(AlignmentRole::SystemOutput, synthetic_mappings(cells));
    write_alignment_rdf(&set)
}
