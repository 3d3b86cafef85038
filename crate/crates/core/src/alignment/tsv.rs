//! Tab-separated alignment format: `source TAB target TAB relation [TAB confidence]`.
//!
//! Blank lines and lines starting with `#` are skipped. A missing confidence
//! column means 1.0. Errors carry the 1-based line number.

use super::{AlignmentError, AlignmentRole, AlignmentSet, Mapping, Relation};

pub fn parse_alignment_tsv(
    text: &str,
    role: AlignmentRole,
) -> Result<AlignmentSet, AlignmentError> {
    let mut set = AlignmentSet::new(role);
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(bad_line(
                line_no,
                &format!(
                    "expected 3 or 4 tab-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let source = fields[0].trim();
        let target = fields[1].trim();
        if source.is_empty() || target.is_empty() {
            return Err(bad_line(line_no, "empty source or target entity"));
        }
        let relation =
            Relation::from_symbol(fields[2]).map_err(|e| bad_line(line_no, &e.to_string()))?;
        let confidence = match fields.get(3) {
            Some(raw) => raw
                .trim()
                .parse::<f64>()
                .map_err(|_| bad_line(line_no, &format!("unparseable confidence {raw:?}")))?,
            None => 1.0,
        };
        let mapping = Mapping::new(source, target, relation, confidence)
            .map_err(|e| bad_line(line_no, &e.to_string()))?;
        set.insert(mapping);
    }
    Ok(set)
}

fn bad_line(line: usize, message: &str) -> AlignmentError {
    AlignmentError::BadLine {
        path: None,
        line,
        message: message.to_string(),
    }
}

/// Serializes an alignment as TSV in mapping-key order, always with the
/// confidence column, LF endings.
pub fn write_alignment_tsv(set: &AlignmentSet) -> String {
    let mut out = String::with_capacity(set.len() * 64);
    for mapping in set.iter() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:?}\n",
            mapping.source,
            mapping.target,
            mapping.relation.symbol(),
            mapping.confidence
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::MappingKey;

    #[test]
    fn parses_with_and_without_confidence() {
        let text = "# comment\nhttp://a#1\thttp://b#1\t=\t0.75\n\nhttp://a#2\thttp://b#2\t>\n";
        let set = parse_alignment_tsv(text, AlignmentRole::SystemOutput).unwrap();
        assert_eq!(set.len(), 2);
        let with_conf = set
            .get(&MappingKey {
                source: "http://a#1".into(),
                target: "http://b#1".into(),
                relation: Relation::Equivalence,
            })
            .unwrap();
        assert_eq!(with_conf.confidence, 0.75);
        let defaulted = set
            .get(&MappingKey {
                source: "http://a#2".into(),
                target: "http://b#2".into(),
                relation: Relation::Subsumes,
            })
            .unwrap();
        assert_eq!(defaulted.confidence, 1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "http://a#1\thttp://b#1\t=\nhttp://a#2\thttp://b#2\t?\n";
        match parse_alignment_tsv(text, AlignmentRole::AskSet).unwrap_err() {
            AlignmentError::BadLine { line: 2, .. } => {}
            other => panic!("unexpected error: {other}"),
        }

        let text = "http://a#1\thttp://b#1\n";
        match parse_alignment_tsv(text, AlignmentRole::AskSet).unwrap_err() {
            AlignmentError::BadLine {
                line: 1,
                ref message,
                ..
            } => {
                assert!(message.contains("3 or 4"), "{message}");
            }
            other => panic!("unexpected error: {other}"),
        }

        let text = "http://a#1\thttp://b#1\t=\t1.5\n";
        match parse_alignment_tsv(text, AlignmentRole::AskSet).unwrap_err() {
            AlignmentError::BadLine {
                line: 1,
                ref message,
                ..
            } => {
                assert!(message.contains("confidence"), "{message}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn round_trips_and_dedups() {
        let text = "http://a#1\thttp://b#1\t=\t0.4\nhttp://a#1\thttp://b#1\t=\t0.9\n";
        let set = parse_alignment_tsv(text, AlignmentRole::SystemOutput).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.iter().next().unwrap().confidence, 0.9);

        let written = write_alignment_tsv(&set);
        assert_eq!(written, "http://a#1\thttp://b#1\t=\t0.9\n");
        let back = parse_alignment_tsv(&written, AlignmentRole::SystemOutput).unwrap();
        assert_eq!(set, back);
    }
}
