//! Append-only JSONL log of oracle verdicts.
//!
//! One record per line, flushed as written. Records carry no timestamps:
//! the log is part of a run's reproducible output and feeds replay runs,
//! where byte-identical inputs must yield byte-identical results.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{Decision, MappingKey, Relation};
use crate::prompt::{PromptTemplateId, SystemPromptId};

use super::{ConsultationKey, OracleError, OracleVerdict};

/// One oracle consultation, as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLogRecord {
    pub template: PromptTemplateId,
    pub system: SystemPromptId,
    pub model: String,
    pub source: String,
    pub target: String,
    pub relation: Relation,
    pub decision: Decision,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

impl VerdictLogRecord {
    pub fn new(key: &ConsultationKey, verdict: &OracleVerdict) -> Self {
        VerdictLogRecord {
            template: key.template,
            system: key.system,
            model: key.model.clone(),
            source: key.mapping.source.clone(),
            target: key.mapping.target.clone(),
            relation: key.mapping.relation,
            decision: verdict.decision,
            attempts: verdict.attempts,
            raw_response: verdict.raw_response.clone(),
            input_tokens: verdict.input_tokens,
            output_tokens: verdict.output_tokens,
        }
    }

    pub fn mapping_key(&self) -> MappingKey {
        MappingKey {
            source: self.source.clone(),
            target: self.target.clone(),
            relation: self.relation,
        }
    }

    pub fn consultation_key(&self) -> ConsultationKey {
        ConsultationKey {
            template: self.template,
            system: self.system,
            mapping: self.mapping_key(),
            model: self.model.clone(),
        }
    }

    pub fn verdict(&self) -> OracleVerdict {
        OracleVerdict {
            decision: self.decision,
            attempts: self.attempts,
            raw_response: self.raw_response.clone(),
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
        }
    }
}

/// Line-buffered JSONL writer; every record reaches the file before `append`
/// returns, so a crashed run loses nothing already assessed.
pub struct VerdictLogWriter {
    path: String,
    writer: BufWriter<File>,
}

impl VerdictLogWriter {
    /// Opens for appending, creating the file if needed.
    pub fn append_to(path: &Path) -> Result<Self, OracleError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| log_error(path.display(), e.to_string()))?;
        Ok(VerdictLogWriter {
            path: path.display().to_string(),
            writer: BufWriter::new(file),
        })
    }

    /// Truncates any existing file and starts fresh.
    pub fn create(path: &Path) -> Result<Self, OracleError> {
        let file = File::create(path).map_err(|e| log_error(path.display(), e.to_string()))?;
        Ok(VerdictLogWriter {
            path: path.display().to_string(),
            writer: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &VerdictLogRecord) -> Result<(), OracleError> {
        let line = serde_json::to_string(record)
            .map_err(|e| log_error(&self.path, format!("serializing record: {e}")))?;
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| log_error(&self.path, e.to_string()))
    }
}

fn log_error(path: impl std::fmt::Display, message: String) -> OracleError {
    OracleError::Log {
        path: path.to_string(),
        message,
    }
}

/// Reads a whole verdict log. Blank lines are tolerated; anything else that
/// fails to parse is an error naming the line.
pub fn read_verdict_log(path: &Path) -> Result<Vec<VerdictLogRecord>, OracleError> {
    let file = File::open(path).map_err(|e| log_error(path.display(), e.to_string()))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| log_error(path.display(), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VerdictLogRecord = serde_json::from_str(&line)
            .map_err(|e| log_error(path.display(), format!("line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    Ok(records)
}
