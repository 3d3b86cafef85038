//! Execution of one task: load, render, consult, merge, score, write.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{
    confusion, merge_decisions, parse_alignment, write_alignment, AlignmentFormat, AlignmentRole,
    AlignmentSet, ConfusionCounts, Decision,
};
use crate::eval::{diagnose, precision_recall_f, DiagnosticReport, EvalError, TaskReport};
use crate::ontology::{load_ontology, LexicalConfig, Ontology};
use crate::oracle::{
    batch_assess, read_verdict_log, BatchOptions, Oracle, OracleConfig, ReplayOracle, VerdictCache,
    VerdictLogWriter,
};
use crate::prompt::{render, PromptInstance, SystemPrompts};

use super::{TaskError, TaskSpec};

/// How abstentions are folded into decisions: an abstained mapping keeps its
/// base-alignment membership, so the oracle's silence never changes the
/// alignment.
pub const ABSTENTION_POLICY: &str = "abstain-keeps-base-membership";

/// Everything loaded and rendered, before any oracle is consulted.
pub struct PreparedTask {
    pub spec: TaskSpec,
    pub source: Ontology,
    pub target: Ontology,
    pub base: AlignmentSet,
    pub ask: AlignmentSet,
    pub reference: AlignmentSet,
    pub prompts: Vec<PromptInstance>,
    /// Non-equivalence mappings dropped from (base, ask, reference).
    pub dropped: [usize; 3],
}

/// Loads inputs and renders one prompt per ask mapping, in key order.
///
/// Only equivalence mappings take part: the prompts ask an equivalence
/// question, so subsumption rows in any input are dropped (counted, warned).
pub fn prepare_task(
    spec: &TaskSpec,
    system_prompts: &SystemPrompts,
) -> Result<PreparedTask, TaskError> {
    spec.validate()?;
    let lexical = LexicalConfig::default();
    let source = load_ontology(&spec.source_onto, &lexical)?;
    let target = load_ontology(&spec.target_onto, &lexical)?;

    let mut dropped = [0usize; 3];
    let mut load =
        |path: &Path, role: AlignmentRole, slot: usize| -> Result<AlignmentSet, TaskError> {
            let parsed = parse_alignment(path, role, None)?;
            let kept = parsed.equivalences_only();
            dropped[slot] = parsed.len() - kept.len();
            if dropped[slot] > 0 {
                tracing::warn!(
                    path = %path.display(),
                    dropped = dropped[slot],
                    "non-equivalence mappings excluded from the equivalence pipeline"
                );
            }
            Ok(kept)
        };
    let base = load(&spec.base_alignment, AlignmentRole::SystemOutput, 0)?;
    let ask = load(&spec.ask_alignment, AlignmentRole::AskSet, 1)?;
    let reference = load(&spec.reference_alignment, AlignmentRole::Reference, 2)?;

    let mut prompts = Vec::with_capacity(ask.len());
    for mapping in &ask {
        let instance = render(spec.template, mapping, &source, &target)?
            .with_system(spec.system_prompt, system_prompts);
        prompts.push(instance);
    }

    Ok(PreparedTask {
        spec: spec.clone(),
        source,
        target,
        base,
        ask,
        reference,
        prompts,
        dropped,
    })
}

/// The prompts a task would send, without consulting anything.
pub fn render_task_prompts(
    spec: &TaskSpec,
    system_prompts: &SystemPrompts,
) -> Result<Vec<PromptInstance>, TaskError> {
    Ok(prepare_task(spec, system_prompts)?.prompts)
}

/// Three-decimal presentation of a diagnostic report (values as printed in
/// result tables: Se and Sp truncated, YI recomposed from them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticDisplay {
    pub sensitivity: f64,
    pub specificity: f64,
    pub youden_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSection {
    pub sensitivity: f64,
    pub specificity: f64,
    pub youden_index: f64,
    pub display: DiagnosticDisplay,
}

impl From<&DiagnosticReport> for DiagnosticSection {
    fn from(report: &DiagnosticReport) -> Self {
        DiagnosticSection {
            sensitivity: report.sensitivity,
            specificity: report.specificity,
            youden_index: report.youden_index,
            display: DiagnosticDisplay {
                sensitivity: report.display_sensitivity(),
                specificity: report.display_specificity(),
                youden_index: report.display_youden(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDisplay {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSection {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub system_size: usize,
    pub reference_size: usize,
    pub intersection_size: usize,
    pub display: MetricsDisplay,
}

impl From<&TaskReport> for MetricsSection {
    fn from(report: &TaskReport) -> Self {
        MetricsSection {
            precision: report.precision,
            recall: report.recall,
            f_score: report.f_score,
            system_size: report.system_size,
            reference_size: report.reference_size,
            intersection_size: report.intersection_size,
            display: MetricsDisplay {
                precision: report.display_precision(),
                recall: report.display_recall(),
                f_score: report.display_f_score(),
            },
        }
    }
}

/// The per-task result file (`report.json`).
///
/// Deliberately free of paths, timestamps and oracle plumbing details: two
/// runs that made the same decisions produce identical bytes, which is what
/// makes replay verifiable. Run plumbing lives in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRunReport {
    pub task: String,
    pub template: crate::prompt::PromptTemplateId,
    pub system_prompt: crate::prompt::SystemPromptId,
    pub model: String,
    pub ask_size: usize,
    pub decided: u64,
    pub abstained: u64,
    pub abstention_policy: String,
    /// Non-equivalence mappings dropped from base/ask/reference inputs.
    pub dropped_non_equivalence: [usize; 3],
    pub counts: ConfusionCounts,
    /// Absent when the ask set is one-class (counts still tell the story).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<DiagnosticSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic_note: Option<String>,
    pub base: MetricsSection,
    pub merged: MetricsSection,
    pub tool_version: String,
}

/// Everything a completed task leaves behind.
pub struct TaskOutcome {
    pub report: TaskRunReport,
    pub merged: AlignmentSet,
    pub report_path: PathBuf,
    pub verdict_log_path: Option<PathBuf>,
}

/// Runs one task end to end, writing `report.json`, `metrics.csv`,
/// `diagnostic.csv`, `merged.rdf` and (except in replay) `verdicts.jsonl`
/// under the spec's output directory.
pub async fn run_task(
    spec: &TaskSpec,
    system_prompts: &SystemPrompts,
) -> Result<TaskOutcome, TaskError> {
    let prepared = prepare_task(spec, system_prompts)?;
    run_prepared(prepared).await
}

pub(crate) async fn run_prepared(prepared: PreparedTask) -> Result<TaskOutcome, TaskError> {
    let PreparedTask {
        spec,
        base,
        ask,
        reference,
        prompts,
        dropped,
        ..
    } = prepared;

    std::fs::create_dir_all(&spec.output_dir).map_err(|e| TaskError::io(&spec.output_dir, e))?;

    // Replay pre-fills the cache from the recorded log and uses an oracle
    // that refuses the network; anything missing from the log becomes a
    // loud error instead of a silent re-ask.
    let (oracle, mut cache, options, keep_log): (
        Box<dyn Oracle>,
        VerdictCache,
        BatchOptions,
        bool,
    ) = match &spec.oracle {
        OracleConfig::Replay { log } => {
            let records = read_verdict_log(log)?;
            let model = records.first().map(|r| r.model.clone()).ok_or_else(|| {
                TaskError::Config(format!("replay log {} holds no verdicts", log.display()))
            })?;
            let cache = ReplayOracle::cache_from_records(&records);
            (
                Box::new(ReplayOracle::new(model)),
                cache,
                BatchOptions::default(),
                false,
            )
        }
        OracleConfig::Llm(config) => (
            spec.oracle.instantiate([])?,
            VerdictCache::default(),
            BatchOptions {
                max_in_flight: config.max_in_flight,
                requests_per_minute: Some(config.rpm_limit as f64),
            },
            true,
        ),
        OracleConfig::Simulated { .. } => (
            spec.oracle.instantiate(reference.keys().cloned())?,
            VerdictCache::default(),
            BatchOptions::default(),
            true,
        ),
    };

    let verdict_log_path = spec.output_dir.join("verdicts.jsonl");
    let mut log = if keep_log {
        Some(VerdictLogWriter::create(&verdict_log_path)?)
    } else {
        None
    };
    let verdicts = batch_assess(
        oracle.as_ref(),
        &prompts,
        &mut cache,
        log.as_mut(),
        &options,
    )
    .await?;
    drop(log);

    // Every ask mapping gets exactly one decision, keyed for the merge.
    let mut decisions: BTreeMap<crate::alignment::MappingKey, Decision> = BTreeMap::new();
    let mut abstained = 0u64;
    for (prompt, verdict) in prompts.iter().zip(&verdicts) {
        if verdict.decision == Decision::Abstain {
            abstained += 1;
        }
        decisions.insert(prompt.mapping_key.clone(), verdict.decision);
    }
    let decided = verdicts.len() as u64 - abstained;

    // For diagnostic scoring an abstention resolves to its base membership,
    // mirroring exactly what the merge below does with it.
    let effective: BTreeMap<_, _> = decisions
        .iter()
        .map(|(key, decision)| {
            let resolved = match decision {
                Decision::Abstain => {
                    if base.contains(key) {
                        Decision::Accept
                    } else {
                        Decision::Reject
                    }
                }
                other => *other,
            };
            (key.clone(), resolved)
        })
        .collect();
    let counts = confusion(&ask, &effective, &reference)?;
    let (diagnostic, diagnostic_note) = match diagnose(counts) {
        Ok(report) => (Some(DiagnosticSection::from(&report)), None),
        Err(EvalError::OneClassAskSet {
            positives,
            negatives,
        }) => (
            None,
            Some(format!(
                "ask set is one-class (positives={positives}, negatives={negatives}); \
                 sensitivity/specificity are undefined, counts reported as-is"
            )),
        ),
        Err(other) => return Err(other.into()),
    };

    let merged = merge_decisions(&base, &ask, &decisions)?;
    let base_report = precision_recall_f(&base, &reference)?;
    let merged_report = precision_recall_f(&merged, &reference)?;

    let report = TaskRunReport {
        task: spec.name.clone(),
        template: spec.template,
        system_prompt: spec.system_prompt,
        model: oracle.model_id().to_string(),
        ask_size: ask.len(),
        decided,
        abstained,
        abstention_policy: ABSTENTION_POLICY.to_string(),
        dropped_non_equivalence: dropped,
        counts,
        diagnostic,
        diagnostic_note,
        base: MetricsSection::from(&base_report),
        merged: MetricsSection::from(&merged_report),
        tool_version: crate::TOOL_VERSION.to_string(),
    };

    let report_path = spec.output_dir.join("report.json");
    write_json(&report_path, &report)?;
    write_metrics_csv(&spec.output_dir.join("metrics.csv"), &report)?;
    write_diagnostic_csv(&spec.output_dir.join("diagnostic.csv"), &report)?;
    let merged_path = spec.output_dir.join("merged.rdf");
    write_alignment(&merged_path, &merged, Some(AlignmentFormat::AlignmentRdf))?;

    Ok(TaskOutcome {
        report,
        merged,
        report_path,
        verdict_log_path: keep_log.then_some(verdict_log_path),
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TaskError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| TaskError::Serialize {
        what: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| TaskError::io(path, e))
}

/// One row per scored alignment, display-rounded, mirroring the task-metric
/// table layout.
fn write_metrics_csv(path: &Path, report: &TaskRunReport) -> Result<(), TaskError> {
    let mut out = String::from("task,alignment,precision,recall,f_score\n");
    for (alignment, section) in [("base", &report.base), ("merged", &report.merged)] {
        out.push_str(&format!(
            "{},{},{:.3},{:.3},{:.3}\n",
            report.task,
            alignment,
            section.display.precision,
            section.display.recall,
            section.display.f_score
        ));
    }
    std::fs::write(path, out).map_err(|e| TaskError::io(path, e))
}

/// Confusion counts plus the diagnostic triple, display-rounded; the triple
/// is blank for a one-class ask set.
fn write_diagnostic_csv(path: &Path, report: &TaskRunReport) -> Result<(), TaskError> {
    let mut out = String::from("task,tp,fp,tn,fn,sensitivity,specificity,youden_index\n");
    let triple = match &report.diagnostic {
        Some(d) => format!(
            "{:.3},{:.3},{:.3}",
            d.display.sensitivity, d.display.specificity, d.display.youden_index
        ),
        None => ",,".to_string(),
    };
    out.push_str(&format!(
        "{},{},{},{},{},{}\n",
        report.task,
        report.counts.tp,
        report.counts.fp,
        report.counts.tn,
        report.counts.fn_,
        triple
    ));
    std::fs::write(path, out).map_err(|e| TaskError::io(path, e))
}
