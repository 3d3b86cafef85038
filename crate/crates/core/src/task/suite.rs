//! Orchestration above single tasks: full runs, replays, the oracle-variant
//! comparison suite with paired significance tests, and error-rate sweeps.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eval::{paired_tests, round3, PairedTestResult};
use crate::oracle::OracleConfig;
use crate::prompt::SystemPrompts;

use super::run::{run_task, write_json, TaskOutcome, TaskRunReport};
use super::{
    file_sha256, variant_label, ManifestEntry, RunConfig, RunManifest, TaskError, TaskSpec,
};

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Carry on past a failed task, recording the error in the manifest,
    /// instead of aborting the whole run.
    pub keep_going: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { keep_going: true }
    }
}

/// Condensed per-task results, the rows paired tests are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: String,
    pub base_f: f64,
    pub merged_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub youden_index: Option<f64>,
    pub abstained: u64,
}

impl TaskSummary {
    fn from_report(report: &TaskRunReport) -> Self {
        TaskSummary {
            task: report.task.clone(),
            base_f: report.base.f_score,
            merged_f: report.merged.f_score,
            youden_index: report.diagnostic.as_ref().map(|d| d.youden_index),
            abstained: report.abstained,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub label: String,
    pub tasks: Vec<TaskSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<String>,
}

/// Two oracle variants compared over their common tasks' merged F-scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub left: String,
    pub right: String,
    pub tasks: Vec<String>,
    pub t_test: PairedTestResult,
    /// Absent when every paired difference is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wilcoxon: Option<PairedTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub variants: Vec<VariantSummary>,
    pub comparisons: Vec<PairedComparison>,
    /// Variant pairs that could not be tested, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_comparisons: Vec<String>,
    pub tool_version: String,
}

/// Runs every task in the configuration under its own oracle and writes
/// `manifest.json` next to the task outputs.
pub async fn run_all(config_path: &Path, options: &SuiteOptions) -> Result<RunManifest, TaskError> {
    let started = Instant::now();
    let config = RunConfig::load(config_path)?;
    let system_prompts = config.system_prompts();
    let specs = config.resolve()?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| TaskError::io(&config.output_dir, e))?;

    let mut entries = Vec::new();
    for spec in &specs {
        run_one(
            spec,
            &system_prompts,
            options,
            None,
            &mut entries,
            &mut Vec::new(),
        )
        .await?;
    }
    let manifest = finish_manifest(config_path, started, entries)?;
    write_json(&config.output_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Re-runs every task purely from its recorded verdict log, with the network
/// forbidden. Outputs land under `<task output dir>/replay/` so they can be
/// byte-compared against the originals; the manifest goes to
/// `replay-manifest.json`.
pub async fn replay_all(
    config_path: &Path,
    options: &SuiteOptions,
) -> Result<RunManifest, TaskError> {
    let started = Instant::now();
    let config = RunConfig::load(config_path)?;
    let system_prompts = config.system_prompts();
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| TaskError::io(&config.output_dir, e))?;
    let mut specs = config.resolve()?;
    for spec in &mut specs {
        let log = spec.output_dir.join("verdicts.jsonl");
        spec.oracle = OracleConfig::Replay { log };
        spec.output_dir = spec.output_dir.join("replay");
    }

    let mut entries = Vec::new();
    for spec in &specs {
        run_one(
            spec,
            &system_prompts,
            options,
            None,
            &mut entries,
            &mut Vec::new(),
        )
        .await?;
    }
    let manifest = finish_manifest(config_path, started, entries)?;
    write_json(&config.output_dir.join("replay-manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Runs the task × oracle-variant grid, then compares every pair of variants
/// over the tasks both completed: a paired t-test and an exact Wilcoxon
/// signed-rank test on merged F-scores. Writes `suite.json`, `pvalues.csv`
/// and `manifest.json` under the configuration's output directory.
pub async fn run_suite(
    config_path: &Path,
    options: &SuiteOptions,
) -> Result<SuiteReport, TaskError> {
    let started = Instant::now();
    let config = RunConfig::load(config_path)?;
    let system_prompts = config.system_prompts();
    let grid = config.resolve_grid()?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| TaskError::io(&config.output_dir, e))?;

    let mut entries = Vec::new();
    let mut variants = Vec::new();
    for (label, specs) in &grid {
        let mut summaries = Vec::new();
        let mut failed = Vec::new();
        for spec in specs {
            if let Some(outcome) = run_one(
                spec,
                &system_prompts,
                options,
                Some(label),
                &mut entries,
                &mut failed,
            )
            .await?
            {
                summaries.push(TaskSummary::from_report(&outcome.report));
            }
        }
        variants.push(VariantSummary {
            label: label.clone(),
            tasks: summaries,
            failed,
        });
    }

    let mut comparisons = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..variants.len() {
        for j in i + 1..variants.len() {
            let (left, right) = (&variants[i], &variants[j]);
            let left_f: BTreeMap<&str, f64> = left
                .tasks
                .iter()
                .map(|t| (t.task.as_str(), t.merged_f))
                .collect();
            let mut names = Vec::new();
            let mut x = Vec::new();
            let mut y = Vec::new();
            for t in &right.tasks {
                if let Some(&f) = left_f.get(t.task.as_str()) {
                    names.push(t.task.clone());
                    x.push(f);
                    y.push(t.merged_f);
                }
            }
            if names.len() < 2 {
                let note = format!(
                    "{} vs {}: {} common task(s), paired tests need at least 2",
                    left.label,
                    right.label,
                    names.len()
                );
                tracing::warn!("{note}");
                skipped.push(note);
                continue;
            }
            match paired_tests(&x, &y) {
                Ok((t_test, wilcoxon)) => comparisons.push(PairedComparison {
                    left: left.label.clone(),
                    right: right.label.clone(),
                    tasks: names,
                    t_test,
                    wilcoxon,
                }),
                Err(e) => {
                    let note = format!("{} vs {}: {e}", left.label, right.label);
                    tracing::warn!("{note}");
                    skipped.push(note);
                }
            }
        }
    }

    let report = SuiteReport {
        variants,
        comparisons,
        skipped_comparisons: skipped,
        tool_version: crate::TOOL_VERSION.to_string(),
    };
    write_json(&config.output_dir.join("suite.json"), &report)?;
    write_pvalues_csv(&config.output_dir.join("pvalues.csv"), &report)?;
    let manifest = finish_manifest(config_path, started, entries)?;
    write_json(&config.output_dir.join("manifest.json"), &manifest)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub keep_going: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            rates: vec![0.0, 0.1, 0.2, 0.3],
            seeds: vec![0],
            keep_going: true,
        }
    }
}

/// One (error rate, seed) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub tasks: Vec<TaskSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<String>,
    /// Mean merged F over this run's completed tasks; absent if none did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_merged_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_youden: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRate {
    pub error_rate: f64,
    pub runs: Vec<SweepRun>,
    /// Mean of the per-seed means, so every seed weighs equally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_merged_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_youden: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rates: Vec<SweepRate>,
    pub tool_version: String,
}

/// Runs every task under a grid of simulated oracles (`rates` × `seeds`),
/// reporting how alignment quality degrades as the oracle gets noisier.
/// Outputs nest under `<output_dir>/sweep/`, with `sweep.json` and
/// `sweep.csv` at its root.
pub async fn sweep(config_path: &Path, options: &SweepOptions) -> Result<SweepReport, TaskError> {
    if options.rates.is_empty() || options.seeds.is_empty() {
        return Err(TaskError::Config(
            "sweep needs at least one error rate and one seed".into(),
        ));
    }
    for rate in &options.rates {
        if !(0.0..=1.0).contains(rate) {
            return Err(TaskError::Config(format!(
                "sweep error rate {rate} is outside [0, 1]"
            )));
        }
    }
    let config = RunConfig::load(config_path)?;
    let system_prompts = config.system_prompts();
    let sweep_dir = config.output_dir.join("sweep");
    std::fs::create_dir_all(&sweep_dir).map_err(|e| TaskError::io(&sweep_dir, e))?;
    let run_options = SuiteOptions {
        keep_going: options.keep_going,
    };

    let mut rates = Vec::new();
    for &error_rate in &options.rates {
        let mut runs = Vec::new();
        for &seed in &options.seeds {
            let oracle = OracleConfig::Simulated { error_rate, seed };
            let label = variant_label(&oracle);
            let mut specs = config.resolve_with(Some(&oracle))?;
            for spec in &mut specs {
                spec.output_dir = sweep_dir.join(&label).join(&spec.name);
            }
            let mut summaries = Vec::new();
            let mut failed = Vec::new();
            for spec in &specs {
                if let Some(outcome) = run_one(
                    spec,
                    &system_prompts,
                    &run_options,
                    Some(&label),
                    &mut Vec::new(),
                    &mut failed,
                )
                .await?
                {
                    summaries.push(TaskSummary::from_report(&outcome.report));
                }
            }
            let mean_merged_f = mean(summaries.iter().map(|t| t.merged_f));
            let mean_youden = mean(summaries.iter().filter_map(|t| t.youden_index));
            runs.push(SweepRun {
                seed,
                tasks: summaries,
                failed,
                mean_merged_f,
                mean_youden,
            });
        }
        let mean_merged_f = mean(runs.iter().filter_map(|r| r.mean_merged_f));
        let mean_youden = mean(runs.iter().filter_map(|r| r.mean_youden));
        rates.push(SweepRate {
            error_rate,
            runs,
            mean_merged_f,
            mean_youden,
        });
    }

    let report = SweepReport {
        rates,
        tool_version: crate::TOOL_VERSION.to_string(),
    };
    write_json(&sweep_dir.join("sweep.json"), &report)?;
    write_sweep_csv(&sweep_dir.join("sweep.csv"), &report)?;
    Ok(report)
}

/// Runs one task, folding the outcome into the manifest entries; a failure
/// either aborts (fail-fast) or is recorded and skipped.
async fn run_one(
    spec: &TaskSpec,
    system_prompts: &SystemPrompts,
    options: &SuiteOptions,
    variant: Option<&str>,
    entries: &mut Vec<ManifestEntry>,
    failed: &mut Vec<String>,
) -> Result<Option<TaskOutcome>, TaskError> {
    let entry_name = match variant {
        Some(label) => format!("{label}/{}", spec.name),
        None => spec.name.clone(),
    };
    match run_task(spec, system_prompts).await {
        Ok(outcome) => {
            entries.push(ManifestEntry {
                name: entry_name,
                report: Some(outcome.report_path.display().to_string()),
                verdict_log: outcome
                    .verdict_log_path
                    .as_ref()
                    .map(|p| p.display().to_string()),
                abstained: outcome.report.abstained,
                error: None,
            });
            Ok(Some(outcome))
        }
        Err(e) if options.keep_going => {
            tracing::error!(task = %entry_name, error = %e, "task failed, continuing");
            entries.push(ManifestEntry {
                name: entry_name,
                report: None,
                verdict_log: None,
                abstained: 0,
                error: Some(e.to_string()),
            });
            failed.push(spec.name.clone());
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn finish_manifest(
    config_path: &Path,
    started: Instant,
    tasks: Vec<ManifestEntry>,
) -> Result<RunManifest, TaskError> {
    Ok(RunManifest {
        config_sha256: file_sha256(config_path)?,
        tool_version: crate::TOOL_VERSION.to_string(),
        wall_ms: started.elapsed().as_millis(),
        tasks,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// One row per comparison; Wilcoxon columns are blank when the test was
/// degenerate (all differences zero).
fn write_pvalues_csv(path: &Path, report: &SuiteReport) -> Result<(), TaskError> {
    let mut out = String::from(
        "left,right,n_tasks,t_statistic,t_p_two_sided,wilcoxon_w,wilcoxon_p_two_sided\n",
    );
    for c in &report.comparisons {
        let (w_stat, w_p) = match &c.wilcoxon {
            Some(w) => (
                format!("{:.3}", round3(w.statistic)),
                format!("{:.3}", round3(w.p_two_sided)),
            ),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{},{}\n",
            c.left,
            c.right,
            c.tasks.len(),
            round3(c.t_test.statistic),
            round3(c.t_test.p_two_sided),
            w_stat,
            w_p
        ));
    }
    std::fs::write(path, out).map_err(|e| TaskError::io(path, e))
}

fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<(), TaskError> {
    let mut out = String::from("error_rate,seed,task,base_f,merged_f,youden_index\n");
    for rate in &report.rates {
        for run in &rate.runs {
            for task in &run.tasks {
                let youden = match task.youden_index {
                    Some(y) => format!("{:.3}", round3(y)),
                    None => String::new(),
                };
                out.push_str(&format!(
                    "{},{},{},{:.3},{:.3},{}\n",
                    rate.error_rate,
                    run.seed,
                    task.task,
                    round3(task.base_f),
                    round3(task.merged_f),
                    youden
                ));
            }
        }
    }
    std::fs::write(path, out).map_err(|e| TaskError::io(path, e))
}
