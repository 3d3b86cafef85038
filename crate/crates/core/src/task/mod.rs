//! Declarative experiment pipeline: from a config file naming ontologies,
//! alignment files and an oracle, to reports on how oracle vetting changed
//! alignment quality.
//!
//! Everything written under a task's output directory is a pure function of
//! the inputs (config, seed or recorded verdicts); wall-clock information is
//! confined to the run manifest so outputs stay byte-comparable across runs.

mod run;
mod suite;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentError;
use crate::eval::EvalError;
use crate::ontology::OntologyError;
use crate::oracle::{OracleConfig, OracleError};
use crate::prompt::{PromptError, PromptTemplateId, SystemPromptId, SystemPrompts};

pub use run::{
    prepare_task, render_task_prompts, run_task, DiagnosticDisplay, DiagnosticSection,
    MetricsDisplay, MetricsSection, PreparedTask, TaskOutcome, TaskRunReport, ABSTENTION_POLICY,
};
pub use suite::{
    replay_all, run_all, run_suite, sweep, PairedComparison, SuiteOptions, SuiteReport,
    SweepOptions, SweepRate, SweepReport, SweepRun, TaskSummary, VariantSummary,
};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("serializing {what}: {message}")]
    Serialize { what: String, message: String },
}

impl TaskError {
    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        TaskError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// One alignment task: a pair of ontologies, the base matcher's output, the
/// uncertain subset to put to the oracle, and the reference to score
/// against. Produced by resolving a [`RunConfig`]; all paths are absolute.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSpec {
    pub name: String,
    pub source_onto: PathBuf,
    pub target_onto: PathBuf,
    pub base_alignment: PathBuf,
    pub ask_alignment: PathBuf,
    pub reference_alignment: PathBuf,
    pub template: PromptTemplateId,
    pub system_prompt: SystemPromptId,
    pub oracle: OracleConfig,
    pub output_dir: PathBuf,
}

impl TaskSpec {
    /// Checks what can be checked without running: input files exist, the
    /// oracle config is coherent.
    pub fn validate(&self) -> Result<(), TaskError> {
        for (what, path) in [
            ("source ontology", &self.source_onto),
            ("target ontology", &self.target_onto),
            ("base alignment", &self.base_alignment),
            ("ask alignment", &self.ask_alignment),
            ("reference alignment", &self.reference_alignment),
        ] {
            if !path.is_file() {
                return Err(TaskError::Config(format!(
                    "task {:?}: {what} {} is not a readable file",
                    self.name,
                    path.display()
                )));
            }
        }
        self.oracle.validate()?;
        Ok(())
    }
}

fn default_template() -> PromptTemplateId {
    PromptTemplateId::PNlf
}

fn default_oracle() -> OracleConfig {
    OracleConfig::Simulated {
        error_rate: 0.0,
        seed: 0,
    }
}

/// Per-task fields that may inherit from `[defaults]`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDefaults {
    pub template: Option<PromptTemplateId>,
    pub system_prompt: Option<SystemPromptId>,
    pub oracle: Option<OracleConfig>,
}

/// One `[[task]]` block.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    pub source_onto: PathBuf,
    pub target_onto: PathBuf,
    pub base_alignment: PathBuf,
    pub ask_alignment: PathBuf,
    pub reference_alignment: PathBuf,
    pub template: Option<PromptTemplateId>,
    pub system_prompt: Option<SystemPromptId>,
    pub oracle: Option<OracleConfig>,
}

/// The experiment configuration file.
///
/// Relative paths are resolved against the directory containing the file.
/// `[[oracle_variant]]` blocks, when present, run every task under every
/// variant (the suite comparison grid); without them each task runs under
/// its own (or the default) oracle.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub defaults: TaskDefaults,
    #[serde(default, rename = "task")]
    pub tasks: Vec<TaskEntry>,
    #[serde(default, rename = "oracle_variant")]
    pub oracle_variants: Vec<OracleConfig>,
    /// Replacement texts for the built-in system prompts, keyed by id.
    #[serde(default)]
    pub system_prompts: BTreeMap<SystemPromptId, String>,
}

impl RunConfig {
    /// Parses `path` and resolves every relative path in it.
    pub fn load(path: &Path) -> Result<RunConfig, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaskError::io(path, e))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| TaskError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.output_dir = absolutize(base, &config.output_dir);
        for task in &mut config.tasks {
            for p in [
                &mut task.source_onto,
                &mut task.target_onto,
                &mut task.base_alignment,
                &mut task.ask_alignment,
                &mut task.reference_alignment,
            ] {
                *p = absolutize(base, p);
            }
            if let Some(OracleConfig::Replay { log }) = &mut task.oracle {
                *log = absolutize(base, log);
            }
        }
        if let Some(OracleConfig::Replay { log }) = &mut config.defaults.oracle {
            *log = absolutize(base, log);
        }
        for variant in &mut config.oracle_variants {
            if let OracleConfig::Replay { log } = variant {
                *log = absolutize(base, log);
            }
        }
        Ok(config)
    }

    /// System prompt texts in effect: built-ins plus overrides.
    pub fn system_prompts(&self) -> SystemPrompts {
        SystemPrompts::with_overrides(self.system_prompts.clone())
    }

    /// Resolves the `[[task]]` entries into concrete specs, one per task,
    /// each under its own oracle (ignoring `[[oracle_variant]]`).
    pub fn resolve(&self) -> Result<Vec<TaskSpec>, TaskError> {
        self.resolve_with(None)
    }

    /// Resolves the grid of task × oracle variant specs. Outputs nest as
    /// `output_dir/<variant-label>/<task-name>` so variants never collide.
    pub fn resolve_grid(&self) -> Result<Vec<(String, Vec<TaskSpec>)>, TaskError> {
        if self.oracle_variants.is_empty() {
            return Err(TaskError::Config(
                "a comparison grid needs at least one [[oracle_variant]] block".into(),
            ));
        }
        let mut grid = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for variant in &self.oracle_variants {
            let label = variant_label(variant);
            if !seen.insert(label.clone()) {
                return Err(TaskError::Config(format!(
                    "duplicate oracle variant {label:?} in the grid"
                )));
            }
            grid.push((label, self.resolve_with(Some(variant))?));
        }
        Ok(grid)
    }

    fn resolve_with(
        &self,
        oracle_override: Option<&OracleConfig>,
    ) -> Result<Vec<TaskSpec>, TaskError> {
        if self.tasks.is_empty() {
            return Err(TaskError::Config(
                "no [[task]] blocks in configuration".into(),
            ));
        }
        let mut names = std::collections::BTreeSet::new();
        let mut specs = Vec::new();
        for task in &self.tasks {
            if task.name.trim().is_empty() {
                return Err(TaskError::Config("task name must not be empty".into()));
            }
            if task.name.contains(['/', '\\']) {
                return Err(TaskError::Config(format!(
                    "task name {:?} must not contain path separators",
                    task.name
                )));
            }
            if !names.insert(task.name.clone()) {
                return Err(TaskError::Config(format!(
                    "duplicate task name {:?}",
                    task.name
                )));
            }
            let oracle = match oracle_override {
                Some(o) => o.clone(),
                None => task
                    .oracle
                    .clone()
                    .or_else(|| self.defaults.oracle.clone())
                    .unwrap_or_else(default_oracle),
            };
            let output_dir = match oracle_override {
                Some(o) => self.output_dir.join(variant_label(o)).join(&task.name),
                None => self.output_dir.join(&task.name),
            };
            specs.push(TaskSpec {
                name: task.name.clone(),
                source_onto: task.source_onto.clone(),
                target_onto: task.target_onto.clone(),
                base_alignment: task.base_alignment.clone(),
                ask_alignment: task.ask_alignment.clone(),
                reference_alignment: task.reference_alignment.clone(),
                template: task
                    .template
                    .or(self.defaults.template)
                    .unwrap_or_else(default_template),
                system_prompt: task
                    .system_prompt
                    .or(self.defaults.system_prompt)
                    .unwrap_or_default(),
                oracle,
                output_dir,
            });
        }
        Ok(specs)
    }
}

/// Filesystem-safe, human-readable label identifying an oracle variant in
/// output paths and suite tables.
pub fn variant_label(oracle: &OracleConfig) -> String {
    match oracle {
        OracleConfig::Simulated { error_rate, seed } => {
            format!("simulated-e{error_rate}-s{seed}")
        }
        OracleConfig::Llm(config) => {
            let safe: String = config
                .model_name
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                        c
                    } else {
                        '-'
                    }
                })
                .collect();
            format!("llm-{safe}")
        }
        OracleConfig::Replay { .. } => "replay".to_string(),
    }
}

fn absolutize(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Run-level bookkeeping: the one artifact allowed to contain wall-clock
/// data. Everything a byte-comparison should see lives in the reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the configuration file bytes, hex.
    pub config_sha256: String,
    pub tool_version: String,
    pub wall_ms: u128,
    pub tasks: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub report: Option<String>,
    pub verdict_log: Option<String>,
    pub abstained: u64,
    /// Error text when the task failed; its artifacts may be partial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Hex SHA-256 of a file's bytes, for manifest config identity.
pub fn file_sha256(path: &Path) -> Result<String, TaskError> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| TaskError::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    Ok(hex)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.toml");
        std::fs::write(&path, body).unwrap();
        path
    }

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), "").unwrap();
    }

    const MINIMAL: &str = r#"
output_dir = "out"

[defaults]
template = "P_NLF"

[defaults.oracle]
kind = "simulated"
error_rate = 0.1
seed = 7

[[task]]
name = "demo"
source_onto = "s.owl"
target_onto = "t.owl"
base_alignment = "base.rdf"
ask_alignment = "ask.rdf"
reference_alignment = "ref.rdf"
"#;

    #[test]
    fn loads_and_resolves_relative_paths_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), MINIMAL);
        let config = RunConfig::load(&path).unwrap();
        let specs = config.resolve().unwrap();
        assert_eq!(specs.len(), 1);
        let spec = &specs[0];
        assert_eq!(spec.template, PromptTemplateId::PNlf);
        assert_eq!(spec.system_prompt, SystemPromptId::None);
        assert_eq!(spec.source_onto, dir.path().join("s.owl"));
        assert_eq!(spec.output_dir, dir.path().join("out/demo"));
        assert_eq!(
            spec.oracle,
            OracleConfig::Simulated {
                error_rate: 0.1,
                seed: 7
            }
        );
    }

    #[test]
    fn per_task_settings_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{MINIMAL}\ntemplate = \"P_EC\"\nsystem_prompt = \"om-expert\"\n\n[task.oracle]\nkind = \"simulated\"\nerror_rate = 0.5\nseed = 1\n"
        );
        let path = write_config(dir.path(), &body);
        let config = RunConfig::load(&path).unwrap();
        let spec = config.resolve().unwrap().remove(0);
        assert_eq!(spec.template, PromptTemplateId::PEc);
        assert_eq!(spec.system_prompt, SystemPromptId::OmExpert);
        assert_eq!(
            spec.oracle,
            OracleConfig::Simulated {
                error_rate: 0.5,
                seed: 1
            }
        );
    }

    #[test]
    fn duplicate_task_names_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let dup = MINIMAL.to_string() + &MINIMAL[MINIMAL.find("[[task]]").unwrap()..];
        let path = write_config(dir.path(), &dup);
        let config = RunConfig::load(&path).unwrap();
        let err = config.resolve().unwrap_err().to_string();
        assert!(err.contains("duplicate task name"), "{err}");
    }

    #[test]
    fn grid_crosses_tasks_with_variants() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{MINIMAL}\n[[oracle_variant]]\nkind = \"simulated\"\nerror_rate = 0.0\nseed = 42\n\n[[oracle_variant]]\nkind = \"simulated\"\nerror_rate = 0.3\nseed = 42\n"
        );
        let path = write_config(dir.path(), &body);
        let config = RunConfig::load(&path).unwrap();
        let grid = config.resolve_grid().unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid[0].0, "simulated-e0-s42");
        assert_eq!(grid[1].0, "simulated-e0.3-s42");
        assert_eq!(
            grid[1].1[0].output_dir,
            dir.path().join("out/simulated-e0.3-s42/demo")
        );
    }

    #[test]
    fn validation_requires_input_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), MINIMAL);
        let config = RunConfig::load(&path).unwrap();
        let spec = config.resolve().unwrap().remove(0);
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("source ontology"), "{err}");

        for f in ["s.owl", "t.owl", "base.rdf", "ask.rdf", "ref.rdf"] {
            touch(dir.path(), f);
        }
        spec.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), &format!("{MINIMAL}\nnot_a_key = 3\n"));
        let err = RunConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("not_a_key"), "{err}");
    }

    #[test]
    fn file_hash_is_stable_hex() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, "abc").unwrap();
        let hash = file_sha256(&path).unwrap();
        assert_eq!(
            hash,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
