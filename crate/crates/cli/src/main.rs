//! Command-line front end for the alignment vetting pipeline.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use alignvet_core::eval::fmt3;
use alignvet_core::task::{self, RunConfig, RunManifest, SuiteOptions, SweepOptions};

#[derive(Parser)]
#[command(
    name = "alignvet",
    version,
    about = "Oracle-assisted vetting of ontology alignments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log filter (tracing syntax), e.g. "info" or "alignvet_core=debug".
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check a run config: parse it, resolve every task, verify the inputs exist.
    Validate(ConfigArgs),
    /// Run every task in the config under its own oracle.
    Run(RunArgs),
    /// Run the task x oracle-variant grid and compare variants pairwise.
    Suite(RunArgs),
    /// Re-evaluate finished tasks from their recorded verdict logs, offline.
    Replay(RunArgs),
    /// Run every task under a grid of simulated-oracle error rates and seeds.
    Sweep(SweepArgs),
    /// Print the rendered prompts without consulting any oracle.
    Render(RenderArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Stop at the first failing task instead of continuing with the rest.
    #[arg(long)]
    fail_fast: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    fail_fast: bool,
    /// Comma-separated oracle error rates in [0, 1]. Default: 0,0.1,0.2,0.3.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Comma-separated oracle seeds, one full run per seed. Default: 0.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Render only this task (default: every task in the config).
    #[arg(long)]
    task: Option<String>,
    /// Write prompts as text files under this directory instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    init_logging(&cli.log)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the async runtime")?;
    match cli.command {
        Command::Validate(args) => validate(&args),
        Command::Run(args) => runtime.block_on(run(&args)),
        Command::Suite(args) => runtime.block_on(suite(&args)),
        Command::Replay(args) => runtime.block_on(replay(&args)),
        Command::Sweep(args) => runtime.block_on(sweep(&args)),
        Command::Render(args) => render(&args),
    }
}

fn init_logging(filter: &str) -> anyhow::Result<()> {
    let filter = tracing_subscriber::EnvFilter::try_new(filter)
        .with_context(|| format!("parsing log filter {filter:?}"))?;
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    Ok(())
}

fn validate(args: &ConfigArgs) -> anyhow::Result<()> {
    let config = RunConfig::load(&args.config)?;
    let mut checked = 0usize;
    if config.oracle_variants.is_empty() {
        for spec in config.resolve()? {
            spec.validate()?;
            println!(
                "ok {} template={} system={} oracle={}",
                spec.name,
                spec.template,
                spec.system_prompt,
                task::variant_label(&spec.oracle)
            );
            checked += 1;
        }
    } else {
        for (label, specs) in config.resolve_grid()? {
            for spec in &specs {
                spec.validate()?;
            }
            println!("ok variant {label}: {} task(s)", specs.len());
            checked += specs.len();
        }
    }
    println!("{}: {checked} task spec(s) valid", args.config.display());
    Ok(())
}

async fn run(args: &RunArgs) -> anyhow::Result<()> {
    let options = SuiteOptions {
        keep_going: !args.fail_fast,
    };
    let manifest = task::run_all(&args.config.config, &options).await?;
    report_manifest(&manifest)
}

async fn replay(args: &RunArgs) -> anyhow::Result<()> {
    let options = SuiteOptions {
        keep_going: !args.fail_fast,
    };
    let manifest = task::replay_all(&args.config.config, &options).await?;
    report_manifest(&manifest)
}

fn report_manifest(manifest: &RunManifest) -> anyhow::Result<()> {
    let mut failed = 0usize;
    for entry in &manifest.tasks {
        match (&entry.error, &entry.report) {
            (Some(error), _) => {
                failed += 1;
                println!("FAIL {}: {error}", entry.name);
            }
            (None, Some(report)) => {
                println!(
                    "ok {} (abstained {}): {report}",
                    entry.name, entry.abstained
                );
            }
            (None, None) => println!("ok {} (abstained {})", entry.name, entry.abstained),
        }
    }
    println!(
        "{} task(s) in {} ms",
        manifest.tasks.len(),
        manifest.wall_ms
    );
    if failed > 0 {
        anyhow::bail!("{failed} of {} task(s) failed", manifest.tasks.len());
    }
    Ok(())
}

async fn suite(args: &RunArgs) -> anyhow::Result<()> {
    let options = SuiteOptions {
        keep_going: !args.fail_fast,
    };
    let report = task::run_suite(&args.config.config, &options).await?;
    let mut failed = 0usize;
    for variant in &report.variants {
        println!(
            "variant {} ({} task(s))",
            variant.label,
            variant.tasks.len()
        );
        for summary in &variant.tasks {
            let youden = summary.youden_index.map_or_else(|| "-".into(), fmt3);
            println!(
                "  {}  base F {}  merged F {}  YI {}",
                summary.task,
                fmt3(summary.base_f),
                fmt3(summary.merged_f),
                youden
            );
        }
        for name in &variant.failed {
            failed += 1;
            println!("  FAIL {name}");
        }
    }
    for cmp in &report.comparisons {
        let wilcoxon = cmp
            .wilcoxon
            .as_ref()
            .map_or_else(|| "-".into(), |w| fmt3(w.p_two_sided));
        println!(
            "{} vs {} (n={}): t two-sided p {}, wilcoxon two-sided p {}",
            cmp.left,
            cmp.right,
            cmp.tasks.len(),
            fmt3(cmp.t_test.p_two_sided),
            wilcoxon
        );
    }
    for note in &report.skipped_comparisons {
        println!("skipped: {note}");
    }
    if failed > 0 {
        anyhow::bail!("{failed} task run(s) failed");
    }
    Ok(())
}

async fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let defaults = SweepOptions::default();
    let options = SweepOptions {
        rates: args.rates.clone().unwrap_or(defaults.rates),
        seeds: args.seeds.clone().unwrap_or(defaults.seeds),
        keep_going: !args.fail_fast,
    };
    let report = task::sweep(&args.config.config, &options).await?;
    let mut failed = 0usize;
    for rate in &report.rates {
        let mean_f = rate.mean_merged_f.map_or_else(|| "-".into(), fmt3);
        let mean_yi = rate.mean_youden.map_or_else(|| "-".into(), fmt3);
        println!(
            "error rate {}: mean merged F {mean_f}, mean YI {mean_yi} over {} seed(s)",
            rate.error_rate,
            rate.runs.len()
        );
        for run in &rate.runs {
            failed += run.failed.len();
        }
    }
    if failed > 0 {
        anyhow::bail!("{failed} task run(s) failed");
    }
    Ok(())
}

fn render(args: &RenderArgs) -> anyhow::Result<()> {
    let config = RunConfig::load(&args.config.config)?;
    let system_prompts = config.system_prompts();
    // Prompts do not depend on the oracle, so the plain resolution works
    // even for grid-only configs.
    let specs = config.resolve()?;
    let selected: Vec<_> = specs
        .iter()
        .filter(|s| args.task.as_deref().is_none_or(|t| t == s.name))
        .collect();
    if let Some(task) = &args.task {
        if selected.is_empty() {
            anyhow::bail!("no task named {task:?} in {}", args.config.config.display());
        }
    }
    for spec in selected {
        let prompts = task::render_task_prompts(spec, &system_prompts)?;
        match &args.out {
            Some(dir) => {
                let task_dir = dir.join(&spec.name);
                std::fs::create_dir_all(&task_dir)
                    .with_context(|| format!("creating {}", task_dir.display()))?;
                if let Some(system) = prompts.first().and_then(|p| p.system_text.as_deref()) {
                    std::fs::write(task_dir.join("system.txt"), format!("{system}\n"))?;
                }
                for (i, prompt) in prompts.iter().enumerate() {
                    let file = task_dir.join(format!("prompt-{:04}.txt", i + 1));
                    std::fs::write(file, format!("{}\n", prompt.user_text))?;
                }
                println!(
                    "{}: {} prompt(s) -> {}",
                    spec.name,
                    prompts.len(),
                    task_dir.display()
                );
            }
            None => {
                println!(
                    "## {} ({} prompt(s), template {}, system {})",
                    spec.name,
                    prompts.len(),
                    spec.template,
                    spec.system_prompt
                );
                if let Some(system) = prompts.first().and_then(|p| p.system_text.as_deref()) {
                    println!("[system]\n{system}\n");
                }
                for (i, prompt) in prompts.iter().enumerate() {
                    println!("--- {} {}", i + 1, prompt.mapping_key);
                    println!("{}\n", prompt.user_text);
                }
            }
        }
    }
    Ok(())
}
