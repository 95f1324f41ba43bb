//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure, 3 acceptance violation.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{ConfigError, PipelineConfig};
use crate::dataset::{read_dataset, split_by_seeds, write_dataset, DatasetStats};
use crate::pipeline::{generate, manifest_for, reverify, write_outputs};
use crate::supervisor::{
    evaluate_assistant, supervise, write_trace, Assistant, NullAssistant, OracleAssistant,
};
use crate::tasks::TaskId;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Runtime(String),
    Acceptance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Acceptance(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Acceptance(m) => f.write_str(m),
            CliError::Config(e) => write!(f, "{e}"),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `a..b` (half-open), `a..=b` or a single seed.
pub fn parse_seed_range(s: &str) -> Result<Range<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed '{t}' in '{s}'"));
    let range = if let Some((a, b)) = s.split_once("..=") {
        num(a)?..num(b)?.checked_add(1).ok_or("seed range overflows")?
    } else if let Some((a, b)) = s.split_once("..") {
        num(a)?..num(b)?
    } else {
        let n = num(s)?;
        n..n + 1
    };
    if range.start >= range.end {
        return Err(format!("empty seed range '{s}'"));
    }
    Ok(range)
}

/// Parses a comma-separated list of seeds and seed ranges.
pub fn parse_seed_list(s: &str) -> Result<BTreeSet<u64>, String> {
    let mut out = BTreeSet::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        out.extend(parse_seed_range(part.trim())?);
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}

/// Tasks selected on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskList(pub Vec<TaskId>);

fn parse_tasks(s: &str) -> Result<TaskList, String> {
    if s == "all" {
        return Ok(TaskList(TaskId::ALL.to_vec()));
    }
    s.split(',')
        .map(|t| t.trim().parse::<TaskId>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(TaskList)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AssistantKind {
    Oracle,
    Null,
}

impl AssistantKind {
    fn build(self) -> Box<dyn Assistant> {
        match self {
            AssistantKind::Oracle => Box::new(OracleAssistant),
            AssistantKind::Null => Box::new(NullAssistant),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "failsafe", version, about = "Failure injection and recovery-action data generation")]
struct Cli {
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "FAILSAFE_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate failure cases, verified recoveries and dataset shards.
    Generate {
        /// YAML configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Task id, comma-separated ids, or `all`.
        #[arg(long, default_value = "all", value_parser = parse_tasks)]
        task: TaskList,
        /// Seed range `a..b` or `a..=b`.
        #[arg(long, value_parser = parse_seed_range)]
        seeds: Range<u64>,
        /// Output directory for shards, the merged file and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Override for the number of recovery candidates per failure case.
        #[arg(long)]
        candidates_per_case: Option<usize>,
    },
    /// Print the per-task failure distribution and the failure-to-success ratio.
    Stats {
        #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
        data: Option<PathBuf>,
        /// CSV of `task,type,count` rows instead of a dataset.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Replay every exported recovery and report the verified fraction.
    Verify {
        /// Merged dataset file; its manifest is read from the same directory.
        #[arg(long)]
        data: PathBuf,
        /// Configuration the dataset was generated with.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run perturbed episodes with and without an assistant.
    Supervise {
        /// YAML configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "all", value_parser = parse_tasks)]
        task: TaskList,
        #[arg(long, value_parser = parse_seed_range)]
        seeds: Range<u64>,
        #[arg(long, value_enum)]
        assistant: AssistantKind,
        /// Steps between assistant queries; the configured cadence when omitted.
        #[arg(long)]
        cadence: Option<usize>,
        /// Directory for per-episode end-effector traces.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score an assistant on a labeled dataset.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        assistant: AssistantKind,
    },
    /// Split a dataset into train and test files by seed.
    Split {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated seeds or ranges, e.g. `0..20` or `3,7,10..=12`.
        #[arg(long, value_parser = parse_seed_list)]
        test_seeds: BTreeSet<u64>,
        /// Directory receiving train.jsonl and test.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(CliError::Config),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Generate { config, task, seeds, out, candidates_per_case } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(k) = candidates_per_case {
                if k == 0 {
                    return Err(CliError::Usage("--candidates-per-case must be at least 1".into()));
                }
                cfg.dataset.candidates_per_case = k;
            }
            log::info!("generating {} task(s) over seeds {}..{}", task.0.len(), seeds.start, seeds.end);
            let generated = generate(&cfg, &task.0, seeds.clone(), jobs).map_err(runtime)?;
            let (manifest, digest) =
                write_outputs(&out, &cfg, &task.0, seeds, &generated).map_err(runtime)?;
            let c = &manifest.counts;
            log::info!(
                "{} failure cases ({} mild), {}/{} candidates verified, {} failure + {} success entries",
                c.failure_cases,
                c.mild_perturbations,
                c.verified,
                c.candidates,
                c.failure_entries,
                c.success_entries
            );
            let summary = serde_json::json!({
                "manifest_sha256": digest,
                "config_hash": manifest.config_hash,
                "counts": manifest.counts,
            });
            println!("{summary}");
        }
        Command::Stats { data, counts } => {
            let stats = match (data, counts) {
                (_, Some(csv)) => {
                    let text = std::fs::read_to_string(&csv)
                        .map_err(|e| runtime(format!("{}: {e}", csv.display())))?;
                    DatasetStats::from_counts_csv(&text).map_err(CliError::Usage)?
                }
                (Some(path), None) => DatasetStats::from_entries(&read_dataset(&path).map_err(runtime)?),
                (None, None) => return Err(CliError::Usage("--data or --counts is required".into())),
            };
            print!("{}", stats.render());
        }
        Command::Verify { data, config } => {
            let cfg = load_config(config.as_deref())?;
            if let Some(m) = manifest_for(&data).map_err(runtime)? {
                if m.config_hash != cfg.hash() {
                    return Err(CliError::Usage(format!(
                        "config hash {} does not match the manifest's {}",
                        cfg.hash(),
                        m.config_hash
                    )));
                }
            } else {
                log::warn!("no manifest next to {}; config hash not checked", data.display());
            }
            let entries = read_dataset(&data).map_err(runtime)?;
            let report = reverify(&cfg, &entries, jobs).map_err(runtime)?;
            for r in &report.rejected {
                log::error!("{r}");
            }
            println!("verified {}/{} fraction {:.3}", report.verified, report.total, report.fraction());
            if report.verified != report.total {
                return Err(CliError::Acceptance(format!(
                    "{} recoveries failed to replay",
                    report.total - report.verified
                )));
            }
        }
        Command::Supervise { config, task, seeds, assistant, cadence, trace } => {
            let cfg = load_config(config.as_deref())?;
            let cadence = cadence.unwrap_or(cfg.supervisor.cadence);
            if cadence == 0 {
                return Err(CliError::Usage("--cadence must be at least 1".into()));
            }
            let assistant = assistant.build();
            if let Some(dir) = &trace {
                std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
            }
            for t in task.0 {
                let report =
                    supervise(&cfg, t, seeds.clone(), assistant.as_ref(), cadence, jobs).map_err(runtime)?;
                if let Some(dir) = &trace {
                    for ep in &report.episodes {
                        let base = format!("{t}_{:05}", ep.seed);
                        write_trace(&ep.unassisted.trace, &dir.join(format!("{base}_null.csv")))
                            .map_err(runtime)?;
                        write_trace(
                            &ep.assisted.trace,
                            &dir.join(format!("{base}_{}.csv", report.assistant)),
                        )
                        .map_err(runtime)?;
                    }
                }
                let n = report.episodes.len().max(1) as f64;
                let interventions: usize = report.episodes.iter().map(|e| e.assisted.interventions).sum();
                println!(
                    "{t} episodes {} unassisted {:.3} {} {:.3} uplift {:+.3} mean_interventions {:.2}",
                    report.episodes.len(),
                    report.unassisted_rate(),
                    report.assistant,
                    report.assisted_rate(),
                    report.assisted_rate() - report.unassisted_rate(),
                    interventions as f64 / n
                );
            }
        }
        Command::Evaluate { data, assistant } => {
            let entries = read_dataset(&data).map_err(runtime)?;
            let assistant = assistant.build();
            let m = evaluate_assistant(assistant.as_ref(), &entries).map_err(runtime)?;
            println!("entries {} failure_entries {}", m.entries, m.failure_entries);
            println!("binary_success {:.4}", m.binary_success);
            println!("type_accuracy {:.4}", m.type_accuracy);
            println!("mean_cosine {:.4}", m.mean_cosine);
        }
        Command::Split { data, test_seeds, out } => {
            let entries = read_dataset(&data).map_err(runtime)?;
            let (train, test) = split_by_seeds(entries, &test_seeds);
            std::fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
            write_dataset(&train, &out.join("train.jsonl")).map_err(runtime)?;
            write_dataset(&test, &out.join("test.jsonl")).map_err(runtime)?;
            println!("train {} test {}", train.len(), test.len());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
