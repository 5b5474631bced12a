//! Command-line surface: `plan`, `run`, `greenlist gen|diff` and `report`.
//!
//! Exit codes: 0 success, 1 pipeline or test failures (including
//! regressions), 2 usage or configuration errors, 3 internal errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::clock::{Clock, FixedClock, SystemClock};
use crate::config::{self, Cadence, Config, Severity};
use crate::lists::{build_all_lists, diff_results, GreenRedList, Scope};
use crate::pipeline::{plan_pipeline, JobKind, JobStatus, Stage, Status};
use crate::report::{
    aggregate_by_version, bench_table, evolution_series, render, totals_by_language, Format,
    LanguageGroup, ResultsSnapshot,
};
use crate::workflow::{run_pipeline, RunOptions, WorkflowError};

pub const WORKSPACE_ENV: &str = "OMPFORGE_WORKSPACE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExitCode(pub i32);

impl ExitCode {
    pub const SUCCESS: ExitCode = ExitCode(0);
    pub const FAILURES: ExitCode = ExitCode(1);
    pub const USAGE: ExitCode = ExitCode(2);
    pub const INTERNAL: ExitCode = ExitCode(3);
}

#[derive(Debug, Parser)]
#[command(
    name = "ompforge",
    version,
    about = "Validation, verification and benchmarking pipelines for offloading compilers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Show the jobs a cadence would run.
    Plan {
        config: PathBuf,
        #[arg(long, value_enum)]
        cadence: CadenceArg,
    },
    /// Execute a pipeline and write its results snapshot.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        cadence: CadenceArg,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Snapshot path; defaults to <workspace>/snapshot-<id>.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        clock: ClockArgs,
    },
    /// Generate green/red lists or diff a run against one.
    Greenlist {
        #[command(subcommand)]
        action: GreenlistAction,
    },
    /// Render a report from one or more snapshots.
    Report {
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
        #[arg(long)]
        shape: String,
        #[arg(long)]
        format: String,
        #[arg(long, value_enum, default_value = "c-and-cxx")]
        group: GroupArg,
        /// Output path; defaults to <workspace>/reports/<shape>.<ext>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum GreenlistAction {
    /// Write one list per (toolchain, target, suite) found in the snapshots.
    Gen {
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
        /// Restrict to toolchain:target:suite; repeatable.
        #[arg(long)]
        scope: Vec<Scope>,
        /// Defaults to the workspace directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        clock: ClockArgs,
    },
    /// Compare a snapshot against a baseline list. Exits 1 on regressions.
    Diff {
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        scope: Option<Scope>,
        /// Report path; defaults to <workspace>/regressions-<scope>.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ClockArgs {
    /// Use this RFC 3339 instant for every timestamp.
    #[arg(long, env = "OMPFORGE_FIXED_TIME")]
    fixed_time: Option<String>,
}

impl ClockArgs {
    fn clock(&self) -> Result<Box<dyn Clock>, String> {
        match &self.fixed_time {
            Some(t) => FixedClock::parse(t)
                .map(|c| Box::new(c) as Box<dyn Clock>)
                .map_err(|e| format!("invalid --fixed-time {t:?}: {e}")),
            None => Ok(Box::new(SystemClock)),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CadenceArg {
    Hourly,
    Weekly,
    Manual,
}

impl From<CadenceArg> for Cadence {
    fn from(c: CadenceArg) -> Self {
        match c {
            CadenceArg::Hourly => Cadence::Hourly,
            CadenceArg::Weekly => Cadence::Weekly,
            CadenceArg::Manual => Cadence::Manual,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupArg {
    CAndCxx,
    Fortran,
}

impl From<GroupArg> for LanguageGroup {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::CAndCxx => LanguageGroup::CAndCxx,
            GroupArg::Fortran => LanguageGroup::Fortran,
        }
    }
}

/// Failure carrying the exit code it maps to.
struct Failure(ExitCode, String);

fn usage(msg: impl Into<String>) -> Failure {
    Failure(ExitCode::USAGE, msg.into())
}

fn internal(msg: impl Into<String>) -> Failure {
    Failure(ExitCode::INTERNAL, msg.into())
}

fn workspace_override() -> Option<PathBuf> {
    std::env::var_os(WORKSPACE_ENV).map(PathBuf::from)
}

fn default_workspace() -> PathBuf {
    workspace_override().unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(path: &Path, err: &mut dyn Write) -> Result<Config, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg =
        config::parse_config(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.resolve_paths(base);
    if let Some(ws) = workspace_override() {
        cfg.workspace_dir = ws;
    }
    let issues = config::validate_config(&cfg);
    for issue in &issues {
        let _ = writeln!(err, "{issue}");
    }
    if issues.iter().any(|i| i.severity == Severity::Error) {
        return Err(usage("configuration has errors"));
    }
    Ok(cfg)
}

fn load_snapshots(paths: &[PathBuf]) -> Result<Vec<ResultsSnapshot>, Failure> {
    paths
        .iter()
        .map(|p| {
            ResultsSnapshot::load(p)
                .map_err(|e| usage(format!("cannot load snapshot {}: {e}", p.display())))
        })
        .collect()
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| internal(format!("{}: {e}", path.display())))
}

/// Parse `args` (including the program name) and run the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return ExitCode::USAGE;
            }
            let _ = write!(out, "{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Plan { config, cadence } => cmd_plan(&config, cadence.into(), out, err),
        Command::Run {
            config,
            cadence,
            parallelism,
            out: snapshot_out,
            clock,
        } => cmd_run(
            &config,
            cadence.into(),
            parallelism,
            snapshot_out,
            &clock,
            out,
            err,
        ),
        Command::Greenlist { action } => match action {
            GreenlistAction::Gen {
                snapshots,
                scope,
                out_dir,
                clock,
            } => cmd_greenlist_gen(&snapshots, &scope, out_dir, &clock, out),
            GreenlistAction::Diff {
                snapshots,
                baseline,
                scope,
                out: report_out,
            } => cmd_greenlist_diff(&snapshots, &baseline, scope, report_out, out),
        },
        Command::Report {
            snapshots,
            shape,
            format,
            group,
            out: report_out,
        } => cmd_report(&snapshots, &shape, &format, group.into(), report_out, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn cmd_plan(
    path: &Path,
    cadence: Cadence,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitCode, Failure> {
    let cfg = load_config(path, err)?;
    let graph = plan_pipeline(&cfg, cadence, &SystemClock).map_err(|e| usage(e.to_string()))?;
    let stages: Vec<String> = Stage::ALL
        .iter()
        .map(|s| format!("{s}: {}", graph.count(*s)))
        .collect();
    let _ = writeln!(out, "{}", stages.join(", "));
    let _ = writeln!(
        out,
        "run_suite: {}, run_bench: {}",
        graph.count_kind(JobKind::RunSuite),
        graph.count_kind(JobKind::RunBench)
    );
    for job in &graph.jobs {
        let _ = writeln!(out, "  [{}] {}", job.stage, job.id);
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    path: &Path,
    cadence: Cadence,
    parallelism: Option<usize>,
    snapshot_out: Option<PathBuf>,
    clock: &ClockArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitCode, Failure> {
    let cfg = load_config(path, err)?;
    if parallelism == Some(0) {
        return Err(usage("--parallelism must be >= 1"));
    }
    let clock = clock.clock().map_err(usage)?;
    let opts = RunOptions {
        cadence,
        parallelism,
        snapshot_out,
    };
    let summary = run_pipeline(&cfg, &opts, clock.as_ref()).map_err(|e| match e {
        WorkflowError::Plan(p) => usage(p.to_string()),
        other => internal(other.to_string()),
    })?;
    for r in &summary.result.job_results {
        let marker = match r.status {
            JobStatus::Pass => "PASS",
            JobStatus::Fail => "FAIL",
            JobStatus::Skipped => "SKIP",
        };
        let _ = writeln!(out, "{marker}  {}", r.job_id);
    }
    let overall = match summary.result.overall {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
    };
    let _ = writeln!(out, "pipeline {}: {overall}", summary.result.pipeline_id);
    let _ = writeln!(out, "snapshot: {}", summary.snapshot_path.display());
    Ok(match summary.result.overall {
        Status::Pass => ExitCode::SUCCESS,
        Status::Fail => ExitCode::FAILURES,
    })
}

fn cmd_greenlist_gen(
    paths: &[PathBuf],
    scopes: &[Scope],
    out_dir: Option<PathBuf>,
    clock: &ClockArgs,
    out: &mut dyn Write,
) -> Result<ExitCode, Failure> {
    let snapshots = load_snapshots(paths)?;
    let clock = clock.clock().map_err(usage)?;
    let dir = out_dir.unwrap_or_else(default_workspace);
    let mut written = 0;
    for snap in &snapshots {
        let lists = build_all_lists(&snap.outcomes, &snap.commit_pins, clock.now())
            .map_err(|e| usage(e.to_string()))?;
        for list in lists {
            if !scopes.is_empty() && !scopes.contains(&list.scope()) {
                continue;
            }
            let path = dir.join(list.scope().list_file_name());
            write_output(&path, &list.to_json())?;
            let _ = writeln!(
                out,
                "{}: {} green, {} red -> {}",
                list.scope(),
                list.green.len(),
                list.red.len(),
                path.display()
            );
            written += 1;
        }
    }
    if written == 0 {
        return Err(usage("no outcomes match the requested scope"));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_greenlist_diff(
    paths: &[PathBuf],
    baseline_path: &Path,
    scope: Option<Scope>,
    report_out: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<ExitCode, Failure> {
    let text = std::fs::read_to_string(baseline_path).map_err(|e| {
        usage(format!(
            "cannot read baseline {}: {e}",
            baseline_path.display()
        ))
    })?;
    let baseline: GreenRedList = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: {e}", baseline_path.display())))?;
    let list_scope = baseline.scope();
    if let Some(s) = &scope {
        if *s != list_scope {
            return Err(usage(format!(
                "scope mismatch: --scope {s}, baseline {list_scope}"
            )));
        }
    }
    let snapshots = load_snapshots(paths)?;
    let outcomes: Vec<_> = snapshots
        .iter()
        .flat_map(|s| s.outcomes.iter())
        .filter(|o| Scope::of(o) == list_scope)
        .cloned()
        .collect();
    if outcomes.is_empty() {
        return Err(usage(format!(
            "scope mismatch: no outcomes for {list_scope}"
        )));
    }
    let report = diff_results(&baseline, &outcomes).map_err(|e| usage(e.to_string()))?;
    let path = report_out.unwrap_or_else(|| {
        default_workspace().join(format!(
            "regressions-{}-{}-{}.json",
            list_scope.toolchain_id, list_scope.target_id, list_scope.suite_id
        ))
    });
    write_output(&path, &report.to_json())?;
    for id in &report.regressions {
        let _ = writeln!(out, "REGRESSION  {id}");
    }
    for id in &report.promotions {
        let _ = writeln!(out, "PROMOTION   {id}");
    }
    let _ = writeln!(
        out,
        "{list_scope}: {} regressions, {} promotions -> {}",
        report.regressions.len(),
        report.promotions.len(),
        path.display()
    );
    Ok(if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURES
    })
}

fn cmd_report(
    paths: &[PathBuf],
    shape: &str,
    format: &str,
    group: LanguageGroup,
    report_out: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<ExitCode, Failure> {
    let format = match format {
        "json" => Format::Json,
        "csv" => Format::Csv,
        "markdown" | "md" => Format::Markdown,
        other => {
            return Err(usage(format!(
                "unknown format {other:?} (json, csv, markdown)"
            )))
        }
    };
    if !matches!(shape, "version-matrix" | "totals" | "evolution" | "bench") {
        return Err(usage(format!(
            "unknown shape {shape:?} (version-matrix, totals, evolution, bench)"
        )));
    }
    let snapshots = load_snapshots(paths)?;
    let (text, stem) = match shape {
        "version-matrix" => {
            let stem = match group {
                LanguageGroup::CAndCxx => "version-matrix-c-and-cxx",
                LanguageGroup::Fortran => "version-matrix-fortran",
            };
            (
                render(&aggregate_by_version(&snapshots, group), format),
                stem,
            )
        }
        "totals" => (render(&totals_by_language(&snapshots), format), "totals"),
        "evolution" => (render(&evolution_series(&snapshots), format), "evolution"),
        _ => (render(&bench_table(&snapshots), format), "bench"),
    };
    let path = report_out.unwrap_or_else(|| {
        default_workspace()
            .join("reports")
            .join(format!("{stem}.{}", format.extension()))
    });
    write_output(&path, &text)?;
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}
