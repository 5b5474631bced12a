//! End-to-end pipeline runs: plan from a config, execute each job kind
//! against the configured toolchains, and persist the pipeline record,
//! suite outcomes, bench results and the results snapshot.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::bench::{run_benchmark, BenchError, BenchResult, BenchStatus};
use crate::clock::Clock;
use crate::config::{Cadence, Config};
use crate::lists::{GreenRedList, Scope};
use crate::pipeline::{
    execute_pipeline, plan_pipeline, EngineError, Job, JobKind, JobOutcome, PipelineGraph,
    PipelineResult, PlanError,
};
use crate::report::ResultsSnapshot;
use crate::suite::{discover_tests, run_suite, TestCase, TestEnv, TestOutcome};
use crate::toolchain::Toolchain;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub cadence: Cadence,
    /// Falls back to the config's `job_parallelism`.
    pub parallelism: Option<usize>,
    /// Falls back to `<workspace>/snapshot-<id>.json`.
    pub snapshot_out: Option<PathBuf>,
}

/// Contents of `pipeline-<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub graph: PipelineGraph,
    pub result: PipelineResult,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub graph: PipelineGraph,
    pub result: PipelineResult,
    pub snapshot: ResultsSnapshot,
    pub snapshot_path: PathBuf,
    pub pipeline_path: PathBuf,
    pub bench_path: Option<PathBuf>,
}

fn write_file(path: &Path, text: &str) -> Result<(), WorkflowError> {
    let io_err = |source| WorkflowError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    std::fs::write(path, text).map_err(io_err)
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[derive(Default)]
struct Collected {
    discovered: BTreeMap<String, Vec<TestCase>>,
    outcomes: Vec<TestOutcome>,
    bench: Vec<BenchResult>,
}

struct JobRunner<'a> {
    cfg: &'a Config,
    workspace: PathBuf,
    pipeline_dir: PathBuf,
    collected: Mutex<Collected>,
}

impl JobRunner<'_> {
    fn run(&self, job: &Job) -> JobOutcome {
        let result = match job.kind {
            JobKind::FetchSource => self.fetch(job),
            JobKind::BuildToolchain => self.build(job),
            JobKind::RunSuite => self.suite(job),
            JobKind::RunBench => self.bench(job),
            JobKind::CleanupWorkspace => self.cleanup(),
        };
        result.unwrap_or_else(JobOutcome::fail)
    }

    fn toolchain(&self, job: &Job) -> Result<Toolchain, String> {
        let id = job.toolchain_id.as_deref().unwrap_or_default();
        let spec = self
            .cfg
            .toolchain(id)
            .ok_or_else(|| format!("unknown toolchain {id}"))?;
        Toolchain::open(spec).map_err(|e| e.to_string())
    }

    fn fetch(&self, job: &Job) -> Result<JobOutcome, String> {
        let id = job.suite_or_bench_id.as_deref().unwrap_or_default();
        let suite = self
            .cfg
            .suite(id)
            .ok_or_else(|| format!("unknown suite {id}"))?;
        let tests = discover_tests(suite).map_err(|e| e.to_string())?;
        let detail = json!({"pinned_commit": suite.pinned_commit, "discovered": tests.len()});
        self.collected
            .lock()
            .expect("collector lock")
            .discovered
            .insert(id.to_string(), tests);
        Ok(JobOutcome {
            passed: true,
            detail,
        })
    }

    fn build(&self, job: &Job) -> Result<JobOutcome, String> {
        let tc = self.toolchain(job)?;
        let probe = tc.probe().map_err(|e| e.to_string())?;
        Ok(JobOutcome {
            passed: true,
            detail: json!(probe.lines().next().unwrap_or_default()),
        })
    }

    fn suite(&self, job: &Job) -> Result<JobOutcome, String> {
        let tc = self.toolchain(job)?;
        let tgt_id = job.target_id.as_deref().unwrap_or_default();
        let tgt = self
            .cfg
            .target(tgt_id)
            .ok_or_else(|| format!("unknown target {tgt_id}"))?;
        let suite_id = job.suite_or_bench_id.as_deref().unwrap_or_default();
        let suite = self
            .cfg
            .suite(suite_id)
            .ok_or_else(|| format!("unknown suite {suite_id}"))?;
        let discovered = self
            .collected
            .lock()
            .expect("collector lock")
            .discovered
            .get(suite_id)
            .cloned()
            .ok_or_else(|| format!("suite {suite_id} was not fetched"))?;
        let (tests, unsupported): (Vec<TestCase>, Vec<TestCase>) = discovered
            .into_iter()
            .filter(|t| suite.languages.contains(&t.language))
            .partition(|t| tc.spec.supports(t.language));

        let scope = Scope::new(tc.id(), &tgt.id, &suite.id);
        let list_path = self.workspace.join(scope.list_file_name());
        let list = if list_path.exists() {
            let text = std::fs::read_to_string(&list_path).map_err(|e| e.to_string())?;
            let list: GreenRedList =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", list_path.display()))?;
            if list.scope() != scope {
                return Err(format!(
                    "{} has scope {}",
                    list_path.display(),
                    list.scope()
                ));
            }
            Some(list)
        } else {
            None
        };

        let work_root = self
            .pipeline_dir
            .join(tc.id())
            .join(&tgt.id)
            .join(&suite.id);
        let env = TestEnv {
            suite_root: suite.root.clone(),
            work_root: Some(work_root.clone()),
        };
        let run = run_suite(
            &tests,
            &tc,
            tgt,
            self.cfg.test_timeout_s,
            list.as_ref(),
            &env,
        );
        let outcomes_json =
            serde_json::to_string_pretty(&run.outcomes).expect("outcomes serialize");
        write_file(&work_root.join("outcomes.json"), &(outcomes_json + "\n"))
            .map_err(|e| e.to_string())?;

        let ceiling = self.cfg.test_timeout_s * run.outcomes.len() as f64;
        let timed_out = run.total_seconds() > ceiling;
        let failed: Vec<&str> = run
            .outcomes
            .iter()
            .filter(|o| !o.phase_result.is_pass())
            .map(|o| o.test.id())
            .collect();
        let mut detail = json!({
            "executed": run.outcomes.len(),
            "passed": run.outcomes.len() - failed.len(),
            "failed": failed,
            "unlisted": run.unlisted.iter().map(TestCase::id).collect::<Vec<_>>(),
            "skipped_unsupported_language": unsupported.len(),
            "green_filter": list.is_some(),
        });
        if timed_out {
            detail = json!("timeout");
        }
        let passed = run.passed() && !timed_out;
        self.collected
            .lock()
            .expect("collector lock")
            .outcomes
            .extend(run.outcomes);
        Ok(JobOutcome { passed, detail })
    }

    fn bench(&self, job: &Job) -> Result<JobOutcome, String> {
        let tc = self.toolchain(job)?;
        let tgt_id = job.target_id.as_deref().unwrap_or_default();
        let tgt = self
            .cfg
            .target(tgt_id)
            .ok_or_else(|| format!("unknown target {tgt_id}"))?;
        let app_id = job.suite_or_bench_id.as_deref().unwrap_or_default();
        let app = self
            .cfg
            .benchmark(app_id)
            .ok_or_else(|| format!("unknown benchmark {app_id}"))?;
        let mut passed = true;
        let mut statuses = BTreeMap::new();
        let mut results = Vec::new();
        for &variant in &app.model_variants {
            let dir = self
                .pipeline_dir
                .join(tc.id())
                .join(&tgt.id)
                .join("bench")
                .join(&app.id)
                .join(variant.to_string());
            match run_benchmark(
                app,
                variant,
                &tc,
                tgt,
                self.cfg.bench_runs,
                self.cfg.bench_timeout_s,
                Some(&dir),
            ) {
                Ok(r) => {
                    passed &= matches!(r.status, BenchStatus::Time(_));
                    statuses.insert(variant.to_string(), json!(r.status));
                    results.push(r);
                }
                Err(BenchError::ToolchainUnavailable { reason, .. }) => {
                    statuses.insert(variant.to_string(), json!(format!("skipped: {reason}")));
                }
                Err(e) => return Err(e.to_string()),
            }
        }
        self.collected
            .lock()
            .expect("collector lock")
            .bench
            .extend(results);
        Ok(JobOutcome {
            passed,
            detail: json!(statuses),
        })
    }

    /// Drop built binaries; logs and outcome files stay.
    fn cleanup(&self) -> Result<JobOutcome, String> {
        let mut removed = 0usize;
        if self.pipeline_dir.exists() {
            for entry in walkdir::WalkDir::new(&self.pipeline_dir) {
                let entry = entry.map_err(|e| e.to_string())?;
                if entry.file_type().is_file() && entry.file_name() == "binary" {
                    std::fs::remove_file(entry.path()).map_err(|e| e.to_string())?;
                    removed += 1;
                }
            }
        }
        Ok(JobOutcome {
            passed: true,
            detail: json!({"removed_binaries": removed}),
        })
    }
}

/// Plan, execute and persist one pipeline.
pub fn run_pipeline(
    cfg: &Config,
    opts: &RunOptions,
    clock: &dyn Clock,
) -> Result<RunSummary, WorkflowError> {
    let graph = plan_pipeline(cfg, opts.cadence, clock)?;
    let workspace = absolute(&cfg.workspace_dir);
    let runner = JobRunner {
        cfg,
        pipeline_dir: workspace.join(&graph.pipeline_id),
        workspace: workspace.clone(),
        collected: Mutex::new(Collected::default()),
    };
    let parallelism = opts.parallelism.unwrap_or(cfg.job_parallelism);
    let result = execute_pipeline(&graph, |job| runner.run(job), parallelism, clock)?;
    let Collected {
        discovered,
        mut outcomes,
        mut bench,
    } = runner.collected.into_inner().expect("collector lock");

    outcomes.sort_by(|a, b| {
        (&a.toolchain_id, &a.target_id, &a.test).cmp(&(&b.toolchain_id, &b.target_id, &b.test))
    });
    bench.sort_by(|a, b| {
        (&a.app_id, a.variant, &a.toolchain_id, &a.target_id).cmp(&(
            &b.app_id,
            b.variant,
            &b.toolchain_id,
            &b.target_id,
        ))
    });
    let snapshot = ResultsSnapshot {
        snapshot_id: graph.pipeline_id.clone(),
        captured_at: graph.trigger.timestamp,
        system_label: cfg.system_label.clone(),
        commit_pins: graph.commit_pins.clone(),
        discovered: discovered.into_values().flatten().collect(),
        outcomes,
        bench,
    };

    let pipeline_path = workspace.join(format!("pipeline-{}.json", graph.pipeline_id));
    let record = PipelineRecord {
        graph: graph.clone(),
        result: result.clone(),
    };
    write_file(
        &pipeline_path,
        &(serde_json::to_string_pretty(&record).expect("record serializes") + "\n"),
    )?;
    let bench_path = if snapshot.bench.is_empty() {
        None
    } else {
        let p = workspace.join(format!("bench-{}.json", graph.pipeline_id));
        write_file(
            &p,
            &(serde_json::to_string_pretty(&snapshot.bench).expect("bench serializes") + "\n"),
        )?;
        Some(p)
    };
    let snapshot_path = opts
        .snapshot_out
        .clone()
        .unwrap_or_else(|| workspace.join(format!("snapshot-{}.json", graph.pipeline_id)));
    write_file(&snapshot_path, &snapshot.to_json())?;

    Ok(RunSummary {
        graph,
        result,
        snapshot,
        snapshot_path,
        pipeline_path,
        bench_path,
    })
}
