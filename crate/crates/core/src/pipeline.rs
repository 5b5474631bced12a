//! Job graph planning, bounded-parallel execution and status rollup.
//!
//! A pipeline is a DAG of jobs in four ordered stages. Any failed or skipped
//! job fails its stage, and any failed stage fails the pipeline. Jobs whose
//! dependencies failed are skipped, except the cleanup job, which always
//! runs once the test stage has settled.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Condvar, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::config::{Cadence, Config};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no suites or benchmarks are triggered by cadence {0}")]
    NothingTriggered(Cadence),
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("dependency cycle through job {0}")]
    Cycle(String),
    #[error("job {job} depends on unknown job {dep}")]
    UnknownDependency { job: String, dep: String },
    #[error("job {job} depends on {dep}, which is not in an earlier stage")]
    StageOrder { job: String, dep: String },
    #[error("duplicate job id {0}")]
    DuplicateJob(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Build,
    Test,
    Cleanup,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Setup, Stage::Build, Stage::Test, Stage::Cleanup];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Setup => "setup",
            Stage::Build => "build",
            Stage::Test => "test",
            Stage::Cleanup => "cleanup",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    FetchSource,
    BuildToolchain,
    RunSuite,
    RunBench,
    CleanupWorkspace,
}

impl JobKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::FetchSource => "fetch_source",
            JobKind::BuildToolchain => "build_toolchain",
            JobKind::RunSuite => "run_suite",
            JobKind::RunBench => "run_bench",
            JobKind::CleanupWorkspace => "cleanup_workspace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub stage: Stage,
    pub kind: JobKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toolchain_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite_or_bench_id: Option<String>,
    pub depends_on: BTreeSet<String>,
}

impl Job {
    /// `kind[/suite][/toolchain][/target]`
    pub fn make_id(
        kind: JobKind,
        toolchain: Option<&str>,
        target: Option<&str>,
        subject: Option<&str>,
    ) -> String {
        let mut id = kind.as_str().to_string();
        for part in [subject, toolchain, target].into_iter().flatten() {
            id.push('/');
            id.push_str(part);
        }
        id
    }

    fn new(
        kind: JobKind,
        stage: Stage,
        toolchain: Option<&str>,
        target: Option<&str>,
        subject: Option<&str>,
    ) -> Self {
        Job {
            id: Self::make_id(kind, toolchain, target, subject),
            stage,
            kind,
            toolchain_id: toolchain.map(String::from),
            target_id: target.map(String::from),
            suite_or_bench_id: subject.map(String::from),
            depends_on: BTreeSet::new(),
        }
    }

    /// Cleanup runs even when upstream jobs failed.
    pub fn always_runs(&self) -> bool {
        self.kind == JobKind::CleanupWorkspace
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrigger {
    pub cadence: Cadence,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineGraph {
    pub pipeline_id: String,
    pub trigger: PipelineTrigger,
    pub commit_pins: BTreeMap<String, String>,
    pub jobs: Vec<Job>,
}

impl PipelineGraph {
    pub fn job(&self, id: &str) -> Option<&Job> {
        self.jobs.iter().find(|j| j.id == id)
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.jobs.iter().filter(|j| j.stage == stage).count()
    }

    pub fn count_kind(&self, kind: JobKind) -> usize {
        self.jobs.iter().filter(|j| j.kind == kind).count()
    }

    /// Check ids, dependency references, stage ordering and acyclicity.
    pub fn validate(&self) -> Result<(), EngineError> {
        let mut by_id = HashMap::new();
        for job in &self.jobs {
            if by_id.insert(job.id.as_str(), job).is_some() {
                return Err(EngineError::DuplicateJob(job.id.clone()));
            }
        }
        for job in &self.jobs {
            for dep in &job.depends_on {
                let Some(d) = by_id.get(dep.as_str()) else {
                    return Err(EngineError::UnknownDependency {
                        job: job.id.clone(),
                        dep: dep.clone(),
                    });
                };
                if d.stage >= job.stage {
                    return Err(EngineError::StageOrder {
                        job: job.id.clone(),
                        dep: dep.clone(),
                    });
                }
            }
        }
        topo_order(&self.jobs).map(|_| ())
    }
}

/// Kahn's algorithm; ties broken by position in `jobs`.
fn topo_order(jobs: &[Job]) -> Result<Vec<usize>, EngineError> {
    let index: HashMap<&str, usize> = jobs
        .iter()
        .enumerate()
        .map(|(i, j)| (j.id.as_str(), i))
        .collect();
    let mut indegree = vec![0usize; jobs.len()];
    let mut dependents = vec![Vec::new(); jobs.len()];
    for (i, job) in jobs.iter().enumerate() {
        for dep in &job.depends_on {
            if let Some(&d) = index.get(dep.as_str()) {
                indegree[i] += 1;
                dependents[d].push(i);
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..jobs.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(jobs.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &n in &dependents[i] {
            indegree[n] -= 1;
            if indegree[n] == 0 {
                ready.insert(n);
            }
        }
    }
    if order.len() < jobs.len() {
        let stuck = (0..jobs.len())
            .find(|i| indegree[*i] > 0)
            .expect("some job is stuck");
        return Err(EngineError::Cycle(jobs[stuck].id.clone()));
    }
    Ok(order)
}

/// Plan the jobs for one trigger cadence.
///
/// One fetch per triggered suite, one build per (toolchain, target), one
/// suite run per (suite, toolchain, target) sharing a language, one bench
/// run per (benchmark, toolchain, target), and one cleanup after all tests.
pub fn plan_pipeline(
    cfg: &Config,
    cadence: Cadence,
    clock: &dyn Clock,
) -> Result<PipelineGraph, PlanError> {
    let triggered: BTreeSet<&str> = cfg
        .triggers
        .iter()
        .filter(|t| t.cadence == cadence)
        .map(|t| t.suite_or_bench_id.as_str())
        .collect();
    let suites: Vec<_> = cfg
        .suites
        .iter()
        .filter(|s| triggered.contains(s.id.as_str()))
        .collect();
    let benches: Vec<_> = cfg
        .benchmarks
        .iter()
        .filter(|b| triggered.contains(b.id.as_str()))
        .collect();
    if suites.is_empty() && benches.is_empty() {
        return Err(PlanError::NothingTriggered(cadence));
    }

    let mut jobs = Vec::new();
    for s in &suites {
        jobs.push(Job::new(
            JobKind::FetchSource,
            Stage::Setup,
            None,
            None,
            Some(&s.id),
        ));
    }
    for tc in &cfg.toolchains {
        for tgt in &cfg.targets {
            jobs.push(Job::new(
                JobKind::BuildToolchain,
                Stage::Build,
                Some(&tc.id),
                Some(&tgt.id),
                None,
            ));
        }
    }
    let mut test_jobs = BTreeSet::new();
    for s in &suites {
        let fetch = Job::make_id(JobKind::FetchSource, None, None, Some(&s.id));
        for tc in &cfg.toolchains {
            if !s.languages.iter().any(|l| tc.supports(*l)) {
                continue;
            }
            for tgt in &cfg.targets {
                let mut job = Job::new(
                    JobKind::RunSuite,
                    Stage::Test,
                    Some(&tc.id),
                    Some(&tgt.id),
                    Some(&s.id),
                );
                job.depends_on.insert(fetch.clone());
                job.depends_on.insert(Job::make_id(
                    JobKind::BuildToolchain,
                    Some(&tc.id),
                    Some(&tgt.id),
                    None,
                ));
                test_jobs.insert(job.id.clone());
                jobs.push(job);
            }
        }
    }
    for b in &benches {
        for tc in &cfg.toolchains {
            for tgt in &cfg.targets {
                let mut job = Job::new(
                    JobKind::RunBench,
                    Stage::Test,
                    Some(&tc.id),
                    Some(&tgt.id),
                    Some(&b.id),
                );
                job.depends_on.insert(Job::make_id(
                    JobKind::BuildToolchain,
                    Some(&tc.id),
                    Some(&tgt.id),
                    None,
                ));
                test_jobs.insert(job.id.clone());
                jobs.push(job);
            }
        }
    }
    let mut cleanup = Job::new(JobKind::CleanupWorkspace, Stage::Cleanup, None, None, None);
    cleanup.depends_on = test_jobs;
    jobs.push(cleanup);

    let timestamp = clock.now();
    Ok(PipelineGraph {
        pipeline_id: format!("{cadence}-{}", timestamp.format("%Y%m%dT%H%M%SZ")),
        trigger: PipelineTrigger { cadence, timestamp },
        commit_pins: suites
            .iter()
            .map(|s| (s.id.clone(), s.pinned_commit.clone()))
            .collect(),
        jobs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
}

/// What a runner reports for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub passed: bool,
    pub detail: serde_json::Value,
}

impl JobOutcome {
    pub fn pass() -> Self {
        Self {
            passed: true,
            detail: serde_json::Value::Null,
        }
    }

    pub fn fail(msg: impl Into<String>) -> Self {
        Self {
            passed: false,
            detail: serde_json::Value::String(msg.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job_id: String,
    pub stage: Stage,
    pub status: JobStatus,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub pipeline_id: String,
    pub job_results: Vec<JobResult>,
    pub stage_status: BTreeMap<Stage, Status>,
    pub overall: Status,
}

/// Stage status is fail if any of its jobs failed or was skipped; an empty
/// stage passes. Overall passes iff every stage passes.
pub fn rollup_status(job_results: &[JobResult]) -> (BTreeMap<Stage, Status>, Status) {
    let mut stages: BTreeMap<Stage, Status> =
        Stage::ALL.iter().map(|s| (*s, Status::Pass)).collect();
    for r in job_results {
        if r.status != JobStatus::Pass {
            stages.insert(r.stage, Status::Fail);
        }
    }
    let overall = if stages.values().all(|s| *s == Status::Pass) {
        Status::Pass
    } else {
        Status::Fail
    };
    (stages, overall)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Pending,
    Running,
    Done(JobStatus),
}

struct Board {
    slots: Vec<Slot>,
    results: Vec<Option<JobResult>>,
    remaining: usize,
}

/// Execute every job, at most `parallelism` at a time. A job runs once all
/// its dependencies are done; it is skipped instead when any dependency
/// failed or was skipped. Results come back in graph order, so statuses do
/// not depend on scheduling.
pub fn execute_pipeline<F>(
    graph: &PipelineGraph,
    runner: F,
    parallelism: usize,
    clock: &dyn Clock,
) -> Result<PipelineResult, EngineError>
where
    F: Fn(&Job) -> JobOutcome + Sync,
{
    graph.validate()?;
    let jobs = &graph.jobs;
    let index: HashMap<&str, usize> = jobs
        .iter()
        .enumerate()
        .map(|(i, j)| (j.id.as_str(), i))
        .collect();
    let deps: Vec<Vec<usize>> = jobs
        .iter()
        .map(|j| j.depends_on.iter().map(|d| index[d.as_str()]).collect())
        .collect();
    let order = topo_order(jobs)?;

    let board = Mutex::new(Board {
        slots: vec![Slot::Pending; jobs.len()],
        results: vec![None; jobs.len()],
        remaining: jobs.len(),
    });
    let wake = Condvar::new();

    let worker = || loop {
        let mut b = board.lock().expect("scheduler lock");
        let picked = loop {
            if b.remaining == 0 {
                return;
            }
            let mut picked = None;
            for &i in &order {
                if b.slots[i] != Slot::Pending {
                    continue;
                }
                let dep_states: Vec<Slot> = deps[i].iter().map(|&d| b.slots[d]).collect();
                if dep_states.iter().any(|s| !matches!(s, Slot::Done(_))) {
                    continue;
                }
                let upstream_failed = dep_states.iter().any(|s| *s != Slot::Done(JobStatus::Pass));
                if upstream_failed && !jobs[i].always_runs() {
                    let now = clock.now();
                    b.slots[i] = Slot::Done(JobStatus::Skipped);
                    b.results[i] = Some(JobResult {
                        job_id: jobs[i].id.clone(),
                        stage: jobs[i].stage,
                        status: JobStatus::Skipped,
                        started_at: now,
                        ended_at: now,
                        detail: serde_json::Value::String("upstream dependency failed".into()),
                    });
                    b.remaining -= 1;
                    wake.notify_all();
                    continue;
                }
                picked = Some(i);
                break;
            }
            match picked {
                Some(i) => break i,
                None if b.remaining == 0 => return,
                None => b = wake.wait(b).expect("scheduler lock"),
            }
        };
        b.slots[picked] = Slot::Running;
        drop(b);

        let started_at = clock.now();
        let outcome =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| runner(&jobs[picked])))
                .unwrap_or_else(|_| JobOutcome::fail("job panicked"));
        let ended_at = clock.now();
        let status = if outcome.passed {
            JobStatus::Pass
        } else {
            JobStatus::Fail
        };

        let mut b = board.lock().expect("scheduler lock");
        b.slots[picked] = Slot::Done(status);
        b.results[picked] = Some(JobResult {
            job_id: jobs[picked].id.clone(),
            stage: jobs[picked].stage,
            status,
            started_at,
            ended_at,
            detail: outcome.detail,
        });
        b.remaining -= 1;
        wake.notify_all();
    };

    let workers = parallelism.max(1).min(jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 1..workers {
            s.spawn(worker);
        }
        worker();
    });

    let board = board.into_inner().expect("scheduler lock");
    let job_results: Vec<JobResult> = board
        .results
        .into_iter()
        .map(|r| r.expect("every job settles"))
        .collect();
    let (stage_status, overall) = rollup_status(&job_results);
    Ok(PipelineResult {
        pipeline_id: graph.pipeline_id.clone(),
        job_results,
        stage_status,
        overall,
    })
}
