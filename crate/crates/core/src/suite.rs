//! Conformance suite discovery, classification and two-phase (compile,
//! run) execution.

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::config::{Language, SuiteKind, SuiteSpec, TargetSpec};
use crate::lists::{filter_green, GreenRedList};
use crate::process::{truncate_diagnostics, ProcResult, ProcStatus};
use crate::toolchain::{Toolchain, ToolchainError};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read suite root {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("unsupported source extension: {0}")]
    UnsupportedExtension(String),
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpecVersion {
    #[serde(rename = "4.5")]
    V4_5,
    #[serde(rename = "5.0")]
    V5_0,
    #[serde(rename = "5.1")]
    V5_1,
    #[serde(rename = "5.2")]
    V5_2,
    #[serde(rename = "unknown")]
    Unknown,
}

impl SpecVersion {
    pub const KNOWN: [SpecVersion; 4] = [Self::V4_5, Self::V5_0, Self::V5_1, Self::V5_2];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::V4_5 => "4.5",
            Self::V5_0 => "5.0",
            Self::V5_1 => "5.1",
            Self::V5_2 => "5.2",
            Self::Unknown => "unknown",
        }
    }
}

impl fmt::Display for SpecVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpecVersion {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "4.5" => Self::V4_5,
            "5.0" => Self::V5_0,
            "5.1" => Self::V5_1,
            "5.2" => Self::V5_2,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub suite_id: String,
    /// Suite-relative path with `/` separators. Unique within a suite, so it
    /// doubles as the test's identity in lists and reports.
    pub rel_path: String,
    pub spec_version: SpecVersion,
    pub language: Language,
    pub name: String,
}

impl TestCase {
    pub fn id(&self) -> &str {
        &self.rel_path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseResult {
    Pass,
    CompileFail,
    RuntimeFail,
    WrongAnswer,
    Timeout,
}

impl PhaseResult {
    pub fn is_pass(self) -> bool {
        self == PhaseResult::Pass
    }

    /// Classify the run phase. Exit codes 1..=124 are a completed binary
    /// reporting its own error count; 125 and above, negative codes and
    /// signals are crashes.
    pub fn from_run(status: ProcStatus) -> Self {
        match status {
            ProcStatus::Exited(0) => PhaseResult::Pass,
            ProcStatus::Exited(1..=124) => PhaseResult::WrongAnswer,
            ProcStatus::Exited(_) | ProcStatus::Signaled => PhaseResult::RuntimeFail,
            ProcStatus::TimedOut => PhaseResult::Timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test: TestCase,
    pub toolchain_id: String,
    pub target_id: String,
    pub phase_result: PhaseResult,
    pub compile_seconds: f64,
    pub run_seconds: f64,
    pub diagnostics: String,
}

fn language_of(path: &str) -> Option<Language> {
    let ext = path.rsplit_once('.')?.1;
    match ext {
        "c" => Some(Language::C),
        "cpp" => Some(Language::Cxx),
        "F90" | "f90" => Some(Language::Fortran),
        _ => None,
    }
}

/// Classify a suite-relative path. The language comes from the extension;
/// the version from the first path segment of a versioned suite.
pub fn classify_test(
    rel_path: &str,
    suite_kind: SuiteKind,
) -> Result<(SpecVersion, Language), SuiteError> {
    let language =
        language_of(rel_path).ok_or_else(|| SuiteError::UnsupportedExtension(rel_path.into()))?;
    let version = match suite_kind {
        SuiteKind::FlatApplication => SpecVersion::Unknown,
        SuiteKind::VersionedConformance => match rel_path.split_once('/') {
            Some((first, _)) => first.parse().unwrap_or(SpecVersion::Unknown),
            None => SpecVersion::Unknown,
        },
    };
    Ok((version, language))
}

/// Every recognised source file under the suite root, ordered by
/// (spec version, relative path).
pub fn discover_tests(suite: &SuiteSpec) -> Result<Vec<TestCase>, SuiteError> {
    let io_err = |source: io::Error| SuiteError::Io {
        path: suite.root.display().to_string(),
        source,
    };
    if !suite.root.is_dir() {
        return Err(io_err(io::Error::new(
            io::ErrorKind::NotFound,
            "not a directory",
        )));
    }
    let mut tests = Vec::new();
    for entry in WalkDir::new(&suite.root).follow_links(true) {
        let entry = entry.map_err(|e| io_err(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(&suite.root)
            .expect("walkdir yields paths under root");
        let rel_path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let Ok((spec_version, language)) = classify_test(&rel_path, suite.kind) else {
            continue;
        };
        let name = rel
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        tests.push(TestCase {
            suite_id: suite.id.clone(),
            rel_path,
            spec_version,
            language,
            name,
        });
    }
    tests.sort_by(|a, b| (a.spec_version, &a.rel_path).cmp(&(b.spec_version, &b.rel_path)));
    Ok(tests)
}

/// Where a test's sources live and where its artefacts go.
#[derive(Debug, Clone)]
pub struct TestEnv {
    pub suite_root: PathBuf,
    /// `<workspace>/<pipeline>/<toolchain>/<target>/<suite>`; required for
    /// real toolchains, unused by mocks.
    pub work_root: Option<PathBuf>,
}

impl TestEnv {
    pub fn test_dir(&self, test: &TestCase) -> Option<PathBuf> {
        self.work_root
            .as_ref()
            .map(|root| root.join(&test.rel_path))
    }
}

pub fn compile_flags(tc: &Toolchain, tgt: &TargetSpec) -> Vec<String> {
    tgt.offload_flags
        .iter()
        .chain(tc.spec.extra_flags_for(&tgt.id))
        .cloned()
        .collect()
}

/// Compile then execute one test.
pub fn run_test(
    test: &TestCase,
    tc: &Toolchain,
    tgt: &TargetSpec,
    timeout_s: f64,
    env: &TestEnv,
) -> Result<TestOutcome, SuiteError> {
    let dir = env.test_dir(test);
    let (binary, compile_log, run_log) = match &dir {
        Some(d) if tc.manifest().is_none() => {
            std::fs::create_dir_all(d).map_err(|source| SuiteError::Io {
                path: d.display().to_string(),
                source,
            })?;
            (
                d.join("binary"),
                Some(d.join("compile.log")),
                Some(d.join("run.log")),
            )
        }
        _ => (PathBuf::from("binary"), None, None),
    };
    let src = env.suite_root.join(&test.rel_path);
    let flags = compile_flags(tc, tgt);

    let compiled = tc.compile(
        test.language,
        &test.rel_path,
        &src,
        &flags,
        &binary,
        compile_log.as_deref(),
        timeout_s,
    )?;
    let outcome = |phase_result, run: Option<&ProcResult>| TestOutcome {
        test: test.clone(),
        toolchain_id: tc.id().to_string(),
        target_id: tgt.id.clone(),
        phase_result,
        compile_seconds: compiled.duration_s,
        run_seconds: run.map_or(0.0, |r| r.duration_s),
        diagnostics: truncate_diagnostics(
            compiled.output.clone() + run.map_or("", |r| r.output.as_str()),
        ),
    };
    match compiled.status {
        ProcStatus::Exited(0) => {}
        ProcStatus::TimedOut => return Ok(outcome(PhaseResult::Timeout, None)),
        _ => return Ok(outcome(PhaseResult::CompileFail, None)),
    }

    let ran = tc.execute(&test.rel_path, &binary, run_log.as_deref(), timeout_s)?;
    Ok(outcome(PhaseResult::from_run(ran.status), Some(&ran)))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteRun {
    pub outcomes: Vec<TestOutcome>,
    /// Tests left out because they are on neither list of the filter.
    pub unlisted: Vec<TestCase>,
}

impl SuiteRun {
    /// Job-level criterion: every executed test passed.
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.phase_result.is_pass())
    }

    pub fn total_seconds(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| o.compile_seconds + o.run_seconds)
            .sum()
    }
}

/// Run tests in input order, restricted to the green list when one is
/// given. A per-test harness error is recorded as a runtime failure.
pub fn run_suite(
    tests: &[TestCase],
    tc: &Toolchain,
    tgt: &TargetSpec,
    timeout_s: f64,
    filter: Option<&GreenRedList>,
    env: &TestEnv,
) -> SuiteRun {
    let (selected, unlisted) = match filter {
        Some(list) => {
            let f = filter_green(tests, list);
            (f.selected, f.unlisted)
        }
        None => (tests.to_vec(), Vec::new()),
    };
    let outcomes = selected
        .iter()
        .map(|t| {
            run_test(t, tc, tgt, timeout_s, env).unwrap_or_else(|e| TestOutcome {
                test: t.clone(),
                toolchain_id: tc.id().to_string(),
                target_id: tgt.id.clone(),
                phase_result: PhaseResult::RuntimeFail,
                compile_seconds: 0.0,
                run_seconds: 0.0,
                diagnostics: truncate_diagnostics(format!("harness error: {e}\n")),
            })
        })
        .collect();
    SuiteRun { outcomes, unlisted }
}
