//! Manifest-driven stand-in for a compiler toolchain and the binaries it
//! produces. Every invocation is a pure lookup, so whole pipelines can run
//! hermetically and reproducibly without accelerators or real compilers.
//!
//! A manifest looks like:
//!
//! ```json
//! {
//!   "default_behavior": {"compile": "ok", "run": {"exit": 0}, "run_seconds": 0.3},
//!   "per_test": {"test_target_*": {"compile": "fail"}},
//!   "per_bench": [{"app_id": "505.lbm", "variant": "TGT",
//!                  "run_seconds_sequence": [38.29, 38.29, 38.29]}],
//!   "self_test": ["test_target_map"]
//! }
//! ```
//!
//! `per_test` keys are globs. A key containing `/` is matched against the
//! suite-relative test path, any other key against the test name (file
//! stem). The key with the longest literal prefix wins.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::ModelVariant;

/// Exit code reported for a crashed binary (SIGABRT convention).
pub const CRASH_EXIT_CODE: i32 = 134;
/// Exit code reported for a hung binary once it is killed.
pub const HANG_EXIT_CODE: i32 = 137;
/// Exit code of a benchmark run whose output fails verification.
pub const VERIFY_FAIL_EXIT_CODE: i32 = 2;

#[derive(Debug, Error)]
pub enum MockError {
    #[error("manifest syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("globs {first:?} and {second:?} are equally specific for {name:?}")]
    AmbiguousGlob {
        name: String,
        first: String,
        second: String,
    },
    #[error("no behavior for {0:?} and no default_behavior set")]
    UnknownSubject(String),
    #[error("reading manifest {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    #[default]
    Ok,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunBehavior {
    Exit(i32),
    Crash,
    Hang,
}

impl Default for RunBehavior {
    fn default() -> Self {
        RunBehavior::Exit(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Behavior {
    #[serde(default)]
    pub compile: StepOutcome,
    #[serde(default)]
    pub run: RunBehavior,
    #[serde(default)]
    pub compile_seconds: f64,
    #[serde(default)]
    pub run_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchBehavior {
    pub app_id: String,
    pub variant: ModelVariant,
    #[serde(default)]
    pub build: StepOutcome,
    /// Wall time of each successive run. Runs beyond the end of the
    /// sequence crash.
    #[serde(default)]
    pub run_seconds_sequence: Vec<f64>,
    #[serde(default = "yes")]
    pub verify: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MockManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_behavior: Option<Behavior>,
    #[serde(default)]
    pub per_test: BTreeMap<String, Behavior>,
    #[serde(default)]
    pub per_bench: Vec<BenchBehavior>,
    /// Names the manifest author expects to resolve unambiguously.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub self_test: Vec<String>,
    /// Real seconds slept per simulated second. 0 disables sleeping.
    #[serde(default)]
    pub sleep_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockRole {
    Compile,
    Run,
    BenchBuild,
    /// Zero-based repetition index.
    BenchRun(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub exit_code: i32,
    /// Simulated wall time; infinite for a hang.
    pub duration_s: f64,
    pub output: String,
}

pub fn load_manifest(text: &str) -> Result<MockManifest, MockError> {
    let manifest: MockManifest = serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => MockError::Invalid(e.to_string()),
            _ => MockError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        }
    })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest_file(path: &Path) -> Result<MockManifest, MockError> {
    let text = std::fs::read_to_string(path).map_err(|source| MockError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_manifest(&text)
}

fn non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

impl MockManifest {
    fn validate(&self) -> Result<(), MockError> {
        let behaviors = self.default_behavior.iter().chain(self.per_test.values());
        for b in behaviors {
            if !non_negative(b.compile_seconds) || !non_negative(b.run_seconds) {
                return Err(MockError::Invalid("durations must be >= 0".into()));
            }
        }
        for pattern in self.per_test.keys() {
            glob::Pattern::new(pattern)
                .map_err(|e| MockError::Invalid(format!("bad glob {pattern:?}: {e}")))?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.per_bench {
            if !seen.insert((b.app_id.as_str(), b.variant)) {
                return Err(MockError::Invalid(format!(
                    "duplicate per_bench entry for {} {}",
                    b.app_id, b.variant
                )));
            }
            if b.run_seconds_sequence
                .iter()
                .any(|s| !(s.is_finite() && *s > 0.0))
            {
                return Err(MockError::Invalid(format!(
                    "run_seconds_sequence for {} must be positive",
                    b.app_id
                )));
            }
        }
        if !non_negative(self.sleep_scale) {
            return Err(MockError::Invalid("sleep_scale must be >= 0".into()));
        }
        for name in &self.self_test {
            let ranked = self.ranked_matches(name);
            if let [(s1, p1), (s2, p2), ..] = ranked.as_slice() {
                if s1 == s2 {
                    return Err(MockError::AmbiguousGlob {
                        name: name.clone(),
                        first: (*p1).to_string(),
                        second: (*p2).to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Matching globs, most specific first; equal specificity falls back to
    /// lexicographic pattern order.
    fn ranked_matches(&self, subject: &str) -> Vec<(usize, &str)> {
        let stem = test_stem(subject);
        let mut hits: Vec<(usize, &str)> = self
            .per_test
            .keys()
            .filter(|pattern| {
                let candidate = if pattern.contains('/') { subject } else { stem };
                glob::Pattern::new(pattern)
                    .map(|p| p.matches(candidate))
                    .unwrap_or(false)
            })
            .map(|p| (literal_prefix_len(p), p.as_str()))
            .collect();
        hits.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        hits
    }

    /// Behavior for a test, given its suite-relative path or bare name.
    pub fn test_behavior(&self, subject: &str) -> Result<&Behavior, MockError> {
        if let Some((_, pattern)) = self.ranked_matches(subject).first() {
            return Ok(&self.per_test[*pattern]);
        }
        self.default_behavior
            .as_ref()
            .ok_or_else(|| MockError::UnknownSubject(subject.to_string()))
    }

    pub fn bench_behavior(&self, app_id: &str, variant: ModelVariant) -> Option<&BenchBehavior> {
        self.per_bench
            .iter()
            .find(|b| b.app_id == app_id && b.variant == variant)
    }
}

fn test_stem(subject: &str) -> &str {
    let file = subject.rsplit('/').next().unwrap_or(subject);
    match file.rfind('.') {
        Some(i) if i > 0 => &file[..i],
        _ => file,
    }
}

fn literal_prefix_len(pattern: &str) -> usize {
    pattern.find(['*', '?', '[']).unwrap_or(pattern.len())
}

/// Bench subjects are written `<app_id>:<variant>`, e.g. `505.lbm:TGT`.
pub fn bench_subject(app_id: &str, variant: ModelVariant) -> String {
    format!("{app_id}:{variant}")
}

fn parse_bench_subject(subject: &str) -> Option<(&str, ModelVariant)> {
    let (app, variant) = subject.rsplit_once(':')?;
    let variant = match variant {
        "TGT" => ModelVariant::Tgt,
        "ACC" => ModelVariant::Acc,
        _ => return None,
    };
    Some((app, variant))
}

/// Simulate one process invocation.
pub fn mock_invoke(
    manifest: &MockManifest,
    role: MockRole,
    subject: &str,
) -> Result<SimResult, MockError> {
    let bench = match role {
        MockRole::BenchBuild | MockRole::BenchRun(_) => parse_bench_subject(subject)
            .and_then(|(app, variant)| manifest.bench_behavior(app, variant)),
        _ => None,
    };
    let result = match (role, bench) {
        (MockRole::BenchBuild, Some(b)) => step(b.build, 0.0, "build", subject),
        (MockRole::BenchRun(i), Some(b)) => match b.run_seconds_sequence.get(i) {
            None => SimResult {
                exit_code: CRASH_EXIT_CODE,
                duration_s: 0.0,
                output: format!("mock: run {i} of {subject} aborted\n"),
            },
            Some(&secs) if !b.verify => SimResult {
                exit_code: VERIFY_FAIL_EXIT_CODE,
                duration_s: secs,
                output: format!("mock: run {i} of {subject} failed verification\n"),
            },
            Some(&secs) => SimResult {
                exit_code: 0,
                duration_s: secs,
                output: format!("mock: run {i} of {subject} verified\n"),
            },
        },
        (MockRole::Compile | MockRole::BenchBuild, _) => {
            let b = manifest.test_behavior(subject)?;
            step(b.compile, b.compile_seconds, "compile", subject)
        }
        (MockRole::Run | MockRole::BenchRun(_), _) => {
            let b = manifest.test_behavior(subject)?;
            match b.run {
                RunBehavior::Exit(code) => SimResult {
                    exit_code: code,
                    duration_s: b.run_seconds,
                    output: format!("mock: run {subject} exit {code}\n"),
                },
                RunBehavior::Crash => SimResult {
                    exit_code: CRASH_EXIT_CODE,
                    duration_s: b.run_seconds,
                    output: format!("mock: run {subject} aborted\n"),
                },
                RunBehavior::Hang => SimResult {
                    exit_code: HANG_EXIT_CODE,
                    duration_s: f64::INFINITY,
                    output: format!("mock: run {subject} hung\n"),
                },
            }
        }
    };
    Ok(result)
}

fn step(outcome: StepOutcome, secs: f64, what: &str, subject: &str) -> SimResult {
    match outcome {
        StepOutcome::Ok => SimResult {
            exit_code: 0,
            duration_s: secs,
            output: format!("mock: {what} {subject} ok\n"),
        },
        StepOutcome::Fail => SimResult {
            exit_code: 1,
            duration_s: secs,
            output: format!("mock: {what} {subject} error\n"),
        },
    }
}

/// Sleep for a simulated duration scaled by the manifest's `sleep_scale`,
/// never longer than `cap_s`.
pub fn simulate_delay(manifest: &MockManifest, duration_s: f64, cap_s: f64) {
    if manifest.sleep_scale > 0.0 {
        let secs = (duration_s * manifest.sleep_scale).min(cap_s);
        if secs.is_finite() && secs > 0.0 {
            std::thread::sleep(std::time::Duration::from_secs_f64(secs));
        }
    }
}
