//! Declarative pipeline configuration: toolchains, targets, suites,
//! benchmarks and triggers, loaded from a single JSON document.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchApp;

pub const DEFAULT_JOB_PARALLELISM: usize = 4;
pub const DEFAULT_TEST_TIMEOUT_S: f64 = 120.0;
pub const DEFAULT_BENCH_RUNS: usize = 3;
pub const DEFAULT_BENCH_TIMEOUT_S: f64 = 6.0 * 3600.0;
pub const DEFAULT_SYSTEM_LABEL: &str = "local";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    C,
    #[serde(rename = "C++")]
    Cxx,
    Fortran,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::C => "C",
            Language::Cxx => "C++",
            Language::Fortran => "Fortran",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ToolchainKind {
    #[default]
    Real,
    Mock,
}

/// A compiler family. For `kind = mock` the compiler paths point at a mock
/// manifest instead of executables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolchainSpec {
    pub id: String,
    #[serde(default)]
    pub display_name: String,
    pub c_compiler: PathBuf,
    pub cxx_compiler: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fortran_compiler: Option<PathBuf>,
    #[serde(default)]
    pub version_probe_args: Vec<String>,
    /// Target id to additional flags, e.g. vendor-suggested tuning flags.
    #[serde(default)]
    pub extra_flags: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub kind: ToolchainKind,
}

impl ToolchainSpec {
    pub fn supports(&self, lang: Language) -> bool {
        match lang {
            Language::C | Language::Cxx => true,
            Language::Fortran => self.fortran_compiler.is_some(),
        }
    }

    pub fn compiler_for(&self, lang: Language) -> Option<&Path> {
        match lang {
            Language::C => Some(&self.c_compiler),
            Language::Cxx => Some(&self.cxx_compiler),
            Language::Fortran => self.fortran_compiler.as_deref(),
        }
    }

    pub fn extra_flags_for(&self, target_id: &str) -> &[String] {
        self.extra_flags
            .get(target_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Path of the mock manifest backing a mock toolchain.
    pub fn manifest_path(&self) -> &Path {
        &self.c_compiler
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vendor {
    Nvidia,
    Amd,
    Intel,
    Host,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub id: String,
    pub vendor: Vendor,
    #[serde(default)]
    pub accelerator_name: String,
    #[serde(default)]
    pub offload_flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    VersionedConformance,
    FlatApplication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub id: String,
    pub kind: SuiteKind,
    pub root: PathBuf,
    /// Opaque source pin, copied verbatim into every results snapshot.
    pub pinned_commit: String,
    pub languages: BTreeSet<Language>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    Hourly,
    Weekly,
    Manual,
}

impl fmt::Display for Cadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cadence::Hourly => "hourly",
            Cadence::Weekly => "weekly",
            Cadence::Manual => "manual",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSpec {
    pub suite_or_bench_id: String,
    pub cadence: Cadence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub toolchains: Vec<ToolchainSpec>,
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub suites: Vec<SuiteSpec>,
    #[serde(default)]
    pub benchmarks: Vec<BenchApp>,
    #[serde(default)]
    pub triggers: Vec<TriggerSpec>,
    #[serde(default = "default_job_parallelism")]
    pub job_parallelism: usize,
    #[serde(default = "default_test_timeout_s")]
    pub test_timeout_s: f64,
    #[serde(default = "default_workspace_dir")]
    pub workspace_dir: PathBuf,
    /// Repetitions per benchmark cell; must be odd.
    #[serde(default = "default_bench_runs")]
    pub bench_runs: usize,
    /// Per-run limit for benchmark executions, which far outlast tests.
    #[serde(default = "default_bench_timeout_s")]
    pub bench_timeout_s: f64,
    /// Name of the system the pipeline runs on, e.g. "Frontier".
    #[serde(default = "default_system_label")]
    pub system_label: String,
}

fn default_job_parallelism() -> usize {
    DEFAULT_JOB_PARALLELISM
}

fn default_test_timeout_s() -> f64 {
    DEFAULT_TEST_TIMEOUT_S
}

fn default_workspace_dir() -> PathBuf {
    PathBuf::from("workspace")
}

fn default_bench_runs() -> usize {
    DEFAULT_BENCH_RUNS
}

fn default_bench_timeout_s() -> f64 {
    DEFAULT_BENCH_TIMEOUT_S
}

fn default_system_label() -> String {
    DEFAULT_SYSTEM_LABEL.to_string()
}

impl Config {
    pub fn toolchain(&self, id: &str) -> Option<&ToolchainSpec> {
        self.toolchains.iter().find(|t| t.id == id)
    }

    pub fn target(&self, id: &str) -> Option<&TargetSpec> {
        self.targets.iter().find(|t| t.id == id)
    }

    pub fn suite(&self, id: &str) -> Option<&SuiteSpec> {
        self.suites.iter().find(|s| s.id == id)
    }

    pub fn benchmark(&self, id: &str) -> Option<&BenchApp> {
        self.benchmarks.iter().find(|b| b.id == id)
    }

    /// Rebase every relative path in the config onto `base`, normally the
    /// directory holding the config file.
    pub fn resolve_paths(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for tc in &mut self.toolchains {
            // Real compilers given as bare names are looked up on PATH.
            if tc.kind == ToolchainKind::Mock || tc.c_compiler.components().count() > 1 {
                rebase(&mut tc.c_compiler);
            }
            if tc.kind == ToolchainKind::Mock || tc.cxx_compiler.components().count() > 1 {
                rebase(&mut tc.cxx_compiler);
            }
            if let Some(fc) = tc.fortran_compiler.as_mut() {
                if tc.kind == ToolchainKind::Mock || fc.components().count() > 1 {
                    rebase(fc);
                }
            }
        }
        for s in &mut self.suites {
            rebase(&mut s.root);
        }
        for b in &mut self.benchmarks {
            rebase(&mut b.source_dir);
        }
        rebase(&mut self.workspace_dir);
    }
}

/// Parse a configuration document, applying defaults and checking the
/// structural invariants (non-empty toolchains and targets, positive limits).
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => ConfigError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
            Category::Data => ConfigError::Schema(e.to_string()),
        }
    })?;
    if cfg.toolchains.is_empty() {
        return Err(ConfigError::Schema(
            "at least one toolchain is required".into(),
        ));
    }
    if cfg.targets.is_empty() {
        return Err(ConfigError::Schema(
            "at least one target is required".into(),
        ));
    }
    if cfg.suites.is_empty() && cfg.benchmarks.is_empty() {
        return Err(ConfigError::Schema(
            "at least one suite or benchmark is required".into(),
        ));
    }
    if cfg.job_parallelism < 1 {
        return Err(ConfigError::Schema("job_parallelism must be >= 1".into()));
    }
    if cfg.test_timeout_s.is_nan() || cfg.test_timeout_s <= 0.0 {
        return Err(ConfigError::Schema("test_timeout_s must be > 0".into()));
    }
    Ok(cfg)
}

/// Canonical rendering of a config; `parse_config` accepts it back unchanged.
pub fn render_config(cfg: &Config) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub path: String,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

/// Check invariants and cross references. Issue paths are keyed by ids
/// rather than list positions, so the result does not depend on ordering.
pub fn validate_config(cfg: &Config) -> Vec<ValidationIssue> {
    let mut issues = BTreeSet::new();
    let mut err = |path: String, msg: &str| {
        issues.insert(ValidationIssue {
            path,
            severity: Severity::Error,
            message: msg.to_string(),
        });
    };

    if cfg.toolchains.is_empty() {
        err("toolchains".into(), "at least one toolchain is required");
    }
    if cfg.targets.is_empty() {
        err("targets".into(), "at least one target is required");
    }
    if cfg.suites.is_empty() && cfg.benchmarks.is_empty() {
        err(
            "suites".into(),
            "at least one suite or benchmark is required",
        );
    }
    if cfg.job_parallelism < 1 {
        err("job_parallelism".into(), "must be >= 1");
    }
    if cfg.test_timeout_s.is_nan() || cfg.test_timeout_s <= 0.0 {
        err("test_timeout_s".into(), "must be > 0");
    }
    if cfg.bench_timeout_s.is_nan() || cfg.bench_timeout_s <= 0.0 {
        err("bench_timeout_s".into(), "must be > 0");
    }
    if cfg.bench_runs == 0 || cfg.bench_runs.is_multiple_of(2) {
        err("bench_runs".into(), "must be a positive odd number");
    }

    check_ids(
        cfg.toolchains.iter().map(|t| t.id.as_str()),
        "toolchains",
        &mut err,
    );
    check_ids(
        cfg.targets.iter().map(|t| t.id.as_str()),
        "targets",
        &mut err,
    );
    check_ids(cfg.suites.iter().map(|s| s.id.as_str()), "suites", &mut err);
    check_ids(
        cfg.benchmarks.iter().map(|b| b.id.as_str()),
        "benchmarks",
        &mut err,
    );

    let target_ids: BTreeSet<&str> = cfg.targets.iter().map(|t| t.id.as_str()).collect();
    for tgt in &cfg.targets {
        if tgt.offload_flags.is_empty() && tgt.vendor != Vendor::Host {
            err(
                format!("targets[{}].offload_flags", tgt.id),
                "offload_flags may only be empty for host targets",
            );
        }
    }
    for tc in &cfg.toolchains {
        for key in tc.extra_flags.keys() {
            if !target_ids.contains(key.as_str()) {
                err(
                    format!("toolchains[{}].extra_flags[{key}]", tc.id),
                    "unknown target id",
                );
            }
        }
    }
    for suite in &cfg.suites {
        if suite.languages.is_empty() {
            err(
                format!("suites[{}].languages", suite.id),
                "no languages selected",
            );
        }
    }
    for app in &cfg.benchmarks {
        if app.model_variants.is_empty() {
            err(
                format!("benchmarks[{}].model_variants", app.id),
                "at least one model variant is required",
            );
        }
    }
    let known: BTreeSet<&str> = cfg
        .suites
        .iter()
        .map(|s| s.id.as_str())
        .chain(cfg.benchmarks.iter().map(|b| b.id.as_str()))
        .collect();
    for trig in &cfg.triggers {
        if !known.contains(trig.suite_or_bench_id.as_str()) {
            err(
                format!("triggers[{}]", trig.suite_or_bench_id),
                "unknown suite or benchmark id",
            );
        }
    }

    let wants_fortran = cfg
        .suites
        .iter()
        .any(|s| s.languages.contains(&Language::Fortran))
        || cfg
            .benchmarks
            .iter()
            .any(|b| b.language == Language::Fortran);
    if wants_fortran {
        for tc in cfg
            .toolchains
            .iter()
            .filter(|t| t.fortran_compiler.is_none())
        {
            issues.insert(ValidationIssue {
                path: format!("toolchains[{}].fortran_compiler", tc.id),
                severity: Severity::Warning,
                message: "Fortran tests will be skipped for this toolchain".into(),
            });
        }
    }

    issues.into_iter().collect()
}

fn check_ids<'a>(
    ids: impl Iterator<Item = &'a str>,
    section: &str,
    err: &mut impl FnMut(String, &str),
) {
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            err(format!("{section}[]"), "id must not be empty");
        } else if !seen.insert(id) {
            err(format!("{section}[{id}]"), "duplicate id");
        }
    }
}

pub fn has_errors(issues: &[ValidationIssue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}
