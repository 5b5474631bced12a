//! Benchmark applications: build once, run repeatedly, estimate a base run
//! time, and classify build (BE) and execution (EE) errors.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Language, TargetSpec};
use crate::mock::{self, bench_subject, MockRole};
use crate::process::{self, ProcResult};
use crate::suite::compile_flags;
use crate::toolchain::{Toolchain, ToolchainError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("toolchain {toolchain} cannot build {app}: {reason}")]
    ToolchainUnavailable {
        toolchain: String,
        app: String,
        reason: String,
    },
    #[error("n_runs must be a positive odd number, got {0}")]
    InvalidRunCount(usize),
    #[error("{app} has no {variant} variant")]
    VariantNotOffered { app: String, variant: ModelVariant },
    #[error("no samples to estimate from")]
    EmptySamples,
    #[error("cannot compare {0} with {1}")]
    AppMismatch(String, String),
    #[error(transparent)]
    Toolchain(#[from] ToolchainError),
    #[error(transparent)]
    Mock(#[from] crate::mock::MockError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Programming-model variant of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    /// OpenMP target offloading.
    #[serde(rename = "TGT")]
    Tgt,
    /// OpenACC.
    #[serde(rename = "ACC")]
    Acc,
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Tgt => "TGT",
            ModelVariant::Acc => "ACC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutputCheck {
    #[default]
    ExitCodeOnly,
    /// Byte-exact comparison of `output` (relative to the run directory)
    /// against `golden` (relative to the source directory).
    GoldenFile { output: PathBuf, golden: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchApp {
    pub id: String,
    #[serde(default)]
    pub display_name: String,
    pub language: Language,
    pub model_variants: BTreeSet<ModelVariant>,
    pub source_dir: PathBuf,
    #[serde(default)]
    pub build_command_template: String,
    #[serde(default)]
    pub run_command_template: String,
    #[serde(default)]
    pub expected_output_check: ExpectedOutputCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub app_id: String,
    pub variant: ModelVariant,
    pub toolchain_id: String,
    pub target_id: String,
    pub wall_seconds: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BenchStatus {
    /// Estimated base run time in seconds.
    #[serde(rename = "time")]
    Time(f64),
    /// Build error.
    BE,
    /// Execution error.
    EE,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub app_id: String,
    pub variant: ModelVariant,
    pub toolchain_id: String,
    pub target_id: String,
    pub status: BenchStatus,
    pub samples: Vec<BenchSample>,
}

/// Median of the samples; the lower median for an even count.
pub fn estimate_base_time(samples: &[f64]) -> Result<f64, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[(sorted.len() - 1) / 2])
}

fn shell_quote(s: &str) -> String {
    if !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"-_./=+,:@".contains(&b))
    {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

/// Values substituted into command templates.
#[derive(Debug, Clone, Default)]
pub struct TemplateVars {
    pub cc: String,
    pub cxx: String,
    pub fc: String,
    pub flags: String,
    pub src: String,
    pub out: String,
    pub variant: String,
}

impl TemplateVars {
    pub fn new(
        tc: &Toolchain,
        tgt: &TargetSpec,
        variant: ModelVariant,
        src: &Path,
        out: &Path,
    ) -> Self {
        let path = |p: &Path| shell_quote(&p.display().to_string());
        TemplateVars {
            cc: path(&tc.spec.c_compiler),
            cxx: path(&tc.spec.cxx_compiler),
            fc: tc
                .spec
                .fortran_compiler
                .as_deref()
                .map(path)
                .unwrap_or_default(),
            flags: compile_flags(tc, tgt)
                .iter()
                .map(|f| shell_quote(f))
                .collect::<Vec<_>>()
                .join(" "),
            src: path(src),
            out: path(out),
            variant: variant.to_string().to_lowercase(),
        }
    }
}

/// Expand `{cc}`, `{cxx}`, `{fc}`, `{flags}`, `{src}`, `{out}` and
/// `{variant}`. Unknown placeholders are left as written.
pub fn expand_template(template: &str, vars: &TemplateVars) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        let Some(close) = after.find('}') else {
            out.push_str(after);
            return out;
        };
        let key = &after[1..close];
        let value = match key {
            "cc" => Some(&vars.cc),
            "cxx" => Some(&vars.cxx),
            "fc" => Some(&vars.fc),
            "flags" => Some(&vars.flags),
            "src" => Some(&vars.src),
            "out" => Some(&vars.out),
            "variant" => Some(&vars.variant),
            _ => None,
        };
        match value {
            Some(v) => out.push_str(v),
            None => out.push_str(&after[..=close]),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

/// Build the app once, then run it `n_runs` times. Runs stop at the first
/// failure, keeping the samples gathered so far.
pub fn run_benchmark(
    app: &BenchApp,
    variant: ModelVariant,
    tc: &Toolchain,
    tgt: &TargetSpec,
    n_runs: usize,
    timeout_s: f64,
    work_dir: Option<&Path>,
) -> Result<BenchResult, BenchError> {
    if n_runs == 0 || n_runs.is_multiple_of(2) {
        return Err(BenchError::InvalidRunCount(n_runs));
    }
    if !app.model_variants.contains(&variant) {
        return Err(BenchError::VariantNotOffered {
            app: app.id.clone(),
            variant,
        });
    }
    if !tc.spec.supports(app.language) {
        return Err(BenchError::ToolchainUnavailable {
            toolchain: tc.id().to_string(),
            app: app.id.clone(),
            reason: format!("no {} compiler", app.language),
        });
    }
    let mut result = BenchResult {
        app_id: app.id.clone(),
        variant,
        toolchain_id: tc.id().to_string(),
        target_id: tgt.id.clone(),
        status: BenchStatus::BE,
        samples: Vec::new(),
    };
    let mut runner: Box<StepRunner> = match tc.manifest() {
        Some(m) => {
            let subject = bench_subject(&app.id, variant);
            Box::new(move |step| {
                let role = match step {
                    BenchStep::Build => MockRole::BenchBuild,
                    BenchStep::Run(i) => MockRole::BenchRun(i),
                };
                let sim = mock::mock_invoke(m, role, &subject)?;
                mock::simulate_delay(m, sim.duration_s, timeout_s);
                let r = ProcResult::from_sim(sim, timeout_s);
                let ok = r.success();
                Ok((r, ok))
            })
        }
        None => {
            let dir = work_dir
                .ok_or_else(|| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidInput,
                        "real benchmarks need a work directory",
                    )
                })?
                .to_path_buf();
            std::fs::create_dir_all(&dir)?;
            let vars = TemplateVars::new(tc, tgt, variant, &app.source_dir, &dir.join("binary"));
            let build = expand_template(&app.build_command_template, &vars);
            let run = expand_template(&app.run_command_template, &vars);
            let check = app.expected_output_check.clone();
            let src = app.source_dir.clone();
            Box::new(move |step| {
                let (cmd, log) = match step {
                    BenchStep::Build => (&build, dir.join("build.log")),
                    BenchStep::Run(i) => (&run, dir.join(format!("run-{i}.log"))),
                };
                let r = process::run_logged(
                    Command::new("sh").arg("-c").arg(cmd).current_dir(&dir),
                    &log,
                    timeout_s,
                )?;
                let ok = r.success()
                    && match (&check, step) {
                        (ExpectedOutputCheck::GoldenFile { output, golden }, BenchStep::Run(_)) => {
                            golden_matches(&dir.join(output), &src.join(golden))
                        }
                        _ => true,
                    };
                Ok((r, ok))
            })
        }
    };

    let (_, built) = runner(BenchStep::Build)?;
    if !built {
        return Ok(result);
    }
    let mut all_verified = true;
    for i in 0..n_runs {
        let (r, verified) = runner(BenchStep::Run(i))?;
        result.samples.push(BenchSample {
            app_id: app.id.clone(),
            variant,
            toolchain_id: tc.id().to_string(),
            target_id: tgt.id.clone(),
            wall_seconds: r.duration_s.max(1e-6),
            verified,
        });
        if !verified {
            all_verified = false;
            break;
        }
    }
    result.status = if all_verified {
        let times: Vec<f64> = result.samples.iter().map(|s| s.wall_seconds).collect();
        BenchStatus::Time(estimate_base_time(&times)?)
    } else {
        BenchStatus::EE
    };
    Ok(result)
}

/// Runs one step, returning the process result and whether it counts as a
/// success (verified, for runs).
type StepRunner<'a> = dyn FnMut(BenchStep) -> Result<(ProcResult, bool), BenchError> + 'a;

#[derive(Debug, Clone, Copy)]
enum BenchStep {
    Build,
    Run(usize),
}

fn golden_matches(output: &Path, golden: &Path) -> bool {
    match (std::fs::read(output), std::fs::read(golden)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Offloading time divided by OpenACC time.
    Ratio(f64),
    Incomparable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub app_id: String,
    pub comparison: Comparison,
}

impl ModelComparison {
    pub fn ratio(&self) -> Option<f64> {
        match self.comparison {
            Comparison::Ratio(r) => Some(r),
            Comparison::Incomparable(_) => None,
        }
    }
}

/// Compare an offloading result against an OpenACC result of the same app.
pub fn compare_models(
    tgt_result: &BenchResult,
    acc_result: &BenchResult,
) -> Result<ModelComparison, BenchError> {
    if tgt_result.app_id != acc_result.app_id {
        return Err(BenchError::AppMismatch(
            tgt_result.app_id.clone(),
            acc_result.app_id.clone(),
        ));
    }
    let reason = |s: BenchStatus| match s {
        BenchStatus::BE => Some("build error"),
        BenchStatus::EE => Some("execution error"),
        BenchStatus::Time(_) => None,
    };
    let comparison = match (tgt_result.status, acc_result.status) {
        (BenchStatus::Time(t), BenchStatus::Time(a)) => Comparison::Ratio(t / a),
        (t, a) => Comparison::Incomparable(reason(t).or(reason(a)).unwrap_or_default().to_string()),
    };
    Ok(ModelComparison {
        app_id: tgt_result.app_id.clone(),
        comparison,
    })
}
