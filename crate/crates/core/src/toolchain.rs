//! A configured toolchain opened for use: either real compiler executables
//! or a loaded mock manifest.

use std::io;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use thiserror::Error;

use crate::config::{Language, ToolchainKind, ToolchainSpec};
use crate::mock::{self, MockError, MockManifest, MockRole};
use crate::process::{self, ProcResult};

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("toolchain {toolchain}: compiler {path} is unavailable")]
    Unavailable { toolchain: String, path: String },
    #[error("toolchain {toolchain} has no {language} compiler")]
    UnsupportedLanguage {
        toolchain: String,
        language: Language,
    },
    #[error(transparent)]
    Mock(#[from] MockError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct Toolchain {
    pub spec: ToolchainSpec,
    manifest: Option<Arc<MockManifest>>,
}

impl Toolchain {
    pub fn open(spec: &ToolchainSpec) -> Result<Self, ToolchainError> {
        let manifest = match spec.kind {
            ToolchainKind::Real => None,
            ToolchainKind::Mock => Some(Arc::new(mock::load_manifest_file(spec.manifest_path())?)),
        };
        Ok(Self {
            spec: spec.clone(),
            manifest,
        })
    }

    pub fn with_manifest(spec: &ToolchainSpec, manifest: MockManifest) -> Self {
        Self {
            spec: spec.clone(),
            manifest: Some(Arc::new(manifest)),
        }
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn manifest(&self) -> Option<&MockManifest> {
        self.manifest.as_deref()
    }

    /// Check that the compilers answer. Real toolchains run the C compiler
    /// with `version_probe_args`.
    pub fn probe(&self) -> Result<String, ToolchainError> {
        if self.manifest.is_some() {
            return Ok(format!("mock toolchain {}", self.spec.id));
        }
        let out = Command::new(&self.spec.c_compiler)
            .args(&self.spec.version_probe_args)
            .output()
            .map_err(|e| self.spawn_error(&self.spec.c_compiler, e))?;
        let text = String::from_utf8_lossy(&out.stdout).into_owned()
            + &String::from_utf8_lossy(&out.stderr);
        if out.status.success() {
            Ok(text)
        } else {
            Err(ToolchainError::Unavailable {
                toolchain: self.spec.id.clone(),
                path: self.spec.c_compiler.display().to_string(),
            })
        }
    }

    fn compiler(&self, lang: Language) -> Result<&Path, ToolchainError> {
        self.spec
            .compiler_for(lang)
            .ok_or_else(|| ToolchainError::UnsupportedLanguage {
                toolchain: self.spec.id.clone(),
                language: lang,
            })
    }

    fn spawn_error(&self, path: &Path, e: io::Error) -> ToolchainError {
        if e.kind() == io::ErrorKind::NotFound || e.kind() == io::ErrorKind::PermissionDenied {
            ToolchainError::Unavailable {
                toolchain: self.spec.id.clone(),
                path: path.display().to_string(),
            }
        } else {
            ToolchainError::Io(e)
        }
    }

    /// Compile one source file. `subject` identifies the test to the mock.
    #[allow(clippy::too_many_arguments)]
    pub fn compile(
        &self,
        lang: Language,
        subject: &str,
        src: &Path,
        flags: &[String],
        out: &Path,
        log: Option<&Path>,
        timeout_s: f64,
    ) -> Result<ProcResult, ToolchainError> {
        let compiler = self.compiler(lang)?;
        if let Some(m) = self.manifest() {
            let sim = mock::mock_invoke(m, MockRole::Compile, subject)?;
            mock::simulate_delay(m, sim.duration_s, timeout_s);
            return Ok(ProcResult::from_sim(sim, timeout_s));
        }
        let log = log.expect("real compilation needs a log path");
        let mut cmd = Command::new(compiler);
        cmd.args(flags).arg(src).arg("-o").arg(out);
        process::run_logged(&mut cmd, log, timeout_s).map_err(|e| self.spawn_error(compiler, e))
    }

    pub fn execute(
        &self,
        subject: &str,
        binary: &Path,
        log: Option<&Path>,
        timeout_s: f64,
    ) -> Result<ProcResult, ToolchainError> {
        if let Some(m) = self.manifest() {
            let sim = mock::mock_invoke(m, MockRole::Run, subject)?;
            mock::simulate_delay(m, sim.duration_s, timeout_s);
            return Ok(ProcResult::from_sim(sim, timeout_s));
        }
        let log = log.expect("real execution needs a log path");
        let mut cmd = Command::new(binary);
        if let Some(dir) = binary.parent() {
            cmd.current_dir(dir);
        }
        Ok(process::run_logged(&mut cmd, log, timeout_s)?)
    }
}
