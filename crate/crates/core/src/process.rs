//! Child-process execution with a wall-clock limit and captured output.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use crate::mock::SimResult;

/// Cap on captured diagnostics per log.
pub const MAX_DIAGNOSTICS_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcStatus {
    Exited(i32),
    /// Terminated by a signal.
    Signaled,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcResult {
    pub status: ProcStatus,
    pub duration_s: f64,
    pub output: String,
}

impl ProcResult {
    pub fn success(&self) -> bool {
        self.status == ProcStatus::Exited(0)
    }

    /// Interpret a simulated invocation under the given limit.
    pub fn from_sim(sim: SimResult, timeout_s: f64) -> Self {
        if sim.duration_s > timeout_s {
            ProcResult {
                status: ProcStatus::TimedOut,
                duration_s: timeout_s,
                output: sim.output,
            }
        } else {
            ProcResult {
                status: ProcStatus::Exited(sim.exit_code),
                duration_s: sim.duration_s,
                output: sim.output,
            }
        }
    }
}

/// Run `cmd` with stdout and stderr sent to `log_path`, killing it after
/// `timeout_s` seconds.
pub fn run_logged(cmd: &mut Command, log_path: &Path, timeout_s: f64) -> io::Result<ProcResult> {
    let log = File::create(log_path)?;
    let start = Instant::now();
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .spawn()?;
    let limit = Duration::from_secs_f64(timeout_s.max(0.0));
    let status = match child.wait_timeout(limit)? {
        Some(status) => match status.code() {
            Some(code) => ProcStatus::Exited(code),
            None => ProcStatus::Signaled,
        },
        None => {
            let _ = child.kill();
            let _ = child.wait();
            ProcStatus::TimedOut
        }
    };
    let duration_s = start.elapsed().as_secs_f64();
    Ok(ProcResult {
        status,
        duration_s,
        output: read_truncated(log_path)?,
    })
}

fn read_truncated(path: &Path) -> io::Result<String> {
    let mut buf = Vec::new();
    File::open(path)?
        .take(MAX_DIAGNOSTICS_BYTES as u64)
        .read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Truncate on a char boundary to at most [`MAX_DIAGNOSTICS_BYTES`].
pub fn truncate_diagnostics(mut text: String) -> String {
    if text.len() > MAX_DIAGNOSTICS_BYTES {
        let mut cut = MAX_DIAGNOSTICS_BYTES;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
    }
    text
}
