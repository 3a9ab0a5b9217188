//! Executor backends: a local subprocess harness and the in-process simulator.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Child, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::command::{Channel, Command};
use crate::sim::{SimState, Simulator};

/// Captured output beyond this many bytes is dropped.
pub const OUTPUT_CAP: usize = 64 * 1024;
pub const TRUNCATION_MARKER: &str = "\n[output truncated at 65536 bytes]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitStatus {
    Code(i32),
    /// Killed by a signal other than the timeout.
    Signal(i32),
    Timeout,
    /// The command could not be started.
    SpawnFailed,
}

impl ExitStatus {
    pub fn success(self) -> bool {
        self == ExitStatus::Code(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutput {
    pub output: String,
    pub status: ExitStatus,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    /// This command could not run; the loop records it and continues.
    #[error("spawn failed: {0}")]
    Spawn(String),
    /// The backend itself is gone; the loop aborts.
    #[error("executor backend unreachable: {0}")]
    Unreachable(String),
}

pub trait ExecutorBackend {
    fn execute(&mut self, cmd: &Command) -> Result<ExecOutput, ExecError>;
}

/// Cuts `bytes` to [`OUTPUT_CAP`] on a char boundary and appends the marker.
pub fn cap_output(bytes: &[u8], truncated: bool) -> String {
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(OUTPUT_CAP)]).into_owned();
    if truncated || bytes.len() > OUTPUT_CAP {
        let mut cut = text.len().min(OUTPUT_CAP);
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}{TRUNCATION_MARKER}", &text[..cut])
    } else {
        text
    }
}

/// Runs commands on the local machine through `sh`.
#[derive(Debug, Clone)]
pub struct ShellBackend {
    pub shell: String,
    pub msfconsole: String,
}

impl Default for ShellBackend {
    fn default() -> Self {
        ShellBackend {
            shell: "sh".into(),
            msfconsole: "msfconsole".into(),
        }
    }
}

fn on_path(program: &str) -> bool {
    if program.contains('/') {
        return std::path::Path::new(program).is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|d| d.join(program).is_file()))
        .unwrap_or(false)
}

fn kill_group(child: &Child) {
    // the child leads its own process group
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
}

/// Spawns `program args` in a new process group with stdout captured, and
/// kills the whole group when `timeout` elapses.
pub fn run_with_timeout(program: &str, args: &[&str], timeout: Duration) -> Result<ExecOutput, ExecError> {
    let mut child = std::process::Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .process_group(0)
        .spawn()
        .map_err(|e| ExecError::Spawn(format!("{program}: {e}")))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match stdout.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = (OUTPUT_CAP + 4).saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (kept, truncated)
    });
    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break Some(s),
            Ok(None) if start.elapsed() >= timeout => break None,
            Ok(None) => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                kill_group(&child);
                let _ = child.wait();
                return Err(ExecError::Spawn(format!("{program}: wait failed: {e}")));
            }
        }
    };
    // background children may still hold the pipe open
    kill_group(&child);
    let status = match status {
        Some(s) => s,
        None => {
            let _ = child.wait();
            let (kept, truncated) = reader.join().unwrap_or_default();
            return Ok(ExecOutput {
                output: cap_output(&kept, truncated),
                status: ExitStatus::Timeout,
            });
        }
    };
    let (kept, truncated) = reader.join().unwrap_or_default();
    use std::os::unix::process::ExitStatusExt;
    let status = match (status.code(), status.signal()) {
        (Some(c), _) => ExitStatus::Code(c),
        (None, Some(sig)) => ExitStatus::Signal(sig),
        (None, None) => ExitStatus::Code(-1),
    };
    Ok(ExecOutput {
        output: cap_output(&kept, truncated),
        status,
    })
}

impl ExecutorBackend for ShellBackend {
    fn execute(&mut self, cmd: &Command) -> Result<ExecOutput, ExecError> {
        let timeout = Duration::from_secs(cmd.timeout_seconds.max(1));
        match cmd.channel {
            Channel::Shell => {
                let script = format!("exec 2>&1\n{}", cmd.raw);
                run_with_timeout(&self.shell, &["-c", &script], timeout)
            }
            Channel::Msfconsole => {
                if !on_path(&self.msfconsole) {
                    return Err(ExecError::Spawn(format!("{}: not found on PATH", self.msfconsole)));
                }
                // one console session per batch
                let console_script = format!("{}; exit", cmd.raw);
                run_with_timeout(
                    &self.shell,
                    &["-c", "exec 2>&1; exec \"$0\" -q -x \"$1\"", &self.msfconsole, &console_script],
                    timeout,
                )
            }
        }
    }
}

/// Feeds commands to a [`Simulator`], threading its state.
pub struct SimBackend {
    sim: Simulator,
    state: SimState,
}

impl SimBackend {
    pub fn new(sim: Simulator) -> Self {
        SimBackend {
            sim,
            state: SimState::default(),
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }
}

impl ExecutorBackend for SimBackend {
    fn execute(&mut self, cmd: &Command) -> Result<ExecOutput, ExecError> {
        let (out, next) = self.sim.simulate(cmd, &self.state);
        self.state = next;
        Ok(ExecOutput {
            output: cap_output(out.text.as_bytes(), false),
            status: ExitStatus::Code(out.exit_status),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_merged_output() {
        let mut b = ShellBackend::default();
        let out = b.execute(&Command::shell("echo out; echo err >&2; exit 3")).unwrap();
        assert_eq!(out.output, "out\nerr\n");
        assert_eq!(out.status, ExitStatus::Code(3));
    }

    #[test]
    fn timeout_kills_the_group() {
        let mut b = ShellBackend::default();
        let start = Instant::now();
        let out = b
            .execute(&Command::shell("echo started; sleep 999").with_timeout(1))
            .unwrap();
        assert_eq!(out.status, ExitStatus::Timeout);
        assert_eq!(out.output, "started\n");
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn large_output_is_truncated() {
        let mut b = ShellBackend::default();
        let out = b.execute(&Command::shell("head -c 200000 /dev/zero | tr '\\0' a")).unwrap();
        assert!(out.output.ends_with(TRUNCATION_MARKER));
        assert_eq!(out.output.len(), OUTPUT_CAP + TRUNCATION_MARKER.len());
    }

    #[test]
    fn missing_shell_is_a_spawn_error() {
        let mut b = ShellBackend {
            shell: "/nonexistent/sh".into(),
            msfconsole: "msfconsole".into(),
        };
        assert!(matches!(b.execute(&Command::shell("true")), Err(ExecError::Spawn(_))));
    }

    #[test]
    fn missing_console_is_a_spawn_error() {
        let mut b = ShellBackend {
            shell: "sh".into(),
            msfconsole: "/nonexistent/msfconsole".into(),
        };
        assert!(matches!(b.execute(&Command::msf("search x")), Err(ExecError::Spawn(_))));
    }

    #[test]
    fn sim_backend_threads_state() {
        let mut b = SimBackend::new(Simulator::new(crate::sim::metasploitable2()));
        b.execute(&Command::shell("telnet 10.0.2.4")).unwrap();
        b.execute(&Command::shell("msfadmin")).unwrap();
        let out = b.execute(&Command::shell("msfadmin")).unwrap();
        assert!(out.output.contains("Last login"));
        assert_eq!(b.state().exploited.len(), 1);
    }
}
