//! Deterministic stand-in for a vulnerable victim host.
//!
//! The simulator answers a fixed command grammar (nmap, a Metasploit console
//! subset, login clients, HTTP clients and a few enumeration tools) from a
//! declarative [`HostModel`]. It never opens a socket.

mod host;
mod msf;
mod tools;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{is_valid_vuln_id, Vulnerability};
use crate::pentest::command::{Channel, Command};

pub use host::metasploitable2;

/// Address the simulated attacker box uses for reverse connections.
pub const ATTACKER_ADDR: &str = "10.0.2.15";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    Shell,
    RootShell,
    InfoLeak,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    /// Running this console module against the host.
    MsfModule { module: String },
    /// Logging in to the owning service with this pair.
    Credentials { user: String, password: String },
    /// An HTTP request whose path and query match `pattern`. When `requires`
    /// is set it must occur in the text the wildcard matched.
    Url {
        pattern: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        requires: Option<String>,
    },
    /// A tool invocation whose canonical form matches `pattern`.
    Command { pattern: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimWeakness {
    pub trigger: Trigger,
    pub effect: Effect,
    pub cve: String,
    /// Ground-truth row this weakness counts towards as (port, id). Defaults
    /// to the owning service's port and `cve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records_as: Option<(u16, String)>,
    /// Success output; `{addr}` is replaced by the host address.
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimService {
    pub name: String,
    pub port: u16,
    /// Version column of a service scan.
    pub product: String,
    /// First line a client sees on connect.
    pub banner: String,
    /// False for ports that only show up when named explicitly.
    #[serde(default = "yes")]
    pub sweep_visible: bool,
    /// Lines appended under the port by `nmap --script vuln`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script_output: Vec<String>,
    #[serde(default)]
    pub weaknesses: Vec<SimWeakness>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModuleKind {
    Exploit,
    Auxiliary,
    /// A credential scanner; checks USERNAME/PASSWORD against `port`.
    Login,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsfModuleInfo {
    pub path: String,
    pub kind: ModuleKind,
    #[serde(default)]
    pub disclosure: String,
    pub rank: String,
    pub description: String,
    /// Default RPORT.
    pub port: u16,
    /// Output for modules that only report information.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostModel {
    pub address: String,
    pub hostname: String,
    pub os: String,
    pub services: Vec<SimService>,
    #[serde(default)]
    pub msf_modules: Vec<MsfModuleInfo>,
    pub ground_truth: Vec<Vulnerability>,
}

impl HostModel {
    pub fn from_json(bytes: &[u8]) -> Result<Self, String> {
        let host: HostModel = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        let problems = host.validate();
        if problems.is_empty() {
            Ok(host)
        } else {
            Err(problems.join("; "))
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&bytes).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("host model serializes")
    }

    pub fn service(&self, port: u16) -> Option<&SimService> {
        self.services.iter().find(|s| s.port == port)
    }

    /// Ground-truth row credited by a weakness of the service on `port`.
    pub fn credit(&self, port: u16, w: &SimWeakness) -> (u16, String) {
        w.records_as.clone().unwrap_or((port, w.cve.clone()))
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for s in &self.services {
            if !seen.insert(s.port) {
                out.push(format!("port {}: duplicate service", s.port));
            }
            for w in &s.weaknesses {
                let pattern = match &w.trigger {
                    Trigger::Url { pattern, .. } | Trigger::Command { pattern } => Some(pattern),
                    _ => None,
                };
                if pattern.is_some_and(|p| p.matches('*').count() > 1) {
                    out.push(format!("port {}: trigger pattern has more than one wildcard", s.port));
                }
                if !is_valid_vuln_id(&w.cve) {
                    out.push(format!("port {}: malformed cve {}", s.port, w.cve));
                }
                let (p, id) = self.credit(s.port, w);
                if !self.ground_truth.iter().any(|t| t.port == Some(p) && t.id == id) {
                    out.push(format!("port {}: weakness credits ({p}, {id}) which is not a ground-truth row", s.port));
                }
            }
        }
        out
    }
}

/// A login prompt waiting for input from the next commands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingLogin {
    pub port: u16,
    pub user: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimState {
    /// Credited ground-truth rows as (port, id); only grows.
    pub exploited: BTreeSet<(u16, String)>,
    pub shells_open: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingLogin>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOutput {
    pub text: String,
    pub exit_status: i32,
}

/// Matches `text` against a pattern with at most one `*`. Returns the text
/// the wildcard covered (empty for exact patterns).
pub fn wildcard_match<'a>(pattern: &str, text: &'a str) -> Option<&'a str> {
    match pattern.split_once('*') {
        None => (pattern == text).then_some(""),
        Some((pre, post)) => {
            if text.len() >= pre.len() + post.len() && text.starts_with(pre) && text.ends_with(post) {
                Some(&text[pre.len()..text.len() - post.len()])
            } else {
                None
            }
        }
    }
}

/// Collapses whitespace and drops quote characters.
pub fn normalize_command(raw: &str) -> String {
    raw.replace(['"', '\''], "")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct Simulator {
    host: HostModel,
}

/// Mutable context threaded through one `simulate` call.
pub(crate) struct Ctx<'h> {
    pub host: &'h HostModel,
    pub state: SimState,
}

impl Ctx<'_> {
    pub fn addr(&self) -> &str {
        &self.host.address
    }

    pub fn subst(&self, text: &str) -> String {
        text.replace("{addr}", &self.host.address)
    }

    fn record(&mut self, port: u16, w: &SimWeakness) {
        let credit = self.host.credit(port, w);
        self.state.exploited.insert(credit);
        if w.effect != Effect::InfoLeak {
            self.state.shells_open += 1;
        }
    }

    /// Fires the first weakness on `port` accepted by `pred`.
    pub fn fire(&mut self, port: u16, pred: impl Fn(&Trigger) -> bool) -> Option<SimWeakness> {
        let w = self
            .host
            .service(port)?
            .weaknesses
            .iter()
            .find(|w| pred(&w.trigger))?
            .clone();
        self.record(port, &w);
        Some(w)
    }

    pub fn fire_login(&mut self, port: u16, user: &str, password: &str) -> Option<SimWeakness> {
        self.fire(port, |t| {
            matches!(t, Trigger::Credentials { user: u, password: p } if u == user && p == password)
        })
    }

    pub fn fire_command(&mut self, port: u16, canonical: &str) -> Option<SimWeakness> {
        let host = self.host;
        self.fire(port, |t| match t {
            Trigger::Command { pattern } => {
                wildcard_match(&pattern.replace("{addr}", &host.address), canonical).is_some()
            }
            _ => false,
        })
    }

    pub fn fire_url(&mut self, port: u16, path_query: &str) -> Option<SimWeakness> {
        let host = self.host;
        self.fire(port, |t| match t {
            Trigger::Url { pattern, requires } => {
                match wildcard_match(&pattern.replace("{addr}", &host.address), path_query) {
                    Some(cap) => requires.as_deref().is_none_or(|r| cap.contains(r)),
                    None => false,
                }
            }
            _ => false,
        })
    }

    pub fn fire_module(&mut self, port: u16, module: &str) -> Option<SimWeakness> {
        self.fire(port, |t| matches!(t, Trigger::MsfModule { module: m } if m == module))
    }
}

impl Simulator {
    pub fn new(host: HostModel) -> Self {
        Simulator { host }
    }

    pub fn host(&self) -> &HostModel {
        &self.host
    }

    pub fn ground_truth(&self) -> Vec<Vulnerability> {
        self.host.ground_truth.clone()
    }

    /// Pure function of (command, state).
    pub fn simulate(&self, cmd: &Command, state: &SimState) -> (SimOutput, SimState) {
        let mut ctx = Ctx {
            host: &self.host,
            state: state.clone(),
        };
        let (body, exit_status) = match cmd.channel {
            Channel::Msfconsole => msf::run_console(&mut ctx, &cmd.raw),
            Channel::Shell => tools::run_shell(&mut ctx, &cmd.raw),
        };
        let mut text = format!("[sim] {} ({}) simulated output\n", self.host.hostname, self.host.address);
        text.push_str(body.trim_end_matches('\n'));
        text.push('\n');
        (SimOutput { text, exit_status }, ctx.state)
    }
}

/// The bundled default host's ground truth.
pub fn ground_truth() -> Vec<Vulnerability> {
    metasploitable2().ground_truth
}

#[cfg(test)]
mod tests;
