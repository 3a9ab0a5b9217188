//! Commands emitted by the executor, delimited by `$...$`.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT_SECONDS: u64 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Shell,
    Msfconsole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub raw: String,
    pub channel: Channel,
    pub timeout_seconds: u64,
}

impl Command {
    pub fn shell(raw: impl Into<String>) -> Self {
        Command {
            raw: raw.into(),
            channel: Channel::Shell,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
        }
    }

    pub fn msf(raw: impl Into<String>) -> Self {
        Command {
            raw: raw.into(),
            channel: Channel::Msfconsole,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
        }
    }

    pub fn with_timeout(mut self, seconds: u64) -> Self {
        self.timeout_seconds = seconds;
        self
    }

    /// Display form, with the `msfconsole:` prefix restored for console commands.
    pub fn display(&self) -> String {
        match self.channel {
            Channel::Shell => self.raw.clone(),
            Channel::Msfconsole => format!("msfconsole: {}", self.raw),
        }
    }
}

/// Result of scanning model output for commands.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandParse {
    pub commands: Vec<Command>,
    /// Fragments that could not be turned into commands.
    pub errors: Vec<String>,
}

impl CommandParse {
    /// The "no-command" signal: nothing executable was found.
    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}

static MSF_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*msfconsole\s*:\s*").expect("static regex"));

/// Extracts every `$...$` body in order. A body starting with
/// `msfconsole:` (any case, optional spaces) becomes a console command with
/// the prefix removed. An unpaired trailing `$` and empty bodies are
/// reported in `errors`.
pub fn parse_commands(text: &str) -> CommandParse {
    let mut out = CommandParse::default();
    let pieces: Vec<&str> = text.split('$').collect();
    // pieces at odd indices lie between a pair of delimiters
    let delimiters = pieces.len() - 1;
    let paired = delimiters - delimiters % 2;
    for (i, piece) in pieces.iter().enumerate() {
        if i % 2 == 0 {
            continue;
        }
        if i > paired {
            let frag: String = piece.chars().take(60).collect();
            out.errors.push(format!("unpaired '$' before {frag:?}"));
            continue;
        }
        let body = piece.trim().trim_matches('`').trim();
        if body.is_empty() {
            out.errors.push("empty command between '$' delimiters".to_string());
            continue;
        }
        match MSF_PREFIX.find(body) {
            Some(m) => {
                let rest = body[m.end()..].trim();
                if rest.is_empty() {
                    out.errors.push("msfconsole prefix without a command".to_string());
                } else {
                    out.commands.push(Command::msf(rest));
                }
            }
            None => out.commands.push(Command::shell(body)),
        }
    }
    out
}

/// Joins runs of consecutive console commands into one batch so each batch
/// runs in a single console session.
pub fn batch_console_commands(commands: Vec<Command>) -> Vec<Command> {
    let mut out: Vec<Command> = Vec::new();
    for c in commands {
        match (out.last_mut(), c.channel) {
            (Some(prev), Channel::Msfconsole) if prev.channel == Channel::Msfconsole => {
                prev.raw.push_str("; ");
                prev.raw.push_str(&c.raw);
                prev.timeout_seconds = prev.timeout_seconds.max(c.timeout_seconds);
            }
            _ => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_command() {
        let p = parse_commands("$nmap --script vuln 10.0.2.4$");
        assert_eq!(p.commands, vec![Command::shell("nmap --script vuln 10.0.2.4")]);
        assert!(p.errors.is_empty());
    }

    #[test]
    fn console_command_in_prose() {
        let p = parse_commands("run $msfconsole: use exploit/multi/samba/usermap_script$ now");
        assert_eq!(p.commands, vec![Command::msf("use exploit/multi/samba/usermap_script")]);
    }

    #[test]
    fn no_dollar_signs() {
        assert!(parse_commands("no dollar signs here").is_empty());
    }

    #[test]
    fn unpaired_reported() {
        let p = parse_commands("$ls$ and then $whoami");
        assert_eq!(p.commands, vec![Command::shell("ls")]);
        assert_eq!(p.errors.len(), 1);
    }

    #[test]
    fn batching() {
        let cmds = vec![
            Command::msf("use a"),
            Command::msf("set RHOSTS x"),
            Command::shell("id"),
            Command::msf("exploit"),
        ];
        let b = batch_console_commands(cmds);
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].raw, "use a; set RHOSTS x");
        assert_eq!(b[2].raw, "exploit");
    }
}
