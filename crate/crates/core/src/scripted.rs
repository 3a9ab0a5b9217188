//! A rule-based stand-in for the language model. It reads the same prompts
//! a real model would and answers from fixed rules, so whole pipeline runs
//! can be recorded without an API key. Replies depend only on the request,
//! which keeps recorded transcripts replayable.

use std::sync::LazyLock;

use regex::Regex;

use crate::gateway::prompts::COUNTERFACTUAL_MARKER;
use crate::gateway::{AgentRole, ChatRequest, GatewayError, LlmBackend, RoleTag};
use crate::model::{AttackPlan, TaskNode, TaskStatus};
use crate::pentest::plan_text::parse_plan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Finds six weaknesses, helped along by counterfactual re-planning.
    Golden,
    /// Tries only dead ends; nothing is exploited.
    NoExploit,
}

#[derive(Debug, Clone, Copy)]
pub struct ScriptedModel {
    pub scenario: Scenario,
}

impl ScriptedModel {
    pub fn new(scenario: Scenario) -> Self {
        ScriptedModel { scenario }
    }
}

impl LlmBackend for ScriptedModel {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let last = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role_tag == RoleTag::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let system = request
            .messages
            .iter()
            .find(|m| m.role_tag == RoleTag::System)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        Ok(match request.role {
            AgentRole::Planner => self.planner(last),
            AgentRole::Executor => executor(self.scenario, last),
            AgentRole::Summarizer => summarize(last),
            AgentRole::Extractor => extract(last),
            AgentRole::Estimator => estimate(last, request.messages.get(1).map(|m| m.content.as_str()).unwrap_or_default()),
            AgentRole::Advisor => advise(last, request.messages.len()),
            AgentRole::Evaluator => evaluate(system, last),
        })
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = text.find(start) else { return "" };
    let rest = &text[i + start.len()..];
    match rest.find(end) {
        Some(j) => &rest[..j],
        None => rest,
    }
}

fn plan_of(text: &str) -> AttackPlan {
    parse_plan(text).map(|(p, _)| p).unwrap_or_default()
}

fn next_child_id(plan: &AttackPlan, parent: &str) -> String {
    let n = plan.find(parent).map(|p| p.children.len()).unwrap_or(0);
    format!("{parent}.{}", n + 1)
}

/// Tasks added after the n-th finding, in order.
const FOLLOW_UPS: [&str; 4] = [
    "Exploit the Samba smbd service on ports 139 and 445",
    "Log in to the telnet service on port 23 with default credentials",
    "Test the Mutillidae user-info page on port 80 for SQL injection",
    "Log in to the SSH service on port 22 with weak credentials",
];

const SUCCESS: [&str; 6] = [
    "Exploit succeeded",
    "Login succeeded",
    "SQL injection succeeded",
    "Open ports:",
    "Search returned",
    "Host is reachable",
];

impl ScriptedModel {
    fn planner(&self, prompt: &str) -> String {
        if prompt.starts_with("The target machine is at") {
            let target = between(prompt, "The target machine is at ", ". Build");
            return initial_plan(self.scenario, target);
        }
        if prompt.starts_with(COUNTERFACTUAL_MARKER) {
            let findings = between(prompt, "\n", "\n\nCurrent attack plan:");
            let count = findings.lines().filter(|l| l.starts_with("Port ")).count();
            let mut plan = plan_of(between(prompt, "Current attack plan:\n", "Reply with the full updated plan."));
            if self.scenario == Scenario::Golden {
                if let Some(task) = count.checked_sub(1).and_then(|i| FOLLOW_UPS.get(i)) {
                    let id = next_child_id(&plan, "4");
                    plan.insert(TaskNode::todo(id, *task));
                }
            }
            return plan.render();
        }
        let plan_text = between(prompt, "Current attack plan:\n", "\nTask ");
        if prompt.contains("Choose the next to-do task") {
            let plan = plan_of(between(prompt, "Current attack plan:\n", "Choose the next"));
            return match plan.actionable().first() {
                Some(t) => format!("Next task: {}", t.id),
                None => "All tasks are done.".into(),
            };
        }
        // plan update
        static TASK: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"(?m)^Task (\S+) \(.*\) was attempted").expect("static regex"));
        let Some(id) = TASK.captures(prompt).map(|c| c[1].to_string()) else {
            return "I could not read the plan.".into();
        };
        let summary = between(prompt, "Summary of the results:\n", "\nMark task ");
        let mut plan = plan_of(plan_text);
        let ok = SUCCESS.iter().any(|m| summary.contains(m));
        let lines: Vec<&str> = summary.lines().filter(|l| !l.starts_with('$') && !l.trim().is_empty()).collect();
        let result: String = lines
            .iter()
            .find(|l| SUCCESS.iter().any(|m| l.contains(m)))
            .or(lines.last())
            .copied()
            .unwrap_or("no output")
            .chars()
            .take(160)
            .collect();
        let proftpd = plan.find(&id).is_some_and(|t| t.description.contains("ProFTPD"));
        if let Some(t) = plan.find_mut(&id) {
            t.status = if ok { TaskStatus::Completed } else { TaskStatus::Failed };
            t.result_summary = Some(result);
        }
        if !ok && proftpd && self.scenario == Scenario::Golden {
            let child = next_child_id(&plan, &id);
            plan.insert(TaskNode::todo(child, "Search Metasploit for other modules for the FTP service on port 21"));
        }
        plan.roll_up();
        plan.render()
    }
}

fn initial_plan(scenario: Scenario, target: &str) -> String {
    let exploits: &[&str] = match scenario {
        Scenario::Golden => &[
            "Exploit the ProFTPD 1.3.3c backdoor on port 21",
            "Exploit the vsftpd 2.3.4 backdoor on port 21 (CVE-2011-2523)",
            "Exploit the UnrealIRCd backdoor on port 6667 (CVE-2010-2075)",
        ],
        Scenario::NoExploit => &[
            "Exploit the ProFTPD 1.3.3c backdoor on port 21",
            "Exploit the Samba lsa_transnames heap overflow on port 445",
            "Brute-force the SSH service on port 22 with the root account",
        ],
    };
    let mut out = format!(
        "Here is the initial plan.\n\n\
         1. Reconnaissance [to-do]\n  1.1 Confirm that {target} is reachable [to-do]\n\
         2. Scanning [to-do]\n  2.1 Scan all TCP ports of {target} and identify service versions [to-do]\n"
    );
    if scenario == Scenario::Golden {
        out.push_str(&format!("  2.2 Scan the Samba ports 139 and 445 on {target} [to-do]\n"));
        out.push_str("3. Vulnerability Assessment [to-do]\n  3.1 Run nmap vulnerability scripts against the open services [to-do]\n");
    }
    out.push_str("4. Exploitation [to-do]\n");
    for (i, e) in exploits.iter().enumerate() {
        out.push_str(&format!("  4.{} {e} [to-do]\n", i + 1));
    }
    if scenario == Scenario::Golden {
        out.push_str("5. Post-exploitation [to-do]\n  5.1 Confirm root access through the vsftpd backdoor (CVE-2011-2523) [to-do]\n");
    }
    out
}

fn msf(module: &str, target: &str) -> String {
    format!("$msfconsole: use {module}$\n$msfconsole: set RHOSTS {target}$\n$msfconsole: exploit$")
}

fn executor(scenario: Scenario, prompt: &str) -> String {
    if prompt.starts_with("Your reply contained no command") {
        return "I cannot help with that step.".into();
    }
    let target = between(prompt, "Target: ", "\n").trim();
    let task = between(prompt, "\nTask: ", "\n").to_ascii_lowercase();
    let guided = prompt.contains("usermap_script");
    let cmds = if task.contains("reachable") {
        format!("$ping -c 3 {target}$")
    } else if task.contains("scan the samba ports") {
        format!("$nmap -sV -p 139,445 {target}$")
    } else if task.contains("scan all tcp ports") {
        format!("$nmap -sV -p- {target}$")
    } else if task.contains("vulnerability scripts") {
        format!("$nmap --script vuln {target}$")
    } else if task.contains("proftpd") {
        msf("exploit/unix/ftp/proftpd_133c_backdoor", target)
    } else if task.contains("search metasploit") {
        "$msfconsole: search ftp$".into()
    } else if task.contains("vsftpd") {
        msf("exploit/unix/ftp/vsftpd_234_backdoor", target)
    } else if task.contains("unrealircd") {
        msf("exploit/unix/irc/unreal_ircd_3281_backdoor", target)
    } else if task.contains("samba") {
        if guided && scenario == Scenario::Golden {
            msf("exploit/multi/samba/usermap_script", target)
        } else {
            msf("exploit/linux/samba/lsa_transnames_heap", target)
        }
    } else if task.contains("telnet") {
        format!("$telnet {target}$\n$msfadmin$\n$msfadmin$")
    } else if task.contains("sql injection") {
        format!(
            "$curl \"http://{target}/mutillidae/index.php?page=user-info.php&username=%27%20or%201=1%20--%20&password=x\"$"
        )
    } else if task.contains("root account") {
        format!("$hydra -l root -p toor ssh://{target}$")
    } else if task.contains("ssh") {
        format!("$sshpass -p msfadmin ssh -o StrictHostKeyChecking=no msfadmin@{target} id$")
    } else {
        return "I am not sure how to approach this task.".into();
    };
    format!("Run the following:\n{cmds}")
}

static PORT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^(\d+)/tcp[ \t]+open[ \t]+(\S+)[ \t]*(.*)$").expect("static regex"));
static CVE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"CVE-\d{4}-\d{4,}").expect("static regex"));

fn summarize(prompt: &str) -> String {
    let command = between(prompt, "Command: ", "\n");
    let output = between(prompt, "\nOutput:\n", "\u{0}");
    if output.contains("uid=0(root)") || output.contains("session 1 opened") || output.contains("Backdoor service has been spawned") {
        let who = if output.contains("uid=0(root)") { "root" } else { "an unprivileged user" };
        return format!("Exploit succeeded: a command shell was opened on the target as {who}.");
    }
    if output.contains("no session was created") || output.contains("Failed to load module") {
        let reason = output.lines().find(|l| l.starts_with("[-]")).unwrap_or("no session");
        return format!("Exploit failed: {}", reason.trim_start_matches("[-] "));
    }
    if output.contains("Last login") || output.contains("230 Login successful") {
        return "Login succeeded: an interactive shell on the target is available.".into();
    }
    if output.contains("Login incorrect") || output.contains("Permission denied") || output.contains("0 valid password") {
        return "Login failed: the credentials were rejected.".into();
    }
    if output.contains("records found") || output.contains("is vulnerable") {
        return "SQL injection succeeded: the username parameter leaks user records including passwords.".into();
    }
    if output.contains("Matching Modules") {
        let modules: Vec<&str> = output
            .lines()
            .filter_map(|l| l.split_whitespace().nth(1))
            .filter(|w| w.contains('/'))
            .collect();
        return format!("Search returned {} modules: {}", modules.len(), modules.join(", "));
    }
    let ports: Vec<String> = PORT_LINE
        .captures_iter(output)
        .map(|c| {
            let version = c[3].trim();
            if version.is_empty() {
                format!("{}/{}", &c[1], &c[2])
            } else {
                format!("{}/{} ({version})", &c[1], &c[2])
            }
        })
        .collect();
    if !ports.is_empty() {
        let mut s = format!("Open ports: {}", ports.join(", "));
        let mut cves: Vec<&str> = CVE.find_iter(output).map(|m| m.as_str()).collect();
        cves.dedup();
        if !cves.is_empty() {
            s.push_str(&format!(". Scripts report {}", cves.join(", ")));
        }
        if output.contains("unrealircd-backdoor") {
            s.push_str(". The IRC service looks like a trojaned UnrealIRCd");
        }
        return s + ".";
    }
    if output.contains("bytes from") {
        return "Host is reachable.".into();
    }
    if output.contains("login:") || output.contains("Password:") {
        return format!("Prompt received after `{command}`; waiting for input.");
    }
    let head: Vec<&str> = output.lines().filter(|l| !l.trim().is_empty()).take(2).collect();
    format!("Command ended without a result: {}", head.join(" "))
}

struct Block<'a> {
    command: &'a str,
    summary: &'a str,
}

fn blocks(history: &str) -> Vec<Block<'_>> {
    history
        .split("\n\n")
        .filter_map(|b| {
            let (first, summary) = b.trim().split_once('\n')?;
            let command = first.split_once("$ ")?.1;
            Some(Block { command, summary })
        })
        .collect()
}

fn finding(id: &str, service: &str, port: u16, description: &str, method: &str) -> String {
    format!("Exploited: {id}\nservice: {service}\nport: {port}\ndescription: {description}\nmethod: {method}")
}

fn extract(prompt: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut login: Option<&str> = None;
    for b in blocks(between(prompt, "Attack history:\n", "\u{0}")) {
        if b.command.starts_with("telnet ") {
            login = Some("telnet");
        } else if b.command.contains("ssh") {
            login = Some("ssh");
        }
        let f = if b.summary.starts_with("Exploit succeeded") {
            if b.command.contains("vsftpd_234_backdoor") {
                Some(finding("CVE-2011-2523", "ftp", 21, "vsFTPd version 2.3.4 backdoor", "exploit/unix/ftp/vsftpd_234_backdoor"))
            } else if b.command.contains("unreal_ircd_3281_backdoor") {
                Some(finding("CVE-2010-2075", "irc", 6667, "UnrealIRCd 3.2.8.1 backdoor command execution", "exploit/unix/irc/unreal_ircd_3281_backdoor"))
            } else if b.command.contains("usermap_script") {
                Some(finding("CVE-2007-2447", "samba", 139, "Samba username map script command execution", "exploit/multi/samba/usermap_script"))
            } else {
                None
            }
        } else if b.summary.starts_with("Login succeeded") {
            match login {
                Some("telnet") => Some(finding("CVE-NA", "telnet", 23, "Default credentials msfadmin/msfadmin accepted", "telnet login as msfadmin")),
                Some(_) => Some(finding("N/A", "ssh", 22, "Weak password for the msfadmin account", "ssh login as msfadmin/msfadmin")),
                None => None,
            }
        } else if b.summary.starts_with("SQL injection succeeded") {
            Some(finding("CVE-NA", "http", 80, "SQL injection in the Mutillidae user-info page", "' or 1=1 -- in the username parameter"))
        } else {
            None
        };
        if let Some(f) = f {
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    if out.is_empty() {
        "None".into()
    } else {
        out.join("\n\n")
    }
}

fn estimate(prompt: &str, first_prompt: &str) -> String {
    let retry = prompt.starts_with("That reply could not be parsed");
    let subject = if retry { first_prompt } else { prompt };
    let v = between(subject, "Vulnerability: ", "\n").to_ascii_lowercase();
    if v.contains("sql injection") {
        return if retry {
            "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:L/A:N".into()
        } else {
            "This is a serious injection flaw with high confidentiality impact.".into()
        };
    }
    if v.contains("samba") {
        "CVSS:3.0/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H".into()
    } else if v.contains("telnet") {
        "cvss:3.1/av:n/ac:l/pr:n/ui:n/s:u/c:h/i:h/a:h".into()
    } else if v.contains("ssh") {
        "Vector: CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:N".into()
    } else {
        "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:L/I:L/A:L".into()
    }
}

fn advise(prompt: &str, turns: usize) -> String {
    if prompt.starts_with("Reply again as a numbered list") {
        return "1. Upgrade UnrealIRCd to a clean release: `sudo apt-get install --only-upgrade unrealircd`\n2. Stop the IRC daemon: `sudo systemctl stop unrealircd`\n3. Block port 6667: `sudo ufw deny 6667/tcp`".into();
    }
    let v = between(prompt, "Vulnerability: ", "\n").to_ascii_lowercase();
    let items: &[&str] = if v.contains("samba") {
        &[
            "Update Samba using `sudo apt-get install --only-upgrade samba`",
            "Perform regular security audits of the Samba configuration",
            "Shut down the Samba service: `sudo systemctl stop smbd nmbd`",
            "Configure the firewall to restrict SMB access: `sudo ufw deny 139/tcp` and `sudo ufw deny 445/tcp`",
        ]
    } else if v.contains("irc") && turns <= 2 {
        return "The IRC daemon is backdoored; it should be replaced with a clean build.".into();
    } else if v.contains("ftp") {
        &[
            "Remove the backdoored vsftpd and install the patched package: `sudo apt-get install --only-upgrade vsftpd`",
            "Shut down the FTP service: `sudo systemctl stop vsftpd`",
            "Restrict FTP to trusted hosts with the firewall: `sudo ufw allow from 10.0.2.0/24 to any port 21`",
        ]
    } else if v.contains("telnet") {
        &[
            "Change the default passwords of the msfadmin, user and postgres accounts: `sudo passwd msfadmin`",
            "Disable telnet and use SSH instead: `sudo systemctl disable --now inetd`",
            "Monitor authentication logs for repeated logins",
        ]
    } else if v.contains("http") {
        &[
            "Use parameterized queries in the user-info page and deploy a web application firewall rule set",
            "Remove the Mutillidae application from the server: `sudo rm -rf /var/www/mutillidae`",
            "Perform regular security audits of the web applications",
        ]
    } else if v.contains("ssh") {
        &[
            "Change the weak account passwords: `sudo passwd msfadmin`",
            "Disable password authentication: set `PasswordAuthentication no` in /etc/ssh/sshd_config and run `sudo systemctl restart ssh`",
            "Install fail2ban to limit login attempts: `sudo apt-get install fail2ban`",
        ]
    } else {
        &["Apply the vendor's latest security updates: `sudo apt-get update && sudo apt-get upgrade`"]
    };
    let mut out = String::from("Here are my recommendations:\n");
    for (i, item) in items.iter().enumerate() {
        out.push_str(&format!("{}. {item}\n", i + 1));
    }
    out
}

/// Labels of the listed vulnerabilities whose line mentions any of `words`.
fn labels(system: &str, words: &[&str]) -> Vec<String> {
    static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(V\d+)\. ([^\n\[]*)").expect("static regex"));
    LABEL
        .captures_iter(system)
        .filter(|c| {
            let rest = c[2].to_ascii_lowercase();
            words.iter().any(|w| rest.contains(w))
        })
        .map(|c| c[1].to_string())
        .collect()
}

fn evaluate(system: &str, prompt: &str) -> String {
    if prompt.starts_with("That reply did not follow") {
        return "Effectiveness: Zero\nAddresses: none\nCost: Low\nRationale: the change has no effect on the listed weaknesses.".into();
    }
    let rec = between(prompt, "Recommendation: ", "\nImagine").to_ascii_lowercase();
    let (eff, cost, why, words): (&str, &str, &str, Vec<&str>) = if rec.contains("audit") || rec.contains("monitor") {
        ("Partial 30%", "Low", "reviews find problems but do not fix them", vec![])
    } else if rec.contains("shut down") || rec.contains("stop") || rec.contains("remove the mutillidae") {
        ("Full", "High", "the service is gone, but so is its function", vec![])
    } else if rec.contains("password") && !rec.contains("passwordauthentication") {
        ("Full", "Low", "new passwords stop logins with the known defaults", vec!["telnet", "ssh"])
    } else if rec.contains("fail2ban") {
        // deliberately off-format, to exercise the re-prompt
        return "This helps a bit against brute force.".into();
    } else if rec.contains("ufw allow") || rec.contains("firewall to restrict") {
        ("Partial 50%", "Low", "exposure is reduced to trusted hosts", vec![])
    } else if rec.contains("ufw deny") || rec.contains("firewall") {
        ("Partial 80%", "Moderate", "most remote access is blocked", vec![])
    } else if rec.contains("disable") {
        ("Full", "3", "the weak login path is closed with little effort", vec![])
    } else {
        ("Full", "Low", "the vulnerable code is replaced", vec![])
    };
    let addresses = labels(system, &words);
    format!(
        "Effectiveness: {eff}\nAddresses: {}\nCost: {cost}\nRationale: {why}.",
        if addresses.is_empty() { "the listed vulnerability".to_string() } else { addresses.join(", ") }
    )
}
