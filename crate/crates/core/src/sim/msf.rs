//! Console grammar: `search`, `use`, `set`, `show options`, `info`,
//! `check`, `exploit`/`run`, `sessions` and a few in-session commands.
//! Each batch is one console session.

use std::collections::BTreeMap;

use super::tools::remote_command;
use super::{Ctx, Effect, ModuleKind, MsfModuleInfo, Trigger, ATTACKER_ADDR};

struct Console {
    module: Option<MsfModuleInfo>,
    options: BTreeMap<String, String>,
    last_search: Vec<String>,
    /// User of the most recent open session.
    session_user: Option<String>,
    sessions: u32,
}

fn prompt(module: &Option<MsfModuleInfo>) -> String {
    match module {
        None => "msf6 >".into(),
        Some(m) => {
            let (kind, short) = m.path.split_once('/').unwrap_or(("exploit", &m.path));
            format!("msf6 {kind}({short}) >")
        }
    }
}

pub(crate) fn run_console(ctx: &mut Ctx, script: &str) -> (String, i32) {
    let mut console = Console {
        module: None,
        options: BTreeMap::new(),
        last_search: Vec::new(),
        session_user: None,
        sessions: 0,
    };
    let mut out = Vec::new();
    let mut status = 0;
    for line in script.split([';', '\n']).map(str::trim).filter(|l| !l.is_empty()) {
        out.push(format!("{} {line}", prompt(&console.module)));
        let (text, ok) = step(ctx, &mut console, line);
        if !text.is_empty() {
            out.push(text);
        }
        if !ok {
            status = 1;
        }
    }
    (out.join("\n"), status)
}

fn step(ctx: &mut Ctx, c: &mut Console, line: &str) -> (String, bool) {
    let words: Vec<&str> = line.split_whitespace().collect();
    let cmd = words[0].to_ascii_lowercase();
    let args = &words[1..];
    match cmd.as_str() {
        "search" => search(ctx, c, args),
        "use" => use_module(ctx, c, args),
        "set" | "setg" => match args {
            [key, value @ ..] if !value.is_empty() => {
                let key = key.to_ascii_uppercase();
                let value = value.join(" ");
                c.options.insert(key.clone(), value.clone());
                (format!("{key} => {value}"), true)
            }
            _ => ("[-] Usage: set <option> <value>".into(), false),
        },
        "unset" => {
            for a in args {
                c.options.remove(&a.to_ascii_uppercase());
            }
            (format!("Unsetting {}...", args.join(" ")), true)
        }
        "show" | "options" => show(ctx, c, args),
        "info" => match &c.module {
            Some(m) => (
                format!("       Name: {}\n     Module: {}\n       Rank: {}\n  Disclosed: {}\n\nDescription:\n  {}", m.description, m.path, m.rank, m.disclosure, m.description),
                true,
            ),
            None => ("[-] No module selected".into(), false),
        },
        "check" => check(ctx, c),
        "exploit" | "run" => exploit(ctx, c),
        "sessions" => {
            if c.sessions == 0 {
                ("Active sessions\n===============\n\nNo active sessions.".into(), true)
            } else if args.contains(&"-i") {
                (format!("[*] Starting interaction with {}...", c.sessions), true)
            } else {
                (
                    format!("Active sessions\n===============\n\n  Id  Type         Connection\n  --  ----         ----------\n  {}   shell linux  {ATTACKER_ADDR}:4444 -> {}", c.sessions, ctx.addr()),
                    true,
                )
            }
        }
        "back" => {
            c.module = None;
            c.options.clear();
            (String::new(), true)
        }
        "exit" | "quit" | "background" | "bg" => (String::new(), true),
        "id" | "whoami" | "uname" | "hostname" | "pwd" | "ls" if c.session_user.is_some() => {
            (remote_command(c.session_user.as_deref().expect("checked"), line), true)
        }
        _ => (format!("[-] Unknown command: {}. Run the help command for more details.", words[0]), false),
    }
}

fn search(ctx: &Ctx, c: &mut Console, args: &[&str]) -> (String, bool) {
    let terms: Vec<String> = args
        .iter()
        .map(|a| a.rsplit(':').next().unwrap_or(a).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    if terms.is_empty() {
        return ("[-] Usage: search <keywords>".into(), false);
    }
    let hits: Vec<&MsfModuleInfo> = ctx
        .host
        .msf_modules
        .iter()
        .filter(|m| {
            let hay = format!("{} {}", m.path, m.description).to_lowercase();
            terms.iter().all(|t| hay.contains(t.as_str()))
        })
        .collect();
    c.last_search = hits.iter().map(|m| m.path.clone()).collect();
    if hits.is_empty() {
        return ("[-] No results from search".into(), true);
    }
    let width = hits.iter().map(|m| m.path.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "\nMatching Modules\n================\n\n   #  {:<width$}  Disclosure Date  Rank       Check  Description\n   -  {:<width$}  ---------------  ----       -----  -----------\n",
        "Name", "----"
    );
    for (i, m) in hits.iter().enumerate() {
        let check = if m.kind == ModuleKind::Exploit { "Yes" } else { "No" };
        out.push_str(&format!(
            "   {i}  {:<width$}  {:<15}  {:<9}  {:<5}  {}\n",
            m.path, m.disclosure, m.rank, check, m.description
        ));
    }
    out.push_str(&format!("\n\nInteract with a module by name or index. For example info {0}, use {0} or use {1}", hits.len() - 1, hits[hits.len() - 1].path));
    (out, true)
}

fn use_module(ctx: &Ctx, c: &mut Console, args: &[&str]) -> (String, bool) {
    let Some(name) = args.first() else {
        return ("[-] Usage: use <name|index>".into(), false);
    };
    let path = match name.parse::<usize>() {
        Ok(i) => match c.last_search.get(i) {
            Some(p) => p.clone(),
            None => return (format!("[-] Invalid module index: {i}"), false),
        },
        Err(_) => name.trim_start_matches('/').to_string(),
    };
    let found = ctx
        .host
        .msf_modules
        .iter()
        .find(|m| m.path == path || m.path.split_once('/').is_some_and(|(_, rest)| rest == path));
    match found {
        Some(m) => {
            let text = if m.kind == ModuleKind::Exploit {
                "[*] No payload configured, defaulting to cmd/unix/reverse".to_string()
            } else {
                String::new()
            };
            c.module = Some(m.clone());
            (text, true)
        }
        None => (format!("[-] No results from search\n[-] Failed to load module: {path}"), false),
    }
}

fn show(ctx: &Ctx, c: &Console, args: &[&str]) -> (String, bool) {
    let what = args.first().copied().unwrap_or("options");
    if what != "options" {
        return (format!("[-] Invalid parameter \"{what}\", use \"show -h\" for more information"), false);
    }
    let Some(m) = &c.module else {
        return ("[-] No module selected".into(), false);
    };
    let rhosts = c.options.get("RHOSTS").or(c.options.get("RHOST")).cloned().unwrap_or_default();
    let rport = c.options.get("RPORT").cloned().unwrap_or(m.port.to_string());
    let _ = ctx;
    (
        format!("Module options ({}):\n\n   Name    Current Setting  Required  Description\n   ----    ---------------  --------  -----------\n   RHOSTS  {rhosts:<15}  yes       The target host(s)\n   RPORT   {rport:<15}  yes       The target port (TCP)", m.path),
        true,
    )
}

fn target(ctx: &Ctx, c: &Console, m: &MsfModuleInfo) -> Result<(String, u16), String> {
    let Some(rhost) = c.options.get("RHOSTS").or(c.options.get("RHOST")) else {
        return Err("[-] Msf::OptionValidateError One or more options failed to validate: RHOSTS.".into());
    };
    let rport = c
        .options
        .get("RPORT")
        .and_then(|p| p.parse().ok())
        .unwrap_or(m.port);
    if rhost != ctx.addr() {
        return Err(format!(
            "[-] {rhost}:{rport} - Exploit failed [unreachable]: Rex::HostUnreachable The host ({rhost}:{rport}) was unreachable.\n[*] Exploit completed, but no session was created."
        ));
    }
    if ctx.host.service(rport).is_none() {
        return Err(format!(
            "[-] {rhost}:{rport} - Exploit failed [unreachable]: Rex::ConnectionRefused The connection was refused by the remote host ({rhost}:{rport}).\n[*] Exploit completed, but no session was created."
        ));
    }
    Ok((rhost.clone(), rport))
}

/// Port of the service whose weakness this module triggers.
fn weakness_port(ctx: &Ctx, module: &str) -> Option<u16> {
    ctx.host.services.iter().find_map(|s| {
        s.weaknesses
            .iter()
            .any(|w| matches!(&w.trigger, Trigger::MsfModule { module: m } if m == module))
            .then_some(s.port)
    })
}

fn check(ctx: &Ctx, c: &Console) -> (String, bool) {
    let Some(m) = &c.module else {
        return ("[-] No module selected".into(), false);
    };
    match target(ctx, c, m) {
        Err(e) => (e, false),
        Ok((rhost, rport)) => match weakness_port(ctx, &m.path) {
            Some(_) => (format!("[+] {rhost}:{rport} - The target is vulnerable."), true),
            None => (format!("[*] {rhost}:{rport} - The target is not exploitable."), true),
        },
    }
}

fn exploit(ctx: &mut Ctx, c: &mut Console) -> (String, bool) {
    let Some(m) = c.module.clone() else {
        return ("[-] No module selected".into(), false);
    };
    let (rhost, rport) = match target(ctx, c, &m) {
        Ok(t) => t,
        Err(e) => return (e, false),
    };
    let mut out = Vec::new();
    if m.kind == ModuleKind::Exploit {
        out.push(format!("[*] Started reverse TCP handler on {ATTACKER_ADDR}:4444 "));
    }
    if m.kind == ModuleKind::Login {
        let (Some(user), Some(pass)) = (c.options.get("USERNAME").cloned(), c.options.get("PASSWORD").cloned()) else {
            return ("[-] Msf::OptionValidateError One or more options failed to validate: USERNAME, PASSWORD.".into(), false);
        };
        let ok = ctx.fire_login(rport, &user, &pass).is_some();
        if ok {
            out.push(format!("[+] {rhost}:{rport} - Login Successful: {user}:{pass}"));
            if rport == 22 || rport == 23 {
                c.sessions += 1;
                c.session_user = Some(user.clone());
                out.push(format!("[*] Command shell session {} opened ({ATTACKER_ADDR}:40129 -> {rhost}:{rport})", c.sessions));
            }
        } else {
            out.push(format!("[-] {rhost}:{rport} - LOGIN FAILED: {user}:{pass} (Incorrect: )"));
        }
        out.push("[*] Scanned 1 of 1 hosts (100% complete)\n[*] Auxiliary module execution completed".into());
        return (out.join("\n"), ok);
    }
    let fired = weakness_port(ctx, &m.path).and_then(|port| ctx.fire_module(port, &m.path).map(|w| (port, w)));
    match fired {
        Some((port, w)) => {
            let artifact = ctx.subst(&w.artifact);
            let opened = artifact.contains("session") && artifact.contains("opened");
            out.push(artifact);
            if w.effect != Effect::InfoLeak {
                c.sessions += 1;
                if !opened {
                    out.push(format!("[*] Command shell session {} opened ({ATTACKER_ADDR}:4444 -> {rhost}:{})", c.sessions, 40000 + port));
                }
                c.session_user = Some(match (w.effect, port) {
                    (Effect::RootShell, _) => "root".into(),
                    (_, 80) => "www-data".into(),
                    _ => "msfadmin".into(),
                });
            } else {
                out.push("[*] Auxiliary module execution completed".into());
            }
            (out.join("\n"), true)
        }
        None => {
            match &m.info_output {
                Some(info) => {
                    out.push(ctx.subst(info));
                    out.push("[*] Auxiliary module execution completed".into());
                }
                None if m.kind == ModuleKind::Exploit => {
                    out.push(format!("[-] {rhost}:{rport} - Exploit failed: The target is not exploitable.\n[*] Exploit completed, but no session was created."));
                }
                None => out.push("[*] Auxiliary module execution completed".into()),
            }
            (out.join("\n"), m.info_output.is_some())
        }
    }
}
