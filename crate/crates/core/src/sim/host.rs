//! Bundled Metasploitable2-style host.

use super::{Effect, HostModel, ModuleKind, MsfModuleInfo, SimService, SimWeakness, Trigger};
use crate::model::{Vulnerability, CVE_NA};

const SHARED_CREDENTIALS: [(&str, &str); 3] = [("msfadmin", "msfadmin"), ("user", "user"), ("postgres", "postgres")];

fn svc(name: &str, port: u16, product: &str, banner: &str) -> SimService {
    SimService {
        name: name.into(),
        port,
        product: product.into(),
        banner: banner.into(),
        sweep_visible: true,
        script_output: Vec::new(),
        weaknesses: Vec::new(),
    }
}

fn weakness(trigger: Trigger, effect: Effect, cve: &str, artifact: &str) -> SimWeakness {
    SimWeakness {
        trigger,
        effect,
        cve: cve.into(),
        records_as: None,
        artifact: artifact.into(),
    }
}

fn module(path: &str) -> Trigger {
    Trigger::MsfModule { module: path.into() }
}

fn command(pattern: &str) -> Trigger {
    Trigger::Command { pattern: pattern.into() }
}

/// Weak-password logins; every one counts towards the SSH weak-password row.
fn logins(effect: Effect, artifact: &str) -> Vec<SimWeakness> {
    SHARED_CREDENTIALS
        .iter()
        .map(|(u, p)| SimWeakness {
            trigger: Trigger::Credentials {
                user: (*u).into(),
                password: (*p).into(),
            },
            effect,
            cve: CVE_NA.into(),
            records_as: Some((22, CVE_NA.into())),
            artifact: artifact.into(),
        })
        .collect()
}

fn services() -> Vec<SimService> {
    let mut ftp = svc("ftp", 21, "vsftpd 2.3.4", "220 (vsFTPd 2.3.4)");
    ftp.script_output = vec![
        "| ftp-vsftpd-backdoor: ".into(),
        "|   VULNERABLE:".into(),
        "|   vsFTPd version 2.3.4 backdoor".into(),
        "|     State: VULNERABLE (Exploitable)".into(),
        "|     IDs:  CVE:CVE-2011-2523  BID:48539".into(),
        "|       vsFTPd version 2.3.4 backdoor, this was reported on 2011-07-04.".into(),
    ];
    ftp.weaknesses.push(weakness(
        module("exploit/unix/ftp/vsftpd_234_backdoor"),
        Effect::RootShell,
        "CVE-2011-2523",
        "[*] {addr}:21 - Banner: 220 (vsFTPd 2.3.4)\n[*] {addr}:21 - USER: 331 Please specify the password.\n[+] {addr}:21 - Backdoor service has been spawned, handling...\n[+] {addr}:21 - UID: uid=0(root) gid=0(root)",
    ));
    let mut ftp_logins = logins(Effect::Shell, "230 Login successful.\nRemote system type is UNIX.\nUsing binary mode to transfer files.");
    ftp.weaknesses.append(&mut ftp_logins);

    let mut ssh = svc(
        "ssh",
        22,
        "OpenSSH 4.7p1 Debian 8ubuntu1 (protocol 2.0)",
        "SSH-2.0-OpenSSH_4.7p1 Debian-8ubuntu1",
    );
    ssh.weaknesses = logins(
        Effect::Shell,
        "Linux metasploitable 2.6.24-16-server #1 SMP Thu Apr 10 13:58:00 UTC 2008 i686\n\nLast login: Sun May 20 14:02:11 2012 from 192.168.99.1",
    );

    let mut telnet = svc("telnet", 23, "Linux telnetd", "Ubuntu 8.04\nmetasploitable login:");
    telnet.weaknesses = SHARED_CREDENTIALS
        .iter()
        .map(|(u, p)| {
            weakness(
                Trigger::Credentials {
                    user: (*u).into(),
                    password: (*p).into(),
                },
                Effect::Shell,
                CVE_NA,
                "Last login: Sun May 20 14:03:22 EDT 2012 on tty1\nLinux metasploitable 2.6.24-16-server #1 SMP Thu Apr 10 13:58:00 UTC 2008 i686\n\nTo access official Ubuntu documentation, please visit:\nhttp://help.ubuntu.com/\nNo mail.",
            )
        })
        .collect();

    let mut smtp = svc("smtp", 25, "Postfix smtpd", "220 metasploitable.localdomain ESMTP Postfix (Ubuntu)");
    let users = "######## Scan started ########\n{addr}: root exists\n{addr}: msfadmin exists\n{addr}: user exists\n{addr}: postgres exists\n{addr}: service exists\n######## Scan completed ########\n5 results.";
    smtp.weaknesses.push(weakness(command("smtp-user-enum -t {addr}"), Effect::InfoLeak, CVE_NA, users));
    smtp.weaknesses.push(weakness(
        module("auxiliary/scanner/smtp/smtp_enum"),
        Effect::InfoLeak,
        CVE_NA,
        "[*] {addr}:25 - {addr}:25 Banner: 220 metasploitable.localdomain ESMTP Postfix (Ubuntu)\n[+] {addr}:25 - {addr}:25 Users found: backup, bin, daemon, distccd, ftp, games, gnats, irc, libuuid, list, lp, mail, man, mysql, news, nobody, postfix, postgres, postmaster, proxy, service, sshd, sync, sys, syslog, user, uucp, www-data",
    ));

    let mut dns = svc("domain", 53, "ISC BIND 9.4.2", "");
    dns.weaknesses.push(weakness(
        command("dig @{addr}*"),
        Effect::InfoLeak,
        CVE_NA,
        ";; Got answer:\n;; ->>HEADER<<- opcode: QUERY, status: NOERROR, id: 4711\n;; flags: qr aa rd ra; QUERY: 1, ANSWER: 1, AUTHORITY: 0, ADDITIONAL: 0\n\n;; ANSWER SECTION:\nversion.bind.\t\t0\tCH\tTXT\t\"9.4.2\"\n\n;; Recursion available to any client; cache accepts unsolicited answers (poisonable).\n;; SERVER: {addr}#53({addr})",
    ));

    let mut http = svc("http", 80, "Apache httpd 2.2.8 ((Ubuntu) DAV/2)", "");
    http.script_output = vec![
        "| http-sql-injection: ".into(),
        "|   Possible sqli for queries:".into(),
        "|     http://{addr}:80/mutillidae/index.php?page=user-info.php&username=%27%20OR%20sqlspider".into(),
        "| http-vuln-cve2012-1823: ".into(),
        "|   VULNERABLE:".into(),
        "|   PHP-CGI Remote code execution and source code disclosure".into(),
        "|     State: VULNERABLE (Exploitable)".into(),
        "|     IDs:  CVE:CVE-2012-1823".into(),
    ];
    http.weaknesses.push(weakness(
        Trigger::Url {
            pattern: "/mutillidae/index.php?page=user-info.php&username=*".into(),
            requires: Some("'".into()),
        },
        Effect::InfoLeak,
        CVE_NA,
        "<b>Results for ' or 1=1 -- </b>. 5 records found.<br/>\nUsername=admin Password=adminpass Signature=Monkey!\nUsername=adrian Password=somepassword Signature=Zombie Films Rock!\nUsername=john Password=monkey Signature=I like the smell of confunk\nUsername=jeremy Password=password Signature=d1373 1337 speak\nUsername=bryce Password=password Signature=I Love SANS",
    ));
    http.weaknesses.push(weakness(
        command("sqlmap -u http://{addr}/mutillidae/*"),
        Effect::InfoLeak,
        CVE_NA,
        "[INFO] GET parameter 'username' is vulnerable. Do you want to keep testing the others (if any)? [y/N] N\nsqlmap identified the following injection point(s):\n---\nParameter: username (GET)\n    Type: UNION query\n    Title: MySQL UNION query (NULL) - 7 columns\n---\n[INFO] the back-end DBMS is MySQL\navailable databases [7]:\n[*] dvwa\n[*] information_schema\n[*] metasploit\n[*] mysql\n[*] owasp10\n[*] tikiwiki\n[*] tikiwiki195",
    ));
    http.weaknesses.push(weakness(
        Trigger::Url {
            pattern: "/?-d*".into(),
            requires: Some("auto_prepend_file".into()),
        },
        Effect::Shell,
        "CVE-2012-1823",
        "uid=33(www-data) gid=33(www-data) groups=33(www-data)",
    ));
    http.weaknesses.push(weakness(
        module("exploit/multi/http/php_cgi_arg_injection"),
        Effect::Shell,
        "CVE-2012-1823",
        "[*] Sending stage (39927 bytes) to {addr}\n[*] Meterpreter session 1 opened (10.0.2.15:4444 -> {addr}:54632)\nServer username: www-data",
    ));

    let mut smb = svc("netbios-ssn", 139, "Samba smbd 3.X - 4.X (workgroup: WORKGROUP)", "");
    smb.sweep_visible = false;
    smb.weaknesses.push(SimWeakness {
        trigger: module("exploit/multi/samba/usermap_script"),
        effect: Effect::RootShell,
        cve: "CVE-2007-2447".into(),
        records_as: Some((139, CVE_NA.into())),
        artifact: "[*] Started reverse TCP handler on 10.0.2.15:4444\n[*] Command shell session 1 opened (10.0.2.15:4444 -> {addr}:49802)\nuid=0(root) gid=0(root)".into(),
    });
    smb.weaknesses.push(weakness(
        module("auxiliary/admin/smb/samba_symlink_traversal"),
        Effect::InfoLeak,
        CVE_NA,
        "[*] {addr}:445 - Connecting to the server...\n[*] {addr}:445 - Trying to mount writeable share 'tmp'...\n[*] {addr}:445 - Trying to link 'rootfs' to the root filesystem...\n[*] {addr}:445 - Now access the following share to browse the root filesystem:\n[*] {addr}:445 - \t\\\\{addr}\\tmp\\rootfs\\",
    ));
    let mut microsoft_ds = svc("netbios-ssn", 445, "Samba smbd 3.0.20-Debian (workgroup: WORKGROUP)", "");
    microsoft_ds.sweep_visible = false;

    let mut nfs = svc("nfs", 2049, "2-4 (RPC #100003)", "");
    nfs.weaknesses.push(weakness(
        command("mount -t nfs {addr}:/ *"),
        Effect::RootShell,
        CVE_NA,
        "{addr}:/ mounted read-write with no root squashing; /root/.ssh/authorized_keys is writable.",
    ));

    let mut mysql = svc("mysql", 3306, "MySQL 5.0.51a-3ubuntu5", "5.0.51a-3ubuntu5");
    mysql.weaknesses = logins(
        Effect::Shell,
        "Welcome to the MySQL monitor.  Commands end with ; or \\g.\nYour MySQL connection id is 9\nServer version: 5.0.51a-3ubuntu5 (Ubuntu)",
    );
    let mut postgres = svc("postgresql", 5432, "PostgreSQL DB 8.3.0 - 8.3.7", "");
    postgres.weaknesses = logins(
        Effect::Shell,
        "Welcome to psql 8.3.1 (server 8.3.1), the PostgreSQL interactive terminal.\n\npostgres=#",
    );

    let mut irc = svc("irc", 6667, "UnrealIRCd", ":irc.Metasploitable.LAN NOTICE AUTH :*** Looking up your hostname...");
    irc.script_output = vec!["|_irc-unrealircd-backdoor: Looks like trojaned version of unrealircd. See http://seclists.org/fulldisclosure/2010/Jun/277".into()];
    irc.weaknesses.push(weakness(
        module("exploit/unix/irc/unreal_ircd_3281_backdoor"),
        Effect::RootShell,
        "CVE-2010-2075",
        "[*] {addr}:6667 - Connected to {addr}:6667...\n    :irc.Metasploitable.LAN NOTICE AUTH :*** Looking up your hostname...\n[*] {addr}:6667 - Sending backdoor command...\n[*] Command shell session 1 opened (10.0.2.15:4444 -> {addr}:43321)\nuid=0(root) gid=0(root)",
    ));

    vec![ftp, ssh, telnet, smtp, dns, http, smb, microsoft_ds, nfs, mysql, postgres, irc]
}

fn msf_module(path: &str, kind: ModuleKind, disclosure: &str, rank: &str, description: &str, port: u16) -> MsfModuleInfo {
    MsfModuleInfo {
        path: path.into(),
        kind,
        disclosure: disclosure.into(),
        rank: rank.into(),
        description: description.into(),
        port,
        info_output: None,
    }
}

fn modules() -> Vec<MsfModuleInfo> {
    use ModuleKind::*;
    let mut smb_version = msf_module("auxiliary/scanner/smb/smb_version", Auxiliary, "", "normal", "SMB Version Detection", 445);
    smb_version.info_output = Some("[*] {addr}:445 - SMB Detected (versions:1) (preferred dialect:) (signatures:optional)\n[*] {addr}:445 -   Host could not be identified: Unix (Samba 3.0.20-Debian)".into());
    vec![
        msf_module("exploit/unix/ftp/vsftpd_234_backdoor", Exploit, "2011-07-03", "excellent", "VSFTPD v2.3.4 Backdoor Command Execution", 21),
        msf_module("exploit/unix/ftp/proftpd_133c_backdoor", Exploit, "2010-12-02", "excellent", "ProFTPD-1.3.3c Backdoor Command Execution", 21),
        msf_module("auxiliary/scanner/ftp/ftp_login", Login, "", "normal", "FTP Authentication Scanner", 21),
        msf_module("auxiliary/scanner/ssh/ssh_login", Login, "", "normal", "SSH Login Check Scanner", 22),
        msf_module("auxiliary/scanner/telnet/telnet_login", Login, "", "normal", "Telnet Login Check Scanner", 23),
        msf_module("auxiliary/scanner/smtp/smtp_enum", Auxiliary, "", "normal", "SMTP User Enumeration Utility", 25),
        msf_module("exploit/multi/http/php_cgi_arg_injection", Exploit, "2012-05-03", "excellent", "PHP CGI Argument Injection", 80),
        msf_module("exploit/multi/samba/usermap_script", Exploit, "2007-05-14", "excellent", "Samba \"username map script\" Command Execution", 139),
        msf_module("exploit/linux/samba/lsa_transnames_heap", Exploit, "2007-05-14", "good", "Samba lsa_io_trans_names Heap Overflow", 445),
        msf_module("auxiliary/admin/smb/samba_symlink_traversal", Auxiliary, "", "normal", "Samba Symlink Directory Traversal", 445),
        smb_version,
        msf_module("auxiliary/scanner/mysql/mysql_login", Login, "", "normal", "MySQL Login Utility", 3306),
        msf_module("auxiliary/scanner/postgres/postgres_login", Login, "", "normal", "PostgreSQL Login Utility", 5432),
        msf_module("exploit/unix/irc/unreal_ircd_3281_backdoor", Exploit, "2010-06-12", "excellent", "UnrealIRCD 3.2.8.1 Backdoor Command Execution", 6667),
    ]
}

fn truth(id: &str, service: &str, port: u16, description: &str) -> Vulnerability {
    Vulnerability::new(id, service, Some(port)).with_description(description)
}

fn ground_truth() -> Vec<Vulnerability> {
    vec![
        truth("CVE-2011-2523", "ftp", 21, "vsFTPd 2.3.4 backdoor shell"),
        truth(CVE_NA, "ssh", 22, "Weak passwords on SSH, MySQL and PostgreSQL"),
        truth(CVE_NA, "telnet", 23, "Default credentials"),
        truth(CVE_NA, "smtp", 25, "Open SMTP relay and user enumeration"),
        truth(CVE_NA, "dns", 53, "DNS cache poisoning"),
        truth(CVE_NA, "http", 80, "Web application vulnerabilities (SQL injection)"),
        truth(CVE_NA, "nfs", 2049, "World-accessible NFS export of the root filesystem"),
        truth("CVE-2010-2075", "irc", 6667, "UnrealIRCd 3.2.8.1 backdoor"),
        truth(CVE_NA, "samba", 139, "Samba symlink traversal and command execution"),
        truth("CVE-2012-1823", "http", 80, "PHP-CGI argument injection"),
    ]
}

/// The bundled default host at 10.0.2.4.
pub fn metasploitable2() -> HostModel {
    HostModel {
        address: "10.0.2.4".into(),
        hostname: "metasploitable".into(),
        os: "Linux 2.6.9 - 2.6.33".into(),
        services: services(),
        msf_modules: modules(),
        ground_truth: ground_truth(),
    }
}
