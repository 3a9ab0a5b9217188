//! Extractor replies (`Exploited: ...` blocks) and the findings list shown
//! to the planner during counterfactual re-planning.

use std::sync::LazyLock;

use regex::Regex;

use crate::model::vuln::{merge_findings, CVE_NA};
use crate::model::Vulnerability;

static CVE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bCVE-(\d{4})-(\d{4,})\b").expect("static regex"));
static NA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(CVE[-_ ]?)?N/?A\b|unknown|none").expect("static regex"));
static PORT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d{1,5}").expect("static regex"));

#[derive(Debug, Default)]
struct Block {
    line: usize,
    id: Option<String>,
    service: Option<String>,
    port: Option<u16>,
    description: String,
    method: String,
}

fn field(line: &str) -> Option<(String, &str)> {
    let (k, v) = line.split_once(':')?;
    let key = k
        .trim()
        .trim_start_matches(['-', '*', ' '])
        .trim_matches('*')
        .trim()
        .to_ascii_lowercase();
    Some((key, v.trim().trim_matches('*').trim()))
}

fn vuln_id(value: &str) -> Option<String> {
    if let Some(c) = CVE.captures(value) {
        return Some(format!("CVE-{}-{}", &c[1], &c[2]));
    }
    NA.is_match(value.trim()).then(|| CVE_NA.to_string())
}

/// Parses extractor output into findings. `None` (or no blocks) is an empty
/// list; blocks without a usable id or service are skipped with a warning.
/// The result is deduplicated by (id, service, port), first block wins.
pub fn parse_extraction(text: &str) -> (Vec<Vulnerability>, Vec<String>) {
    let mut blocks: Vec<Block> = Vec::new();
    let mut warnings = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let Some((key, value)) = field(line) else { continue };
        match key.as_str() {
            "exploited" => blocks.push(Block {
                line: n + 1,
                id: vuln_id(value),
                ..Block::default()
            }),
            _ if blocks.is_empty() => {}
            "service" => blocks.last_mut().expect("non-empty").service = Some(value.to_string()),
            "port" => {
                blocks.last_mut().expect("non-empty").port =
                    PORT.find(value).and_then(|m| m.as_str().parse().ok())
            }
            "description" => blocks.last_mut().expect("non-empty").description = value.to_string(),
            "method" | "exploitation method" | "exploitation_method" => {
                blocks.last_mut().expect("non-empty").method = value.to_string()
            }
            _ => {}
        }
    }
    let mut found = Vec::new();
    for b in blocks {
        let Some(id) = b.id else {
            warnings.push(format!("extractor block at line {}: no vulnerability id", b.line));
            continue;
        };
        let Some(service) = b.service.filter(|s| !s.is_empty()) else {
            warnings.push(format!("extractor block at line {}: no service", b.line));
            continue;
        };
        let v = Vulnerability::new(id, service, b.port)
            .with_description(b.description)
            .with_method(b.method);
        merge_findings(&mut found, vec![v]);
    }
    (found, warnings)
}

/// Findings in the counterfactual list format:
///
/// ```text
/// Port 21/ftp:
///   vsFTPd version 2.3.4 backdoor (CVE-2011-2523)
/// ```
pub fn render_findings(findings: &[Vulnerability]) -> String {
    let mut out = String::new();
    for v in findings {
        let label = if v.id == CVE_NA { "Unknown CVE" } else { v.id.as_str() };
        let what = if v.description.is_empty() {
            v.exploitation_method.as_str()
        } else {
            v.description.as_str()
        };
        match v.port {
            Some(p) => out.push_str(&format!("Port {p}/{}:\n", v.service)),
            None => out.push_str(&format!("{}:\n", v.service)),
        }
        out.push_str(&format!("  {} ({label})\n", what.trim()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block() {
        let (v, w) = parse_extraction(
            "Exploited: CVE-2011-2523\nservice: ftp\nport: 21\ndescription: vsFTPd 2.3.4 backdoor\nmethod: exploit/unix/ftp/vsftpd_234_backdoor\n",
        );
        assert!(w.is_empty());
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].id.as_str(), v[0].service.as_str(), v[0].port), ("CVE-2011-2523", "ftp", Some(21)));
        assert_eq!(v[0].exploitation_method, "exploit/unix/ftp/vsftpd_234_backdoor");
    }

    #[test]
    fn cve_na_block() {
        let (v, _) = parse_extraction("Exploited: CVE-NA\nservice: http\nport: 80\ndescription: SQL injection\n");
        assert_eq!(v[0].id, "CVE-NA");
    }

    #[test]
    fn na_spellings() {
        for s in ["NA", "N/A", "cve-na", "Unknown CVE", "none disclosed"] {
            let (v, _) = parse_extraction(&format!("Exploited: {s}\nservice: telnet\nport: 23"));
            assert_eq!(v[0].id, "CVE-NA", "{s}");
        }
    }

    #[test]
    fn none_reply() {
        assert!(parse_extraction("None").0.is_empty());
        assert!(parse_extraction("").0.is_empty());
    }

    #[test]
    fn several_blocks_and_markdown() {
        let text = "Here you go:\n\n**Exploited:** CVE-2010-2075 (UnrealIRCd backdoor)\n- service: irc\n- port: 6667/tcp\n\nExploited: CVE-NA\nService: samba\nPort: 139\nMethod: usermap_script\n";
        let (v, w) = parse_extraction(text);
        assert!(w.is_empty(), "{w:?}");
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].port, Some(6667));
        assert_eq!(v[1].service, "samba");
    }

    #[test]
    fn duplicates_collapse() {
        let text = "Exploited: CVE-2011-2523\nservice: ftp\nport: 21\n\nExploited: CVE-2011-2523\nservice: vsftpd\nport: 21\n";
        assert_eq!(parse_extraction(text).0.len(), 1);
    }

    #[test]
    fn same_id_different_port_is_distinct() {
        let text = "Exploited: CVE-NA\nservice: ssh\nport: 22\n\nExploited: CVE-NA\nservice: telnet\nport: 23\n";
        assert_eq!(parse_extraction(text).0.len(), 2);
    }

    #[test]
    fn missing_service_is_skipped() {
        let (v, w) = parse_extraction("Exploited: CVE-2011-2523\nport: 21\n");
        assert!(v.is_empty());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn garbage_id_is_skipped() {
        let (v, w) = parse_extraction("Exploited: the ftp server\nservice: ftp\n");
        assert!(v.is_empty());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn missing_port_is_none() {
        let (v, _) = parse_extraction("Exploited: CVE-NA\nservice: http\n");
        assert_eq!(v[0].port, None);
    }

    #[test]
    fn fields_before_first_block_are_ignored() {
        let (v, _) = parse_extraction("service: dns\nExploited: CVE-NA\nservice: smtp\nport: 25\n");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].service, "smtp");
    }

    #[test]
    fn renders_counterfactual_list() {
        let f = vec![
            Vulnerability::new("CVE-2011-2523", "ftp", Some(21)).with_description("vsFTPd version 2.3.4 backdoor"),
            Vulnerability::new("CVE-2010-2075", "irc", Some(6667)).with_description("Trojaned version of UnrealIRCd"),
            Vulnerability::new("CVE-NA", "html", Some(80)).with_description("SQL injection points"),
        ];
        assert_eq!(
            render_findings(&f),
            "Port 21/ftp:\n  vsFTPd version 2.3.4 backdoor (CVE-2011-2523)\nPort 6667/irc:\n  Trojaned version of UnrealIRCd (CVE-2010-2075)\nPort 80/html:\n  SQL injection points (Unknown CVE)\n"
        );
    }
}
