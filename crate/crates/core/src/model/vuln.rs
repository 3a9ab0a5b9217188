use std::fmt;

use serde::{Deserialize, Serialize};

use super::cvss::CvssMetrics;

/// Placeholder id for a weakness with no public CVE entry.
pub const CVE_NA: &str = "CVE-NA";

/// `CVE-YYYY-NNNN` with four or more trailing digits.
pub fn is_cve_id(id: &str) -> bool {
    let mut parts = id.split('-');
    matches!(
        (parts.next(), parts.next(), parts.next(), parts.next()),
        (Some("CVE"), Some(year), Some(num), None)
            if year.len() == 4
                && year.bytes().all(|b| b.is_ascii_digit())
                && num.len() >= 4
                && num.bytes().all(|b| b.is_ascii_digit())
    )
}

pub fn is_valid_vuln_id(id: &str) -> bool {
    id == CVE_NA || is_cve_id(id)
}

/// Canonical service name; folds the aliases scanners and models use for
/// the same protocol.
pub fn normalize_service(service: &str) -> String {
    let s = service.trim().to_ascii_lowercase();
    let s = s.trim_end_matches('?');
    match s {
        "netbios-ssn" | "microsoft-ds" | "smb" | "cifs" | "smbd" => "samba".into(),
        "www" | "html" | "http-proxy" | "apache" | "web" => "http".into(),
        "postgres" | "postgresql" | "psql" => "postgresql".into(),
        "domain" | "bind" => "dns".into(),
        "nfs" | "nfsd" | "mountd" => "nfs".into(),
        "irc" | "ircd" | "unrealircd" => "irc".into(),
        "vsftpd" => "ftp".into(),
        "openssh" => "ssh".into(),
        "postfix" => "smtp".into(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvssSource {
    NvdLookup,
    Estimated,
    Unset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vulnerability {
    pub id: String,
    pub service: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub exploitation_method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cvss: Option<CvssMetrics>,
    pub cvss_source: CvssSource,
}

impl Vulnerability {
    pub fn new(id: impl Into<String>, service: impl Into<String>, port: Option<u16>) -> Self {
        Vulnerability {
            id: id.into(),
            service: service.into(),
            port,
            description: String::new(),
            exploitation_method: String::new(),
            cvss: None,
            cvss_source: CvssSource::Unset,
        }
    }

    pub fn with_description(mut self, d: impl Into<String>) -> Self {
        self.description = d.into();
        self
    }

    pub fn with_method(mut self, m: impl Into<String>) -> Self {
        self.exploitation_method = m.into();
        self
    }

    pub fn key(&self) -> VulnKey {
        VulnKey {
            id: self.id.clone(),
            service: normalize_service(&self.service),
            port: self.port,
        }
    }

    pub fn has_public_cve(&self) -> bool {
        is_cve_id(&self.id)
    }

    pub fn base_score(&self) -> Option<f64> {
        self.cvss.as_ref().map(|m| m.base_score)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !is_valid_vuln_id(&self.id) {
            out.push(format!("{}: malformed vulnerability id", self.id));
        }
        if (self.cvss_source == CvssSource::Unset) != self.cvss.is_none() {
            out.push(format!("{}: cvss_source disagrees with cvss presence", self.id));
        }
        out
    }
}

/// Identity used for deduplication: the (id, service, port) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VulnKey {
    pub id: String,
    pub service: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
}

impl fmt::Display for VulnKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.port {
            Some(p) => write!(f, "{} ({}/{})", self.id, p, self.service),
            None => write!(f, "{} ({})", self.id, self.service),
        }
    }
}

/// Appends `incoming` records not already present (by key) to `into`;
/// returns how many were new.
pub fn merge_findings(into: &mut Vec<Vulnerability>, incoming: Vec<Vulnerability>) -> usize {
    let mut added = 0;
    for v in incoming {
        let k = v.key();
        if !into.iter().any(|e| e.key() == k) {
            into.push(v);
            added += 1;
        }
    }
    added
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cve_pattern() {
        assert!(is_cve_id("CVE-2011-2523"));
        assert!(is_cve_id("CVE-2021-123456"));
        assert!(!is_cve_id("CVE-11-2523"));
        assert!(!is_cve_id("CVE-2011-252"));
        assert!(!is_cve_id("cve-2011-2523"));
        assert!(!is_cve_id(CVE_NA));
        assert!(is_valid_vuln_id(CVE_NA));
    }

    #[test]
    fn dedup_uses_triple() {
        let mut all = vec![Vulnerability::new(CVE_NA, "http", Some(80))];
        let added = merge_findings(
            &mut all,
            vec![
                Vulnerability::new(CVE_NA, "www", Some(80)),
                Vulnerability::new(CVE_NA, "http", Some(8180)),
            ],
        );
        assert_eq!(added, 1);
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn source_and_metrics_must_agree() {
        let mut v = Vulnerability::new("CVE-2011-2523", "ftp", Some(21));
        assert!(v.validate().is_empty());
        v.cvss_source = CvssSource::Estimated;
        assert_eq!(v.validate().len(), 1);
    }
}
