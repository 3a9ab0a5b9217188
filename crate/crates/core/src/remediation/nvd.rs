//! CVE lookups against the NVD 2.0 REST API, with a disk cache, and a
//! fixture-backed source for hermetic runs.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::cvss::{metrics_from_vector, VectorError};
use crate::gateway::openai::{is_retryable_status, RetryPolicy};
use crate::model::{is_cve_id, CvssMetrics};
use crate::net;

pub const DEFAULT_NVD_URL: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";
/// Environment variable with an optional NVD API key (sent as `apiKey`).
pub const NVD_API_KEY_ENV: &str = "PENHEAL_NVD_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    pub description: String,
    pub vector_string: String,
    pub metrics: CvssMetrics,
    pub source_timestamp: String,
}

#[derive(Debug, Error)]
pub enum LookupError {
    #[error("{0} is not a CVE id")]
    InvalidId(String),
    /// No record, or a record without CVSS v3 data.
    #[error("{0} not found")]
    NotFound(String),
    #[error("NVD rate limit persisted after {attempts} attempts for {id}")]
    RateLimited { id: String, attempts: u32 },
    #[error("NVD request for {id} failed: {message}")]
    Transport { id: String, message: String },
    #[error("NVD record for {id} is malformed: {message}")]
    Malformed { id: String, message: String },
    #[error(transparent)]
    Network(#[from] net::NetworkDenied),
}

pub trait CveSource {
    fn lookup(&self, cve_id: &str) -> Result<CveRecord, LookupError>;
}

fn check_id(cve_id: &str) -> Result<String, LookupError> {
    let id = cve_id.trim().to_ascii_uppercase();
    if is_cve_id(&id) {
        Ok(id)
    } else {
        Err(LookupError::InvalidId(cve_id.to_string()))
    }
}

fn malformed(id: &str, message: impl Into<String>) -> LookupError {
    LookupError::Malformed {
        id: id.to_string(),
        message: message.into(),
    }
}

/// Reads a CVE record out of an NVD 2.0 `cves` response. v3.1 metrics are
/// preferred over v3.0; a record with only v2 metrics is NotFound.
pub fn parse_nvd_response(cve_id: &str, body: &[u8]) -> Result<CveRecord, LookupError> {
    let json: Value = serde_json::from_slice(body).map_err(|e| malformed(cve_id, e.to_string()))?;
    let Some(cve) = json["vulnerabilities"]
        .as_array()
        .and_then(|v| v.iter().find(|x| x["cve"]["id"].as_str() == Some(cve_id)))
        .map(|x| &x["cve"])
    else {
        return Err(LookupError::NotFound(cve_id.to_string()));
    };
    let description = cve["descriptions"]
        .as_array()
        .and_then(|ds| {
            ds.iter()
                .find(|d| d["lang"] == "en")
                .or(ds.first())
                .and_then(|d| d["value"].as_str())
        })
        .unwrap_or_default()
        .to_string();
    let metric = ["cvssMetricV31", "cvssMetricV30"].iter().find_map(|k| {
        let list = cve["metrics"][k].as_array()?;
        list.iter()
            .find(|m| m["type"] == "Primary")
            .or(list.first())
            .and_then(|m| m["cvssData"]["vectorString"].as_str())
    });
    let Some(vector_string) = metric else {
        return Err(LookupError::NotFound(cve_id.to_string()));
    };
    let metrics = metrics_from_vector(vector_string)
        .map_err(|e: VectorError| malformed(cve_id, format!("{vector_string}: {e}")))?;
    Ok(CveRecord {
        cve_id: cve_id.to_string(),
        description,
        vector_string: vector_string.to_string(),
        metrics,
        source_timestamp: cve["lastModified"].as_str().unwrap_or_default().to_string(),
    })
}

/// Serves `<dir>/<CVE-ID>.json` files holding captured NVD responses.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    dir: PathBuf,
}

impl FixtureSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureSource { dir: dir.into() }
    }
}

impl CveSource for FixtureSource {
    fn lookup(&self, cve_id: &str) -> Result<CveRecord, LookupError> {
        let id = check_id(cve_id)?;
        match std::fs::read(self.dir.join(format!("{id}.json"))) {
            Ok(body) => parse_nvd_response(&id, &body),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(LookupError::NotFound(id)),
            Err(e) => Err(malformed(&id, e.to_string())),
        }
    }
}

/// Live NVD client. Responses are cached on disk, keyed by CVE id, and
/// never expire.
pub struct NvdClient {
    base_url: String,
    api_key: Option<String>,
    cache_dir: Option<PathBuf>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl NvdClient {
    pub fn new(base_url: &str, api_key: Option<String>, cache_dir: Option<PathBuf>) -> Self {
        NvdClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            cache_dir,
            // NVD asks unauthenticated clients to wait about six seconds
            retry: RetryPolicy {
                attempts: 3,
                initial_backoff: Duration::from_secs(6),
            },
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
        }
    }

    pub fn from_env(base_url: &str, cache_dir: Option<PathBuf>) -> Self {
        Self::new(base_url, std::env::var(NVD_API_KEY_ENV).ok().filter(|k| !k.is_empty()), cache_dir)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn cache_path(&self, id: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    fn fetch(&self, id: &str) -> Result<Vec<u8>, LookupError> {
        net::guard(&self.base_url)?;
        let mut attempt = 0;
        loop {
            let mut req = self.client.get(&self.base_url).query(&[("cveId", id)]);
            if let Some(k) = &self.api_key {
                req = req.header("apiKey", k);
            }
            let transport = |e: reqwest::Error| LookupError::Transport {
                id: id.to_string(),
                message: e.to_string(),
            };
            match req.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    if status == 404 {
                        return Err(LookupError::NotFound(id.to_string()));
                    }
                    if resp.status().is_success() {
                        return resp.bytes().map(|b| b.to_vec()).map_err(transport);
                    }
                    if !is_retryable_status(status) {
                        return Err(LookupError::Transport {
                            id: id.to_string(),
                            message: format!("HTTP {status}"),
                        });
                    }
                    if attempt + 1 >= self.retry.attempts {
                        return Err(LookupError::RateLimited {
                            id: id.to_string(),
                            attempts: self.retry.attempts,
                        });
                    }
                }
                Err(e) if attempt + 1 >= self.retry.attempts => return Err(transport(e)),
                Err(_) => {}
            }
            thread::sleep(self.retry.backoff(attempt));
            attempt += 1;
        }
    }
}

impl CveSource for NvdClient {
    fn lookup(&self, cve_id: &str) -> Result<CveRecord, LookupError> {
        let id = check_id(cve_id)?;
        if let Some(path) = self.cache_path(&id) {
            if let Ok(body) = std::fs::read(&path) {
                return parse_nvd_response(&id, &body);
            }
        }
        let body = self.fetch(&id)?;
        let record = parse_nvd_response(&id, &body);
        // cache anything NVD answered, including "no v3 data"
        if matches!(record, Ok(_) | Err(LookupError::NotFound(_))) {
            if let Some(path) = self.cache_path(&id) {
                write_cache(&path, &body);
            }
        }
        record
    }
}

fn write_cache(path: &Path, body: &[u8]) {
    if let Some(dir) = path.parent() {
        let _ = std::fs::create_dir_all(dir);
    }
    // write-then-rename keeps concurrent readers from seeing half a file
    let tmp = path.with_extension(format!("json.{}.tmp", std::process::id()));
    if std::fs::write(&tmp, body).is_ok() {
        let _ = std::fs::rename(&tmp, path);
    }
}

/// A source that knows nothing; every lookup is NotFound.
pub struct NoSource;

impl CveSource for NoSource {
    fn lookup(&self, cve_id: &str) -> Result<CveRecord, LookupError> {
        Err(LookupError::NotFound(check_id(cve_id)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(id: &str, metrics: Value) -> Vec<u8> {
        serde_json::to_vec(&serde_json::json!({
            "resultsPerPage": 1,
            "vulnerabilities": [{"cve": {
                "id": id,
                "lastModified": "2024-11-21T01:28:30.000",
                "descriptions": [{"lang": "es", "value": "x"}, {"lang": "en", "value": "backdoor"}],
                "metrics": metrics
            }}]
        }))
        .unwrap()
    }

    #[test]
    fn prefers_v31() {
        let body = response(
            "CVE-2000-0001",
            serde_json::json!({
                "cvssMetricV30": [{"type": "Primary", "cvssData": {"vectorString": "CVSS:3.0/AV:L/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"}}],
                "cvssMetricV31": [{"type": "Primary", "cvssData": {"vectorString": "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"}}]
            }),
        );
        let r = parse_nvd_response("CVE-2000-0001", &body).unwrap();
        assert_eq!(r.metrics.base_score, 9.8);
        assert_eq!(r.description, "backdoor");
    }

    #[test]
    fn v2_only_is_not_found() {
        let body = response(
            "CVE-2000-0002",
            serde_json::json!({"cvssMetricV2": [{"cvssData": {"vectorString": "AV:N/AC:M/Au:N/C:C/I:C/A:C"}}]}),
        );
        assert!(matches!(parse_nvd_response("CVE-2000-0002", &body), Err(LookupError::NotFound(_))));
    }

    #[test]
    fn empty_result_is_not_found() {
        let body = br#"{"resultsPerPage":0,"vulnerabilities":[]}"#;
        assert!(matches!(parse_nvd_response("CVE-2000-0003", body), Err(LookupError::NotFound(_))));
    }

    #[test]
    fn fixture_source_rejects_cve_na() {
        let src = FixtureSource::new("/nonexistent");
        assert!(matches!(src.lookup("CVE-NA"), Err(LookupError::InvalidId(_))));
        assert!(matches!(src.lookup("CVE-2099-0001"), Err(LookupError::NotFound(_))));
    }

    #[test]
    fn cached_record_needs_no_network() {
        let dir = tempfile::tempdir().unwrap();
        let body = response(
            "CVE-2000-0004",
            serde_json::json!({"cvssMetricV31": [{"type": "Primary", "cvssData": {"vectorString": "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N"}}]}),
        );
        std::fs::write(dir.path().join("CVE-2000-0004.json"), body).unwrap();
        // the base URL is unroutable: a cache miss would fail
        let client = NvdClient::new("http://127.0.0.1:9", None, Some(dir.path().to_path_buf()));
        assert_eq!(client.lookup("cve-2000-0004").unwrap().metrics.base_score, 7.5);
    }
}
