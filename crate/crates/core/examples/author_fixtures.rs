//! Regenerates the hermetic fixtures under `fixtures/`: NVD records, run
//! configs, the ground-truth table and one recorded transcript per
//! scenario. The transcripts come from the scripted model driving the
//! simulated host.
//!
//!     cargo run -p penheal-core --example author_fixtures [OUT_DIR]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use penheal_core::gateway::Gateway;
use penheal_core::knowledge::bundled_index;
use penheal_core::model::RunConfig;
use penheal_core::pentest::SimBackend;
use penheal_core::pipeline::run_pipeline;
use penheal_core::remediation::nvd::FixtureSource;
use penheal_core::remediation::render_recommendations;
use penheal_core::scoring::render_table;
use penheal_core::scripted::{Scenario, ScriptedModel};
use penheal_core::sim::{metasploitable2, Simulator};
use serde_json::json;

fn nvd_record(id: &str, modified: &str, description: &str, metrics: serde_json::Value) -> serde_json::Value {
    json!({
        "resultsPerPage": 1,
        "startIndex": 0,
        "totalResults": 1,
        "format": "NVD_CVE",
        "version": "2.0",
        "vulnerabilities": [{"cve": {
            "id": id,
            "sourceIdentifier": "cve@mitre.org",
            "lastModified": modified,
            "vulnStatus": "Modified",
            "descriptions": [{"lang": "en", "value": description}],
            "metrics": metrics
        }}]
    })
}

fn v31(vector: &str, score: f64) -> serde_json::Value {
    json!({"cvssMetricV31": [{
        "source": "nvd@nist.gov",
        "type": "Primary",
        "cvssData": {"version": "3.1", "vectorString": vector, "baseScore": score}
    }]})
}

fn write_nvd(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let critical = "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H";
    let records = [
        nvd_record(
            "CVE-2011-2523",
            "2024-11-21T01:28:30.000",
            "vsftpd 2.3.4 downloaded between 20110630 and 20110703 contains a backdoor which opens a shell on port 6200/tcp.",
            v31(critical, 9.8),
        ),
        nvd_record(
            "CVE-2010-2075",
            "2024-11-21T01:15:51.000",
            "UnrealIRCd 3.2.8.1, as distributed on certain mirror sites from November 2009 through June 2010, contains an externally introduced modification (Trojan Horse) in the DEBUG3_DOLOG_SYSTEM macro, which allows remote attackers to execute arbitrary commands.",
            v31(critical, 9.8),
        ),
        nvd_record(
            "CVE-2012-1823",
            "2025-02-07T17:15:20.000",
            "sapi/cgi/cgi_main.c in PHP before 5.3.12 and 5.4.x before 5.4.2, when configured as a CGI script, does not properly handle query strings that lack an = character, which allows remote attackers to execute arbitrary code by placing command-line options in the query string.",
            v31(critical, 9.8),
        ),
        nvd_record(
            "CVE-2007-2447",
            "2024-11-21T00:30:48.000",
            "The MS-RPC functionality in smbd in Samba 3.0.0 through 3.0.25rc3 allows remote attackers to execute arbitrary commands via shell metacharacters involving the SamrChangePassword function, when the \"username map script\" smb.conf option is enabled.",
            json!({"cvssMetricV2": [{
                "source": "nvd@nist.gov",
                "type": "Primary",
                "cvssData": {"version": "2.0", "vectorString": "AV:N/AC:M/Au:N/C:C/I:C/A:C", "baseScore": 9.3}
            }]}),
        ),
    ];
    for r in records {
        let id = r["vulnerabilities"][0]["cve"]["id"].as_str().unwrap().to_string();
        fs::write(dir.join(format!("{id}.json")), serde_json::to_string_pretty(&r).unwrap() + "\n").unwrap();
    }
}

fn record(out: &Path, name: &str, scenario: Scenario) {
    let dir = out.join(name);
    fs::create_dir_all(&dir).unwrap();
    let config = RunConfig::new("10.0.2.4");
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config).unwrap() + "\n").unwrap();
    let transcript = dir.join("transcript.jsonl");
    let _ = fs::remove_file(&transcript);
    let gw = Gateway::record_mode(Arc::new(ScriptedModel::new(scenario)), &transcript)
        .unwrap()
        .with_models(config.tier_models.clone())
        .with_role_tiers(config.role_models.clone());
    let kb = bundled_index();
    let sim = Simulator::new(metasploitable2());
    let truth = sim.ground_truth();
    let mut backend = SimBackend::new(sim);
    let source = FixtureSource::new(out.join("nvd"));
    let run = run_pipeline(name, &config, &gw, Some(&kb), &mut backend, &source, Some(&truth));
    println!("== {name}: {:?}, {} iterations", run.artifact.status, run.pentest.iterations.len());
    print!("{}", run.artifact.plan.render());
    for f in &run.artifact.findings {
        println!("finding {} {:?} {:?}", f.key(), f.base_score(), f.cvss_source);
    }
    for w in &run.artifact.warnings {
        println!("warning: {w}");
    }
    print!("{}", render_recommendations(&run.artifact.recommendations, run.artifact.budget.as_ref()));
    if let Some(r) = &run.artifact.score_report {
        print!("{}", render_table(r));
    }
    println!("{} exchanges recorded", gw.transcript().len());
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    write_nvd(&out.join("nvd"));
    let truth = metasploitable2().ground_truth;
    fs::write(out.join("truth.json"), serde_json::to_string_pretty(&truth).unwrap() + "\n").unwrap();
    record(&out, "golden", Scenario::Golden);
    record(&out, "no_exploit", Scenario::NoExploit);
}
