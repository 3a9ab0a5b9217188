use std::path::PathBuf;
use std::sync::Arc;

use penheal_core::gateway::{AgentRole, ChatRequest, Gateway, RoleTag};
use penheal_core::model::{
    BudgetMode, CostPolicy, CvssSource, Recommendation, RecommendationGroup, RecommendationStatus, RunConfig,
    Vulnerability,
};
use penheal_core::remediation::advise::advise;
use penheal_core::remediation::cvss::metrics_from_vector;
use penheal_core::remediation::estimate::{enrich, estimate_vector, FALLBACK_VECTOR};
use penheal_core::remediation::evaluate::evaluate;
use penheal_core::remediation::knapsack::{budget_units, solve, Item};
use penheal_core::remediation::nvd::{CveSource, FixtureSource, LookupError, NoSource, NvdClient};
use penheal_core::remediation::{remediate, select, NOTHING_TO_REMEDIATE};
use penheal_core::scripted::{Scenario, ScriptedModel};
use proptest::prelude::*;

fn nvd() -> FixtureSource {
    FixtureSource::new(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/nvd"))
}

/// Replies from a list, one per request, in order.
fn replies(list: &[&str]) -> Gateway {
    let list: Vec<String> = list.iter().map(|s| s.to_string()).collect();
    let n = std::sync::Mutex::new(0usize);
    Gateway::new(Arc::new(move |_: &ChatRequest| {
        let mut i = n.lock().unwrap();
        let r = list.get(*i).cloned().unwrap_or_default();
        *i += 1;
        Ok(r)
    }))
}

fn scored(id: &str, service: &str, port: u16, vector: &str) -> Vulnerability {
    let mut v = Vulnerability::new(id, service, Some(port));
    v.cvss = Some(metrics_from_vector(vector).unwrap());
    v.cvss_source = CvssSource::Estimated;
    v
}

fn samba() -> Vulnerability {
    Vulnerability::new("CVE-NA", "samba", Some(139)).with_description("username map script command execution")
}

#[test]
fn nvd_fixture_scores_recompute_from_vector() {
    let r = nvd().lookup("CVE-2011-2523").unwrap();
    assert_eq!(r.metrics.base_score, 9.8);
    assert_eq!(metrics_from_vector(&r.vector_string).unwrap(), r.metrics);
    assert!(matches!(nvd().lookup("CVE-NA"), Err(LookupError::InvalidId(_))));
    assert!(matches!(nvd().lookup("CVE-2099-12345"), Err(LookupError::NotFound(_))));
    // only v2 metrics are published for this one
    assert!(matches!(nvd().lookup("CVE-2007-2447"), Err(LookupError::NotFound(_))));
}

#[test]
fn estimator_reply_is_parsed() {
    let mut w = Vec::new();
    let m = estimate_vector(&samba(), &replies(&["CVSS:3.0/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"]), &mut w).unwrap();
    assert_eq!(m.base_score, 9.8);
    assert!(w.is_empty());
    let m = estimate_vector(&samba(), &replies(&["cvss:3.1/av:n/ac:l/pr:l/ui:n/s:c/c:h/i:h/a:h"]), &mut w).unwrap();
    assert_eq!(m.base_score, 9.9);
}

#[test]
fn estimator_garbage_twice_uses_the_fallback() {
    let mut w = Vec::new();
    let gw = replies(&["high severity", "still not a vector"]);
    let m = estimate_vector(&samba(), &gw, &mut w).unwrap();
    assert_eq!(m, metrics_from_vector(FALLBACK_VECTOR).unwrap());
    assert_eq!(m.base_score, 7.3);
    assert_eq!(w.len(), 1);
    // the retry carries the parse error
    let t = gw.transcript();
    assert_eq!(t.len(), 2);
    assert!(t[1].last_user().unwrap().starts_with("That reply could not be parsed"));
}

#[test]
fn enrichment_prefers_nvd_and_estimates_the_rest() {
    let found = vec![
        Vulnerability::new("CVE-2011-2523", "ftp", Some(21)),
        Vulnerability::new("CVE-2007-2447", "samba", Some(139)),
    ];
    let mut w = Vec::new();
    let gw = replies(&["CVSS:3.1/AV:N/AC:H/PR:N/UI:N/S:U/C:H/I:H/A:H"]);
    let out = enrich(&found, &nvd(), &gw, &mut w).unwrap();
    assert_eq!(out[0].cvss_source, CvssSource::NvdLookup);
    assert!(out[0].description.contains("backdoor"));
    assert_eq!(out[1].cvss_source, CvssSource::Estimated);
    assert_eq!(out[1].base_score(), Some(8.1));
    assert_eq!(gw.transcript().len(), 1);
}

#[test]
fn advisor_listing_becomes_a_group() {
    let reply = "1. Update Samba using `sudo apt-get install --only-upgrade samba`\n2. Perform regular security audits\n3. Shut down the Samba service: `sudo systemctl stop smbd`\n4. Configure firewall using:\n   sudo ufw deny 139/tcp\n";
    let mut w = Vec::new();
    let g = advise(&samba(), &replies(&[reply]), &mut w).unwrap().unwrap();
    let heads: Vec<&str> = g.candidates.iter().map(|c| c.text.split_whitespace().next().unwrap()).collect();
    assert_eq!(heads, ["Update", "Perform", "Shut", "Configure"]);
    assert!(g.validate().is_empty());
}

#[test]
fn advisor_single_item_and_failure() {
    let mut w = Vec::new();
    let g = advise(&samba(), &replies(&["1. Patch it"]), &mut w).unwrap().unwrap();
    assert_eq!(g.candidates.len(), 1);
    let none = advise(&samba(), &replies(&["Patch it.", "Really, patch it."]), &mut w).unwrap();
    assert!(none.is_none());
    assert_eq!(w.len(), 1);
}

fn eval_with(reply: &[&str], rec: &str, findings: &[Vulnerability]) -> (Recommendation, Vec<String>) {
    let mut w = Vec::new();
    let key = findings[0].key();
    let r = evaluate(
        &Recommendation::proposed(rec, key.clone()),
        &key,
        findings,
        &CostPolicy::default(),
        &replies(reply),
        &mut w,
    )
    .unwrap();
    (r, w)
}

#[test]
fn full_fix_of_a_nine_point_zero() {
    let v = scored("CVE-NA", "samba", 139, "CVSS:3.1/AV:N/AC:L/PR:L/UI:R/S:C/C:H/I:H/A:H");
    assert_eq!(v.base_score(), Some(9.0));
    let (r, _) = eval_with(&["Effectiveness: Full\nAddresses: V1\nCost: Low\nRationale: patched."], "Update Samba", &[v]);
    assert_eq!((r.value, r.cost), (9.0, 2.0));
}

#[test]
fn password_change_against_a_misconfiguration_is_worth_nothing() {
    let v = scored("CVE-NA", "nfs", 2049, "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H");
    let (r, _) = eval_with(&["Effectiveness: Zero\nAddresses: none\nCost: Low\nRationale: unrelated."], "Change the root password", &[v]);
    assert_eq!(r.value, 0.0);
}

#[test]
fn multi_vulnerability_fix_sums_scores() {
    let a = scored("CVE-NA", "telnet", 23, "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H");
    let b = scored("CVE-NA", "ssh", 22, "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N");
    assert_eq!((a.base_score(), b.base_score()), (Some(9.8), Some(7.5)));
    let (r, _) = eval_with(&["Effectiveness: Full\nAddresses: V1, V2\nCost: 3\nRationale: both logins fixed."], "Change passwords", &[a.clone(), b.clone()]);
    assert_eq!(r.value, 17.3);
    assert_eq!(r.cost, 3.0);
    assert_eq!(r.target_vuln_ids, vec![a.key(), b.key()]);
    let (r, _) = eval_with(&["Effectiveness: Negative 10%\nAddresses: V1\nCost: High\nRationale: worse."], "Open port 23 wider", &[a, b]);
    assert_eq!((r.value, r.cost), (-0.98, 10.0));
}

#[test]
fn unusable_evaluation_falls_back_to_moderate_and_zero() {
    let v = scored("CVE-NA", "http", 80, "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H");
    let (r, w) = eval_with(&["Looks good to me.", "Really good."], "Add a WAF", std::slice::from_ref(&v));
    assert_eq!((r.value, r.cost), (0.0, 5.0));
    assert_eq!(w.len(), 1);
    let (r, w) = eval_with(&["Looks good to me.", "Effectiveness: Partial 50%\nCost: Low"], "Add a WAF", &[v]);
    assert_eq!((r.value, r.cost), (4.9, 2.0));
    assert!(w.is_empty());
}

fn samba_candidates() -> Vec<RecommendationGroup> {
    let key = samba().key();
    let rec = |t: &str, c: f64, v: f64| {
        let mut r = Recommendation::proposed(t, key.clone());
        r.cost = c;
        r.value = v;
        r
    };
    vec![RecommendationGroup {
        vuln_id: key.clone(),
        candidates: vec![
            rec("Update Samba", 2.0, 9.0),
            rec("Perform regular security audits", 2.0, 3.0),
            rec("Shut down the Samba service", 10.0, 9.0),
            rec("Configure firewall", 2.0, 9.0),
        ],
    }]
}

#[test]
fn samba_candidates_budget_three() {
    let mut groups = samba_candidates();
    let b = select(&mut groups, 3.0);
    let adopted: Vec<&str> = groups[0]
        .candidates
        .iter()
        .filter(|c| c.status == RecommendationStatus::Adopted)
        .map(|c| c.text.as_str())
        .collect();
    assert_eq!(adopted.len(), 1);
    assert!(adopted[0] == "Update Samba" || adopted[0] == "Configure firewall");
    assert_eq!(groups[0].candidates[1].status, RecommendationStatus::Discarded);
    assert_eq!(groups[0].candidates[2].status, RecommendationStatus::Discarded);
    assert_eq!(b.total_value, 9.0);
}

#[test]
fn zero_findings_note_nothing_to_remediate() {
    let gw = replies(&[]);
    let out = remediate(&[], &RunConfig::new("10.0.2.4"), &NoSource, &gw).unwrap();
    assert!(out.groups.is_empty());
    assert_eq!(out.warnings, vec![NOTHING_TO_REMEDIATE]);
    assert!(gw.transcript().is_empty());
}

fn scripted() -> Gateway {
    Gateway::new(Arc::new(ScriptedModel::new(Scenario::Golden)))
}

#[test]
fn one_finding_gets_forty_capacity_units() {
    let found = vec![Vulnerability::new("CVE-2011-2523", "ftp", Some(21))];
    let out = remediate(&found, &RunConfig::new("10.0.2.4"), &nvd(), &scripted()).unwrap();
    assert_eq!(out.budget.capacity, 4.0);
    assert_eq!(budget_units(out.budget.capacity), 40);
    assert!(out.budget.used <= 4.0);
    assert_eq!(out.selected().len(), 1);
}

fn golden_findings() -> Vec<Vulnerability> {
    vec![
        Vulnerability::new("CVE-2011-2523", "ftp", Some(21)).with_description("vsFTPd version 2.3.4 backdoor"),
        Vulnerability::new("CVE-2010-2075", "irc", Some(6667)).with_description("UnrealIRCd 3.2.8.1 backdoor command execution"),
        Vulnerability::new("CVE-2007-2447", "samba", Some(139)).with_description("Samba username map script command execution"),
        Vulnerability::new("CVE-NA", "telnet", Some(23)).with_description("Default credentials msfadmin/msfadmin accepted"),
        Vulnerability::new("CVE-NA", "http", Some(80)).with_description("SQL injection in the Mutillidae user-info page"),
        Vulnerability::new("CVE-NA", "ssh", Some(22)).with_description("Weak password for the msfadmin account"),
    ]
}

#[test]
fn golden_selection_is_frozen() {
    let out = remediate(&golden_findings(), &RunConfig::new("10.0.2.4"), &nvd(), &scripted()).unwrap();
    let adopted: Vec<(String, f64, f64)> = out
        .groups
        .iter()
        .map(|g| {
            let a = g.adopted().unwrap();
            (a.text.split_whitespace().take(2).collect::<Vec<_>>().join(" "), a.cost, a.value)
        })
        .collect();
    let expected = [
        ("Remove the", 2.0, 9.8),
        ("Upgrade UnrealIRCd", 2.0, 9.8),
        ("Update Samba", 2.0, 9.8),
        ("Change the", 2.0, 18.9),
        ("Remove the", 10.0, 8.2),
        ("Change the", 2.0, 18.9),
    ];
    let expected: Vec<(String, f64, f64)> = expected.iter().map(|(t, c, v)| (t.to_string(), *c, *v)).collect();
    assert_eq!(adopted, expected);
    assert_eq!((out.budget.capacity, out.budget.used, out.budget.total_value), (24.0, 20.0, 75.4));
    for g in &out.groups {
        assert!(g.validate().is_empty());
    }
    // the fail2ban evaluation needed a re-prompt and the SQLi estimate a retry,
    // yet neither left a warning
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);
}

#[test]
fn evaluator_off_adopts_first_suggestions() {
    let mut cfg = RunConfig::new("10.0.2.4");
    cfg.components.evaluator = false;
    let out = remediate(&golden_findings(), &cfg, &nvd(), &scripted()).unwrap();
    for g in &out.groups {
        assert_eq!(g.candidates[0].status, RecommendationStatus::Adopted);
    }
    // the http group's first suggestion costs 5 and is now adopted
    assert!(out.selected().iter().any(|r| r.cost == 5.0));
}

#[test]
fn per_group_budget_mode() {
    let mut cfg = RunConfig::new("10.0.2.4");
    cfg.budget_mode = BudgetMode::PerGroup;
    let out = remediate(&golden_findings(), &cfg, &nvd(), &scripted()).unwrap();
    // 4 units per group cannot afford removing Mutillidae (10), so the
    // parameterized-query fix (5) does not fit either; audits win
    let http = out.groups.iter().find(|g| g.vuln_id.service == "http").unwrap();
    assert!(http.adopted().unwrap().text.starts_with("Perform regular security audits"));
    assert!(out.selected().iter().all(|r| r.cost <= 4.0));
}

#[test]
fn live_client_respects_the_network_guard() {
    penheal_core::net::deny_all(true);
    let client = NvdClient::new("https://services.nvd.nist.gov/rest/json/cves/2.0", None, None);
    let err = client.lookup("CVE-2011-2523").unwrap_err();
    penheal_core::net::deny_all(false);
    assert!(matches!(err, LookupError::Network(_)), "{err}");
}

#[test]
fn requests_use_the_configured_roles() {
    let gw = scripted();
    let _ = remediate(&golden_findings()[..1], &RunConfig::new("10.0.2.4"), &NoSource, &gw).unwrap();
    let roles: Vec<AgentRole> = gw.transcript().iter().map(|e| e.role).collect();
    assert_eq!(roles[0], AgentRole::Estimator);
    assert_eq!(roles[1], AgentRole::Advisor);
    assert!(roles[2..].iter().all(|r| *r == AgentRole::Evaluator));
    for e in gw.transcript() {
        assert_eq!(e.request[0].role_tag, RoleTag::System);
    }
}

fn instance() -> impl Strategy<Value = (Vec<Vec<Item>>, f64, f64)> {
    let item = (prop::sample::select(vec![2.0, 5.0, 10.0]), 0u32..=1800).prop_map(|(cost, v)| Item {
        cost,
        value: v as f64 / 100.0,
    });
    (prop::collection::vec(prop::collection::vec(item, 1..=4), 0..=4), 0u32..=40, 0u32..=40)
        .prop_map(|(g, a, b)| (g, a.min(b) as f64, a.max(b) as f64))
}

proptest! {
    #[test]
    fn more_budget_never_lowers_value((groups, small, large) in instance()) {
        let lo = solve(&groups, small);
        let hi = solve(&groups, large);
        prop_assert!(hi.total_value >= lo.total_value);
        prop_assert!(lo.total_cost <= small + 1e-9);
    }
}
