//! Benchmark scores for a run: detection coverage, remediation
//! effectiveness, remediation cost, and their aggregate.

use thiserror::Error;

use crate::model::{
    normalize_service, AggregationMode, Recommendation, RecommendationStatus, ScoreReport,
    Vulnerability, CVE_NA,
};

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("ground truth is empty")]
    EmptyTruth,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchReport {
    pub matched: Vec<(Vulnerability, Vulnerability)>,
    pub unmatched_found: Vec<Vulnerability>,
    pub unmatched_truth: Vec<Vulnerability>,
    pub truth_count: usize,
}

/// Greedy matching: exact CVE id first, then (service, port) where either
/// side is `CVE-NA`. Each truth entry is consumed at most once.
pub fn match_findings(found: &[Vulnerability], truth: &[Vulnerability]) -> MatchReport {
    let mut consumed = vec![false; truth.len()];
    let mut assigned: Vec<Option<usize>> = vec![None; found.len()];

    for (fi, f) in found.iter().enumerate() {
        if f.id == CVE_NA {
            continue;
        }
        if let Some(ti) = (0..truth.len()).find(|&ti| !consumed[ti] && truth[ti].id == f.id) {
            consumed[ti] = true;
            assigned[fi] = Some(ti);
        }
    }
    for (fi, f) in found.iter().enumerate() {
        if assigned[fi].is_some() {
            continue;
        }
        let svc = normalize_service(&f.service);
        let hit = (0..truth.len()).find(|&ti| {
            let t = &truth[ti];
            !consumed[ti]
                && (f.id == CVE_NA || t.id == CVE_NA)
                && t.port == f.port
                && normalize_service(&t.service) == svc
        });
        if let Some(ti) = hit {
            consumed[ti] = true;
            assigned[fi] = Some(ti);
        }
    }

    let mut report = MatchReport {
        truth_count: truth.len(),
        ..Default::default()
    };
    for (fi, f) in found.iter().enumerate() {
        match assigned[fi] {
            Some(ti) => report.matched.push((f.clone(), truth[ti].clone())),
            None => report.unmatched_found.push(f.clone()),
        }
    }
    report.unmatched_truth = truth
        .iter()
        .zip(&consumed)
        .filter(|(_, c)| !**c)
        .map(|(t, _)| t.clone())
        .collect();
    report
}

pub fn detection_coverage(m: &MatchReport) -> Result<f64, ScoringError> {
    if m.truth_count == 0 {
        return Err(ScoringError::EmptyTruth);
    }
    Ok(10.0 * m.matched.len() as f64 / m.truth_count as f64)
}

fn adopted(selected: &[Recommendation]) -> impl Iterator<Item = &Recommendation> {
    selected
        .iter()
        .filter(|r| r.status == RecommendationStatus::Adopted)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean value over the adopted recommendations (0 when none).
pub fn remediation_effectiveness(selected: &[Recommendation]) -> f64 {
    mean(adopted(selected).map(|r| r.value))
}

/// Mean cost over the adopted recommendations (0 when none).
pub fn remediation_cost(selected: &[Recommendation]) -> f64 {
    mean(adopted(selected).map(|r| r.cost))
}

pub fn overall(s_d: f64, s_r: f64, c: f64, mode: AggregationMode) -> f64 {
    let sum = s_d + s_r - c;
    match mode {
        AggregationMode::DividedByThree => sum / 3.0,
        AggregationMode::Sum => sum,
    }
}

pub fn score_run(
    run_id: &str,
    found: &[Vulnerability],
    truth: &[Vulnerability],
    recommendations: &[Recommendation],
    mode: AggregationMode,
) -> Result<ScoreReport, ScoringError> {
    let m = match_findings(found, truth);
    let s_d = detection_coverage(&m)?;
    let s_r = remediation_effectiveness(recommendations);
    let c = remediation_cost(recommendations);
    let mut notes = Vec::new();
    if adopted(recommendations).next().is_none() {
        notes.push("no adopted recommendations; S_R and C set to 0".to_string());
    }
    for f in &m.unmatched_found {
        notes.push(format!("finding {} not in ground truth", f.key()));
    }
    Ok(ScoreReport {
        s_d,
        s_r,
        c,
        s_overall: overall(s_d, s_r, c, mode),
        found_count: m.matched.len(),
        truth_count: m.truth_count,
        run_id: run_id.to_string(),
        aggregation_mode: mode,
        notes,
    })
}

/// Field-wise mean over repeated runs.
pub fn mean_report(reports: &[ScoreReport]) -> Option<ScoreReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let avg = |f: fn(&ScoreReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(ScoreReport {
        s_d: avg(|r| r.s_d),
        s_r: avg(|r| r.s_r),
        c: avg(|r| r.c),
        s_overall: avg(|r| r.s_overall),
        found_count: (reports.iter().map(|r| r.found_count).sum::<usize>() as f64 / n).round() as usize,
        truth_count: first.truth_count,
        run_id: format!("mean-of-{}", reports.len()),
        aggregation_mode: first.aggregation_mode,
        notes: Vec::new(),
    })
}

/// Plain-text score table.
pub fn render_table(r: &ScoreReport) -> String {
    format!(
        "run       {}\n\
         matched   {}/{}\n\
         S_D       {:.2}\n\
         S_R       {:.2}\n\
         C         {:.2}\n\
         S_overall {:.2} = {}\n",
        r.run_id,
        r.found_count,
        r.truth_count,
        r.s_d,
        r.s_r,
        r.c,
        r.s_overall,
        match r.aggregation_mode {
            AggregationMode::DividedByThree => "(S_D + S_R - C) / 3",
            AggregationMode::Sum => "S_D + S_R - C",
        }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VulnKey;

    fn v(id: &str, svc: &str, port: u16) -> Vulnerability {
        Vulnerability::new(id, svc, Some(port))
    }

    fn rec(cost: f64, value: f64) -> Recommendation {
        let mut r = Recommendation::proposed(
            "x",
            VulnKey {
                id: CVE_NA.into(),
                service: "http".into(),
                port: Some(80),
            },
        );
        r.cost = cost;
        r.value = value;
        r.status = RecommendationStatus::Adopted;
        r
    }

    #[test]
    fn matches_by_cve() {
        let truth = vec![v("CVE-2011-2523", "ftp", 21), v(CVE_NA, "http", 80)];
        let m = match_findings(&[v("CVE-2011-2523", "ftp", 21)], &truth);
        assert_eq!(m.matched.len(), 1);
        assert_eq!(m.unmatched_truth.len(), 1);
    }

    #[test]
    fn truth_consumed_once() {
        let truth = vec![v(CVE_NA, "http", 80)];
        let m = match_findings(&[v(CVE_NA, "http", 80), v(CVE_NA, "www", 80)], &truth);
        assert_eq!(m.matched.len(), 1);
        assert_eq!(m.unmatched_found.len(), 1);
    }

    #[test]
    fn public_cve_matches_cve_na_truth_by_service() {
        let truth = vec![v(CVE_NA, "samba", 139)];
        let m = match_findings(&[v("CVE-2007-2447", "netbios-ssn", 139)], &truth);
        assert_eq!(m.matched.len(), 1);
    }

    #[test]
    fn empty_found() {
        let m = match_findings(&[], &[v(CVE_NA, "http", 80)]);
        assert!(m.matched.is_empty());
        assert_eq!(detection_coverage(&m).unwrap(), 0.0);
    }

    #[test]
    fn coverage_arithmetic() {
        let truth: Vec<_> = (0..10).map(|p| v(CVE_NA, "svc", p)).collect();
        let m = match_findings(&truth[..6], &truth);
        assert_eq!(detection_coverage(&m).unwrap(), 6.0);
        let m = match_findings(&truth, &truth);
        assert_eq!(detection_coverage(&m).unwrap(), 10.0);
        assert_eq!(
            detection_coverage(&match_findings(&[], &[])),
            Err(ScoringError::EmptyTruth)
        );
    }

    #[test]
    fn means_over_adopted() {
        let recs = vec![rec(2.0, 9.0), rec(2.0, 9.0), rec(6.0, 4.8)];
        assert!((remediation_effectiveness(&recs) - 7.6).abs() < 1e-12);
        assert!((remediation_cost(&recs) - 10.0 / 3.0).abs() < 1e-12);
        let mut discarded = rec(10.0, 1.0);
        discarded.status = RecommendationStatus::Discarded;
        let mut with_discard = recs.clone();
        with_discard.push(discarded);
        assert_eq!(remediation_effectiveness(&with_discard), remediation_effectiveness(&recs));
        assert_eq!(remediation_effectiveness(&[]), 0.0);
        assert_eq!(remediation_cost(&[]), 0.0);
    }

    #[test]
    fn overall_modes() {
        assert!((overall(5.67, 7.60, 3.33, AggregationMode::Sum) - 9.94).abs() < 1e-9);
        assert!((overall(2.00, 5.07, 6.13, AggregationMode::Sum) - 0.94).abs() < 1e-9);
        assert_eq!(overall(0.0, 0.0, 0.0, AggregationMode::Sum), 0.0);
        assert_eq!(overall(0.0, 0.0, 0.0, AggregationMode::DividedByThree), 0.0);
    }
}
