//! CVSS v3.1 base score and vector-string grammar.

use thiserror::Error;

use crate::model::{
    AttackComplexity, AttackVector, BaseVector, CvssMetrics, Impact, PrivilegesRequired, Scope,
    UserInteraction,
};

const ORDER: [&str; 8] = ["AV", "AC", "PR", "UI", "S", "C", "I", "A"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("vector must start with CVSS:3.0/ or CVSS:3.1/, got {0:?}")]
    BadPrefix(String),
    #[error("missing metrics: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("duplicate metrics: {}", .0.join(", "))]
    Duplicate(Vec<String>),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("invalid value {value:?} for metric {metric}")]
    InvalidValue { metric: String, value: String },
    #[error("metrics out of canonical order AV/AC/PR/UI/S/C/I/A: {0}")]
    OutOfOrder(String),
    #[error("malformed component {0:?}")]
    Malformed(String),
}

/// Parses `CVSS:3.x/AV:_/AC:_/PR:_/UI:_/S:_/C:_/I:_/A:_`. Values are
/// case-insensitive; metric order is enforced.
pub fn parse_vector(text: &str) -> Result<BaseVector, VectorError> {
    let text = text.trim();
    let mut parts = text.split('/');
    let prefix = parts.next().unwrap_or_default();
    let prefix_norm = prefix.to_ascii_uppercase();
    if prefix_norm != "CVSS:3.0" && prefix_norm != "CVSS:3.1" {
        return Err(VectorError::BadPrefix(prefix.to_string()));
    }

    let mut seen: Vec<(String, String)> = Vec::new();
    for part in parts {
        let (k, v) = part
            .split_once(':')
            .ok_or_else(|| VectorError::Malformed(part.to_string()))?;
        let k = k.trim().to_ascii_uppercase();
        let v = v.trim().to_string();
        if !ORDER.contains(&k.as_str()) {
            return Err(VectorError::UnknownMetric(k));
        }
        seen.push((k, v));
    }

    let mut dups: Vec<String> = Vec::new();
    for (idx, (k, _)) in seen.iter().enumerate() {
        if seen[..idx].iter().any(|(p, _)| p == k) && !dups.contains(k) {
            dups.push(k.clone());
        }
    }
    if !dups.is_empty() {
        return Err(VectorError::Duplicate(dups));
    }
    let missing: Vec<String> = ORDER
        .iter()
        .filter(|m| !seen.iter().any(|(k, _)| k == *m))
        .map(|m| m.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(VectorError::Missing(missing));
    }
    let got: Vec<&str> = seen.iter().map(|(k, _)| k.as_str()).collect();
    if got != ORDER {
        return Err(VectorError::OutOfOrder(got.join("/")));
    }

    fn letter<T>(metric: &str, v: &str, f: fn(char) -> Option<T>) -> Result<T, VectorError> {
        let mut chars = v.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => f(c),
            _ => None,
        }
        .ok_or_else(|| VectorError::InvalidValue {
            metric: metric.to_string(),
            value: v.to_string(),
        })
    }
    let val = |i: usize| seen[i].1.as_str();
    Ok(BaseVector {
        av: letter("AV", val(0), AttackVector::from_letter)?,
        ac: letter("AC", val(1), AttackComplexity::from_letter)?,
        pr: letter("PR", val(2), PrivilegesRequired::from_letter)?,
        ui: letter("UI", val(3), UserInteraction::from_letter)?,
        scope: letter("S", val(4), Scope::from_letter)?,
        c: letter("C", val(5), Impact::from_letter)?,
        i: letter("I", val(6), Impact::from_letter)?,
        a: letter("A", val(7), Impact::from_letter)?,
    })
}

/// Finds the first `CVSS:3.x/...` token in free text and parses it.
pub fn find_vector(text: &str) -> Result<BaseVector, VectorError> {
    let upper = text.to_ascii_uppercase();
    let start = upper
        .find("CVSS:3.")
        .ok_or_else(|| VectorError::BadPrefix(text.chars().take(40).collect()))?;
    let token: String = text[start..]
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || matches!(c, ':' | '/' | '.'))
        .collect();
    parse_vector(token.trim_end_matches(['.', '/']))
}

/// Round up to one decimal using the integer arithmetic of CVSS v3.1
/// (avoids float artefacts such as 4.000000001 -> 4.1).
pub fn round_up1(x: f64) -> f64 {
    let int_input = (x * 100_000.0).round() as i64;
    if int_input % 10_000 == 0 {
        int_input as f64 / 100_000.0
    } else {
        ((int_input / 10_000) + 1) as f64 / 10.0
    }
}

fn av_weight(v: AttackVector) -> f64 {
    match v {
        AttackVector::N => 0.85,
        AttackVector::A => 0.62,
        AttackVector::L => 0.55,
        AttackVector::P => 0.2,
    }
}

fn ac_weight(v: AttackComplexity) -> f64 {
    match v {
        AttackComplexity::L => 0.77,
        AttackComplexity::H => 0.44,
    }
}

fn pr_weight(v: PrivilegesRequired, scope: Scope) -> f64 {
    match (v, scope) {
        (PrivilegesRequired::N, _) => 0.85,
        (PrivilegesRequired::L, Scope::U) => 0.62,
        (PrivilegesRequired::L, Scope::C) => 0.68,
        (PrivilegesRequired::H, Scope::U) => 0.27,
        (PrivilegesRequired::H, Scope::C) => 0.5,
    }
}

fn ui_weight(v: UserInteraction) -> f64 {
    match v {
        UserInteraction::N => 0.85,
        UserInteraction::R => 0.62,
    }
}

fn cia_weight(v: Impact) -> f64 {
    match v {
        Impact::H => 0.56,
        Impact::L => 0.22,
        Impact::N => 0.0,
    }
}

pub fn base_score(v: &BaseVector) -> f64 {
    let iss = 1.0 - (1.0 - cia_weight(v.c)) * (1.0 - cia_weight(v.i)) * (1.0 - cia_weight(v.a));
    let impact = match v.scope {
        Scope::U => 6.42 * iss,
        Scope::C => 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02).powi(15),
    };
    let exploitability =
        8.22 * av_weight(v.av) * ac_weight(v.ac) * pr_weight(v.pr, v.scope) * ui_weight(v.ui);
    if impact <= 0.0 {
        return 0.0;
    }
    match v.scope {
        Scope::U => round_up1((impact + exploitability).min(10.0)),
        Scope::C => round_up1((1.08 * (impact + exploitability)).min(10.0)),
    }
}

pub fn score(v: BaseVector) -> CvssMetrics {
    CvssMetrics::with_score(v, base_score(&v))
}

/// Parses and scores in one step.
pub fn metrics_from_vector(text: &str) -> Result<CvssMetrics, VectorError> {
    parse_vector(text).map(score)
}

/// True when the stored score matches a recomputation from the metrics.
pub fn is_consistent(m: &CvssMetrics) -> bool {
    (base_score(&m.base_vector()) - m.base_score).abs() < 1e-9
}
