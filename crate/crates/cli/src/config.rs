//! JSON config loading with `${VAR}` interpolation in string values.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use penheal_core::model::RunConfig;
use serde::Deserialize;
use serde_json::Value;

pub const DEFAULT_LLM_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_NVD_BASE_URL: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";

/// Where the live backends send requests. Lives under the `endpoints` key;
/// everything else in the file is a [`RunConfig`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub llm_base_url: Option<String>,
    pub llm_api_key: Option<String>,
    pub nvd_base_url: Option<String>,
    pub nvd_api_key: Option<String>,
    pub nvd_cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub endpoints: Endpoints,
}

/// Replaces every `${NAME}` in `s` with the environment variable's value.
/// `key` only feeds error messages.
pub fn interpolate_str(s: &str, key: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| anyhow!("config key `{key}`: unterminated `${{` in value"))?;
        let name = &after[..end];
        let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            bail!("config key `{key}`: `${{{name}}}` is not a valid variable name");
        }
        let value = env(name).ok_or_else(|| anyhow!("config key `{key}`: environment variable {name} is not set"))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate(v: &mut Value, key: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<()> {
    match v {
        Value::String(s) => *s = interpolate_str(s, key, env)?,
        Value::Array(items) => {
            for (i, item) in items.iter_mut().enumerate() {
                interpolate(item, &format!("{key}[{i}]"), env)?;
            }
        }
        Value::Object(map) => {
            for (k, item) in map.iter_mut() {
                let path = if key.is_empty() { k.clone() } else { format!("{key}.{k}") };
                interpolate(item, &path, env)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::new("x")).expect("config serializes") {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Parses config text. Every error names the offending key.
pub fn parse_config(text: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<LoadedConfig> {
    let mut v: Value = serde_json::from_str(text).context("config is not valid JSON")?;
    let Value::Object(map) = &mut v else {
        bail!("config must be a JSON object");
    };
    let known = known_keys();
    if let Some(k) = map.keys().find(|k| *k != "endpoints" && !known.contains(k)) {
        bail!("config key `{k}`: unknown key");
    }
    interpolate(&mut v, "", env)?;
    let Value::Object(mut map) = v else { unreachable!() };
    let endpoints = match map.remove("endpoints") {
        Some(e) => {
            serde_path_to_error::deserialize(e).map_err(|e| anyhow!("config key `endpoints.{}`: {}", e.path(), e.inner()))?
        }
        None => Endpoints::default(),
    };
    if !map.contains_key("target_address") {
        // let flags supply it; validation catches an empty one later
        map.insert("target_address".into(), Value::String(String::new()));
    }
    let run: RunConfig = serde_path_to_error::deserialize(Value::Object(map))
        .map_err(|e| anyhow!("config key `{}`: {}", e.path(), e.inner()))?;
    Ok(LoadedConfig { run, endpoints })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text, &|name| std::env::var(name).ok()).with_context(|| format!("in config {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(name: &str) -> Option<String> {
        (name == "KEY").then(|| "s3cret".to_string())
    }

    #[test]
    fn interpolates_nested_strings() {
        let c = parse_config(
            r#"{"target_address":"10.0.2.4","endpoints":{"llm_api_key":"${KEY}","llm_base_url":"http://x/${KEY}/v1"}}"#,
            &env,
        )
        .unwrap();
        assert_eq!(c.endpoints.llm_api_key.as_deref(), Some("s3cret"));
        assert_eq!(c.endpoints.llm_base_url.as_deref(), Some("http://x/s3cret/v1"));
        assert_eq!(c.run.target_address, "10.0.2.4");
    }

    #[test]
    fn unset_variable_names_key_and_variable() {
        let e = parse_config(r#"{"endpoints":{"nvd_api_key":"${NOPE}"}}"#, &env).unwrap_err().to_string();
        assert!(e.contains("endpoints.nvd_api_key") && e.contains("NOPE"), "{e}");
    }

    #[test]
    fn type_errors_name_the_key() {
        let e = parse_config(r#"{"target_address":"a","budget_per_vuln":"lots"}"#, &env).unwrap_err().to_string();
        assert!(e.contains("budget_per_vuln"), "{e}");
        let e = parse_config(r#"{"target_address":"a","components":{"evaluator":3}}"#, &env)
            .unwrap_err()
            .to_string();
        assert!(e.contains("components.evaluator"), "{e}");
        let e = parse_config(r#"{"target":"a"}"#, &env).unwrap_err().to_string();
        assert!(e.contains("`target`"), "{e}");
    }

    #[test]
    fn malformed_references_are_rejected() {
        assert!(interpolate_str("${A", "k", &env).is_err());
        assert!(interpolate_str("${1A}", "k", &env).is_err());
        assert_eq!(interpolate_str("$KEY and ${KEY}", "k", &env).unwrap(), "$KEY and s3cret");
    }
}
