use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{AgentRole, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub enum AggregationMode {
    #[default]
    DividedByThree,
    Sum,
}


/// How `budget_per_vuln` turns into knapsack capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BudgetMode {
    /// One knapsack with capacity `budget_per_vuln * findings`.
    #[default]
    Total,
    /// Each group gets its own `budget_per_vuln`.
    PerGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostTier {
    Low,
    Moderate,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPolicy {
    #[serde(default = "default_tier_scores")]
    pub tier_scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_preference_text: Option<String>,
}

fn default_tier_scores() -> BTreeMap<String, f64> {
    [("Low", 2.0), ("Moderate", 5.0), ("High", 10.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

impl Default for CostPolicy {
    fn default() -> Self {
        CostPolicy {
            tier_scores: default_tier_scores(),
            user_preference_text: None,
        }
    }
}

impl CostPolicy {
    pub fn score(&self, tier: CostTier) -> f64 {
        let (name, fallback) = match tier {
            CostTier::Low => ("Low", 2.0),
            CostTier::Moderate => ("Moderate", 5.0),
            CostTier::High => ("High", 10.0),
        };
        self.tier_scores.get(name).copied().unwrap_or(fallback)
    }

    pub fn validate(&self) -> Vec<String> {
        self.tier_scores
            .iter()
            .filter(|(_, v)| !(0.0..=10.0).contains(*v))
            .map(|(k, v)| format!("cost_policy.tier_scores.{k}: {v} outside [0, 10]"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierModels {
    pub strong: String,
    pub light: String,
}

impl Default for TierModels {
    fn default() -> Self {
        TierModels {
            strong: "gpt-4".into(),
            light: "gpt-3.5-turbo".into(),
        }
    }
}

impl TierModels {
    pub fn model(&self, tier: Tier) -> &str {
        match tier {
            Tier::Strong => &self.strong,
            Tier::Light => &self.light,
        }
    }
}

/// Component switches, all on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    #[serde(default = "yes")]
    pub counterfactual: bool,
    #[serde(default = "yes")]
    pub instructor: bool,
    #[serde(default = "yes")]
    pub evaluator: bool,
}

fn yes() -> bool {
    true
}

impl Default for Components {
    fn default() -> Self {
        Components {
            counterfactual: true,
            instructor: true,
            evaluator: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub target_address: String,
    #[serde(default = "default_budget")]
    pub budget_per_vuln: f64,
    #[serde(default)]
    pub budget_mode: BudgetMode,
    #[serde(default)]
    pub cost_policy: CostPolicy,
    #[serde(default = "default_k")]
    pub retrieval_k: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_window")]
    pub no_new_finding_window: usize,
    #[serde(default = "default_role_models")]
    pub role_models: BTreeMap<AgentRole, Tier>,
    #[serde(default)]
    pub tier_models: TierModels,
    #[serde(default)]
    pub aggregation_mode: AggregationMode,
    #[serde(default = "default_timeout")]
    pub command_timeout_seconds: u64,
    #[serde(default)]
    pub components: Components,
}

fn default_budget() -> f64 {
    4.0
}
fn default_k() -> usize {
    3
}
fn default_max_iterations() -> usize {
    30
}
fn default_window() -> usize {
    5
}
fn default_timeout() -> u64 {
    120
}
fn default_role_models() -> BTreeMap<AgentRole, Tier> {
    AgentRole::ALL.iter().map(|r| (*r, r.default_tier())).collect()
}

impl RunConfig {
    pub fn new(target_address: impl Into<String>) -> Self {
        RunConfig {
            target_address: target_address.into(),
            budget_per_vuln: default_budget(),
            budget_mode: BudgetMode::default(),
            cost_policy: CostPolicy::default(),
            retrieval_k: default_k(),
            max_iterations: default_max_iterations(),
            no_new_finding_window: default_window(),
            role_models: default_role_models(),
            tier_models: TierModels::default(),
            aggregation_mode: AggregationMode::default(),
            command_timeout_seconds: default_timeout(),
            components: Components::default(),
        }
    }

    pub fn tier_of(&self, role: AgentRole) -> Tier {
        self.role_models
            .get(&role)
            .copied()
            .unwrap_or_else(|| role.default_tier())
    }

    pub fn model_for(&self, role: AgentRole) -> &str {
        self.tier_models.model(self.tier_of(role))
    }

    /// Violations named by config key.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.target_address.trim().is_empty() {
            out.push("target_address: must be set".to_string());
        }
        if self.budget_per_vuln.is_nan() || self.budget_per_vuln < 0.0 {
            out.push(format!("budget_per_vuln: {} must be >= 0", self.budget_per_vuln));
        }
        if self.retrieval_k == 0 {
            out.push("retrieval_k: must be >= 1".to_string());
        }
        if self.max_iterations == 0 {
            out.push("max_iterations: must be >= 1".to_string());
        }
        if self.no_new_finding_window == 0 {
            out.push("no_new_finding_window: must be >= 1".to_string());
        }
        out.extend(self.cost_policy.validate());
        out
    }
}
