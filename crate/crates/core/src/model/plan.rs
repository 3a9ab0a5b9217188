//! Layered attack plan maintained by the planner agent.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Upper bound on a task's recorded result text, in characters.
pub const RESULT_SUMMARY_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskStatus {
    ToDo,
    Completed,
    Failed,
}

impl TaskStatus {
    pub fn label(self) -> &'static str {
        match self {
            TaskStatus::ToDo => "to-do",
            TaskStatus::Completed => "completed",
            TaskStatus::Failed => "failed",
        }
    }

    /// Parses the labels planners tend to write (`to-do`, `todo`, `done`, ...).
    pub fn from_label(s: &str) -> Option<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "todo" | "pending" | "open" => Some(TaskStatus::ToDo),
            "completed" | "complete" | "done" | "success" | "succeeded" => {
                Some(TaskStatus::Completed)
            }
            "failed" | "fail" | "failure" => Some(TaskStatus::Failed),
            _ => None,
        }
    }

    /// Only `ToDo -> Completed` and `ToDo -> Failed` are legal (plus staying put).
    pub fn can_become(self, next: TaskStatus) -> bool {
        self == next || self == TaskStatus::ToDo
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: String,
    pub description: String,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_summary: Option<String>,
    #[serde(default)]
    pub children: Vec<TaskNode>,
}

impl TaskNode {
    pub fn todo(id: impl Into<String>, description: impl Into<String>) -> Self {
        TaskNode {
            id: id.into(),
            description: description.into(),
            status: TaskStatus::ToDo,
            result_summary: None,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<TaskNode>) -> Self {
        self.children = children;
        self
    }

    /// True when this node is ToDo and none of its children are; these are
    /// the tasks an executor can act on directly.
    pub fn is_actionable(&self) -> bool {
        self.status == TaskStatus::ToDo
            && self.children.iter().all(|c| c.status != TaskStatus::ToDo)
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a TaskNode>) {
        out.push(self);
        for c in &self.children {
            c.visit(out);
        }
    }
}

/// Parent id of a dotted path: `"1.2.1"` -> `Some("1.2")`, `"1"` -> `None`.
pub fn parent_id(id: &str) -> Option<&str> {
    id.rfind('.').map(|i| &id[..i])
}

/// A dotted path of positive integers.
pub fn is_well_formed_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .split('.')
            .all(|seg| !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_digit()))
}

/// Sorts ids segment-wise numerically ("1.10" after "1.9").
pub fn compare_ids(a: &str, b: &str) -> std::cmp::Ordering {
    let seg = |s: &str| -> Vec<u64> { s.split('.').map(|p| p.parse().unwrap_or(u64::MAX)).collect() };
    seg(a).cmp(&seg(b))
}

/// Truncates to [`RESULT_SUMMARY_CAP`] characters.
pub fn cap_result_summary(text: &str) -> String {
    let trimmed = text.trim();
    if trimmed.chars().count() <= RESULT_SUMMARY_CAP {
        trimmed.to_string()
    } else {
        trimmed.chars().take(RESULT_SUMMARY_CAP).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttackPlan {
    pub roots: Vec<TaskNode>,
}

impl AttackPlan {
    pub fn new(roots: Vec<TaskNode>) -> Self {
        AttackPlan { roots }
    }

    /// All nodes in depth-first pre-order.
    pub fn nodes(&self) -> Vec<&TaskNode> {
        let mut out = Vec::new();
        for r in &self.roots {
            r.visit(&mut out);
        }
        out
    }

    pub fn find(&self, id: &str) -> Option<&TaskNode> {
        self.nodes().into_iter().find(|n| n.id == id)
    }

    pub fn find_mut(&mut self, id: &str) -> Option<&mut TaskNode> {
        fn walk<'a>(nodes: &'a mut [TaskNode], id: &str) -> Option<&'a mut TaskNode> {
            for n in nodes.iter_mut() {
                if n.id == id {
                    return Some(n);
                }
                if id.starts_with(&format!("{}.", n.id)) {
                    return walk(&mut n.children, id);
                }
            }
            None
        }
        walk(&mut self.roots, id)
    }

    pub fn ids(&self) -> HashSet<String> {
        self.nodes().into_iter().map(|n| n.id.clone()).collect()
    }

    pub fn has_todo(&self) -> bool {
        self.nodes().iter().any(|n| n.status == TaskStatus::ToDo)
    }

    /// Actionable ToDo tasks in depth-first order.
    pub fn actionable(&self) -> Vec<&TaskNode> {
        self.nodes().into_iter().filter(|n| n.is_actionable()).collect()
    }

    /// Inserts `node` under its parent (by id), keeping siblings in id order.
    /// Returns false when the parent does not exist or the id is taken.
    pub fn insert(&mut self, node: TaskNode) -> bool {
        if !is_well_formed_id(&node.id) || self.find(&node.id).is_some() {
            return false;
        }
        let siblings = match parent_id(&node.id) {
            None => &mut self.roots,
            Some(p) => match self.find_mut(p) {
                Some(parent) => &mut parent.children,
                None => return false,
            },
        };
        let pos = siblings
            .iter()
            .position(|s| compare_ids(&s.id, &node.id) == std::cmp::Ordering::Greater)
            .unwrap_or(siblings.len());
        siblings.insert(pos, node);
        true
    }

    /// Closes ToDo parents whose children have all been resolved: Completed
    /// when any child completed, otherwise Failed. Repeats until stable.
    pub fn roll_up(&mut self) {
        fn walk(node: &mut TaskNode) {
            for c in node.children.iter_mut() {
                walk(c);
            }
            if node.status == TaskStatus::ToDo
                && !node.children.is_empty()
                && node.children.iter().all(|c| c.status != TaskStatus::ToDo)
            {
                let done = node
                    .children
                    .iter()
                    .filter(|c| c.status == TaskStatus::Completed)
                    .count();
                node.status = if done > 0 {
                    TaskStatus::Completed
                } else {
                    TaskStatus::Failed
                };
                node.result_summary = Some(cap_result_summary(&format!(
                    "{done} of {} subtasks completed",
                    node.children.len()
                )));
            }
        }
        for r in self.roots.iter_mut() {
            walk(r);
        }
    }

    /// Line-per-task text form used in prompts and parsed back from planner
    /// replies: `1.2 Description [status] -- result`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for n in self.nodes() {
            let depth = n.id.matches('.').count();
            out.push_str(&"  ".repeat(depth));
            out.push_str(&n.id);
            if depth == 0 {
                out.push('.');
            }
            out.push(' ');
            out.push_str(&n.description);
            out.push_str(&format!(" [{}]", n.status.label()));
            if let Some(r) = &n.result_summary {
                out.push_str(" -- ");
                out.push_str(&r.replace('\n', " "));
            }
            out.push('\n');
        }
        out
    }
}

/// Checks every plan and task invariant; each message names the node.
pub fn validate_plan(plan: &AttackPlan) -> Vec<String> {
    let mut violations = Vec::new();
    if plan.roots.is_empty() {
        violations.push("plan: no root task".to_string());
    }
    let mut seen = HashSet::new();
    fn walk(
        node: &TaskNode,
        parent: Option<&str>,
        seen: &mut HashSet<String>,
        out: &mut Vec<String>,
    ) {
        let id = node.id.as_str();
        if !is_well_formed_id(id) {
            out.push(format!("{id}: malformed id"));
        } else if parent_id(id) != parent {
            out.push(format!("{id}: parent mismatch"));
        }
        if !seen.insert(id.to_string()) {
            out.push(format!("{id}: duplicate id"));
        }
        if node.description.trim().is_empty() {
            out.push(format!("{id}: empty description"));
        }
        match (&node.status, &node.result_summary) {
            (TaskStatus::ToDo, Some(_)) => {
                out.push(format!("{id}: to-do task carries a result summary"))
            }
            (TaskStatus::Completed | TaskStatus::Failed, None) => {
                out.push(format!("{id}: {} task lacks a result summary", node.status))
            }
            _ => {}
        }
        if let Some(r) = &node.result_summary {
            if r.chars().count() > RESULT_SUMMARY_CAP {
                out.push(format!("{id}: result summary exceeds {RESULT_SUMMARY_CAP} chars"));
            }
        }
        for c in &node.children {
            walk(c, Some(id), seen, out);
        }
    }
    for r in &plan.roots {
        walk(r, None, &mut seen, &mut violations);
    }
    violations
}
