//! Exact group knapsack: at most one item per group, maximise value under
//! a cost budget.
//!
//! Costs are scaled by 10 to integer capacity units and values by 100, so
//! every comparison is exact integer arithmetic.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub cost: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen candidate index per group, `None` when the group is skipped.
    pub choices: Vec<Option<usize>>,
    pub total_value: f64,
    pub total_cost: f64,
    pub capacity_units: usize,
}

pub fn cost_units(cost: f64) -> usize {
    (cost * 10.0).round().max(0.0) as usize
}

pub fn budget_units(budget: f64) -> usize {
    ((budget * 10.0) + 1e-9).floor().max(0.0) as usize
}

fn value_units(value: f64) -> i64 {
    (value * 100.0).round() as i64
}

/// The textbook one-dimensional recurrence: returns the best total value
/// (in hundredths) reachable within `capacity` units.
pub fn max_value(groups: &[Vec<(usize, i64)>], capacity: usize) -> i64 {
    let mut dp = vec![0i64; capacity + 1];
    for group in groups {
        for j in (0..=capacity).rev() {
            for &(weight, value) in group {
                if j >= weight {
                    dp[j] = dp[j].max(dp[j - weight] + value);
                }
            }
        }
    }
    dp[capacity]
}

/// Optimal selection. Among optimal-value solutions the one with the lowest
/// total cost wins; remaining ties prefer earlier groups taking earlier
/// candidates. Items with value <= 0 are never chosen.
pub fn solve(groups: &[Vec<Item>], budget: f64) -> Selection {
    let cap = budget_units(budget);
    let scaled: Vec<Vec<Option<(usize, i64)>>> = groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|it| {
                    let v = value_units(it.value);
                    (v > 0).then_some((cost_units(it.cost), v))
                })
                .collect()
        })
        .collect();

    // best[g][r]: (value, cost) optimum over groups g.. with r units left,
    // ordered by value desc then cost asc.
    let n = groups.len();
    let mut best = vec![vec![(0i64, 0usize); cap + 1]; n + 1];
    for g in (0..n).rev() {
        for r in 0..=cap {
            let mut opt = best[g + 1][r];
            for &(w, v) in scaled[g].iter().flatten() {
                if w <= r {
                    let (tv, tc) = best[g + 1][r - w];
                    let cand = (tv + v, tc + w);
                    if better(cand, opt) {
                        opt = cand;
                    }
                }
            }
            best[g][r] = opt;
        }
    }

    let mut choices = Vec::with_capacity(n);
    let mut r = cap;
    let mut total_value = 0i64;
    let mut total_cost = 0usize;
    for g in 0..n {
        let target = best[g][r];
        let mut picked = None;
        for (idx, item) in scaled[g].iter().enumerate() {
            if let Some((w, v)) = *item {
                if w <= r {
                    let (tv, tc) = best[g + 1][r - w];
                    if (tv + v, tc + w) == target {
                        picked = Some((idx, w, v));
                        break;
                    }
                }
            }
        }
        match picked {
            Some((idx, w, v)) => {
                choices.push(Some(idx));
                r -= w;
                total_value += v;
                total_cost += w;
            }
            None => {
                debug_assert_eq!(best[g + 1][r], target);
                choices.push(None);
            }
        }
    }

    Selection {
        choices,
        total_value: total_value as f64 / 100.0,
        total_cost: total_cost as f64 / 10.0,
        capacity_units: cap,
    }
}

fn better(a: (i64, usize), b: (i64, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}
