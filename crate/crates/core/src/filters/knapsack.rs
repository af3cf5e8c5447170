use serde::{Deserialize, Serialize};

/// Default limit on `items × (budget + 1)` DP cells (32 MiB of `f64`).
pub const DEFAULT_DP_CELL_CAP: usize = 4 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnapsackItem {
    pub score: f64,
    pub cost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackSolution {
    /// Selected item indices, ascending.
    pub indices: Vec<usize>,
    pub score: f64,
    pub cost: usize,
    /// The DP table would have exceeded the cell cap and the greedy
    /// score/cost heuristic was used instead.
    pub approximate: bool,
}

/// 0-1 knapsack over integer costs.
///
/// Exact DP when `items × (budget + 1)` fits in `cell_cap`. Among optimal sets
/// the one that includes the lowest possible index first is returned, i.e. the
/// indicator vector is lexicographically greatest. Otherwise items are taken
/// greedily by score/cost density and the result is flagged approximate.
pub fn knapsack_select(items: &[KnapsackItem], budget: usize, cell_cap: usize) -> KnapsackSolution {
    let total_cost: usize = items.iter().map(|i| i.cost).sum();
    if total_cost <= budget {
        return solution((0..items.len()).collect(), items, false);
    }
    let n = items.len();
    let cap = budget;
    let width = cap + 1;
    if (n + 1).saturating_mul(width) > cell_cap {
        return greedy(items, budget);
    }

    // best[i * width + c]: max score using items i.. with capacity c.
    let mut best = vec![0.0f64; (n + 1) * width];
    for i in (0..n).rev() {
        let KnapsackItem { score, cost } = items[i];
        let (head, tail) = best.split_at_mut((i + 1) * width);
        let row = &mut head[i * width..];
        let next = &tail[..width];
        for c in 0..width {
            let skip = next[c];
            row[c] = if cost <= c { skip.max(score + next[c - cost]) } else { skip };
        }
    }

    let mut chosen = Vec::new();
    let mut c = cap;
    for (i, item) in items.iter().enumerate() {
        let next = &best[(i + 1) * width..(i + 2) * width];
        if item.cost <= c && item.score + next[c - item.cost] >= next[c] {
            chosen.push(i);
            c -= item.cost;
        }
    }
    solution(chosen, items, false)
}

fn greedy(items: &[KnapsackItem], budget: usize) -> KnapsackSolution {
    let mut order: Vec<usize> = (0..items.len()).collect();
    let density = |i: usize| {
        let it = items[i];
        if it.cost == 0 {
            f64::INFINITY
        } else {
            it.score / it.cost as f64
        }
    };
    order.sort_by(|&a, &b| density(b).total_cmp(&density(a)).then(a.cmp(&b)));
    let mut left = budget;
    let mut chosen = Vec::new();
    for i in order {
        if items[i].cost <= left {
            left -= items[i].cost;
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    solution(chosen, items, true)
}

fn solution(indices: Vec<usize>, items: &[KnapsackItem], approximate: bool) -> KnapsackSolution {
    let score = indices.iter().map(|&i| items[i].score).sum();
    let cost = indices.iter().map(|&i| items[i].cost).sum();
    KnapsackSolution {
        indices,
        score,
        cost,
        approximate,
    }
}
