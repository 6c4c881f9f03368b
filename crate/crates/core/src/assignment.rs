//! Exact maximum-weight bipartite matching.
//!
//! Dense O(n^3) Hungarian solver over `f64` costs. Rows and columns are
//! padded to a square matrix; forbidden pairs and padding cost nothing, so
//! the optimal perfect assignment restricted to allowed pairs is an optimal
//! partial matching (all allowed weights are positive).

/// Two totals closer than this are treated as tied.
pub const TIE_EPS: f64 = 1e-10;

/// `weights[r][c]` is `Some(w)` with `w > 0` for an allowed pair, `None` when forbidden.
pub type WeightMatrix = Vec<Vec<Option<f64>>>;

/// Minimum-cost perfect assignment of a square matrix. Returns `row -> col`.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Optimal partial matching over the given row and column subsets.
fn solve_subset(
    weights: &WeightMatrix,
    rows: &[usize],
    cols: &[usize],
) -> (f64, Vec<(usize, usize)>) {
    let n = rows.len().max(cols.len());
    if rows.is_empty() || cols.is_empty() {
        return (0.0, Vec::new());
    }
    let mut cost = vec![vec![0.0; n]; n];
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            if let Some(w) = weights[r][c] {
                cost[i][j] = -w;
            }
        }
    }
    let assignment = hungarian_min(&cost);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        if i < rows.len() && j < cols.len() {
            if let Some(w) = weights[rows[i]][cols[j]] {
                pairs.push((rows[i], cols[j]));
                total += w;
            }
        }
    }
    (total, pairs)
}

/// Maximum total weight over all partial injective row-to-column mappings.
pub fn max_weight(weights: &WeightMatrix) -> f64 {
    let rows: Vec<usize> = (0..weights.len()).collect();
    let cols: Vec<usize> = (0..weights.first().map_or(0, Vec::len)).collect();
    solve_subset(weights, &rows, &cols).0
}

/// Optimal matching, ties broken toward the lexicographically smallest
/// sequence of `(row, col)` pairs.
///
/// Rows are fixed greedily in index order: each row takes the smallest
/// column that still admits an optimal completion, or stays unmatched if none does.
pub fn max_weight_matching(weights: &WeightMatrix) -> Vec<(usize, usize)> {
    let n_rows = weights.len();
    let n_cols = weights.first().map_or(0, Vec::len);
    let all_rows: Vec<usize> = (0..n_rows).collect();
    let all_cols: Vec<usize> = (0..n_cols).collect();
    let (best, _) = solve_subset(weights, &all_rows, &all_cols);

    let mut fixed = Vec::new();
    let mut fixed_total = 0.0;
    let mut free_cols = vec![true; n_cols];
    for r in 0..n_rows {
        let later_rows: Vec<usize> = (r + 1..n_rows).collect();
        for c in 0..n_cols {
            let Some(w) = weights[r][c] else { continue };
            if !free_cols[c] {
                continue;
            }
            let rest_cols: Vec<usize> = (0..n_cols).filter(|&k| k != c && free_cols[k]).collect();
            let (rest, _) = solve_subset(weights, &later_rows, &rest_cols);
            if fixed_total + w + rest >= best - TIE_EPS {
                fixed.push((r, c));
                fixed_total += w;
                free_cols[c] = false;
                break;
            }
        }
    }
    fixed
}
