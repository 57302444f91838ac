//! Pole-list conventions and optimal pole matching.

use num_complex::Complex64;

/// Canonical ordering: ascending |Im|, then ascending Re, with the upper
/// member of each conjugate pair immediately before its conjugate.
pub fn sort_poles(p: &mut [Complex64]) {
    p.sort_by(|a, b| {
        a.im.abs()
            .total_cmp(&b.im.abs())
            .then(a.re.total_cmp(&b.re))
            .then(b.im.total_cmp(&a.im))
    });
}

/// One real pole or one conjugate pair inside a pole list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolePair {
    /// Index of the real pole or of the member with Im > 0.
    pub upper: usize,
    /// Index of the conjugate member (None for real poles).
    pub lower: Option<usize>,
}

/// Group a conjugate-closed pole list into real poles and pairs, ordered by
/// the position of their upper member.
pub fn pole_pairs(poles: &[Complex64]) -> Vec<PolePair> {
    let mut used = vec![false; poles.len()];
    let mut out = Vec::new();
    for i in 0..poles.len() {
        if used[i] || poles[i].im < 0.0 {
            continue;
        }
        used[i] = true;
        if poles[i].im == 0.0 {
            out.push(PolePair { upper: i, lower: None });
            continue;
        }
        let target = poles[i].conj();
        let j = (0..poles.len())
            .filter(|&j| !used[j] && poles[j].im < 0.0)
            .min_by(|&a, &b| (poles[a] - target).norm().total_cmp(&(poles[b] - target).norm()));
        if let Some(j) = j {
            used[j] = true;
        }
        out.push(PolePair { upper: i, lower: j });
    }
    // lower-half poles with no partner still get reported
    for i in 0..poles.len() {
        if !used[i] {
            out.push(PolePair { upper: i, lower: None });
        }
    }
    out
}

/// Minimum-total-cost assignment for a rectangular cost matrix
/// (`cost[i][j]`, rows × cols). Returns, for every row, the matched column
/// (None for surplus rows when rows > cols).
pub fn assign_min_cost(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let col_of_t = assign_min_cost(&t);
        let mut out = vec![None; rows];
        for (j, r) in col_of_t.into_iter().enumerate() {
            if let Some(i) = r {
                out[i] = Some(j);
            }
        }
        return out;
    }
    // Shortest augmenting path Hungarian algorithm, rows <= cols, 1-based.
    let n = rows;
    let m = cols;
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
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
            }
            if j1 == 0 {
                // only reachable with non-finite costs; fall back to the first free column
                j1 = (1..=m).find(|&j| !used[j]).expect("rows <= cols");
                delta = 0.0;
            }
            for j in 0..=m {
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Optimal one-to-one matching of `found` against `reference` by distance;
/// returns the pairs `(found_idx, reference_idx)`.
pub fn match_poles(found: &[Complex64], reference: &[Complex64]) -> Vec<(usize, usize)> {
    let cost: Vec<Vec<f64>> = found
        .iter()
        .map(|a| reference.iter().map(|b| (a - b).norm()).collect())
        .collect();
    assign_min_cost(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect()
}

/// Largest relative error `|found - ref| / |ref|` over an optimal matching,
/// or infinity when the lists have different lengths.
pub fn max_relative_error(found: &[Complex64], reference: &[Complex64]) -> f64 {
    if found.len() != reference.len() {
        return f64::INFINITY;
    }
    match_poles(found, reference)
        .into_iter()
        .map(|(i, j)| (found[i] - reference[j]).norm() / reference[j].norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        // rows <= cols, enumerate injective maps
        fn rec(cost: &[Vec<f64>], i: usize, used: &mut Vec<bool>) -> f64 {
            if i == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost[0].len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[i][j] + rec(cost, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost[0].len()])
    }

    #[test]
    fn greedy_trap_is_avoided() {
        // greedy picks (0,0) = 1 then (1,1) = 10: total 11; optimum 2 + 3 = 5
        let cost = vec![vec![1.0, 2.0], vec![3.0, 10.0]];
        let a = assign_min_cost(&cost);
        assert_eq!(a, vec![Some(1), Some(0)]);
    }

    #[test]
    fn pairs_group_conjugates() {
        let mut p = vec![
            Complex64::new(-1.0, -10.0),
            Complex64::new(-3.0, 0.0),
            Complex64::new(-1.0, 10.0),
        ];
        sort_poles(&mut p);
        assert_eq!(p[0], Complex64::new(-3.0, 0.0));
        assert_eq!(p[1], Complex64::new(-1.0, 10.0));
        let pairs = pole_pairs(&p);
        assert_eq!(pairs, vec![PolePair { upper: 0, lower: None }, PolePair { upper: 1, lower: Some(2) }]);
    }

    proptest! {
        #[test]
        fn assignment_matches_enumeration(
            rows in 1usize..5, extra in 0usize..3,
            vals in proptest::collection::vec(0.0f64..100.0, 64)
        ) {
            let cols = rows + extra;
            let cost: Vec<Vec<f64>> = (0..rows).map(|i| (0..cols).map(|j| vals[i * 8 + j]).collect()).collect();
            let a = assign_min_cost(&cost);
            let total: f64 = a.iter().enumerate().map(|(i, j)| cost[i][j.unwrap()]).sum();
            let mut cols_used: Vec<usize> = a.iter().map(|j| j.unwrap()).collect();
            cols_used.sort();
            cols_used.dedup();
            prop_assert_eq!(cols_used.len(), rows);
            prop_assert!((total - brute_force(&cost)).abs() < 1e-9);
        }

        #[test]
        fn transposed_assignment_is_consistent(
            cols in 1usize..4, extra in 1usize..3,
            vals in proptest::collection::vec(0.0f64..100.0, 64)
        ) {
            let rows = cols + extra;
            let cost: Vec<Vec<f64>> = (0..rows).map(|i| (0..cols).map(|j| vals[i * 8 + j]).collect()).collect();
            let a = assign_min_cost(&cost);
            prop_assert_eq!(a.iter().filter(|x| x.is_some()).count(), cols);
        }
    }
}
