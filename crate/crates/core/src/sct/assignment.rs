//! Minimum-cost rectangular assignment (Hungarian / Kuhn-Munkres with potentials).
//!
//! Non-finite entries mark forbidden pairs. The solver first maximises the number of
//! permitted pairs and then minimises their total cost.

/// Solves the assignment problem for an `n x m` cost matrix and returns `(row, col)` pairs
/// sorted by row. Forbidden pairs never appear in the result.
///
/// Panics if the rows have different lengths.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    assert!(
        cost.iter().all(|row| row.len() == m),
        "cost matrix rows must have equal length"
    );
    if n == 0 || m == 0 {
        return Vec::new();
    }

    let max_abs = cost
        .iter()
        .flatten()
        .filter(|c| c.is_finite())
        .fold(0.0f64, |acc, c| acc.max(c.abs()));
    let k = n.min(m) as f64;
    // Any assignment using one more forbidden pair costs strictly more than any using fewer.
    let forbidden = 2.0 * (k + 1.0) * (max_abs + 1.0);
    let entry = |r: usize, c: usize| {
        let v = cost[r][c];
        if v.is_finite() {
            v
        } else {
            forbidden
        }
    };

    let pairs = if n <= m {
        solve_rows_le_cols(n, m, entry)
    } else {
        solve_rows_le_cols(m, n, |r, c| entry(c, r))
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect()
    };

    let mut pairs: Vec<_> = pairs
        .into_iter()
        .filter(|&(r, c)| cost[r][c].is_finite())
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Sum of the costs of the given pairs, accumulated in row order.
pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    sorted.iter().map(|&(r, c)| cost[r][c]).sum()
}

/// Shortest augmenting path formulation; requires `n <= m` and assigns every row.
fn solve_rows_le_cols(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // 1-based arrays with index 0 as the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of_col = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    (1..=m)
        .filter(|&j| row_of_col[j] != 0)
        .map(|j| (row_of_col[j] - 1, j - 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerates every injective partial assignment; returns (pair count, min cost)
    /// lexicographically optimal: most permitted pairs first, then least cost.
    fn brute_force(cost: &[Vec<f64>]) -> (usize, f64) {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, count: usize, acc: f64, best: &mut (usize, f64)) {
            if row == cost.len() {
                if count > best.0 || (count == best.0 && acc < best.1) {
                    *best = (count, acc);
                }
                return;
            }
            rec(cost, row + 1, used, count, acc, best);
            for c in 0..used.len() {
                if !used[c] && cost[row][c].is_finite() {
                    used[c] = true;
                    rec(cost, row + 1, used, count + 1, acc + cost[row][c], best);
                    used[c] = false;
                }
            }
        }
        let m = cost.first().map_or(0, Vec::len);
        let mut best = (0, f64::INFINITY);
        rec(cost, 0, &mut vec![false; m], 0, 0.0, &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        best
    }

    fn is_one_to_one(pairs: &[(usize, usize)]) -> bool {
        let mut rows: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<_> = pairs.iter().map(|p| p.1).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        rows.windows(2).all(|w| w[0] != w[1]) && cols.windows(2).all(|w| w[0] != w[1])
    }

    #[test]
    fn diagonal_example() {
        let cost = vec![
            vec![0.0, 9.0, 9.0],
            vec![9.0, 0.0, 9.0],
            vec![9.0, 9.0, 0.0],
        ];
        let pairs = hungarian(&cost);
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(assignment_cost(&cost, &pairs), 0.0);
    }

    #[test]
    fn single_entry() {
        assert_eq!(hungarian(&[vec![5.0]]), vec![(0, 0)]);
    }

    #[test]
    fn empty_and_all_forbidden() {
        assert!(hungarian(&[]).is_empty());
        assert!(hungarian(&[vec![], vec![]]).is_empty());
        let inf = f64::INFINITY;
        assert!(hungarian(&[vec![inf, inf], vec![inf, inf]]).is_empty());
    }

    #[test]
    fn forbidden_pairs_are_avoided() {
        let inf = f64::INFINITY;
        // cheapest pair (0,0) would block row 1 entirely
        let cost = vec![vec![0.0, 5.0], vec![1.0, inf]];
        assert_eq!(hungarian(&cost), vec![(0, 1), (1, 0)]);
        let cost = vec![vec![inf, 2.0, inf], vec![inf, 1.0, inf]];
        assert_eq!(hungarian(&cost), vec![(1, 1)]);
    }

    #[test]
    fn rectangular_tall_and_wide() {
        let wide = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0]];
        let pairs = hungarian(&wide);
        assert_eq!(pairs.len(), 2);
        assert_eq!(assignment_cost(&wide, &pairs), 3.0);
        let tall: Vec<Vec<f64>> = (0..3).map(|c| wide.iter().map(|r| r[c]).collect()).collect();
        let pairs = hungarian(&tall);
        assert_eq!(assignment_cost(&tall, &pairs), 3.0);
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=7, 1usize..=7).prop_flat_map(|(n, m)| {
            proptest::collection::vec(
                proptest::collection::vec(
                    prop_oneof![8 => (0u32..50).prop_map(f64::from), 1 => Just(f64::INFINITY)],
                    m,
                ),
                n,
            )
        })
    }

    proptest! {
        #[test]
        fn optimal_against_brute_force(cost in arb_matrix()) {
            let pairs = hungarian(&cost);
            prop_assert!(is_one_to_one(&pairs));
            let (count, best) = brute_force(&cost);
            prop_assert_eq!(pairs.len(), count);
            prop_assert_eq!(assignment_cost(&cost, &pairs), best);
        }

        #[test]
        fn real_valued_costs_near_optimal(cost in (1usize..=6, 1usize..=6).prop_flat_map(|(n, m)| {
            proptest::collection::vec(proptest::collection::vec(-10.0..10.0f64, m), n)
        })) {
            let pairs = hungarian(&cost);
            prop_assert_eq!(pairs.len(), cost.len().min(cost[0].len()));
            let (_, best) = brute_force(&cost);
            prop_assert!((assignment_cost(&cost, &pairs) - best).abs() < 1e-9);
        }
    }
}
