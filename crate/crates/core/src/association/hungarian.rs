//! Shortest-augmenting-path Hungarian solver, O(n²·m) for n ≤ m.

/// Solves a dense rectangular assignment with `rows <= cols`; every row gets
/// a column. Returns the column chosen for each row.
///
/// Ties resolve toward lower column indices: columns are scanned in
/// ascending order with strict comparisons.
pub(crate) fn solve_dense(costs: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    debug_assert!(rows <= cols);
    debug_assert_eq!(costs.len(), rows * cols);
    if rows == 0 {
        return Vec::new();
    }
    let at = |i: usize, j: usize| costs[(i - 1) * cols + (j - 1)];

    // 1-based with a virtual column 0 holding the row being inserted
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_three_by_three() {
        // classic example; optimum 0->1, 1->0, 2->2 with cost 1 + 2 + 2 = 5
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve_dense(&c, 3, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn wide_matrix() {
        let c = [3.0, 1.0, 7.0];
        assert_eq!(solve_dense(&c, 1, 3), vec![1]);
    }

    #[test]
    fn empty() {
        assert!(solve_dense(&[], 0, 4).is_empty());
    }
}
