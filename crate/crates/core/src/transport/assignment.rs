//! Dense linear assignment by shortest augmenting paths with dual potentials.
//!
//! `O(n³)` time, `O(n²)` input, `O(n)` working state.

/// Minimum-cost perfect matching on a row-major `n × n` cost matrix.
///
/// Returns `assignment[row] = column` and the total cost summed in row order.
pub fn solve(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based potentials and match arrays; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut col0 = 0usize;
        min_to.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[col0] = true;
            let r0 = col_owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r0 - 1) * n + (col - 1)] - u[r0] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[col_owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if col_owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            col_owner[col0] = col_owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        assignment[col_owner[col] - 1] = col - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * n + c])
        .sum();
    (assignment, total)
}
