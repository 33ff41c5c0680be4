use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Maximum-weight perfect assignment. Entry `i` of the result is the column matched to row `i`.
///
/// Shortest augmenting paths with dual potentials, `O(n³)`.
pub fn hungarian_max(score: &Matrix) -> Result<Vec<usize>> {
    let n = score.rows();
    if score.cols() != n {
        return Err(Error::Dimension(format!(
            "assignment needs a square matrix, got {}x{}",
            n,
            score.cols()
        )));
    }
    if !score.is_finite() {
        return Err(Error::NonFinite("assignment scores".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let cost = |i: usize, j: usize| -score[(i, j)];

    // 1-based bookkeeping; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
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
            for j in 0..=n {
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
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of_col[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Sum of `score[i, perm[i]]`.
pub fn assignment_score(score: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| score[(i, j)]).sum()
}

/// Exhaustive search over all permutations (Heap's algorithm). Exponential; for small `n` only.
pub fn brute_force_max(score: &Matrix) -> (Vec<usize>, f64) {
    let n = score.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (perm.clone(), assignment_score(score, &perm));
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = assignment_score(score, &perm);
            if s > best.1 {
                best = (perm.clone(), s);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}
