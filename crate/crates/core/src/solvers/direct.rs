//! Dense Gaussian elimination backends.

use crate::error::{Error, Result};
use crate::solvers::Deadline;
use crate::sparse::SparseTransitionMatrix;
use crate::structured::EvaluationResult;

/// Solves the `dim x dim` system stored row-major in `a` with the right-hand
/// side in column `dim` (row stride `dim + 1`), by elimination with partial
/// pivoting. Returns the solution and the number of multiply-adds.
pub fn solve_dense(mut a: Vec<f64>, dim: usize, deadline: &Deadline) -> Result<(Vec<f64>, usize)> {
    let w = dim + 1;
    assert_eq!(a.len(), dim * w);
    let mut ops = 0usize;
    for k in 0..dim {
        deadline.check()?;
        let (piv, best) = (k..dim)
            .map(|i| (i, a[i * w + k].abs()))
            .fold((k, -1.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if !(best > 0.0) {
            return Err(Error::Singular { pivot: k });
        }
        if piv != k {
            for j in k..w {
                a.swap(k * w + j, piv * w + j);
            }
        }
        let (head, tail) = a.split_at_mut((k + 1) * w);
        let pivot_row = &head[k * w + k..k * w + w];
        let diag = pivot_row[0];
        for row in tail.chunks_exact_mut(w) {
            let f = row[k] / diag;
            for (x, p) in row[k..].iter_mut().zip(pivot_row) {
                *x -= f * p;
            }
        }
        ops += (dim - k - 1) * (w - k);
    }
    let mut x = vec![0.0; dim];
    for k in (0..dim).rev() {
        let row = &a[k * w..k * w + w];
        let s: f64 = (k + 1..dim).map(|j| row[j] * x[j]).sum();
        x[k] = (row[dim] - s) / row[k];
        ops += dim - k;
    }
    Ok((x, ops))
}

/// Solves `V + rho - P V = r` together with `V(root) = 0` as one dense
/// system in the `n + 1` unknowns `(V, rho)`.
pub fn evaluate_direct(
    matrix: &SparseTransitionMatrix,
    rewards: &[f64],
    root: usize,
    deadline: &Deadline,
) -> Result<EvaluationResult> {
    let n = matrix.n();
    let dim = n + 1;
    let w = dim + 1;
    let mut a = vec![0.0; dim * w];
    for s in 0..n {
        let row = &mut a[s * w..(s + 1) * w];
        row[s] += 1.0;
        for (t, p) in matrix.row(s) {
            row[t] -= p;
        }
        row[n] = 1.0;
        row[dim] = rewards[s];
    }
    a[n * w + root] = 1.0;
    let (mut x, ops) = solve_dense(a, dim, deadline)?;
    let rho = x.pop().expect("gain unknown");
    x[root] = 0.0;
    Ok(EvaluationResult {
        values: x,
        rho,
        pi: None,
        ops,
    })
}

/// Solves `pi (I - P) = 0`, `sum(pi) = 1` densely, replacing the last
/// balance equation by the normalization.
pub fn stationary_direct(matrix: &SparseTransitionMatrix, deadline: &Deadline) -> Result<Vec<f64>> {
    let n = matrix.n();
    let w = n + 1;
    let mut a = vec![0.0; n * w];
    for (s, t, p) in matrix.triplets() {
        // equation t collects inflow into t
        a[t * w + s] -= p;
    }
    for s in 0..n {
        a[s * w + s] += 1.0;
    }
    let last = (n - 1) * w;
    for j in 0..n {
        a[last + j] = 1.0;
    }
    a[last + n] = 1.0;
    Ok(solve_dense(a, n, deadline)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_closed_form() {
        let p = 0.25;
        let m = SparseTransitionMatrix::from_triplets(2, &[(0, 0, 1.0 - p), (0, 1, p), (1, 0, 1.0)]);
        let e = evaluate_direct(&m, &[0.0, 1.0], 0, &Deadline::none()).unwrap();
        let rho = p / (1.0 + p);
        assert!((e.rho - rho).abs() < 1e-14);
        assert!((e.values[1] - (1.0 - rho)).abs() < 1e-14);
        let pi = stationary_direct(&m, &Deadline::none()).unwrap();
        assert!((pi[1] - p / (1.0 + p)).abs() < 1e-14);
    }

    #[test]
    fn cubic_operation_count() {
        let n = 30;
        let triplets: Vec<_> = (0..n).map(|s| (s, (s + 1) % n, 0.5)).chain((0..n).map(|s| (s, s, 0.5))).collect();
        let m = SparseTransitionMatrix::from_triplets(n, &triplets);
        let e = evaluate_direct(&m, &vec![1.0; n], 0, &Deadline::none()).unwrap();
        assert!(e.ops >= (n + 1).pow(3) / 3);
        assert!((e.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_reported() {
        let a = vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0];
        assert!(matches!(solve_dense(a, 2, &Deadline::none()), Err(Error::Singular { pivot: 1 })));
    }
}
