//! Iterative evaluation backends: Bellman fixed-point and power iteration.

use crate::error::{Error, Result};
use crate::solvers::Deadline;
use crate::sparse::SparseTransitionMatrix;
use crate::structured::EvaluationResult;

const CHECK_EVERY: usize = 256;

/// Iterates `w <- r + P w`, re-anchored at `root`, until the span of the
/// increment drops below `epsilon`. The gain is the increment midpoint.
pub fn evaluate_fixed_point(
    matrix: &SparseTransitionMatrix,
    rewards: &[f64],
    root: usize,
    epsilon: f64,
    max_iterations: usize,
    deadline: &Deadline,
) -> Result<EvaluationResult> {
    let n = matrix.n();
    let mut w = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut ops = 0;
    let mut span = f64::INFINITY;
    for it in 1..=max_iterations {
        if it % CHECK_EVERY == 0 {
            deadline.check()?;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let v = rewards[s] + matrix.row(s).map(|(t, p)| p * w[t]).sum::<f64>();
            let d = v - w[s];
            lo = lo.min(d);
            hi = hi.max(d);
            next[s] = v;
        }
        ops += matrix.nnz() + n;
        let anchor = next[root];
        for (dst, v) in w.iter_mut().zip(&next) {
            *dst = v - anchor;
        }
        span = hi - lo;
        if span < epsilon {
            return Ok(EvaluationResult {
                values: w,
                rho: 0.5 * (lo + hi),
                pi: None,
                ops,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        span,
    })
}

/// Stationary distribution by repeated `pi <- pi P` from the uniform vector,
/// stopping when successive iterates differ by less than `epsilon`.
pub fn stationary_power(
    matrix: &SparseTransitionMatrix,
    epsilon: f64,
    max_iterations: usize,
    deadline: &Deadline,
) -> Result<Vec<f64>> {
    let n = matrix.n();
    let mut pi = vec![1.0 / n as f64; n];
    let mut change = f64::INFINITY;
    for it in 1..=max_iterations {
        if it % CHECK_EVERY == 0 {
            deadline.check()?;
        }
        let mut next = matrix.left_mul(&pi);
        let total: f64 = next.iter().sum();
        for p in &mut next {
            *p /= total;
        }
        change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < epsilon {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        span: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_closed_form() {
        // s0 -> s1 w.p. p, s1 -> s0 w.p. 1; r = (0, 1)
        let p = 0.4;
        let m = SparseTransitionMatrix::from_triplets(2, &[(0, 0, 1.0 - p), (0, 1, p), (1, 0, 1.0)]);
        let e = evaluate_fixed_point(&m, &[0.0, 1.0], 0, 1e-13, 10_000, &Deadline::none()).unwrap();
        let rho = p / (1.0 + p);
        assert!((e.rho - rho).abs() < 1e-10);
        assert!((e.values[1] - (1.0 - rho)).abs() < 1e-10);
        let pi = stationary_power(&m, 1e-14, 10_000, &Deadline::none()).unwrap();
        assert!((pi[0] - 1.0 / (1.0 + p)).abs() < 1e-10);
    }

    #[test]
    fn periodic_chain_does_not_converge() {
        let m = SparseTransitionMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        let err = evaluate_fixed_point(&m, &[1.0, 0.0], 0, 1e-10, 50, &Deadline::none()).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 50, .. }));
    }
}
