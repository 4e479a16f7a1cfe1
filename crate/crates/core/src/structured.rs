//! Linear-time evaluation of chains in which every cycle passes through a
//! single root state.
//!
//! Given an ordering with the root first, every arc of such a chain either
//! returns to the root, is a self-loop, or moves strictly forward. The
//! stationary distribution then follows from one forward sweep and the
//! relative values from one backward sweep.

use crate::error::{Error, Result};
use crate::sparse::SparseTransitionMatrix;

/// A transition matrix split along an ordering into arcs into the root
/// (`C`), self-loops (`D`) and forward arcs (`U`).
#[derive(Debug, Clone)]
pub struct TypeBView {
    /// State ids in evaluation order; `order[0]` is the root.
    pub order: Vec<usize>,
    /// `C[s, root]`, indexed by state id. Includes the root's self-loop.
    pub to_root: Vec<f64>,
    /// `D[s, s]` for non-root states; zero for the root.
    pub diag: Vec<f64>,
    /// States whose only arc goes to the root with probability one.
    pub certain_return: Vec<bool>,
    u_ptr: Vec<usize>,
    u_cols: Vec<usize>,
    u_vals: Vec<f64>,
}

impl TypeBView {
    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn root(&self) -> usize {
        self.order[0]
    }

    /// Number of forward arcs.
    pub fn forward_arcs(&self) -> usize {
        self.u_cols.len()
    }

    /// Forward arcs leaving state `s`.
    pub fn forward(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.u_ptr[s]..self.u_ptr[s + 1];
        self.u_cols[span.clone()].iter().copied().zip(self.u_vals[span].iter().copied())
    }
}

/// Tolerance for a single arc into the root to count as certain.
pub const CERTAIN_TOLERANCE: f64 = 1e-12;

/// Splits `matrix` along `ordering`, rejecting any arc that goes backwards
/// to a state other than the root and any non-root absorbing state.
///
/// States in errors are named `#<id>`.
pub fn verify_type_b(matrix: &SparseTransitionMatrix, ordering: &[usize]) -> Result<TypeBView> {
    let n = matrix.n();
    if ordering.len() != n || n == 0 {
        return Err(Error::config(format!(
            "ordering has {} entries for a {n}-state matrix",
            ordering.len()
        )));
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &s) in ordering.iter().enumerate() {
        if s >= n || pos[s] != usize::MAX {
            return Err(Error::config(format!("ordering is not a permutation (entry {s})")));
        }
        pos[s] = k;
    }
    let root = ordering[0];

    let mut to_root = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut certain_return = vec![false; n];
    let mut u_ptr = Vec::with_capacity(n + 1);
    let mut u_cols = Vec::with_capacity(matrix.nnz());
    let mut u_vals = Vec::with_capacity(matrix.nnz());
    u_ptr.push(0);
    for s in 0..n {
        for (t, p) in matrix.row(s) {
            if t == root {
                to_root[s] += p;
            } else if t == s {
                diag[s] += p;
            } else if pos[t] > pos[s] {
                u_cols.push(t);
                u_vals.push(p);
            } else {
                return Err(Error::StructureViolation {
                    from: format!("#{s}"),
                    to: format!("#{t}"),
                });
            }
        }
        certain_return[s] = s != root
            && matrix.row_range(s).len() == 1
            && (to_root[s] - 1.0).abs() <= CERTAIN_TOLERANCE;
        if diag[s] >= 1.0 {
            return Err(Error::Absorbing { state: format!("#{s}") });
        }
        u_ptr.push(u_cols.len());
    }
    Ok(TypeBView {
        order: ordering.to_vec(),
        to_root,
        diag,
        certain_return,
        u_ptr,
        u_cols,
        u_vals,
    })
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Stationary distribution by a forward sweep. Returns `(pi, ops)`.
///
/// `alpha(root) = 1` and `alpha(s) = sum alpha(s') U[s', s] / (1 - D[s, s])`,
/// then `pi = alpha / sum(alpha)`.
pub fn steady_state(view: &TypeBView) -> Result<(Vec<f64>, usize)> {
    let n = view.n();
    let mut ops = 0;
    // inflow accumulates sum alpha(s') U[s', s] as predecessors are finalized
    let mut inflow = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    let mut total = NeumaierSum::default();
    for (k, &s) in view.order.iter().enumerate() {
        alpha[s] = if k == 0 { 1.0 } else { inflow[s] / (1.0 - view.diag[s]) };
        total.add(alpha[s]);
        ops += 1;
        for (t, p) in view.forward(s) {
            inflow[t] += alpha[s] * p;
            ops += 1;
        }
    }
    let total = total.value();
    if !total.is_finite() {
        return Err(Error::Data(format!("stationary weights are not finite (sum {total})")));
    }
    let pi_root = 1.0 / total;
    for a in &mut alpha {
        *a *= pi_root;
    }
    ops += n;
    Ok((alpha, ops))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    /// Relative values, indexed by state id, with `V(root) = 0`.
    pub values: Vec<f64>,
    /// Long-run average reward.
    pub rho: f64,
    /// Stationary distribution when the evaluator produces one.
    pub pi: Option<Vec<f64>>,
    /// Arithmetic operations counted by the evaluator.
    pub ops: usize,
}

/// Relative values by a backward sweep given the gain `rho`.
/// Returns `(values, ops)`.
pub fn relative_values(view: &TypeBView, rewards: &[f64], rho: f64) -> (Vec<f64>, usize) {
    let n = view.n();
    let mut ops = 0;
    let mut v = vec![0.0; n];
    for &s in view.order.iter().skip(1).rev() {
        if view.certain_return[s] {
            v[s] = rewards[s] - rho;
            ops += 1;
            continue;
        }
        let mut acc = rewards[s] - rho;
        for (t, p) in view.forward(s) {
            acc += p * v[t];
            ops += 1;
        }
        // arcs into the root contribute C[s, root] * V(root) = 0
        v[s] = acc / (1.0 - view.diag[s]);
        ops += 1;
    }
    (v, ops)
}

/// Stationary distribution, gain and relative values of a type-B chain.
/// The operation count stays within `2m + 4n` for `m` stored arcs.
pub fn relative_evaluate(view: &TypeBView, rewards: &[f64]) -> Result<EvaluationResult> {
    let (pi, mut ops) = steady_state(view)?;
    let rho = pi
        .iter()
        .zip(rewards)
        .map(|(p, r)| p * r)
        .collect::<NeumaierSum>()
        .value();
    ops += view.n();
    let (values, back) = relative_values(view, rewards, rho);
    Ok(EvaluationResult {
        values,
        rho,
        pi: Some(pi),
        ops: ops + back,
    })
}

/// Verifies and evaluates in one call.
pub fn evaluate_structured(
    matrix: &SparseTransitionMatrix,
    rewards: &[f64],
    ordering: &[usize],
) -> Result<EvaluationResult> {
    let view = verify_type_b(matrix, ordering)?;
    relative_evaluate(&view, rewards)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state() -> SparseTransitionMatrix {
        // 0 -> 1 -> 2 -> 0 with self-loops and shortcuts home
        SparseTransitionMatrix::from_triplets(
            3,
            &[
                (0, 0, 0.2),
                (0, 1, 0.8),
                (1, 1, 0.5),
                (1, 2, 0.3),
                (1, 0, 0.2),
                (2, 0, 1.0),
            ],
        )
    }

    #[test]
    fn stationary_balance() {
        let m = three_state();
        let view = verify_type_b(&m, &[0, 1, 2]).unwrap();
        let (pi, _) = steady_state(&view).unwrap();
        let back = m.left_mul(&pi);
        for (a, b) in pi.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn poisson_equation_holds() {
        let m = three_state();
        let r = [1.0, -2.0, 5.0];
        let res = evaluate_structured(&m, &r, &[0, 1, 2]).unwrap();
        assert_eq!(res.values[0], 0.0);
        let pv = m.mul_vec(&res.values);
        for s in 0..3 {
            let lhs = res.values[s] + res.rho;
            assert!((lhs - r[s] - pv[s]).abs() < 1e-13, "state {s}");
        }
        assert!(res.ops <= 2 * m.nnz() + 4 * 3);
    }

    #[test]
    fn backward_arc_is_rejected() {
        let m = SparseTransitionMatrix::from_triplets(
            3,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 0.5), (2, 0, 0.5)],
        );
        match verify_type_b(&m, &[0, 1, 2]).unwrap_err() {
            Error::StructureViolation { from, to } => assert_eq!((from.as_str(), to.as_str()), ("#2", "#1")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn absorbing_state_is_rejected() {
        let m = SparseTransitionMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 1, 1.0)]);
        assert!(matches!(verify_type_b(&m, &[0, 1]), Err(Error::Absorbing { .. })));
    }

    #[test]
    fn certain_return_states_skip_the_sum() {
        let m = three_state();
        let view = verify_type_b(&m, &[0, 1, 2]).unwrap();
        assert_eq!(view.certain_return, vec![false, false, true]);
        let res = relative_evaluate(&view, &[0.0, 0.0, 4.0]).unwrap();
        assert_eq!(res.values[2], 4.0 - res.rho);
    }

    #[test]
    fn single_state_chain() {
        let m = SparseTransitionMatrix::from_triplets(1, &[(0, 0, 1.0)]);
        let res = evaluate_structured(&m, &[3.5], &[0]).unwrap();
        assert_eq!(res.rho, 3.5);
        assert_eq!(res.pi, Some(vec![1.0]));
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let s: NeumaierSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }
}
