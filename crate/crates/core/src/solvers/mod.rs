//! Policy iteration with pluggable evaluators and relative value iteration.

pub mod benchmark;
pub mod direct;
pub mod iterative;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StructuredMdp;
use crate::sparse::SparseTransitionMatrix;
use crate::structured::{relative_evaluate, steady_state, EvaluationResult};

pub use direct::{evaluate_direct, stationary_direct};
pub use iterative::{evaluate_fixed_point, stationary_power};

/// Relative tolerance under which two Q-values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Action id per state ordinal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub choice: Vec<usize>,
}

impl Policy {
    pub fn constant(n: usize, action: usize) -> Self {
        Policy {
            choice: vec![action; n],
        }
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    pub fn validate(&self, n: usize, actions: usize) -> Result<()> {
        if self.choice.len() != n {
            return Err(Error::config(format!(
                "policy covers {} states, model has {n}",
                self.choice.len()
            )));
        }
        if let Some((s, a)) = self.choice.iter().enumerate().find(|(_, &a)| a >= actions) {
            return Err(Error::config(format!("state {s} maps to undeclared action {a}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// Forward/backward sweeps over the root-cycle ordering.
    #[default]
    Structured,
    /// Iterated Bellman updates with span stopping.
    FixedPoint,
    /// Dense Gaussian elimination.
    Direct,
}

impl FromStr for Evaluator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "structured" | "rb" => Ok(Evaluator::Structured),
            "fixed" | "fixed_point" | "fixed-point" | "fp" => Ok(Evaluator::FixedPoint),
            "direct" | "gj" => Ok(Evaluator::Direct),
            other => Err(Error::config(format!("unknown evaluator {other:?}"))),
        }
    }
}

impl fmt::Display for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Evaluator::Structured => "structured",
            Evaluator::FixedPoint => "fixed",
            Evaluator::Direct => "direct",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Span tolerance for fixed-point evaluation and value iteration.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub evaluator: Evaluator,
    /// Wall-clock limit for one solve.
    #[serde(default)]
    pub time_limit: Option<Duration>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            epsilon: 1e-10,
            max_iterations: 100_000,
            evaluator: Evaluator::Structured,
            time_limit: None,
        }
    }
}

impl SolverOptions {
    pub fn with_evaluator(mut self, evaluator: Evaluator) -> Self {
        self.evaluator = evaluator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn deadline(&self) -> Deadline {
        Deadline {
            start: Instant::now(),
            limit: self.time_limit,
        }
    }
}

/// Wall-clock budget shared by the stages of one solve.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    start: Instant,
    limit: Option<Duration>,
}

impl Deadline {
    pub fn none() -> Self {
        Deadline {
            start: Instant::now(),
            limit: None,
        }
    }

    pub fn after(limit: Duration) -> Self {
        Deadline {
            start: Instant::now(),
            limit: Some(limit),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self.limit {
            Some(limit) if self.start.elapsed() >= limit => Err(Error::TimedOut {
                seconds: limit.as_secs_f64(),
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub evaluate_seconds: f64,
    pub improve_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub policy: Policy,
    /// Evaluation of `policy`; its stationary distribution is always filled.
    pub evaluation: EvaluationResult,
    pub iterations: usize,
    /// Gain after each evaluation (policy iteration only).
    pub rho_history: Vec<f64>,
    pub timing: Timing,
    /// Operations summed over all evaluations.
    pub eval_ops: usize,
    pub converged: bool,
}

impl SolveReport {
    pub fn rho(&self) -> f64 {
        self.evaluation.rho
    }

    pub fn pi(&self) -> &[f64] {
        self.evaluation.pi.as_deref().unwrap_or(&[])
    }
}

/// `Q(s, a) = r(s, a) + sum_s' P_a[s, s'] V(s')`, as `q[a][s]`.
pub fn q_values(mdp: &StructuredMdp, values: &[f64]) -> Vec<Vec<f64>> {
    mdp.actions
        .par_iter()
        .map(|a| {
            let pv = a.matrix.mul_vec(values);
            a.rewards.expected.iter().zip(pv).map(|(r, v)| r + v).collect()
        })
        .collect()
}

/// Greedy policy over `q[a][s]`. A state keeps its previous action when that
/// action is within [`TIE_TOLERANCE`] of the best; otherwise the lowest such
/// action wins.
pub fn improve(q: &[Vec<f64>], previous: &Policy) -> Policy {
    let n = previous.len();
    let choice = (0..n)
        .map(|s| {
            let best = q.iter().map(|qa| qa[s]).fold(f64::NEG_INFINITY, f64::max);
            let tol = TIE_TOLERANCE * best.abs().max(1.0);
            let attains = |a: usize| q[a][s] >= best - tol;
            let prev = previous.choice[s];
            if attains(prev) {
                prev
            } else {
                (0..q.len()).find(|&a| attains(a)).expect("some action attains the max")
            }
        })
        .collect();
    Policy { choice }
}

/// Evaluates one policy with the requested backend.
pub fn evaluate_policy(
    mdp: &StructuredMdp,
    policy: &Policy,
    options: &SolverOptions,
    deadline: &Deadline,
) -> Result<EvaluationResult> {
    let rewards = mdp.policy_rewards(&policy.choice);
    match options.evaluator {
        Evaluator::Structured => relative_evaluate(&mdp.policy_view(&policy.choice)?, &rewards),
        Evaluator::FixedPoint => {
            let m = mdp.policy_matrix(&policy.choice);
            evaluate_fixed_point(&m, &rewards, mdp.space.root, options.epsilon, options.max_iterations, deadline)
        }
        Evaluator::Direct => {
            let m = mdp.policy_matrix(&policy.choice);
            evaluate_direct(&m, &rewards, mdp.space.root, deadline)
        }
    }
}

/// Stationary distribution with the method matching `evaluator`.
pub fn stationary(
    mdp: &StructuredMdp,
    policy: &Policy,
    options: &SolverOptions,
    deadline: &Deadline,
) -> Result<Vec<f64>> {
    match options.evaluator {
        Evaluator::Structured => Ok(steady_state(&mdp.policy_view(&policy.choice)?)?.0),
        Evaluator::FixedPoint => stationary_power(
            &mdp.policy_matrix(&policy.choice),
            options.epsilon,
            options.max_iterations,
            deadline,
        ),
        Evaluator::Direct => stationary_direct(&mdp.policy_matrix(&policy.choice), deadline),
    }
}

fn fill_pi(
    mdp: &StructuredMdp,
    policy: &Policy,
    options: &SolverOptions,
    deadline: &Deadline,
    eval: &mut EvaluationResult,
) -> Result<()> {
    if eval.pi.is_none() {
        eval.pi = Some(stationary(mdp, policy, options, deadline)?);
    }
    Ok(())
}

/// Policy iteration from the all-first-action policy: evaluate, improve,
/// stop when the policy repeats.
pub fn policy_iteration(mdp: &StructuredMdp, options: &SolverOptions) -> Result<SolveReport> {
    policy_iteration_from(mdp, options, Policy::constant(mdp.n(), 0))
}

pub fn policy_iteration_from(mdp: &StructuredMdp, options: &SolverOptions, start: Policy) -> Result<SolveReport> {
    options.validate()?;
    start.validate(mdp.n(), mdp.num_actions())?;
    let deadline = options.deadline();
    let started = Instant::now();
    let mut timing = Timing::default();
    let mut policy = start;
    let mut rho_history = Vec::new();
    let mut eval_ops = 0;
    let mut iterations = 0;
    loop {
        deadline.check()?;
        iterations += 1;
        let t = Instant::now();
        let mut eval = evaluate_policy(mdp, &policy, options, &deadline)?;
        timing.evaluate_seconds += t.elapsed().as_secs_f64();
        eval_ops += eval.ops;
        rho_history.push(eval.rho);
        log::debug!("policy iteration {iterations}: rho = {}", eval.rho);

        let t = Instant::now();
        let next = improve(&q_values(mdp, &eval.values), &policy);
        timing.improve_seconds += t.elapsed().as_secs_f64();
        if next == policy || iterations >= options.max_iterations {
            let converged = next == policy;
            fill_pi(mdp, &policy, options, &deadline, &mut eval)?;
            timing.total_seconds = started.elapsed().as_secs_f64();
            return Ok(SolveReport {
                policy,
                evaluation: eval,
                iterations,
                rho_history,
                timing,
                eval_ops,
                converged,
            });
        }
        policy = next;
    }
}

/// Relative value iteration with span stopping and the root as reference.
///
/// The returned policy is greedy for the final values, the gain is the
/// midpoint of the last Bellman increments and the stationary distribution
/// comes from the structured sweep. `converged` is false when the
/// iteration cap was reached.
pub fn relative_value_iteration(mdp: &StructuredMdp, options: &SolverOptions) -> Result<SolveReport> {
    options.validate()?;
    let deadline = options.deadline();
    let started = Instant::now();
    let n = mdp.n();
    let root = mdp.space.root;
    let mut w = vec![0.0; n];
    let mut rho = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut ops = 0;
    while iterations < options.max_iterations {
        if iterations % 64 == 0 {
            deadline.check()?;
        }
        iterations += 1;
        let q = q_values(mdp, &w);
        ops += mdp.actions.iter().map(|a| a.matrix.nnz() + n).sum::<usize>();
        let next: Vec<f64> = (0..n)
            .map(|s| q.iter().map(|qa| qa[s]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let (lo, hi) = next
            .iter()
            .zip(&w)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        rho = 0.5 * (lo + hi);
        let anchor = next[root];
        w = next.into_iter().map(|v| v - anchor).collect();
        if hi - lo < options.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("relative value iteration stopped at the cap of {iterations} iterations");
    }
    let policy = improve(&q_values(mdp, &w), &Policy::constant(n, 0));
    let pi = steady_state(&mdp.policy_view(&policy.choice)?)?.0;
    let total = started.elapsed().as_secs_f64();
    Ok(SolveReport {
        policy,
        evaluation: EvaluationResult {
            values: w,
            rho,
            pi: Some(pi),
            ops,
        },
        iterations,
        rho_history: Vec::new(),
        timing: Timing {
            evaluate_seconds: total,
            improve_seconds: 0.0,
            total_seconds: total,
        },
        eval_ops: ops,
        converged,
    })
}

/// Max-norm of `V + rho - r - P V` over all states.
pub fn bellman_residual(matrix: &SparseTransitionMatrix, rewards: &[f64], eval: &EvaluationResult) -> f64 {
    let pv = matrix.mul_vec(&eval.values);
    (0..rewards.len())
        .map(|s| (eval.values[s] + eval.rho - rewards[s] - pv[s]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{EpDistributionSet, ServiceProfile};
    use crate::model::{assemble_mdp, ActionSpec, RewardModel};
    use crate::state::ModelConfig;

    fn toy(zs: &[f64], rewards: RewardModel) -> StructuredMdp {
        let cfg = ModelConfig::new(9, 12, 3, 3, 0.1, 0.9);
        let arr = EpDistributionSet::stationary(9, 12, &[1.0 / 3.0; 3]).unwrap();
        let service = ServiceProfile::constant(0.3).unwrap();
        assemble_mdp(&cfg, &arr, &service, &ActionSpec::uniform_set(zs), &rewards).unwrap()
    }

    #[test]
    fn zero_values_give_rewards_as_q() {
        let mdp = toy(&[0.2, 0.8], RewardModel::new(1.0, -2.0, -1.0));
        let q = q_values(&mdp, &vec![0.0; mdp.n()]);
        for (a, qa) in q.iter().enumerate() {
            assert_eq!(qa, &mdp.actions[a].rewards.expected);
        }
    }

    #[test]
    fn ties_keep_incumbent() {
        let q = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        let prev = Policy { choice: vec![2, 1] };
        assert_eq!(improve(&q, &prev), prev);
        let q = vec![vec![1.0, 2.0], vec![1.5, 2.0]];
        assert_eq!(improve(&q, &Policy { choice: vec![0, 0] }).choice, vec![1, 0]);
    }

    #[test]
    fn single_action_stops_after_one_round() {
        let mdp = toy(&[0.5], RewardModel::default());
        let rep = policy_iteration(&mdp, &SolverOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.policy.choice.iter().all(|&a| a == 0));
    }

    #[test]
    fn evaluators_agree_on_toy() {
        let mdp = toy(&[0.1, 0.5, 0.9], RewardModel::new(1.0, -1.0, -0.5));
        let base = policy_iteration(&mdp, &SolverOptions::default()).unwrap();
        for ev in [Evaluator::FixedPoint, Evaluator::Direct] {
            let opts = SolverOptions {
                epsilon: 1e-12,
                ..SolverOptions::default().with_evaluator(ev)
            };
            let rep = policy_iteration(&mdp, &opts).unwrap();
            assert_eq!(rep.policy, base.policy, "{ev}");
            assert!((rep.rho() - base.rho()).abs() < 1e-8, "{ev}");
        }
        let rvi = relative_value_iteration(&mdp, &SolverOptions::default()).unwrap();
        assert!(rvi.converged);
        assert_eq!(rvi.policy, base.policy);
        assert!((rvi.rho() - base.rho()).abs() < 1e-8);
    }

    #[test]
    fn gain_never_decreases() {
        let mdp = toy(&[0.1, 0.3, 0.6, 0.9], RewardModel::new(1.0, -3.0, -2.0));
        let rep = policy_iteration(&mdp, &SolverOptions::default()).unwrap();
        for w in rep.rho_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn zero_time_limit_times_out() {
        let mdp = toy(&[0.1, 0.9], RewardModel::default());
        let opts = SolverOptions {
            time_limit: Some(Duration::ZERO),
            ..SolverOptions::default()
        };
        assert!(matches!(policy_iteration(&mdp, &opts), Err(Error::TimedOut { .. })));
    }
}
