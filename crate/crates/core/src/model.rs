//! Per-action transition matrices and rewards for the battery MDP.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{for_each_outcome, Kernel, SlotEvent};
use crate::error::{Error, Result};
use crate::ingest::{EpDistributionSet, ServiceProfile};
use crate::sparse::SparseTransitionMatrix;
use crate::state::{canonical_ordering, enumerate_reachable_states, ModelConfig, Phase, StateSpace};
use crate::structured::{verify_type_b, TypeBView};

/// Row sums further than this from one are construction bugs.
pub const CONSTRUCTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `g(x) = x`
    #[default]
    Identity,
    /// `g(x) = x - F`
    Shifted,
}

impl std::str::FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" => Ok(Gain::Identity),
            "shifted" | "threshold-shifted" => Ok(Gain::Shifted),
            other => Err(Error::config(format!("unknown gain function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    /// Reward per unit of `g(x)` at a release.
    pub r1_plus: f64,
    /// Reward per lost packet (non-positive).
    pub r2_minus: f64,
    /// Reward per empty-battery outcome (non-positive).
    pub r3_minus: f64,
    #[serde(default)]
    pub gain: Gain,
}

impl Default for RewardModel {
    fn default() -> Self {
        RewardModel::new(1.0, 0.0, 0.0)
    }
}

impl RewardModel {
    pub fn new(r1_plus: f64, r2_minus: f64, r3_minus: f64) -> Self {
        RewardModel {
            r1_plus,
            r2_minus,
            r3_minus,
            gain: Gain::Identity,
        }
    }

    pub fn with_gain(mut self, gain: Gain) -> Self {
        self.gain = gain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r1_plus >= 0.0) || !(self.r2_minus <= 0.0) || !(self.r3_minus <= 0.0) {
            return Err(Error::config(format!(
                "reward signs must be r1 >= 0, r2 <= 0, r3 <= 0 (got {}, {}, {})",
                self.r1_plus, self.r2_minus, self.r3_minus
            )));
        }
        Ok(())
    }

    pub fn g(&self, x: u32, threshold: u32) -> f64 {
        match self.gain {
            Gain::Identity => x as f64,
            Gain::Shifted => x as f64 - threshold as f64,
        }
    }

    /// Reward of one realized slot. Shared by the matrix builder and the
    /// simulator.
    pub fn event_reward(&self, event: &SlotEvent, threshold: u32) -> f64 {
        let mut r = 0.0;
        if let Some(x) = event.released {
            r += self.g(x, threshold) * self.r1_plus;
        }
        if event.lost > 0 {
            r += event.lost as f64 * self.r2_minus;
        }
        if event.emptied {
            r += self.r3_minus;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Release {
    /// Same probability for every level `x >= F` in both phases.
    Uniform(f64),
    /// Explicit per-level probabilities; must cover `[F, C]` in both phases.
    PerLevel {
        on: BTreeMap<u32, f64>,
        off: BTreeMap<u32, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub label: String,
    pub release: Release,
    /// Per-action service profile; `None` inherits the model default.
    #[serde(default)]
    pub service: Option<ServiceProfile>,
}

impl ActionSpec {
    pub fn uniform(label: impl Into<String>, z: f64) -> Self {
        ActionSpec {
            label: label.into(),
            release: Release::Uniform(z),
            service: None,
        }
    }

    /// Labels `a1, a2, ...` for the given uniform release probabilities.
    pub fn uniform_set(zs: &[f64]) -> Vec<ActionSpec> {
        zs.iter()
            .enumerate()
            .map(|(i, &z)| ActionSpec::uniform(format!("a{}", i + 1), z))
            .collect()
    }

    pub fn release_prob(&self, x: u32, phase: Phase) -> Option<f64> {
        match &self.release {
            Release::Uniform(z) => Some(*z),
            Release::PerLevel { on, off } => match phase {
                Phase::On => on.get(&x).copied(),
                Phase::Off => off.get(&x).copied(),
            },
        }
    }

    /// Resolves the action's probabilities against a configuration.
    pub fn kernel(&self, config: &ModelConfig, default_service: &ServiceProfile) -> Result<Kernel> {
        let service = self.service.as_ref().unwrap_or(default_service);
        service.covers(config.t0, config.deadline).map_err(|e| {
            Error::config(format!("action {}: {e}", self.label))
        })?;
        let mut hours = [0.0; 24];
        for (&h, &p) in &service.probs {
            hours[h as usize] = p;
        }

        let mut tables = [vec![0.0; config.capacity as usize + 1], vec![0.0; config.capacity as usize + 1]];
        for (table, phase) in tables.iter_mut().zip([Phase::On, Phase::Off]) {
            for x in config.threshold..=config.capacity {
                let z = self.release_prob(x, phase).ok_or_else(|| {
                    Error::config(format!(
                        "action {}: release probability undefined at level {x} ({phase})",
                        self.label
                    ))
                })?;
                if !(0.0..1.0).contains(&z) {
                    return Err(Error::config(format!(
                        "action {}: release probability {z} outside [0,1)",
                        self.label
                    )));
                }
                table[x as usize] = z;
            }
        }
        let [release_on, release_off] = tables;
        Ok(Kernel {
            release_on,
            release_off,
            service: hours,
        })
    }
}

/// Expected per-slot quantities of one action, indexed by state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRewards {
    /// Mean reward of each stored matrix entry, aligned with the matrix.
    pub entry_rewards: Vec<f64>,
    /// `r(s, a)`.
    pub expected: Vec<f64>,
    /// Expected `g(x)` released.
    pub release_gain: Vec<f64>,
    pub lost: Vec<f64>,
    /// Probability of an empty-battery outcome.
    pub emptied: Vec<f64>,
    /// Probability that a demand finds the battery empty.
    pub delay: Vec<f64>,
}

fn build_action(
    config: &ModelConfig,
    arrivals: &EpDistributionSet,
    space: &StateSpace,
    kernel: &Kernel,
    rewards: &RewardModel,
) -> Result<(SparseTransitionMatrix, ActionRewards)> {
    let n = space.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut entry_rewards = Vec::new();
    let mut expected = vec![0.0; n];
    let mut release_gain = vec![0.0; n];
    let mut lost = vec![0.0; n];
    let mut emptied = vec![0.0; n];
    let mut delay = vec![0.0; n];
    row_ptr.push(0);

    let mut row: Vec<(usize, f64, f64)> = Vec::new();
    for (i, &s) in space.states.iter().enumerate() {
        row.clear();
        let mut missing = None;
        for_each_outcome(config, arrivals, kernel, s, |o| {
            let Some(j) = space.index_of(&o.next) else {
                missing = Some(o.next);
                return;
            };
            let r = rewards.event_reward(&o.event, config.threshold);
            row.push((j, o.prob, o.prob * r));
            expected[i] += o.prob * r;
            if let Some(x) = o.event.released {
                release_gain[i] += o.prob * rewards.g(x, config.threshold);
            }
            lost[i] += o.prob * o.event.lost as f64;
            if o.event.emptied {
                emptied[i] += o.prob;
            }
        });
        if let Some(t) = missing {
            return Err(Error::Construction {
                state: s.to_string(),
                message: format!("successor {t} is not in the state space"),
            });
        }
        if s.x == 0 {
            delay[i] = kernel.service[s.h as usize];
        }

        row.sort_by_key(|e| e.0);
        let start = cols.len();
        let mut total = 0.0;
        for &(j, p, pr) in &row {
            total += p;
            if cols.len() > start && *cols.last().unwrap() == j {
                *vals.last_mut().unwrap() += p;
                *entry_rewards.last_mut().unwrap() += pr;
            } else {
                cols.push(j);
                vals.push(p);
                entry_rewards.push(pr);
            }
        }
        if (total - 1.0).abs() > CONSTRUCTION_TOLERANCE {
            return Err(Error::Construction {
                state: s.to_string(),
                message: format!("outgoing probabilities sum to {total}"),
            });
        }
        row_ptr.push(cols.len());
    }
    // contributions -> mean reward per entry
    for (r, p) in entry_rewards.iter_mut().zip(&vals) {
        *r /= p;
    }

    Ok((
        SparseTransitionMatrix::from_csr(row_ptr, cols, vals),
        ActionRewards {
            entry_rewards,
            expected,
            release_gain,
            lost,
            emptied,
            delay,
        },
    ))
}

pub fn build_transition_matrix(
    action: &ActionSpec,
    arrivals: &EpDistributionSet,
    config: &ModelConfig,
    space: &StateSpace,
    default_service: &ServiceProfile,
) -> Result<SparseTransitionMatrix> {
    let kernel = action.kernel(config, default_service)?;
    build_action(config, arrivals, space, &kernel, &RewardModel::default()).map(|(m, _)| m)
}

/// Event-level rewards of one action: mean reward per matrix entry and the
/// expected reward vector `r(s, a)`.
pub fn build_rewards(
    action: &ActionSpec,
    arrivals: &EpDistributionSet,
    config: &ModelConfig,
    rewards: &RewardModel,
    space: &StateSpace,
    default_service: &ServiceProfile,
) -> Result<ActionRewards> {
    let kernel = action.kernel(config, default_service)?;
    build_action(config, arrivals, space, &kernel, rewards).map(|(_, r)| r)
}

#[derive(Debug, Clone)]
pub struct ActionModel {
    pub spec: ActionSpec,
    pub kernel: Kernel,
    pub matrix: SparseTransitionMatrix,
    pub rewards: ActionRewards,
}

/// The full decision model: shared state space and ordering plus one
/// type-B-verified matrix per action.
#[derive(Debug, Clone)]
pub struct StructuredMdp {
    pub config: ModelConfig,
    pub rewards: RewardModel,
    pub arrivals: EpDistributionSet,
    pub service: ServiceProfile,
    pub space: StateSpace,
    /// States in evaluation order; `ordering[0]` is the root.
    pub ordering: Vec<usize>,
    pub actions: Vec<ActionModel>,
}

pub fn assemble_mdp(
    config: &ModelConfig,
    arrivals: &EpDistributionSet,
    service: &ServiceProfile,
    actions: &[ActionSpec],
    rewards: &RewardModel,
) -> Result<StructuredMdp> {
    if actions.is_empty() {
        return Err(Error::config("at least one action is required"));
    }
    rewards.validate()?;
    let space = enumerate_reachable_states(config, arrivals)?;

    let built: Vec<ActionModel> = actions
        .par_iter()
        .map(|spec| {
            let kernel = spec.kernel(config, service)?;
            let (matrix, action_rewards) = build_action(config, arrivals, &space, &kernel, rewards)?;
            Ok(ActionModel {
                spec: spec.clone(),
                kernel,
                matrix,
                rewards: action_rewards,
            })
        })
        .collect::<Result<_>>()?;

    let mut graph: Vec<Vec<usize>> = vec![Vec::new(); space.len()];
    for a in &built {
        for (s, succ) in a.matrix.successors().into_iter().enumerate() {
            graph[s].extend(succ);
        }
    }
    for succ in &mut graph {
        succ.sort_unstable();
        succ.dedup();
    }
    let ordering = canonical_ordering(&space, &graph)?;

    let mdp = StructuredMdp {
        config: config.clone(),
        rewards: *rewards,
        arrivals: arrivals.clone(),
        service: service.clone(),
        space,
        ordering,
        actions: built,
    };
    for a in 0..mdp.actions.len() {
        mdp.action_view(a)?;
    }
    Ok(mdp)
}

impl StructuredMdp {
    pub fn n(&self) -> usize {
        self.space.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn label(&self, i: usize) -> String {
        self.space.label(i)
    }

    /// Largest stored entry count over actions.
    pub fn arcs(&self) -> usize {
        self.actions.iter().map(|a| a.matrix.nnz()).max().unwrap_or(0)
    }

    fn relabel(&self, e: Error) -> Error {
        let name = |s: &str| {
            s.strip_prefix('#')
                .and_then(|i| i.parse::<usize>().ok())
                .map(|i| self.label(i))
                .unwrap_or_else(|| s.to_string())
        };
        match e {
            Error::StructureViolation { from, to } => Error::StructureViolation {
                from: name(&from),
                to: name(&to),
            },
            Error::Absorbing { state } => Error::Absorbing { state: name(&state) },
            other => other,
        }
    }

    /// Type-B view of one action's matrix, with violations named by state.
    pub fn action_view(&self, action: usize) -> Result<TypeBView> {
        verify_type_b(&self.actions[action].matrix, &self.ordering).map_err(|e| self.relabel(e))
    }

    pub fn policy_matrix(&self, choice: &[usize]) -> SparseTransitionMatrix {
        let mats: Vec<&SparseTransitionMatrix> = self.actions.iter().map(|a| &a.matrix).collect();
        SparseTransitionMatrix::select_rows(&mats, choice)
    }

    pub fn policy_rewards(&self, choice: &[usize]) -> Vec<f64> {
        self.policy_vector(choice, |r| &r.expected)
    }

    pub fn policy_vector(&self, choice: &[usize], field: impl Fn(&ActionRewards) -> &Vec<f64>) -> Vec<f64> {
        choice
            .iter()
            .enumerate()
            .map(|(s, &a)| field(&self.actions[a].rewards)[s])
            .collect()
    }

    pub fn policy_view(&self, choice: &[usize]) -> Result<TypeBView> {
        verify_type_b(&self.policy_matrix(choice), &self.ordering).map_err(|e| self.relabel(e))
    }

    /// Writes the sparse interchange format:
    ///
    /// ```text
    /// offgrid-mdp-sparse 1
    /// states <n>
    /// <ordinal> <h> <x> <ON|OFF>        (n lines)
    /// action <index> <label> <nnz>
    /// <row> <col> <probability> <reward> (nnz lines)
    /// ```
    ///
    /// `reward` is the mean event reward of that transition, so
    /// `sum(probability * reward)` over a row is `r(s, a)`.
    pub fn write_interchange<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "offgrid-mdp-sparse 1")?;
        writeln!(w, "states {}", self.n())?;
        for (i, s) in self.space.iter() {
            writeln!(w, "{i} {} {} {}", s.h, s.x, s.phase)?;
        }
        for (a, model) in self.actions.iter().enumerate() {
            writeln!(w, "action {a} {} {}", model.spec.label, model.matrix.nnz())?;
            for ((r, c, p), rew) in model.matrix.triplets().zip(&model.rewards.entry_rewards) {
                writeln!(w, "{r} {c} {p:e} {rew:e}")?;
            }
        }
        Ok(())
    }
}

/// One action read back from the interchange format.
#[derive(Debug, Clone, PartialEq)]
pub struct InterchangeAction {
    pub label: String,
    pub transitions: Vec<(usize, usize, f64)>,
    pub rewards: Vec<(usize, usize, f64)>,
}

/// Reads the format written by [`StructuredMdp::write_interchange`].
pub fn read_interchange<R: BufRead>(r: R) -> Result<(usize, Vec<InterchangeAction>)> {
    let bad = |n: usize, what: &str| Error::Data(format!("interchange line {n}: {what}"));
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = || -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((n, Err(e))) => Err(bad(n, &e.to_string())),
            None => Err(Error::Data("interchange file truncated".into())),
        }
    };
    let (n, header) = next()?;
    if header.trim() != "offgrid-mdp-sparse 1" {
        return Err(bad(n, "unknown header"));
    }
    let (n, line) = next()?;
    let states: usize = line
        .strip_prefix("states ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(n, "expected `states <n>`"))?;
    for _ in 0..states {
        next()?;
    }
    let mut actions = Vec::new();
    loop {
        let (n, line) = match next() {
            Ok(v) => v,
            Err(_) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "action" {
            return Err(bad(n, "expected `action <index> <label> <nnz>`"));
        }
        let nnz: usize = parts[3].parse().map_err(|_| bad(n, "bad entry count"))?;
        let mut act = InterchangeAction {
            label: parts[2].to_string(),
            transitions: Vec::with_capacity(nnz),
            rewards: Vec::with_capacity(nnz),
        };
        for _ in 0..nnz {
            let (n, line) = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let parse = || -> Option<(usize, usize, f64, f64)> {
                Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?, f.get(3)?.parse().ok()?))
            };
            let (r, c, p, rew) = parse().ok_or_else(|| bad(n, "bad triplet"))?;
            act.transitions.push((r, c, p));
            act.rewards.push((r, c, rew));
        }
        actions.push(act);
    }
    Ok((states, actions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::State;

    fn toy_mdp(zs: &[f64]) -> StructuredMdp {
        let cfg = ModelConfig::new(9, 12, 3, 3, 0.1, 0.9);
        let arr = EpDistributionSet::stationary(9, 12, &[1.0 / 3.0; 3]).unwrap();
        let service = ServiceProfile::constant(0.5).unwrap();
        assemble_mdp(&cfg, &arr, &service, &ActionSpec::uniform_set(zs), &RewardModel::new(1.0, -100.0, -25.0)).unwrap()
    }

    #[test]
    fn rows_are_stochastic() {
        let mdp = toy_mdp(&[0.1, 0.5, 0.9]);
        for a in &mdp.actions {
            a.matrix.check_stochastic(1e-12, |r| mdp.label(r)).unwrap();
        }
    }

    #[test]
    fn entry_rewards_reproduce_expected_vector() {
        let mdp = toy_mdp(&[0.3, 0.7]);
        for a in &mdp.actions {
            for s in 0..mdp.n() {
                let span = a.matrix.row_range(s);
                let total: f64 = span
                    .clone()
                    .map(|k| a.matrix.vals()[k] * a.rewards.entry_rewards[k])
                    .sum();
                assert!((total - a.rewards.expected[s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deadline_release_reward_is_level() {
        let mdp = toy_mdp(&[0.5]);
        for (i, s) in mdp.space.iter() {
            if s.h == 12 {
                assert_eq!(mdp.actions[0].rewards.release_gain[i], s.x as f64);
            }
        }
    }

    #[test]
    fn release_only_changes_rows_above_threshold() {
        let mdp = toy_mdp(&[0.1, 0.9]);
        let (m0, m1) = (&mdp.actions[0].matrix, &mdp.actions[1].matrix);
        for (i, s) in mdp.space.iter() {
            let same = m0.row(i).eq(m1.row(i));
            if s.x < 3 && s.h < 12 {
                assert!(same, "{s}");
            }
        }
    }

    #[test]
    fn missing_release_level_is_config_error() {
        let cfg = ModelConfig::new(9, 12, 3, 2, 0.1, 0.9);
        let spec = ActionSpec {
            label: "partial".into(),
            release: Release::PerLevel {
                on: [(2, 0.5)].into_iter().collect(),
                off: [(2, 0.5), (3, 0.5)].into_iter().collect(),
            },
            service: None,
        };
        let err = spec.kernel(&cfg, &ServiceProfile::constant(0.5).unwrap()).unwrap_err();
        assert!(err.to_string().contains("level 3"));
    }

    #[test]
    fn interchange_round_trip() {
        let mdp = toy_mdp(&[0.2, 0.6]);
        let mut buf = Vec::new();
        mdp.write_interchange(&mut buf).unwrap();
        let (n, actions) = read_interchange(buf.as_slice()).unwrap();
        assert_eq!(n, mdp.n());
        assert_eq!(actions.len(), 2);
        let back = SparseTransitionMatrix::from_triplets(n, &actions[1].transitions);
        for (r, c, p) in mdp.actions[1].matrix.triplets() {
            assert!((back.get(r, c) - p).abs() <= 1e-15 * p.max(1.0));
        }
    }

    #[test]
    fn root_is_first_and_sink_last() {
        let mdp = toy_mdp(&[0.5]);
        assert_eq!(mdp.space.state(mdp.ordering[0]), State::new(9, 0, Phase::On));
        assert_eq!(
            mdp.space.state(*mdp.ordering.last().unwrap()),
            State::new(9, 0, Phase::Off)
        );
    }
}
