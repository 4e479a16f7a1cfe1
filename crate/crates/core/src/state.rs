//! State space `(hour, battery level, PV phase)`, reachability and the
//! canonical ordering used by the root-cycle solvers.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{for_each_outcome, Kernel};
use crate::error::{Error, Result};
use crate::ingest::EpDistributionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::On => "ON",
            Phase::Off => "OFF",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// First production hour of the day.
    pub t0: u32,
    /// Deadline hour; reaching it forces a release.
    #[serde(rename = "T")]
    pub deadline: u32,
    /// Battery capacity in energy packets.
    #[serde(rename = "C")]
    pub capacity: u32,
    /// Minimum level for a voluntary release.
    #[serde(rename = "F")]
    pub threshold: u32,
    /// ON -> OFF probability.
    pub alpha: f64,
    /// OFF -> ON probability.
    pub beta: f64,
    pub packet_size_wh: f64,
    /// Reject arrival batches larger than the capacity instead of clipping them.
    #[serde(default)]
    pub strict_batches: bool,
}

pub const DEFAULT_PACKET_WH: f64 = 300.0;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BETA: f64 = 0.95;

impl ModelConfig {
    pub fn new(t0: u32, deadline: u32, capacity: u32, threshold: u32, alpha: f64, beta: f64) -> Self {
        ModelConfig {
            t0,
            deadline,
            capacity,
            threshold,
            alpha,
            beta,
            packet_size_wh: DEFAULT_PACKET_WH,
            strict_batches: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t0 >= self.deadline {
            return Err(Error::config(format!("t0 = {} must be below T = {}", self.t0, self.deadline)));
        }
        if self.deadline > 23 {
            return Err(Error::config(format!("T = {} is not an hour of day", self.deadline)));
        }
        if self.capacity == 0 {
            return Err(Error::config("capacity C must be positive"));
        }
        if self.threshold == 0 || self.threshold > self.capacity {
            return Err(Error::config(format!(
                "threshold F = {} must satisfy 0 < F <= C = {}",
                self.threshold, self.capacity
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha = {} outside [0, 1)", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::config(format!("beta = {} outside (0, 1]", self.beta)));
        }
        if !(self.packet_size_wh > 0.0) {
            return Err(Error::config("packet_size_wh must be positive"));
        }
        Ok(())
    }

    pub fn root(&self) -> State {
        State::new(self.t0, 0, Phase::On)
    }

    pub fn off_sink(&self) -> State {
        State::new(self.t0, 0, Phase::Off)
    }

    /// Writes the flat `key = value` form read by [`PartialModelConfig::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        format!(
            "t0 = {}\nT = {}\nC = {}\nF = {}\nalpha = {}\nbeta = {}\npacket_size_wh = {}\nstrict_batches = {}\n",
            self.t0,
            self.deadline,
            self.capacity,
            self.threshold,
            self.alpha,
            self.beta,
            self.packet_size_wh,
            self.strict_batches
        )
    }
}

/// A model configuration with optional fields, as read from a config file or
/// command-line flags. Layers are merged with [`PartialModelConfig::or`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialModelConfig {
    pub t0: Option<u32>,
    pub deadline: Option<u32>,
    pub capacity: Option<u32>,
    pub threshold: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub packet_size_wh: Option<f64>,
    pub strict_batches: Option<bool>,
}

impl PartialModelConfig {
    /// Parses `key = value` lines. Keys: `t0`, `T`, `C`, `F`, `alpha`, `beta`,
    /// `packet_size_wh`, `strict_batches`. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = PartialModelConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || Error::config(format!("config line {}: bad value {value:?} for {key}", n + 1));
            match key {
                "t0" => cfg.t0 = Some(value.parse().map_err(|_| bad())?),
                "T" => cfg.deadline = Some(value.parse().map_err(|_| bad())?),
                "C" => cfg.capacity = Some(value.parse().map_err(|_| bad())?),
                "F" => cfg.threshold = Some(value.parse().map_err(|_| bad())?),
                "alpha" => cfg.alpha = Some(value.parse().map_err(|_| bad())?),
                "beta" => cfg.beta = Some(value.parse().map_err(|_| bad())?),
                "packet_size_wh" => cfg.packet_size_wh = Some(value.parse().map_err(|_| bad())?),
                "strict_batches" => cfg.strict_batches = Some(value.parse().map_err(|_| bad())?),
                other => return Err(Error::config(format!("config line {}: unknown key {other:?}", n + 1))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }

    /// Fields of `self` win; missing ones come from `fallback`.
    pub fn or(self, fallback: PartialModelConfig) -> Self {
        PartialModelConfig {
            t0: self.t0.or(fallback.t0),
            deadline: self.deadline.or(fallback.deadline),
            capacity: self.capacity.or(fallback.capacity),
            threshold: self.threshold.or(fallback.threshold),
            alpha: self.alpha.or(fallback.alpha),
            beta: self.beta.or(fallback.beta),
            packet_size_wh: self.packet_size_wh.or(fallback.packet_size_wh),
            strict_batches: self.strict_batches.or(fallback.strict_batches),
        }
    }

    /// Fills remaining gaps from the arrival window and the built-in defaults.
    pub fn resolve(&self, arrivals: Option<&EpDistributionSet>) -> Result<ModelConfig> {
        let need = |v: Option<u32>, name: &str| v.ok_or_else(|| Error::config(format!("missing required key {name}")));
        let cfg = ModelConfig {
            t0: need(self.t0.or(arrivals.map(|a| a.t0)), "t0")?,
            deadline: need(self.deadline.or(arrivals.map(|a| a.deadline)), "T")?,
            capacity: need(self.capacity, "C")?,
            threshold: need(self.threshold, "F")?,
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            beta: self.beta.unwrap_or(DEFAULT_BETA),
            packet_size_wh: self
                .packet_size_wh
                .or(arrivals.map(|a| a.packet_size_wh))
                .unwrap_or(DEFAULT_PACKET_WH),
            strict_batches: self.strict_batches.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub h: u32,
    pub x: u32,
    pub phase: Phase,
}

impl State {
    pub const fn new(h: u32, x: u32, phase: Phase) -> Self {
        State { h, x, phase }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.h, self.x, self.phase)
    }
}

/// Reachable states in canonical order: the root `(t0,0,ON)` first, then
/// ascending hour (ON before OFF, ascending level), and `(t0,0,OFF)` last.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub states: Vec<State>,
    index: HashMap<State, usize>,
    pub root: usize,
    /// `(t0,0,OFF)`, absent when the PV never fails.
    pub off_sink: Option<usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn state(&self, i: usize) -> State {
        self.states[i]
    }

    pub fn label(&self, i: usize) -> String {
        self.states.get(i).map(ToString::to_string).unwrap_or_else(|| format!("#{i}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &State)> {
        self.states.iter().enumerate()
    }
}

/// Sort key implementing the canonical order for battery states.
fn canonical_key(config: &ModelConfig, s: &State) -> (u32, u32, u32, u32) {
    if *s == config.root() {
        (0, 0, 0, 0)
    } else if *s == config.off_sink() {
        (2, 0, 0, 0)
    } else {
        let phase = match s.phase {
            Phase::On => 0,
            Phase::Off => 1,
        };
        (1, s.h, phase, s.x)
    }
}

pub(crate) fn check_arrivals(config: &ModelConfig, arrivals: &EpDistributionSet) -> Result<()> {
    for h in config.t0..=config.deadline {
        if arrivals.pmf(h).is_none() {
            return Err(Error::Data(format!("arrival distributions have no entry for hour {h}")));
        }
        if config.strict_batches && arrivals.max_batch(h) > config.capacity {
            return Err(Error::config(format!(
                "hour {h} batch support {} exceeds capacity {}",
                arrivals.max_batch(h),
                config.capacity
            )));
        }
    }
    Ok(())
}

/// All states reachable from `(t0,0,ON)` under any action.
///
/// Reachability treats every release, service and phase event as possible
/// (only arrival batches with zero probability are excluded), so the result
/// does not depend on the action set.
pub fn enumerate_reachable_states(config: &ModelConfig, arrivals: &EpDistributionSet) -> Result<StateSpace> {
    config.validate()?;
    check_arrivals(config, arrivals)?;
    let kernel = Kernel::structural(config);

    let root = config.root();
    let mut seen: HashMap<State, ()> = HashMap::new();
    let mut queue = VecDeque::from([root]);
    seen.insert(root, ());
    while let Some(s) = queue.pop_front() {
        for_each_outcome(config, arrivals, &kernel, s, |o| {
            if seen.insert(o.next, ()).is_none() {
                queue.push_back(o.next);
            }
        });
    }

    let mut states: Vec<State> = seen.into_keys().collect();
    states.sort_by_key(|s| canonical_key(config, s));
    let index: HashMap<State, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let off_sink = index.get(&config.off_sink()).copied();
    Ok(StateSpace {
        states,
        index,
        root: 0,
        off_sink,
    })
}

/// Topological order of `successors` with arcs into `root` and self-loops
/// removed, `root` first. Among ready nodes the smallest `key` goes next.
///
/// On a cycle that avoids the root, returns two consecutive nodes of it.
pub fn topological_order<K: Ord>(
    successors: &[Vec<usize>],
    root: usize,
    key: impl Fn(usize) -> K,
) -> std::result::Result<Vec<usize>, (usize, usize)> {
    let n = successors.len();
    let mut indegree = vec![0usize; n];
    for (u, succ) in successors.iter().enumerate() {
        for &v in succ {
            if v != root && v != u {
                indegree[v] += 1;
            }
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut ready = BinaryHeap::new();
    // the root goes first even if it has predecessors left
    let mut pending_root = true;
    for v in 0..n {
        if v != root && indegree[v] == 0 {
            ready.push(Reverse((key(v), v)));
        }
    }
    loop {
        let u = if pending_root {
            pending_root = false;
            root
        } else if let Some(Reverse((_, u))) = ready.pop() {
            u
        } else {
            break;
        };
        placed[u] = true;
        order.push(u);
        for &v in &successors[u] {
            if v == root || v == u {
                continue;
            }
            indegree[v] -= 1;
            if indegree[v] == 0 {
                ready.push(Reverse((key(v), v)));
            }
        }
    }

    if order.len() == n {
        return Ok(order);
    }
    // every unplaced node has an unplaced predecessor: walk backwards until
    // a node repeats, which closes a cycle
    let mut preds = vec![Vec::new(); n];
    for (u, succ) in successors.iter().enumerate() {
        for &v in succ {
            if v != root && v != u && !placed[u] {
                preds[v].push(u);
            }
        }
    }
    let mut visited = vec![false; n];
    let mut v = (0..n).find(|&v| !placed[v]).expect("some node is unplaced");
    while !visited[v] {
        visited[v] = true;
        v = preds[v][0];
    }
    Err((preds[v][0], v))
}

/// Canonical ordering of `space` for the transition graph `graph`.
///
/// Ascending hour is the primary key; the topological constraint is what
/// places `(t0,0,OFF)` after all of its predecessors.
pub fn canonical_ordering(space: &StateSpace, graph: &[Vec<usize>]) -> Result<Vec<usize>> {
    let sink = space.off_sink;
    let key = |i: usize| {
        let s = space.states[i];
        if Some(i) == sink {
            (u32::MAX, 0, 0)
        } else {
            (s.h, s.phase as u32, s.x)
        }
    };
    topological_order(graph, space.root, key).map_err(|(a, b)| Error::CycleAvoidsRoot {
        first: space.label(a),
        second: space.label(b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (ModelConfig, EpDistributionSet) {
        let cfg = ModelConfig::new(9, 12, 3, 3, 0.1, 0.9);
        let arr = EpDistributionSet::stationary(9, 12, &[1.0 / 3.0; 3]).unwrap();
        (cfg, arr)
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(9, 9, 3, 3, 0.1, 0.9).validate().is_err());
        assert!(ModelConfig::new(9, 12, 3, 4, 0.1, 0.9).validate().is_err());
        assert!(ModelConfig::new(9, 12, 3, 0, 0.1, 0.9).validate().is_err());
        assert!(ModelConfig::new(9, 12, 3, 3, 1.0, 0.9).validate().is_err());
        assert!(ModelConfig::new(9, 12, 3, 3, 0.1, 0.0).validate().is_err());
        assert!(ModelConfig::new(9, 12, 3, 3, 0.0, 1.0).validate().is_ok());
    }

    #[test]
    fn kv_round_trip_and_precedence() {
        let cfg = ModelConfig::new(7, 18, 65, 25, 0.01, 0.95);
        let parsed = PartialModelConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(parsed.resolve(None).unwrap(), cfg);

        let file = PartialModelConfig::from_kv_str("C = 65\nF = 25 # threshold\nalpha=0.02").unwrap();
        let cli = PartialModelConfig { alpha: Some(0.03), ..Default::default() };
        let arr = EpDistributionSet::stationary(7, 18, &[0.5, 0.5]).unwrap();
        let merged = cli.or(file).resolve(Some(&arr)).unwrap();
        assert_eq!(merged.alpha, 0.03);
        assert_eq!((merged.t0, merged.deadline), (7, 18));
        assert_eq!(merged.beta, DEFAULT_BETA);

        assert!(PartialModelConfig::from_kv_str("bogus = 1").is_err());
        assert!(PartialModelConfig::from_kv_str("F = 25").unwrap().resolve(None).is_err());
    }

    #[test]
    fn toy_space_layout() {
        let (cfg, arr) = toy();
        let space = enumerate_reachable_states(&cfg, &arr).unwrap();
        assert_eq!(space.state(0), State::new(9, 0, Phase::On));
        assert_eq!(space.off_sink, Some(space.len() - 1));
        assert!(space.states.iter().all(|s| s.h >= 9 && s.h <= 12 && s.x <= 3));
        // only the two special states live at t0
        let at_t0 = space.states.iter().filter(|s| s.h == 9).count();
        assert_eq!(at_t0, 2);
    }

    #[test]
    fn no_failures_means_no_off_states() {
        let (mut cfg, arr) = toy();
        cfg.alpha = 0.0;
        let space = enumerate_reachable_states(&cfg, &arr).unwrap();
        assert!(space.states.iter().all(|s| s.phase == Phase::On));
        assert_eq!(space.off_sink, None);
    }

    #[test]
    fn arrival_errors() {
        let (mut cfg, _) = toy();
        let short = EpDistributionSet::stationary(9, 11, &[0.5, 0.5]).unwrap();
        assert!(matches!(enumerate_reachable_states(&cfg, &short), Err(Error::Data(_))));
        let big = EpDistributionSet::stationary(9, 12, &[0.5, 0.0, 0.0, 0.0, 0.5]).unwrap();
        assert!(enumerate_reachable_states(&cfg, &big).is_ok());
        cfg.strict_batches = true;
        assert!(matches!(enumerate_reachable_states(&cfg, &big), Err(Error::Config(_))));
    }

    #[test]
    fn topological_single_node() {
        assert_eq!(topological_order(&[vec![0]], 0, |v| v).unwrap(), vec![0]);
    }

    #[test]
    fn topological_reports_cycle() {
        // 0 -> 1 -> 2 -> 1 : cycle avoids the root
        let g = vec![vec![1], vec![2], vec![1, 0]];
        let (a, b) = topological_order(&g, 0, |v| v).unwrap_err();
        assert!([(1, 2), (2, 1)].contains(&(a, b)));
    }
}
