//! Slot-level Monte Carlo simulation of the battery process under a fixed
//! policy.
//!
//! The simulator draws the phase switch, arrival batch, service demand and
//! release decision of every slot and applies the evolution equations
//! directly; it never reads the transition matrices. Each variable has its
//! own ChaCha8 stream of the seed: phase 0, arrivals 1, service 2, release 3.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::SlotEvent;
use crate::error::{Error, Result};
use crate::measures::MeasureSet;
use crate::model::StructuredMdp;
use crate::solvers::Policy;
use crate::state::{Phase, State};

pub const BATCHES: usize = 100;
/// Diagnostics with `|z|` above this are flagged.
pub const Z_FLAG: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Batch-means standard error.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub slots: u64,
    pub seed: u64,
    pub start: State,
    /// Reward per slot.
    pub rho: Estimate,
    /// `g(x)` released per slot.
    pub release: Estimate,
    /// Fraction of slots where a demand met an empty battery.
    pub delay: Estimate,
    /// Packets lost per slot.
    pub lost: Estimate,
    /// Visit frequency per state ordinal.
    pub visit_freq: Vec<f64>,
    pub visits: Vec<u64>,
    /// Sum of one-slot rewards collected from each state.
    pub reward_sum: Vec<f64>,
}

struct Streams {
    phase: ChaCha8Rng,
    arrival: ChaCha8Rng,
    service: ChaCha8Rng,
    release: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Streams {
            phase: stream(0),
            arrival: stream(1),
            service: stream(2),
            release: stream(3),
        }
    }
}

fn sample_pmf(pmf: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u32;
        }
    }
    // rounding left u above the last partial sum
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// One slot of the evolution equations given the sampled variables.
fn step(
    mdp: &StructuredMdp,
    s: State,
    switch: bool,
    e: u32,
    b: u32,
    release: bool,
) -> (State, SlotEvent) {
    let cfg = &mdp.config;
    if s.h == cfg.deadline {
        return (State::new(cfg.t0, 0, s.phase), SlotEvent::release(s.x));
    }
    let can_release = s.x >= cfg.threshold && release;
    match s.phase {
        Phase::On => {
            if switch {
                let h = if s == cfg.root() { cfg.t0 } else { s.h + 1 };
                return (State::new(h, s.x, Phase::Off), SlotEvent::NONE);
            }
            if s == cfg.root() && e == 0 {
                return (s, SlotEvent::NONE);
            }
            if can_release {
                return (cfg.root(), SlotEvent::release(s.x));
            }
            let total = s.x + e;
            let x2 = total.min(cfg.capacity).saturating_sub(b);
            let lost = total.saturating_sub(b).saturating_sub(cfg.capacity);
            let event = SlotEvent {
                released: None,
                lost,
                emptied: x2 == 0 && b == 1,
            };
            (State::new(s.h + 1, x2, Phase::On), event)
        }
        Phase::Off => {
            if s == cfg.off_sink() {
                let next = if switch { cfg.root() } else { s };
                return (next, SlotEvent::NONE);
            }
            if switch {
                return (State::new(s.h + 1, s.x, Phase::On), SlotEvent::NONE);
            }
            if can_release {
                return (cfg.off_sink(), SlotEvent::release(s.x));
            }
            let x2 = s.x.saturating_sub(b);
            let event = SlotEvent {
                released: None,
                lost: 0,
                emptied: x2 == 0 && b == 1,
            };
            (State::new(s.h + 1, x2, Phase::Off), event)
        }
    }
}

struct BatchMeans {
    per_batch: u64,
    current: f64,
    count: u64,
    means: Vec<f64>,
}

impl BatchMeans {
    fn new(per_batch: u64) -> Self {
        BatchMeans {
            per_batch,
            current: 0.0,
            count: 0,
            means: Vec::with_capacity(BATCHES),
        }
    }

    fn push(&mut self, v: f64) {
        self.current += v;
        self.count += 1;
        if self.count == self.per_batch {
            self.means.push(self.current / self.per_batch as f64);
            self.current = 0.0;
            self.count = 0;
        }
    }

    fn estimate(&self) -> Estimate {
        let k = self.means.len() as f64;
        let mean = self.means.iter().sum::<f64>() / k;
        let var = self.means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        Estimate {
            mean,
            std_error: (var / k).sqrt(),
        }
    }
}

/// Simulates `slots` slots from `start` (the root when `None`).
///
/// `slots` is rounded down to a multiple of [`BATCHES`]; identical seeds
/// give identical results.
pub fn simulate_policy(
    mdp: &StructuredMdp,
    policy: &Policy,
    slots: u64,
    seed: u64,
    start: Option<State>,
) -> Result<SimResult> {
    policy.validate(mdp.n(), mdp.num_actions())?;
    let per_batch = slots / BATCHES as u64;
    if per_batch < 2 {
        return Err(Error::config(format!("need at least {} slots", 2 * BATCHES)));
    }
    let slots = per_batch * BATCHES as u64;
    let cfg = &mdp.config;
    let start = start.unwrap_or(cfg.root());
    let mut s = start;
    let mut rng = Streams::new(seed);
    let n = mdp.n();
    let mut visits = vec![0u64; n];
    let mut reward_sum = vec![0.0; n];
    let (mut rho, mut release, mut delay, mut lost) = (
        BatchMeans::new(per_batch),
        BatchMeans::new(per_batch),
        BatchMeans::new(per_batch),
        BatchMeans::new(per_batch),
    );
    for _ in 0..slots {
        let i = mdp.space.index_of(&s).ok_or_else(|| Error::Construction {
            state: s.to_string(),
            message: "simulated state is not in the state space".into(),
        })?;
        let kernel = &mdp.actions[policy.choice[i]].kernel;

        let u_phase: f64 = rng.phase.gen();
        let u_arrival: f64 = rng.arrival.gen();
        let u_service: f64 = rng.service.gen();
        let u_release: f64 = rng.release.gen();

        let switch = match s.phase {
            Phase::On => u_phase < cfg.alpha,
            Phase::Off => u_phase < cfg.beta,
        };
        let e = mdp.arrivals.pmf(s.h).map_or(0, |p| sample_pmf(p, u_arrival));
        let b = u32::from(u_service < kernel.service[s.h as usize]);
        let z_table = match s.phase {
            Phase::On => &kernel.release_on,
            Phase::Off => &kernel.release_off,
        };
        let z = u_release < z_table.get(s.x as usize).copied().unwrap_or(0.0);

        let (next, event) = step(mdp, s, switch, e, b, z);
        let r = mdp.rewards.event_reward(&event, cfg.threshold);
        visits[i] += 1;
        reward_sum[i] += r;
        rho.push(r);
        release.push(event.released.map_or(0.0, |x| mdp.rewards.g(x, cfg.threshold)));
        delay.push(if s.x == 0 && b == 1 { 1.0 } else { 0.0 });
        lost.push(event.lost as f64);
        s = next;
    }
    Ok(SimResult {
        slots,
        seed,
        start,
        rho: rho.estimate(),
        release: release.estimate(),
        delay: delay.estimate(),
        lost: lost.estimate(),
        visit_freq: visits.iter().map(|&v| v as f64 / slots as f64).collect(),
        visits,
        reward_sum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub quantity: String,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub slots: u64,
    pub diagnostics: Vec<Diagnostic>,
    /// Total-variation distance between visit frequencies and `pi`.
    pub tv_distance: f64,
}

impl Comparison {
    pub fn all_within(&self, bound: f64) -> bool {
        self.diagnostics.iter().all(|d| d.z.abs() <= bound)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# seed {} slots {}\nquantity,analytic,empirical,std_error,z,flagged\n", self.seed, self.slots);
        for d in &self.diagnostics {
            let _ = writeln!(
                out,
                "{},{:.12},{:.12},{:.6e},{:.4},{}",
                d.quantity, d.analytic, d.empirical, d.std_error, d.z, d.flagged
            );
        }
        let _ = writeln!(out, "tv_distance,,{:.6},,,", self.tv_distance);
        out
    }
}

/// `(empirical - analytic) / std_error`; zero when both agree exactly.
pub fn z_score(analytic: f64, est: &Estimate) -> f64 {
    let diff = est.mean - analytic;
    if diff == 0.0 {
        0.0
    } else if est.std_error > 0.0 {
        diff / est.std_error
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Per-quantity z-scores of a simulation against analytic values.
pub fn compare_to_analytic(sim: &SimResult, measures: &MeasureSet, pi: &[f64]) -> Comparison {
    let items = [
        ("rho", measures.combined, &sim.rho),
        ("expected_release", measures.expected_release_ep, &sim.release),
        ("delay_probability", measures.delay_probability, &sim.delay),
        ("expected_lost", measures.expected_lost_ep, &sim.lost),
    ];
    let diagnostics = items
        .into_iter()
        .map(|(q, analytic, est)| {
            let z = z_score(analytic, est);
            Diagnostic {
                quantity: q.into(),
                analytic,
                empirical: est.mean,
                std_error: est.std_error,
                z,
                flagged: z.abs() > Z_FLAG,
            }
        })
        .collect();
    let tv_distance = 0.5 * sim.visit_freq.iter().zip(pi).map(|(f, p)| (f - p).abs()).sum::<f64>();
    Comparison {
        seed: sim.seed,
        slots: sim.slots,
        diagnostics,
        tv_distance,
    }
}

impl SimResult {
    pub fn to_csv(&self, mdp: &StructuredMdp) -> String {
        let mut out = format!(
            "# seed {} slots {} start {}\nquantity,mean,std_error\n",
            self.seed, self.slots, self.start
        );
        for (q, e) in [
            ("rho", &self.rho),
            ("release", &self.release),
            ("delay", &self.delay),
            ("lost", &self.lost),
        ] {
            let _ = writeln!(out, "{q},{:.12},{:.6e}", e.mean, e.std_error);
        }
        out.push_str("\nstate,h,x,phase,visits,frequency,reward_sum\n");
        for (i, s) in mdp.space.iter() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{:.9},{:.9}",
                s.h, s.x, s.phase, self.visits[i], self.visit_freq[i], self.reward_sum[i]
            );
        }
        out
    }
}
