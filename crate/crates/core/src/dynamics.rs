//! One-slot outcome enumeration for the battery process.
//!
//! Every `(arrival, service, release, phase)` event tuple of a state is
//! enumerated with its probability, successor and [`SlotEvent`]. Matrix and
//! reward construction both aggregate these outcomes, so rewards are
//! accounted per event tuple rather than per collapsed `(s, s')` pair.

use serde::{Deserialize, Serialize};

use crate::ingest::EpDistributionSet;
use crate::state::{ModelConfig, Phase, State};

/// What happened during one slot, as far as rewards and measures care.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotEvent {
    /// Battery level sold by a voluntary or deadline release.
    pub released: Option<u32>,
    /// Packets discarded because the battery was full: `max(0, x + e - b - C)`.
    pub lost: u32,
    /// Fill/consume outcome with a service demand that leaves the battery empty.
    pub emptied: bool,
}

impl SlotEvent {
    pub const NONE: SlotEvent = SlotEvent {
        released: None,
        lost: 0,
        emptied: false,
    };

    pub fn release(x: u32) -> Self {
        SlotEvent {
            released: Some(x),
            ..Self::NONE
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub next: State,
    pub event: SlotEvent,
}

/// Action-dependent probabilities, resolved against a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    /// Release probability in ON states, indexed by level; zero below `F`.
    pub release_on: Vec<f64>,
    pub release_off: Vec<f64>,
    /// Service-demand probability, indexed by hour of day.
    pub service: [f64; 24],
}

impl Kernel {
    /// A kernel where every release and service event is possible, used for
    /// reachability.
    pub fn structural(config: &ModelConfig) -> Self {
        let c = config.capacity as usize;
        let f = config.threshold as usize;
        let release: Vec<f64> = (0..=c).map(|x| if x >= f { 0.5 } else { 0.0 }).collect();
        Kernel {
            release_on: release.clone(),
            release_off: release,
            service: [0.5; 24],
        }
    }

    fn release(&self, phase: Phase, x: u32) -> f64 {
        let table = match phase {
            Phase::On => &self.release_on,
            Phase::Off => &self.release_off,
        };
        table.get(x as usize).copied().unwrap_or(0.0)
    }
}

/// Calls `emit` for every positive-probability outcome of one slot from `s`.
///
/// `arrivals` must cover `s.h`. Outcomes with equal successors are emitted
/// separately; callers aggregate.
pub fn for_each_outcome(
    config: &ModelConfig,
    arrivals: &EpDistributionSet,
    kernel: &Kernel,
    s: State,
    mut emit: impl FnMut(Outcome),
) {
    let mut out = |prob: f64, next: State, event: SlotEvent| {
        if prob > 0.0 {
            emit(Outcome { prob, next, event });
        }
    };
    let t0 = config.t0;
    let cap = config.capacity;
    let (alpha, beta) = (config.alpha, config.beta);
    let root = config.root();
    let sink = config.off_sink();

    if s.h >= config.deadline {
        out(1.0, State::new(t0, 0, s.phase), SlotEvent::release(s.x));
        return;
    }

    let b1 = kernel.service[s.h as usize];
    let service = [(0u32, 1.0 - b1), (1u32, b1)];
    let z = if s.x >= config.threshold {
        kernel.release(s.phase, s.x)
    } else {
        0.0
    };

    match s.phase {
        Phase::On => {
            let pmf = arrivals.pmf(s.h).unwrap_or(&[1.0]);
            if s == root {
                // clock waits for the first arrival or a failure
                out(alpha, sink, SlotEvent::NONE);
                out((1.0 - alpha) * pmf[0], root, SlotEvent::NONE);
                for (e, &pe) in pmf.iter().enumerate().skip(1) {
                    for (b, pb) in service {
                        let (x2, lost) = fill(0, e as u32, b, cap);
                        let event = SlotEvent {
                            released: None,
                            lost,
                            emptied: x2 == 0 && b == 1,
                        };
                        out((1.0 - alpha) * pe * pb, State::new(s.h + 1, x2, Phase::On), event);
                    }
                }
                return;
            }
            out(alpha, State::new(s.h + 1, s.x, Phase::Off), SlotEvent::NONE);
            out((1.0 - alpha) * z, root, SlotEvent::release(s.x));
            for (e, &pe) in pmf.iter().enumerate() {
                for (b, pb) in service {
                    let (x2, lost) = fill(s.x, e as u32, b, cap);
                    let event = SlotEvent {
                        released: None,
                        lost,
                        emptied: x2 == 0 && b == 1,
                    };
                    out(
                        (1.0 - alpha) * (1.0 - z) * pe * pb,
                        State::new(s.h + 1, x2, Phase::On),
                        event,
                    );
                }
            }
        }
        Phase::Off => {
            if s == sink {
                out(beta, root, SlotEvent::NONE);
                out(1.0 - beta, sink, SlotEvent::NONE);
                return;
            }
            out(beta, State::new(s.h + 1, s.x, Phase::On), SlotEvent::NONE);
            out((1.0 - beta) * z, sink, SlotEvent::release(s.x));
            for (b, pb) in service {
                let x2 = s.x.saturating_sub(b);
                let event = SlotEvent {
                    released: None,
                    lost: 0,
                    emptied: x2 == 0 && b == 1,
                };
                out((1.0 - beta) * (1.0 - z) * pb, State::new(s.h + 1, x2, Phase::Off), event);
            }
        }
    }
}

/// Level after a batch of `e` packets and a demand of `b`, and the packets lost.
fn fill(x: u32, e: u32, b: u32, cap: u32) -> (u32, u32) {
    let level = (x + e).min(cap).saturating_sub(b);
    let lost = (x + e).saturating_sub(b).saturating_sub(cap);
    (level, lost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(cfg: &ModelConfig, arr: &EpDistributionSet, k: &Kernel, s: State) -> Vec<Outcome> {
        let mut v = Vec::new();
        for_each_outcome(cfg, arr, k, s, |o| v.push(o));
        v
    }

    fn uniform_kernel(cfg: &ModelConfig, z: f64, b: f64) -> Kernel {
        let rel: Vec<f64> = (0..=cfg.capacity)
            .map(|x| if x >= cfg.threshold { z } else { 0.0 })
            .collect();
        Kernel { release_on: rel.clone(), release_off: rel, service: [b; 24] }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let cfg = ModelConfig::new(9, 12, 3, 2, 0.1, 0.9);
        let arr = EpDistributionSet::stationary(9, 12, &[0.2, 0.3, 0.5]).unwrap();
        let k = uniform_kernel(&cfg, 0.4, 0.3);
        for h in 9..=12 {
            for x in 0..=3 {
                for phase in [Phase::On, Phase::Off] {
                    let total: f64 = outcomes(&cfg, &arr, &k, State::new(h, x, phase))
                        .iter()
                        .map(|o| o.prob)
                        .sum();
                    assert!((total - 1.0).abs() < 1e-12, "h={h} x={x} {phase}: {total}");
                }
            }
        }
    }

    #[test]
    fn below_threshold_decrement() {
        let cfg = ModelConfig::new(9, 12, 5, 4, 0.1, 0.9);
        let pmf = [0.2, 0.3, 0.5];
        let arr = EpDistributionSet::stationary(9, 12, &pmf).unwrap();
        let k = uniform_kernel(&cfg, 0.4, 0.3);
        let target = State::new(11, 1, Phase::On);
        let p: f64 = outcomes(&cfg, &arr, &k, State::new(10, 2, Phase::On))
            .iter()
            .filter(|o| o.next == target)
            .map(|o| o.prob)
            .sum();
        assert!((p - 0.9 * 0.2 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn deadline_preserves_phase() {
        let cfg = ModelConfig::new(9, 12, 3, 3, 0.1, 0.9);
        let arr = EpDistributionSet::stationary(9, 12, &[0.5, 0.5]).unwrap();
        let k = uniform_kernel(&cfg, 0.5, 0.5);
        for phase in [Phase::On, Phase::Off] {
            let o = outcomes(&cfg, &arr, &k, State::new(12, 2, phase));
            assert_eq!(o.len(), 1);
            assert_eq!(o[0].next, State::new(9, 0, phase));
            assert_eq!(o[0].prob, 1.0);
            assert_eq!(o[0].event.released, Some(2));
        }
    }

    #[test]
    fn overflow_counts_lost_packets() {
        let cfg = ModelConfig::new(9, 12, 3, 3, 0.0, 0.9);
        let arr = EpDistributionSet::stationary(9, 12, &[0.0, 0.0, 1.0]).unwrap();
        let k = uniform_kernel(&cfg, 0.0, 0.0);
        let o = outcomes(&cfg, &arr, &k, State::new(10, 3, Phase::On));
        assert_eq!(o.len(), 1);
        assert_eq!(o[0].event.lost, 2);
        assert_eq!(o[0].next, State::new(11, 3, Phase::On));
    }

    #[test]
    fn demand_on_empty_battery_triggers_empty_event() {
        let cfg = ModelConfig::new(9, 12, 3, 3, 0.0, 0.9);
        let arr = EpDistributionSet::stationary(9, 12, &[1.0]).unwrap();
        let k = uniform_kernel(&cfg, 0.0, 1.0);
        let o = outcomes(&cfg, &arr, &k, State::new(10, 0, Phase::On));
        assert_eq!(o.len(), 1);
        assert!(o[0].event.emptied);
    }
}
