//! Release, delay and loss measures, policy heatmaps and location comparisons.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EpDistributionSet, ServiceProfile};
use crate::model::{assemble_mdp, ActionRewards, ActionSpec, RewardModel, StructuredMdp};
use crate::solvers::{policy_iteration, Policy, SolverOptions};
use crate::state::{Phase, State};
use crate::structured::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    /// Expected `g(x)` released per slot, in energy packets.
    pub expected_release_ep: f64,
    pub expected_release_wh: f64,
    /// Probability per slot that a demand meets an empty battery.
    pub delay_probability: f64,
    /// Expected packets lost to a full battery per slot.
    pub expected_lost_ep: f64,
    pub expected_lost_wh: f64,
    /// Gain of the policy under the full reward model.
    pub combined: f64,
}

fn weighted(pi: &[f64], policy: &Policy, mdp: &StructuredMdp, field: impl Fn(&ActionRewards) -> &Vec<f64>) -> f64 {
    pi.iter()
        .zip(&policy.choice)
        .enumerate()
        .map(|(s, (p, &a))| p * field(&mdp.actions[a].rewards)[s])
        .collect::<NeumaierSum>()
        .value()
}

/// Expected `g(x)` per slot from deadline and voluntary releases.
pub fn expected_release(pi: &[f64], policy: &Policy, mdp: &StructuredMdp) -> f64 {
    weighted(pi, policy, mdp, |r| &r.release_gain)
}

/// `sum_s pi(s) 1{x = 0} B_h[1]`.
pub fn delay_probability(pi: &[f64], policy: &Policy, mdp: &StructuredMdp) -> f64 {
    weighted(pi, policy, mdp, |r| &r.delay)
}

/// Expected overflow `max(0, x + e - b - C)` per slot.
pub fn expected_lost(pi: &[f64], policy: &Policy, mdp: &StructuredMdp) -> f64 {
    weighted(pi, policy, mdp, |r| &r.lost)
}

pub fn compute_measures(mdp: &StructuredMdp, policy: &Policy, pi: &[f64], rho: f64) -> MeasureSet {
    let wh = mdp.config.packet_size_wh;
    let release = expected_release(pi, policy, mdp);
    let lost = expected_lost(pi, policy, mdp);
    MeasureSet {
        expected_release_ep: release,
        expected_release_wh: release * wh,
        delay_probability: delay_probability(pi, policy, mdp),
        expected_lost_ep: lost,
        expected_lost_wh: lost * wh,
        combined: rho,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Unreachable,
    Action(usize),
    /// Deadline state: release happens regardless of the action.
    ForcedRelease,
}

/// Policy on one phase: `cells[x][h - t0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGrid {
    pub phase: Phase,
    pub t0: u32,
    pub deadline: u32,
    pub capacity: u32,
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

impl PolicyGrid {
    pub fn hours(&self) -> std::ops::RangeInclusive<u32> {
        self.t0..=self.deadline
    }

    pub fn cell(&self, h: u32, x: u32) -> Cell {
        self.cells[x as usize][(h - self.t0) as usize]
    }

    fn cell_text(&self, c: Cell) -> String {
        match c {
            Cell::Unreachable => "-".into(),
            Cell::Action(a) => self.labels[a].clone(),
            Cell::ForcedRelease => "release".into(),
        }
    }

    /// Rows are battery levels `0..=C`, columns hours `t0..=T`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x");
        for h in self.hours() {
            let _ = write!(out, ",{h}");
        }
        out.push('\n');
        for (x, row) in self.cells.iter().enumerate() {
            let _ = write!(out, "{x}");
            for &c in row {
                let _ = write!(out, ",{}", self.cell_text(c));
            }
            out.push('\n');
        }
        out
    }

    /// Heatmap with high battery levels on top and one color per action.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 14;
        const LEFT: usize = 40;
        const TOP: usize = 30;
        const PALETTE: [&str; 10] = [
            "#fde725", "#b5de2b", "#6ece58", "#35b779", "#1f9e89", "#26828e", "#31688e", "#3e4989",
            "#482878", "#440154",
        ];
        let cols = self.cells.first().map_or(0, Vec::len);
        let rows = self.cells.len();
        let legend_h = 18 * (self.labels.len() + 2);
        let width = LEFT + cols * CELL + 160;
        let height = (TOP + rows * CELL + 30).max(TOP + legend_h);
        let color = |a: usize| {
            if self.labels.len() <= PALETTE.len() {
                PALETTE[a * (PALETTE.len() - 1) / (self.labels.len() - 1).max(1)].to_string()
            } else {
                let t = a as f64 / (self.labels.len() - 1) as f64;
                format!("hsl({:.0},70%,{:.0}%)", 60.0 + 200.0 * t, 75.0 - 45.0 * t)
            }
        };
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">\n"
        );
        let _ = writeln!(s, "<text x=\"{LEFT}\" y=\"16\" font-size=\"12\">PV-{} policy</text>", self.phase);
        for (x, row) in self.cells.iter().enumerate() {
            let y = TOP + (rows - 1 - x) * CELL;
            for (j, &c) in row.iter().enumerate() {
                let fill = match c {
                    Cell::Unreachable => "#ffffff".to_string(),
                    Cell::Action(a) => color(a),
                    Cell::ForcedRelease => "#555555".to_string(),
                };
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#dddddd\" stroke-width=\"0.5\"><title>h={} x={x}: {}</title></rect>",
                    LEFT + j * CELL,
                    self.t0 as usize + j,
                    self.cell_text(c)
                );
            }
            if x % 5 == 0 {
                let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{x}</text>", LEFT - 4, y + CELL - 3);
            }
        }
        let base = TOP + rows * CELL + 12;
        for (j, h) in self.hours().enumerate() {
            let _ = writeln!(s, "<text x=\"{}\" y=\"{base}\" text-anchor=\"middle\">{h}</text>", LEFT + j * CELL + CELL / 2);
        }
        let lx = LEFT + cols * CELL + 20;
        let entries = self
            .labels
            .iter()
            .enumerate()
            .map(|(a, l)| (color(a), l.clone()))
            .chain([("#555555".to_string(), "release".to_string()), ("#ffffff".to_string(), "unreachable".to_string())]);
        for (k, (fill, label)) in entries.enumerate() {
            let y = TOP + k * 18;
            let _ = writeln!(s, "<rect x=\"{lx}\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{fill}\" stroke=\"#999999\"/>");
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{label}</text>", lx + 18, y + 10);
        }
        s.push_str("</svg>\n");
        s
    }
}

/// One grid per phase, ON first.
pub fn export_policy_heatmap(mdp: &StructuredMdp, policy: &Policy) -> [PolicyGrid; 2] {
    let cfg = &mdp.config;
    let labels: Vec<String> = mdp.actions.iter().map(|a| a.spec.label.clone()).collect();
    [Phase::On, Phase::Off].map(|phase| {
        let cells = (0..=cfg.capacity)
            .map(|x| {
                (cfg.t0..=cfg.deadline)
                    .map(|h| match mdp.space.index_of(&State::new(h, x, phase)) {
                        None => Cell::Unreachable,
                        Some(_) if h == cfg.deadline => Cell::ForcedRelease,
                        Some(i) => Cell::Action(policy.choice[i]),
                    })
                    .collect()
            })
            .collect();
        PolicyGrid {
            phase,
            t0: cfg.t0,
            deadline: cfg.deadline,
            capacity: cfg.capacity,
            labels: labels.clone(),
            cells,
        }
    })
}

/// Writes `policy_on.csv`, `policy_off.csv` and matching SVG files.
pub fn write_heatmaps(grids: &[PolicyGrid], dir: &Path) -> Result<()> {
    for g in grids {
        let stem = format!("policy_{}", g.phase.to_string().to_lowercase());
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, g.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let svg = dir.join(format!("{stem}.svg"));
        fs::write(&svg, g.to_svg()).map_err(|e| Error::io(&svg, e))?;
    }
    Ok(())
}

/// Arrival data for one location and month.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationScenario {
    pub location: String,
    pub month: u32,
    pub arrivals: EpDistributionSet,
}

/// Settings shared by every scenario of a comparison. The production window
/// of each scenario comes from its arrival data.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSetup {
    pub capacity: u32,
    pub threshold: u32,
    pub alpha: f64,
    pub beta: f64,
    pub actions: Vec<ActionSpec>,
    pub rewards: RewardModel,
    pub service: ServiceProfile,
    pub options: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub location: String,
    pub month: u32,
    pub states: usize,
    pub measures: Option<MeasureSet>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn solve_scenario(sc: &LocationScenario, setup: &ComparisonSetup) -> Result<(usize, MeasureSet)> {
    let mut config = crate::state::ModelConfig::new(
        sc.arrivals.t0,
        sc.arrivals.deadline,
        setup.capacity,
        setup.threshold,
        setup.alpha,
        setup.beta,
    );
    config.packet_size_wh = sc.arrivals.packet_size_wh;
    let mdp = assemble_mdp(&config, &sc.arrivals, &setup.service, &setup.actions, &setup.rewards)?;
    let rep = policy_iteration(&mdp, &setup.options)?;
    Ok((mdp.n(), compute_measures(&mdp, &rep.policy, rep.pi(), rep.rho())))
}

/// Solves every scenario in parallel. A failing scenario gets an error row
/// and the others continue.
pub fn compare_locations(scenarios: &[LocationScenario], setup: &ComparisonSetup) -> ComparisonTable {
    let rows = scenarios
        .par_iter()
        .map(|sc| match solve_scenario(sc, setup) {
            Ok((states, m)) => ComparisonRow {
                location: sc.location.clone(),
                month: sc.month,
                states,
                measures: Some(m),
                error: None,
            },
            Err(e) => {
                log::warn!("{} month {}: {e}", sc.location, sc.month);
                ComparisonRow {
                    location: sc.location.clone(),
                    month: sc.month,
                    states: 0,
                    measures: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    ComparisonTable { rows }
}

type Series = (&'static str, fn(&MeasureSet) -> f64);

const SERIES: [Series; 4] = [
    ("release_wh", |m| m.expected_release_wh),
    ("delay", |m| m.delay_probability),
    ("lost_wh", |m| m.expected_lost_wh),
    ("combined", |m| m.combined),
];

impl ComparisonTable {
    pub const CSV_HEADER: [&'static str; 8] = [
        "location",
        "month",
        "states",
        "release_wh",
        "delay",
        "lost_wh",
        "combined",
        "error",
    ];

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            let f = |v: Option<f64>| v.map(|v| format!("{v:.9}")).unwrap_or_default();
            let m = r.measures.as_ref();
            w.write_record([
                r.location.clone(),
                r.month.to_string(),
                r.states.to_string(),
                f(m.map(|m| m.expected_release_wh)),
                f(m.map(|m| m.delay_probability)),
                f(m.map(|m| m.expected_lost_wh)),
                f(m.map(|m| m.combined)),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Locations in first-seen order.
    pub fn locations(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.location) {
                out.push(r.location.clone());
            }
        }
        out
    }

    pub fn get(&self, location: &str, month: u32) -> Option<&MeasureSet> {
        self.rows
            .iter()
            .find(|r| r.location == location && r.month == month)
            .and_then(|r| r.measures.as_ref())
    }

    /// Plot-ready series: one file per measure, one row per month, one
    /// column per location.
    pub fn series_csv(&self) -> Vec<(String, String)> {
        let locations = self.locations();
        let mut months: Vec<u32> = self.rows.iter().map(|r| r.month).collect();
        months.sort_unstable();
        months.dedup();
        SERIES
            .iter()
            .map(|(name, f)| {
                let mut out = String::from("month");
                for l in &locations {
                    let _ = write!(out, ",{l}");
                }
                out.push('\n');
                for &m in &months {
                    let _ = write!(out, "{m}");
                    for l in &locations {
                        let v = self.get(l, m).map(|ms| format!("{:.9}", f(ms))).unwrap_or_default();
                        let _ = write!(out, ",{v}");
                    }
                    out.push('\n');
                }
                (format!("series_{name}.csv"), out)
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("comparison.csv");
        fs::write(&path, self.to_csv()?).map_err(|e| Error::io(&path, e))?;
        for (name, body) in self.series_csv() {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
