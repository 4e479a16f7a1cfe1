//! Scaled battery scenarios and the solver timing harness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EpDistributionSet, ServiceProfile};
use crate::model::{assemble_mdp, ActionSpec, RewardModel, StructuredMdp};
use crate::solvers::{policy_iteration, relative_value_iteration, Evaluator, SolveReport, SolverOptions};
use crate::state::{enumerate_reachable_states, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    Rvi,
    RpiFp,
    RpiGj,
    RpiRb,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::Rvi, SolverKind::RpiFp, SolverKind::RpiGj, SolverKind::RpiRb];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Rvi => "rvi",
            SolverKind::RpiFp => "rpi-fp",
            SolverKind::RpiGj => "rpi-gj",
            SolverKind::RpiRb => "rpi-rb",
        }
    }

    pub fn run(self, mdp: &StructuredMdp, options: &SolverOptions) -> Result<SolveReport> {
        match self {
            SolverKind::Rvi => relative_value_iteration(mdp, options),
            SolverKind::RpiFp => policy_iteration(mdp, &options.with_evaluator(Evaluator::FixedPoint)),
            SolverKind::RpiGj => policy_iteration(mdp, &options.with_evaluator(Evaluator::Direct)),
            SolverKind::RpiRb => policy_iteration(mdp, &options.with_evaluator(Evaluator::Structured)),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown solver {s:?} (expected rvi, rpi-fp, rpi-gj or rpi-rb)")))
    }
}

/// Requested size of a synthetic scenario. The generated model has roughly
/// `target_states` reachable states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub target_states: usize,
    pub actions: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(target_states: usize, actions: usize) -> Self {
        ScenarioSpec {
            target_states,
            actions,
            seed: 0x5eed,
        }
    }

    pub fn label(&self) -> String {
        format!("n{}-a{}", self.target_states, self.actions)
    }
}

/// Production window of every generated scenario, the same twelve hours as
/// the shipped fixture. Scenarios grow through the capacity only.
pub const SCENARIO_HOURS: (u32, u32) = (7, 18);

fn shape(capacity: u32) -> ModelConfig {
    let threshold = (capacity / 2).max(1);
    ModelConfig::new(SCENARIO_HOURS.0, SCENARIO_HOURS.1, capacity, threshold, 0.01, 0.95)
}

/// Random pmfs under a daylight profile: hour `h` draws from `0..=k_h` with
/// `k_h` proportional to `sin(pi (h + 0.5) / slots)`, scaled so the mean
/// daily production is about `C`.
fn arrivals_for(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<EpDistributionSet> {
    let slots = (config.deadline - config.t0 + 1) as f64;
    let weights: Vec<f64> = (0..slots as u32)
        .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / slots).sin())
        .collect();
    let norm: f64 = weights.iter().sum();
    let dists = (config.t0..=config.deadline)
        .zip(&weights)
        .map(|(h, wt)| {
            let max_batch = ((2.0 * config.capacity as f64 * wt / norm).round() as u32).clamp(1, config.capacity.max(1));
            // every hour keeps some chance of producing nothing
            let mut w: Vec<f64> = (0..=max_batch).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = w.iter().sum();
            for p in &mut w {
                *p /= total;
            }
            let drift: f64 = w.iter().sum::<f64>() - 1.0;
            w[0] -= drift;
            (h, w)
        })
        .collect();
    EpDistributionSet::from_pmfs(0, 300.0, config.t0, config.deadline, dists)
}

/// A battery model with at least `spec.target_states` reachable states (the
/// smallest capacity that gets there) and `spec.actions` release
/// probabilities `(a + 0.5) / |A|`. Threshold `C / 2`, `alpha = 0.01`,
/// `beta = 0.95`, random service probabilities and rewards `(1, -1, -1)`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<StructuredMdp> {
    if spec.actions == 0 {
        return Err(Error::config("a scenario needs at least one action"));
    }
    let count = |capacity: u32| -> Result<usize> {
        let cfg = shape(capacity);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(enumerate_reachable_states(&cfg, &arrivals_for(&cfg, &mut rng)?)?.len())
    };
    // smallest capacity reaching the target; the count grows with C
    let (mut lo, mut hi) = (1u32, 2u32);
    while count(hi)? < spec.target_states && hi < 1 << 16 {
        lo = hi;
        hi *= 2;
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if count(mid)? < spec.target_states {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let capacity = lo;
    let config = shape(capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let arrivals = arrivals_for(&config, &mut rng)?;
    let service = ServiceProfile {
        probs: (0..24).map(|h| (h, rng.gen_range(0.1..0.6))).collect(),
    };
    let zs: Vec<f64> = (0..spec.actions).map(|a| (a as f64 + 0.5) / spec.actions as f64).collect();
    assemble_mdp(
        &config,
        &arrivals,
        &service,
        &ActionSpec::uniform_set(&zs),
        &RewardModel::new(1.0, -1.0, -1.0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// The per-cell time limit was exceeded; `seconds` holds the limit.
    Exceeded,
    Failed(String),
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::Exceeded => f.write_str("exceeded"),
            CellStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scenario: String,
    pub states: usize,
    pub actions: usize,
    pub solver: SolverKind,
    pub seconds: f64,
    pub outer_iterations: usize,
    pub eval_ops: usize,
    /// Largest per-action stored entry count.
    pub arcs: usize,
    pub rho: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

/// Times one solver on one model. A timeout is recorded, not returned.
pub fn run_cell(
    scenario: &str,
    mdp: &StructuredMdp,
    solver: SolverKind,
    options: &SolverOptions,
) -> BenchmarkRow {
    let start = Instant::now();
    let result = solver.run(mdp, options);
    let elapsed = start.elapsed().as_secs_f64();
    let mut row = BenchmarkRow {
        scenario: scenario.to_string(),
        states: mdp.n(),
        actions: mdp.num_actions(),
        solver,
        seconds: elapsed,
        outer_iterations: 0,
        eval_ops: 0,
        arcs: mdp.arcs(),
        rho: None,
        status: CellStatus::Ok,
    };
    match result {
        Ok(rep) => {
            row.outer_iterations = rep.iterations;
            row.eval_ops = rep.eval_ops;
            row.rho = Some(rep.rho());
            if !rep.converged {
                row.status = CellStatus::Failed("iteration cap reached".into());
            }
        }
        Err(Error::TimedOut { seconds }) => {
            row.seconds = seconds;
            row.status = CellStatus::Exceeded;
        }
        Err(e) => row.status = CellStatus::Failed(e.to_string()),
    }
    row
}

/// Runs every solver on every scenario, one cell at a time.
pub fn benchmark_suite(
    scenarios: &[ScenarioSpec],
    solvers: &[SolverKind],
    options: &SolverOptions,
    timeout: Option<Duration>,
) -> Result<BenchmarkReport> {
    let options = SolverOptions {
        time_limit: timeout,
        ..*options
    };
    let mut report = BenchmarkReport::default();
    for spec in scenarios {
        let mdp = generate_scenario(spec)?;
        log::info!("scenario {}: {} states, {} arcs", spec.label(), mdp.n(), mdp.arcs());
        for &solver in solvers {
            let row = run_cell(&spec.label(), &mdp, solver, &options);
            log::info!("  {solver}: {:.3}s, {} iterations, {}", row.seconds, row.outer_iterations, row.status);
            report.rows.push(row);
        }
    }
    Ok(report)
}

impl BenchmarkReport {
    pub const CSV_HEADER: [&'static str; 10] = [
        "scenario",
        "states",
        "actions",
        "solver",
        "seconds",
        "outer_iterations",
        "eval_ops",
        "arcs",
        "rho",
        "status",
    ];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.scenario.clone(),
                r.states.to_string(),
                r.actions.to_string(),
                r.solver.to_string(),
                format!("{:.6}", r.seconds),
                r.outer_iterations.to_string(),
                r.eval_ops.to_string(),
                r.arcs.to_string(),
                r.rho.map(|v| format!("{v:.12}")).unwrap_or_default(),
                r.status.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Seconds and outer iterations per solver, one line per scenario.
    pub fn table(&self) -> String {
        let mut solvers: Vec<SolverKind> = Vec::new();
        let mut scenarios: Vec<(&str, usize, usize)> = Vec::new();
        for r in &self.rows {
            if !solvers.contains(&r.solver) {
                solvers.push(r.solver);
            }
            if !scenarios.iter().any(|s| s.0 == r.scenario) {
                scenarios.push((&r.scenario, r.states, r.actions));
            }
        }
        let mut out = format!("{:<14} {:>7} {:>4}", "scenario", "|S|", "|A|");
        for s in &solvers {
            out += &format!(" | {:>20}", s.name());
        }
        out.push('\n');
        out += &format!("{:<14} {:>7} {:>4}", "", "", "");
        for _ in &solvers {
            out += &format!(" | {:>11} {:>8}", "seconds", "iters");
        }
        out.push('\n');
        for (name, n, a) in scenarios {
            out += &format!("{name:<14} {n:>7} {a:>4}");
            for s in &solvers {
                match self.rows.iter().find(|r| r.scenario == name && r.solver == *s) {
                    Some(r) if r.status == CellStatus::Exceeded => {
                        out += &format!(" | {:>11} {:>8}", format!(">{:.1}", r.seconds), "-")
                    }
                    Some(r) if matches!(r.status, CellStatus::Failed(_)) => {
                        out += &format!(" | {:>11} {:>8}", "failed", "-")
                    }
                    Some(r) => out += &format!(" | {:>11.4} {:>8}", r.seconds, r.outer_iterations),
                    None => out += &format!(" | {:>11} {:>8}", "", ""),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_size_tracks_target() {
        for target in [100, 400, 1000] {
            let mdp = generate_scenario(&ScenarioSpec::new(target, 3)).unwrap();
            assert!(mdp.n() >= target, "{} < {target}", mdp.n());
            assert!(mdp.n() < target + target / 2, "{} >> {target}", mdp.n());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scenario(&ScenarioSpec::new(200, 4)).unwrap();
        let b = generate_scenario(&ScenarioSpec::new(200, 4)).unwrap();
        assert_eq!(a.actions[2].matrix, b.actions[2].matrix);
    }

    #[test]
    fn report_has_one_row_per_cell() {
        let specs = [ScenarioSpec::new(100, 2), ScenarioSpec::new(150, 2)];
        let rep = benchmark_suite(&specs, &[SolverKind::Rvi, SolverKind::RpiRb], &SolverOptions::default(), None).unwrap();
        assert_eq!(rep.rows.len(), 4);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(rep.table().contains("rpi-rb"));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solver_names_parse() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("gauss".parse::<SolverKind>().is_err());
    }
}
