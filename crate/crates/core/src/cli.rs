//! Command-line interface.
//!
//! Exit codes: 0 success, 2 ingestion, 3 validation or structure (including
//! bad command-line usage), 4 solver, 5 I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::ingest::{
    build_ep_distributions, build_service_profile, read_pvwatts_file, EpDistributionSet, ServiceProfile, ServiceSpec,
    ERLANG_TWO_PEAK_NAME,
};
use crate::manifest::RunManifest;
use crate::measures::{
    compare_locations, compute_measures, export_policy_heatmap, write_heatmaps, ComparisonRow, ComparisonSetup,
    LocationScenario,
};
use crate::model::{assemble_mdp, ActionSpec, Gain, RewardModel, StructuredMdp};
use crate::sim::{compare_to_analytic, simulate_policy};
use crate::solvers::benchmark::{benchmark_suite, ScenarioSpec, SolverKind};
use crate::solvers::{policy_iteration, Evaluator, SolveReport, SolverOptions};
use crate::state::{ModelConfig, PartialModelConfig, Phase, State};

/// Exit code for unparsable command lines; same as validation failures.
pub const USAGE_EXIT_CODE: i32 = 3;

pub const OUT_ENV: &str = "OFFGRID_MDP_OUT";
pub const DEFAULT_ACTIONS: &str = "0.1,0.3,0.5,0.7,0.9";

#[derive(Debug, Parser)]
#[command(name = "offgrid-mdp", version, about = "Battery release decisions for off-grid solar as an average-reward MDP")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a PVWatts hourly CSV into per-hour packet distributions.
    Ingest(IngestArgs),
    /// Solve for the optimal release policy and write reports.
    Solve(SolveArgs),
    /// Time the solvers on scaled synthetic scenarios.
    Benchmark(BenchmarkArgs),
    /// Simulate the optimal policy and compare with the analytic measures.
    Simulate(SimulateArgs),
    /// Solve several locations and months and tabulate the measures.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=12))]
    pub month: u32,
    #[arg(long = "packet-wh", default_value_t = 300.0)]
    pub packet_wh: f64,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// `key = value` model file (t0, T, C, F, alpha, beta, packet_size_wh).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Arrival distributions written by `ingest`.
    #[arg(long)]
    pub arrivals: PathBuf,
    #[arg(long)]
    pub t0: Option<u32>,
    /// Deadline hour T.
    #[arg(long)]
    pub deadline: Option<u32>,
    /// Battery capacity C.
    #[arg(long)]
    pub capacity: Option<u32>,
    /// Release threshold F.
    #[arg(long)]
    pub threshold: Option<u32>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long = "packet-wh")]
    pub packet_wh: Option<f64>,
    /// Service profile: a preset name, `constant:P`, or an `hour = p` file.
    #[arg(long, default_value = ERLANG_TWO_PEAK_NAME)]
    pub service: String,
    /// Reward weights r1,r2,r3.
    #[arg(long, default_value = "1,0,0", allow_hyphen_values = true)]
    pub rewards: String,
    /// Release gain: identity or shifted.
    #[arg(long, default_value = "identity")]
    pub g: String,
    /// Release probability of each action.
    #[arg(long, default_value = DEFAULT_ACTIONS)]
    pub actions: String,
    /// structured, fixed or direct.
    #[arg(long, default_value = "structured")]
    pub evaluator: String,
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
    #[arg(long = "max-iterations", default_value_t = 100_000)]
    pub max_iterations: usize,
    /// Wall-clock limit in seconds.
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Also write the per-action matrices in the sparse interchange format.
    #[arg(long)]
    pub interchange: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Target state counts, e.g. `1e2,1e3`.
    #[arg(long, default_value = "1e2,5e2")]
    pub sizes: String,
    #[arg(long, default_value = "10")]
    pub actions: String,
    #[arg(long, default_value = "rvi,rpi-fp,rpi-gj,rpi-rb")]
    pub solvers: String,
    /// Per-cell limit in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Output CSV file (default: `<out dir>/benchmark.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub slots: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Start state `h,x,ON|OFF` (default: the root).
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// JSON scenario manifest.
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::config(format!("bad {what} {s:?}"))))
        .collect()
}

pub fn parse_rewards(text: &str, gain: Gain) -> Result<RewardModel> {
    let v: Vec<f64> = parse_list(text, "reward")?;
    let [r1, r2, r3] = v[..] else {
        return Err(Error::config(format!("expected three rewards r1,r2,r3, got {text:?}")));
    };
    let r = RewardModel::new(r1, r2, r3).with_gain(gain);
    r.validate()?;
    Ok(r)
}

pub fn parse_actions(text: &str) -> Result<Vec<ActionSpec>> {
    let zs: Vec<f64> = parse_list(text, "release probability")?;
    if zs.is_empty() {
        return Err(Error::config("no actions given"));
    }
    Ok(ActionSpec::uniform_set(&zs))
}

pub fn parse_service(text: &str) -> Result<ServiceProfile> {
    let path = Path::new(text);
    if path.is_file() {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return ServiceProfile::from_kv_str(&body);
    }
    if let Some(p) = text.strip_prefix("constant:") {
        let p: f64 = p.trim().parse().map_err(|_| Error::config(format!("bad service probability {p:?}")))?;
        return ServiceProfile::constant(p);
    }
    build_service_profile(&ServiceSpec::Preset(text.to_string()))
}

pub fn parse_state(text: &str) -> Result<State> {
    let parts: Vec<&str> = text.trim_matches(|c| c == '(' || c == ')').split(',').map(str::trim).collect();
    let bad = || Error::config(format!("bad state {text:?}, expected h,x,ON|OFF"));
    let [h, x, phase] = parts[..] else { return Err(bad()) };
    let phase = match phase.to_ascii_uppercase().as_str() {
        "ON" => Phase::On,
        "OFF" => Phase::Off,
        _ => return Err(bad()),
    };
    Ok(State::new(h.parse().map_err(|_| bad())?, x.parse().map_err(|_| bad())?, phase))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Everything needed to build and solve one model.
pub struct Resolved {
    pub config: ModelConfig,
    pub arrivals: EpDistributionSet,
    pub service: ServiceProfile,
    pub actions: Vec<ActionSpec>,
    pub rewards: RewardModel,
    pub options: SolverOptions,
}

impl ModelArgs {
    /// Applies flag > model file > arrival window > default precedence.
    pub fn resolve(&self, manifest: &mut RunManifest) -> Result<Resolved> {
        let arrivals = EpDistributionSet::load(&self.arrivals)?;
        manifest.add_input(&self.arrivals)?;
        let file = match &self.model {
            Some(p) => {
                manifest.add_input(p)?;
                PartialModelConfig::load(p)?
            }
            None => PartialModelConfig::default(),
        };
        let flags = PartialModelConfig {
            t0: self.t0,
            deadline: self.deadline,
            capacity: self.capacity,
            threshold: self.threshold,
            alpha: self.alpha,
            beta: self.beta,
            packet_size_wh: self.packet_wh,
            strict_batches: None,
        };
        let config = flags.or(file).resolve(Some(&arrivals))?;
        if config.packet_size_wh != arrivals.packet_size_wh {
            log::warn!(
                "packet size {} Wh differs from the {} Wh used to build the arrivals",
                config.packet_size_wh,
                arrivals.packet_size_wh
            );
        }
        if Path::new(&self.service).is_file() {
            manifest.add_input(Path::new(&self.service))?;
        }
        let service = parse_service(&self.service)?;
        let gain: Gain = self.g.parse()?;
        let rewards = parse_rewards(&self.rewards, gain)?;
        let actions = parse_actions(&self.actions)?;
        let options = SolverOptions {
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            evaluator: self.evaluator.parse::<Evaluator>()?,
            time_limit: self.time_limit.map(Duration::from_secs_f64),
        };
        options.validate()?;
        manifest.set("model", &config)?;
        manifest.set("rewards", rewards)?;
        manifest.set("actions", &actions)?;
        manifest.set("service", &service)?;
        manifest.set("solver", options)?;
        Ok(Resolved {
            config,
            arrivals,
            service,
            actions,
            rewards,
            options,
        })
    }
}

impl Resolved {
    pub fn assemble(&self) -> Result<StructuredMdp> {
        assemble_mdp(&self.config, &self.arrivals, &self.service, &self.actions, &self.rewards)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match cli.command {
        Command::Ingest(a) => ingest(&a, RunManifest::start("ingest", args)),
        Command::Solve(a) => solve(&a, RunManifest::start("solve", args)),
        Command::Benchmark(a) => benchmark(&a, RunManifest::start("benchmark", args)),
        Command::Simulate(a) => simulate(&a, RunManifest::start("simulate", args)),
        Command::Compare(a) => compare(&a, RunManifest::start("compare", args)),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn ingest(a: &IngestArgs, mut manifest: RunManifest) -> Result<()> {
    let records = read_pvwatts_file(&a.csv)?;
    manifest.add_input(&a.csv)?;
    let set = build_ep_distributions(&records, a.month, a.packet_wh)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    set.save(&a.out)?;
    manifest.set("month", a.month)?;
    manifest.set("packet_size_wh", a.packet_wh)?;
    manifest.set("window", [set.t0, set.deadline])?;
    manifest.finish_at(&sidecar(&a.out))?;
    println!(
        "month {}: t0 = {}, T = {}, {} hourly distributions -> {}",
        a.month,
        set.t0,
        set.deadline,
        set.dists.len(),
        a.out.display()
    );
    Ok(())
}

/// Writes the policy, values, heatmaps and report of a solve into `dir`.
pub fn write_solution(mdp: &StructuredMdp, rep: &SolveReport, options: &SolverOptions, dir: &Path) -> Result<serde_json::Value> {
    let measures = compute_measures(mdp, &rep.policy, rep.pi(), rep.rho());
    let mut policy_csv = String::from("state,h,x,phase,action,label\n");
    let mut values_csv = String::from("state,h,x,phase,value,pi\n");
    for (i, s) in mdp.space.iter() {
        let a = rep.policy.choice[i];
        policy_csv += &format!("{i},{},{},{},{a},{}\n", s.h, s.x, s.phase, mdp.actions[a].spec.label);
        values_csv += &format!("{i},{},{},{},{:.12e},{:.12e}\n", s.h, s.x, s.phase, rep.evaluation.values[i], rep.pi()[i]);
    }
    write(&dir.join("policy.csv"), policy_csv)?;
    write(&dir.join("values.csv"), values_csv)?;
    write_heatmaps(&export_policy_heatmap(mdp, &rep.policy), dir)?;
    let report = json!({
        "states": mdp.n(),
        "arcs_per_action": mdp.arcs(),
        "evaluator": options.evaluator,
        "rho": rep.rho(),
        "iterations": rep.iterations,
        "converged": rep.converged,
        "rho_history": rep.rho_history,
        "eval_ops": rep.eval_ops,
        "timing": rep.timing,
        "measures": measures,
    });
    write(&dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

fn solve(a: &SolveArgs, mut manifest: RunManifest) -> Result<()> {
    let r = a.model.resolve(&mut manifest)?;
    let mdp = r.assemble()?;
    log::info!("{} states, {} arcs per action", mdp.n(), mdp.arcs());
    let rep = policy_iteration(&mdp, &r.options)?;
    create_dir(&a.out)?;
    let report = write_solution(&mdp, &rep, &r.options, &a.out)?;
    if a.interchange {
        let path = a.out.join("model.sparse");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        mdp.write_interchange(std::io::BufWriter::new(file)).map_err(|e| Error::io(&path, e))?;
    }
    manifest.finish(&a.out)?;
    println!(
        "{} states, rho = {:.9}, {} iterations, E[Release] = {:.4} EP, E[Delay] = {:.6}, E[Lost] = {:.4} EP",
        mdp.n(),
        rep.rho(),
        rep.iterations,
        report["measures"]["expected_release_ep"].as_f64().unwrap_or(f64::NAN),
        report["measures"]["delay_probability"].as_f64().unwrap_or(f64::NAN),
        report["measures"]["expected_lost_ep"].as_f64().unwrap_or(f64::NAN),
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn benchmark(a: &BenchmarkArgs, mut manifest: RunManifest) -> Result<()> {
    let sizes: Vec<f64> = parse_list(&a.sizes, "size")?;
    let actions: Vec<usize> = parse_list(&a.actions, "action count")?;
    let solvers: Vec<SolverKind> = a.solvers.split(',').map(str::parse).collect::<Result<_>>()?;
    let mut specs = Vec::new();
    for &n in &sizes {
        if !(n >= 1.0) {
            return Err(Error::config(format!("bad size {n}")));
        }
        for &k in &actions {
            specs.push(ScenarioSpec {
                target_states: n.round() as usize,
                actions: k,
                seed: a.seed,
            });
        }
    }
    let out = match &a.out {
        Some(p) => p.clone(),
        None => PathBuf::from(std::env::var(OUT_ENV).unwrap_or_else(|_| "out".into())).join("benchmark.csv"),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let options = SolverOptions::default();
    manifest.set("scenarios", &specs)?;
    manifest.set("solvers", &solvers)?;
    manifest.set("timeout_seconds", a.timeout)?;
    manifest.set("solver", options)?;
    let report = benchmark_suite(&specs, &solvers, &options, a.timeout.map(Duration::from_secs_f64))?;
    let file = fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
    report.write_csv(file)?;
    manifest.finish_at(&sidecar(&out))?;
    print!("{}", report.table());
    println!("wrote {}", out.display());
    Ok(())
}

fn simulate(a: &SimulateArgs, mut manifest: RunManifest) -> Result<()> {
    let r = a.model.resolve(&mut manifest)?;
    let mdp = r.assemble()?;
    let rep = policy_iteration(&mdp, &r.options)?;
    let start = a.start.as_deref().map(parse_state).transpose()?;
    if let Some(s) = start {
        if mdp.space.index_of(&s).is_none() {
            return Err(Error::config(format!("start state {s} is not reachable")));
        }
    }
    manifest.set("slots", a.slots)?;
    manifest.set("seed", a.seed)?;
    manifest.set("start", start)?;
    let sim = simulate_policy(&mdp, &rep.policy, a.slots, a.seed, start)?;
    let measures = compute_measures(&mdp, &rep.policy, rep.pi(), rep.rho());
    let cmp = compare_to_analytic(&sim, &measures, rep.pi());
    create_dir(&a.out)?;
    write(&a.out.join("simulation.csv"), sim.to_csv(&mdp))?;
    write(&a.out.join("diagnostics.csv"), cmp.to_csv())?;
    manifest.finish(&a.out)?;
    println!("seed {} slots {} start {}", sim.seed, sim.slots, sim.start);
    println!("{:<18} {:>14} {:>14} {:>11} {:>8}", "quantity", "analytic", "simulated", "std.err", "z");
    for d in &cmp.diagnostics {
        println!(
            "{:<18} {:>14.8} {:>14.8} {:>11.3e} {:>8.3}{}",
            d.quantity,
            d.analytic,
            d.empirical,
            d.std_error,
            d.z,
            if d.flagged { "  !" } else { "" }
        );
    }
    println!("visit-frequency TV distance {:.5}", cmp.tv_distance);
    Ok(())
}

/// A location and its PVWatts file, relative to the scenario manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEntry {
    pub name: String,
    pub csv: PathBuf,
}

fn default_months() -> Vec<u32> {
    (1..=12).collect()
}
fn default_actions() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}
fn default_rewards() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn default_service() -> String {
    ERLANG_TWO_PEAK_NAME.to_string()
}
fn default_packet() -> f64 {
    crate::state::DEFAULT_PACKET_WH
}
fn default_alpha() -> f64 {
    crate::state::DEFAULT_ALPHA
}
fn default_beta() -> f64 {
    crate::state::DEFAULT_BETA
}

/// Scenario manifest read by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareManifest {
    pub capacity: u32,
    pub threshold: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_packet")]
    pub packet_size_wh: f64,
    #[serde(default = "default_actions")]
    pub actions: Vec<f64>,
    #[serde(default = "default_rewards")]
    pub rewards: [f64; 3],
    #[serde(default)]
    pub gain: Gain,
    #[serde(default = "default_service")]
    pub service: String,
    #[serde(default = "default_months")]
    pub months: Vec<u32>,
    pub locations: Vec<LocationEntry>,
}

impl CompareManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn setup(&self) -> Result<ComparisonSetup> {
        let [r1, r2, r3] = self.rewards;
        let rewards = RewardModel::new(r1, r2, r3).with_gain(self.gain);
        rewards.validate()?;
        Ok(ComparisonSetup {
            capacity: self.capacity,
            threshold: self.threshold,
            alpha: self.alpha,
            beta: self.beta,
            actions: ActionSpec::uniform_set(&self.actions),
            rewards,
            service: parse_service(&self.service)?,
            options: SolverOptions::default(),
        })
    }

    /// Ingests every location and month. Months that cannot be ingested
    /// come back as error rows.
    pub fn scenarios(&self, base: &Path) -> Result<(Vec<LocationScenario>, Vec<ComparisonRow>)> {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for loc in &self.locations {
            let path = base.join(&loc.csv);
            let records = read_pvwatts_file(&path)?;
            for &month in &self.months {
                match build_ep_distributions(&records, month, self.packet_size_wh) {
                    Ok(arrivals) => ok.push(LocationScenario {
                        location: loc.name.clone(),
                        month,
                        arrivals,
                    }),
                    Err(e) => failed.push(ComparisonRow {
                        location: loc.name.clone(),
                        month,
                        states: 0,
                        measures: None,
                        error: Some(e.to_string()),
                    }),
                }
            }
        }
        Ok((ok, failed))
    }
}

fn compare(a: &CompareArgs, mut manifest: RunManifest) -> Result<()> {
    let spec = CompareManifest::load(&a.scenarios)?;
    manifest.add_input(&a.scenarios)?;
    let base = a.scenarios.parent().unwrap_or(Path::new("."));
    for loc in &spec.locations {
        manifest.add_input(&base.join(&loc.csv))?;
    }
    manifest.set("scenarios", &spec)?;
    let setup = spec.setup()?;
    let (scenarios, failed) = spec.scenarios(base)?;
    let mut table = compare_locations(&scenarios, &setup);
    table.rows.extend(failed);
    let order = |name: &str| spec.locations.iter().position(|l| l.name == name).unwrap_or(usize::MAX);
    table.rows.sort_by_key(|r| (order(&r.location), r.month));
    create_dir(&a.out)?;
    table.write(&a.out)?;
    manifest.finish(&a.out)?;
    let failures = table.rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} rows ({} failed) -> {}",
        table.rows.len(),
        failures,
        a.out.join("comparison.csv").display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_parsing() {
        let r = parse_rewards("1,-100,-25", Gain::Identity).unwrap();
        assert_eq!((r.r1_plus, r.r2_minus, r.r3_minus), (1.0, -100.0, -25.0));
        assert!(parse_rewards("1,2,0", Gain::Identity).is_err());
        assert!(parse_rewards("1,0", Gain::Identity).is_err());
    }

    #[test]
    fn state_parsing() {
        assert_eq!(parse_state("12,30,on").unwrap(), State::new(12, 30, Phase::On));
        assert_eq!(parse_state("(9,0,OFF)").unwrap(), State::new(9, 0, Phase::Off));
        assert!(parse_state("9,0").is_err());
    }

    #[test]
    fn service_forms() {
        assert_eq!(parse_service("constant:0.25").unwrap().prob(3), Some(0.25));
        assert!(parse_service("erlang-two-peak").unwrap().prob(10).unwrap() > 0.7);
        assert!(parse_service("nonsense").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
