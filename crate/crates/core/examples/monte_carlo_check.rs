//! Simulates the optimal toy policy and compares the estimates with the
//! analytic measures.
//!
//! ```text
//! cargo run --release --example monte_carlo_check -- [slots] [seed]
//! ```

use offgrid_mdp::ingest::{build_service_profile, EpDistributionSet, ServiceSpec, ERLANG_TWO_PEAK_NAME};
use offgrid_mdp::measures::compute_measures;
use offgrid_mdp::model::{assemble_mdp, ActionSpec, RewardModel};
use offgrid_mdp::sim::{compare_to_analytic, simulate_policy};
use offgrid_mdp::solvers::{policy_iteration, SolverOptions};
use offgrid_mdp::state::ModelConfig;

fn main() -> offgrid_mdp::Result<()> {
    let mut args = std::env::args().skip(1);
    let slots: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let config = ModelConfig::new(9, 12, 3, 3, 0.01, 0.95);
    let arrivals = EpDistributionSet::stationary(9, 12, &[1.0 / 3.0; 3])?;
    let service = build_service_profile(&ServiceSpec::Preset(ERLANG_TWO_PEAK_NAME.into()))?;
    let actions = ActionSpec::uniform_set(&[0.1, 0.3, 0.5, 0.7, 0.9]);
    let mdp = assemble_mdp(&config, &arrivals, &service, &actions, &RewardModel::new(1.0, -2.0, -1.0))?;

    let rep = policy_iteration(&mdp, &SolverOptions::default())?;
    let measures = compute_measures(&mdp, &rep.policy, rep.pi(), rep.rho());
    let sim = simulate_policy(&mdp, &rep.policy, slots, seed, None)?;
    print!("{}", compare_to_analytic(&sim, &measures, rep.pi()).to_csv());
    Ok(())
}
