//! Solves the Barcelona-like model under three reward settings and prints
//! the gain, the measures and the PV-ON policy grid of each.
//!
//! ```text
//! cargo run --release --example optimal_policy
//! ```

use offgrid_mdp::ingest::{build_service_profile, EpDistributionSet, ServiceSpec, ERLANG_TWO_PEAK_NAME};
use offgrid_mdp::measures::{compute_measures, export_policy_heatmap};
use offgrid_mdp::model::{assemble_mdp, ActionSpec, RewardModel};
use offgrid_mdp::solvers::{policy_iteration, SolverOptions};
use offgrid_mdp::state::ModelConfig;

fn main() -> offgrid_mdp::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let arrivals = EpDistributionSet::load(&dir.join("barcelona_august.json"))?;
    let config = ModelConfig::new(arrivals.t0, arrivals.deadline, 65, 25, 0.01, 0.95);
    let service = build_service_profile(&ServiceSpec::Preset(ERLANG_TWO_PEAK_NAME.into()))?;
    let actions = ActionSpec::uniform_set(&[0.1, 0.3, 0.5, 0.7, 0.9]);

    for (name, rewards) in [
        ("release only", RewardModel::new(1.0, 0.0, 0.0)),
        ("with loss penalty", RewardModel::new(1.0, -100.0, 0.0)),
        ("with loss and delay penalties", RewardModel::new(1.0, -100.0, -25.0)),
    ] {
        let mdp = assemble_mdp(&config, &arrivals, &service, &actions, &rewards)?;
        let rep = policy_iteration(&mdp, &SolverOptions::default())?;
        let m = compute_measures(&mdp, &rep.policy, rep.pi(), rep.rho());
        println!(
            "\n{name}: rho = {:.6} after {} iterations; release {:.1} Wh, delay {:.4}, lost {:.2} Wh per slot",
            rep.rho(),
            rep.iterations,
            m.expected_release_wh,
            m.delay_probability,
            m.expected_lost_wh
        );
        let [on, _] = export_policy_heatmap(&mdp, &rep.policy);
        print!("{}", on.to_csv());
    }
    Ok(())
}
