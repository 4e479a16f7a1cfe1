//! Builds the three-hour toy battery model and prints its states and the
//! transitions of one action.
//!
//! ```text
//! cargo run --example toy_chain
//! ```

use offgrid_mdp::ingest::{EpDistributionSet, ServiceProfile};
use offgrid_mdp::model::{assemble_mdp, ActionSpec, RewardModel};
use offgrid_mdp::state::ModelConfig;

fn main() -> offgrid_mdp::Result<()> {
    // t0 = 9, T = 12, capacity and threshold 3, zero to two packets per hour
    let config = ModelConfig::new(9, 12, 3, 3, 0.01, 0.95);
    let arrivals = EpDistributionSet::stationary(9, 12, &[1.0 / 3.0; 3])?;
    let service = ServiceProfile::constant(0.5)?;
    let actions = [ActionSpec::uniform("z=0.5", 0.5)];
    let mdp = assemble_mdp(&config, &arrivals, &service, &actions, &RewardModel::new(1.0, -1.0, -1.0))?;

    println!("{} reachable states, {} arcs", mdp.n(), mdp.arcs());
    let a = &mdp.actions[0];
    for (k, &s) in mdp.ordering.iter().enumerate() {
        let row: Vec<String> = a
            .matrix
            .row(s)
            .map(|(t, p)| format!("{} {:.4}", mdp.label(t), p))
            .collect();
        println!("{k:>2} {:<12} r = {:+.4}  -> {}", mdp.label(s), a.rewards.expected[s], row.join(", "));
    }
    Ok(())
}
