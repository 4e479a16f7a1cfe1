//! Evaluates one fixed policy of the Barcelona-like model with the
//! linear-time sweep and checks it against dense elimination.
//!
//! ```text
//! cargo run --release --example structured_evaluation
//! ```

use std::time::Instant;

use offgrid_mdp::cli::DEFAULT_ACTIONS;
use offgrid_mdp::ingest::{build_service_profile, EpDistributionSet, ServiceSpec, ERLANG_TWO_PEAK_NAME};
use offgrid_mdp::model::{assemble_mdp, ActionSpec, RewardModel};
use offgrid_mdp::solvers::direct::evaluate_direct;
use offgrid_mdp::solvers::{bellman_residual, Deadline};
use offgrid_mdp::state::ModelConfig;
use offgrid_mdp::structured::relative_evaluate;

fn main() -> offgrid_mdp::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let arrivals = EpDistributionSet::load(&dir.join("barcelona_august.json"))?;
    let config = ModelConfig::new(arrivals.t0, arrivals.deadline, 65, 25, 0.01, 0.95);
    let service = build_service_profile(&ServiceSpec::Preset(ERLANG_TWO_PEAK_NAME.into()))?;
    let zs: Vec<f64> = DEFAULT_ACTIONS.split(',').map(|z| z.parse().unwrap()).collect();
    let mdp = assemble_mdp(&config, &arrivals, &service, &ActionSpec::uniform_set(&zs), &RewardModel::new(1.0, -100.0, -25.0))?;

    // release at the middle level everywhere
    let choice = vec![2; mdp.n()];
    let matrix = mdp.policy_matrix(&choice);
    let rewards = mdp.policy_rewards(&choice);

    let t = Instant::now();
    let fast = relative_evaluate(&mdp.policy_view(&choice)?, &rewards)?;
    let fast_time = t.elapsed();
    let t = Instant::now();
    let dense = evaluate_direct(&matrix, &rewards, mdp.space.root, &Deadline::none())?;
    let dense_time = t.elapsed();

    println!("|S| = {}, m = {}", mdp.n(), matrix.nnz());
    println!("structured: rho = {:.12}  {} ops  {:?}", fast.rho, fast.ops, fast_time);
    println!("dense:      rho = {:.12}  {} ops  {:?}", dense.rho, dense.ops, dense_time);
    let gap = fast.values.iter().zip(&dense.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |V difference| = {gap:.2e}, Bellman residual = {:.2e}", bellman_residual(&matrix, &rewards, &fast));
    Ok(())
}
