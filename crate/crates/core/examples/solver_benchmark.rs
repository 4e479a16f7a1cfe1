//! Times the four solvers on small generated scenarios and reports how the
//! structured evaluation scales with the number of arcs.
//!
//! ```text
//! cargo run --release --example solver_benchmark
//! ```

use std::time::{Duration, Instant};

use offgrid_mdp::solvers::benchmark::{benchmark_suite, generate_scenario, log_log_slope, ScenarioSpec, SolverKind};
use offgrid_mdp::solvers::SolverOptions;
use offgrid_mdp::structured::relative_evaluate;

fn main() -> offgrid_mdp::Result<()> {
    let scenarios: Vec<ScenarioSpec> = [100, 300, 1000].into_iter().map(|n| ScenarioSpec::new(n, 10)).collect();
    let report = benchmark_suite(&scenarios, &SolverKind::ALL, &SolverOptions::default(), Some(Duration::from_secs(30)))?;
    print!("{}", report.table());

    let mut points = Vec::new();
    for n in [1000, 2000, 4000, 8000] {
        let mdp = generate_scenario(&ScenarioSpec::new(n, 1))?;
        let view = mdp.action_view(0)?;
        let r = &mdp.actions[0].rewards.expected;
        let reps = 50;
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(relative_evaluate(&view, r)?);
        }
        let secs = t.elapsed().as_secs_f64() / reps as f64;
        let m = mdp.actions[0].matrix.nnz();
        println!("|S| = {:>5}  m = {:>8}  {:.3} ms per evaluation", mdp.n(), m, secs * 1e3);
        points.push((m as f64, secs));
    }
    println!("log-log slope of time against m: {:.2}", log_log_slope(&points));
    Ok(())
}
