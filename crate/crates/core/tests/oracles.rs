mod common;

use common::{brute_force_rho, random_battery, BatteryShape};
use offgrid_mdp::measures::compute_measures;
use offgrid_mdp::sim::{compare_to_analytic, simulate_policy};
use offgrid_mdp::solvers::{policy_iteration, relative_value_iteration, Policy, SolverOptions};
use offgrid_mdp::state::{Phase, State};

const TINY: BatteryShape = BatteryShape {
    max_hours: 2,
    max_capacity: 3,
    max_batch: 2,
    actions: 2,
};

#[test]
fn policy_iteration_matches_exhaustive_search() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let mdp = random_battery(seed, TINY);
        if mdp.n() > 14 {
            continue;
        }
        let (best, _) = brute_force_rho(&mdp);
        let opts = SolverOptions::default();
        let pi = policy_iteration(&mdp, &opts).unwrap();
        let vi = relative_value_iteration(&mdp, &opts).unwrap();
        assert!((pi.rho() - best).abs() <= 1e-10, "seed {seed}: {} vs {best}", pi.rho());
        assert!((vi.rho() - best).abs() <= 1e-8, "seed {seed}: {} vs {best}", vi.rho());
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} tiny instances");
}

#[test]
fn simulation_is_deterministic() {
    let mdp = random_battery(7, TINY);
    let policy = Policy::constant(mdp.n(), 1);
    let a = simulate_policy(&mdp, &policy, 20_000, 99, None).unwrap();
    let b = simulate_policy(&mdp, &policy, 20_000, 99, None).unwrap();
    assert_eq!(a, b);
    let c = simulate_policy(&mdp, &policy, 20_000, 100, None).unwrap();
    assert_ne!(a.visits, c.visits);
}

#[test]
fn expected_rewards_match_simulated_slot_rewards() {
    let shape = BatteryShape {
        max_hours: 4,
        max_capacity: 6,
        max_batch: 3,
        actions: 2,
    };
    for seed in 0..6u64 {
        let mdp = random_battery(seed, shape);
        let policy = Policy { choice: (0..mdp.n()).map(|s| s % 2).collect() };
        let sim = simulate_policy(&mdp, &policy, 400_000, seed, None).unwrap();
        let r = mdp.policy_rewards(&policy.choice);
        // one-slot rewards are bounded, so a Hoeffding-style band applies
        let cfg = &mdp.config;
        let span = mdp.rewards.r1_plus * cfg.capacity as f64
            + (mdp.rewards.r2_minus.abs()) * (cfg.capacity as f64 + 3.0)
            + mdp.rewards.r3_minus.abs();
        for s in 0..mdp.n() {
            let v = sim.visits[s];
            if v < 2_000 {
                continue;
            }
            let mean = sim.reward_sum[s] / v as f64;
            let band = span * (2.0 * (1e6f64).ln() / v as f64).sqrt();
            assert!((mean - r[s]).abs() <= band, "seed {seed} state {}: {mean} vs {}", mdp.label(s), r[s]);
        }
    }
}

#[test]
fn simulation_agrees_with_analytic_measures() {
    let shape = BatteryShape {
        max_hours: 5,
        max_capacity: 10,
        max_batch: 4,
        actions: 3,
    };
    for seed in 0..5u64 {
        let mdp = random_battery(seed, shape);
        let rep = policy_iteration(&mdp, &SolverOptions::default()).unwrap();
        let m = compute_measures(&mdp, &rep.policy, rep.pi(), rep.rho());
        assert!((0.0..=1.0).contains(&m.delay_probability));
        let sim = simulate_policy(&mdp, &rep.policy, 500_000, 1000 + seed, None).unwrap();
        let cmp = compare_to_analytic(&sim, &m, rep.pi());
        assert!(cmp.all_within(4.0), "seed {seed}: {:?}", cmp.diagnostics);
        assert!(cmp.tv_distance < 0.02, "seed {seed}: tv {}", cmp.tv_distance);
    }
}

#[test]
fn long_run_average_ignores_the_start_state() {
    let mdp = random_battery(3, TINY);
    let rep = policy_iteration(&mdp, &SolverOptions::default()).unwrap();
    let last = mdp.space.states[mdp.n() - 1];
    let a = simulate_policy(&mdp, &rep.policy, 300_000, 5, None).unwrap();
    let b = simulate_policy(&mdp, &rep.policy, 300_000, 6, Some(last)).unwrap();
    let joint = (a.rho.std_error.powi(2) + b.rho.std_error.powi(2)).sqrt();
    assert!((a.rho.mean - b.rho.mean).abs() <= 4.0 * joint);
    assert!(simulate_policy(&mdp, &rep.policy, 1000, 5, Some(State::new(30, 0, Phase::On))).is_err());
}
