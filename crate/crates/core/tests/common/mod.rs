//! Independent oracles and random instance generators shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offgrid_mdp::ingest::{EpDistributionSet, ServiceProfile};
use offgrid_mdp::model::{assemble_mdp, ActionSpec, RewardModel, StructuredMdp};
use offgrid_mdp::sparse::SparseTransitionMatrix;
use offgrid_mdp::state::ModelConfig;

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Stationary distribution of a dense irreducible chain by GTH elimination.
pub fn gth(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut a: Vec<Vec<f64>> = p.to_vec();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[k][j]).sum();
        for i in 0..k {
            a[i][k] /= s;
        }
        for i in 0..k {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..k {
                a[i][j] += aik * a[k][j];
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[i][k]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|v| v / total).collect()
}

/// Solves `V + rho = r + P V` with `V[root] = 0` by dense LU.
pub fn dense_bellman(p: &[Vec<f64>], r: &[f64], root: usize) -> (Vec<f64>, f64) {
    let n = p.len();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        for t in 0..n {
            a[(s, t)] = if s == t { 1.0 } else { 0.0 } - p[s][t];
        }
        a[(s, n)] = 1.0;
        b[s] = r[s];
    }
    a[(n, root)] = 1.0;
    let x = a.lu().solve(&b).expect("singular Bellman system");
    (x.as_slice()[..n].to_vec(), x[n])
}

/// Max-norm Bellman residual of `(v, rho)` for a dense chain.
pub fn dense_residual(p: &[Vec<f64>], r: &[f64], v: &[f64], rho: f64) -> f64 {
    (0..p.len())
        .map(|s| {
            let pv: f64 = p[s].iter().zip(v).map(|(a, b)| a * b).sum();
            (v[s] + rho - r[s] - pv).abs()
        })
        .fold(0.0, f64::max)
}

/// Best average reward over every deterministic policy, by enumeration.
pub fn brute_force_rho(mdp: &StructuredMdp) -> (f64, Vec<usize>) {
    let n = mdp.n();
    let k = mdp.num_actions();
    let total = (k as u64).checked_pow(n as u32).expect("too many policies");
    assert!(total <= 1 << 20, "brute force over {total} policies");
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut choice = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for slot in choice.iter_mut() {
            *slot = (c % k as u64) as usize;
            c /= k as u64;
        }
        let p = mdp.policy_matrix(&choice).to_dense();
        let r = mdp.policy_rewards(&choice);
        let pi = gth(&p);
        let rho: f64 = pi.iter().zip(&r).map(|(a, b)| a * b).sum();
        if rho > best.0 + 1e-12 {
            best = (rho, choice.clone());
        }
    }
    best
}

/// A random chain in which every cycle passes through the root.
///
/// States are numbered in a shuffled order; the returned ordering lists the
/// root first. Each state keeps a positive arc into the root, so the chain
/// is irreducible on the states reachable from the root, and every state is
/// reached by a forward arc from an earlier one.
pub fn random_type_b(n: usize, rng: &mut ChaCha8Rng) -> (SparseTransitionMatrix, Vec<usize>) {
    assert!(n >= 2);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut rows = vec![Vec::new(); n];
    for k in 0..n {
        let s = ids[k];
        let mut arcs: Vec<(usize, f64)> = vec![(ids[0], rng.gen_range(0.05..1.0))];
        if k > 0 && rng.gen_bool(0.5) {
            arcs.push((s, rng.gen_range(0.0..0.9)));
        }
        if k + 1 < n {
            // the next state in the order is always a successor
            arcs.push((ids[k + 1], rng.gen_range(0.1..1.0)));
            for _ in 0..rng.gen_range(0..4) {
                let j = rng.gen_range(k + 1..n);
                arcs.push((ids[j], rng.gen_range(0.0..1.0)));
            }
        }
        let total: f64 = arcs.iter().map(|a| a.1).sum();
        rows[s] = arcs.into_iter().map(|(t, p)| (t, p / total)).collect();
    }
    let m = SparseTransitionMatrix::from_rows(rows);
    (m, ids)
}

/// Random rewards in `[-1, 1]`.
pub fn random_rewards(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Shape of a random battery model.
#[derive(Debug, Clone, Copy)]
pub struct BatteryShape {
    pub max_hours: u32,
    pub max_capacity: u32,
    pub max_batch: u32,
    pub actions: usize,
}

/// A random battery MDP: window, capacity, threshold, phase rates, arrival
/// pmfs, service probabilities, release levels and rewards all drawn at
/// random.
pub fn random_battery(seed: u64, shape: BatteryShape) -> StructuredMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = rng.gen_range(5..9);
    let deadline = t0 + rng.gen_range(1..=shape.max_hours);
    let capacity = rng.gen_range(1..=shape.max_capacity);
    let threshold = rng.gen_range(1..=capacity);
    let alpha = rng.gen_range(0.0..0.3);
    let beta = rng.gen_range(0.05..0.99);
    let config = ModelConfig::new(t0, deadline, capacity, threshold, alpha, beta);
    let dists: BTreeMap<u32, Vec<f64>> = (t0..=deadline)
        .map(|h| {
            let k = rng.gen_range(0..=shape.max_batch);
            let mut w: Vec<f64> = (0..=k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|p| *p /= total);
            let drift: f64 = w.iter().sum::<f64>() - 1.0;
            w[0] -= drift;
            (h, w)
        })
        .collect();
    let arrivals = EpDistributionSet::from_pmfs(1, 300.0, t0, deadline, dists).unwrap();
    let service = ServiceProfile {
        probs: (0..24).map(|h| (h, rng.gen_range(0.0..0.9))).collect(),
    };
    let zs: Vec<f64> = (0..shape.actions).map(|_| rng.gen_range(0.0..0.95)).collect();
    let rewards = RewardModel::new(rng.gen_range(0.5..2.0), -rng.gen_range(0.0..5.0), -rng.gen_range(0.0..5.0));
    assemble_mdp(&config, &arrivals, &service, &ActionSpec::uniform_set(&zs), &rewards).unwrap()
}
