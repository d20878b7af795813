//! Oracles shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udrive::perception::{Class, GRID_COLS, GRID_ROWS, ROW_DEPTH_M, VIEW_AHEAD_M};
use udrive::ppo::{log_prob, ppo_loss, ppo_loss_and_grad, Batch, LossCoefs};
use udrive::sim::Role;
use udrive::{reset, PerturbationCase, PolicyF64, SemanticGrid, WorldConfig, WorldState};

/// Damping filter written independently of the implementation's branches.
pub fn inertia_oracle(a_tilde: f64, a_prev: f64) -> f64 {
    let sgn = |x: f64| if x >= 0.0 { 1.0 } else { -1.0 };
    let keep = if sgn(a_tilde) == sgn(a_prev) { 1.0 } else { 0.0 };
    0.9 * a_tilde + keep * 0.1 * a_prev
}

/// Distance in units of the last place between two doubles.
pub fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 { i64::MIN - bits } else { bits }
    };
    key(a).abs_diff(key(b))
}

/// Cells a single vehicle covers, from the continuous geometry alone.
pub fn mask(world: &WorldState, role: Role) -> [[bool; GRID_COLS]; GRID_ROWS] {
    let ego = world.ego().position_m;
    let v = world.vehicle(role);
    let (lo, hi) = (v.rear() - ego, v.front() - ego);
    let mut m = [[false; GRID_COLS]; GRID_ROWS];
    for (r, row) in m.iter_mut().enumerate() {
        let top = VIEW_AHEAD_M - r as f64 * ROW_DEPTH_M;
        let bottom = top - ROW_DEPTH_M;
        if lo < top && bottom < hi {
            row[1] = true;
            row[2] = true;
        }
    }
    m
}

/// Grid the agent should see: ego mask over the union of visible masks.
pub fn perturbation_oracle(world: &WorldState, case: PerturbationCase) -> SemanticGrid {
    let ego = mask(world, Role::Ego);
    let others: Vec<_> = [Role::F1, Role::F2, Role::B]
        .into_iter()
        .filter(|r| !case.removes(*r))
        .map(|r| mask(world, r))
        .collect();
    let mut g = SemanticGrid::background();
    for r in 0..GRID_ROWS {
        for c in 0..GRID_COLS {
            let class = if ego[r][c] {
                Class::EgoVehicle
            } else if others.iter().any(|m| m[r][c]) {
                Class::OtherVehicle
            } else {
                Class::background(c)
            };
            g.set(r, c, class);
        }
    }
    g
}

/// Arbitrary placements, including overlaps with the ego and vehicles
/// partly or fully outside the window.
pub fn random_world(rng: &mut ChaCha8Rng) -> WorldState {
    let mut w = reset(&WorldConfig::default(), rng.random()).unwrap();
    let ego = rng.random_range(0.0..150.0);
    w.vehicles[Role::Ego.index()].position_m = ego;
    for role in [Role::F1, Role::F2, Role::B] {
        w.vehicles[role.index()].position_m = ego + rng.random_range(-25.0..70.0);
    }
    w
}

pub const COEFS: LossCoefs<f64> = LossCoefs { clip_eps: 0.2, value_scale: 0.5, entropy_scale: 0.01 };

/// Small random network and batch whose probability ratios stay clear of
/// the clip kinks.
pub fn random_case(seed: u64) -> (PolicyF64, Batch<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(3..9);
    let hidden = rng.random_range(2..7);
    let n = rng.random_range(4..12);
    let mut net = PolicyF64::init(input, hidden, &mut rng);
    for t in net.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let inputs = Array2::from_shape_fn((n, input), |_| rng.random_range(-1.0..1.0));
    let cache = net.forward_batch(&inputs).unwrap();
    let mut batch = Batch {
        inputs,
        actions: Array1::zeros(n),
        logp_old: Array1::zeros(n),
        sigma: Array1::zeros(n),
        advantages: Array1::zeros(n),
        returns: Array1::zeros(n),
    };
    for i in 0..n {
        let sigma: f64 = rng.random_range(0.05..0.3);
        let a = cache.mu[i] + sigma * rng.random_range(-2.0..2.0);
        let shift = loop {
            let s: f64 = rng.random_range(-0.4..0.4);
            let r = (-s).exp();
            if (r - 0.8).abs() > 1e-3 && (r - 1.2).abs() > 1e-3 {
                break s;
            }
        };
        batch.sigma[i] = sigma;
        batch.actions[i] = a;
        batch.logp_old[i] = log_prob(a, cache.mu[i], sigma) + shift;
        batch.advantages[i] = rng.random_range(-2.0..2.0);
        batch.returns[i] = rng.random_range(-3.0..3.0);
    }
    (net, batch)
}

/// Largest relative error between the analytic gradient and central
/// differences over every parameter of one random case.
pub fn max_gradient_error(seed: u64) -> f64 {
    let h = 1e-6;
    let (net, batch) = random_case(seed);
    let (_, grad) = ppo_loss_and_grad(&net, &batch, &COEFS).unwrap();
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut worst = 0.0f64;
    let mut k = 0;
    for ti in 0..8 {
        for j in 0..net.tensors()[ti].len() {
            let mut plus = net.clone();
            plus.tensors_mut()[ti][j] += h;
            let mut minus = net.clone();
            minus.tensors_mut()[ti][j] -= h;
            let fd = (ppo_loss(&plus, &batch, &COEFS).unwrap().total - ppo_loss(&minus, &batch, &COEFS).unwrap().total) / (2.0 * h);
            let a = analytic[k];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
            k += 1;
        }
    }
    worst
}
