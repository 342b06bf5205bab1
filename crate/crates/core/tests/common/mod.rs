//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use mca_pricing::{Scenario64, User, UtilityFunction64, WifiEnergy};
use rand::Rng;

pub fn log_utility(theta: f64) -> UtilityFunction64 {
    UtilityFunction64::logarithmic(theta, 1.0).unwrap()
}

/// Two logarithmic users on two operators, each subscribing to its own.
pub fn two_by_two(theta: (f64, f64), e: (f64, f64), cap: (f64, f64)) -> Scenario64 {
    Scenario64::new(
        2,
        vec![
            User { subscription: 0, capacity: cap.0, op_cost: e.0, energy_down: 0.0, utility: log_utility(theta.0) },
            User { subscription: 1, capacity: cap.1, op_cost: e.1, energy_down: 0.0, utility: log_utility(theta.1) },
        ],
    )
}

/// Two users with `4 ln(1 + x)`, unit capacities, operator costs 1 and 2.
pub fn example2() -> Scenario64 {
    two_by_two((4.0, 4.0), (1.0, 2.0), (1.0, 1.0))
}

/// Random two-user scenario with nonzero Wi-Fi energy.
pub fn random_two_user<R: Rng>(rng: &mut R) -> Scenario64 {
    let mut users = Vec::new();
    for i in 0..2 {
        users.push(User {
            subscription: i,
            capacity: rng.random_range(0.2..2.0),
            op_cost: rng.random_range(0.0..1.0),
            energy_down: rng.random_range(0.0..0.5),
            utility: log_utility(rng.random_range(1.0..5.0)),
        });
    }
    let w = rng.random_range(0.0..0.5);
    let v = rng.random_range(0.0..0.5);
    let mut s = Scenario64::new(2, users);
    s.energy_wifi = WifiEnergy::Matrix(vec![vec![0.0, w], vec![v, 0.0]]);
    s
}

/// Cheapest cost of carrying `y = (y1, y2)` to the two clients when link
/// `i <- j` costs `price[i][j]` and gateway `j` carries at most `cap[j]`.
/// `None` when infeasible.
pub fn two_by_two_route_cost(price: [[f64; 2]; 2], cap: [f64; 2], y: [f64; 2]) -> Option<f64> {
    // With a = x[0][0] and c = x[1][0], gateway 0 carries s = a + c.
    let lo = (y[0] + y[1] - cap[1]).max(0.0);
    let hi = cap[0].min(y[0] + y[1]);
    if lo > hi + 1e-12 {
        return None;
    }
    let d0 = price[0][0] - price[0][1];
    let d1 = price[1][0] - price[1][1];
    let base = price[0][1] * y[0] + price[1][1] * y[1];
    // For a given s, gateway 0 takes whichever client gains more from it.
    let cost_at = |s: f64| {
        let (first, second, yf) = if d0 <= d1 { (d0, d1, y[0]) } else { (d1, d0, y[1]) };
        let f = s.min(yf);
        base + first * f + second * (s - f)
    };
    let mut cands = vec![lo, hi];
    for k in [y[0], y[1]] {
        if k > lo && k < hi {
            cands.push(k);
        }
    }
    cands.into_iter().map(cost_at).reduce(f64::min)
}

/// Maximizes a function of two variables over a box by repeated grid
/// zooming. Returns the best value found.
pub fn zoom_max_2d<F: Fn(f64, f64) -> f64>(f: F, hi: (f64, f64), n: usize, rounds: usize) -> (f64, f64, f64) {
    let (mut lo0, mut hi0, mut lo1, mut hi1) = (0.0, hi.0, 0.0, hi.1);
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for _ in 0..rounds {
        for a in 0..=n {
            for b in 0..=n {
                let u = lo0 + (hi0 - lo0) * a as f64 / n as f64;
                let v = lo1 + (hi1 - lo1) * b as f64 / n as f64;
                let val = f(u, v);
                if val > best.2 {
                    best = (u, v, val);
                }
            }
        }
        let (w0, w1) = ((hi0 - lo0) * 4.0 / n as f64, (hi1 - lo1) * 4.0 / n as f64);
        lo0 = (best.0 - w0).max(0.0);
        hi0 = (best.0 + w0).min(hi.0);
        lo1 = (best.1 - w1).max(0.0);
        hi1 = (best.1 + w1).min(hi.1);
    }
    best
}

/// Maximizes over a uniform grid on `[lo, hi]`, then zooms.
pub fn zoom_max_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize, rounds: usize) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut best = (lo, f64::NEG_INFINITY);
    for _ in 0..rounds {
        for k in 0..=n {
            let x = a + (b - a) * k as f64 / n as f64;
            let v = f(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        let w = (b - a) * 4.0 / n as f64;
        a = (best.0 - w).max(lo);
        b = (best.0 + w).min(hi);
    }
    best
}
