//! Stage II: users jointly choose how much to download and over which
//! gateways, given the operators' hybrid prices.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, tol, Real};
use crate::scenario::Scenario;
use crate::transport::{kkt_residual, Transport};
use crate::utility::UtilityFunction;
use crate::Matrix;

/// Matrices whose infinite entries travel as JSON `null`.
pub(crate) mod inf_null {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(m: &Matrix<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<T>>> =
            m.iter().map(|r| r.iter().map(|&v| v.is_finite().then_some(v)).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> std::result::Result<Matrix<T>, D::Error> {
        let rows: Vec<Vec<Option<T>>> = Deserialize::deserialize(d)?;
        Ok(rows.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or_else(T::infinity)).collect()).collect())
    }
}

/// Per-unit charge `h[i][j]` for traffic delivered to client `i` through
/// gateway `j`. An infinite entry blocks the link. When built from parts,
/// `h[i][j] = access[j] + tethering[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPriceMatrix<T> {
    pub h: Matrix<T>,
    pub access: Option<Vec<T>>,
    pub tethering: Option<Matrix<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct HybridRepr<T> {
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_inf_null")]
    h: Option<Matrix<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    access: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_inf_null")]
    tethering: Option<Matrix<T>>,
}

mod opt_inf_null {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(m: &Option<Matrix<T>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match m {
            Some(m) => inf_null::serialize(m, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Matrix<T>>, D::Error> {
        inf_null::deserialize(d).map(Some)
    }
}

impl<T: Real> Serialize for HybridPriceMatrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HybridRepr { h: Some(self.h.clone()), access: self.access.clone(), tethering: self.tethering.clone() }
            .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for HybridPriceMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = HybridRepr::<T>::deserialize(d)?;
        let built = match (r.h, r.access, r.tethering) {
            (Some(h), None, None) => HybridPriceMatrix::from_matrix(h),
            (h, Some(a), Some(t)) => {
                let m = HybridPriceMatrix::from_parts(a, t);
                match (m, h) {
                    (Ok(m), Some(h)) if !same_matrix(&m.h, &h) => {
                        Err(Error::config("h disagrees with access + tethering"))
                    }
                    (m, _) => m,
                }
            }
            _ => Err(Error::config("prices need either \"h\" or both \"access\" and \"tethering\"")),
        };
        built.map_err(serde::de::Error::custom)
    }
}

fn same_matrix<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(r, s)| {
            r.len() == s.len()
                && r.iter().zip(s).all(|(&u, &v)| u == v || (u - v).abs() <= tol::<T>(1e-12) * u.abs().max(T::one()))
        })
}

impl<T: Real> HybridPriceMatrix<T> {
    pub fn from_matrix(h: Matrix<T>) -> Result<Self> {
        for (i, row) in h.iter().enumerate() {
            if row.len() != h.len() {
                return Err(Error::config("hybrid price matrix must be square"));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v >= T::zero()) {
                    return Err(Error::config(format!("h[{i}][{j}] = {v} is negative")));
                }
            }
        }
        Ok(HybridPriceMatrix { h, access: None, tethering: None })
    }

    /// Builds `h = access[j] + tethering[i][j]`. Tethering prices may be
    /// negative as long as every resulting `h` is not.
    pub fn from_parts(access: Vec<T>, tethering: Matrix<T>) -> Result<Self> {
        let n = access.len();
        if tethering.len() != n || tethering.iter().any(|r| r.len() != n) {
            return Err(Error::config("tethering matrix must be square and match the access prices"));
        }
        if let Some(j) = access.iter().position(|&a| !(a >= T::zero())) {
            return Err(Error::config(format!("access price {j} is negative")));
        }
        if let Some(i) = (0..n).find(|&i| !tethering[i][i].is_zero()) {
            return Err(Error::config(format!("tethering[{i}][{i}] must be zero")));
        }
        let h = (0..n).map(|i| (0..n).map(|j| access[j] + tethering[i][j]).collect()).collect();
        let mut m = Self::from_matrix(h)?;
        m.access = Some(access);
        m.tethering = Some(tethering);
        Ok(m)
    }

    pub fn uniform(n: usize, price: T) -> Self {
        HybridPriceMatrix { h: vec![vec![price; n]; n], access: None, tethering: None }
    }

    /// Prices that make user `i`'s delivered price `p[i]` on every link:
    /// `h[i][j] = p[i] - c[i][j]`, floored at zero.
    pub fn from_delivered(s: &Scenario<T>, p: &[T]) -> Self {
        let n = s.n_users();
        let h = (0..n).map(|i| (0..n).map(|j| (p[i] - s.link_energy(i, j)).max(T::zero())).collect()).collect();
        HybridPriceMatrix { h, access: None, tethering: None }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `h + c`, the per-unit price client `i` pays on link `i <- j`.
    pub fn delivered(&self, s: &Scenario<T>) -> Matrix<T> {
        let n = s.n_users();
        (0..n).map(|i| (0..n).map(|j| self.h[i][j] + s.link_energy(i, j)).collect()).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct TrafficSolution<T> {
    /// Traffic `x[i][j]` delivered to client `i` through gateway `j`.
    pub x: Matrix<T>,
    pub totals: Vec<T>,
    /// Shadow price of each gateway's capacity.
    pub lambda: Vec<T>,
    /// Multiplier of `x[i][j] >= 0`; `null` on blocked links.
    #[serde(with = "inf_null")]
    pub mu: Matrix<T>,
    /// Users' total payoff: utility minus payments and energy.
    pub payoff: T,
    pub kkt_residual: T,
    pub iterations: usize,
}

/// Solves the users' payoff maximization at prices `h`. Ties among equally
/// priced gateways go to the lowest delivered cost, then the lowest index.
pub fn solve_upm<T: Real>(s: &Scenario<T>, h: &HybridPriceMatrix<T>) -> Result<TrafficSolution<T>> {
    let n = s.n_users();
    if h.len() != n || h.h.iter().any(|r| r.len() != n) {
        return Err(Error::domain(format!("price matrix must be {n}x{n}")));
    }
    let w = h.delivered(s);
    let tie = s.delivered_cost_matrix();
    let utilities: Vec<UtilityFunction<T>> = s.users.iter().map(|u| u.utility).collect();
    let cap = s.capacities();
    let sol = Transport { objectives: &utilities, cost: &w, tie_cost: &tie, capacity: &cap }.solve()?;
    let payoff = users_payoff(s, &w, &sol.x);
    Ok(TrafficSolution {
        x: sol.x,
        totals: sol.totals,
        lambda: sol.lambda,
        mu: sol.mu,
        payoff,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

/// `sum_i U_i(y_i) - sum_ij w_ij x_ij` over the links that carry traffic.
pub(crate) fn users_payoff<T: Real>(s: &Scenario<T>, delivered: &Matrix<T>, x: &Matrix<T>) -> T {
    let terms: Vec<T> = s
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let y = pairwise_sum(&x[i]);
            let paid: Vec<T> =
                x[i].iter().zip(&delivered[i]).filter(|(&v, _)| v > T::zero()).map(|(&v, &p)| v * p).collect();
            u.utility.value_unchecked(y) - pairwise_sum(&paid)
        })
        .collect();
    pairwise_sum(&terms)
}

/// Routes fixed per-user totals at minimum total delivered cost. With free
/// Wi-Fi every client sees the same downlink costs, and the optimum is a
/// greedy fill of downlinks from the cheapest up; otherwise a min-cost flow
/// is solved. Totals may exceed capacity by a relative 1e-9 of rounding,
/// which is left on the last downlink filled.
pub fn min_cost_route<T: Real>(s: &Scenario<T>, totals: &[T]) -> Result<Matrix<T>> {
    let n = s.n_users();
    if totals.len() != n {
        return Err(Error::domain(format!("expected {n} totals, got {}", totals.len())));
    }
    if let Some(i) = totals.iter().position(|&y| !(y >= T::zero()) || !y.is_finite()) {
        return Err(Error::domain(format!("total {i} = {} is not a nonnegative number", totals[i])));
    }
    let demand = pairwise_sum(totals);
    let cap = s.total_capacity();
    if demand > cap * (T::one() + tol(1e-9)) {
        return Err(Error::Infeasible(format!("totals {demand} exceed total capacity {cap}")));
    }
    let mut x = vec![vec![T::zero(); n]; n];
    if n == 0 {
        return Ok(x);
    }
    if s.has_zero_wifi_energy() {
        return Ok(route_greedy(s, totals, &s.capacities()));
    }
    use crate::flow::{Cost, FlowNetwork};
    let mut net = FlowNetwork::new(2 * n + 2);
    let (src, sink) = (2 * n, 2 * n + 1);
    let mut links = Vec::new();
    for i in 0..n {
        net.add_edge(src, i, totals[i], Cost::zero());
        for j in 0..n {
            let e = net.add_edge(i, n + j, T::infinity(), Cost::new(0, s.delivered_cost(i, j), j as i64));
            links.push((i, j, e));
        }
    }
    let sinks: Vec<usize> = (0..n).map(|j| net.add_edge(n + j, sink, s.users[j].capacity, Cost::zero())).collect();
    let routed = net.min_cost_max_flow(src, sink, cap * tol(1e-15), tol::<T>(1e-12));
    for (i, j, e) in links {
        x[i][j] = net.flow(e).max(T::zero());
    }
    let short = demand - routed;
    if short > T::zero() {
        // Rounding excess: attach it where the slack is largest.
        let j = (0..n)
            .max_by(|&a, &b| {
                let ra = s.users[a].capacity - net.flow(sinks[a]);
                let rb = s.users[b].capacity - net.flow(sinks[b]);
                ra.partial_cmp(&rb).unwrap()
            })
            .unwrap();
        for i in 0..n {
            let got = pairwise_sum(&x[i]);
            if got < totals[i] {
                x[i][j] = x[i][j] + (totals[i] - got);
            }
        }
    }
    Ok(x)
}

/// Fills downlinks cheapest first (ties by index) up to `caps`, serving
/// users in index order. Whatever does not fit under `caps` goes to the
/// remaining true capacity in the same order, and any rounding excess
/// beyond that to the last downlink.
pub(crate) fn route_greedy<T: Real>(s: &Scenario<T>, totals: &[T], caps: &[T]) -> Matrix<T> {
    let n = s.n_users();
    let mut x = vec![vec![T::zero(); n]; n];
    if n == 0 {
        return x;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.downlink_cost(a).partial_cmp(&s.downlink_cost(b)).unwrap().then(a.cmp(&b)));
    let mut left: Vec<T> = totals.to_vec();
    let mut room: Vec<T> = order.iter().map(|&j| caps[j]).collect();
    let mut extra: Vec<T> = order.iter().map(|&j| (s.users[j].capacity - caps[j]).max(T::zero())).collect();
    for pass in 0..2 {
        let mut k = 0;
        for i in 0..n {
            while left[i] > T::zero() && k < n {
                let slot = if pass == 0 { &mut room[k] } else { &mut extra[k] };
                if *slot <= T::zero() {
                    k += 1;
                    continue;
                }
                let put = left[i].min(*slot);
                x[i][order[k]] = x[i][order[k]] + put;
                left[i] = left[i] - put;
                *slot = *slot - put;
            }
        }
    }
    let last = order[n - 1];
    for i in 0..n {
        if left[i] > T::zero() {
            x[i][last] = x[i][last] + left[i];
        }
    }
    x
}

/// Stage II under gateway-independent prices: user `i` pays `p[i]` per
/// unit whichever gateway serves it. Valid only while total demand fits in
/// total capacity, where no capacity price is needed.
pub fn demand_shortcut<T: Real>(s: &Scenario<T>, p: &[T]) -> Result<TrafficSolution<T>> {
    let n = s.n_users();
    if p.len() != n {
        return Err(Error::domain(format!("expected {n} prices, got {}", p.len())));
    }
    let mut totals = Vec::with_capacity(n);
    for (i, u) in s.users.iter().enumerate() {
        if p[i].is_infinite() && p[i] > T::zero() {
            totals.push(T::zero());
        } else {
            totals.push(u.utility.demand(p[i])?);
        }
    }
    let demand = pairwise_sum(&totals);
    let cap = s.total_capacity();
    if demand > cap * (T::one() + tol(1e-9)) {
        return Err(Error::Regime(format!(
            "demand {demand} exceeds capacity {cap}; capacity prices are needed, use solve_upm"
        )));
    }
    let x = min_cost_route(s, &totals)?;
    Ok(gateway_independent_solution(s, p, x))
}

/// Packages a routing under delivered prices `p` with zero capacity prices.
pub(crate) fn gateway_independent_solution<T: Real>(s: &Scenario<T>, p: &[T], x: Matrix<T>) -> TrafficSolution<T> {
    let n = s.n_users();
    let w: Matrix<T> = (0..n).map(|i| vec![p[i]; n]).collect();
    let utilities: Vec<UtilityFunction<T>> = s.users.iter().map(|u| u.utility).collect();
    let cap = s.capacities();
    let lambda = vec![T::zero(); n];
    let totals: Vec<T> = x.iter().map(|r| pairwise_sum(r)).collect();
    let mu = (0..n)
        .map(|i| {
            let slope = utilities[i].marginal_unchecked(totals[i]);
            (0..n).map(|_| if w[i][0].is_finite() { (p[i] - slope).max(T::zero()) } else { T::infinity() }).collect()
        })
        .collect();
    let kkt = kkt_residual(&utilities, &w, &cap, &x, &lambda);
    let payoff = users_payoff(s, &w, &x);
    TrafficSolution { x, totals, lambda, mu, payoff, kkt_residual: kkt, iterations: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::User;

    fn example2() -> Scenario<f64> {
        let u = UtilityFunction::logarithmic(4.0, 1.0).unwrap();
        Scenario::new(
            2,
            vec![
                User { subscription: 0, capacity: 1.0, op_cost: 1.0, energy_down: 0.0, utility: u },
                User { subscription: 1, capacity: 1.0, op_cost: 2.0, energy_down: 0.0, utility: u },
            ],
        )
    }

    #[test]
    fn uniform_price_two() {
        let sol = solve_upm(&example2(), &HybridPriceMatrix::uniform(2, 2.0)).unwrap();
        assert_eq!(sol.totals, vec![1.0, 1.0]);
        assert_eq!(sol.x[0][0] + sol.x[1][0], 1.0);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn prohibitive_prices_give_no_traffic() {
        let sol = solve_upm(&example2(), &HybridPriceMatrix::uniform(2, 4.0)).unwrap();
        assert_eq!(sol.totals, vec![0.0, 0.0]);
        assert_eq!(sol.lambda, vec![0.0, 0.0]);
    }

    #[test]
    fn routing_examples() {
        let s = example2();
        let x = min_cost_route(&s, &[1.0, 1.0]).unwrap();
        assert_eq!(x[0][0] + x[1][0], 1.0);
        assert_eq!(x[0][1] + x[1][1], 1.0);
        let x = min_cost_route(&s, &[0.3, 0.3]).unwrap();
        assert_eq!(x, vec![vec![0.3, 0.0], vec![0.3, 0.0]]);
        assert_eq!(min_cost_route(&s, &[0.0, 0.0]).unwrap(), vec![vec![0.0; 2]; 2]);
        assert!(matches!(min_cost_route(&s, &[1.5, 1.0]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn shortcut_examples() {
        let s = example2();
        let sol = demand_shortcut(&s, &[8.0 / 3.0, 8.0 / 3.0]).unwrap();
        assert!((sol.totals[0] - 0.5).abs() < 1e-15);
        assert!((sol.x[0][0] + sol.x[1][0] - 1.0).abs() < 1e-15);
        assert!(matches!(demand_shortcut(&s, &[1.0, 1.0]), Err(Error::Regime(_))));
        assert_eq!(demand_shortcut(&s, &[4.0, 4.0]).unwrap().totals, vec![0.0, 0.0]);
    }

    #[test]
    fn price_json_forms() {
        let h: HybridPriceMatrix<f64> = serde_json::from_str(r#"{"h": [[1.0, null], [2.0, 0.5]]}"#).unwrap();
        assert!(h.h[0][1].is_infinite());
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(text, r#"{"h":[[1.0,null],[2.0,0.5]]}"#);
        let parts: HybridPriceMatrix<f64> =
            serde_json::from_str(r#"{"access": [1.0, 2.0], "tethering": [[0.0, -0.5], [0.25, 0.0]]}"#).unwrap();
        assert_eq!(parts.h, vec![vec![1.0, 1.5], vec![1.25, 2.0]]);
        assert!(serde_json::from_str::<HybridPriceMatrix<f64>>(r#"{"h": [[-1.0]]}"#).is_err());
        assert!(serde_json::from_str::<HybridPriceMatrix<f64>>(r#"{"access": [1.0], "tethering": [[0.5]]}"#).is_err());
    }
}
