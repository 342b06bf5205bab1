//! Separable concave transportation problems.
//!
//! ```text
//! maximize   sum_i F_i(y_i) - sum_ij w_ij x_ij
//! subject to y_i = sum_j x_ij,  sum_i x_ij <= C_j,  x >= 0
//! ```
//!
//! Users' payoff maximization, the operators' revenue program and the
//! welfare program are all of this form, differing only in `F` and `w`.
//!
//! The dual in the capacity prices `lambda` is
//! `g(lambda) = sum_i G_i(min_j (w_ij + lambda_j)) + sum_j lambda_j C_j`
//! with `G_i(P) = max_y F_i(y) - P y`. The inner minimum is replaced by a
//! soft minimum of temperature `tau`, the smooth dual is minimized by
//! projected Newton, and `tau` is driven to zero by continuation. The primal
//! is then recovered exactly from the final prices: totals come from the
//! closed-form responses, and a min-cost flow over the links priced at the
//! minimum splits them across gateways.

use crate::error::{Error, Result};
use crate::flow::{Cost, FlowNetwork};
use crate::scalar::{lit, pairwise_sum, Real};
use crate::utility::UtilityFunction;
use crate::Matrix;

/// A concave, nondecreasing objective with a closed-form price response.
pub trait ConcaveObjective<T: Real> {
    fn value(&self, y: T) -> T;
    fn slope(&self, y: T) -> T;
    fn slope_at_zero(&self) -> T;
    /// `argmax_y F(y) - price * y`, possibly infinite for nonpositive prices.
    fn response(&self, price: T) -> T;
    /// Derivative of [`ConcaveObjective::response`]; never positive.
    fn response_slope(&self, price: T) -> T;
}

impl<T: Real> ConcaveObjective<T> for UtilityFunction<T> {
    fn value(&self, y: T) -> T {
        self.value_unchecked(y)
    }
    fn slope(&self, y: T) -> T {
        self.marginal_unchecked(y)
    }
    fn slope_at_zero(&self) -> T {
        self.marginal_at_zero()
    }
    fn response(&self, price: T) -> T {
        self.demand_unchecked(price)
    }
    fn response_slope(&self, price: T) -> T {
        self.demand_slope(price)
    }
}

/// The revenue curve `y U'(y)` of a utility, as an objective.
#[derive(Debug, Clone, Copy)]
pub struct Revenue<T>(pub UtilityFunction<T>);

impl<T: Real> ConcaveObjective<T> for Revenue<T> {
    fn value(&self, y: T) -> T {
        self.0.revenue(y)
    }
    fn slope(&self, y: T) -> T {
        self.0.marginal_revenue(y)
    }
    fn slope_at_zero(&self) -> T {
        self.0.marginal_revenue_at_zero()
    }
    fn response(&self, price: T) -> T {
        self.0.revenue_response(price)
    }
    fn response_slope(&self, price: T) -> T {
        self.0.revenue_response_slope(price)
    }
}

/// Problem data. `cost[i][j] = +inf` blocks link `i <- j`. `tie_cost`
/// ranks links that are equally priced at the optimum: among optimal
/// routings the one minimizing `sum tie_cost * x` is returned, with
/// remaining ties going to the lower gateway index.
pub struct Transport<'a, T, F> {
    pub objectives: &'a [F],
    pub cost: &'a Matrix<T>,
    pub tie_cost: &'a Matrix<T>,
    pub capacity: &'a [T],
}

#[derive(Debug, Clone)]
pub struct TransportSolution<T> {
    pub x: Matrix<T>,
    pub lambda: Vec<T>,
    pub mu: Matrix<T>,
    pub totals: Vec<T>,
    /// `min_j (w_ij + lambda_j)`; infinite for users with no usable link.
    pub prices: Vec<T>,
    pub iterations: usize,
    pub kkt_residual: T,
}

const MAX_NEWTON_PER_STAGE: usize = 100;
const STAGES: i32 = 12;

impl<'a, T: Real, F: ConcaveObjective<T>> Transport<'a, T, F> {
    fn n_clients(&self) -> usize {
        self.objectives.len()
    }

    fn n_gateways(&self) -> usize {
        self.capacity.len()
    }

    fn usable(&self, i: usize, j: usize) -> bool {
        self.cost[i][j].is_finite() && self.capacity[j] > T::zero()
    }

    fn price_scale(&self) -> T {
        let mut scale = T::zero();
        for i in 0..self.n_clients() {
            for j in 0..self.n_gateways() {
                if self.usable(i, j) {
                    scale = scale.max(self.cost[i][j].abs());
                }
            }
        }
        let n = lit::<T>(self.n_clients().max(1) as f64);
        let per_user = pairwise_sum(self.capacity) / n;
        for f in self.objectives {
            let s = f.slope(per_user);
            if s.is_finite() {
                scale = scale.max(s);
            }
        }
        if scale > T::zero() && scale.is_finite() {
            scale
        } else {
            T::one()
        }
    }

    fn exact_prices(&self, lambda: &[T]) -> Vec<T> {
        (0..self.n_clients())
            .map(|i| {
                (0..self.n_gateways())
                    .filter(|&j| self.usable(i, j))
                    .map(|j| self.cost[i][j] + lambda[j])
                    .fold(T::infinity(), T::min)
            })
            .collect()
    }

    pub fn solve(&self) -> Result<TransportSolution<T>> {
        let m = self.n_gateways();
        for row in self.cost.iter().chain(self.tie_cost.iter()) {
            if row.len() != m {
                return Err(Error::domain("cost matrix does not match the number of gateways"));
            }
        }
        if self.cost.len() != self.n_clients() || self.tie_cost.len() != self.n_clients() {
            return Err(Error::domain("cost matrix does not match the number of clients"));
        }
        let scale = self.price_scale();
        let cap_total = pairwise_sum(self.capacity).max(T::min_positive_value());

        let lambda0 = vec![T::zero(); m];
        let prices = self.exact_prices(&lambda0);
        let totals: Vec<T> = prices.iter().zip(self.objectives).map(|(&p, f)| response_at(f, p)).collect();
        if totals.iter().all(|y| y.is_finite()) {
            let (x, routed) = self.route(&lambda0, &prices, &totals, scale);
            let deficit = pairwise_sum(&totals) - pairwise_sum(&routed);
            if deficit <= tol_of::<T>(1e-12) * cap_total {
                return Ok(self.finish(x, lambda0, prices, 0, scale));
            }
        }

        let mut lambda = lambda0;
        if !self.smooth_dual(&lambda, tol_of::<T>(1e-2) * scale).0.is_finite() {
            lambda = vec![scale; m];
        }
        let mut iterations = 0;
        let early = lit::<T>(1e-10) * scale.max(T::one());
        for k in 0..=STAGES {
            let tau = scale * lit::<T>(10f64.powi(-2 - k));
            let gtol = cap_total * if k == STAGES { tol_of(1e-14) } else { tol_of(1e-9) };
            iterations += self.newton_stage(&mut lambda, tau, gtol);
            // Once the exact recovery from the current prices certifies well
            // inside tolerance, further continuation cannot improve it much.
            if k >= 2 && k < STAGES {
                if let Some(sol) = self.recover(lambda.clone(), iterations, scale) {
                    if sol.kkt_residual <= early {
                        return Ok(sol);
                    }
                }
            }
        }
        let Some(sol) = self.recover(lambda, iterations, scale) else {
            return Err(Error::Solver {
                message: "capacity prices left some demand unbounded".into(),
                residual: f64::INFINITY,
            });
        };
        let limit = lit::<T>(1e-6) * scale.max(T::one());
        if !(sol.kkt_residual <= limit) {
            return Err(Error::Solver {
                message: format!("KKT residual above {}", crate::scalar::to_f64(limit)),
                residual: crate::scalar::to_f64(sol.kkt_residual),
            });
        }
        Ok(sol)
    }

    /// Exact primal from capacity prices `lambda`; `None` when some demand
    /// is unbounded at them.
    fn recover(&self, mut lambda: Vec<T>, iterations: usize, scale: T) -> Option<TransportSolution<T>> {
        let tiny = scale * tol_of(1e-14);
        for l in lambda.iter_mut() {
            if *l <= tiny {
                *l = T::zero();
            }
        }
        let prices = self.exact_prices(&lambda);
        let totals: Vec<T> = prices.iter().zip(self.objectives).map(|(&p, f)| response_at(f, p)).collect();
        if totals.iter().any(|y| !y.is_finite()) {
            return None;
        }
        let (x, _) = self.route(&lambda, &prices, &totals, scale);
        Some(self.finish(x, lambda, prices, iterations, scale))
    }

    /// Smoothed dual value, gradient and Hessian at `lambda`.
    fn smooth_dual(&self, lambda: &[T], tau: T) -> (T, Vec<T>, Matrix<T>) {
        let m = self.n_gateways();
        let mut g = pairwise_sum(&lambda.iter().zip(self.capacity).map(|(&l, &c)| l * c).collect::<Vec<_>>());
        let mut grad: Vec<T> = self.capacity.to_vec();
        let mut hess = vec![vec![T::zero(); m]; m];
        let mut pi = vec![T::zero(); m];
        for (i, f) in self.objectives.iter().enumerate() {
            let links: Vec<usize> = (0..m).filter(|&j| self.usable(i, j)).collect();
            if links.is_empty() {
                continue;
            }
            let s_min = links.iter().map(|&j| self.cost[i][j] + lambda[j]).fold(T::infinity(), T::min);
            let mut z = T::zero();
            for &j in &links {
                pi[j] = (-(self.cost[i][j] + lambda[j] - s_min) / tau).exp();
                z = z + pi[j];
            }
            // Shifted so the smoothed price never drops below the exact one.
            let n_links = lit::<T>(links.len() as f64);
            let p = s_min - tau * z.ln() + tau * n_links.ln();
            let y = f.response(p);
            if !y.is_finite() {
                return (T::infinity(), grad, hess);
            }
            g = g + f.value(y) - p * y;
            let curv = -f.response_slope(p);
            for &j in &links {
                pi[j] = pi[j] / z;
                grad[j] = grad[j] - y * pi[j];
            }
            for &j in &links {
                for &k in &links {
                    let mut h = curv * pi[j] * pi[k] - y * pi[j] * pi[k] / tau;
                    if j == k {
                        h = h + y * pi[j] / tau;
                    }
                    hess[j][k] = hess[j][k] + h;
                }
            }
            for &j in &links {
                pi[j] = T::zero();
            }
        }
        (g, grad, hess)
    }

    fn newton_stage(&self, lambda: &mut [T], tau: T, gtol: T) -> usize {
        let m = lambda.len();
        let (mut g, mut grad, mut hess) = self.smooth_dual(lambda, tau);
        for it in 0..MAX_NEWTON_PER_STAGE {
            let pg = projected_norm(lambda, &grad);
            if pg <= gtol {
                return it;
            }
            let diag: Vec<T> = (0..m).map(|j| hess[j][j].max(T::min_positive_value())).collect();
            let spread = (0..m)
                .map(|j| (lambda[j] - (lambda[j] - grad[j] / diag[j]).max(T::zero())).abs())
                .fold(T::zero(), T::max);
            let eps = spread.min(tau);
            let active: Vec<bool> = (0..m).map(|j| lambda[j] <= eps && grad[j] > T::zero()).collect();
            let free: Vec<usize> = (0..m).filter(|&j| !active[j]).collect();
            let mut dir = vec![T::zero(); m];
            for j in 0..m {
                if active[j] {
                    dir[j] = grad[j] / diag[j];
                }
            }
            if !free.is_empty() {
                let max_diag = free.iter().map(|&j| diag[j]).fold(T::zero(), T::max);
                let ridge = max_diag * tol_of(1e-13);
                let a: Matrix<T> = free
                    .iter()
                    .map(|&j| {
                        free.iter().map(|&k| if j == k { hess[j][k] + ridge } else { hess[j][k] }).collect()
                    })
                    .collect();
                let b: Vec<T> = free.iter().map(|&j| grad[j]).collect();
                let sol = solve_linear(a, b).unwrap_or_else(|| free.iter().map(|&j| grad[j] / diag[j]).collect());
                for (k, &j) in free.iter().enumerate() {
                    dir[j] = sol[k];
                }
            }
            let mut accepted = self.line_search(lambda, &dir, T::one(), tau, pg, &mut g, &mut grad, &mut hess);
            if !accepted {
                // A link whose soft-min weight has vanished has almost no
                // curvature, so its Newton step is useless. Take a projected
                // gradient step sized to the price scale instead.
                let gmax = grad.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
                if gmax > T::zero() {
                    let step = self.price_scale() / gmax;
                    let dir = grad.clone();
                    accepted = self.line_search(lambda, &dir, step, tau, pg, &mut g, &mut grad, &mut hess);
                }
            }
            if !accepted {
                return it + 1;
            }
        }
        MAX_NEWTON_PER_STAGE
    }

    /// Backtracking search along `-dir` from `lambda`, projected onto
    /// `lambda >= 0`. Updates the point and its derivatives on success.
    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        lambda: &mut [T],
        dir: &[T],
        mut step: T,
        tau: T,
        pg: T,
        g: &mut T,
        grad: &mut Vec<T>,
        hess: &mut Matrix<T>,
    ) -> bool {
        let m = lambda.len();
        for _ in 0..60 {
            let trial: Vec<T> = (0..m).map(|j| (lambda[j] - step * dir[j]).max(T::zero())).collect();
            let (gt, gradt, hesst) = self.smooth_dual(&trial, tau);
            if gt.is_finite() {
                let decrease: T = (0..m).map(|j| grad[j] * (lambda[j] - trial[j])).sum();
                let armijo = gt <= *g - lit::<T>(1e-4) * decrease;
                // Near the optimum the dual value stops resolving
                // progress; fall back to the projected gradient.
                let flat = gt <= *g + g.abs() * T::epsilon() * lit(8.0) && projected_norm(&trial, &gradt) < pg;
                if armijo || flat {
                    lambda.copy_from_slice(&trial);
                    *g = gt;
                    *grad = gradt;
                    *hess = hesst;
                    return true;
                }
            }
            step = step * lit(0.5);
        }
        false
    }

    /// Splits `totals` over the links priced at each user's minimum,
    /// filling gateways with a positive capacity price first, then by
    /// tie cost. Returns the flow and the amount routed per user.
    fn route(&self, lambda: &[T], prices: &[T], totals: &[T], scale: T) -> (Matrix<T>, Vec<T>) {
        let (n, m) = (self.n_clients(), self.n_gateways());
        let tight = scale * tol_of(1e-9);
        let mut net = FlowNetwork::new(n + m + 2);
        let (src, sink) = (n + m, n + m + 1);
        let mut user_edges = Vec::with_capacity(n);
        let mut links = Vec::new();
        for i in 0..n {
            user_edges.push(net.add_edge(src, i, totals[i], Cost::zero()));
            for j in 0..m {
                if self.usable(i, j) && self.cost[i][j] + lambda[j] <= prices[i] + tight {
                    let e = net.add_edge(i, n + j, T::infinity(), Cost::new(0, self.tie_cost[i][j], j as i64));
                    links.push((i, j, e));
                }
            }
        }
        for j in 0..m {
            let primary = if lambda[j] > tight { -1 } else { 0 };
            net.add_edge(n + j, sink, self.capacity[j], Cost::new(primary, T::zero(), 0));
        }
        let cap_total = pairwise_sum(self.capacity);
        net.min_cost_max_flow(src, sink, cap_total * tol_of(1e-15), scale * tol_of(1e-12));
        let mut x = vec![vec![T::zero(); m]; n];
        for (i, j, e) in links {
            x[i][j] = net.flow(e).max(T::zero());
        }
        let routed = user_edges.iter().map(|&e| net.flow(e)).collect();
        (x, routed)
    }

    fn finish(&self, x: Matrix<T>, lambda: Vec<T>, prices: Vec<T>, iterations: usize, scale: T) -> TransportSolution<T> {
        let totals: Vec<T> = x.iter().map(|row| pairwise_sum(row)).collect();
        let (n, m) = (self.n_clients(), self.n_gateways());
        let mut mu = vec![vec![T::zero(); m]; n];
        for i in 0..n {
            let slope = self.objectives[i].slope(totals[i]);
            for j in 0..m {
                mu[i][j] = if self.usable(i, j) {
                    (self.cost[i][j] + lambda[j] - slope).max(T::zero())
                } else {
                    T::infinity()
                };
            }
        }
        let kkt_residual = kkt_residual(self.objectives, self.cost, self.capacity, &x, &lambda);
        let _ = scale;
        TransportSolution { x, lambda, mu, totals, prices, iterations, kkt_residual }
    }
}

fn response_at<T: Real, F: ConcaveObjective<T>>(f: &F, p: T) -> T {
    if p.is_infinite() && p > T::zero() {
        T::zero()
    } else {
        f.response(p)
    }
}

fn tol_of<T: Real>(base: f64) -> T {
    lit::<T>(base).max(T::epsilon() * lit(4.0))
}

fn projected_norm<T: Real>(lambda: &[T], grad: &[T]) -> T {
    lambda
        .iter()
        .zip(grad)
        .map(|(&l, &g)| if l <= T::zero() && g > T::zero() { T::zero() } else { g.abs() })
        .fold(T::zero(), T::max)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear<T: Real>(mut a: Matrix<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())?;
        if !(a[piv][col].abs() > T::zero()) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f.is_zero() {
                continue;
            }
            for c in col..n {
                a[r][c] = a[r][c] - f * a[col][c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let s: T = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Largest violation of the optimality conditions of a transport problem
/// at `(x, lambda)`, taking `mu` as the best nonnegative multiplier:
/// stationarity, both complementary slackness conditions, capacity and
/// sign feasibility.
pub fn kkt_residual<T: Real, F: ConcaveObjective<T>>(
    objectives: &[F],
    cost: &Matrix<T>,
    capacity: &[T],
    x: &Matrix<T>,
    lambda: &[T],
) -> T {
    let (n, m) = (objectives.len(), capacity.len());
    let mut r = T::zero();
    let totals: Vec<T> = x.iter().map(|row| pairwise_sum(row)).collect();
    for i in 0..n {
        let slope = objectives[i].slope(totals[i]);
        for j in 0..m {
            let xij = x[i][j];
            r = r.max(-xij);
            if !cost[i][j].is_finite() || capacity[j] <= T::zero() {
                r = r.max(xij.abs());
                continue;
            }
            let gap = cost[i][j] + lambda[j] - slope;
            // gap < 0: stationarity fails for every mu >= 0.
            r = r.max(-gap);
            // gap > 0 needs mu = gap, which must vanish where x > 0.
            r = r.max(gap.max(T::zero()) * xij);
        }
    }
    for j in 0..m {
        let load = pairwise_sum(&x.iter().map(|row| row[j]).collect::<Vec<_>>());
        r = r.max(load - capacity[j]);
        r = r.max(-lambda[j]);
        r = r.max(lambda[j] * (capacity[j] - load).abs());
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log41() -> UtilityFunction<f64> {
        UtilityFunction::logarithmic(4.0, 1.0).unwrap()
    }

    #[test]
    fn unconstrained_demand_is_returned_at_zero_capacity_price() {
        let objs = [log41(), log41()];
        let cost = vec![vec![2.0, 2.0], vec![2.0, 2.0]];
        let tie = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let cap = [1.0, 1.0];
        let sol = Transport { objectives: &objs, cost: &cost, tie_cost: &tie, capacity: &cap }.solve().unwrap();
        assert_eq!(sol.totals, vec![1.0, 1.0]);
        assert_eq!(sol.lambda, vec![0.0, 0.0]);
        assert_eq!(sol.x[0][0] + sol.x[1][0], 1.0);
    }

    #[test]
    fn welfare_program_of_the_two_user_example() {
        // Both users consume 1 at marginal utility 2 = cost of the dearer link.
        let objs = [log41(), log41()];
        let cost = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let cap = [1.0, 1.0];
        let sol = Transport { objectives: &objs, cost: &cost, tie_cost: &cost, capacity: &cap }.solve().unwrap();
        assert!((sol.totals[0] - 1.0).abs() < 1e-9, "{sol:?}");
        assert!((sol.totals[1] - 1.0).abs() < 1e-9);
        assert!((sol.lambda[0] - 1.0).abs() < 1e-9);
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn binding_capacity_price() {
        // One user, one link: U' = 4/(1+y) at y = 1 is 2, cost 1, so lambda = 1.
        let objs = [log41()];
        let cost = vec![vec![1.0]];
        let cap = [1.0];
        let sol = Transport { objectives: &objs, cost: &cost, tie_cost: &cost, capacity: &cap }.solve().unwrap();
        assert!((sol.lambda[0] - 1.0).abs() < 1e-9, "{sol:?}");
        assert!((sol.x[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_links_with_unbounded_demand() {
        let u = UtilityFunction::alpha_fair(1.0, 0.5).unwrap();
        let objs = [u, u];
        let cost: Matrix<f64> = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let cap = [1.0, 3.0];
        let sol = Transport { objectives: &objs, cost: &cost, tie_cost: &cost, capacity: &cap }.solve().unwrap();
        assert!((sol.totals[0] - 2.0).abs() < 1e-9, "{sol:?}");
        assert!((sol.totals[1] - 2.0).abs() < 1e-9);
        // y^-1/2 = lambda at y = 2
        assert!((sol.lambda[0] - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn blocked_links_carry_nothing() {
        let objs = [log41(), log41()];
        let inf = f64::INFINITY;
        let cost = vec![vec![1.0, inf], vec![inf, 2.0]];
        let cap = [10.0, 10.0];
        let sol = Transport { objectives: &objs, cost: &cost, tie_cost: &cost, capacity: &cap }.solve().unwrap();
        assert_eq!(sol.x[0][1], 0.0);
        assert_eq!(sol.x[1][0], 0.0);
        assert_eq!(sol.totals, vec![3.0, 1.0]);
    }

    #[test]
    fn linear_solver() {
        let x: Vec<f64> = solve_linear(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
        assert!(solve_linear(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]).is_none());
    }
}
