//! Operators pricing jointly, the free-tethering restriction, and the
//! social-welfare benchmark.
//!
//! Cooperative pricing reduces to choosing traffic: any traffic the users
//! would buy is sold at the marginal utility of its recipient, so total
//! profit is `sum_i y_i U_i'(y_i) - sum_ij e~_ij x_ij`. Maximizing that over
//! feasible traffic and reading prices off the marginal utilities gives the
//! optimal hybrid prices.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::UniformMarket;
use crate::numeric::golden_section_max;
use crate::outcome::{operator_profits, Diagnostics, EquilibriumOutcome, Scheme};
use crate::scalar::{lit, pairwise_sum, tol, Real};
use crate::scenario::Scenario;
use crate::transport::{Revenue, Transport};
use crate::upm::{demand_shortcut, HybridPriceMatrix};
use crate::utility::{UtilityFunction, ASSUMPTION_GRID};
use crate::Matrix;

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct CoopResult<T> {
    /// Profit-maximizing traffic.
    pub x_r: Matrix<T>,
    /// Delivered price per user.
    pub p_star: Vec<T>,
    pub h_star: HybridPriceMatrix<T>,
    pub total_profit: T,
    pub per_mno_profit: Vec<T>,
    /// Whether every revenue curve was verified concave.
    pub convex: bool,
    pub iterations: usize,
    /// Links whose price is not pinned down by any traffic, reported as
    /// `(client, gateway)`.
    pub unconstrained: Vec<(usize, usize)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl<T: Real> CoopResult<T> {
    pub fn into_outcome(self, s: &Scenario<T>, scheme: Scheme) -> Result<EquilibriumOutcome<T>> {
        let diag = Diagnostics { iterations: self.iterations, notes: self.notes, ..Default::default() };
        EquilibriumOutcome::assemble(s, scheme, Some(self.p_star), self.h_star, self.x_r, diag)
    }
}

fn utilities<T: Real>(s: &Scenario<T>) -> Vec<UtilityFunction<T>> {
    s.users.iter().map(|u| u.utility).collect()
}

/// Whether every user's revenue curve is concave up to total capacity.
pub fn revenue_is_concave<T: Real>(s: &Scenario<T>) -> bool {
    let cap = s.total_capacity();
    s.users.iter().all(|u| u.utility.check_assumption2(cap))
}

/// Turns delivered prices into hybrid prices `h = p - c`. Negative values
/// are floored at zero on unused links and rejected on used ones.
fn recover_hybrid<T: Real>(
    s: &Scenario<T>,
    p: &[T],
    x: &Matrix<T>,
) -> Result<(HybridPriceMatrix<T>, Vec<(usize, usize)>)> {
    let n = s.n_users();
    let mut h = vec![vec![T::zero(); n]; n];
    let mut unconstrained = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = p[i] - s.link_energy(i, j);
            if x[i][j] <= T::zero() {
                unconstrained.push((i, j));
            }
            if v < T::zero() {
                if x[i][j] > T::zero() {
                    return Err(Error::domain(format!(
                        "recovered price on link {i} <- {j} is negative ({v}) yet carries traffic"
                    )));
                }
                h[i][j] = T::zero();
            } else {
                h[i][j] = v;
            }
        }
    }
    Ok((HybridPriceMatrix::from_matrix(h)?, unconstrained))
}

/// Cooperative (jointly optimal) hybrid pricing.
pub fn solve_ropm<T: Real>(s: &Scenario<T>, allow_nonconvex: bool) -> Result<CoopResult<T>> {
    let convex = revenue_is_concave(s);
    if !convex && !allow_nonconvex {
        return Err(Error::domain(format!(
            "a revenue curve y U'(y) is not concave on [0, total capacity] (relative prudence exceeds 2 on a \
             {ASSUMPTION_GRID}-point grid); rerun with --allow-nonconvex to accept a local optimum"
        )));
    }
    let n = s.n_users();
    let cost = s.delivered_cost_matrix();
    let objectives: Vec<Revenue<T>> = s.users.iter().map(|u| Revenue(u.utility)).collect();
    let cap = s.capacities();
    let sol = Transport { objectives: &objectives, cost: &cost, tie_cost: &cost, capacity: &cap }.solve()?;
    let p_star: Vec<T> = (0..n).map(|i| s.users[i].utility.marginal_unchecked(sol.totals[i])).collect();
    let (h_star, unconstrained) = recover_hybrid(s, &p_star, &sol.x)?;
    let per_mno_profit = operator_profits(s, &h_star, &sol.x);
    let total_profit = pairwise_sum(&per_mno_profit);
    let mut notes = Vec::new();
    if !convex {
        notes.push("revenue not concave everywhere; result is a local optimum".into());
    }
    Ok(CoopResult {
        x_r: sol.x,
        p_star,
        h_star,
        total_profit,
        per_mno_profit,
        convex,
        iterations: sol.iterations,
        unconstrained,
        notes,
    })
}

/// Welfare-maximizing traffic. The supporting prices `h = e + lambda`
/// charge each gateway its operating cost plus its capacity price, so users
/// facing them choose this traffic and operators earn the capacity rents.
pub fn solve_swm<T: Real>(s: &Scenario<T>) -> Result<EquilibriumOutcome<T>> {
    let n = s.n_users();
    let cost = s.delivered_cost_matrix();
    let objectives = utilities(s);
    let cap = s.capacities();
    let sol = Transport { objectives: &objectives, cost: &cost, tie_cost: &cost, capacity: &cap }.solve()?;
    let h = (0..n).map(|_| (0..n).map(|j| s.users[j].op_cost + sol.lambda[j]).collect()).collect();
    let h = HybridPriceMatrix::from_matrix(h)?;
    let diag = Diagnostics { iterations: sol.iterations, ..Default::default() };
    EquilibriumOutcome::assemble(s, Scheme::Swm, None, h, sol.x, diag)
}

/// Whether free tethering is as profitable as cooperative pricing by
/// construction: free Wi-Fi, equal cellular energy costs, and isoelastic
/// utilities sharing one exponent.
pub fn check_corollary2<T: Real>(s: &Scenario<T>) -> bool {
    if !s.has_zero_wifi_energy() {
        return false;
    }
    let Some(first) = s.users.first() else { return true };
    let same_energy = s.users.iter().all(|u| u.energy_down == first.energy_down);
    let alpha0 = match first.utility {
        UtilityFunction::AlphaFair { alpha, .. } => alpha,
        _ => return false,
    };
    same_energy
        && s.users.iter().all(|u| matches!(u.utility, UtilityFunction::AlphaFair { alpha, .. } if alpha == alpha0))
}

/// Points per capacity segment when scanning single-price profit.
const FT_GRID: usize = 32;

/// Free tethering: a single delivered price for everyone, tethering priced
/// at zero, access prices chosen to maximize joint profit.
///
/// Profit as a function of total output `Q` is `Q pi(Q) - E(Q)`, where
/// `E` fills downlinks cheapest first. Each capacity segment is scanned on
/// a grid and the best point refined by golden-section search.
pub fn solve_ft<T: Real>(s: &Scenario<T>) -> Result<CoopResult<T>> {
    if !s.has_zero_wifi_energy() {
        return Err(Error::domain("free tethering needs zero Wi-Fi energy costs"));
    }
    let n = s.n_users();
    let market = UniformMarket::new(utilities(s));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.downlink_cost(a).partial_cmp(&s.downlink_cost(b)).unwrap().then(a.cmp(&b)));
    // Largest output any price can sell.
    let saturation = market.demand(T::min_positive_value());
    let mut hint = T::one();
    let mut profit_at = |q: T, base: T, slope: T, start: T| -> T {
        if q <= T::zero() {
            return -base;
        }
        match market.inverse_near(q, hint) {
            Ok(p) => {
                hint = p;
                q * p - base - slope * (q - start)
            }
            Err(_) => T::neg_infinity(),
        }
    };
    let mut best = (T::zero(), T::zero());
    let mut scan = Vec::new();
    let mut start = T::zero();
    let mut base = T::zero();
    for &j in &order {
        let c = s.users[j].capacity;
        let slope = s.downlink_cost(j);
        let end = (start + c).min(saturation);
        if end > start {
            let width = end - start;
            let mut seg_best = (start, T::neg_infinity(), 0usize);
            for k in 0..=FT_GRID {
                let q = start + width * lit::<T>(k as f64) / lit::<T>(FT_GRID as f64);
                let v = profit_at(q, base, slope, start);
                scan.push(v);
                if v > seg_best.1 {
                    seg_best = (q, v, k);
                }
            }
            let step = width / lit::<T>(FT_GRID as f64);
            let lo = (seg_best.0 - step).max(start);
            let hi = (seg_best.0 + step).min(end);
            let (q, v) = golden_section_max(|q| profit_at(q, base, slope, start), lo, hi, width * tol(1e-13));
            let (q, v) = if v >= seg_best.1 { (q, v) } else { (seg_best.0, seg_best.1) };
            if v > best.1 {
                best = (q, v);
            }
        }
        base = base + slope * c;
        start = start + c;
        if start >= saturation {
            break;
        }
    }
    let mut notes = Vec::new();
    let peaks = (1..scan.len().saturating_sub(1))
        .filter(|&k| scan[k] > scan[k - 1] && scan[k] > scan[k + 1])
        .count();
    if peaks > 1 {
        notes.push(format!("single-price profit has {peaks} local maxima on the scan grid; best grid peak used"));
    }
    let q_star = best.0;
    let price = market.inverse(q_star)?;
    let p = vec![price; n];
    let traffic = demand_shortcut(s, &p)?;
    let access: Vec<T> = (0..n).map(|j| (price - s.users[j].energy_down).max(T::zero())).collect();
    let h_star = HybridPriceMatrix::from_parts(access, vec![vec![T::zero(); n]; n])?;
    let per_mno_profit = operator_profits(s, &h_star, &traffic.x);
    let total_profit = pairwise_sum(&per_mno_profit);
    let unconstrained = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| traffic.x[i][j] <= T::zero())
        .collect();
    Ok(CoopResult {
        x_r: traffic.x,
        p_star: p,
        h_star,
        total_profit,
        per_mno_profit,
        convex: peaks <= 1,
        iterations: 0,
        unconstrained,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::User;

    fn example2() -> Scenario<f64> {
        let u: UtilityFunction<f64> = UtilityFunction::logarithmic(4.0, 1.0).unwrap();
        Scenario::new(
            2,
            vec![
                User { subscription: 0, capacity: 1.0, op_cost: 1.0, energy_down: 0.0, utility: u },
                User { subscription: 1, capacity: 1.0, op_cost: 2.0, energy_down: 0.0, utility: u },
            ],
        )
    }

    #[test]
    fn cooperative_example2() {
        let r = solve_ropm(&example2(), false).unwrap();
        assert!((r.total_profit - 5.0 / 3.0).abs() < 1e-9, "{r:?}");
        for p in &r.p_star {
            assert!((p - 8.0 / 3.0).abs() < 1e-9);
        }
        assert!((r.x_r[0][0] + r.x_r[1][0] - 1.0).abs() < 1e-9);
        assert!(r.x_r[0][1] + r.x_r[1][1] < 1e-9);
    }

    #[test]
    fn single_user_monopoly() {
        let u: UtilityFunction<f64> = UtilityFunction::logarithmic(4.0, 1.0).unwrap();
        let s = Scenario::new(1, vec![User { subscription: 0, capacity: 10.0, op_cost: 1.0, energy_down: 0.0, utility: u }]);
        let r = solve_ropm(&s, false).unwrap();
        assert!((r.p_star[0] - 2.0).abs() < 1e-12);
        assert!((r.total_profit - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welfare_example2() {
        let o = solve_swm(&example2()).unwrap();
        assert!((o.welfare - (8.0 * 2f64.ln() - 3.0)).abs() < 1e-9);
        assert!(o.p.is_none());
        assert!(o.accounting_gap().abs() < 1e-12);
    }

    #[test]
    fn free_tethering_matches_cooperative_for_symmetric_users() {
        let r = solve_ft(&example2()).unwrap();
        assert!((r.total_profit - 5.0 / 3.0).abs() < 1e-9, "{r:?}");
        assert!((r.p_star[0] - 8.0 / 3.0).abs() < 1e-9);
        assert!(r.h_star.tethering.as_ref().unwrap().iter().flatten().all(|t| *t == 0.0));
    }

    #[test]
    fn corollary_conditions() {
        assert!(!check_corollary2(&example2()));
        let mut s = example2();
        for u in &mut s.users {
            u.utility = UtilityFunction::alpha_fair(3.0, 0.4).unwrap();
        }
        assert!(check_corollary2(&s));
        s.users[1].energy_down = 1.0;
        assert!(!check_corollary2(&s));
    }

    #[test]
    fn user_priced_out_of_every_link() {
        // User 1's marginal revenue at zero is 1, below both link costs,
        // while user 0 overflows the cheap but small link 0.
        let (e0, e1, theta) = (1.2356610244745325, 1.4675461426460459, 5.079224207037643);
        let s = Scenario::new(
            2,
            vec![
                User {
                    subscription: 0,
                    capacity: 0.2,
                    op_cost: e0,
                    energy_down: 0.0,
                    utility: UtilityFunction::logarithmic(theta, 1.0).unwrap(),
                },
                User {
                    subscription: 1,
                    capacity: 1.5428655907104094,
                    op_cost: e1,
                    energy_down: 0.0,
                    utility: UtilityFunction::logarithmic(1.0, 1.0).unwrap(),
                },
            ],
        );
        let r = solve_ropm(&s, false).unwrap();
        let oracle = (0..=200_000)
            .map(|k| {
                let y = 1.7 * k as f64 / 200_000.0;
                theta * y / (1.0 + y) - e0 * y.min(0.2) - e1 * (y - 0.2).max(0.0)
            })
            .fold(f64::MIN, f64::max);
        assert!((r.total_profit - oracle).abs() < 1e-8, "{} vs {oracle}", r.total_profit);
        assert_eq!(r.x_r[1], vec![0.0, 0.0]);
        assert!((r.x_r[0][0] - 0.2).abs() < 1e-12);
    }
}
