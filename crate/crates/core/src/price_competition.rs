//! Operators competing in prices.
//!
//! Downlinks are ranked by delivered cost `e~_j = e_j + c_j` (Wi-Fi relaying
//! must be free). `zeta_k` is the single price at which aggregate demand
//! equals the capacity of the `k` cheapest downlinks. When the cheapest
//! rival downlink is expensive relative to what the leading operator can
//! supply, the leader prices as a (possibly depressed) monopolist;
//! otherwise the only candidate equilibrium is the uniform price `zeta_s`
//! for the `s` bracketed by consecutive delivered costs, and whether it is
//! an equilibrium must be checked by probing unilateral deviations.

use serde::Serialize;

use crate::cooperative::revenue_is_concave;
use crate::error::{Error, Result};
use crate::market::UniformMarket;
use crate::numeric::{bisect_decreasing, golden_section_max};
use crate::outcome::operator_profits;
use crate::scalar::{lit, tol, Real};
use crate::scenario::Scenario;
use crate::upm::{solve_upm, HybridPriceMatrix};
use crate::utility::UtilityFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PceRegime {
    /// The leading operator's own monopoly prices all undercut the rival.
    SingleOperatorPerfect,
    /// Some monopoly price is capped at the rival's delivered cost.
    SingleOperatorDepressed,
    /// A uniform price that survived the deviation probe.
    MultiOperatorCandidate,
    NoEquilibrium,
}

/// Whether the leading operator can act alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketRegime {
    SingleOperator,
    MultiOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonopolyTag {
    Perfect,
    Depressed,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct MnoProbe<T> {
    pub mno: usize,
    pub profit: T,
    pub best_gain: T,
    /// Per-user price shift achieving `best_gain` on this operator's links.
    pub best_deviation: Vec<T>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct ProbeReport<T> {
    pub equilibrium: bool,
    pub max_gain: T,
    pub per_mno: Vec<MnoProbe<T>>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct PceOutcome<T> {
    pub regime: PceRegime,
    /// Equilibrium delivered prices; absent when there is no equilibrium.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_star: Option<Vec<T>>,
    /// Prices that were tested, when they differ from `p_star`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<Vec<T>>,
    /// Number of cheapest downlinks whose clearing price is bracketed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<usize>,
    /// Index of the threshold downlink; absent with a single operator.
    pub g_thr: Option<usize>,
    /// Downlink indices from cheapest to dearest delivered cost.
    pub order: Vec<usize>,
    /// `zeta[k - 1]` clears the `k` cheapest downlinks; zero when demand
    /// cannot fill them at any price.
    pub zeta: Vec<T>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub user_tags: Vec<MonopolyTag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<ProbeReport<T>>,
}

fn require_free_wifi<T: Real>(s: &Scenario<T>) -> Result<()> {
    if s.has_zero_wifi_energy() {
        Ok(())
    } else {
        Err(Error::domain("price and quantity competition need zero Wi-Fi energy costs"))
    }
}

fn market<T: Real>(s: &Scenario<T>) -> UniformMarket<T> {
    UniformMarket::new(s.users.iter().map(|u| u.utility).collect::<Vec<UtilityFunction<T>>>())
}

/// Downlinks ordered by delivered cost, exact ties by index.
pub fn sorted_downlinks<T: Real>(s: &Scenario<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.n_users()).collect();
    order.sort_by(|&a, &b| s.downlink_cost(a).partial_cmp(&s.downlink_cost(b)).unwrap().then(a.cmp(&b)));
    order
}

fn cumulative_capacity<T: Real>(s: &Scenario<T>, order: &[usize], k: usize) -> T {
    order[..k].iter().map(|&j| s.users[j].capacity).sum()
}

/// Price at which aggregate demand equals the capacity of the `k`
/// cheapest downlinks.
pub fn market_clearing_price<T: Real>(s: &Scenario<T>, k: usize) -> Result<T> {
    require_free_wifi(s)?;
    if k == 0 || k > s.n_users() {
        return Err(Error::domain(format!("k = {k} must lie in 1..={}", s.n_users())));
    }
    let order = sorted_downlinks(s);
    market(s).inverse(cumulative_capacity(s, &order, k))
}

fn zeta_table<T: Real>(s: &Scenario<T>, order: &[usize]) -> Vec<T> {
    let m = market(s);
    let mut hint = T::one();
    (1..=order.len())
        .map(|k| match m.inverse_near(cumulative_capacity(s, order, k), hint) {
            Ok(z) => {
                hint = z;
                z
            }
            Err(_) => T::zero(),
        })
        .collect()
}

/// The cheapest downlink not owned by the operator of the overall cheapest
/// one; `None` when a single operator owns every downlink.
pub fn threshold_downlink<T: Real>(s: &Scenario<T>) -> Result<Option<usize>> {
    require_free_wifi(s)?;
    let order = sorted_downlinks(s);
    Ok(threshold_in(s, &order))
}

fn threshold_in<T: Real>(s: &Scenario<T>, order: &[usize]) -> Option<usize> {
    let leader = s.mno_of(*order.first()?);
    order.iter().copied().find(|&j| s.mno_of(j) != leader)
}

/// Single-operator regime iff the leader's downlinks cheaper than the
/// threshold clear the market at a price no higher than the threshold
/// downlink's delivered cost.
pub fn classify_regime<T: Real>(s: &Scenario<T>) -> Result<MarketRegime> {
    require_free_wifi(s)?;
    let order = sorted_downlinks(s);
    let Some(g) = threshold_in(s, &order) else {
        return Ok(MarketRegime::SingleOperator);
    };
    let before = order.iter().position(|&j| j == g).expect("threshold is in order");
    let zeta = market(s).inverse(cumulative_capacity(s, &order, before));
    match zeta {
        Ok(z) if z <= s.downlink_cost(g) => Ok(MarketRegime::SingleOperator),
        Ok(_) => Ok(MarketRegime::MultiOperator),
        Err(Error::NoSolution(_)) => Ok(MarketRegime::SingleOperator),
        Err(e) => Err(e),
    }
}

/// Leader's monopoly prices over its own downlinks, each capped at the
/// threshold downlink's delivered cost.
pub fn single_operator_pce<T: Real>(s: &Scenario<T>, allow_nonconvex: bool) -> Result<PceOutcome<T>> {
    require_free_wifi(s)?;
    let order = sorted_downlinks(s);
    let zeta = zeta_table(s, &order);
    let g_thr = threshold_in(s, &order);
    let cap_price = g_thr.map_or(T::infinity(), |g| s.downlink_cost(g));
    let Some(&first) = order.first() else {
        return Ok(PceOutcome {
            regime: PceRegime::SingleOperatorPerfect,
            p_star: Some(vec![]),
            candidate: None,
            s_hat: None,
            g_thr,
            order,
            zeta,
            user_tags: vec![],
            verification: None,
        });
    };
    if !revenue_is_concave(s) && !allow_nonconvex {
        return Err(Error::domain(
            "a revenue curve y U'(y) is not concave on [0, total capacity]; rerun with --allow-nonconvex to \
             accept a local optimum",
        ));
    }
    let own = s.members(s.mno_of(first));
    let sales = capped_monopoly(s, &own, cap_price);
    let mut tags = Vec::with_capacity(s.n_users());
    let p: Vec<T> = s
        .users
        .iter()
        .zip(&sales)
        .map(|(u, &y)| {
            let price = if y > T::zero() { u.utility.marginal_unchecked(y) } else { u.utility.marginal_at_zero() };
            if price < cap_price * (T::one() - tol::<T>(1e-12)) {
                tags.push(MonopolyTag::Perfect);
                price
            } else {
                tags.push(MonopolyTag::Depressed);
                cap_price
            }
        })
        .collect();
    let regime = if tags.iter().all(|t| *t == MonopolyTag::Perfect) {
        PceRegime::SingleOperatorPerfect
    } else {
        PceRegime::SingleOperatorDepressed
    };
    Ok(PceOutcome {
        regime,
        p_star: Some(p),
        candidate: None,
        s_hat: None,
        g_thr,
        order,
        zeta,
        user_tags: tags,
        verification: None,
    })
}

/// The leader's sales to each user when every rival prices at cost and the
/// cheapest rival downlink costs `cap_price`.
///
/// No user pays the leader more than `cap_price`, so selling `y` to user
/// `i` earns `y min(U_i'(y), cap_price)`. Users priced at the cap buy the
/// rest of their demand from rivals. The leader serves its total sales over
/// its own downlinks cheapest first, so the sales solve a separable concave
/// program against a convex piecewise-linear cost, found by searching for
/// the marginal cost `mu` at which the users' responses fill the leader's
/// links. Without binding capacity this is the uncapped monopoly with each
/// price then capped.
fn capped_monopoly<T: Real>(s: &Scenario<T>, own: &[usize], cap_price: T) -> Vec<T> {
    let users = &s.users;
    let floor: Vec<T> = users
        .iter()
        .map(|u| if cap_price.is_finite() { u.utility.demand_unchecked(cap_price) } else { T::zero() })
        .collect();
    let response = |mu: T| -> Vec<T> {
        users.iter().zip(&floor).map(|(u, &f)| u.utility.revenue_response(mu).max(f)).collect()
    };
    let total = |mu: T| -> T { response(mu).into_iter().sum() };
    let mut links: Vec<(T, T)> = own
        .iter()
        .map(|&j| (s.downlink_cost(j), users[j].capacity))
        .filter(|&(c, cap)| c < cap_price && cap > T::zero())
        .collect();
    links.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let floor_total: T = floor.iter().copied().sum();
    let mut filled = T::zero();
    for (m, &(cost, cap)) in links.iter().enumerate() {
        if total(cost) <= filled + cap {
            return response(cost);
        }
        filled = filled + cap;
        let next = links.get(m + 1).map_or(cap_price, |l| l.0);
        if next < cap_price {
            if total(next) > filled {
                continue;
            }
        } else if floor_total >= filled {
            // Even at the cap the floors exceed the leader's capacity, which
            // it shares among them at the cap price.
            return floor.iter().map(|&f| f * filled / floor_total).collect();
        }
        let mut hi = next;
        if !hi.is_finite() {
            hi = cost.abs() + T::one();
            while total(hi) > filled {
                hi = hi * lit(2.0);
            }
        }
        let mu = bisect_decreasing(|mu| total(mu) - filled, cost, hi, 200);
        let y = response(mu);
        let sum: T = y.iter().copied().sum();
        let shrink = if sum > filled { filled / sum } else { T::one() };
        return y.into_iter().map(|v| v * shrink).collect();
    }
    vec![T::zero(); users.len()]
}

/// Settings for the deviation probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    /// Deviation sizes are `10^k` times the largest candidate price for
    /// `k` in `min_exponent..=0`.
    pub min_exponent: i32,
    /// Exhaustive sign patterns are used up to this many users.
    pub exhaustive_users: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { min_exponent: -6, exhaustive_users: 4 }
    }
}

/// Uniform-price candidate `zeta_s` and its deviation check.
pub fn multi_operator_pce<T: Real>(s: &Scenario<T>, probe: &ProbeOptions) -> Result<PceOutcome<T>> {
    require_free_wifi(s)?;
    let order = sorted_downlinks(s);
    let zeta = zeta_table(s, &order);
    let g_thr = threshold_in(s, &order);
    let n = order.len();
    let slack = tol::<T>(1e-12);
    let s_hat = (1..=n).find(|&k| {
        let z = zeta[k - 1];
        let lo = s.downlink_cost(order[k - 1]);
        let hi = if k < n { s.downlink_cost(order[k]) } else { T::infinity() };
        z > T::zero() && z >= lo * (T::one() - slack) && z <= hi * (T::one() + slack)
    });
    let mut out = PceOutcome {
        regime: PceRegime::NoEquilibrium,
        p_star: None,
        candidate: None,
        s_hat,
        g_thr,
        order,
        zeta,
        user_tags: vec![],
        verification: None,
    };
    let Some(k) = s_hat else { return Ok(out) };
    let candidate = vec![out.zeta[k - 1]; n];
    let report = verify_pce_with(s, &candidate, probe)?;
    if report.equilibrium {
        out.regime = PceRegime::MultiOperatorCandidate;
        out.p_star = Some(candidate);
    } else {
        out.candidate = Some(candidate);
    }
    out.verification = Some(report);
    Ok(out)
}

pub fn verify_pce<T: Real>(s: &Scenario<T>, p: &[T]) -> Result<ProbeReport<T>> {
    verify_pce_with(s, p, &ProbeOptions::default())
}

/// Searches each operator's unilateral deviations from delivered prices
/// `p`. A deviation shifts, per user, the price on all of the operator's
/// own links by the same amount; the users then re-solve Stage II.
pub fn verify_pce_with<T: Real>(s: &Scenario<T>, p: &[T], opts: &ProbeOptions) -> Result<ProbeReport<T>> {
    let n = s.n_users();
    let h0 = HybridPriceMatrix::from_delivered(s, p);
    let base = solve_upm(s, &h0)?;
    let v0 = operator_profits(s, &h0, &base.x);
    let scale = p.iter().copied().filter(|v| v.is_finite()).fold(T::zero(), T::max).max(tol(1e-12));
    let mut directions = sign_patterns::<T>(n, opts.exhaustive_users);
    if n <= opts.exhaustive_users {
        directions.extend(rebalancing::<T>(n));
    }
    let mut evaluations = 0usize;
    let mut per_mno = Vec::with_capacity(s.n_mnos);
    let mut equilibrium = true;
    let mut max_gain = T::neg_infinity();
    for mno in 0..s.n_mnos {
        let own = s.members(mno);
        if own.is_empty() {
            continue;
        }
        let mut profit_of = |shift: &[T]| -> T {
            evaluations += 1;
            let mut h = h0.clone();
            for (i, row) in h.h.iter_mut().enumerate() {
                for &j in &own {
                    row[j] = (row[j] + shift[i]).max(T::zero());
                }
            }
            match solve_upm(s, &h) {
                Ok(sol) => operator_profits(s, &h, &sol.x)[mno],
                Err(_) => T::neg_infinity(),
            }
        };
        let mut best = (T::zero(), vec![T::zero(); n]);
        for dir in &directions {
            let at = |t: T| -> Vec<T> { dir.iter().map(|&d| d * t).collect() };
            let sizes: Vec<T> =
                (opts.min_exponent..=0).map(|k| scale * lit::<T>(10f64.powi(k))).collect();
            let values: Vec<T> = sizes.iter().map(|&t| profit_of(&at(t))).collect();
            let (k, &v) = values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .expect("at least one size");
            // Refining only matters near or above break-even; a direction
            // whose every size loses clearly is skipped.
            let (t, v) = if v - v0[mno] > -lit::<T>(1e-2) * (v0[mno].abs() + scale * lit(1e-6)) {
                let lo = if k == 0 { T::zero() } else { sizes[k - 1] };
                let hi = if k + 1 < sizes.len() { sizes[k + 1] } else { sizes[k] };
                let (t, vt) = golden_section_max(|t| profit_of(&at(t)), lo, hi, (hi - lo) * lit(1e-4));
                if vt > v { (t, vt) } else { (sizes[k], v) }
            } else {
                (sizes[k], v)
            };
            let gain = v - v0[mno];
            if gain > best.0 {
                best = (gain, at(t));
            }
        }
        let threshold = lit::<T>(1e-6) * v0[mno].abs() + lit(1e-9);
        if best.0 > threshold {
            equilibrium = false;
        }
        max_gain = max_gain.max(best.0);
        per_mno.push(MnoProbe { mno, profit: v0[mno], best_gain: best.0, best_deviation: best.1 });
    }
    Ok(ProbeReport { equilibrium, max_gain: max_gain.max(T::zero()), per_mno, evaluations })
}

/// Raise one user's price and cut another's by `r` times as much, for
/// ratios `r` between 1/4 and 4. An operator whose links are full can only
/// gain from such a swap at the right ratio, which the sign patterns miss.
fn rebalancing<T: Real>(n: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    for up in 0..n {
        for down in (0..n).filter(|&d| d != up) {
            for k in (-8..=8).filter(|&k| k != 0) {
                let mut v = vec![T::zero(); n];
                v[up] = T::one();
                v[down] = -lit::<T>(2f64.powf(k as f64 / 4.0));
                out.push(v);
            }
        }
    }
    out
}

/// Nonzero vectors in `{-1, 0, 1}^n` for small `n`; otherwise the signed
/// unit vectors and the all-ones vector in both signs.
fn sign_patterns<T: Real>(n: usize, exhaustive_up_to: usize) -> Vec<Vec<T>> {
    if n == 0 {
        return vec![];
    }
    if n <= exhaustive_up_to {
        let total = 3usize.pow(n as u32);
        (1..total)
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let d = code % 3;
                        code /= 3;
                        [T::zero(), T::one(), -T::one()][d]
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for i in 0..n {
            for sign in [T::one(), -T::one()] {
                let mut v = vec![T::zero(); n];
                v[i] = sign;
                out.push(v);
            }
        }
        out.push(vec![T::one(); n]);
        out.push(vec![-T::one(); n]);
        out
    }
}

/// Outcome of the closed-form two-operator, two-user analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region2x2 {
    SingleOperatorPce,
    MultiOperatorPce,
    NoPce,
}

/// Classifies a market of two users with `theta_i ln(1 + x)` utilities,
/// each subscribing to a different operator, operator costs `e`, common
/// cellular energy cost `c` and capacities `cap`.
pub fn classify_2x2_region<T: Real>(theta: (T, T), e: (T, T), c: T, cap: (T, T)) -> Result<Region2x2> {
    let (t1, t2) = theta;
    let (d1, d2) = (e.0 + c, e.1 + c);
    let positive = |v: T| v > T::zero() && v.is_finite();
    if !(positive(t1) && positive(t2) && positive(cap.0) && positive(cap.1)) || !(e.0 >= T::zero()) || !(c >= T::zero())
    {
        return Err(Error::domain("2x2 classifier needs positive theta and capacities and nonnegative costs"));
    }
    if !(d1 < d2) {
        return Err(Error::domain("2x2 classifier needs the first downlink strictly cheaper"));
    }
    let two = lit::<T>(2.0);
    let sum = t1 + t2;
    let zeta1 = sum / (cap.0 + two);
    let zeta2 = sum / (cap.0 + cap.1 + two);
    if t1.min(t2) <= zeta1 {
        return Err(Error::domain("2x2 classifier needs both users to buy at the clearing prices"));
    }
    if zeta1 <= d2 {
        return Ok(Region2x2::SingleOperatorPce);
    }
    if zeta2 < d2 {
        return Ok(Region2x2::NoPce);
    }
    let z2 = zeta2 * zeta2;
    // Small deviations by the operator with delivered cost `own` against a
    // rival of capacity `other_cap`. Raising both prices must not pay. When
    // one user alone can fill the rival, raising that user's price must not
    // pay either, whether or not the freed capacity is resold to the other
    // user at a lower price.
    let holds = |own: T, other_cap: T| {
        let single = |t: T, other: T| {
            t / zeta2 - T::one() <= other_cap || (own * t / z2 <= other_cap + T::one() && t / other <= other_cap + T::one())
        };
        own * sum / z2 <= other_cap + two && single(t1, t2) && single(t2, t1)
    };
    if holds(d1, cap.1) && holds(d2, cap.0) {
        Ok(Region2x2::MultiOperatorPce)
    } else {
        Ok(Region2x2::NoPce)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::User;

    fn example2(c1: f64) -> Scenario<f64> {
        let u: UtilityFunction<f64> = UtilityFunction::logarithmic(4.0, 1.0).unwrap();
        Scenario::new(
            2,
            vec![
                User { subscription: 0, capacity: c1, op_cost: 1.0, energy_down: 0.0, utility: u },
                User { subscription: 1, capacity: 1.0, op_cost: 2.0, energy_down: 0.0, utility: u },
            ],
        )
    }

    #[test]
    fn clearing_prices() {
        let s = example2(1.0);
        assert!((market_clearing_price(&s, 1).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!((market_clearing_price(&s, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!(market_clearing_price(&s, 3).is_err());
    }

    #[test]
    fn threshold_and_regimes() {
        assert_eq!(threshold_downlink(&example2(1.0)).unwrap(), Some(1));
        assert_eq!(classify_regime(&example2(1.0)).unwrap(), MarketRegime::MultiOperator);
        assert_eq!(classify_regime(&example2(10.0)).unwrap(), MarketRegime::SingleOperator);
        let mut mono = example2(1.0);
        mono.users[1].subscription = 0;
        assert_eq!(threshold_downlink(&mono).unwrap(), None);
        assert_eq!(classify_regime(&mono).unwrap(), MarketRegime::SingleOperator);
    }

    #[test]
    fn depressed_monopoly() {
        let out = single_operator_pce(&example2(10.0), false).unwrap();
        assert_eq!(out.regime, PceRegime::SingleOperatorDepressed);
        let p = out.p_star.unwrap();
        assert!(p.iter().all(|&v| (v - 2.0).abs() < 1e-9), "{p:?}");
    }

    #[test]
    fn leader_capacity_binds_under_the_cap() {
        let log = |t: f64| UtilityFunction::logarithmic(t, 1.0).unwrap();
        let (t0, t1, cap0, e1) = (2.6975, 4.9902, 1.6565, 2.1303);
        let s = Scenario::new(
            2,
            vec![
                User { subscription: 0, capacity: cap0, op_cost: 0.965, energy_down: 0.0, utility: log(t0) },
                User { subscription: 1, capacity: 1.5302, op_cost: e1, energy_down: 0.0, utility: log(t1) },
            ],
        );
        assert_eq!(classify_regime(&s).unwrap(), MarketRegime::SingleOperator);
        let out = single_operator_pce(&s, false).unwrap();
        assert_eq!(out.user_tags, vec![MonopolyTag::Perfect, MonopolyTag::Depressed]);
        // User 1 buys t1/e1 - 1 at the cap; the leader's remaining capacity
        // goes to user 0 at its marginal utility.
        let p = out.p_star.unwrap();
        let rest = cap0 - (t1 / e1 - 1.0);
        assert!((p[0] - t0 / (1.0 + rest)).abs() < 1e-9, "{p:?}");
        assert!((p[1] - e1).abs() < 1e-12);
        assert!(verify_pce(&s, &p).unwrap().equilibrium);
    }

    #[test]
    fn example2_candidate_fails_probe() {
        let out = multi_operator_pce(&example2(1.0), &ProbeOptions::default()).unwrap();
        assert_eq!(out.s_hat, Some(2));
        assert_eq!(out.regime, PceRegime::NoEquilibrium);
        let report = out.verification.unwrap();
        assert!(report.per_mno[1].best_gain > 1e-3, "{report:?}");
    }

    #[test]
    fn region_examples() {
        assert_eq!(classify_2x2_region((4.0, 4.0), (1.0, 2.0), 0.0, (1.0, 1.0)).unwrap(), Region2x2::NoPce);
        assert_eq!(
            classify_2x2_region((4.0, 4.0), (1.0, 2.0), 0.0, (10.0, 1.0)).unwrap(),
            Region2x2::SingleOperatorPce
        );
        assert_eq!(
            classify_2x2_region((4.0, 4.0), (1.0, 2.0), 0.0, (0.5, 0.3)).unwrap(),
            Region2x2::MultiOperatorPce
        );
        assert!(classify_2x2_region((4.0, 4.0), (2.0, 1.0), 0.0, (1.0, 1.0)).is_err());
    }

    #[test]
    fn analytic_pce_survives_probe() {
        let u: UtilityFunction<f64> = UtilityFunction::logarithmic(4.0, 1.0).unwrap();
        let s = Scenario::new(
            2,
            vec![
                User { subscription: 0, capacity: 0.5, op_cost: 1.0, energy_down: 0.0, utility: u },
                User { subscription: 1, capacity: 0.3, op_cost: 2.0, energy_down: 0.0, utility: u },
            ],
        );
        let out = multi_operator_pce(&s, &ProbeOptions::default()).unwrap();
        assert_eq!(out.regime, PceRegime::MultiOperatorCandidate, "{out:?}");
        let p = out.p_star.unwrap();
        assert!((p[0] - 8.0 / 2.8).abs() < 1e-12);
    }
}
