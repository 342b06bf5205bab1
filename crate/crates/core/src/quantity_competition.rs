//! Operators competing in quantities.
//!
//! Operator `n` chooses how much traffic `q_n` to sell; all traffic then
//! clears at the single price `pi(sum q)`. Serving `q_n` costs `E_n(q_n)`,
//! the cheapest-first fill of the operator's own downlinks, which is convex
//! and piecewise linear; its kinks are rounded off over a width `eps` so
//! that best responses are well defined. An equilibrium total `b` is a
//! fixed point of `Phi(b) = sum_n phi_n(b)`, where `phi_n(b)` maximizes the
//! operator's profit linearized in the others' output around `b`. The fixed
//! point is found by averaging: `b <- Phi(b) / t + (1 - 1/t) b`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::UniformMarket;
use crate::outcome::{Diagnostics, EquilibriumOutcome, Scheme};
use crate::price_competition::{
    classify_regime, single_operator_pce, sorted_downlinks, MarketRegime, PceRegime,
};
use crate::scalar::{lit, pairwise_sum, to_f64, Real};
use crate::scenario::Scenario;
use crate::upm::{demand_shortcut, gateway_independent_solution, route_greedy, HybridPriceMatrix};
use crate::utility::UtilityFunction;

/// One operator's cost of supply: downlinks sorted by delivered cost.
#[derive(Debug, Clone)]
struct CostCurve<T> {
    /// `(capacity, delivered cost, downlink index)`, cheapest first.
    links: Vec<(T, T, usize)>,
    eps: T,
    kinks: Vec<(T, T, T)>,
    pieces: Vec<(T, T, T, T)>,
}

impl<T: Real> CostCurve<T> {
    fn new(s: &Scenario<T>, mno: usize, eps: T, order: &[usize]) -> Self {
        let links = order
            .iter()
            .filter(|&&j| s.mno_of(j) == mno)
            .map(|&j| (s.users[j].capacity, s.downlink_cost(j), j))
            .collect();
        let mut curve = CostCurve { links, eps, kinks: Vec::new(), pieces: Vec::new() };
        curve.kinks = curve.find_kinks();
        curve.pieces = curve.marginal_pieces();
        curve
    }

    fn capacity(&self) -> T {
        self.links.iter().map(|l| l.0).sum()
    }

    /// Exact cheapest-first cost.
    fn exact(&self, q: T) -> T {
        let mut left = q;
        let mut cost = T::zero();
        for &(c, e, _) in &self.links {
            let take = left.min(c);
            cost = cost + take * e;
            left = left - take;
            if left <= T::zero() {
                break;
            }
        }
        cost
    }

    /// Interior kinks `(position, left slope, right slope)`.
    fn find_kinks(&self) -> Vec<(T, T, T)> {
        let mut out = Vec::new();
        let mut at = T::zero();
        for w in self.links.windows(2) {
            at = at + w[0].0;
            if w[1].1 > w[0].1 {
                out.push((at, w[0].1, w[1].1));
            }
        }
        out
    }

    /// Smoothed cost and its derivative. Within `eps` of a kink with slopes
    /// `s1 < s2` the cost follows the quadratic that leaves the left line
    /// with slope `s1` and joins the right line with slope `s2`.
    fn smoothed(&self, q: T) -> (T, T) {
        let eps = self.eps;
        for &(k, s1, s2) in &self.kinks {
            if q > k - eps && q < k + eps {
                let u = q - k + eps;
                let start = self.exact(k - eps);
                let four = lit::<T>(4.0);
                let value = start + s1 * u + (s2 - s1) * u * u / (four * eps);
                let slope = s1 + (s2 - s1) * u / (lit::<T>(2.0) * eps);
                return (value, slope);
            }
        }
        (self.exact(q), self.slope_outside(q))
    }

    fn slope_outside(&self, q: T) -> T {
        let mut at = T::zero();
        for &(c, e, _) in &self.links {
            at = at + c;
            if q < at {
                return e;
            }
        }
        self.links.last().map_or(T::zero(), |l| l.1)
    }

    /// Pieces on which the smoothed marginal cost is affine:
    /// `(start, end, slope at start, rate of change)`.
    fn marginal_pieces(&self) -> Vec<(T, T, T, T)> {
        let eps = self.eps;
        let mut pieces = Vec::new();
        let mut at = T::zero();
        let kinks = &self.kinks;
        let mut k = 0;
        let cap = self.capacity();
        let two = lit::<T>(2.0);
        while at < cap {
            if k < kinks.len() {
                let (q, s1, s2) = kinks[k];
                if at < q - eps {
                    pieces.push((at, q - eps, s1, T::zero()));
                }
                pieces.push((q - eps, q + eps, s1, (s2 - s1) / (two * eps)));
                at = q + eps;
                k += 1;
            } else {
                pieces.push((at, cap, self.slope_outside(at), T::zero()));
                at = cap;
            }
        }
        pieces
    }

    /// Maximizer over `[0, capacity]` of `q p + q^2 dp / 2 - E~(q)`, whose
    /// derivative `p + q dp - E~'(q)` is strictly decreasing.
    fn best_response(&self, p: T, dp: T) -> T {
        let cap = self.capacity();
        let fprime = |q: T| p + q * dp - self.smoothed(q).1;
        if cap <= T::zero() || fprime(T::zero()) <= T::zero() {
            return T::zero();
        }
        if fprime(cap) >= T::zero() {
            return cap;
        }
        for &(a, b, s0, rate) in &self.pieces {
            if fprime(b) > T::zero() {
                continue;
            }
            // p + q dp - s0 - rate (q - a) = 0
            let q = (s0 - rate * a - p) / (dp - rate);
            return q.max(a).min(b);
        }
        cap
    }
}

/// Cheapest-first cost for operator `mno` to carry `q`.
pub fn aggregate_cost<T: Real>(s: &Scenario<T>, mno: usize, q: T) -> Result<T> {
    let curve = CostCurve::<T>::new(s, mno, T::zero(), &sorted_downlinks(s));
    check_quantity(&curve, q)?;
    Ok(curve.exact(q))
}

fn check_quantity<T: Real>(curve: &CostCurve<T>, q: T) -> Result<()> {
    let cap = curve.capacity();
    if !(q >= T::zero()) || q > cap * (T::one() + lit(1e-12)) {
        return Err(Error::domain(format!("quantity {q} outside [0, {cap}]")));
    }
    Ok(())
}

fn check_eps<T: Real>(curve: &CostCurve<T>, eps: T) -> Result<()> {
    let min_cap = curve.links.iter().map(|l| l.0).fold(T::infinity(), T::min);
    if !(eps > T::zero()) || (min_cap.is_finite() && eps * lit(2.0) >= min_cap) {
        return Err(Error::domain(format!("smoothing width {eps} must be positive and below half of {min_cap}")));
    }
    Ok(())
}

/// Smoothed supply cost and its derivative.
pub fn smoothed_cost<T: Real>(s: &Scenario<T>, mno: usize, q: T, eps: T) -> Result<(T, T)> {
    let curve = CostCurve::<T>::new(s, mno, eps, &sorted_downlinks(s));
    check_quantity(&curve, q)?;
    check_eps(&curve, eps)?;
    Ok(curve.smoothed(q))
}

/// Settings for the quantity equilibrium search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QceOptions {
    /// Smoothing width; `1e-6` times the smallest capacity when absent.
    pub eps: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Starting total output; half the total capacity when absent.
    pub b0: Option<f64>,
    pub trace: bool,
    pub allow_nonconvex: bool,
    /// When the mean-value iteration stops short, bisect `Phi(b) - b`
    /// instead of failing.
    pub bisection_fallback: bool,
}

/// How the fixed point of the aggregate best response was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointMethod {
    MeanValue,
    Bisection,
}

impl Default for QceOptions {
    fn default() -> Self {
        QceOptions {
            eps: None,
            tol: 1e-9,
            max_iter: 100_000,
            b0: None,
            trace: false,
            allow_nonconvex: false,
            bisection_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct QuantityProfile<T> {
    pub q: Vec<T>,
    pub b_star: T,
    pub uniform_price: T,
    pub per_mno_profit: Vec<T>,
    /// Mean-value iterations, plus bisection steps when the fallback ran.
    pub iterations: usize,
    pub method: FixedPointMethod,
    pub eps: T,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<T>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

struct Game<T> {
    market: UniformMarket<T>,
    curves: Vec<CostCurve<T>>,
    total: T,
    floor: T,
    hint: T,
}

impl<T: Real> Game<T> {
    fn new(s: &Scenario<T>, eps: T) -> Result<Self> {
        let order = sorted_downlinks(s);
        let curves: Vec<CostCurve<T>> = (0..s.n_mnos).map(|n| CostCurve::new(s, n, eps, &order)).collect();
        for c in &curves {
            check_eps(c, eps)?;
        }
        let market = UniformMarket::new(s.users.iter().map(|u| u.utility).collect::<Vec<UtilityFunction<T>>>());
        let total = s.total_capacity();
        let floor = if market.choke_price().is_finite() { T::zero() } else { total * lit(1e-9) };
        Ok(Game { market, curves, total, floor, hint: T::one() })
    }

    /// Price and its slope at total output `b`.
    fn price(&mut self, b: T) -> Result<(T, T)> {
        let p = self.market.inverse_near(b, self.hint)?;
        if p.is_finite() {
            self.hint = p;
        }
        let dp = self.market.inverse_slope_at_price(p);
        Ok((p, dp))
    }

    fn responses(&mut self, b: T) -> Result<Vec<T>> {
        let (p, dp) = self.price(b.max(self.floor))?;
        if !p.is_finite() {
            return Ok(self.curves.iter().map(|c| c.capacity()).collect());
        }
        // Past the choke price the slope is flat; nobody sells.
        if !dp.is_finite() {
            return Ok(vec![T::zero(); self.curves.len()]);
        }
        Ok(self.curves.iter().map(|c| c.best_response(p, dp)).collect())
    }
}

fn default_eps<T: Real>(s: &Scenario<T>) -> T {
    let min_cap = s.users.iter().map(|u| u.capacity).fold(T::infinity(), T::min);
    if min_cap.is_finite() {
        min_cap * lit(1e-6)
    } else {
        lit(1e-6)
    }
}

/// Best response of operator `mno` linearized around total output `b`.
pub fn phi_n<T: Real>(s: &Scenario<T>, mno: usize, b: T, eps: T) -> Result<T> {
    if mno >= s.n_mnos {
        return Err(Error::domain(format!("no operator {mno}")));
    }
    let mut game = Game::new(s, eps)?;
    if !(b >= T::zero()) || b > game.total * (T::one() + lit(1e-12)) {
        return Err(Error::domain(format!("total output {b} outside [0, {}]", game.total)));
    }
    Ok(game.responses(b)?[mno])
}

/// Quantity competition equilibrium by mean-value iteration.
pub fn find_qce<T: Real>(s: &Scenario<T>, opts: &QceOptions) -> Result<QuantityProfile<T>> {
    let eps = opts.eps.map_or_else(|| default_eps(s), lit::<T>);
    let mut game = Game::new(s, eps)?;
    let tol = lit::<T>(opts.tol);
    let mut b = opts.b0.map_or(game.total / lit(2.0), lit::<T>).max(game.floor).min(game.total);
    let mut trace = Vec::new();
    let mut converged = None;
    let mut last_gap = T::infinity();
    for t in 1..=opts.max_iter {
        if opts.trace {
            trace.push(b);
        }
        let phi = pairwise_sum(&game.responses(b)?);
        last_gap = (b - phi).abs();
        if last_gap <= tol * b {
            converged = Some(t);
            break;
        }
        let w = T::one() / lit::<T>(t as f64);
        b = (phi * w + (T::one() - w) * b).max(game.floor);
    }
    let method = if converged.is_some() { FixedPointMethod::MeanValue } else { FixedPointMethod::Bisection };
    let iterations = match converged {
        Some(t) => t,
        None if opts.bisection_fallback => {
            let (root, steps) = bisect_fixed_point(&mut game, tol)?;
            b = root;
            opts.max_iter + steps
        }
        None => {
            return Err(Error::Solver {
                message: format!("mean-value iteration hit {} iterations at total output {}", opts.max_iter, to_f64(b)),
                residual: to_f64(last_gap),
            })
        }
    };
    let q = game.responses(b)?;
    let b_star = pairwise_sum(&q);
    let uniform_price = if b_star > T::zero() { game.price(b_star)?.0 } else { game.market.choke_price() };
    let per_mno_profit = q.iter().zip(&game.curves).map(|(&qn, c)| qn * uniform_price - c.exact(qn)).collect();
    let mut notes = Vec::new();
    if !revenue_quasiconcave(&mut game) {
        notes.push("aggregate revenue b pi(b) failed a quasi-concavity scan; equilibrium may not be unique".into());
    }
    Ok(QuantityProfile { q, b_star, uniform_price, per_mno_profit, iterations, method, eps, trace, notes })
}

/// Bisection on `Phi(b) - b`, which is nonnegative at the smallest total
/// output and nonpositive at total capacity. Returns the root and the
/// number of halvings.
fn bisect_fixed_point<T: Real>(game: &mut Game<T>, tol: T) -> Result<(T, usize)> {
    let (mut lo, mut hi) = (game.floor, game.total);
    let gap = |game: &mut Game<T>, b: T| -> Result<T> { Ok(pairwise_sum(&game.responses(b)?) - b) };
    if gap(game, lo)? <= T::zero() {
        return Ok((lo, 0));
    }
    if gap(game, hi)? >= T::zero() {
        return Ok((hi, 0));
    }
    for step in 1..=MAX_BISECTIONS {
        let mid = (lo + hi) / lit(2.0);
        let g = gap(game, mid)?;
        if g.abs() <= tol * mid {
            return Ok((mid, step));
        }
        if g > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Solver {
        message: format!("fixed-point bracket [{}, {}] collapsed without meeting tolerance", to_f64(lo), to_f64(hi)),
        residual: to_f64(hi - lo),
    })
}

const MAX_BISECTIONS: usize = 200;

fn revenue_quasiconcave<T: Real>(game: &mut Game<T>) -> bool {
    let grid = 200;
    let values: Vec<T> = (1..=grid)
        .filter_map(|k| {
            let b = game.total * lit::<T>(k as f64) / lit::<T>(grid as f64);
            game.price(b).ok().map(|(p, _)| b * p)
        })
        .collect();
    // Quasi-concave: nondecreasing then nonincreasing.
    let slack = |a: T| a.abs() * lit(1e-12);
    let mut falling = false;
    for w in values.windows(2) {
        if w[1] < w[0] - slack(w[0]) {
            falling = true;
        } else if falling && w[1] > w[0] + slack(w[0]) {
            return false;
        }
    }
    true
}

/// The outcome at a quantity equilibrium: everyone pays the clearing price
/// and each operator carries its own output on its cheapest downlinks.
pub fn quantity_outcome<T: Real>(
    s: &Scenario<T>,
    profile: &QuantityProfile<T>,
    scheme: Scheme,
) -> Result<EquilibriumOutcome<T>> {
    let n = s.n_users();
    let order = sorted_downlinks(s);
    let mut caps = vec![T::zero(); n];
    for (mno, &qn) in profile.q.iter().enumerate() {
        let mut left = qn;
        for &j in order.iter().filter(|&&j| s.mno_of(j) == mno) {
            let take = left.min(s.users[j].capacity);
            caps[j] = take;
            left = left - take;
        }
    }
    let p = vec![profile.uniform_price; n];
    let totals: Vec<T> = s.users.iter().map(|u| u.utility.demand_unchecked(profile.uniform_price)).collect();
    let x = route_greedy(s, &totals, &caps);
    let traffic = gateway_independent_solution(s, &p, x);
    let h = HybridPriceMatrix::from_delivered(s, &p);
    let mut notes = profile.notes.clone();
    if profile.method == FixedPointMethod::Bisection {
        notes.push("mean-value iteration stopped short; fixed point found by bisection".into());
    }
    let diag = Diagnostics {
        regime: Some("quantity".into()),
        iterations: profile.iterations,
        notes,
        ..Default::default()
    };
    EquilibriumOutcome::assemble(s, scheme, Some(p), h, traffic.x, diag)
}

/// Competitive pricing: monopoly-style price equilibrium when the leading
/// operator can act alone, quantity equilibrium otherwise.
pub fn competitive_scheme<T: Real>(s: &Scenario<T>, opts: &QceOptions) -> Result<EquilibriumOutcome<T>> {
    competitive_with(s, opts, None)
}

/// As [`competitive_scheme`], reusing an already computed quantity
/// equilibrium for the multi-operator branch.
pub fn competitive_with<T: Real>(
    s: &Scenario<T>,
    opts: &QceOptions,
    qce: Option<&QuantityProfile<T>>,
) -> Result<EquilibriumOutcome<T>> {
    match classify_regime(s)? {
        MarketRegime::SingleOperator => {
            let pce = single_operator_pce(s, opts.allow_nonconvex)?;
            let p = pce.p_star.expect("single-operator equilibrium has prices");
            let traffic = demand_shortcut(s, &p)?;
            let h = HybridPriceMatrix::from_delivered(s, &p);
            let regime = match pce.regime {
                PceRegime::SingleOperatorPerfect => "single_operator_perfect",
                _ => "single_operator_depressed",
            };
            let diag = Diagnostics { regime: Some(regime.into()), ..Default::default() };
            EquilibriumOutcome::assemble(s, Scheme::Comp, Some(p), h, traffic.x, diag)
        }
        MarketRegime::MultiOperator => match qce {
            Some(profile) => quantity_outcome(s, profile, Scheme::Comp),
            None => quantity_outcome(s, &find_qce(s, opts)?, Scheme::Comp),
        },
    }
}
