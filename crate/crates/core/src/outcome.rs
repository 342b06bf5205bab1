//! Scheme-independent summary of a two-stage outcome: prices, traffic, and
//! who earns what.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::{pairwise_sum, Real};
use crate::scenario::Scenario;
use crate::upm::{solve_upm, users_payoff, HybridPriceMatrix};
use crate::utility::UtilityFunction;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    /// Operators jointly set hybrid prices.
    Coop,
    /// Competitive dispatch: price equilibrium when a single operator
    /// dominates, quantity equilibrium otherwise.
    Comp,
    /// Quantity competition equilibrium, regardless of regime.
    Qcg,
    /// Free tethering: one delivered price, tethering charged at zero.
    Ft,
    /// No tethering: each user is served only by their own downlink.
    Ntp,
    /// Social welfare maximum.
    Swm,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [Scheme::Coop, Scheme::Comp, Scheme::Qcg, Scheme::Ft, Scheme::Ntp, Scheme::Swm];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Coop => "COOP",
            Scheme::Comp => "COMP",
            Scheme::Qcg => "QCG",
            Scheme::Ft => "FT",
            Scheme::Ntp => "NTP",
            Scheme::Swm => "SWM",
        }
    }

    pub fn parse(name: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, Serialize)]
#[serde(bound = "T: Real")]
pub struct Diagnostics<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    pub iterations: usize,
    /// Stage-II optimality residual of the reported traffic at the
    /// reported prices.
    pub kkt_residual: T,
    /// Largest capacity price when users re-solve Stage II at the reported
    /// prices; zero at every equilibrium.
    pub stage2_lambda_max: T,
    /// Largest per-link difference between the reported traffic and the
    /// users' own Stage-II solution at the reported prices.
    pub stage2_traffic_gap: T,
    /// Spread of `h + c` across the links each user actually faces; zero
    /// under gateway-independent pricing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gateway_spread: Option<T>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct EquilibriumOutcome<T> {
    pub scheme: Scheme,
    /// Delivered price per user; absent for the welfare benchmark, which
    /// has no prices of its own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<T>>,
    pub h: HybridPriceMatrix<T>,
    pub x: Matrix<T>,
    /// Profit per operator.
    pub profit: Vec<T>,
    pub profit_total: T,
    /// Users' total payoff.
    pub payoff: T,
    pub welfare: T,
    pub diagnostics: Diagnostics<T>,
}

/// Operator profits `V_n = sum_{j in I_n} sum_i (h_ij - e_j) x_ij`.
pub fn operator_profits<T: Real>(s: &Scenario<T>, h: &HybridPriceMatrix<T>, x: &Matrix<T>) -> Vec<T> {
    let n = s.n_users();
    let mut terms = vec![Vec::new(); s.n_mnos];
    for i in 0..n {
        for j in 0..n {
            if x[i][j] > T::zero() {
                terms[s.mno_of(j)].push((h.h[i][j] - s.users[j].op_cost) * x[i][j]);
            }
        }
    }
    terms.iter().map(|t| pairwise_sum(t)).collect()
}

/// `sum_i U_i(y_i) - sum_ij e~_ij x_ij`.
pub fn welfare<T: Real>(s: &Scenario<T>, x: &Matrix<T>) -> T {
    users_payoff(s, &s.delivered_cost_matrix(), x)
}

impl<T: Real> EquilibriumOutcome<T> {
    /// Computes the accounting for traffic `x` under prices `h` and checks it
    /// against the users' own Stage-II response at those prices.
    pub fn assemble(
        s: &Scenario<T>,
        scheme: Scheme,
        p: Option<Vec<T>>,
        h: HybridPriceMatrix<T>,
        x: Matrix<T>,
        mut diagnostics: Diagnostics<T>,
    ) -> Result<Self> {
        let delivered = h.delivered(s);
        let profit = operator_profits(s, &h, &x);
        let profit_total = pairwise_sum(&profit);
        let payoff = users_payoff(s, &delivered, &x);
        let welfare = welfare(s, &x);
        let utilities: Vec<UtilityFunction<T>> = s.users.iter().map(|u| u.utility).collect();
        let zero = vec![T::zero(); s.n_users()];
        diagnostics.kkt_residual =
            crate::transport::kkt_residual(&utilities, &delivered, &s.capacities(), &x, &zero);
        let stage2 = solve_upm(s, &h)?;
        diagnostics.stage2_lambda_max = stage2.lambda.iter().copied().fold(T::zero(), T::max);
        diagnostics.stage2_traffic_gap = x
            .iter()
            .flatten()
            .zip(stage2.x.iter().flatten())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        if p.is_some() {
            diagnostics.gateway_spread = Some(gateway_spread(&h, &delivered, &x));
        }
        Ok(EquilibriumOutcome { scheme, p, h, x, profit, profit_total, payoff, welfare, diagnostics })
    }

    /// `welfare - payoff - profit_total`, zero up to rounding.
    pub fn accounting_gap(&self) -> T {
        self.welfare - self.payoff - self.profit_total
    }
}

/// Per-user spread of delivered prices over finite links, skipping unused
/// links whose price was floored at zero.
fn gateway_spread<T: Real>(h: &HybridPriceMatrix<T>, delivered: &Matrix<T>, x: &Matrix<T>) -> T {
    let mut spread = T::zero();
    for (i, row) in delivered.iter().enumerate() {
        let live: Vec<T> = row
            .iter()
            .enumerate()
            .filter(|&(j, v)| v.is_finite() && (h.h[i][j] > T::zero() || x[i][j] > T::zero()))
            .map(|(_, &v)| v)
            .collect();
        if let (Some(lo), Some(hi)) =
            (live.iter().copied().reduce(T::min), live.iter().copied().reduce(T::max))
        {
            spread = spread.max(hi - lo);
        }
    }
    spread
}
