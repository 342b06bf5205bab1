//! The no-tethering benchmark and side-by-side comparison of every scheme on
//! one scenario.

use std::io::Write;

use serde::Serialize;

use crate::cooperative::{solve_ft, solve_ropm, solve_swm};
use crate::error::{Error, Result};
use crate::outcome::{Diagnostics, EquilibriumOutcome, Scheme};
use crate::quantity_competition::{competitive_with, find_qce, quantity_outcome, QceOptions};
use crate::scalar::{to_f64, Real};
use crate::scenario::Scenario;
use crate::upm::HybridPriceMatrix;

/// Tethering blocked: each operator prices each of its subscribers as an
/// isolated monopoly on that subscriber's own downlink.
///
/// User `i` buys `min(d_i(p), C_i)`, so the best price sells the revenue
/// maximizer `y` with `(yU'(y))' = e~_ii`, capped at capacity, at `U'(y)`.
pub fn solve_ntp<T: Real>(s: &Scenario<T>) -> Result<EquilibriumOutcome<T>> {
    let n = s.n_users();
    let mut p = Vec::with_capacity(n);
    let mut h = vec![vec![T::infinity(); n]; n];
    let mut x = vec![vec![T::zero(); n]; n];
    for (i, u) in s.users.iter().enumerate() {
        let cost = s.delivered_cost(i, i);
        let y = u.utility.revenue_response(cost).min(u.capacity).max(T::zero());
        let price = if y > T::zero() {
            u.utility.marginal_unchecked(y)
        } else {
            // Nothing is sold; any price at or above the cost keeps it so.
            let top = u.utility.marginal_at_zero();
            if top.is_finite() { top.max(cost) } else { cost }
        };
        x[i][i] = y;
        h[i][i] = (price - s.link_energy(i, i)).max(T::zero());
        p.push(price);
    }
    let h = HybridPriceMatrix::from_matrix(h)?;
    let diag = Diagnostics { regime: Some("no_tethering".into()), ..Default::default() };
    EquilibriumOutcome::assemble(s, Scheme::Ntp, Some(p), h, x, diag)
}

/// What to run in [`compare_schemes_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub schemes: Vec<Scheme>,
    pub qce: QceOptions,
    pub allow_nonconvex: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { schemes: Scheme::ALL.to_vec(), qce: QceOptions::default(), allow_nonconvex: false }
    }
}

/// One scheme's result, or the reason it has none.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct ComparisonRow<T> {
    pub scheme: Scheme,
    pub outcome: Option<EquilibriumOutcome<T>>,
    pub error: Option<String>,
    /// Total profit divided by the no-tethering total profit.
    pub profit_vs_ntp: Option<T>,
    pub payoff_vs_ntp: Option<T>,
    pub welfare_vs_ntp: Option<T>,
}

/// Every scheme on `s`, in the order COOP, COMP, QCG, FT, NTP, SWM.
pub fn compare_schemes<T: Real>(s: &Scenario<T>) -> Vec<ComparisonRow<T>> {
    compare_schemes_with(s, &CompareOptions::default())
}

pub fn compare_schemes_with<T: Real>(s: &Scenario<T>, opts: &CompareOptions) -> Vec<ComparisonRow<T>> {
    let wants = |k: Scheme| opts.schemes.contains(&k);
    let mut qce_opts = opts.qce;
    qce_opts.allow_nonconvex |= opts.allow_nonconvex;
    // The quantity equilibrium serves both QCG and, when several operators
    // compete, COMP.
    let qce = if wants(Scheme::Qcg) || wants(Scheme::Comp) { Some(find_qce(s, &qce_opts)) } else { None };
    let ntp = solve_ntp(s);
    let mut rows = Vec::new();
    for scheme in Scheme::ALL.into_iter().filter(|&k| wants(k)) {
        let result = match scheme {
            Scheme::Coop => solve_ropm(s, opts.allow_nonconvex).and_then(|r| r.into_outcome(s, Scheme::Coop)),
            Scheme::Comp => match &qce {
                Some(Ok(profile)) => competitive_with(s, &qce_opts, Some(profile)),
                _ => competitive_with(s, &qce_opts, None),
            },
            Scheme::Qcg => match &qce {
                Some(Ok(profile)) => quantity_outcome(s, profile, Scheme::Qcg),
                Some(Err(e)) => Err(Error::NoSolution(format!("quantity equilibrium: {e}"))),
                None => unreachable!("quantity equilibrium computed when QCG is requested"),
            },
            Scheme::Ft => solve_ft(s).and_then(|r| r.into_outcome(s, Scheme::Ft)),
            Scheme::Ntp => match &ntp {
                Ok(o) => Ok(o.clone()),
                Err(e) => Err(Error::NoSolution(e.to_string())),
            },
            Scheme::Swm => solve_swm(s),
        };
        rows.push(row(scheme, result, ntp.as_ref().ok()));
    }
    rows
}

fn row<T: Real>(scheme: Scheme, result: Result<EquilibriumOutcome<T>>, ntp: Option<&EquilibriumOutcome<T>>) -> ComparisonRow<T> {
    let ratio = |a: T, b: T| if b != T::zero() { Some(a / b) } else { None };
    match result {
        Ok(o) => ComparisonRow {
            scheme,
            profit_vs_ntp: ntp.and_then(|b| ratio(o.profit_total, b.profit_total)),
            payoff_vs_ntp: ntp.and_then(|b| ratio(o.payoff, b.payoff)),
            welfare_vs_ntp: ntp.and_then(|b| ratio(o.welfare, b.welfare)),
            outcome: Some(o),
            error: None,
        },
        Err(e) => ComparisonRow {
            scheme,
            outcome: None,
            error: Some(e.to_string()),
            profit_vs_ntp: None,
            payoff_vs_ntp: None,
            welfare_vs_ntp: None,
        },
    }
}

/// Writes one CSV line per row:
/// `scheme,profit_total,profit_per_mno,payoff,welfare,profit_vs_ntp,payoff_vs_ntp,welfare_vs_ntp,error`.
/// The per-operator profits are a JSON array in a quoted field.
pub fn write_comparison_csv<T: Real, W: Write>(rows: &[ComparisonRow<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io { path: "<comparison csv>".into(), source: e.into() };
    w.write_record([
        "scheme",
        "profit_total",
        "profit_per_mno",
        "payoff",
        "welfare",
        "profit_vs_ntp",
        "payoff_vs_ntp",
        "welfare_vs_ntp",
        "error",
    ])
    .map_err(io)?;
    let num = |v: Option<T>| v.map(|v| to_f64(v).to_string()).unwrap_or_default();
    for r in rows {
        let o = r.outcome.as_ref();
        let per_mno = match o {
            Some(o) => serde_json::to_string(&o.profit.iter().map(|&v| to_f64(v)).collect::<Vec<_>>())?,
            None => String::new(),
        };
        w.write_record([
            r.scheme.name().to_string(),
            num(o.map(|o| o.profit_total)),
            per_mno,
            num(o.map(|o| o.payoff)),
            num(o.map(|o| o.welfare)),
            num(r.profit_vs_ntp),
            num(r.payoff_vs_ntp),
            num(r.welfare_vs_ntp),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<comparison csv>".into(), source: e })?;
    Ok(())
}
