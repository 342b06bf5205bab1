//! Parametric utility families and the demand functions they induce.
//!
//! Every family is increasing and strictly concave on its domain, so a
//! user's demand at delivered price `p` is the closed-form inverse of the
//! marginal utility, clipped at zero. The revenue curve `x * U'(x)` is what
//! operators maximize; it is concave exactly when the coefficient of
//! relative prudence stays at or below 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Grid size used when scanning prudence over an interval.
pub const ASSUMPTION_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", bound = "T: Real")]
pub enum UtilityFunction<T> {
    /// `(theta * x^(1-alpha) + xi) / (1-alpha)`. The additive `xi` never
    /// moves marginals or demand; it is carried for input fidelity and left
    /// out of every computed value.
    AlphaFair {
        theta: T,
        alpha: T,
        #[serde(default, skip_serializing_if = "is_zero")]
        xi: T,
    },
    /// `theta * ln(a + x)`.
    Logarithmic { theta: T, a: T },
    /// `1 - exp(-theta * x)`.
    Exponential { theta: T },
    /// `a x^2 + b x`, defined up to its peak at `-b / (2a)`.
    Quadratic { a: T, b: T },
}

fn is_zero<T: Real>(x: &T) -> bool {
    x.is_zero()
}

impl<T: Real> UtilityFunction<T> {
    pub fn alpha_fair(theta: T, alpha: T) -> Result<Self> {
        let u = UtilityFunction::AlphaFair { theta, alpha, xi: T::zero() };
        u.validate()?;
        Ok(u)
    }

    pub fn logarithmic(theta: T, a: T) -> Result<Self> {
        let u = UtilityFunction::Logarithmic { theta, a };
        u.validate()?;
        Ok(u)
    }

    pub fn exponential(theta: T) -> Result<Self> {
        let u = UtilityFunction::Exponential { theta };
        u.validate()?;
        Ok(u)
    }

    pub fn quadratic(a: T, b: T) -> Result<Self> {
        let u = UtilityFunction::Quadratic { a, b };
        u.validate()?;
        Ok(u)
    }

    /// Checks parameter admissibility. `alpha = 0` and `a = 0` (quadratic)
    /// are rejected because they make the utility linear.
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: T| v.is_finite() && v > T::zero();
        let ok = match *self {
            UtilityFunction::AlphaFair { theta, alpha, xi } => {
                finite_pos(theta) && alpha > T::zero() && alpha < T::one() && xi.is_finite() && xi >= T::zero()
            }
            UtilityFunction::Logarithmic { theta, a } => finite_pos(theta) && a.is_finite() && a >= T::zero(),
            UtilityFunction::Exponential { theta } => finite_pos(theta),
            UtilityFunction::Quadratic { a, b } => a.is_finite() && a < T::zero() && finite_pos(b),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("inadmissible utility parameters: {self:?}")))
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            UtilityFunction::AlphaFair { .. } => "alpha_fair",
            UtilityFunction::Logarithmic { .. } => "logarithmic",
            UtilityFunction::Exponential { .. } => "exponential",
            UtilityFunction::Quadratic { .. } => "quadratic",
        }
    }

    /// Largest consumption level in the family's domain.
    pub fn domain_max(&self) -> T {
        match *self {
            UtilityFunction::Quadratic { a, b } => -b / (lit::<T>(2.0) * a),
            _ => T::infinity(),
        }
    }

    fn check_domain(&self, x: T) -> Result<()> {
        if !(x >= T::zero()) {
            return Err(Error::domain(format!("consumption must be nonnegative, got {x}")));
        }
        if x > self.domain_max() {
            return Err(Error::domain(format!(
                "consumption {x} is past the quadratic peak {}",
                self.domain_max()
            )));
        }
        if let UtilityFunction::Logarithmic { a, .. } = *self {
            if a.is_zero() && x.is_zero() {
                return Err(Error::domain("logarithmic utility with a = 0 is undefined at x = 0"));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: T) -> Result<T> {
        self.check_domain(x)?;
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: T) -> T {
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => theta * x.powf(T::one() - alpha) / (T::one() - alpha),
            UtilityFunction::Logarithmic { theta, a } => theta * (a + x).ln(),
            UtilityFunction::Exponential { theta } => -(-theta * x).exp_m1(),
            UtilityFunction::Quadratic { a, b } => {
                let x = x.min(self.domain_max());
                a * x * x + b * x
            }
        }
    }

    pub fn marginal(&self, x: T) -> Result<T> {
        self.check_domain(x)?;
        Ok(self.marginal_unchecked(x))
    }

    pub(crate) fn marginal_unchecked(&self, x: T) -> T {
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => theta * x.powf(-alpha),
            UtilityFunction::Logarithmic { theta, a } => theta / (a + x),
            UtilityFunction::Exponential { theta } => theta * (-theta * x).exp(),
            UtilityFunction::Quadratic { a, b } => (lit::<T>(2.0) * a * x + b).max(T::zero()),
        }
    }

    /// `U'(0)`; infinite for the alpha-fair family and for `ln(x)`.
    pub fn marginal_at_zero(&self) -> T {
        match *self {
            UtilityFunction::AlphaFair { .. } => T::infinity(),
            UtilityFunction::Logarithmic { theta, a } => {
                if a.is_zero() {
                    T::infinity()
                } else {
                    theta / a
                }
            }
            UtilityFunction::Exponential { theta } => theta,
            UtilityFunction::Quadratic { b, .. } => b,
        }
    }

    pub(crate) fn second_derivative(&self, x: T) -> T {
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => -alpha * theta * x.powf(-alpha - T::one()),
            UtilityFunction::Logarithmic { theta, a } => -theta / ((a + x) * (a + x)),
            UtilityFunction::Exponential { theta } => -theta * theta * (-theta * x).exp(),
            UtilityFunction::Quadratic { a, .. } => lit::<T>(2.0) * a,
        }
    }

    fn third_derivative(&self, x: T) -> T {
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => {
                alpha * (alpha + T::one()) * theta * x.powf(-alpha - lit(2.0))
            }
            UtilityFunction::Logarithmic { theta, a } => lit::<T>(2.0) * theta / (a + x).powi(3),
            UtilityFunction::Exponential { theta } => theta.powi(3) * (-theta * x).exp(),
            UtilityFunction::Quadratic { .. } => T::zero(),
        }
    }

    /// Utility-maximizing consumption at delivered price `p`.
    pub fn demand(&self, p: T) -> Result<T> {
        if !(p > T::zero()) {
            return Err(Error::domain(format!("price must be positive, got {p}")));
        }
        Ok(self.demand_unchecked(p))
    }

    /// Demand extended to all prices: `+inf` for nonpositive prices when
    /// marginal utility never reaches zero.
    pub(crate) fn demand_unchecked(&self, p: T) -> T {
        if p >= self.marginal_at_zero() {
            return T::zero();
        }
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => {
                if p <= T::zero() {
                    T::infinity()
                } else {
                    (theta / p).powf(T::one() / alpha)
                }
            }
            UtilityFunction::Logarithmic { theta, a } => {
                if p <= T::zero() {
                    T::infinity()
                } else {
                    (theta / p - a).max(T::zero())
                }
            }
            UtilityFunction::Exponential { theta } => {
                if p <= T::zero() {
                    T::infinity()
                } else {
                    (theta / p).ln() / theta
                }
            }
            UtilityFunction::Quadratic { a, b } => {
                let peak = self.domain_max();
                ((p - b) / (lit::<T>(2.0) * a)).min(peak).max(T::zero())
            }
        }
    }

    /// Derivative of demand with respect to price (zero where demand is zero).
    pub fn demand_slope(&self, p: T) -> T {
        let d = self.demand_unchecked(p);
        if d <= T::zero() || !d.is_finite() {
            return T::zero();
        }
        if let UtilityFunction::Quadratic { .. } = self {
            if p <= T::zero() {
                return T::zero();
            }
        }
        T::one() / self.second_derivative(d)
    }

    /// Coefficient of relative prudence `-x U'''(x) / U''(x)`.
    pub fn prudence(&self, x: T) -> Result<T> {
        if !(x > T::zero()) {
            return Err(Error::domain(format!("prudence needs x > 0, got {x}")));
        }
        self.check_domain(x)?;
        let u2 = self.second_derivative(x);
        if u2.is_zero() {
            return Err(Error::domain("prudence undefined where U'' = 0"));
        }
        Ok(-x * self.third_derivative(x) / u2)
    }

    /// True when prudence stays at or below 2 on a grid over `(0, x_max]`.
    pub fn check_assumption2(&self, x_max: T) -> bool {
        if !(x_max > T::zero()) {
            return false;
        }
        let x_max = x_max.min(self.domain_max());
        let bound = lit::<T>(2.0 + 1e-9);
        (1..=ASSUMPTION_GRID).all(|k| {
            let x = x_max * lit::<T>(k as f64) / lit::<T>(ASSUMPTION_GRID as f64);
            self.prudence(x).map(|p| p <= bound).unwrap_or(true)
        })
    }

    /// Revenue `x U'(x)` collected when the price tracks marginal utility.
    pub fn revenue(&self, x: T) -> T {
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => theta * x.powf(T::one() - alpha),
            _ => x * self.marginal_unchecked(x),
        }
    }

    /// `d/dx [x U'(x)] = U'(x) + x U''(x)`.
    pub fn marginal_revenue(&self, x: T) -> T {
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => theta * (T::one() - alpha) * x.powf(-alpha),
            _ => self.marginal_unchecked(x) + x * self.second_derivative(x),
        }
    }

    pub(crate) fn revenue_second_derivative(&self, x: T) -> T {
        let two = lit::<T>(2.0);
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => {
                -alpha * (T::one() - alpha) * theta * x.powf(-alpha - T::one())
            }
            _ => two * self.second_derivative(x) + x * self.third_derivative(x),
        }
    }

    pub(crate) fn marginal_revenue_at_zero(&self) -> T {
        match *self {
            // a = 0 makes revenue the constant theta.
            UtilityFunction::Logarithmic { a, .. } if a.is_zero() => T::zero(),
            _ => self.marginal_at_zero(),
        }
    }

    /// Output maximizing `x U'(x) - cost * x`: the monopoly quantity for a
    /// unit cost. Closed form except for the exponential family, whose
    /// marginal revenue is inverted by bisection on its concave range.
    pub fn revenue_response(&self, cost: T) -> T {
        let two = lit::<T>(2.0);
        if cost >= self.marginal_revenue_at_zero() {
            return T::zero();
        }
        match *self {
            UtilityFunction::AlphaFair { theta, alpha, .. } => {
                if cost <= T::zero() {
                    T::infinity()
                } else {
                    (theta * (T::one() - alpha) / cost).powf(T::one() / alpha)
                }
            }
            UtilityFunction::Logarithmic { theta, a } => {
                if cost <= T::zero() {
                    T::infinity()
                } else {
                    ((theta * a / cost).sqrt() - a).max(T::zero())
                }
            }
            UtilityFunction::Exponential { theta } => {
                // Marginal revenue falls from theta to zero on [0, 1/theta].
                let hi = T::one() / theta;
                if cost <= T::zero() {
                    return hi;
                }
                crate::numeric::bisect_decreasing(|x| self.marginal_revenue(x) - cost, T::zero(), hi, 200)
            }
            UtilityFunction::Quadratic { a, b } => {
                let top = -b / (lit::<T>(4.0) * a);
                ((cost - b) / (two * two * a)).min(top).max(T::zero())
            }
        }
    }

    pub(crate) fn revenue_response_slope(&self, cost: T) -> T {
        let y = self.revenue_response(cost);
        if y <= T::zero() || !y.is_finite() {
            return T::zero();
        }
        let r2 = self.revenue_second_derivative(y);
        if r2 < T::zero() {
            T::one() / r2
        } else {
            T::zero()
        }
    }
}
