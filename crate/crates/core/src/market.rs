//! Aggregate demand under a single delivered price, and its inverse.

use crate::error::{Error, Result};
use crate::numeric::root_decreasing;
use crate::scalar::{lit, Real};
use crate::utility::UtilityFunction;

#[derive(Debug, Clone)]
pub struct UniformMarket<T> {
    utilities: Vec<UtilityFunction<T>>,
}

impl<T: Real> UniformMarket<T> {
    pub fn new(utilities: Vec<UtilityFunction<T>>) -> Self {
        UniformMarket { utilities }
    }

    pub fn demand(&self, p: T) -> T {
        self.utilities.iter().map(|u| u.demand_unchecked(p)).sum()
    }

    pub fn demand_slope(&self, p: T) -> T {
        self.utilities.iter().map(|u| u.demand_slope(p)).sum()
    }

    /// Price above which nobody buys; infinite if some marginal utility
    /// is unbounded at zero.
    pub fn choke_price(&self) -> T {
        self.utilities.iter().map(|u| u.marginal_at_zero()).fold(T::zero(), T::max)
    }

    /// The price at which aggregate demand equals `q`.
    pub fn inverse(&self, q: T) -> Result<T> {
        self.inverse_near(q, T::one())
    }

    /// As [`UniformMarket::inverse`], searching outward from `hint`.
    pub fn inverse_near(&self, q: T, hint: T) -> Result<T> {
        if q <= T::zero() {
            return Ok(self.choke_price());
        }
        let two = lit::<T>(2.0);
        let choke = self.choke_price();
        let mut hint = if hint > T::zero() && hint.is_finite() { hint } else { T::one() };
        if choke.is_finite() {
            hint = hint.min(choke);
        }
        let (mut lo, mut hi) = (hint, hint);
        if self.demand(hint) >= q {
            // Raise hi until demand falls below q.
            while self.demand(hi) >= q {
                if choke.is_finite() && hi >= choke {
                    break;
                }
                hi = hi * two;
                if choke.is_finite() {
                    hi = hi.min(choke);
                }
                if !hi.is_finite() {
                    return Err(Error::NoSolution(format!("demand stays above {q} at every price")));
                }
            }
        } else {
            while self.demand(lo) < q {
                lo = lo / two;
                if lo <= T::min_positive_value() {
                    return Err(Error::NoSolution(format!("aggregate demand never reaches {q}")));
                }
            }
        }
        Ok(root_decreasing(|p| (self.demand(p) - q, self.demand_slope(p)), lo, hi))
    }

    /// `d pi / d q = 1 / D'(pi(q))`. At the choke price this is the slope
    /// as output rises from zero, set by the users who buy first.
    pub fn inverse_slope_at_price(&self, p: T) -> T {
        let mut d = self.demand_slope(p);
        let choke = self.choke_price();
        if d.is_zero() && choke.is_finite() && p >= choke {
            d = self
                .utilities
                .iter()
                .filter(|u| u.marginal_at_zero() >= choke)
                .map(|u| T::one() / u.second_derivative(T::zero()))
                .sum();
        }
        if d < T::zero() {
            T::one() / d
        } else {
            T::neg_infinity()
        }
    }
}
