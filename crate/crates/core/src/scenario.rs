//! Network instances: who subscribes where, what each downlink costs and
//! carries, and how users value traffic.
//!
//! Every user owns exactly one cellular downlink, so users and downlinks
//! share an index. Link `i <- j` delivers downlink `j`'s traffic to client
//! `i`, over Wi-Fi when `i != j`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::utility::UtilityFunction;
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct User<T> {
    /// Index of the operator this user subscribes to (0-based).
    pub subscription: usize,
    /// Downlink capacity in data units per slot.
    pub capacity: T,
    /// Operator's cost per unit carried on this user's downlink.
    pub op_cost: T,
    /// User's own energy cost per unit received over the cellular downlink.
    pub energy_down: T,
    pub utility: UtilityFunction<T>,
}

/// Per-unit Wi-Fi relaying energy, indexed `[client][gateway]`.
#[derive(Debug, Clone, PartialEq)]
pub enum WifiEnergy<T> {
    Zero,
    Matrix(Matrix<T>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, bound = "T: Real")]
enum WifiRepr<T> {
    Keyword(String),
    Matrix(Matrix<T>),
}

impl<T: Real> Serialize for WifiEnergy<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WifiEnergy::Zero => WifiRepr::<T>::Keyword("zero".into()).serialize(s),
            WifiEnergy::Matrix(m) => WifiRepr::Matrix(m.clone()).serialize(s),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for WifiEnergy<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match WifiRepr::<T>::deserialize(d)? {
            WifiRepr::Keyword(k) if k == "zero" => Ok(WifiEnergy::Zero),
            WifiRepr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "energy_wifi must be a matrix or \"zero\", got {k:?}"
            ))),
            WifiRepr::Matrix(m) => Ok(WifiEnergy::Matrix(m)),
        }
    }
}

impl<T> Default for WifiEnergy<T> {
    fn default() -> Self {
        WifiEnergy::Zero
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Scenario<T> {
    #[serde(rename = "mnos")]
    pub n_mnos: usize,
    pub users: Vec<User<T>>,
    #[serde(default)]
    pub energy_wifi: WifiEnergy<T>,
}

/// Findings from [`Scenario::validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub violations: Vec<String>,
    /// Users whose marginal utility at zero does not exceed their cheapest
    /// delivered cost; they never consume at any admissible price.
    pub non_participating: Vec<usize>,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl<T: Real> Scenario<T> {
    pub fn new(n_mnos: usize, users: Vec<User<T>>) -> Self {
        Scenario { n_mnos, users, energy_wifi: WifiEnergy::Zero }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario<T> = serde_json::from_str(text)?;
        let diag = s.validate();
        if !diag.is_valid() {
            return Err(Error::config(diag.violations.join("; ")));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn capacities(&self) -> Vec<T> {
        self.users.iter().map(|u| u.capacity).collect()
    }

    pub fn total_capacity(&self) -> T {
        crate::scalar::pairwise_sum(&self.capacities())
    }

    /// Downlinks (equivalently, users) belonging to operator `n`.
    pub fn members(&self, n: usize) -> Vec<usize> {
        (0..self.n_users()).filter(|&j| self.users[j].subscription == n).collect()
    }

    pub fn mno_of(&self, j: usize) -> usize {
        self.users[j].subscription
    }

    pub fn wifi_energy(&self, i: usize, j: usize) -> T {
        match &self.energy_wifi {
            WifiEnergy::Zero => T::zero(),
            WifiEnergy::Matrix(m) => m[i][j],
        }
    }

    pub fn has_zero_wifi_energy(&self) -> bool {
        match &self.energy_wifi {
            WifiEnergy::Zero => true,
            WifiEnergy::Matrix(m) => m.iter().flatten().all(|v| v.is_zero()),
        }
    }

    /// User-side energy per unit on link `i <- j`.
    pub fn link_energy(&self, i: usize, j: usize) -> T {
        self.users[j].energy_down + self.wifi_energy(i, j)
    }

    /// Operator cost plus user energy per unit on link `i <- j`.
    pub fn delivered_cost(&self, i: usize, j: usize) -> T {
        self.users[j].op_cost + self.link_energy(i, j)
    }

    pub fn link_energy_matrix(&self) -> Matrix<T> {
        let n = self.n_users();
        (0..n).map(|i| (0..n).map(|j| self.link_energy(i, j)).collect()).collect()
    }

    pub fn delivered_cost_matrix(&self) -> Matrix<T> {
        let n = self.n_users();
        (0..n).map(|i| (0..n).map(|j| self.delivered_cost(i, j)).collect()).collect()
    }

    /// Delivered cost of downlink `j` when Wi-Fi relaying is free, which
    /// makes it the same for every client.
    pub fn downlink_cost(&self, j: usize) -> T {
        self.users[j].op_cost + self.users[j].energy_down
    }

    pub fn is_participating(&self, i: usize) -> bool {
        let cheapest = (0..self.n_users())
            .map(|j| self.delivered_cost(i, j))
            .fold(T::infinity(), T::min);
        self.users[i].utility.marginal_at_zero() > cheapest
    }

    pub fn validate(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        let n = self.n_users();
        for (i, u) in self.users.iter().enumerate() {
            if u.subscription >= self.n_mnos {
                d.violations
                    .push(format!("user {i} subscribes to operator {} but only {} exist", u.subscription, self.n_mnos));
            }
            if !(u.capacity > T::zero()) || !u.capacity.is_finite() {
                d.violations.push(format!("user {i} has non-positive capacity {}", u.capacity));
            }
            if !(u.op_cost >= T::zero()) || !u.op_cost.is_finite() {
                d.violations.push(format!("user {i} has negative operational cost {}", u.op_cost));
            }
            if !(u.energy_down >= T::zero()) || !u.energy_down.is_finite() {
                d.violations.push(format!("user {i} has negative downlink energy cost {}", u.energy_down));
            }
            if let Err(e) = u.utility.validate() {
                d.violations.push(format!("user {i}: {e}"));
            }
        }
        if let WifiEnergy::Matrix(m) = &self.energy_wifi {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                d.violations.push(format!("energy_wifi must be {n}x{n}"));
            } else {
                for (i, row) in m.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        if !(v >= T::zero()) || !v.is_finite() {
                            d.violations.push(format!("energy_wifi[{i}][{j}] = {v} is negative"));
                        }
                        if i == j && !v.is_zero() {
                            d.violations.push(format!("energy_wifi[{i}][{i}] must be zero"));
                        }
                    }
                }
            }
        }
        if d.violations.is_empty() {
            d.non_participating = (0..n).filter(|&i| !self.is_participating(i)).collect();
        }
        d
    }

    /// Drops users who would never consume, together with their downlinks.
    /// Returns the reduced scenario and the removed original indices.
    ///
    /// Removing a downlink can leave another user with only dearer links,
    /// so the check repeats until every remaining user participates.
    pub fn filter_participants(&self) -> (Scenario<T>, Vec<usize>) {
        let mut current = self.clone();
        let mut index: Vec<usize> = (0..self.n_users()).collect();
        let mut removed = Vec::new();
        loop {
            let (keep, out): (Vec<usize>, Vec<usize>) =
                (0..current.n_users()).partition(|&i| current.is_participating(i));
            if out.is_empty() {
                removed.sort_unstable();
                return (current, removed);
            }
            removed.extend(out.iter().map(|&i| index[i]));
            index = keep.iter().map(|&i| index[i]).collect();
            current = current.restricted_to(&keep);
        }
    }

    fn restricted_to(&self, keep: &[usize]) -> Scenario<T> {
        let users = keep.iter().map(|&i| self.users[i].clone()).collect();
        let energy_wifi = match &self.energy_wifi {
            WifiEnergy::Zero => WifiEnergy::Zero,
            WifiEnergy::Matrix(m) => {
                WifiEnergy::Matrix(keep.iter().map(|&i| keep.iter().map(|&j| m[i][j]).collect()).collect())
            }
        };
        Scenario { n_mnos: self.n_mnos, users, energy_wifi }
    }
}

/// Normal distribution with mean `mu` and variance `kappa_sq`, truncated to
/// `[mu - 2 kappa_sq, mu + 2 kappa_sq]` and floored at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormalSpec {
    pub mu: f64,
    pub kappa_sq: f64,
}

const MAX_REJECTIONS: usize = 10_000_000;

impl TruncNormalSpec {
    pub const fn new(mu: f64, kappa_sq: f64) -> Self {
        TruncNormalSpec { mu, kappa_sq }
    }

    pub fn support(&self) -> (f64, f64) {
        ((self.mu - 2.0 * self.kappa_sq).max(0.0), self.mu + 2.0 * self.kappa_sq)
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let (lo, hi) = self.support();
        if !self.mu.is_finite() || !self.kappa_sq.is_finite() || self.kappa_sq < 0.0 {
            return Err(Error::config(format!("{what}: bad distribution {self:?}")));
        }
        if hi <= 0.0 || hi < lo {
            return Err(Error::config(format!("{what}: support [{lo}, {hi}] has no positive values")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let (lo, hi) = self.support();
        if self.kappa_sq == 0.0 {
            return Ok(self.mu.max(0.0));
        }
        let normal = Normal::new(self.mu, self.kappa_sq.sqrt())
            .map_err(|e| Error::config(format!("bad distribution {self:?}: {e}")))?;
        for _ in 0..MAX_REJECTIONS {
            let x = normal.sample(rng);
            if x >= lo && x <= hi {
                return Ok(x);
            }
        }
        Err(Error::config(format!("support of {self:?} has negligible probability")))
    }
}

/// Utility family assigned to sampled users; `theta` is drawn per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum UtilityTemplate {
    AlphaFair { alpha: f64 },
    Logarithmic { a: f64 },
    Exponential,
}

impl UtilityTemplate {
    fn instantiate<T: Real>(&self, theta: f64) -> Result<UtilityFunction<T>> {
        match *self {
            UtilityTemplate::AlphaFair { alpha } => UtilityFunction::alpha_fair(lit(theta), lit(alpha)),
            UtilityTemplate::Logarithmic { a } => UtilityFunction::logarithmic(lit(theta), lit(a)),
            UtilityTemplate::Exponential => UtilityFunction::exponential(lit(theta)),
        }
    }
}

/// Random-instance design: each user is independently LTE with probability
/// `rho_lte`, otherwise 3G, and draws capacity and operator cost from the
/// distribution of its technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub users: usize,
    pub mnos: usize,
    /// Subscriber count per operator; an even split when absent.
    pub subscribers: Option<Vec<usize>>,
    pub rho_lte: f64,
    pub theta: TruncNormalSpec,
    pub utility: UtilityTemplate,
    pub capacity_lte: TruncNormalSpec,
    pub capacity_3g: TruncNormalSpec,
    pub op_cost_lte: TruncNormalSpec,
    pub op_cost_3g: TruncNormalSpec,
    /// Cellular energy cost, the same for every user.
    pub energy_down: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            users: 10,
            mnos: 2,
            subscribers: None,
            rho_lte: 0.4,
            theta: TruncNormalSpec::new(550.0, 200.0),
            utility: UtilityTemplate::AlphaFair { alpha: 0.4 },
            capacity_lte: TruncNormalSpec::new(14.0, 3.0),
            capacity_3g: TruncNormalSpec::new(1.0, 0.3),
            op_cost_lte: TruncNormalSpec::new(80.0, 10.0),
            op_cost_3g: TruncNormalSpec::new(350.0, 40.0),
            energy_down: 7.5,
        }
    }
}

impl ScenarioConfig {
    pub fn subscriber_counts(&self) -> Vec<usize> {
        match &self.subscribers {
            Some(v) => v.clone(),
            None => (0..self.mnos)
                .map(|n| self.users / self.mnos + usize::from(n < self.users % self.mnos))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mnos == 0 {
            return Err(Error::config("at least one operator is required"));
        }
        if !(0.0..=1.0).contains(&self.rho_lte) {
            return Err(Error::config(format!("rho_lte = {} is not a probability", self.rho_lte)));
        }
        let counts = self.subscriber_counts();
        if counts.len() != self.mnos || counts.iter().sum::<usize>() != self.users {
            return Err(Error::config(format!(
                "subscriber counts {counts:?} do not split {} users over {} operators",
                self.users, self.mnos
            )));
        }
        if !(self.energy_down >= 0.0) || !self.energy_down.is_finite() {
            return Err(Error::config(format!("energy_down = {} must be nonnegative", self.energy_down)));
        }
        self.theta.validate("theta")?;
        self.capacity_lte.validate("capacity_lte")?;
        self.capacity_3g.validate("capacity_3g")?;
        self.op_cost_lte.validate("op_cost_lte")?;
        self.op_cost_3g.validate("op_cost_3g")?;
        Ok(())
    }
}

/// Draws a scenario. Identical `(cfg, seed)` pairs give identical scenarios.
pub fn sample_scenario<T: Real>(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = Vec::with_capacity(cfg.users);
    for _ in 0..cfg.users {
        let lte = rng.random::<f64>() < cfg.rho_lte;
        let theta = cfg.theta.sample(&mut rng)?;
        let (cap, cost) = if lte {
            (cfg.capacity_lte, cfg.op_cost_lte)
        } else {
            (cfg.capacity_3g, cfg.op_cost_3g)
        };
        let capacity = cap.sample(&mut rng)?;
        let op_cost = cost.sample(&mut rng)?;
        users.push(User {
            subscription: 0,
            capacity: lit(capacity),
            op_cost: lit(op_cost),
            energy_down: lit(cfg.energy_down),
            utility: cfg.utility.instantiate(theta)?,
        });
    }
    let mut order: Vec<usize> = (0..cfg.users).collect();
    order.shuffle(&mut rng);
    let mut next = order.into_iter();
    for (n, &count) in cfg.subscriber_counts().iter().enumerate() {
        for i in next.by_ref().take(count) {
            users[i].subscription = n;
        }
    }
    let s = Scenario::new(cfg.mnos, users);
    let diag = s.validate();
    if !diag.is_valid() {
        return Err(Error::config(format!("sampled an invalid scenario: {}", diag.violations.join("; "))));
    }
    Ok(s)
}
