//! Market domain types, customer utility and the per-period state transition.
//!
//! Periods are 1-based: an epoch runs over periods `1..=horizon`. A
//! [`MarketState`] at period `t` already contains the arrivals of `t` and the
//! renewable generation `r_t`; [`MarketState::step`] applies the decision for
//! `t`, books its welfare and advances to `t + 1`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance (kWh) used by every feasibility check.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CustomerId(pub u32);

impl fmt::Display for CustomerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupplyType {
    /// Upstream grid supply, unbounded, priced at the retail price.
    #[serde(rename = "gs")]
    Grid,
    /// Distributed renewable supply with zero marginal cost.
    #[serde(rename = "rs")]
    Renewable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub horizon: usize,
    /// Length of one period in hours. Informational only.
    pub period_length: f64,
    /// Retail grid price per kWh.
    pub grid_price: f64,
    /// Maximum number of arrivals in a single period.
    pub max_arrivals: usize,
}

impl MarketParams {
    pub fn new(horizon: usize, grid_price: f64, max_arrivals: usize) -> Result<Self> {
        let params = Self {
            horizon,
            period_length: 1.0,
            grid_price,
            max_arrivals,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        if !(self.grid_price.is_finite() && self.grid_price > 0.0) {
            return Err(Error::InvalidParams(format!(
                "grid price must be positive, got {}",
                self.grid_price
            )));
        }
        if self.max_arrivals < 1 {
            return Err(Error::InvalidParams("max_arrivals must be at least 1".into()));
        }
        Ok(())
    }

    pub fn supply_cost(&self, supply: SupplyType) -> f64 {
        match supply {
            SupplyType::Grid => self.grid_price,
            SupplyType::Renewable => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomerSpec {
    pub id: CustomerId,
    pub arrival: usize,
    /// Requested energy in kWh.
    pub load: f64,
    pub deadline: usize,
    /// Fraction of the grid price lost by the deadline.
    pub criticality: f64,
}

impl CustomerSpec {
    pub fn validate(&self, params: &MarketParams) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(format!("customer {}: {msg}", self.id)));
        if self.arrival < 1 || self.arrival > params.horizon {
            return bad(format!("arrival {} outside [1, {}]", self.arrival, params.horizon));
        }
        if self.deadline < self.arrival || self.deadline > params.horizon {
            return bad(format!(
                "deadline {} outside [{}, {}]",
                self.deadline, self.arrival, params.horizon
            ));
        }
        if !(self.load.is_finite() && self.load > 0.0) {
            return bad(format!("load must be positive, got {}", self.load));
        }
        if !(0.0..=1.0).contains(&self.criticality) {
            return bad(format!("criticality {} outside [0, 1]", self.criticality));
        }
        Ok(())
    }

    /// Per-period decay of the willingness to pay. Zero for single-period customers.
    pub fn decay_rate(&self, grid_price: f64) -> f64 {
        if self.deadline > self.arrival {
            self.criticality * grid_price / (self.deadline - self.arrival) as f64
        } else {
            0.0
        }
    }

    pub fn in_window(&self, period: usize) -> bool {
        self.arrival <= period && period <= self.deadline
    }
}

/// Willingness to pay per kWh for service in `period`: `c - b (t - a)`, floored at zero.
pub fn willingness_to_pay(spec: &CustomerSpec, period: usize, params: &MarketParams) -> Result<f64> {
    if !spec.in_window(period) {
        return Err(Error::OutsideWindow {
            id: spec.id,
            period,
            arrival: spec.arrival,
            deadline: spec.deadline,
        });
    }
    Ok(price_unchecked(spec, period, params.grid_price))
}

pub(crate) fn price_unchecked(spec: &CustomerSpec, period: usize, grid_price: f64) -> f64 {
    let elapsed = period.saturating_sub(spec.arrival) as f64;
    (grid_price - spec.decay_rate(grid_price) * elapsed).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub period: usize,
    pub supply: SupplyType,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomerState {
    pub spec: CustomerSpec,
    pub unserved: f64,
    pub service_log: Vec<ServiceEntry>,
}

impl CustomerState {
    pub fn new(spec: CustomerSpec) -> Self {
        Self {
            unserved: spec.load,
            spec,
            service_log: Vec::new(),
        }
    }

    pub fn served(&self) -> f64 {
        self.service_log.iter().map(|e| e.amount).sum()
    }
}

/// What was known at the start of one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodSnapshot {
    pub period: usize,
    pub arrivals: Vec<CustomerId>,
    pub renewable: f64,
    /// Unserved load of every active customer before the period's decision.
    pub unserved: Vec<(CustomerId, f64)>,
}

/// Amounts dispatched to one customer within a period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    #[serde(rename = "rs")]
    pub renewable: f64,
    #[serde(rename = "gs")]
    pub grid: f64,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.renewable + self.grid
    }

    pub fn get(&self, supply: SupplyType) -> f64 {
        match supply {
            SupplyType::Grid => self.grid,
            SupplyType::Renewable => self.renewable,
        }
    }
}

/// Real-valued dispatch of each supply type to each active customer for one period.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatchDecision {
    pub allocations: BTreeMap<CustomerId, Allocation>,
}

impl MatchDecision {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `amount` of `supply` to customer `id`. Non-positive amounts are ignored.
    pub fn add(&mut self, supply: SupplyType, id: CustomerId, amount: f64) {
        if amount <= 0.0 {
            return;
        }
        let alloc = self.allocations.entry(id).or_default();
        match supply {
            SupplyType::Grid => alloc.grid += amount,
            SupplyType::Renewable => alloc.renewable += amount,
        }
    }

    pub fn amount(&self, supply: SupplyType, id: CustomerId) -> f64 {
        self.allocations.get(&id).map_or(0.0, |a| a.get(supply))
    }

    pub fn served(&self, id: CustomerId) -> f64 {
        self.allocations.get(&id).map_or(0.0, Allocation::total)
    }

    pub fn total(&self, supply: SupplyType) -> f64 {
        self.allocations.values().map(|a| a.get(supply)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.values().all(|a| a.total() == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub params: MarketParams,
    pub current_period: usize,
    pub customers: BTreeMap<CustomerId, CustomerState>,
    pub history: Vec<PeriodSnapshot>,
}

impl MarketState {
    /// State at period 1 with its arrivals and renewable generation.
    pub fn new(params: MarketParams, arrivals: Vec<CustomerSpec>, renewable: f64) -> Result<Self> {
        params.validate()?;
        let mut state = Self {
            params,
            current_period: 0,
            customers: BTreeMap::new(),
            history: Vec::new(),
        };
        state.enter_period(1, arrivals, renewable)?;
        Ok(state)
    }

    /// True once the final period has been stepped.
    pub fn is_terminal(&self) -> bool {
        self.current_period > self.params.horizon
    }

    pub fn renewable(&self) -> f64 {
        self.history.last().map_or(0.0, |h| h.renewable)
    }

    /// Customers that have arrived, are not fully served and have not passed their deadline,
    /// in ascending id order.
    pub fn active_ids(&self) -> Vec<CustomerId> {
        self.active().map(|c| c.spec.id).collect()
    }

    pub fn active(&self) -> impl Iterator<Item = &CustomerState> + '_ {
        let t = self.current_period;
        self.customers
            .values()
            .filter(move |c| c.spec.arrival <= t && c.spec.deadline >= t && c.unserved > 0.0)
    }

    pub fn customer(&self, id: CustomerId) -> Option<&CustomerState> {
        self.customers.get(&id)
    }

    /// Willingness to pay of an active customer at the current period.
    pub fn price(&self, id: CustomerId) -> f64 {
        self.customers
            .get(&id)
            .map_or(0.0, |c| price_unchecked(&c.spec, self.current_period, self.params.grid_price))
    }

    pub fn arrivals_at(&self, period: usize) -> impl Iterator<Item = &CustomerState> + '_ {
        self.customers.values().filter(move |c| c.spec.arrival == period)
    }

    /// Checks the decision against the unserved loads and the renewable budget.
    pub fn check_decision(&self, decision: &MatchDecision) -> Result<()> {
        let t = self.current_period;
        for (&id, alloc) in &decision.allocations {
            for amount in [alloc.renewable, alloc.grid] {
                if !(amount.is_finite() && amount >= 0.0) {
                    return Err(Error::Infeasible(format!(
                        "amount {amount} for customer {id} at period {t}"
                    )));
                }
            }
            if alloc.total() == 0.0 {
                continue;
            }
            let customer = self
                .customers
                .get(&id)
                .filter(|c| c.spec.in_window(t) && c.unserved > 0.0)
                .ok_or_else(|| Error::Infeasible(format!("customer {id} is not active at period {t}")))?;
            if alloc.total() > customer.unserved + FEASIBILITY_TOL {
                return Err(Error::Infeasible(format!(
                    "customer {id} receives {} kWh but only {} kWh is unserved",
                    alloc.total(),
                    customer.unserved
                )));
            }
        }
        let renewable = decision.total(SupplyType::Renewable);
        if renewable > self.renewable() + FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!(
                "renewable dispatch {renewable} kWh exceeds generation {} kWh at period {t}",
                self.renewable()
            )));
        }
        Ok(())
    }

    /// Welfare the decision would earn at the current period.
    pub fn decision_welfare(&self, decision: &MatchDecision) -> f64 {
        let c = self.params.grid_price;
        decision
            .allocations
            .iter()
            .map(|(&id, a)| {
                let price = self.price(id);
                price * a.renewable + (price - c) * a.grid
            })
            .sum()
    }

    /// Applies `decision` to the current period and advances to the next one.
    ///
    /// On the final period `next_arrivals` must be empty and the returned state is terminal.
    pub fn step(
        &self,
        decision: &MatchDecision,
        next_arrivals: Vec<CustomerSpec>,
        next_renewable: f64,
    ) -> Result<(MarketState, f64)> {
        if self.is_terminal() {
            return Err(Error::Infeasible("market epoch already finished".into()));
        }
        self.check_decision(decision)?;
        let t = self.current_period;
        let welfare = self.decision_welfare(decision);

        let mut next = self.clone();
        for (&id, alloc) in &decision.allocations {
            let Some(customer) = next.customers.get_mut(&id) else { continue };
            for supply in [SupplyType::Renewable, SupplyType::Grid] {
                let amount = alloc.get(supply);
                if amount > 0.0 {
                    customer.service_log.push(ServiceEntry { period: t, supply, amount });
                }
            }
            customer.unserved -= alloc.total();
            if customer.unserved <= FEASIBILITY_TOL {
                customer.unserved = 0.0;
            }
        }
        if let Some(late) = next
            .customers
            .values()
            .find(|c| c.spec.deadline == t && c.unserved > 0.0)
        {
            return Err(Error::DeadlineViolation {
                id: late.spec.id,
                period: t,
                unserved: late.unserved,
            });
        }

        if t == self.params.horizon {
            if !next_arrivals.is_empty() {
                return Err(Error::InvalidParams("arrivals supplied past the horizon".into()));
            }
            next.current_period = t + 1;
        } else {
            next.enter_period(t + 1, next_arrivals, next_renewable)?;
        }
        Ok((next, welfare))
    }

    fn enter_period(&mut self, period: usize, arrivals: Vec<CustomerSpec>, renewable: f64) -> Result<()> {
        if arrivals.len() > self.params.max_arrivals {
            return Err(Error::Capacity {
                period,
                count: arrivals.len(),
                capacity: self.params.max_arrivals,
            });
        }
        if !(renewable.is_finite() && renewable >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "renewable generation {renewable} at period {period}"
            )));
        }
        let mut ids = Vec::with_capacity(arrivals.len());
        for spec in arrivals {
            spec.validate(&self.params)?;
            if spec.arrival != period {
                return Err(Error::InvalidParams(format!(
                    "customer {} arrives at {} but was supplied for period {period}",
                    spec.id, spec.arrival
                )));
            }
            if self.customers.contains_key(&spec.id) {
                return Err(Error::InvalidParams(format!("duplicate customer id {}", spec.id)));
            }
            ids.push(spec.id);
            self.customers.insert(spec.id, CustomerState::new(spec));
        }
        self.current_period = period;
        let unserved = self.active().map(|c| (c.spec.id, c.unserved)).collect();
        self.history.push(PeriodSnapshot {
            period,
            arrivals: ids,
            renewable,
            unserved,
        });
        Ok(())
    }
}
