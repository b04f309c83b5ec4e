//! Online matching policies: the fixed dispatch and deadline-override
//! functions, the MA/MH/MED heuristics, and the adapter that turns a source
//! of match probabilities into a complete policy.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CustomerId, CustomerState, MarketState, MatchDecision, SupplyType, FEASIBILITY_TOL};

pub type SimRng = ChaCha8Rng;

/// Per active customer: match now (`true`) or wait.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteMatch {
    pub flags: BTreeMap<CustomerId, bool>,
}

impl DiscreteMatch {
    pub fn is_marked(&self, id: CustomerId) -> bool {
        self.flags.get(&id).copied().unwrap_or(false)
    }

    pub fn uniform(ids: &[CustomerId], flag: bool) -> Self {
        Self {
            flags: ids.iter().map(|&id| (id, flag)).collect(),
        }
    }
}

/// Per active customer: probability of being matched.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatchProbabilities {
    pub probs: BTreeMap<CustomerId, f64>,
}

impl MatchProbabilities {
    pub fn new(probs: BTreeMap<CustomerId, f64>) -> Result<Self> {
        if let Some((id, p)) = probs.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParams(format!("probability {p} for customer {id}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(ids: &[CustomerId], p: f64) -> Result<Self> {
        Self::new(ids.iter().map(|&id| (id, p)).collect())
    }

    /// Log-probability of `m` under independent Bernoulli draws.
    pub fn log_prob(&self, m: &DiscreteMatch) -> f64 {
        self.probs
            .iter()
            .map(|(id, &p)| if m.is_marked(*id) { p.ln() } else { (1.0 - p).ln() })
            .sum()
    }
}

/// Independent Bernoulli draw per customer.
pub fn sample_discrete<R: Rng + ?Sized>(probs: &MatchProbabilities, rng: &mut R) -> DiscreteMatch {
    DiscreteMatch {
        flags: probs
            .probs
            .iter()
            .map(|(&id, &p)| (id, rng.random::<f64>() < p))
            .collect(),
    }
}

fn by_deadline(a: &&CustomerState, b: &&CustomerState) -> Ordering {
    (a.spec.deadline, a.spec.arrival, a.spec.id).cmp(&(b.spec.deadline, b.spec.arrival, b.spec.id))
}

/// Sorts by descending willingness to pay, ties by deadline order.
fn sort_by_price(state: &MarketState, customers: &mut [&CustomerState]) {
    customers.sort_by(|a, b| {
        state
            .price(b.spec.id)
            .total_cmp(&state.price(a.spec.id))
            .then_with(|| by_deadline(a, b))
    });
}

/// Hands out `budget` renewable kWh in the given order, each customer up to its
/// unserved load. Returns what is left.
fn allocate_renewable(decision: &mut MatchDecision, order: &[&CustomerState], mut budget: f64) -> f64 {
    for c in order {
        if budget <= 0.0 {
            break;
        }
        let already = decision.served(c.spec.id);
        let amount = (c.unserved - already).min(budget);
        if amount > 0.0 {
            decision.add(SupplyType::Renewable, c.spec.id, amount);
            budget -= amount;
        }
    }
    budget.max(0.0)
}

/// Turns a discrete match into amounts.
///
/// Marked customers are served in full, renewable first in deadline order
/// (the boundary customer is split), then from the grid. Renewable left over
/// after all marked customers goes to unmarked customers by descending
/// willingness to pay.
pub fn dispatch_phi(m: &DiscreteMatch, state: &MarketState) -> MatchDecision {
    let mut decision = MatchDecision::new();
    let mut marked: Vec<&CustomerState> = state.active().filter(|c| m.is_marked(c.spec.id)).collect();
    marked.sort_by(by_deadline);

    let mut budget = state.renewable();
    for c in &marked {
        let rs = c.unserved.min(budget);
        decision.add(SupplyType::Renewable, c.spec.id, rs);
        decision.add(SupplyType::Grid, c.spec.id, c.unserved - rs);
        budget -= rs;
    }
    if budget > 0.0 {
        let mut unmarked: Vec<&CustomerState> =
            state.active().filter(|c| !m.is_marked(c.spec.id)).collect();
        sort_by_price(state, &mut unmarked);
        allocate_renewable(&mut decision, &unmarked, budget);
    }
    decision
}

/// Grid-serves whatever an at-deadline customer still lacks after `decision`.
pub fn nu_override(decision: &MatchDecision, state: &MarketState) -> MatchDecision {
    let mut out = decision.clone();
    let t = state.current_period;
    for c in state.active().filter(|c| c.spec.deadline == t) {
        let shortfall = c.unserved - out.served(c.spec.id);
        if shortfall > FEASIBILITY_TOL {
            out.add(SupplyType::Grid, c.spec.id, shortfall);
        }
    }
    out
}

/// Match on arrival: renewable to this period's arrivals, grid for the rest.
pub fn policy_ma(state: &MarketState) -> MatchDecision {
    let mut decision = MatchDecision::new();
    let mut budget = state.renewable();
    let t = state.current_period;
    for c in state.active().filter(|c| c.spec.arrival == t) {
        let rs = c.unserved.min(budget);
        decision.add(SupplyType::Renewable, c.spec.id, rs);
        decision.add(SupplyType::Grid, c.spec.id, c.unserved - rs);
        budget -= rs;
    }
    nu_override(&decision, state)
}

/// Match to the highest willingness to pay; others wait unless at their deadline.
pub fn policy_mh(state: &MarketState) -> MatchDecision {
    let mut order: Vec<&CustomerState> = state.active().collect();
    sort_by_price(state, &mut order);
    let mut decision = MatchDecision::new();
    allocate_renewable(&mut decision, &order, state.renewable());
    nu_override(&decision, state)
}

/// Match to the earliest deadline; others wait unless at their deadline.
pub fn policy_med(state: &MarketState) -> MatchDecision {
    let mut order: Vec<&CustomerState> = state.active().collect();
    order.sort_by(|a, b| {
        a.spec
            .deadline
            .cmp(&b.spec.deadline)
            .then_with(|| state.price(b.spec.id).total_cmp(&state.price(a.spec.id)))
            .then_with(|| (a.spec.arrival, a.spec.id).cmp(&(b.spec.arrival, b.spec.id)))
    });
    let mut decision = MatchDecision::new();
    allocate_renewable(&mut decision, &order, state.renewable());
    nu_override(&decision, state)
}

/// Identifies the parameters and dropout mask behind a stochastic decision so
/// that the trainer can replay the exact forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTag {
    pub fingerprint: u64,
    pub dropout_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledMatch {
    pub matched: DiscreteMatch,
    pub probabilities: MatchProbabilities,
    pub log_prob: f64,
    pub tag: SampleTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub decision: MatchDecision,
    pub sample: Option<SampledMatch>,
}

pub trait OnlinePolicy {
    fn name(&self) -> &str;
    fn decide(&mut self, state: &MarketState, rng: &mut SimRng) -> Result<PolicyOutput>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heuristic {
    Ma,
    Mh,
    Med,
}

impl OnlinePolicy for Heuristic {
    fn name(&self) -> &str {
        match self {
            Heuristic::Ma => "ma",
            Heuristic::Mh => "mh",
            Heuristic::Med => "med",
        }
    }

    fn decide(&mut self, state: &MarketState, _rng: &mut SimRng) -> Result<PolicyOutput> {
        let decision = match self {
            Heuristic::Ma => policy_ma(state),
            Heuristic::Mh => policy_mh(state),
            Heuristic::Med => policy_med(state),
        };
        Ok(PolicyOutput { decision, sample: None })
    }
}

/// Anything that emits match probabilities for the active customers of a state.
pub trait MatchProbabilitySource {
    fn probabilities(&mut self, state: &MarketState, rng: &mut SimRng) -> Result<(MatchProbabilities, SampleTag)>;
}

/// The same probability for every active customer.
#[derive(Clone, Copy, Debug)]
pub struct ConstantProbability(pub f64);

impl MatchProbabilitySource for ConstantProbability {
    fn probabilities(&mut self, state: &MarketState, _rng: &mut SimRng) -> Result<(MatchProbabilities, SampleTag)> {
        let probs = MatchProbabilities::uniform(&state.active_ids(), self.0)?;
        Ok((
            probs,
            SampleTag {
                fingerprint: 0,
                dropout_seed: None,
            },
        ))
    }
}

/// Sample, dispatch, then enforce deadlines.
pub struct ComposedPolicy<M> {
    name: String,
    pub source: M,
}

pub fn compose_policy<M: MatchProbabilitySource>(name: impl Into<String>, source: M) -> ComposedPolicy<M> {
    ComposedPolicy {
        name: name.into(),
        source,
    }
}

impl<M: MatchProbabilitySource> OnlinePolicy for ComposedPolicy<M> {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, state: &MarketState, rng: &mut SimRng) -> Result<PolicyOutput> {
        let (probabilities, tag) = self.source.probabilities(state, rng)?;
        let matched = sample_discrete(&probabilities, rng);
        let log_prob = probabilities.log_prob(&matched);
        let decision = nu_override(&dispatch_phi(&matched, state), state);
        Ok(PolicyOutput {
            decision,
            sample: Some(SampledMatch {
                matched,
                probabilities,
                log_prob,
                tag,
            }),
        })
    }
}

/// Policy names accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Ma,
    Mh,
    Med,
    La1,
    La2,
    Ooa,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Ma,
        PolicyKind::Mh,
        PolicyKind::Med,
        PolicyKind::La1,
        PolicyKind::La2,
        PolicyKind::Ooa,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Ma => "ma",
            PolicyKind::Mh => "mh",
            PolicyKind::Med => "med",
            PolicyKind::La1 => "la1",
            PolicyKind::La2 => "la2",
            PolicyKind::Ooa => "ooa",
        }
    }

    pub fn heuristic(&self) -> Option<Heuristic> {
        match self {
            PolicyKind::Ma => Some(Heuristic::Ma),
            PolicyKind::Mh => Some(Heuristic::Mh),
            PolicyKind::Med => Some(Heuristic::Med),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidParams(format!("unknown policy '{s}' (expected ma, mh, med, la1, la2 or ooa)"))
            })
    }
}
