//! Epoch rollouts, their traces and the line-delimited trace format.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CustomerId, MarketState, MatchDecision, SupplyType, FEASIBILITY_TOL};
use crate::policies::{DiscreteMatch, OnlinePolicy, SampledMatch, SimRng};
use crate::scenario::ScenarioRealization;

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodRecord {
    /// State before the period's decision.
    pub state: MarketState,
    pub decision: MatchDecision,
    pub welfare: f64,
    pub sample: Option<SampledMatch>,
}

impl PeriodRecord {
    pub fn period(&self) -> usize {
        self.state.current_period
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochTrace {
    pub horizon: usize,
    pub records: Vec<PeriodRecord>,
    /// State after the final period.
    pub final_state: Option<MarketState>,
}

impl EpochTrace {
    pub fn welfare_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.welfare).collect()
    }

    pub fn check_complete(&self) -> Result<()> {
        if self.records.len() != self.horizon {
            return Err(Error::IncompleteTrace(format!(
                "{} of {} periods recorded",
                self.records.len(),
                self.horizon
            )));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.period() != i + 1 {
                return Err(Error::IncompleteTrace(format!(
                    "record {i} is for period {}",
                    r.period()
                )));
            }
        }
        Ok(())
    }

    /// Checks supply, demand and deadline conservation over the whole epoch.
    pub fn check_invariants(&self) -> Result<()> {
        self.check_complete()?;
        for r in &self.records {
            r.state.check_decision(&r.decision)?;
            let rs = r.decision.total(SupplyType::Renewable);
            if rs > r.state.renewable() + FEASIBILITY_TOL {
                return Err(Error::Infeasible(format!(
                    "period {}: {rs} kWh renewable dispatched of {}",
                    r.period(),
                    r.state.renewable()
                )));
            }
        }
        let last = self
            .final_state
            .as_ref()
            .ok_or_else(|| Error::IncompleteTrace("missing final state".into()))?;
        for c in last.customers.values() {
            if c.unserved != 0.0 || (c.served() - c.spec.load).abs() > FEASIBILITY_TOL {
                return Err(Error::DeadlineViolation {
                    id: c.spec.id,
                    period: c.spec.deadline,
                    unserved: c.spec.load - c.served(),
                });
            }
            if let Some(e) = c
                .service_log
                .iter()
                .find(|e| e.period < c.spec.arrival || e.period > c.spec.deadline)
            {
                return Err(Error::Infeasible(format!(
                    "customer {} served at period {} outside [{}, {}]",
                    c.spec.id, e.period, c.spec.arrival, c.spec.deadline
                )));
            }
        }
        Ok(())
    }

    pub fn to_lines(&self) -> Vec<TraceLine> {
        self.records.iter().map(TraceLine::from_record).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for line in self.to_lines() {
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Total welfare of a complete epoch.
pub fn epoch_welfare(trace: &EpochTrace) -> Result<f64> {
    trace.check_complete()?;
    Ok(trace.records.iter().map(|r| r.welfare).sum())
}

/// One line of the trace file. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub period: usize,
    pub active_ids: Vec<CustomerId>,
    pub r_t: f64,
    pub prices: BTreeMap<CustomerId, f64>,
    pub m: Option<DiscreteMatch>,
    pub decision: MatchDecision,
    pub welfare: f64,
}

impl TraceLine {
    pub fn from_record(r: &PeriodRecord) -> Self {
        let active_ids = r.state.active_ids();
        let prices = active_ids.iter().map(|&id| (id, r.state.price(id))).collect();
        TraceLine {
            period: r.period(),
            active_ids,
            r_t: r.state.renewable(),
            prices,
            m: r.sample.as_ref().map(|s| s.matched.clone()),
            decision: r.decision.clone(),
            welfare: r.welfare,
        }
    }
}

/// Replays a fixed schedule of decisions (for instance an offline optimum)
/// over a realization.
pub fn replay_schedule(realization: &ScenarioRealization, schedule: &[MatchDecision]) -> Result<EpochTrace> {
    let mut it = schedule.iter();
    rollout(realization, |_| {
        it.next()
            .cloned()
            .map(|decision| (decision, None))
            .ok_or_else(|| Error::IncompleteTrace("schedule shorter than horizon".into()))
    })
}

/// Runs `policy` over one realized epoch.
pub fn run_epoch<P: OnlinePolicy + ?Sized>(
    realization: &ScenarioRealization,
    policy: &mut P,
    rng: &mut SimRng,
) -> Result<EpochTrace> {
    rollout(realization, |state| {
        let out = policy.decide(state, rng)?;
        Ok((out.decision, out.sample))
    })
}

fn rollout<F>(realization: &ScenarioRealization, mut decide: F) -> Result<EpochTrace>
where
    F: FnMut(&MarketState) -> Result<(MatchDecision, Option<SampledMatch>)>,
{
    let periods = &realization.periods;
    let horizon = realization.params.horizon;
    if periods.len() != horizon {
        return Err(Error::IncompleteTrace(format!(
            "realization has {} periods, horizon is {horizon}",
            periods.len()
        )));
    }
    let mut state = MarketState::new(
        realization.params.clone(),
        periods[0].arrivals.clone(),
        periods[0].renewable,
    )?;
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let (decision, sample) = decide(&state)?;
        let (arrivals, renewable) = match periods.get(t) {
            Some(p) => (p.arrivals.clone(), p.renewable),
            None => (Vec::new(), 0.0),
        };
        let (next, welfare) = state.step(&decision, arrivals, renewable)?;
        records.push(PeriodRecord {
            state,
            decision,
            welfare,
            sample,
        });
        state = next;
    }
    Ok(EpochTrace {
        horizon,
        records,
        final_state: Some(state),
    })
}
