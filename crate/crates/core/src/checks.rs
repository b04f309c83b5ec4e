//! Invariant and oracle suites shared by `flexmatch verify` and the tests.

use std::fmt;

use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::market::{CustomerId, CustomerSpec, CustomerState, MarketParams, MarketState, SupplyType, FEASIBILITY_TOL};
use crate::oracle::{brute_force_verify, solve_hindsight};
use crate::policies::{dispatch_phi, nu_override, DiscreteMatch, Heuristic, OnlinePolicy, SimRng};
use crate::scenario::{PeriodDraw, Scenario, ScenarioRealization};
use crate::trace::{epoch_welfare, run_epoch};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// A mid-epoch state with up to `max_customers` partly served customers
/// whose windows contain the current period, and a random marking.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, max_customers: usize) -> Result<(MarketState, DiscreteMatch)> {
    let horizon = rng.random_range(1..=8);
    let t = rng.random_range(1..=horizon);
    let n = rng.random_range(1..=max_customers);
    let params = MarketParams::new(horizon, rng.random_range(1.0..20.0), n)?;
    let mut state = MarketState::new(params.clone(), Vec::new(), 0.0)?;
    state.current_period = t;
    let mut m = DiscreteMatch::default();
    for i in 0..n {
        let spec = CustomerSpec {
            id: CustomerId(i as u32),
            arrival: rng.random_range(1..=t),
            load: rng.random_range(0.05..5.0),
            deadline: rng.random_range(t..=horizon),
            criticality: rng.random_range(0.0..=1.0),
        };
        spec.validate(&params)?;
        let mut c = CustomerState::new(spec.clone());
        if rng.random_bool(0.5) {
            c.unserved *= rng.random_range(0.05..1.0);
        }
        state.customers.insert(spec.id, c);
        m.flags.insert(spec.id, rng.random_bool(0.5));
    }
    let budget = rng.random_range(0.0..12.0);
    if let Some(h) = state.history.last_mut() {
        h.renewable = if rng.random_bool(0.1) { 0.0 } else { budget };
    }
    Ok((state, m))
}

/// Reasons the composed decision of `m` on `state` breaks an invariant.
pub fn composed_violations(state: &MarketState, m: &DiscreteMatch) -> Vec<String> {
    let decision = nu_override(&dispatch_phi(m, state), state);
    let mut out = Vec::new();
    if let Err(e) = state.check_decision(&decision) {
        out.push(e.to_string());
    }
    let t = state.current_period;
    for c in state.active() {
        let served = decision.served(c.spec.id);
        if c.spec.deadline == t && c.unserved - served > FEASIBILITY_TOL {
            out.push(format!("customer {} left {} kWh short at its deadline", c.spec.id, c.unserved - served));
        }
        if m.is_marked(c.spec.id) && (served - c.unserved).abs() > FEASIBILITY_TOL {
            out.push(format!("marked customer {} served {served} of {}", c.spec.id, c.unserved));
        }
    }
    let demand: f64 = state.active().map(|c| c.unserved).sum();
    let rs = decision.total(SupplyType::Renewable);
    if rs + FEASIBILITY_TOL < demand.min(state.renewable()) {
        out.push(format!("only {rs} of {} kWh renewable used", state.renewable()));
    }
    if let Err(e) = state.step(&decision, Vec::new(), 0.0) {
        out.push(e.to_string());
    }
    out
}

pub fn feasibility_suite(pairs: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut violations = 0;
    let mut first = None;
    for _ in 0..pairs {
        let (state, m) = random_state(&mut rng, 6)?;
        let v = composed_violations(&state, &m);
        if !v.is_empty() {
            violations += 1;
            first.get_or_insert_with(|| v.join("; "));
        }
    }
    Ok(CheckReport {
        name: "feasibility".into(),
        passed: violations == 0,
        detail: match first {
            None => format!("{pairs} random (state, match) pairs, no violations"),
            Some(v) => format!("{violations} of {pairs} pairs violate invariants, e.g. {v}"),
        },
    })
}

/// Per-epoch welfare of the hindsight oracle and of each heuristic, on the
/// same realizations, for epochs `1..=epochs`.
pub fn dominance_suite(scenario: &Scenario, epochs: u64, seed: u64) -> Result<CheckReport> {
    let mut worst = f64::INFINITY;
    let mut worst_at = (0, String::new());
    for epoch in 1..=epochs {
        let realization = scenario.draw(epoch);
        let ooa = solve_hindsight(&realization)?.welfare;
        for h in [Heuristic::Ma, Heuristic::Mh, Heuristic::Med] {
            let mut rng = SimRng::seed_from_u64(seed ^ epoch);
            let mut policy = h;
            let w = epoch_welfare(&run_epoch(&realization, &mut policy, &mut rng)?)?;
            if ooa - w < worst {
                worst = ooa - w;
                worst_at = (epoch, policy.name().to_string());
            }
        }
    }
    Ok(CheckReport {
        name: format!("dominance[{}]", scenario.name()),
        passed: worst >= -1e-6,
        detail: format!(
            "{epochs} epochs; smallest OOA margin {worst:.3e} (epoch {}, {})",
            worst_at.0, worst_at.1
        ),
    })
}

/// A tiny realization whose loads and renewables lie on a `grid` lattice.
pub fn tiny_instance<R: Rng + ?Sized>(rng: &mut R, grid: f64) -> Result<ScenarioRealization> {
    let horizon = rng.random_range(1..=4);
    let n = rng.random_range(1..=3);
    let params = MarketParams::new(horizon, rng.random_range(1.0..10.0), n)?;
    let mut periods: Vec<PeriodDraw> = (0..horizon)
        .map(|_| PeriodDraw {
            arrivals: Vec::new(),
            renewable: grid * rng.random_range(0..=8) as f64,
        })
        .collect();
    for i in 0..n {
        let arrival = rng.random_range(1..=horizon);
        periods[arrival - 1].arrivals.push(CustomerSpec {
            id: CustomerId(i as u32),
            arrival,
            load: grid * rng.random_range(1..=8) as f64,
            deadline: rng.random_range(arrival..=horizon),
            criticality: rng.random_range(0.0..=1.0),
        });
    }
    Ok(ScenarioRealization {
        profile: "tiny".into(),
        epoch_index: 0,
        params,
        periods,
    })
}

/// LP oracle against exhaustive search on lattice-valued tiny instances,
/// where the lattice search is exact.
pub fn oracle_suite(instances: usize, seed: u64) -> Result<CheckReport> {
    let grid = 0.25;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let r = tiny_instance(&mut rng, grid)?;
        let lp = solve_hindsight(&r)?.welfare;
        let bf = brute_force_verify(&r, grid)?;
        worst = worst.max((lp - bf).abs());
    }
    Ok(CheckReport {
        name: "oracle".into(),
        passed: worst <= 1e-6,
        detail: format!("{instances} tiny instances; max |LP - brute force| {worst:.3e}"),
    })
}

/// Every suite, with sizes suited to an interactive run.
pub fn run_all(scenarios: &[Scenario], seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = vec![feasibility_suite(10_000, seed)?, oracle_suite(200, seed)?];
    for s in scenarios {
        out.push(dominance_suite(s, 100, seed)?);
    }
    Ok(out)
}
