//! Offline-optimal (hindsight) welfare for a realized epoch.
//!
//! The hindsight problem is a linear program over amounts `M(j, i, t)` for
//! every customer `i`, every period `t` of its window and both supply types,
//! maximizing welfare subject to full service of each customer and the
//! per-period renewable budget.

use crate::error::{Error, Result};
use crate::market::{price_unchecked, CustomerSpec, MatchDecision, SupplyType};
use crate::scenario::ScenarioRealization;
use crate::simplex::{self, StandardForm};

#[derive(Clone, Debug, PartialEq)]
pub struct HindsightSolution {
    pub welfare: f64,
    /// One decision per period, `schedule[t - 1]` for period `t`.
    pub schedule: Vec<MatchDecision>,
}

struct Var {
    customer: usize,
    period: usize,
    supply: SupplyType,
}

pub fn solve_hindsight(realization: &ScenarioRealization) -> Result<HindsightSolution> {
    let params = &realization.params;
    let horizon = realization.horizon();
    let c = params.grid_price;
    let customers: Vec<&CustomerSpec> = realization.customers().collect();
    let n = customers.len();

    let mut vars = Vec::new();
    let mut objective = Vec::new();
    let mut gs_at_arrival = vec![usize::MAX; n];
    for (i, spec) in customers.iter().enumerate() {
        if spec.arrival > spec.deadline || spec.deadline > horizon {
            return Err(Error::Solver(format!("customer {} has an empty window", spec.id)));
        }
        for t in spec.arrival..=spec.deadline {
            let price = price_unchecked(spec, t, c);
            vars.push(Var { customer: i, period: t, supply: SupplyType::Renewable });
            objective.push(price);
            if t == spec.arrival {
                gs_at_arrival[i] = vars.len();
            }
            vars.push(Var { customer: i, period: t, supply: SupplyType::Grid });
            objective.push(price - c);
        }
    }
    let structural = vars.len();
    let cols = structural + horizon;
    let rows = n + horizon;

    let mut a = vec![vec![0.0; cols]; rows];
    for (j, v) in vars.iter().enumerate() {
        a[v.customer][j] = 1.0;
        if v.supply == SupplyType::Renewable {
            a[n + v.period - 1][j] = 1.0;
        }
    }
    let mut basis = gs_at_arrival;
    for t in 0..horizon {
        a[n + t][structural + t] = 1.0;
        basis.push(structural + t);
    }
    objective.resize(cols, 0.0);
    let mut b: Vec<f64> = customers.iter().map(|s| s.load).collect();
    b.extend(realization.periods.iter().map(|p| p.renewable));

    let solution = simplex::maximize(StandardForm { a, b, c: objective, basis })?;

    let mut schedule = vec![MatchDecision::new(); horizon];
    for (v, &x) in vars.iter().zip(&solution.x) {
        if x > 0.0 {
            schedule[v.period - 1].add(v.supply, customers[v.customer].id, x);
        }
    }
    Ok(HindsightSolution {
        welfare: solution.objective,
        schedule,
    })
}

/// Largest instance accepted by [`brute_force_verify`].
pub const BRUTE_FORCE_MAX_CUSTOMERS: usize = 3;
pub const BRUTE_FORCE_MAX_HORIZON: usize = 4;
const BRUTE_FORCE_MAX_STEPS: f64 = 64.0;

/// Exhaustive search over renewable amounts on a grid of `grid_resolution`
/// kWh (plus the exact remaining capacity at every choice). Whatever a
/// customer does not receive from renewables is bought from the grid in the
/// period of its window with the best `price - c`.
pub fn brute_force_verify(realization: &ScenarioRealization, grid_resolution: f64) -> Result<f64> {
    let horizon = realization.horizon();
    let customers: Vec<&CustomerSpec> = realization.customers().collect();
    if customers.len() > BRUTE_FORCE_MAX_CUSTOMERS || horizon > BRUTE_FORCE_MAX_HORIZON {
        return Err(Error::TooLarge(format!(
            "{} customers over {horizon} periods (limit {BRUTE_FORCE_MAX_CUSTOMERS} customers, {BRUTE_FORCE_MAX_HORIZON} periods)",
            customers.len()
        )));
    }
    if !(grid_resolution.is_finite() && grid_resolution > 0.0) {
        return Err(Error::InvalidParams(format!("grid resolution {grid_resolution}")));
    }
    if customers.iter().any(|s| s.load / grid_resolution > BRUTE_FORCE_MAX_STEPS) {
        return Err(Error::TooLarge(format!(
            "load exceeds {BRUTE_FORCE_MAX_STEPS} grid steps of {grid_resolution} kWh"
        )));
    }
    let c = realization.params.grid_price;

    let mut slots = Vec::new();
    for t in 1..=horizon {
        for (i, s) in customers.iter().enumerate() {
            if s.in_window(t) {
                slots.push((i, t, price_unchecked(s, t, c)));
            }
        }
    }
    let best_grid: Vec<f64> = customers
        .iter()
        .map(|s| {
            (s.arrival..=s.deadline)
                .map(|t| price_unchecked(s, t, c) - c)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    struct Search<'a> {
        slots: &'a [(usize, usize, f64)],
        best_grid: &'a [f64],
        grid: f64,
        need: Vec<f64>,
        supply: Vec<f64>,
        best: f64,
    }

    impl Search<'_> {
        fn visit(&mut self, k: usize, value: f64) {
            if k == self.slots.len() {
                let grid_value: f64 = self.need.iter().zip(self.best_grid).map(|(q, g)| q * g).sum();
                self.best = self.best.max(value + grid_value);
                return;
            }
            let (i, t, price) = self.slots[k];
            let cap = self.need[i].min(self.supply[t - 1]).max(0.0);
            let mut candidates = Vec::new();
            let mut step = 0usize;
            loop {
                let v = step as f64 * self.grid;
                if v >= cap {
                    break;
                }
                candidates.push(v);
                step += 1;
            }
            candidates.push(cap);
            for amount in candidates {
                self.need[i] -= amount;
                self.supply[t - 1] -= amount;
                self.visit(k + 1, value + price * amount);
                self.need[i] += amount;
                self.supply[t - 1] += amount;
            }
        }
    }

    let mut search = Search {
        slots: &slots,
        best_grid: &best_grid,
        grid: grid_resolution,
        need: customers.iter().map(|s| s.load).collect(),
        supply: realization.periods.iter().map(|p| p.renewable).collect(),
        best: f64::NEG_INFINITY,
    };
    search.visit(0, 0.0);
    Ok(if customers.is_empty() { 0.0 } else { search.best })
}
