//! A two-period, one-customer market small enough to enumerate, with a
//! three-parameter logistic policy whose value and gradient are exact.
#![allow(dead_code)]

use flexmatch::market::{CustomerId, CustomerSpec, MarketParams, MarketState};
use flexmatch::policies::{
    compose_policy, dispatch_phi, nu_override, DiscreteMatch, MatchProbabilities, MatchProbabilitySource,
    SampleTag, SimRng,
};
use flexmatch::scenario::{PeriodDraw, ScenarioRealization};
use flexmatch::tcn::layers::sigmoid;
use flexmatch::trace::{run_epoch, EpochTrace, PeriodRecord};
use flexmatch::trainer::{ScorePolicy, ValueFunction};
use rand::SeedableRng;

/// `p = sigmoid(theta0 + theta1 * t + theta2 * r_t)` for every active customer.
#[derive(Clone)]
pub struct Logistic {
    pub theta: [f64; 3],
}

impl Logistic {
    pub fn features(state: &MarketState) -> [f64; 3] {
        [1.0, state.current_period as f64, state.renewable()]
    }

    pub fn logit(&self, state: &MarketState) -> f64 {
        let f = Self::features(state);
        self.theta.iter().zip(f).map(|(a, b)| a * b).sum()
    }

    pub fn prob(&self, state: &MarketState) -> f64 {
        sigmoid(self.logit(state))
    }
}

impl MatchProbabilitySource for Logistic {
    fn probabilities(&mut self, state: &MarketState, _rng: &mut SimRng) -> flexmatch::Result<(MatchProbabilities, SampleTag)> {
        let p = self.prob(state);
        Ok((
            MatchProbabilities::uniform(&state.active_ids(), p)?,
            SampleTag {
                fingerprint: 0,
                dropout_seed: None,
            },
        ))
    }
}

impl ScorePolicy for Logistic {
    fn num_params(&self) -> usize {
        3
    }

    fn accumulate_score(&self, record: &PeriodRecord, weight: f64, grad: &mut [f64]) -> flexmatch::Result<()> {
        let sample = record.sample.as_ref().expect("sampled");
        let p = self.prob(&record.state);
        let f = Self::features(&record.state);
        for &id in sample.probabilities.probs.keys() {
            let m = if sample.matched.is_marked(id) { 1.0 } else { 0.0 };
            for (g, x) in grad.iter_mut().zip(f) {
                *g += weight * (m - p) * x;
            }
        }
        Ok(())
    }
}

/// Two periods, one customer (arrives at 1, deadline 2, half-critical).
pub fn toy() -> ScenarioRealization {
    let spec = CustomerSpec {
        id: CustomerId(0),
        arrival: 1,
        load: 1.0,
        deadline: 2,
        criticality: 0.5,
    };
    ScenarioRealization {
        profile: "toy".into(),
        epoch_index: 1,
        params: MarketParams::new(2, 10.0, 1).unwrap(),
        periods: vec![
            PeriodDraw {
                arrivals: vec![spec],
                renewable: 0.4,
            },
            PeriodDraw {
                arrivals: vec![],
                renewable: 0.7,
            },
        ],
    }
}

pub fn first_state(r: &ScenarioRealization) -> MarketState {
    MarketState::new(r.params.clone(), r.periods[0].arrivals.clone(), r.periods[0].renewable).unwrap()
}

pub fn next_inputs(r: &ScenarioRealization, period: usize) -> (Vec<CustomerSpec>, f64) {
    match r.periods.get(period) {
        Some(p) => (p.arrivals.clone(), p.renewable),
        None => (Vec::new(), 0.0),
    }
}

/// Every subset of active customers, with its probability under `p`.
pub fn all_matches(state: &MarketState, p: f64) -> Vec<(DiscreteMatch, f64)> {
    let ids = state.active_ids();
    (0..1u32 << ids.len())
        .map(|bits| {
            let mut m = DiscreteMatch::default();
            let mut prob = 1.0;
            for (i, &id) in ids.iter().enumerate() {
                let on = bits >> i & 1 == 1;
                m.flags.insert(id, on);
                prob *= if on { p } else { 1.0 - p };
            }
            (m, prob)
        })
        .collect()
}

/// Expected welfare from `state` to the horizon, by full enumeration.
pub fn exact_value(policy: &Logistic, r: &ScenarioRealization, state: &MarketState) -> f64 {
    if state.is_terminal() {
        return 0.0;
    }
    let p = policy.prob(state);
    all_matches(state, p)
        .into_iter()
        .map(|(m, prob)| {
            let decision = nu_override(&dispatch_phi(&m, state), state);
            let (arrivals, renewable) = next_inputs(r, state.current_period);
            let (next, v) = state.step(&decision, arrivals, renewable).unwrap();
            prob * (v + exact_value(policy, r, &next))
        })
        .sum()
}

pub fn exact_gradient(theta: [f64; 3], r: &ScenarioRealization) -> [f64; 3] {
    let h = 1e-4;
    let s0 = first_state(r);
    let mut g = [0.0; 3];
    for i in 0..3 {
        let mut up = theta;
        let mut down = theta;
        up[i] += h;
        down[i] -= h;
        g[i] = (exact_value(&Logistic { theta: up }, r, &s0) - exact_value(&Logistic { theta: down }, r, &s0)) / (2.0 * h);
    }
    g
}

/// Mean and standard error of a per-rollout estimator over `n` rollouts.
pub fn monte_carlo<F>(theta: [f64; 3], n: u64, estimator: F) -> ([f64; 3], [f64; 3])
where
    F: Fn(&EpochTrace, &Logistic) -> Vec<f64>,
{
    let r = toy();
    let source = Logistic { theta };
    let mut policy = compose_policy("logistic", source.clone());
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut rng = SimRng::seed_from_u64(2024);
    for _ in 0..n {
        let trace = run_epoch(&r, &mut policy, &mut rng).unwrap();
        let g = estimator(&trace, &source);
        for i in 0..3 {
            sum[i] += g[i];
            sq[i] += g[i] * g[i];
        }
    }
    let nf = n as f64;
    let mean = sum.map(|s| s / nf);
    let mut se = [0.0; 3];
    for i in 0..3 {
        se[i] = ((sq[i] / nf - mean[i] * mean[i]) / nf).sqrt();
    }
    (mean, se)
}

pub const THETA: [f64; 3] = [0.3, -0.4, 0.8];

/// `V(X_t)` computed by enumeration under the same policy.
pub struct ExactCritic(pub Logistic, pub ScenarioRealization);

impl ValueFunction for ExactCritic {
    fn value(&self, state: &MarketState) -> flexmatch::Result<f64> {
        Ok(exact_value(&self.0, &self.1, state))
    }
}

