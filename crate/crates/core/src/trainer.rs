//! Policy-gradient training of the match-probability network: vanilla
//! REINFORCE (LA1) and the k-step actor-critic (LA2).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketState;
use crate::policies::{compose_policy, ComposedPolicy, SimRng};
use crate::scenario::Scenario;
use crate::tcn::layers::{bernoulli_log_prob_grad, sigmoid};
use crate::tcn::{adam_step, AdamState, Direction, InputScaling, Mode, PolicyParams, Tcn, TcnConfig, TcnHyper, TcnPolicy};
use crate::trace::{epoch_welfare, run_epoch, PeriodRecord};

pub use crate::trace::EpochTrace;

/// `sum_{l=t}^{T} v_l` for a 1-based period `t`.
pub fn return_to_go(trace: &EpochTrace, t: usize) -> Result<f64> {
    if t == 0 || t > trace.records.len() {
        return Err(Error::InvalidParams(format!(
            "period {t} outside 1..={}",
            trace.records.len()
        )));
    }
    Ok(trace.records[t - 1..].iter().map(|r| r.welfare).sum())
}

/// A differentiable stochastic matching policy.
pub trait ScorePolicy {
    fn num_params(&self) -> usize;

    /// Adds `weight * d log mu(m_t | X_t) / d theta` for the record's sampled
    /// match into `grad`. Errors if the record was not produced by these
    /// parameters.
    fn accumulate_score(&self, record: &PeriodRecord, weight: f64, grad: &mut [f64]) -> Result<()>;
}

/// A state-value estimate `V(X_t)`.
pub trait ValueFunction {
    fn value(&self, state: &MarketState) -> Result<f64>;
}

/// Actor view of a network and a parameter snapshot.
pub struct TcnActor<'a> {
    pub policy: TcnPolicy<'a>,
    fingerprint: u64,
}

impl<'a> TcnActor<'a> {
    pub fn new(policy: TcnPolicy<'a>) -> Self {
        let fingerprint = policy.params.fingerprint();
        Self { policy, fingerprint }
    }
}

impl ScorePolicy for TcnActor<'_> {
    fn num_params(&self) -> usize {
        self.policy.tcn.num_params()
    }

    fn accumulate_score(&self, record: &PeriodRecord, weight: f64, grad: &mut [f64]) -> Result<()> {
        let sample = record
            .sample
            .as_ref()
            .ok_or_else(|| Error::IncompleteTrace(format!("period {} has no sampled match", record.period())))?;
        if sample.tag.fingerprint != self.fingerprint {
            return Err(Error::Stale(format!(
                "period {} was sampled under different parameters",
                record.period()
            )));
        }
        if weight == 0.0 || sample.probabilities.probs.is_empty() {
            return Ok(());
        }
        let mode = match sample.tag.dropout_seed {
            Some(dropout_seed) => Mode::Train { dropout_seed },
            None => Mode::Eval,
        };
        let (logits, cache) = self.policy.logits(&record.state, mode)?;
        let mut upstream = vec![0.0; logits.len()];
        for (id, slot) in self.policy.active_slots(&record.state)? {
            upstream[slot] += weight * bernoulli_log_prob_grad(logits[slot], sample.matched.is_marked(id));
        }
        self.policy.tcn.backward_into(self.policy.params, &cache, &upstream, grad)
    }
}

/// Value network. With one output it is shared by every period; with one
/// output per period, `V(X_k)` reads output `k - 1`. The raw output is
/// multiplied by `value_scale`.
pub struct TcnCritic<'a> {
    pub tcn: &'a Tcn,
    pub params: &'a PolicyParams,
    pub scaling: InputScaling,
    pub slots: usize,
    pub value_scale: f64,
}

impl TcnCritic<'_> {
    fn output_index(&self, state: &MarketState) -> Result<usize> {
        let dim = self.tcn.config.output_dim;
        if dim == 1 {
            return Ok(0);
        }
        let k = state.current_period - 1;
        if k >= dim {
            return Err(Error::Shape(format!("critic has {dim} outputs, state is at period {}", k + 1)));
        }
        Ok(k)
    }

    fn forward(&self, state: &MarketState) -> Result<(f64, usize, crate::tcn::ForwardCache)> {
        let policy = TcnPolicy::new(self.tcn, self.params, self.scaling, self.slots, false);
        let (out, cache) = policy.logits(state, Mode::Eval)?;
        let idx = self.output_index(state)?;
        Ok((self.value_scale * out[idx], idx, cache))
    }
}

impl ValueFunction for TcnCritic<'_> {
    fn value(&self, state: &MarketState) -> Result<f64> {
        Ok(self.forward(state)?.0)
    }
}

/// Critic that is identically zero.
pub struct ZeroValue;

impl ValueFunction for ZeroValue {
    fn value(&self, _state: &MarketState) -> Result<f64> {
        Ok(0.0)
    }
}

fn check_batch(traces: &[EpochTrace]) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::IncompleteTrace("empty batch".into()));
    }
    for trace in traces {
        trace.check_complete()?;
    }
    Ok(())
}

/// Batch mean of `sum_t weight[t] * grad log mu_t`. With `baseline`, the
/// batch mean of each period's weight is subtracted first.
fn score_gradient<P: ScorePolicy + ?Sized>(
    traces: &[EpochTrace],
    actor: &P,
    weights: &[Vec<f64>],
    baseline: bool,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; actor.num_params()];
    let horizon = weights.iter().map(Vec::len).max().unwrap_or(0);
    let mut mean = vec![0.0; horizon];
    if baseline {
        for w in weights {
            for (m, v) in mean.iter_mut().zip(w) {
                *m += v / weights.len() as f64;
            }
        }
    }
    let scale = 1.0 / traces.len() as f64;
    for (trace, w) in traces.iter().zip(weights) {
        for (t, record) in trace.records.iter().enumerate() {
            actor.accumulate_score(record, scale * (w[t] - mean[t]), &mut grad)?;
        }
    }
    Ok(grad)
}

fn returns(trace: &EpochTrace) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = trace
        .records
        .iter()
        .rev()
        .map(|r| {
            acc += r.welfare;
            acc
        })
        .collect();
    out.reverse();
    out
}

/// REINFORCE: every period's score weighted by its sampled return-to-go.
pub fn reinforce_gradient<P: ScorePolicy + ?Sized>(traces: &[EpochTrace], actor: &P) -> Result<Vec<f64>> {
    reinforce_gradient_with(traces, actor, false)
}

pub fn reinforce_gradient_with<P: ScorePolicy + ?Sized>(
    traces: &[EpochTrace],
    actor: &P,
    baseline: bool,
) -> Result<Vec<f64>> {
    check_batch(traces)?;
    let weights: Vec<Vec<f64>> = traces.iter().map(returns).collect();
    score_gradient(traces, actor, &weights, baseline)
}

/// `sum_{l=t}^{t+k-1} v_l + V(X_{t+k})`, with `V := 0` past the horizon.
pub fn actor_critic_targets<V: ValueFunction + ?Sized>(trace: &EpochTrace, critic: &V, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParams("lookahead k must be at least 1".into()));
    }
    let v = trace.welfare_series();
    let horizon = v.len();
    (0..horizon)
        .map(|t| {
            let end = (t + k).min(horizon);
            let sampled: f64 = v[t..end].iter().sum();
            let bootstrap = if t + k < horizon {
                critic.value(&trace.records[t + k].state)?
            } else {
                0.0
            };
            Ok(sampled + bootstrap)
        })
        .collect()
}

/// AC-k: like REINFORCE, but each period is weighted by k sampled rewards
/// plus the critic's value of the state k periods later.
pub fn actor_critic_gradient<P, V>(traces: &[EpochTrace], actor: &P, critic: &V, k: usize) -> Result<Vec<f64>>
where
    P: ScorePolicy + ?Sized,
    V: ValueFunction + ?Sized,
{
    actor_critic_gradient_with(traces, actor, critic, k, false)
}

pub fn actor_critic_gradient_with<P, V>(
    traces: &[EpochTrace],
    actor: &P,
    critic: &V,
    k: usize,
    baseline: bool,
) -> Result<Vec<f64>>
where
    P: ScorePolicy + ?Sized,
    V: ValueFunction + ?Sized,
{
    check_batch(traces)?;
    let weights = traces
        .iter()
        .map(|t| actor_critic_targets(t, critic, k))
        .collect::<Result<Vec<_>>>()?;
    score_gradient(traces, actor, &weights, baseline)
}

/// Batch mean of `sum_k (V(X_k) - G_k)^2` and its gradient in the critic's
/// parameters.
pub fn critic_loss_gradient(traces: &[EpochTrace], critic: &TcnCritic<'_>) -> Result<(f64, Vec<f64>)> {
    check_batch(traces)?;
    let mut grad = vec![0.0; critic.tcn.num_params()];
    let mut loss = 0.0;
    let scale = 1.0 / traces.len() as f64;
    for trace in traces {
        for (record, target) in trace.records.iter().zip(returns(trace)) {
            let (value, idx, cache) = critic.forward(&record.state)?;
            let err = value - target;
            loss += scale * err * err;
            let mut upstream = vec![0.0; critic.tcn.config.output_dim];
            upstream[idx] = scale * 2.0 * err * critic.value_scale;
            critic.tcn.backward_into(critic.params, &cache, &upstream, &mut grad)?;
        }
    }
    Ok((loss, grad))
}

/// One ADAM descent step on the critic's squared error. Returns the loss
/// before the step.
pub fn critic_update(traces: &[EpochTrace], critic: &mut CriticState) -> Result<f64> {
    let (loss, grad) = critic_loss_gradient(traces, &critic.view())?;
    adam_step(&mut critic.params.values, &grad, &mut critic.adam, Direction::Descent)?;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticState {
    pub tcn_config: TcnConfig,
    pub params: PolicyParams,
    pub adam: AdamState,
    pub value_scale: f64,
    pub scaling: InputScaling,
    pub slots: usize,
    #[serde(skip)]
    tcn: Option<Tcn>,
}

impl CriticState {
    pub fn new(
        tcn_config: TcnConfig,
        params: PolicyParams,
        learning_rate: f64,
        value_scale: f64,
        scaling: InputScaling,
        slots: usize,
    ) -> Result<Self> {
        let tcn = Tcn::new(tcn_config.clone())?;
        if tcn.num_params() != params.values.len() {
            return Err(Error::Shape("critic parameters do not fit the network".into()));
        }
        Ok(Self {
            adam: AdamState::with_learning_rate(params.values.len(), learning_rate),
            tcn_config,
            params,
            value_scale,
            scaling,
            slots,
            tcn: Some(tcn),
        })
    }

    fn restore(&mut self) -> Result<()> {
        let tcn = Tcn::new(self.tcn_config.clone())?;
        if tcn.num_params() != self.params.values.len() || self.adam.first_moment.len() != self.params.values.len() {
            return Err(Error::Shape("critic parameters do not fit the network".into()));
        }
        self.tcn = Some(tcn);
        Ok(())
    }

    pub fn view(&self) -> TcnCritic<'_> {
        TcnCritic {
            tcn: self.tcn.as_ref().expect("critic network restored"),
            params: &self.params,
            scaling: self.scaling,
            slots: self.slots,
            value_scale: self.value_scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// REINFORCE with return-to-go weights.
    La1,
    /// AC-k actor-critic.
    La2,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::La1 => "la1",
            Algorithm::La2 => "la2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "la1" => Ok(Algorithm::La1),
            "la2" => Ok(Algorithm::La2),
            other => Err(Error::InvalidParams(format!("unknown learning algorithm '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    /// Lookahead of the actor-critic; unused by LA1.
    pub lookahead: usize,
    pub seed: u64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    /// Critic outputs are multiplied by this; `None` derives it from the scenario.
    pub value_scale: Option<f64>,
    /// Subtract the per-period batch-mean weight before the actor step.
    pub baseline: bool,
    /// Half-width of the uniform initialization of the actor head.
    pub head_init: f64,
    pub network: TcnHyper,
    /// Critic architecture; `None` reuses `network`.
    pub critic_network: Option<TcnHyper>,
    /// One critic output per period instead of a single shared one.
    pub critic_per_period: bool,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        Self {
            algorithm,
            batch_size: match algorithm {
                Algorithm::La1 => 80,
                Algorithm::La2 => 20,
            },
            lookahead: 1,
            seed,
            actor_learning_rate: 0.75,
            critic_learning_rate: 1e-3,
            value_scale: None,
            baseline: false,
            head_init: 0.05,
            network: TcnHyper::default(),
            critic_network: None,
            critic_per_period: false,
        }
    }

    /// Default epoch budgets: 800 for LA1, 200 for LA2.
    pub fn default_epochs(&self) -> usize {
        match self.algorithm {
            Algorithm::La1 => 800,
            Algorithm::La2 => 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be at least 1".into()));
        }
        if self.lookahead == 0 {
            return Err(Error::InvalidParams("lookahead k must be at least 1".into()));
        }
        for (name, v) in [
            ("actor learning rate", self.actor_learning_rate),
            ("critic learning rate", self.critic_learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} {v}")));
            }
        }
        if let Some(s) = self.value_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParams(format!("value scale {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: u64,
    pub welfare: f64,
    /// Mean welfare of all training epochs so far.
    pub running_avg: f64,
}

/// Rollout randomness for one epoch; depends only on the seed and the epoch.
pub fn epoch_rng(seed: u64, epoch: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng
}

const EVAL_SALT: u64 = 0x5eed_e7a1_0000_0001;
const CRITIC_SALT: u64 = 0x5eed_c417_0000_0002;

/// Largest total mean load times the grid price: an upper bound on the
/// expected welfare of an epoch.
pub fn default_value_scale(scenario: &Scenario) -> f64 {
    let c = scenario.params().grid_price;
    let load = scenario
        .profiles()
        .iter()
        .map(|p| p.mean_load.iter().sum::<f64>())
        .fold(0.0, f64::max);
    if load > 0.0 {
        c * load
    } else {
        1.0
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub version: u32,
    pub scenario: String,
    pub config: TrainConfig,
    pub epochs_done: u64,
    pub actor_config: TcnConfig,
    pub actor: PolicyParams,
    pub actor_adam: AdamState,
    pub scaling: InputScaling,
    pub critic: Option<CriticState>,
    pub curve: Vec<CurvePoint>,
}

pub const TRAIN_CHECKPOINT_VERSION: u32 = 1;

impl TrainCheckpoint {
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut ck: TrainCheckpoint = serde_json::from_reader(input)?;
        if ck.version != TRAIN_CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} (expected {TRAIN_CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        if let Some(c) = ck.critic.as_mut() {
            c.restore()?;
        }
        Ok(ck)
    }
}

pub struct Trainer {
    pub scenario: Scenario,
    pub config: TrainConfig,
    pub actor: Tcn,
    pub params: PolicyParams,
    pub actor_adam: AdamState,
    pub critic: Option<CriticState>,
    pub scaling: InputScaling,
    pub slots: usize,
    pub epochs_done: u64,
    pub curve: Vec<CurvePoint>,
    buffer: Vec<EpochTrace>,
}

impl Trainer {
    pub fn new(scenario: Scenario, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = scenario.params();
        let slots = params.max_arrivals;
        let horizon = params.horizon;
        let scaling = InputScaling::for_scenario(&scenario);
        let inputs = 3 * slots + 1;
        let actor = Tcn::new(TcnConfig::with_io(&config.network, inputs, slots * horizon))?;
        let mut init_rng = SimRng::seed_from_u64(config.seed);
        let actor_params = actor.init_params(&mut init_rng, config.head_init);
        let critic = match config.algorithm {
            Algorithm::La1 => None,
            Algorithm::La2 => {
                let hyper = config.critic_network.as_ref().unwrap_or(&config.network);
                let outputs = if config.critic_per_period { horizon } else { 1 };
                let cfg = TcnConfig::with_io(hyper, inputs, outputs);
                let tcn = Tcn::new(cfg.clone())?;
                let mut rng = SimRng::seed_from_u64(config.seed ^ CRITIC_SALT);
                let mut p = tcn.init_params(&mut rng, 0.0);
                tcn.zero_head(&mut p);
                let value_scale = config.value_scale.unwrap_or_else(|| default_value_scale(&scenario));
                Some(CriticState::new(cfg, p, config.critic_learning_rate, value_scale, scaling, slots)?)
            }
        };
        Ok(Self {
            actor_adam: AdamState::with_learning_rate(actor.num_params(), config.actor_learning_rate),
            scenario,
            config,
            actor,
            params: actor_params,
            critic,
            scaling,
            slots,
            epochs_done: 0,
            curve: Vec::new(),
            buffer: Vec::new(),
        })
    }

    pub fn from_checkpoint(scenario: Scenario, ck: TrainCheckpoint) -> Result<Self> {
        ck.config.validate()?;
        let actor = Tcn::new(ck.actor_config)?;
        if actor.num_params() != ck.actor.values.len() || ck.actor_adam.first_moment.len() != ck.actor.values.len() {
            return Err(Error::Shape("checkpointed actor does not fit its network".into()));
        }
        let params = scenario.params();
        if actor.config.input_channels != 3 * params.max_arrivals + 1
            || actor.config.output_dim != params.max_arrivals * params.horizon
        {
            return Err(Error::Shape(format!(
                "checkpoint network does not match scenario '{}'",
                scenario.name()
            )));
        }
        let mut critic = ck.critic;
        if let Some(c) = critic.as_mut() {
            c.restore()?;
        }
        if (ck.config.algorithm == Algorithm::La2) != critic.is_some() {
            return Err(Error::Config("checkpoint critic does not match its algorithm".into()));
        }
        Ok(Self {
            scenario,
            config: ck.config,
            actor,
            params: ck.actor,
            actor_adam: ck.actor_adam,
            critic,
            scaling: ck.scaling,
            slots: params.max_arrivals,
            epochs_done: ck.epochs_done,
            curve: ck.curve,
            buffer: Vec::new(),
        })
    }

    /// Snapshot at the current epoch. Traces of a partially filled batch are
    /// not included, so checkpoint at batch boundaries for exact resumption.
    pub fn checkpoint(&self) -> TrainCheckpoint {
        TrainCheckpoint {
            version: TRAIN_CHECKPOINT_VERSION,
            scenario: self.scenario.name().to_string(),
            config: self.config.clone(),
            epochs_done: self.epochs_done,
            actor_config: self.actor.config.clone(),
            actor: self.params.clone(),
            actor_adam: self.actor_adam.clone(),
            scaling: self.scaling,
            critic: self.critic.clone(),
            curve: self.curve.clone(),
        }
    }

    pub fn pending(&self) -> usize {
        self.buffer.len()
    }

    fn tcn_policy(&self, train: bool) -> TcnPolicy<'_> {
        TcnPolicy::new(&self.actor, &self.params, self.scaling, self.slots, train)
    }

    /// The learned policy with frozen parameters; `train` enables dropout.
    pub fn policy(&self, train: bool) -> ComposedPolicy<TcnPolicy<'_>> {
        compose_policy(self.config.algorithm.as_str(), self.tcn_policy(train))
    }

    /// Match probabilities currently assigned to every active customer of `state`.
    pub fn probabilities(&self, state: &MarketState) -> Result<Vec<f64>> {
        let policy = self.tcn_policy(false);
        let (logits, _) = policy.logits(state, Mode::Eval)?;
        Ok(policy
            .active_slots(state)?
            .into_iter()
            .map(|(_, s)| sigmoid(logits[s]))
            .collect())
    }

    /// Runs `epochs` more training epochs. The batch is applied whenever it
    /// fills; a final partial batch is applied when `flush` is set.
    pub fn train_epochs(&mut self, epochs: u64, flush: bool) -> Result<&[CurvePoint]> {
        let start = self.curve.len();
        for _ in 0..epochs {
            let epoch = self.epochs_done + 1;
            let realization = self.scenario.draw(epoch);
            let mut rng = epoch_rng(self.config.seed, epoch);
            let trace = {
                let mut policy = self.policy(true);
                run_epoch(&realization, &mut policy, &mut rng)?
            };
            trace.check_invariants()?;
            let welfare = epoch_welfare(&trace)?;
            let n = self.curve.len() as f64;
            let prev = self.curve.last().map_or(0.0, |p| p.running_avg);
            self.curve.push(CurvePoint {
                epoch,
                welfare,
                running_avg: (prev * n + welfare) / (n + 1.0),
            });
            self.epochs_done = epoch;
            self.buffer.push(trace);
            if self.buffer.len() >= self.config.batch_size {
                self.update()?;
            }
        }
        if flush && !self.buffer.is_empty() {
            self.update()?;
        }
        Ok(&self.curve[start..])
    }

    /// Applies the buffered batch: actor ascent, then (LA2) critic descent.
    fn update(&mut self) -> Result<()> {
        let batch = std::mem::take(&mut self.buffer);
        let grad = {
            let actor = TcnActor::new(self.tcn_policy(true));
            match (&self.config.algorithm, &self.critic) {
                (Algorithm::La1, _) => reinforce_gradient_with(&batch, &actor, self.config.baseline)?,
                (Algorithm::La2, Some(critic)) => actor_critic_gradient_with(
                    &batch,
                    &actor,
                    &critic.view(),
                    self.config.lookahead,
                    self.config.baseline,
                )?,
                (Algorithm::La2, None) => return Err(Error::Config("actor-critic without a critic".into())),
            }
        };
        adam_step(&mut self.params.values, &grad, &mut self.actor_adam, Direction::Ascent)?;
        if let Some(critic) = self.critic.as_mut() {
            critic_update(&batch, critic)?;
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite {
                index: self.params.values.iter().position(|v| !v.is_finite()).unwrap_or(0),
                value: f64::NAN,
            });
        }
        Ok(())
    }

    /// Welfare of the frozen policy (no dropout) on epochs `first..first + count`.
    pub fn evaluate(&self, first: u64, count: u64) -> Result<Vec<f64>> {
        let mut policy = self.policy(false);
        (first..first + count)
            .map(|epoch| {
                let realization = self.scenario.draw(epoch);
                let mut rng = epoch_rng(self.config.seed ^ EVAL_SALT, epoch);
                let trace = run_epoch(&realization, &mut policy, &mut rng)?;
                trace.check_invariants()?;
                epoch_welfare(&trace)
            })
            .collect()
    }
}

/// Trains from scratch for `epochs` epochs and returns the trainer and its curve.
pub fn train(scenario: Scenario, config: TrainConfig, epochs: u64) -> Result<Trainer> {
    let mut trainer = Trainer::new(scenario, config)?;
    trainer.train_epochs(epochs, true)?;
    Ok(trainer)
}

/// Writes the curve as JSON lines: `{"epoch":..,"welfare":..,"running_avg":..}`.
pub fn write_curve<W: Write>(curve: &[CurvePoint], mut out: W) -> Result<()> {
    for p in curve {
        serde_json::to_writer(&mut out, p)?;
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::presets;

    fn trace_with(v: &[f64]) -> EpochTrace {
        let scenario = presets::scenario(3).unwrap();
        let realization = scenario.draw(1);
        let mut rng = epoch_rng(1, 1);
        let mut trace = run_epoch(&realization, &mut crate::policies::Heuristic::Ma, &mut rng).unwrap();
        for (r, w) in trace.records.iter_mut().zip(v) {
            r.welfare = *w;
        }
        trace.records.truncate(v.len());
        trace
    }

    #[test]
    fn return_to_go_sums_the_tail() {
        let t = trace_with(&[1.0, 2.0, 3.0]);
        assert_eq!(return_to_go(&t, 1).unwrap(), 6.0);
        assert_eq!(return_to_go(&t, 2).unwrap(), 5.0);
        assert_eq!(return_to_go(&t, 3).unwrap(), 3.0);
        assert!(return_to_go(&t, 0).is_err());
        assert!(return_to_go(&t, 4).is_err());
    }

    #[test]
    fn targets_bootstrap_only_inside_horizon() {
        struct Const(f64);
        impl ValueFunction for Const {
            fn value(&self, _: &MarketState) -> Result<f64> {
                Ok(self.0)
            }
        }
        let t = trace_with(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(actor_critic_targets(&t, &Const(10.0), 1).unwrap(), vec![11.0, 12.0, 13.0, 4.0]);
        assert_eq!(actor_critic_targets(&t, &Const(10.0), 2).unwrap(), vec![13.0, 15.0, 7.0, 4.0]);
        assert_eq!(actor_critic_targets(&t, &Const(10.0), 4).unwrap(), vec![10.0, 9.0, 7.0, 4.0]);
        assert!(actor_critic_targets(&t, &Const(0.0), 0).is_err());
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("LA2".parse::<Algorithm>().unwrap(), Algorithm::La2);
        assert!("ppo".parse::<Algorithm>().is_err());
        assert_eq!(TrainConfig::new(Algorithm::La1, 0).batch_size, 80);
        assert_eq!(TrainConfig::new(Algorithm::La2, 0).batch_size, 20);
    }

    #[test]
    fn zero_epochs_leave_params_alone() {
        let scenario = presets::scenario(3).unwrap();
        let mut trainer = Trainer::new(scenario, TrainConfig::new(Algorithm::La2, 4)).unwrap();
        let before = trainer.params.clone();
        assert!(trainer.train_epochs(0, true).unwrap().is_empty());
        assert_eq!(trainer.params, before);
    }
}
