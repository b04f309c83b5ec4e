//! Temporal convolutional network for the learnable match probabilities.
//!
//! Each block is two causal dilated convolutions, each followed by
//! per-step normalization, a rectifier and spatial dropout, plus a residual
//! connection (1x1 projection when channel counts differ) and a final
//! rectifier. A 1x1 head reads the last step of the top block.

pub mod adam;
pub mod layers;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CustomerId, MarketState};
use crate::policies::{MatchProbabilities, MatchProbabilitySource, SampleTag, SimRng};
use crate::scenario::Scenario;

pub use adam::{adam_step, AdamState, Direction};
use layers::{NormCache, Seq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DilationSchedule {
    /// Block `l` (0-based) uses `base^l`.
    Geometric,
    /// Block `l` uses `1 + base * l`.
    Additive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub num_blocks: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub dilation_base: usize,
    pub dilation_schedule: DilationSchedule,
    pub normalization: bool,
    pub input_channels: usize,
    pub output_dim: usize,
}

/// Architecture hyperparameters shared by the actor and the critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcnHyper {
    pub num_blocks: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub dilation_base: usize,
    pub dilation_schedule: DilationSchedule,
    pub normalization: bool,
}

impl Default for TcnHyper {
    /// 3 blocks, 4 filters, kernel 3, dropout 0.1, dilation base 4.
    fn default() -> Self {
        Self {
            num_blocks: 3,
            filters: 4,
            kernel_size: 3,
            dropout_rate: 0.1,
            dilation_base: 4,
            dilation_schedule: DilationSchedule::Geometric,
            normalization: true,
        }
    }
}

impl TcnConfig {
    pub fn with_io(hyper: &TcnHyper, input_channels: usize, output_dim: usize) -> Self {
        Self {
            num_blocks: hyper.num_blocks,
            filters: hyper.filters,
            kernel_size: hyper.kernel_size,
            dropout_rate: hyper.dropout_rate,
            dilation_base: hyper.dilation_base,
            dilation_schedule: hyper.dilation_schedule,
            normalization: hyper.normalization,
            input_channels,
            output_dim,
        }
    }

    /// Policy network for a market with `max_arrivals` slots per period:
    /// `3 * max_arrivals + 1` inputs, one output per (period, slot).
    pub fn policy(max_arrivals: usize, horizon: usize) -> Self {
        Self::with_io(&TcnHyper::default(), 3 * max_arrivals + 1, max_arrivals * horizon)
    }

    /// Same trunk with a single linear output.
    pub fn critic(max_arrivals: usize) -> Self {
        Self::with_io(&TcnHyper::default(), 3 * max_arrivals + 1, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0
            || self.filters == 0
            || self.kernel_size == 0
            || self.dilation_base == 0
            || self.input_channels == 0
            || self.output_dim == 0
        {
            return Err(Error::Shape("every TCN dimension must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Shape(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn dilations(&self) -> Vec<usize> {
        (0..self.num_blocks)
            .map(|l| match self.dilation_schedule {
                DilationSchedule::Geometric => self.dilation_base.pow(l as u32),
                DilationSchedule::Additive => 1 + self.dilation_base * l,
            })
            .collect()
    }

    /// Number of steps (including the current one) that can influence an output.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations().iter().map(|d| 2 * (self.kernel_size - 1) * d).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ConvSlot {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
    k: usize,
}

impl ConvSlot {
    fn alloc(next: &mut usize, inp: usize, out: usize, k: usize) -> Self {
        let w = *next;
        let b = w + out * inp * k;
        *next = b + out;
        Self { w, b, inp, out, k }
    }

    fn weights<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        (
            &p[self.w..self.w + self.out * self.inp * self.k],
            &p[self.b..self.b + self.out],
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
struct NormSlot {
    gain: usize,
    shift: usize,
    ch: usize,
}

impl NormSlot {
    fn alloc(next: &mut usize, ch: usize) -> Self {
        let gain = *next;
        *next += 2 * ch;
        Self { gain, shift: gain + ch, ch }
    }

    fn weights<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        (&p[self.gain..self.gain + self.ch], &p[self.shift..self.shift + self.ch])
    }
}

#[derive(Clone, Debug, PartialEq)]
struct BlockSlot {
    dilation: usize,
    conv1: ConvSlot,
    norm1: Option<NormSlot>,
    conv2: ConvSlot,
    norm2: Option<NormSlot>,
    proj: Option<ConvSlot>,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    blocks: Vec<BlockSlot>,
    head: ConvSlot,
    len: usize,
}

impl Layout {
    fn new(cfg: &TcnConfig) -> Self {
        let mut next = 0;
        let mut inp = cfg.input_channels;
        let f = cfg.filters;
        let mut blocks = Vec::with_capacity(cfg.num_blocks);
        for dilation in cfg.dilations() {
            let conv1 = ConvSlot::alloc(&mut next, inp, f, cfg.kernel_size);
            let norm1 = cfg.normalization.then(|| NormSlot::alloc(&mut next, f));
            let conv2 = ConvSlot::alloc(&mut next, f, f, cfg.kernel_size);
            let norm2 = cfg.normalization.then(|| NormSlot::alloc(&mut next, f));
            let proj = (inp != f).then(|| ConvSlot::alloc(&mut next, inp, f, 1));
            blocks.push(BlockSlot {
                dilation,
                conv1,
                norm1,
                conv2,
                norm2,
                proj,
            });
            inp = f;
        }
        let head = ConvSlot::alloc(&mut next, f, cfg.output_dim, 1);
        Self { blocks, head, len: next }
    }
}

/// Flattened network weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyParams {
    pub values: Vec<f64>,
}

impl PolicyParams {
    /// Hash of the exact bit patterns; identifies a parameter snapshot.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.values.len().hash(&mut h);
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from the seed.
    Train { dropout_seed: u64 },
    Eval,
}

#[derive(Clone, Debug)]
struct SubCache {
    input: Seq,
    norm: Option<NormCache>,
    relu_in: Seq,
    scale: Vec<f64>,
}

#[derive(Clone, Debug)]
struct BlockCache {
    input: Seq,
    first: SubCache,
    second: SubCache,
    sum: Seq,
}

/// Activations kept by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    fingerprint: u64,
    blocks: Vec<BlockCache>,
    hidden: Seq,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.hidden.len
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.len == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tcn {
    pub config: TcnConfig,
    layout: Layout,
}

impl Tcn {
    pub fn new(config: TcnConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self { config, layout })
    }

    pub fn num_params(&self) -> usize {
        self.layout.len
    }

    pub fn zero_params(&self) -> PolicyParams {
        let mut values = vec![0.0; self.layout.len];
        for b in &self.layout.blocks {
            for n in b.norm1.iter().chain(&b.norm2) {
                values[n.gain..n.gain + n.ch].fill(1.0);
            }
        }
        PolicyParams { values }
    }

    /// Uniform `±1/sqrt(fan_in)` convolution weights, unit gains, zero biases,
    /// and a head within `±head_scale` so initial outputs stay near zero.
    pub fn init_params<R: Rng>(&self, rng: &mut R, head_scale: f64) -> PolicyParams {
        let mut params = self.zero_params();
        let p = &mut params.values;
        let mut fill = |slot: &ConvSlot, scale: f64| {
            for v in &mut p[slot.w..slot.w + slot.out * slot.inp * slot.k] {
                *v = rng.random_range(-scale..=scale);
            }
        };
        for b in &self.layout.blocks {
            for conv in [&b.conv1, &b.conv2].into_iter().chain(&b.proj) {
                fill(conv, 1.0 / ((conv.inp * conv.k) as f64).sqrt());
            }
        }
        if head_scale > 0.0 {
            fill(&self.layout.head, head_scale);
        }
        params
    }

    /// Zeroes the output head (weights and bias).
    pub fn zero_head(&self, params: &mut PolicyParams) {
        let h = &self.layout.head;
        params.values[h.w..h.b + h.out].fill(0.0);
    }

    fn check(&self, params: &PolicyParams, input: &Seq) -> Result<()> {
        if params.values.len() != self.layout.len {
            return Err(Error::Shape(format!(
                "{} parameters supplied, network has {}",
                params.values.len(),
                self.layout.len
            )));
        }
        if input.channels != self.config.input_channels || input.len == 0 {
            return Err(Error::Shape(format!(
                "input of {} steps x {} channels, network expects >= 1 step x {}",
                input.len, input.channels, self.config.input_channels
            )));
        }
        Ok(())
    }

    fn dropout_scales(&self, mode: Mode) -> Vec<[Vec<f64>; 2]> {
        let f = self.config.filters;
        let p = self.config.dropout_rate;
        match mode {
            Mode::Train { dropout_seed } if p > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
                let mut draw = || -> Vec<f64> {
                    (0..f)
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                        .collect()
                };
                (0..self.config.num_blocks).map(|_| [draw(), draw()]).collect()
            }
            _ => (0..self.config.num_blocks)
                .map(|_| [vec![1.0; f], vec![1.0; f]])
                .collect(),
        }
    }

    fn sublayer(
        p: &[f64],
        x: &Seq,
        conv: &ConvSlot,
        norm: &Option<NormSlot>,
        dilation: usize,
        scale: Vec<f64>,
    ) -> (Seq, SubCache) {
        let (w, b) = conv.weights(p);
        let conv_out = layers::conv_forward(x, w, b, conv.out, conv.k, dilation);
        let (relu_in, norm_cache) = match norm {
            Some(n) => {
                let (gain, shift) = n.weights(p);
                let (y, cache) = layers::norm_forward(&conv_out, gain, shift);
                (y, Some(cache))
            }
            None => (conv_out, None),
        };
        let out = layers::channel_scale(&layers::relu_forward(&relu_in), &scale);
        (
            out,
            SubCache {
                input: x.clone(),
                norm: norm_cache,
                relu_in,
                scale,
            },
        )
    }

    fn trunk(&self, params: &PolicyParams, input: &Seq, mode: Mode) -> Result<ForwardCache> {
        self.check(params, input)?;
        let p = &params.values;
        let mut x = input.clone();
        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for (slot, [s1, s2]) in self.layout.blocks.iter().zip(self.dropout_scales(mode)) {
            let (h1, first) = Self::sublayer(p, &x, &slot.conv1, &slot.norm1, slot.dilation, s1);
            let (h2, second) = Self::sublayer(p, &h1, &slot.conv2, &slot.norm2, slot.dilation, s2);
            let mut sum = match &slot.proj {
                Some(proj) => {
                    let (w, b) = proj.weights(p);
                    layers::conv_forward(&x, w, b, proj.out, 1, 1)
                }
                None => x.clone(),
            };
            sum.add_assign(&h2);
            let out = layers::relu_forward(&sum);
            blocks.push(BlockCache {
                input: x,
                first,
                second,
                sum,
            });
            x = out;
        }
        Ok(ForwardCache {
            fingerprint: params.fingerprint(),
            blocks,
            hidden: x,
        })
    }

    fn head_at(&self, p: &[f64], hidden: &Seq, t: usize) -> Vec<f64> {
        let h = &self.layout.head;
        let (w, b) = h.weights(p);
        let row = hidden.row(t);
        (0..h.out)
            .map(|o| b[o] + w[o * h.inp..(o + 1) * h.inp].iter().zip(row).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Raw head outputs at the final step.
    pub fn forward(&self, params: &PolicyParams, input: &Seq, mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
        let cache = self.trunk(params, input, mode)?;
        let out = self.head_at(&params.values, &cache.hidden, cache.hidden.len - 1);
        Ok((out, cache))
    }

    /// Raw head outputs at every step.
    pub fn forward_all(&self, params: &PolicyParams, input: &Seq, mode: Mode) -> Result<Vec<Vec<f64>>> {
        let cache = self.trunk(params, input, mode)?;
        Ok((0..cache.hidden.len)
            .map(|t| self.head_at(&params.values, &cache.hidden, t))
            .collect())
    }

    /// Gradient of `upstream . outputs` with respect to every parameter.
    pub fn backward(&self, params: &PolicyParams, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.layout.len];
        self.backward_into(params, cache, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient of `upstream . outputs` into `grad`.
    pub fn backward_into(
        &self,
        params: &PolicyParams,
        cache: &ForwardCache,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        if cache.fingerprint != params.fingerprint() {
            return Err(Error::Stale("forward cache was produced by different parameters".into()));
        }
        if upstream.len() != self.config.output_dim || grad.len() != self.layout.len {
            return Err(Error::Shape(format!(
                "upstream of {} for {} outputs, gradient of {} for {} parameters",
                upstream.len(),
                self.config.output_dim,
                grad.len(),
                self.layout.len
            )));
        }
        let p = &params.values;
        let head = &self.layout.head;
        let last = cache.hidden.len - 1;
        let mut dx = Seq::zeros(cache.hidden.len, self.config.filters);
        {
            let row = cache.hidden.row(last);
            let (w, _) = head.weights(p);
            for (o, &g) in upstream.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[head.b + o] += g;
                for c in 0..head.inp {
                    grad[head.w + o * head.inp + c] += g * row[c];
                    *dx.at_mut(last, c) += g * w[o * head.inp + c];
                }
            }
        }

        for (slot, bc) in self.layout.blocks.iter().zip(&cache.blocks).rev() {
            let dsum = layers::relu_backward(&bc.sum, &dx);
            let dh1 = Self::sublayer_backward(p, grad, &slot.conv2, &slot.norm2, slot.dilation, &bc.second, &dsum);
            let mut dinput = Self::sublayer_backward(p, grad, &slot.conv1, &slot.norm1, slot.dilation, &bc.first, &dh1);
            match &slot.proj {
                Some(proj) => {
                    let (w, _) = proj.weights(p);
                    let (dw, db) = split_conv_grad(grad, proj);
                    let dres = layers::conv_backward(&bc.input, w, &dsum, 1, 1, dw, db);
                    dinput.add_assign(&dres);
                }
                None => dinput.add_assign(&dsum),
            }
            dx = dinput;
        }
        Ok(())
    }

    fn sublayer_backward(
        p: &[f64],
        grad: &mut [f64],
        conv: &ConvSlot,
        norm: &Option<NormSlot>,
        dilation: usize,
        cache: &SubCache,
        dout: &Seq,
    ) -> Seq {
        let drelu = layers::relu_backward(&cache.relu_in, &layers::channel_scale(dout, &cache.scale));
        let dconv = match (norm, &cache.norm) {
            (Some(n), Some(nc)) => {
                let (gain, _) = n.weights(p);
                let (dgain, dshift) = grad[n.gain..n.gain + 2 * n.ch].split_at_mut(n.ch);
                layers::norm_backward(nc, gain, &drelu, dgain, dshift)
            }
            _ => drelu,
        };
        let (w, _) = conv.weights(p);
        let (dw, db) = split_conv_grad(grad, conv);
        layers::conv_backward(&cache.input, w, &dconv, conv.k, dilation, dw, db)
    }
}

fn split_conv_grad<'a>(grad: &'a mut [f64], slot: &ConvSlot) -> (&'a mut [f64], &'a mut [f64]) {
    let region = &mut grad[slot.w..slot.b + slot.out];
    region.split_at_mut(slot.out * slot.inp * slot.k)
}

/// Raw network input for a state: one row per elapsed period holding, per
/// arrival slot, the requested load, the deadline and the still-unserved
/// load, followed by the renewable generation. Empty slots are zero.
pub fn encode_input(state: &MarketState, slots: usize) -> Result<Seq> {
    let width = 3 * slots + 1;
    let mut seq = Seq::zeros(state.history.len(), width);
    for (t, snap) in state.history.iter().enumerate() {
        if snap.arrivals.len() > slots {
            return Err(Error::Capacity {
                period: snap.period,
                count: snap.arrivals.len(),
                capacity: slots,
            });
        }
        for (slot, id) in snap.arrivals.iter().enumerate() {
            let c = state
                .customer(*id)
                .ok_or_else(|| Error::Shape(format!("customer {id} missing from state")))?;
            *seq.at_mut(t, slot) = c.spec.load;
            *seq.at_mut(t, slots + slot) = c.spec.deadline as f64;
            *seq.at_mut(t, 2 * slots + slot) = c.unserved;
        }
        *seq.at_mut(t, 3 * slots) = snap.renewable;
    }
    Ok(seq)
}

/// Output index of a customer: `(arrival - 1) * slots + position within its arrival batch`.
pub fn output_slot(state: &MarketState, id: CustomerId, slots: usize) -> Option<usize> {
    let c = state.customer(id)?;
    let snap = state.history.get(c.spec.arrival - 1)?;
    let pos = snap.arrivals.iter().position(|a| *a == id)?;
    Some((c.spec.arrival - 1) * slots + pos)
}

/// Divides energies by a load scale and deadlines by a period scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub energy: f64,
    pub period: f64,
}

impl InputScaling {
    pub const IDENTITY: InputScaling = InputScaling { energy: 1.0, period: 1.0 };

    /// Energy scale is the largest per-customer mean load or mean generation.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let energy = scenario
            .profiles()
            .iter()
            .flat_map(|p| {
                let per_customer = p.mean_load.iter().map(move |l| l / p.arrivals_per_period as f64);
                per_customer.chain(p.mean_generation.iter().copied())
            })
            .fold(0.0, f64::max);
        Self {
            energy: if energy > 0.0 { energy } else { 1.0 },
            period: scenario.params().horizon as f64,
        }
    }

    pub fn apply(&self, seq: &mut Seq, slots: usize) {
        for t in 0..seq.len {
            for c in 0..seq.channels {
                let v = seq.at_mut(t, c);
                if c >= slots && c < 2 * slots {
                    *v /= self.period;
                } else {
                    *v /= self.energy;
                }
            }
        }
    }
}

/// Probabilities are kept this far away from 0 and 1.
pub const PROBABILITY_FLOOR: f64 = 1e-9;

/// Ties a network and a parameter snapshot to the market: encodes states and
/// decodes per-customer probabilities.
#[derive(Clone, Debug)]
pub struct TcnPolicy<'a> {
    pub tcn: &'a Tcn,
    pub params: &'a PolicyParams,
    pub scaling: InputScaling,
    pub slots: usize,
    pub train: bool,
    fingerprint: u64,
}

impl<'a> TcnPolicy<'a> {
    pub fn new(tcn: &'a Tcn, params: &'a PolicyParams, scaling: InputScaling, slots: usize, train: bool) -> Self {
        Self {
            tcn,
            params,
            scaling,
            slots,
            train,
            fingerprint: params.fingerprint(),
        }
    }

    pub fn input(&self, state: &MarketState) -> Result<Seq> {
        let mut seq = encode_input(state, self.slots)?;
        self.scaling.apply(&mut seq, self.slots);
        Ok(seq)
    }

    /// Head logits for `state`, with the forward cache.
    pub fn logits(&self, state: &MarketState, mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
        let input = self.input(state)?;
        self.tcn.forward(self.params, &input, mode)
    }

    /// (customer, output index) for every active customer.
    pub fn active_slots(&self, state: &MarketState) -> Result<Vec<(CustomerId, usize)>> {
        state
            .active_ids()
            .into_iter()
            .map(|id| {
                output_slot(state, id, self.slots)
                    .filter(|&s| s < self.tcn.config.output_dim)
                    .map(|s| (id, s))
                    .ok_or_else(|| Error::Shape(format!("customer {id} has no output slot")))
            })
            .collect()
    }

    pub fn decode(&self, state: &MarketState, logits: &[f64]) -> Result<MatchProbabilities> {
        let probs = self
            .active_slots(state)?
            .into_iter()
            .map(|(id, s)| {
                let p = layers::sigmoid(logits[s]).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
                (id, p)
            })
            .collect();
        MatchProbabilities::new(probs)
    }
}

impl MatchProbabilitySource for TcnPolicy<'_> {
    fn probabilities(&mut self, state: &MarketState, rng: &mut SimRng) -> Result<(MatchProbabilities, SampleTag)> {
        let mut tag = SampleTag {
            fingerprint: self.fingerprint,
            dropout_seed: None,
        };
        if state.active().next().is_none() {
            return Ok((MatchProbabilities::default(), tag));
        }
        let mode = if self.train {
            let seed = rng.random::<u64>();
            tag.dropout_seed = Some(seed);
            Mode::Train { dropout_seed: seed }
        } else {
            Mode::Eval
        };
        let (logits, _) = self.logits(state, mode)?;
        Ok((self.decode(state, &logits)?, tag))
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Network config plus flattened parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCheckpoint {
    pub version: u32,
    pub config: TcnConfig,
    pub params: PolicyParams,
}

impl ParamCheckpoint {
    pub fn new(config: TcnConfig, params: PolicyParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            params,
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let ck: ParamCheckpoint = serde_json::from_reader(input)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let tcn = Tcn::new(self.config.clone())?;
        if tcn.num_params() != self.params.values.len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} parameters, config needs {}",
                self.params.values.len(),
                tcn.num_params()
            )));
        }
        Ok(())
    }
}
