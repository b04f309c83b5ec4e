//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Learning criteria use the tuned training profile (batch-mean baseline,
//! actor lr 0.1, batch 5, critic lr 0.05, lookahead 4), seeds 1-5, each seed drawing its
//! own realizations. Learned policies are evaluated frozen on the epochs that
//! follow training.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use flexmatch::market::{CustomerId, CustomerSpec, CustomerState, MarketParams, MarketState};
use flexmatch::oracle::{brute_force_verify, solve_hindsight};
use flexmatch::policies::{dispatch_phi, nu_override, DiscreteMatch, Heuristic, SimRng};
use flexmatch::scenario::{presets, PeriodDraw, Scenario, ScenarioRealization};
use flexmatch::tcn::layers::{self, Seq};
use flexmatch::tcn::{Mode, PolicyParams, Tcn, TcnConfig, TcnPolicy};
use flexmatch::trace::{epoch_welfare, run_epoch};
use flexmatch::trainer::{
    actor_critic_gradient, epoch_rng, reinforce_gradient, Algorithm, CriticState, TcnActor, TrainConfig, Trainer,
};
use rand::{Rng, SeedableRng};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const EVAL_EPOCHS: u64 = 100;

fn tuned(algorithm: Algorithm, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(algorithm, seed);
    cfg.baseline = true;
    cfg.actor_learning_rate = 0.1;
    cfg.batch_size = 5;
    cfg.critic_learning_rate = 0.05;
    cfg.lookahead = 4;
    cfg
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn heuristic_series(scenario: &Scenario, h: Heuristic, epochs: impl Iterator<Item = u64>) -> Vec<f64> {
    epochs
        .map(|e| {
            let mut policy = h;
            let trace = run_epoch(&scenario.draw(e), &mut policy, &mut epoch_rng(0, e)).unwrap();
            epoch_welfare(&trace).unwrap()
        })
        .collect()
}

fn ooa(realization: &ScenarioRealization) -> f64 {
    solve_hindsight(realization).unwrap().welfare
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

// ---------------------------------------------------------------- 1

/// A random mid-epoch state and marking, drawn independently of the library's
/// own generators.
fn random_pair(rng: &mut SimRng) -> (MarketState, DiscreteMatch) {
    let horizon = rng.random_range(1..=10);
    let t = rng.random_range(1..=horizon);
    let n = rng.random_range(1..=8);
    let params = MarketParams::new(horizon, rng.random_range(0.5..30.0), n).unwrap();
    let mut state = MarketState::new(params, Vec::new(), 0.0).unwrap();
    state.current_period = t;
    let mut m = DiscreteMatch::default();
    for i in 0..n {
        let spec = CustomerSpec {
            id: CustomerId(i as u32),
            arrival: rng.random_range(1..=t),
            load: rng.random_range(0.01..6.0),
            deadline: rng.random_range(t..=horizon),
            criticality: rng.random_range(0.0..=1.0),
        };
        let mut c = CustomerState::new(spec.clone());
        c.unserved = match rng.random_range(0..4) {
            0 => 0.0,
            1 => spec.load,
            _ => spec.load * rng.random_range(0.0..1.0),
        };
        state.customers.insert(spec.id, c);
        m.flags.insert(spec.id, rng.random_bool(0.5));
    }
    let r = match rng.random_range(0..5) {
        0 => 0.0,
        _ => rng.random_range(0.0..15.0),
    };
    state.history.last_mut().unwrap().renewable = r;
    (state, m)
}

fn feasibility() -> Verdict {
    const PAIRS: usize = 10_000;
    const TOL: f64 = 1e-9;
    let mut rng = SimRng::seed_from_u64(20_240_601);
    let mut bad = 0;
    let mut example = String::new();
    for _ in 0..PAIRS {
        let (state, m) = random_pair(&mut rng);
        let t = state.current_period;
        let r = state.history.last().unwrap().renewable;
        let d = nu_override(&dispatch_phi(&m, &state), &state);
        let mut problems = Vec::new();
        let mut rs_total = 0.0;
        for (id, a) in &d.allocations {
            let c = &state.customers[id];
            let active = c.spec.arrival <= t && t <= c.spec.deadline && c.unserved > 0.0;
            if a.renewable < 0.0 || a.grid < 0.0 || !a.renewable.is_finite() || !a.grid.is_finite() {
                problems.push(format!("negative amount for {id}"));
            }
            if !active && a.renewable + a.grid > 0.0 {
                problems.push(format!("inactive {id} served"));
            }
            if a.renewable + a.grid > c.unserved + TOL {
                problems.push(format!("{id} over-served"));
            }
            rs_total += a.renewable;
        }
        if rs_total > r + TOL {
            problems.push("renewable over-dispatched".into());
        }
        let mut demand = 0.0;
        for c in state.customers.values() {
            if !(c.spec.arrival <= t && t <= c.spec.deadline && c.unserved > 0.0) {
                continue;
            }
            demand += c.unserved;
            let served = d.allocations.get(&c.spec.id).map_or(0.0, |a| a.renewable + a.grid);
            if c.spec.deadline == t && served < c.unserved - TOL {
                problems.push(format!("{} misses its deadline", c.spec.id));
            }
            if m.flags[&c.spec.id] && served < c.unserved - TOL {
                problems.push(format!("marked {} not fully served", c.spec.id));
            }
        }
        if rs_total < demand.min(r) - TOL {
            problems.push("renewable left idle while demand remains".into());
        }
        if state.step(&d, Vec::new(), 0.0).is_err() {
            problems.push("transition rejected the decision".into());
        }
        if !problems.is_empty() {
            bad += 1;
            if example.is_empty() {
                example = problems.join("; ");
            }
        }
    }
    verdict(bad == 0, format!("{PAIRS} pairs, {bad} with violations {example}"))
}

// ---------------------------------------------------------------- 2

fn dominance() -> Verdict {
    const EPOCHS: u64 = 500;
    let mut worst = f64::INFINITY;
    let mut where_ = String::new();
    for n in 1..=5 {
        let scenario = presets::scenario(n).unwrap();
        let mut learned = Vec::new();
        for algo in [Algorithm::La1, Algorithm::La2] {
            let mut t = Trainer::new(scenario.clone(), tuned(algo, 1)).unwrap();
            t.train_epochs(100, true).unwrap();
            learned.push((algo, t.evaluate(1, EPOCHS).unwrap()));
        }
        let heur: Vec<(Heuristic, Vec<f64>)> = [Heuristic::Ma, Heuristic::Mh, Heuristic::Med]
            .into_iter()
            .map(|h| (h, heuristic_series(&scenario, h, 1..=EPOCHS)))
            .collect();
        for e in 1..=EPOCHS {
            let best = ooa(&scenario.draw(e));
            let i = (e - 1) as usize;
            let others = heur
                .iter()
                .map(|(h, w)| (format!("{h:?}"), w[i]))
                .chain(learned.iter().map(|(a, w)| (a.to_string(), w[i])));
            for (name, w) in others {
                if best - w < worst {
                    worst = best - w;
                    where_ = format!("scenario{n} epoch {e} {name}");
                }
            }
        }
    }
    verdict(
        worst >= -1e-6,
        format!("5 scenarios x {EPOCHS} epochs x 5 online policies; min(OOA - online) = {worst:.2e} at {where_}"),
    )
}

// ---------------------------------------------------------------- 3

fn tiny(rng: &mut SimRng, lattice: Option<f64>) -> ScenarioRealization {
    let horizon = rng.random_range(1..=4);
    let n = rng.random_range(1..=3);
    let amount = |rng: &mut SimRng, lo: u32, hi: u32| match lattice {
        Some(h) => h * rng.random_range(lo..=hi) as f64,
        None => rng.random_range(lo as f64 * 0.25..=hi as f64 * 0.25),
    };
    let params = MarketParams::new(horizon, rng.random_range(1.0..12.0), n).unwrap();
    let mut periods: Vec<PeriodDraw> = (0..horizon)
        .map(|_| PeriodDraw {
            arrivals: Vec::new(),
            renewable: amount(rng, 0, 8),
        })
        .collect();
    for i in 0..n {
        let arrival = rng.random_range(1..=horizon);
        periods[arrival - 1].arrivals.push(CustomerSpec {
            id: CustomerId(i as u32),
            arrival,
            load: amount(rng, 1, 8),
            deadline: rng.random_range(arrival..=horizon),
            criticality: rng.random_range(0.0..=1.0),
        });
    }
    ScenarioRealization {
        profile: "tiny".into(),
        epoch_index: 0,
        params,
        periods,
    }
}

fn oracle_correctness() -> Verdict {
    const H: f64 = 0.25;
    let mut rng = SimRng::seed_from_u64(77);
    let mut lattice_err = 0.0f64;
    let mut bound_violations = 0;
    for i in 0..200 {
        if i % 2 == 0 {
            // on the search lattice the exhaustive search is exact
            let r = tiny(&mut rng, Some(H));
            lattice_err = lattice_err.max((ooa(&r) - brute_force_verify(&r, H).unwrap()).abs());
        } else {
            // off the lattice, rounding every renewable amount down to the
            // lattice loses at most H kWh per (customer, period) pair, each
            // at most c per kWh when bought from the grid instead
            let r = tiny(&mut rng, None);
            let lp = ooa(&r);
            let bf = brute_force_verify(&r, H).unwrap();
            let pairs: usize = r.customers().map(|s| s.deadline - s.arrival + 1).sum();
            let bound = H * r.params.grid_price * pairs as f64;
            if bf > lp + 1e-6 || lp - bf > bound + 1e-6 {
                bound_violations += 1;
            }
        }
    }
    verdict(
        lattice_err <= 1e-6 && bound_violations == 0,
        format!("200 instances; lattice max |LP - BF| {lattice_err:.2e}, off-lattice bound violations {bound_violations}"),
    )
}

// ---------------------------------------------------------------- 4

/// Five-point central differences (step `H`), so truncation and rounding
/// error stay far below the tolerance even for small gradient entries.
fn fd_check<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], analytic: &[f64]) -> (f64, usize) {
    const H: f64 = 1e-4;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let centre = f(x);
    let mut p = x.to_vec();
    let mut at = |i: usize, d: f64| {
        p[i] = x[i] + d;
        let v = f(&p);
        p[i] = x[i];
        v
    };
    let (mut worst, mut kinks) = (0.0f64, 0);
    for i in 0..x.len() {
        let (up, down, up2, down2) = (at(i, H), at(i, -H), at(i, 2.0 * H), at(i, -2.0 * H));
        // a rectifier kink inside the stencil makes the one-sided slopes disagree
        let (r, l) = ((up - centre) / H, (centre - down) / H);
        let (r2, l2) = ((up2 - up) / H, (down - down2) / H);
        if [l2, l, r, r2].windows(2).any(|w| rel(w[0], w[1]) > 1e-2 && (w[0] - w[1]).abs() > 1e-3) {
            kinks += 1;
            continue;
        }
        let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * H);
        worst = worst.max(rel(numeric, analytic[i]));
    }
    (worst, kinks)
}

fn gradients() -> Verdict {
    let mut rng = SimRng::seed_from_u64(4);
    let seq = |len: usize, ch: usize, rng: &mut SimRng| Seq {
        data: (0..len * ch).map(|_| rng.random_range(-1.0..1.0)).collect(),
        len,
        channels: ch,
    };
    let mut worst = 0.0f64;
    let mut kinks = 0;
    let mut coords = 0;

    // causal dilated convolution
    let x = seq(9, 3, &mut rng);
    let dy = seq(9, 4, &mut rng);
    let w: Vec<f64> = (0..4 * 3 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = vec![0.1, -0.2, 0.3, 0.0];
    let (mut dw, mut db) = (vec![0.0; w.len()], vec![0.0; 4]);
    let dx = layers::conv_backward(&x, &w, &dy, 3, 2, &mut dw, &mut db);
    let dot = |a: &Seq, b: &Seq| a.data.iter().zip(&b.data).map(|(p, q)| p * q).sum::<f64>();
    for (res, n) in [
        fd_check(|v| dot(&layers::conv_forward(&x, v, &b, 4, 3, 2), &dy), &w, &dw),
        fd_check(
            |v| dot(&layers::conv_forward(&Seq { data: v.to_vec(), ..x.clone() }, &w, &b, 4, 3, 2), &dy),
            &x.data,
            &dx.data,
        ),
    ]
    .into_iter()
    .zip([w.len(), x.data.len()])
    {
        worst = worst.max(res.0);
        kinks += res.1;
        coords += n;
    }

    // per-step normalization
    let x = seq(6, 4, &mut rng);
    let dy = seq(6, 4, &mut rng);
    let gain = vec![0.7, 1.3, 1.0, 0.9];
    let shift = vec![0.1, 0.0, -0.2, 0.3];
    let (_, cache) = layers::norm_forward(&x, &gain, &shift);
    let (mut dg, mut ds) = (vec![0.0; 4], vec![0.0; 4]);
    let dx = layers::norm_backward(&cache, &gain, &dy, &mut dg, &mut ds);
    let res = fd_check(
        |v| dot(&layers::norm_forward(&Seq { data: v.to_vec(), ..x.clone() }, &gain, &shift).0, &dy),
        &x.data,
        &dx.data,
    );
    worst = worst.max(res.0);
    coords += x.data.len();

    // whole networks, with and without dropout
    for (cfg, mode) in [
        (TcnConfig::policy(2, 12), Mode::Eval),
        (TcnConfig::policy(2, 12), Mode::Train { dropout_seed: 3 }),
        (TcnConfig::critic(1), Mode::Train { dropout_seed: 8 }),
    ] {
        let tcn = Tcn::new(cfg.clone()).unwrap();
        let params = tcn.init_params(&mut rng, 0.5);
        let input = seq(10, cfg.input_channels, &mut rng);
        let upstream: Vec<f64> = (0..cfg.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = tcn.forward(&params, &input, mode).unwrap();
        let grad = tcn.backward(&params, &cache, &upstream).unwrap();
        let loss = |p: &[f64]| {
            let out = tcn.forward(&PolicyParams { values: p.to_vec() }, &input, mode).unwrap().0;
            out.iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>()
        };
        let res = fd_check(loss, &params.values, &grad);
        worst = worst.max(res.0);
        kinks += res.1;
        coords += params.values.len();
    }
    let kink_share = kinks as f64 / coords as f64;
    verdict(
        worst < 1e-4 && kink_share <= 0.02,
        format!("max relative error {worst:.2e} over {coords} coordinates ({kinks} at rectifier kinks skipped)"),
    )
}

// ---------------------------------------------------------------- 5

fn unbiasedness() -> Verdict {
    use common::{exact_gradient, monte_carlo, toy, THETA};
    let truth = exact_gradient(THETA, &toy());
    let (mc, se) = monte_carlo(THETA, 100_000, |trace, actor| {
        reinforce_gradient(std::slice::from_ref(trace), actor).unwrap()
    });
    let z: Vec<f64> = (0..3).map(|i| (mc[i] - truth[i]).abs() / se[i]).collect();
    verdict(
        z.iter().all(|&z| z <= 3.0),
        format!(
            "10^5 rollouts; exact {:.4?}, Monte-Carlo {:.4?}, |z| {:.2?}",
            truth, mc, z
        ),
    )
}

// ---------------------------------------------------------------- 6

fn equivalence() -> Verdict {
    let scenario = presets::scenario(3).unwrap();
    let cfg = TcnConfig::policy(1, 12);
    let tcn = Tcn::new(cfg.clone()).unwrap();
    let params = tcn.init_params(&mut SimRng::seed_from_u64(2), 0.3);
    let scaling = flexmatch::tcn::InputScaling::for_scenario(&scenario);
    let traces: Vec<_> = (1..=8)
        .map(|e| {
            let mut policy = flexmatch::policies::compose_policy("la", TcnPolicy::new(&tcn, &params, scaling, 1, true));
            run_epoch(&scenario.draw(e), &mut policy, &mut epoch_rng(5, e)).unwrap()
        })
        .collect();
    let ccfg = TcnConfig::critic(1);
    let ctcn = Tcn::new(ccfg.clone()).unwrap();
    let mut cparams = ctcn.init_params(&mut SimRng::seed_from_u64(3), 0.0);
    ctcn.zero_head(&mut cparams);
    let critic = CriticState::new(ccfg, cparams, 1e-3, 180.0, scaling, 1).unwrap();
    let actor = TcnActor::new(TcnPolicy::new(&tcn, &params, scaling, 1, true));
    let reinforce = reinforce_gradient(&traces, &actor).unwrap();
    let mut worst = 0.0f64;
    for k in [12, 20] {
        let ac = actor_critic_gradient(&traces, &actor, &critic.view(), k).unwrap();
        worst = reinforce.iter().zip(&ac).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let norm = reinforce.iter().map(|g| g * g).sum::<f64>().sqrt();
    verdict(
        worst <= 1e-9 && norm > 0.0,
        format!("k in {{12, 20}}, T = 12, {} parameters; max difference {worst:.2e}", reinforce.len()),
    )
}

// ---------------------------------------------------------------- 7

fn scenario_one() -> Verdict {
    const EPOCHS: u64 = 500;
    let s = presets::scenario(1).unwrap();
    let ma = mean(&heuristic_series(&s, Heuristic::Ma, 1..=EPOCHS));
    let mh = mean(&heuristic_series(&s, Heuristic::Mh, 1..=EPOCHS));
    let med = mean(&heuristic_series(&s, Heuristic::Med, 1..=EPOCHS));
    let best = mean(&(1..=EPOCHS).map(|e| ooa(&s.draw(e))).collect::<Vec<_>>());
    // the configuration itself must be scenario-1 style
    let cfg = presets::profile(1).unwrap();
    let shape = cfg.mean_generation.iter().zip(&cfg.mean_load).all(|(g, l)| g <= l);
    verdict(
        ma / best >= 0.99 && ma >= mh && ma >= med && shape,
        format!("{EPOCHS} epochs: MA {ma:.1}, MH {mh:.1}, MED {med:.1}, OOA {best:.1}, MA/OOA {:.4}", ma / best),
    )
}

// ---------------------------------------------------------------- 8-10

struct Trained {
    curve: Vec<f64>,
    eval: Vec<f64>,
    first_eval: u64,
}

fn train_seed(scenario: &Scenario, algo: Algorithm, seed: u64) -> Trained {
    let cfg = tuned(algo, seed);
    let epochs = cfg.default_epochs() as u64;
    let mut t = Trainer::new(scenario.clone(), cfg).unwrap();
    t.train_epochs(epochs, true).unwrap();
    Trained {
        curve: t.curve.iter().map(|p| p.running_avg).collect(),
        eval: t.evaluate(epochs + 1, EVAL_EPOCHS).unwrap(),
        first_eval: epochs + 1,
    }
}

/// Seed-averaged (learned, MA) welfare on the post-training window.
fn versus_ma(runs: &[(Scenario, Trained)]) -> (f64, f64) {
    let la = mean(&runs.iter().map(|(_, t)| mean(&t.eval)).collect::<Vec<_>>());
    let ma = mean(
        &runs
            .iter()
            .map(|(s, t)| mean(&heuristic_series(s, Heuristic::Ma, t.first_eval..t.first_eval + EVAL_EPOCHS)))
            .collect::<Vec<_>>(),
    );
    (la, ma)
}

fn thirds_improve(curve: &[f64]) -> bool {
    let third = curve.len() / 3;
    mean(&curve[curve.len() - third..]) > mean(&curve[..third])
}

fn runs(n: usize, algo: Algorithm) -> Vec<(Scenario, Trained)> {
    let base = presets::scenario(n).unwrap();
    SEEDS
        .iter()
        .map(|&seed| {
            let s = base.reseeded(seed);
            let t = train_seed(&s, algo, seed);
            (s, t)
        })
        .collect()
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} [{tag}] {name}: {} ({:.1}s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        results.push(v.passed);
    };

    run(1, "feasibility of composed decisions", &mut feasibility);
    run(2, "hindsight oracle dominates online policies", &mut dominance);
    run(3, "LP oracle matches exhaustive search", &mut oracle_correctness);
    run(4, "backprop matches finite differences", &mut gradients);
    run(5, "REINFORCE estimator is unbiased", &mut unbiasedness);
    run(6, "AC-k with k >= T equals REINFORCE", &mut equivalence);
    run(7, "scenario 1: match-on-arrival is near optimal", &mut scenario_one);

    let s3_la2 = runs(3, Algorithm::La2);
    let s5_la2 = runs(5, Algorithm::La2);
    run(8, "learning beats MA on scenarios 2 and 3", &mut || {
        let mut parts = Vec::new();
        let mut ok = true;
        for n in [2, 3] {
            let la1 = runs(n, Algorithm::La1);
            let la2 = if n == 3 { None } else { Some(runs(n, Algorithm::La2)) };
            let la2 = la2.as_deref().unwrap_or(&s3_la2);
            let (l1, ma1) = versus_ma(&la1);
            let (l2, ma2) = versus_ma(la2);
            let (name, margin) = if l1 - ma1 >= l2 - ma2 { ("LA1", l1 - ma1) } else { ("LA2", l2 - ma2) };
            ok &= margin > 0.0;
            parts.push(format!(
                "scenario{n}: LA1 {l1:.1} (MA {ma1:.1}), LA2 {l2:.1} (MA {ma2:.1}), better {name} by {margin:+.1}"
            ));
        }
        verdict(ok, format!("{} seeds; {}", SEEDS.len(), parts.join("; ")))
    });

    run(9, "scenario 5: LA2 in the top two per epoch", &mut || {
        let mut hits = 0;
        let mut total = 0;
        let mut per_seed = BTreeMap::new();
        for ((s, t), seed) in s5_la2.iter().zip(SEEDS) {
            let window = t.first_eval..t.first_eval + 30;
            let heur: Vec<Vec<f64>> = [Heuristic::Ma, Heuristic::Mh, Heuristic::Med]
                .into_iter()
                .map(|h| heuristic_series(s, h, window.clone()))
                .collect();
            let mut seed_hits = 0;
            for i in 0..30 {
                let ahead = heur.iter().filter(|w| w[i] > t.eval[i] + 1e-9).count();
                if ahead <= 1 {
                    seed_hits += 1;
                }
            }
            per_seed.insert(seed, seed_hits);
            hits += seed_hits;
            total += 30;
        }
        let share = hits as f64 / total as f64;
        verdict(
            share >= 0.70,
            format!("{hits}/{total} epochs = {:.0}% (per seed of 30: {per_seed:?})", 100.0 * share),
        )
    });

    run(10, "LA2 running average improves (scenarios 3 and 5)", &mut || {
        let s3: Vec<bool> = s3_la2.iter().map(|(_, t)| thirds_improve(&t.curve)).collect();
        let s5: Vec<bool> = s5_la2.iter().map(|(_, t)| thirds_improve(&t.curve)).collect();
        let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
        verdict(
            s3.iter().chain(&s5).all(|&b| b),
            format!(
                "last third > first third on {}/{} scenario-3 seeds, {}/{} scenario-5 seeds",
                count(&s3),
                s3.len(),
                count(&s5),
                s5.len()
            ),
        )
    });

    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
