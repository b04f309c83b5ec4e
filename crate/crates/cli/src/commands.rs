use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use flexmatch::checks;
use flexmatch::oracle::solve_hindsight;
use flexmatch::policies::{OnlinePolicy, PolicyKind};
use flexmatch::scenario::{hybrid_member, presets, Scenario, ScenarioRealization};
use flexmatch::trace::{epoch_welfare, replay_schedule, run_epoch, EpochTrace};
use flexmatch::trainer::{epoch_rng, write_curve, Algorithm, TrainCheckpoint, TrainConfig, Trainer};

use crate::{CompareArgs, LearnArgs, RunArgs, TrainArgs, UsageError, VerifyArgs};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// A config file, or one of the bundled `scenario1` .. `scenario5`.
fn load_scenario(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.exists() {
        return Scenario::from_path(path).with_context(|| format!("loading config {}", path.display()));
    }
    if let Some(n) = spec.strip_prefix("scenario").and_then(|n| n.parse::<usize>().ok()) {
        if (1..=5).contains(&n) {
            return Ok(presets::scenario(n)?);
        }
    }
    Err(usage(format!(
        "config '{spec}' is neither a file nor a bundled scenario (scenario1 .. scenario5)"
    )))
}

fn echo_config(scenario: &Scenario) -> Result<()> {
    let mut err = io::stderr().lock();
    for profile in scenario.profiles() {
        writeln!(err, "# profile {}", profile.name)?;
        for line in toml::to_string(profile)?.lines() {
            writeln!(err, "#   {line}")?;
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_checkpoint(path: &Path) -> Result<TrainCheckpoint> {
    let file = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    TrainCheckpoint::read(io::BufReader::new(file)).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn algorithm_of(kind: PolicyKind) -> Option<Algorithm> {
    match kind {
        PolicyKind::La1 => Some(Algorithm::La1),
        PolicyKind::La2 => Some(Algorithm::La2),
        _ => None,
    }
}

fn train_config(algorithm: Algorithm, seed: u64, learn: &LearnArgs) -> Result<TrainConfig> {
    if algorithm == Algorithm::La1 && learn.k.is_some() {
        return Err(usage("--k sets the actor-critic lookahead and applies to la2 only"));
    }
    let mut cfg = TrainConfig::new(algorithm, seed);
    if let Some(b) = learn.batch {
        cfg.batch_size = b;
    }
    if let Some(k) = learn.k {
        cfg.lookahead = k;
    }
    if let Some(lr) = learn.actor_lr {
        cfg.actor_learning_rate = lr;
    }
    if let Some(lr) = learn.critic_lr {
        cfg.critic_learning_rate = lr;
    }
    cfg.baseline = learn.baseline;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn hindsight_trace(realization: &ScenarioRealization) -> Result<EpochTrace> {
    let solution = solve_hindsight(realization)?;
    Ok(replay_schedule(realization, &solution.schedule)?)
}

pub fn run(args: RunArgs) -> Result<ExitCode> {
    let algorithm = algorithm_of(args.policy);
    if algorithm.is_some() != args.checkpoint.is_some() {
        return Err(usage(if algorithm.is_some() {
            "la1 and la2 need --checkpoint from `flexmatch train`"
        } else {
            "--checkpoint only applies to la1 and la2"
        }));
    }
    if args.first_epoch == 0 {
        return Err(usage("epochs are numbered from 1"));
    }
    let scenario = load_scenario(&args.config)?;
    echo_config(&scenario)?;
    let scenario = scenario.reseeded(args.seed);

    let trainer = match (&args.checkpoint, algorithm) {
        (Some(path), Some(algo)) => {
            let ck = read_checkpoint(path)?;
            if ck.config.algorithm != algo {
                return Err(usage(format!(
                    "{} holds a {} policy, not {algo}",
                    path.display(),
                    ck.config.algorithm
                )));
            }
            Some(Trainer::from_checkpoint(scenario.clone(), ck).with_context(|| format!("loading {}", path.display()))?)
        }
        _ => None,
    };
    let mut learned = trainer.as_ref().map(|t| t.policy(false));
    let mut traces = args.traces.as_deref().map(create).transpose()?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "epoch,welfare")?;

    let mut total = 0.0;
    for epoch in args.first_epoch..args.first_epoch + args.epochs {
        let realization = scenario.draw(epoch);
        let mut rng = epoch_rng(args.seed, epoch);
        let trace = match (args.policy.heuristic(), learned.as_mut()) {
            (Some(mut h), _) => run_epoch(&realization, &mut h, &mut rng)?,
            (None, Some(p)) => run_epoch(&realization, p, &mut rng)?,
            (None, None) => hindsight_trace(&realization)?,
        };
        trace.check_invariants()?;
        let welfare = epoch_welfare(&trace)?;
        total += welfare;
        writeln!(out, "{epoch},{welfare}")?;
        if let Some(w) = traces.as_mut() {
            trace.write_jsonl(w)?;
        }
    }
    let mean = if args.epochs == 0 { 0.0 } else { total / args.epochs as f64 };
    writeln!(out, "mean,{mean}")?;
    out.flush()?;
    if let Some(mut w) = traces {
        w.flush()?;
    }
    eprintln!("{} on {}: mean welfare {mean:.3} over {} epochs", args.policy, scenario.name(), args.epochs);
    Ok(ExitCode::SUCCESS)
}

fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let mut ck = create(path)?;
    trainer.checkpoint().write(&mut ck)?;
    ck.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let mut trainer = match &args.resume {
        Some(path) => {
            let l = &args.learn;
            if l.batch.is_some() || l.k.is_some() || l.actor_lr.is_some() || l.critic_lr.is_some() || l.baseline {
                return Err(usage("hyperparameters come from the checkpoint when resuming"));
            }
            let ck = read_checkpoint(path)?;
            if ck.config.algorithm != args.algo {
                return Err(usage(format!("{} was trained with {}", path.display(), ck.config.algorithm)));
            }
            let scenario = load_scenario(&args.config)?;
            echo_config(&scenario)?;
            let scenario = scenario.reseeded(ck.config.seed);
            Trainer::from_checkpoint(scenario, ck).with_context(|| format!("resuming from {}", path.display()))?
        }
        None => {
            let cfg = train_config(args.algo, args.seed, &args.learn)?;
            let scenario = load_scenario(&args.config)?;
            echo_config(&scenario)?;
            let scenario = scenario.reseeded(args.seed);
            Trainer::new(scenario, cfg)?
        }
    };
    let total = args.epochs.unwrap_or(trainer.config.default_epochs() as u64);
    if total < trainer.epochs_done {
        return Err(usage(format!(
            "checkpoint already has {} epochs, more than --epochs {total}",
            trainer.epochs_done
        )));
    }
    let batch = trainer.config.batch_size as u64;
    let every = match args.checkpoint_every {
        Some(n) if n == 0 || n % batch != 0 => {
            return Err(usage(format!("--checkpoint-every {n} is not a positive multiple of the batch size {batch}")))
        }
        Some(n) => n,
        None => u64::MAX,
    };
    while trainer.epochs_done < total {
        let chunk = every.min(total - trainer.epochs_done);
        trainer.train_epochs(chunk, false)?;
        if trainer.epochs_done < total {
            save_checkpoint(&trainer, &args.checkpoint)?;
        }
    }
    trainer.train_epochs(0, true)?;

    let mut out = create(&args.out)?;
    write_curve(&trainer.curve, &mut out)?;
    out.flush().with_context(|| format!("writing {}", args.out.display()))?;
    save_checkpoint(&trainer, &args.checkpoint)?;

    let last = trainer.curve.last().map_or(0.0, |p| p.running_avg);
    eprintln!(
        "{} on {}: {} epochs, running average {last:.3}",
        args.algo,
        trainer.scenario.name(),
        trainer.epochs_done
    );
    Ok(ExitCode::SUCCESS)
}

/// Per-policy welfare of one (scenario, seed) pair on the evaluation epochs,
/// plus whatever is needed for the per-epoch breakdown.
struct SeedRun {
    welfare: Vec<Vec<f64>>,
    detail: Vec<(u64, usize, Vec<f64>)>,
}

fn heuristic_welfare(kind: PolicyKind, realization: &ScenarioRealization, seed: u64, epoch: u64) -> Result<f64> {
    let trace = match kind.heuristic() {
        Some(mut h) => {
            let mut rng = epoch_rng(seed, epoch);
            run_epoch(realization, &mut h as &mut dyn OnlinePolicy, &mut rng)?
        }
        None => hindsight_trace(realization)?,
    };
    Ok(epoch_welfare(&trace)?)
}

fn compare_seed(args: &CompareArgs, scenario: &Scenario, seed: u64, first: u64) -> Result<SeedRun> {
    let scenario = scenario.reseeded(seed);
    let mut trainers = Vec::new();
    for &kind in &args.policies {
        if let Some(algo) = algorithm_of(kind) {
            let cfg = train_config(algo, seed, &args.learn)?;
            let epochs = args.train_epochs.unwrap_or(cfg.default_epochs() as u64);
            let mut trainer = Trainer::new(scenario.clone(), cfg)?;
            trainer.train_epochs(epochs, true)?;
            trainers.push((kind, trainer));
        }
    }
    let trainer_for = |kind: PolicyKind| trainers.iter().find(|(k, _)| *k == kind).map(|(_, t)| t);

    let mut welfare = Vec::new();
    for &kind in &args.policies {
        let series = match trainer_for(kind) {
            Some(t) => t.evaluate(first, args.epochs)?,
            None => (first..first + args.epochs)
                .map(|e| heuristic_welfare(kind, &scenario.draw(e), seed, e))
                .collect::<Result<_>>()?,
        };
        welfare.push(series);
    }

    let mut detail = Vec::new();
    if matches!(scenario, Scenario::Hybrid { .. }) {
        for &epoch in &args.detail {
            if epoch == 0 {
                return Err(usage("epochs are numbered from 1"));
            }
            let realization = scenario.draw(epoch);
            let mut row = Vec::new();
            for &kind in &args.policies {
                row.push(match trainer_for(kind) {
                    // epochs seen in training report the training rollout
                    Some(t) => match t.curve.get(epoch as usize - 1) {
                        Some(p) => p.welfare,
                        None => t.evaluate(epoch, 1)?[0],
                    },
                    None => heuristic_welfare(kind, &realization, seed, epoch)?,
                });
            }
            detail.push((epoch, hybrid_member(epoch), row));
        }
    }
    Ok(SeedRun { welfare, detail })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn compare(args: CompareArgs) -> Result<ExitCode> {
    if args.policies.is_empty() {
        return Err(usage("--policies needs at least one policy"));
    }
    if args.seeds.is_empty() {
        return Err(usage("--seeds needs at least one seed"));
    }
    let scenarios = args.config.iter().map(|c| load_scenario(c)).collect::<Result<Vec<_>>>()?;
    let trained = args
        .policies
        .iter()
        .filter_map(|&k| algorithm_of(k))
        .map(|a| args.train_epochs.unwrap_or(TrainConfig::new(a, 0).default_epochs() as u64))
        .max();
    let first = args.first_epoch.unwrap_or(trained.map_or(1, |n| n + 1));
    if first == 0 {
        return Err(usage("epochs are numbered from 1"));
    }
    for kind in &args.policies {
        if let Some(a) = algorithm_of(*kind) {
            train_config(a, 0, &args.learn)?;
        }
    }

    let names: Vec<&str> = args.policies.iter().map(|k| k.as_str()).collect();
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "scenario,stat,{}", names.join(","))?;
    let mut details = Vec::new();
    for scenario in &scenarios {
        let runs = args
            .seeds
            .iter()
            .map(|&s| compare_seed(&args, scenario, s, first))
            .collect::<Result<Vec<_>>>()?;
        let per_seed: Vec<Vec<f64>> = runs.iter().map(|r| r.welfare.iter().map(|w| mean(w)).collect()).collect();
        let means: Vec<f64> = (0..names.len())
            .map(|p| mean(&per_seed.iter().map(|s| s[p]).collect::<Vec<_>>()))
            .collect();
        let best: Vec<f64> = (0..names.len())
            .map(|p| per_seed.iter().map(|s| s[p]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(",");
        writeln!(out, "{},mean,{}", scenario.name(), fmt(&means))?;
        writeln!(out, "{},best,{}", scenario.name(), fmt(&best))?;

        if let Some(o) = args.policies.iter().position(|&k| k == PolicyKind::Ooa) {
            if means.iter().any(|&m| m > means[o] + 1e-6) {
                eprintln!("warning: an online policy beats the hindsight optimum on {}", scenario.name());
            }
        }
        let members: Vec<String> = scenario.profiles().iter().map(|p| p.name.clone()).collect();
        for (seed, run) in args.seeds.iter().zip(&runs) {
            for (epoch, member, row) in &run.detail {
                details.push(format!("{},{seed},{epoch},{},{}", scenario.name(), members[*member], fmt(row)));
            }
        }
    }
    out.flush()?;

    if !details.is_empty() {
        let mut d: Box<dyn Write> = match &args.detail_out {
            Some(p) => Box::new(create(p)?),
            None => Box::new(io::stderr().lock()),
        };
        writeln!(d, "scenario,seed,epoch,member,{}", names.join(","))?;
        for line in details {
            writeln!(d, "{line}")?;
        }
        d.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let scenarios = if args.config.is_empty() {
        (1..=5).map(presets::scenario).collect::<flexmatch::Result<Vec<_>>>()?
    } else {
        args.config.iter().map(|c| load_scenario(c)).collect::<Result<Vec<_>>>()?
    };
    let mut reports = vec![
        checks::feasibility_suite(args.pairs, args.seed)?,
        checks::oracle_suite(args.instances, args.seed)?,
    ];
    for s in &scenarios {
        reports.push(checks::dominance_suite(s, args.epochs, args.seed)?);
    }
    for r in &reports {
        println!("{r}");
    }
    if reports.iter().all(|r| r.passed) {
        Ok(ExitCode::SUCCESS)
    } else {
        bail!("{} of {} checks failed", reports.iter().filter(|r| !r.passed).count(), reports.len())
    }
}
