use flexmatch::scenario::presets;
use flexmatch::trainer::{train, Algorithm, TrainCheckpoint, TrainConfig, Trainer};

fn config(algorithm: Algorithm) -> TrainConfig {
    let mut cfg = TrainConfig::new(algorithm, 11);
    cfg.batch_size = 4;
    cfg.actor_learning_rate = 0.1;
    cfg.baseline = true;
    cfg
}

#[test]
fn same_seed_same_parameters() {
    for algo in [Algorithm::La1, Algorithm::La2] {
        let s = presets::scenario(2).unwrap();
        let a = train(s.clone(), config(algo), 12).unwrap();
        let b = train(s.clone(), config(algo), 12).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.critic, b.critic);
        let mut other = config(algo);
        other.seed = 12;
        assert_ne!(train(s, other, 12).unwrap().params, a.params);
    }
}

#[test]
fn checkpoint_round_trip_resumes_bit_exactly() {
    let s = presets::scenario(5).unwrap();
    let full = train(s.clone(), config(Algorithm::La2), 16).unwrap();

    let mut half = Trainer::new(s.clone(), config(Algorithm::La2)).unwrap();
    half.train_epochs(8, false).unwrap();
    assert_eq!(half.pending(), 0);
    let mut bytes = Vec::new();
    half.checkpoint().write(&mut bytes).unwrap();
    let ck = TrainCheckpoint::read(bytes.as_slice()).unwrap();
    assert_eq!(ck, half.checkpoint());
    let mut resumed = Trainer::from_checkpoint(s, ck).unwrap();
    resumed.train_epochs(8, true).unwrap();

    assert_eq!(resumed.params, full.params);
    assert_eq!(resumed.actor_adam, full.actor_adam);
    assert_eq!(resumed.critic, full.critic);
    assert_eq!(resumed.curve, full.curve);
}

#[test]
fn checkpoint_for_another_scenario_is_rejected() {
    let t = Trainer::new(presets::scenario(2).unwrap(), config(Algorithm::La1)).unwrap();
    let mut other = presets::profile(2).unwrap();
    other.max_arrivals = Some(3);
    let err = Trainer::from_checkpoint(flexmatch::scenario::Scenario::Single(other), t.checkpoint());
    assert!(err.is_err());
}

#[test]
fn actor_critic_improves_on_scenario_three() {
    let mut cfg = TrainConfig::new(Algorithm::La2, 1);
    cfg.baseline = true;
    cfg.actor_learning_rate = 0.1;
    cfg.batch_size = 5;
    cfg.critic_learning_rate = 0.05;
    cfg.lookahead = 4;
    let t = train(presets::scenario(3).unwrap().reseeded(1), cfg, 200).unwrap();
    let mean = |s: &[flexmatch::trainer::CurvePoint]| s.iter().map(|p| p.welfare).sum::<f64>() / s.len() as f64;
    let (first, last) = (mean(&t.curve[..50]), mean(&t.curve[150..]));
    assert!(last > first, "first 50 {first:.2}, last 50 {last:.2}");
}
