use super::*;
use crate::dsp::{AudioSignal, SAMPLE_RATE};
use crate::model::SubGeneratorConfig;
use crate::speaker_encoder::{EmbeddingCache, SingerEmbedding};

pub(crate) fn tiny_model() -> ModelConfig {
    let mut m = ModelConfig::default();
    m.generator.low = SubGeneratorConfig::doubling(3, 3, 8, 8, 16);
    m.generator.high = SubGeneratorConfig::doubling(2, 2, 8, 8, 16);
    m.uncond_disc.channels = 8;
    m.cond_disc.channels = vec![8, 8, 8, 256];
    m.cond_disc.lstm_layers = 1;
    m.encoder.lstm_layers = 1;
    m.encoder.hidden_size = 16;
    m
}

fn tiny_train(pretrain: u64, total: u64) -> TrainConfig {
    TrainConfig {
        pretrain_steps: pretrain,
        total_steps: total,
        batch_size: 1,
        segment_length: 1024,
        checkpoint_interval: 2,
        optimizer: OptimizerConfig {
            lr_g: 1e-3,
            lr_d: 1e-3,
            ..OptimizerConfig::default()
        },
        stft_loss: StftLossConfig {
            resolutions: vec![crate::dsp::StftParams::new(256, 64, 256)],
        },
        ..TrainConfig::default()
    }
}

fn tone(f: f64, n: usize) -> AudioSignal {
    let x = (0..n).map(|i| 0.3 * (2.0 * std::f64::consts::PI * f * i as f64 / 24_000.0).sin()).collect();
    AudioSignal::new(x, SAMPLE_RATE).unwrap()
}

fn corpus(model: &ModelConfig, with_embeddings: bool) -> Dataset {
    let mel = MelExtractor::new(model.mel.clone()).unwrap();
    let mut cache = EmbeddingCache::default();
    let mut v = vec![0.0; 256];
    v[0] = 1.0;
    cache.insert("a", &SingerEmbedding::new(v.clone(), None).unwrap());
    v[1] = 1.0;
    cache.insert("b", &SingerEmbedding::new(v, None).unwrap());
    let sigs = vec![
        ("a".to_string(), "s1".to_string(), tone(220.0, 3000)),
        ("b".to_string(), "s2".to_string(), tone(330.0, 2500)),
    ];
    Dataset::from_signals(sigs, &mel, 1024, with_embeddings.then_some(&cache)).unwrap()
}

fn encoder(model: &ModelConfig) -> SpeakerEncoder {
    SpeakerEncoder::new(model.encoder.clone(), 9).unwrap()
}

fn trainer(pretrain: u64, total: u64) -> Trainer {
    let m = tiny_model();
    let data = corpus(&m, true);
    let enc = encoder(&m);
    Trainer::new(m, tiny_train(pretrain, total), data, Some(enc)).unwrap()
}

#[test]
fn config_invariants() {
    let mut c = TrainConfig::default();
    assert!(c.validate().is_ok());
    c.pretrain_steps = c.total_steps + 1;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = TrainConfig::default();
    c.segment_length = 8192 + 256;
    assert!(c.validate().is_err());
    let mut m = ModelConfig::default();
    assert!(m.validate().is_ok());
    m.mel.hop_size = 256;
    assert!(m.validate().is_err());
}

#[test]
fn unknown_config_keys_rejected() {
    assert!(toml::from_str::<TrainConfig>("total_steps = 3\nbogus = 1").is_err());
    let c: TrainConfig = toml::from_str("total_steps = 3\npretrain_steps = 2").unwrap();
    assert_eq!((c.total_steps, c.pretrain_steps, c.segment_length), (3, 2, 8192));
}

#[test]
fn pretrain_step_leaves_discriminators_alone() {
    let mut t = trainer(3, 3);
    let (du, ds, g) = (
        t.state().d_uncond.params().clone(),
        t.state().d_cond.params().clone(),
        t.state().generator.params().clone(),
    );
    let m = t.step().unwrap();
    assert_eq!(m.phase, Phase::Pretrain);
    assert!(m.l_adv_g.is_none() && m.l_adv_d.is_none());
    assert!(m.l_spl > 0.0 && m.l_stft > 0.0);
    assert_eq!(t.state().d_uncond.params(), &du);
    assert_eq!(t.state().d_cond.params(), &ds);
    assert_ne!(t.state().generator.params(), &g);
    assert_eq!(t.state().step, 1);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let m = tiny_model();
    let mut cfg = tiny_train(1, 2);
    cfg.optimizer.lr_g = 0.0;
    cfg.optimizer.lr_d = 0.0;
    let data = corpus(&m, true);
    let mut t = Trainer::new(m.clone(), cfg, data, Some(encoder(&m))).unwrap();
    let before = t.checkpoint();
    t.step().unwrap();
    t.step().unwrap();
    let after = t.checkpoint();
    for g in ["generator", "d_uncond", "d_cond"] {
        assert_eq!(before.group(g), after.group(g));
    }
}

#[test]
fn joint_step_updates_all_three_networks() {
    let mut t = trainer(0, 1);
    let before = t.checkpoint();
    let m = t.step().unwrap();
    assert_eq!(m.phase, Phase::Joint);
    assert!(m.l_adv_g.unwrap() >= 0.0 && m.l_adv_d.unwrap() >= 0.0);
    let after = t.checkpoint();
    for g in ["generator", "d_uncond", "d_cond"] {
        assert_ne!(before.group(g), after.group(g), "{g} unchanged");
    }
}

#[test]
fn detached_fakes_carry_no_generator_gradient() {
    let t = trainer(0, 1);
    let st = t.state();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = t.data().sample(&mut rng, 1, st.generator.noise_len(8));
    let p_g = st.generator.params().bind(true);
    let y = st.generator.forward(&p_g, &Var::constant(b.noise.clone()), &b.mel).unwrap();
    let p_du = st.d_uncond.params().bind(true);
    let loss = st.d_uncond.forward(&p_du, &y.detach()).unwrap().square().mean();
    let grads = loss.backward();
    assert!(p_g.grads(&grads).values().all(|g| g.data().iter().all(|&v| v == 0.0)));
    assert!(p_du.grads(&grads).values().any(|g| g.data().iter().any(|&v| v != 0.0)));
}

#[test]
fn missing_embedding_is_reported_before_training() {
    let m = tiny_model();
    let data = corpus(&m, false);
    match Trainer::new(m.clone(), tiny_train(0, 1), data.clone(), Some(encoder(&m))) {
        Err(Error::MissingEmbedding(id)) => assert_eq!(id, "a"),
        other => panic!("{:?}", other.err()),
    }
    // pretraining alone does not need them
    assert!(Trainer::new(m.clone(), tiny_train(1, 1), data, Some(encoder(&m))).is_ok());
}

#[test]
fn perceptual_loss_needs_an_encoder() {
    let m = tiny_model();
    let data = corpus(&m, true);
    assert!(Trainer::new(m.clone(), tiny_train(1, 1), data.clone(), None).is_err());
    let mut cfg = tiny_train(1, 1);
    cfg.perceptual_loss = false;
    let mut t = Trainer::new(m, cfg, data, None).unwrap();
    assert_eq!(t.step().unwrap().l_spl, 0.0);
}

#[test]
fn non_finite_parameters_abort_with_step() {
    let mut t = trainer(2, 2);
    t.step().unwrap();
    for (_, v) in t.state.generator.params_mut().iter_mut() {
        v.data_mut()[0] = f64::NAN;
    }
    match t.step() {
        Err(Error::Diverged { step, .. }) => assert_eq!(step, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_then_step_is_bit_identical() {
    let mut a = trainer(1, 4);
    a.step().unwrap();
    a.step().unwrap();
    let bytes = a.checkpoint().to_bytes().unwrap();
    let m = tiny_model();
    let mut b = Trainer::resume(&Checkpoint::from_bytes(&bytes).unwrap(), corpus(&m, true), Some(encoder(&m))).unwrap();
    assert_eq!(b.state().step, 2);
    for _ in 0..2 {
        let (ma, mb) = (a.step().unwrap(), b.step().unwrap());
        assert_eq!(ma, mb);
    }
    assert_eq!(a.checkpoint().to_bytes().unwrap(), b.checkpoint().to_bytes().unwrap());
}

#[test]
fn run_training_logs_every_step_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_model();

    let full = RunPaths::new(dir.path().join("full"));
    let mut t = Trainer::new(m.clone(), tiny_train(2, 5), corpus(&m, true), Some(encoder(&m))).unwrap();
    let out = run_training(&mut t, &full, None).unwrap();
    assert_eq!(out.steps_run, 5);
    let log_full = read_log(&out.log).unwrap();
    assert_eq!(log_full.len(), 5);
    assert!(log_full[..2].iter().all(|r| r.l_adv_g.is_none() && r.phase == Phase::Pretrain));
    assert!(log_full[2..].iter().all(|r| r.l_adv_g.is_some() && r.l_adv_d.is_some()));
    assert!(full.at_step(2).exists() && full.at_step(4).exists() && full.final_checkpoint().exists());

    // interrupted after 3 steps, then resumed from latest.ckpt
    let part = RunPaths::new(dir.path().join("part"));
    let mut t = Trainer::new(m.clone(), tiny_train(2, 5), corpus(&m, true), Some(encoder(&m))).unwrap();
    assert_eq!(run_training(&mut t, &part, Some(3)).unwrap().steps_run, 3);
    let mut t = resume_or_new(&part, m.clone(), tiny_train(2, 5), corpus(&m, true), Some(encoder(&m))).unwrap();
    assert_eq!(t.state().step, 3);
    assert_eq!(run_training(&mut t, &part, None).unwrap().steps_run, 2);
    let log_part = read_log(&part.log()).unwrap();
    assert_eq!(log_part.len(), 5);
    for (a, b) in log_full.iter().zip(&log_part) {
        assert_eq!((a.step, a.l_stft, a.l_spl, a.l_adv_g, a.l_adv_d), (b.step, b.l_stft, b.l_spl, b.l_adv_g, b.l_adv_d));
    }
    let (fa, fb) = (
        Checkpoint::load(&full.final_checkpoint()).unwrap(),
        Checkpoint::load(&part.final_checkpoint()).unwrap(),
    );
    assert_eq!(fa.tensors, fb.tensors);
}

#[test]
fn pretrain_only_run_has_no_adversarial_records() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::new(dir.path());
    let mut t = trainer(3, 3);
    run_training(&mut t, &paths, None).unwrap();
    let log = read_log(&paths.log()).unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|r| r.l_adv_g.is_none() && r.l_adv_d.is_none()));
    let raw = std::fs::read_to_string(paths.log()).unwrap();
    assert!(!raw.contains("l_adv"));
    let (mc, g) = load_generator(&Checkpoint::load(&paths.final_checkpoint()).unwrap()).unwrap();
    assert_eq!(mc, tiny_model());
    assert_eq!(g.params(), t.state().generator.params());
}

#[test]
fn schedule_can_be_extended_but_not_rewound() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::new(dir.path());
    let mut t = trainer(2, 3);
    run_training(&mut t, &paths, None).unwrap();
    assert!(t.is_done());
    assert!(matches!(t.set_total_steps(2), Err(Error::Config(_))));
    t.set_total_steps(5).unwrap();
    run_training(&mut t, &paths, None).unwrap();
    assert_eq!(read_log(&paths.log()).unwrap().len(), 5);
}
