use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use jointdiff::corpus::{generate, load, save, split, DomainShift, DomainSpec};
use jointdiff::denoiser::Direction;
use jointdiff::numerics::{Graph, SeededRng};
use jointdiff::objectives::joint_target;
use jointdiff::pipeline::eval::trace_with;
use jointdiff::pipeline::{
    evaluate, hybrid_loss, out_domain_eval, train, BatchNoise, EvalConfig, Model, Strategy, TrainConfig,
};
use jointdiff::sampler::{OracleDenoiser, SamplerConfig};
use jointdiff::schedule::{NoiseSchedule, ScheduleKind};

fn small_domain() -> DomainSpec {
    DomainSpec {
        classes: 4,
        pairs_per_class: 8,
        input_dim: 12,
        words: 4,
        frames: 4,
        ..DomainSpec::default()
    }
}

fn small_cfg(strategy: Strategy, epochs: usize) -> TrainConfig {
    TrainConfig {
        strategy,
        epochs,
        batch_size: 8,
        steps: 10,
        model_dim: 8,
        hidden_dim: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_model_and_losses() {
    let corpus = generate(&small_domain(), 3).unwrap();
    let cfg = small_cfg(Strategy::Both, 3);
    let a = train(&corpus, &cfg).unwrap();
    let b = train(&corpus, &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.model, b.model);
    let other = train(&corpus, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.losses, other.losses);
}

#[test]
fn discriminative_loss_halves_on_a_separable_corpus() {
    let spec = DomainSpec {
        classes: 16,
        pairs_per_class: 1,
        ..DomainSpec::default()
    };
    let corpus = generate(&spec, 0).unwrap();
    let cfg = TrainConfig {
        strategy: Strategy::Dis,
        epochs: 30,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let losses = train(&corpus, &cfg).unwrap().losses;
    let (first, last) = (losses[0].total, losses.last().unwrap().total);
    assert!(last <= 0.5 * first, "loss went {first:.4} -> {last:.4}");
    assert!(losses.iter().all(|l| l.generation == 0.0));
}

#[test]
fn single_pair_batch_has_zero_contrastive_loss() {
    let corpus = generate(&small_domain(), 0).unwrap();
    let cfg = small_cfg(Strategy::Dis, 1);
    let model = Model::init(&cfg, corpus.input_dim()).unwrap();
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, true);
    let den = model.denoiser.bind(&mut g, true);
    let noise = BatchNoise::draw(1, cfg.steps, &mut SeededRng::new(0));
    let nodes = hybrid_loss(
        &mut g,
        &enc,
        &den,
        &[&corpus.texts[0]],
        &[&corpus.videos[0]],
        &noise,
        &cfg,
        &model.schedule,
    )
    .unwrap();
    assert!(g.value(nodes.discrimination.unwrap()).item().abs() < 1e-12);
}

#[test]
fn hybrid_loss_reaches_every_parameter_group() {
    let corpus = generate(&small_domain(), 0).unwrap();
    let cfg = small_cfg(Strategy::Both, 1);
    let model = Model::init(&cfg, corpus.input_dim()).unwrap();
    let mut g = Graph::new();
    let enc = model.encoder.bind(&mut g, true);
    let den = model.denoiser.bind(&mut g, true);
    let noise = BatchNoise::draw(4, cfg.steps, &mut SeededRng::new(0));
    let texts: Vec<_> = corpus.texts[..4].iter().collect();
    let videos: Vec<_> = corpus.videos[..4].iter().collect();
    let nodes = hybrid_loss(&mut g, &enc, &den, &texts, &videos, &noise, &cfg, &model.schedule).unwrap();
    assert!(nodes.discrimination.is_some() && nodes.generation.is_some());
    let grads = g.backward(nodes.total).unwrap();
    let touched = |vars: Vec<_>| {
        vars.into_iter()
            .filter(|&v| grads.get(v).is_some_and(|t| t.data().iter().any(|x| *x != 0.0)))
            .count()
    };
    assert!(touched(enc.vars()) > 0);
    assert!(touched(den.vars()) > 0);
}

#[test]
fn reports_do_not_depend_on_gallery_order() {
    let corpus = generate(&small_domain(), 5).unwrap();
    let cfg = small_cfg(Strategy::Both, 2);
    let model = train(&corpus, &cfg).unwrap().model;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    SeededRng::new(11).shuffle(&mut order);
    let shuffled = corpus.select(&order);
    let eval = EvalConfig {
        fusion_weight: Some(0.0),
        ..EvalConfig::default()
    };
    for dir in [Direction::TextToVideo, Direction::VideoToText] {
        let a = evaluate(&model, &corpus, dir, &eval).unwrap();
        let b = evaluate(&model, &shuffled, dir, &eval).unwrap();
        let mut ra = a.ranks.clone();
        let mut rb = b.ranks.clone();
        ra.sort_unstable();
        rb.sort_unstable();
        assert_eq!(ra, rb);
        assert_eq!(a.metrics, b.metrics);
        assert!((a.auroc - b.auroc).abs() < 1e-12);
    }
}

#[test]
fn untrained_model_separates_at_chance() {
    let spec = DomainSpec::default();
    let corpus = generate(&spec, 0).unwrap();
    let (_, test) = split(&corpus, 0.8, 0).unwrap();
    let shifted = generate(
        &DomainSpec {
            shift: Some(DomainShift::default()),
            ..spec
        },
        0,
    )
    .unwrap();
    let (_, shifted_test) = split(&shifted, 0.8, 0).unwrap();
    let model = Model::init(&TrainConfig::default(), corpus.input_dim()).unwrap();
    let (a, b) = out_domain_eval(&model, &test, &shifted_test, Direction::TextToVideo, &EvalConfig::default()).unwrap();
    for r in [&a, &b] {
        assert!((0.4..=0.6).contains(&r.auroc), "untrained AUROC {:.3}", r.auroc);
    }
}

#[test]
fn identical_domains_give_identical_reports() {
    let corpus = generate(&small_domain(), 2).unwrap();
    let model = train(&corpus, &small_cfg(Strategy::Both, 1)).unwrap().model;
    let (a, b) = out_domain_eval(&model, &corpus, &corpus, Direction::TextToVideo, &EvalConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trace_with_log_target_oracle_ends_on_the_target() {
    let target = joint_target(2, 6, 1.0, 0.1).unwrap();
    let oracle = OracleDenoiser {
        signal: target.prob.iter().map(|p| p.ln()).collect(),
    };
    let sched = NoiseSchedule::new(ScheduleKind::Cosine, 50, 1.0).unwrap();
    let cfg = SamplerConfig {
        clamp: 10.0,
        ..SamplerConfig::new(10, 1.0)
    };
    let t = trace_with(&oracle, &sched, &cfg, &mut SeededRng::new(0), Direction::TextToVideo, 7, 2).unwrap();
    assert_eq!(t.rows.len(), 11);
    for row in &t.rows {
        assert!((row.prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    for (p, q) in t.rows.last().unwrap().prob.iter().zip(&target.prob) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn thousand_pair_corpus_survives_the_disk() {
    let spec = DomainSpec {
        classes: 20,
        pairs_per_class: 50,
        ..DomainSpec::default()
    };
    let corpus = generate(&spec, 4).unwrap();
    assert_eq!(corpus.len(), 1000);
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.dfcx"), dir.path().join("b.dfcx"));
    save(&corpus, &p1).unwrap();
    let back = load(&p1).unwrap();
    save(&back, &p2).unwrap();
    let digest = |bytes: &[u8]| {
        let mut h = DefaultHasher::new();
        bytes.hash(&mut h);
        h.finish()
    };
    let (b1, b2) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(digest(&b1), digest(&b2));
    assert_eq!(b1, b2);
    assert_eq!(back.texts, corpus.texts);
    assert_eq!(back.videos, corpus.videos);
}
