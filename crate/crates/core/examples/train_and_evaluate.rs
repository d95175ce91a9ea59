//! Trains on the default synthetic corpus and reports retrieval metrics in
//! both directions.
//!
//! cargo run --release --example train_and_evaluate -- [strategy] [epochs] [seed]

use std::time::Instant;

use jointdiff::corpus::{generate, split, DomainSpec};
use jointdiff::denoiser::Direction;
use jointdiff::pipeline::{evaluate, train, EvalConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = TrainConfig::default();
    if let Some(s) = args.first() {
        cfg.strategy = s.parse()?;
    }
    if let Some(e) = args.get(1) {
        cfg.epochs = e.parse()?;
    }
    if let Some(s) = args.get(2) {
        cfg.seed = s.parse()?;
    }

    let corpus = generate(&DomainSpec::default(), cfg.seed)?;
    let (train_set, test_set) = split(&corpus, 0.8, cfg.seed)?;
    println!("{} train pairs, {} test pairs", train_set.len(), test_set.len());

    let start = Instant::now();
    let outcome = train(&train_set, &cfg)?;
    for l in outcome.losses.iter().step_by((cfg.epochs / 10).max(1)) {
        println!(
            "epoch {:>3}  loss {:.4}  disc {:.4}  gen {:.4}",
            l.epoch, l.total, l.discrimination, l.generation
        );
    }
    println!("trained {} epochs in {:.1?}", cfg.epochs, start.elapsed());

    for (dir, w) in Direction::BOTH
        .into_iter()
        .flat_map(|d| [(d, None), (d, Some(0.0)), (d, Some(1.0))])
    {
        let eval = EvalConfig {
            fusion_weight: w,
            ..EvalConfig::default()
        };
        let t = Instant::now();
        let r = evaluate(&outcome.model, &test_set, dir, &eval)?;
        println!(
            "{dir} w={:.2}: R@1 {:.1}  R@5 {:.1}  R@10 {:.1}  MdR {}  MnR {:.2}  AUROC {:.3}  ({:.1?})",
            r.fusion_weight,
            r.metrics.r1,
            r.metrics.r5,
            r.metrics.r10,
            r.metrics.mdr,
            r.metrics.mnr,
            r.auroc,
            t.elapsed()
        );
    }
    Ok(())
}
