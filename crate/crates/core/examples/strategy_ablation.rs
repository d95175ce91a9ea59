//! Trains the generation-only, discrimination-only and hybrid variants on
//! the same corpus and prints text-to-video metrics for each.
//!
//! cargo run --release --example strategy_ablation -- [seed] [epochs]

use jointdiff::corpus::{generate, split, DomainSpec};
use jointdiff::denoiser::Direction;
use jointdiff::pipeline::{ablate, Axis, RunConfig, SweepValues};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut cfg = RunConfig::default();
    cfg.train.seed = seed;
    if let Some(e) = args.next() {
        cfg.train.epochs = e.parse()?;
    }
    let corpus = generate(&DomainSpec::default(), seed)?;
    let (train_set, test_set) = split(&corpus, 0.8, seed)?;
    let outcomes = ablate(
        Axis::Strategy,
        &cfg,
        &SweepValues::default(),
        &train_set,
        &test_set,
        Direction::TextToVideo,
    )?;
    for o in outcomes {
        if let Some(r) = o.report {
            println!(
                "{:<5} w={:.1}  R@1 {:5.1}  R@5 {:5.1}  R@10 {:5.1}  MdR {}",
                o.label, r.fusion_weight, r.metrics.r1, r.metrics.r5, r.metrics.r10, r.metrics.mdr
            );
        }
    }
    Ok(())
}
