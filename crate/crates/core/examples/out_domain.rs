//! Trains on one synthetic domain and evaluates the frozen model on its own
//! test split and on an affinely shifted copy.
//!
//! cargo run --release --example out_domain -- [seed] [epochs]

use jointdiff::corpus::{generate, split, DomainShift, DomainSpec};
use jointdiff::denoiser::Direction;
use jointdiff::pipeline::{out_domain_eval, train, EvalConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(e) = args.next() {
        cfg.epochs = e.parse()?;
    }
    let spec = DomainSpec::default();
    let (train_a, test_a) = split(&generate(&spec, seed)?, 0.8, seed)?;
    let shifted = DomainSpec {
        shift: Some(DomainShift::default()),
        ..spec
    };
    let (_, test_b) = split(&generate(&shifted, seed)?, 0.8, seed)?;

    let model = train(&train_a, &cfg)?.model;
    let (a, b) = out_domain_eval(&model, &test_a, &test_b, Direction::TextToVideo, &EvalConfig::default())?;
    for (label, r) in [("in-domain", &a), ("shifted", &b)] {
        println!("{label:<10} R@1 {:5.1}  MdR {}  AUROC {:.3}", r.metrics.r1, r.metrics.mdr, r.auroc);
        let h = &r.positive_hist;
        println!("  positive-pair score histogram {:?}", h.counts);
        println!("  negative-pair score histogram {:?}", r.negative_hist.counts);
    }
    Ok(())
}
