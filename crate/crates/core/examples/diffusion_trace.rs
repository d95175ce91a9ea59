//! Follows one text-to-video query from pure noise to the final joint
//! distribution and prints the probability of the true video at each step.
//!
//! cargo run --release --example diffusion_trace -- [epochs] [eval_steps]

use jointdiff::corpus::{generate, split, DomainSpec};
use jointdiff::denoiser::Direction;
use jointdiff::pipeline::{diffusion_trace, train, EvalConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = TrainConfig::default();
    if let Some(e) = args.next() {
        cfg.epochs = e.parse()?;
    }
    let eval = EvalConfig {
        eval_steps: Some(args.next().map(|s| s.parse()).transpose()?.unwrap_or(10)),
        ..EvalConfig::default()
    };
    let (train_set, test_set) = split(&generate(&DomainSpec::default(), 0)?, 0.8, 0)?;
    let model = train(&train_set, &cfg)?.model;
    let query = test_set.manifest.pairs[0].text_id;
    let trace = diffusion_trace(&model, &test_set, query, Direction::TextToVideo, &eval)?;
    println!("query text {query}, true video at gallery position {}", trace.positive);
    for row in &trace.rows {
        let best = row
            .prob
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        println!(
            "step {:>2} (k={:>2}): p(true) {:.4}  argmax {best}",
            row.step, row.level, row.prob[trace.positive]
        );
    }
    Ok(())
}
