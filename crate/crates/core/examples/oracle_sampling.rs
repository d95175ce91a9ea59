//! Runs DDIM and DDPM against an oracle that always returns the true
//! signal, showing that both samplers land on it.
//!
//! cargo run --example oracle_sampling

use jointdiff::numerics::SeededRng;
use jointdiff::objectives::joint_target;
use jointdiff::sampler::{sample, OracleDenoiser, SamplerConfig, SamplingStrategy};
use jointdiff::schedule::{NoiseSchedule, ScheduleKind};

fn main() -> anyhow::Result<()> {
    let sched = NoiseSchedule::new(ScheduleKind::Cosine, 50, 1.0)?;
    let target = joint_target(2, 6, 1.0, 0.1)?;
    let oracle = OracleDenoiser {
        signal: target.signal.clone(),
    };
    println!("target signal   {:.3?}", target.signal);
    println!("target p0       {:.3?}", target.prob);
    for (strategy, steps) in [
        (SamplingStrategy::Ddim, 1),
        (SamplingStrategy::Ddim, 10),
        (SamplingStrategy::Ddim, 50),
        (SamplingStrategy::Ddpm, 50),
    ] {
        let cfg = SamplerConfig {
            strategy,
            ..SamplerConfig::new(steps, 1.0)
        };
        let out = sample(&oracle, &sched, &cfg, &mut SeededRng::new(3), false)?;
        let err = out
            .terminal
            .iter()
            .zip(&target.signal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{strategy} {steps:>2} steps: terminal max error {err:.2e}, readout {:.3?}", out.prob);
    }
    Ok(())
}
