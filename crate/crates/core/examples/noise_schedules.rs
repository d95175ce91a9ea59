//! Prints the linear and cosine schedules side by side and compares the
//! iterated forward process with its closed form.
//!
//! cargo run --example noise_schedules -- [steps]

use jointdiff::numerics::SeededRng;
use jointdiff::schedule::{NoiseSchedule, ScheduleKind};

fn main() -> anyhow::Result<()> {
    let steps: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(50);
    let lin = NoiseSchedule::new(ScheduleKind::Linear, steps, 1.0)?;
    let cos = NoiseSchedule::new(ScheduleKind::Cosine, steps, 1.0)?;
    println!("{:>4} {:>10} {:>10} {:>10} {:>10}", "k", "β lin", "ᾱ lin", "β cos", "ᾱ cos");
    for k in (1..=steps).step_by((steps / 10).max(1)).chain([steps]) {
        println!(
            "{k:>4} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            lin.beta(k)?,
            lin.alpha_bar(k)?,
            cos.beta(k)?,
            cos.alpha_bar(k)?
        );
    }

    let trials = 10_000;
    let x0 = [1.0, -1.0];
    let mut rng = SeededRng::new(0);
    let (mut it, mut cf) = ([0.0; 2], [0.0; 2]);
    for _ in 0..trials {
        let mut x = x0.to_vec();
        for k in 1..=steps {
            x = cos.forward_step(&x, k, &rng.normals(2))?;
        }
        let y = cos.forward_diffuse(&x0, steps, &rng.normals(2))?;
        for j in 0..2 {
            it[j] += x[j] * x[j] / trials as f64;
            cf[j] += y[j] * y[j] / trials as f64;
        }
    }
    println!("E[x_K²] iterated {:.4?} vs closed form {:.4?}", it, cf);
    Ok(())
}
