//! Central-difference check of the autodiff tape on a small attention
//! block: softmax(Q Kᵀ) V followed by a rectified projection.
//!
//! cargo run --example gradient_check

use jointdiff::numerics::gradcheck::check_gradients;
use jointdiff::numerics::SeededRng;

fn main() -> anyhow::Result<()> {
    for seed in 0..5 {
        let mut rng = SeededRng::new(seed);
        let params = vec![
            rng.gaussian(1, 4)?, // query
            rng.gaussian(6, 4)?, // keys
            rng.gaussian(6, 4)?, // values
            rng.gaussian(4, 3)?, // output projection
        ];
        let report = check_gradients(&params, 1e-3, |g, v| {
            let logits = g.matmul_t(v[0], v[1])?;
            let attn = g.softmax_rows(logits)?;
            let e = g.matmul(attn, v[2])?;
            let h = g.matmul(e, v[3])?;
            let h = g.relu(h)?;
            g.sum(h)
        })?;
        println!(
            "seed {seed}: {} entries checked, {} at kinks, max relative error {:.2e}",
            report.checked, report.skipped, report.max_rel_error
        );
    }
    Ok(())
}
