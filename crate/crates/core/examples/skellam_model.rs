//! Evaluates the Poisson signing model: accuracy as a function of the quote
//! lag for a fixed and a random reporting lag, then recovers the intensities
//! from a noisy curve by least squares.
//!
//! Run with `cargo run --release --example skellam_model`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tickflow::skellam::{calibrate, model_curve, skellam_cdf, LagDensity, SkellamParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("P(N1 - N2 <= 0) for N1 ~ Poisson(2), N2 ~ Poisson(3): {:.6}", skellam_cdf(0, 2.0, 3.0)?);

    let params = SkellamParams::symmetric(1.0, 1.0, 0.6);
    let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.01).collect();
    let dirac = model_curve(&params, &LagDensity::Dirac { delta: 0.1 }, &grid)?;
    let uniform: LagDensity = "uniform 0.05 0.15".parse()?;
    let spread = model_curve(&params, &uniform, &grid)?;
    println!("{:>6} {:>8} {:>8}", "lag", "dirac", "uniform");
    for ((lag, a), (_, b)) in dirac.iter().zip(&spread).step_by(4) {
        println!("{lag:>6.2} {a:>8.4} {b:>8.4}");
    }

    // a curve measured with binomial noise, then fitted from a neutral start
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noisy: Vec<(f64, f64)> = spread.iter().map(|&(x, p)| (x, p + 0.002 * (rng.random::<f64>() - 0.5))).collect();
    let fit = calibrate(&noisy, &uniform, &SkellamParams::symmetric(0.5, 0.5, 0.5))?;
    let p = fit.params;
    println!(
        "fitted: lc+ {:.3} lc- {:.3} m+ {:.3} m- {:.3} rho_agg {:.3} (residual norm {:.2e})",
        p.lambda_lc_plus, p.lambda_lc_minus, p.lambda_m_plus, p.lambda_m_minus, p.rho_agg, fit.residual_norm
    );
    // a single curve constrains the up and down rates only jointly
    println!("up rate {:.3}, down rate {:.3} (generated with 2 and 2)", p.up_rate(), p.down_rate());
    Ok(())
}
