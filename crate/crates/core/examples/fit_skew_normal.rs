//! Fit a lower-triangular skew-normal model to simulated data and print the
//! posterior means next to the truth.
//!
//! ```bash
//! cargo run --release --example fit_skew_normal
//! ```

use nalgebra::dvector;
use skewgibbs::distributions::RngStream;
use skewgibbs::gibbs::{run_chain, ChainConfig};
use skewgibbs::model::{PriorConfig, Tail, Variant};
use skewgibbs::numerics::SpdMatrix;
use skewgibbs::simstudy::{frobenius_loss, make_delta_design, simulate_data, DesignKind};

fn main() -> skewgibbs::Result<()> {
    let n = 3;
    let mu = dvector![1.0, 0.0, -1.0];
    let delta = make_delta_design(DesignKind::Sparse, n)?;
    let omega = SpdMatrix::identity(n);
    let mut rng = RngStream::new(42, 0);
    let data = simulate_data(&mu, &delta, &omega, 500, &mut rng)?;

    let prior = PriorConfig::defaults(n, Variant::LtNowi, Tail::SkewNormal);
    let fit = run_chain(&data, &prior, &ChainConfig::new(1000, 2000, 1), &mut rng)?;

    println!("{} draws in {:.2}s", fit.stored_draws, fit.wall_seconds);
    println!("mu   truth {:?}", mu.as_slice());
    println!("mu   mean  {:.3?}", fit.mean_mu.as_slice());
    println!("delta truth{delta:.3}delta mean{:.3}", fit.mean_delta);
    println!("omega mean{:.3}", fit.mean_omega);
    println!("delta loss {:.3}", frobenius_loss(&fit.mean_delta, &delta)?);
    Ok(())
}
