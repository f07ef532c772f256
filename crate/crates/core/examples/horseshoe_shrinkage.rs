//! Horseshoe and graphical horseshoe priors against the normal–Wishart prior
//! on a sparse skewness matrix with identity Ω.
//!
//! ```bash
//! cargo run --release --example horseshoe_shrinkage
//! ```

use nalgebra::DVector;
use skewgibbs::distributions::RngStream;
use skewgibbs::gibbs::{run_chain, ChainConfig};
use skewgibbs::model::{PriorConfig, Tail, Variant};
use skewgibbs::numerics::SpdMatrix;
use skewgibbs::simstudy::{frobenius_loss, make_delta_design, simulate_data, DesignKind};

fn main() -> skewgibbs::Result<()> {
    let n = 5;
    let delta = make_delta_design(DesignKind::Sparse, n)?;
    let omega = SpdMatrix::identity(n);
    let data = simulate_data(&DVector::zeros(n), &delta, &omega, 400, &mut RngStream::new(11, 0))?;

    for variant in [Variant::LtNowi, Variant::LtHsghs] {
        let prior = PriorConfig::defaults(n, variant, Tail::SkewNormal);
        let fit = run_chain(&data, &prior, &ChainConfig::new(2000, 4000, 1), &mut RngStream::new(11, 1))?;
        println!("{variant}");
        println!("  mean delta{:.2}", fit.mean_delta);
        println!("  mean omega{:.2}", fit.mean_omega);
        println!(
            "  loss delta {:.3}, omega {:.3}",
            frobenius_loss(&fit.mean_delta, &delta)?,
            frobenius_loss(&fit.mean_omega, omega.matrix())?
        );
    }
    Ok(())
}
