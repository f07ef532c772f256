//! The graphical horseshoe column update draws ω₂₁ from a Gaussian truncated
//! to an ellipsoid. Compare hit-and-run moves with plain rejection sampling.
//!
//! ```bash
//! cargo run --release --example hit_and_run
//! ```

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use skewgibbs::distributions::{draw_mvn_from_precision, RngStream};
use skewgibbs::horseshoe::hit_and_run_omega21;
use skewgibbs::numerics::SpdMatrix;

fn mean(xs: &[DVector<f64>]) -> DVector<f64> {
    xs.iter().fold(DVector::zeros(xs[0].len()), |acc, x| acc + x) / xs.len() as f64
}

fn main() -> skewgibbs::Result<()> {
    let inv = dmatrix![1.2, 0.3; 0.3, 0.8];
    let s21 = dvector![-0.8, 0.5];
    let a = dvector![0.5, 2.0];
    let (omega11, s11) = (0.6, 1.5);
    let precision = SpdMatrix::new(DMatrix::from_diagonal(&a) + &inv * s11)?;
    let center = -precision.solve(&s21);
    let inside = |x: &DVector<f64>| x.dot(&(&inv * x)) < omega11;

    let mut rng = RngStream::new(1, 0);
    let mut w = DVector::zeros(2);
    let mut chain = Vec::new();
    for _ in 0..50_000 {
        w = hit_and_run_omega21(&w, omega11, &inv, &s21, s11, &a, &mut rng)?;
        chain.push(w.clone());
    }
    let mut tries = 0;
    let mut accepted = Vec::new();
    while accepted.len() < 50_000 {
        tries += 1;
        let x = draw_mvn_from_precision(&center, &precision, &mut rng)?;
        if inside(&x) {
            accepted.push(x);
        }
    }
    println!("untruncated mean {:.4?}", center.as_slice());
    println!("hit-and-run mean {:.4?}", mean(&chain).as_slice());
    println!("rejection mean   {:.4?}  (acceptance {:.2})", mean(&accepted).as_slice(), 50_000.0 / tries as f64);
    println!("all hit-and-run states feasible: {}", chain.iter().all(inside));
    Ok(())
}
