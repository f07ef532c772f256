//! A small replication study over all three variants, run in parallel.
//!
//! ```bash
//! cargo run --release --example simulation_study
//! ```

use skewgibbs::gibbs::ChainConfig;
use skewgibbs::simstudy::{run_study, DesignKind, StudyConfig};

fn main() -> skewgibbs::Result<()> {
    let config = StudyConfig {
        designs: vec![DesignKind::Diag, DesignKind::Sparse],
        n: 4,
        t: 300,
        reps: 3,
        chain: ChainConfig::new(500, 1000, 1),
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..StudyConfig::scaled(1)
    };
    let report = run_study(&config)?;
    println!("{:<8} {:<9} {:>4} {:>10} {:>10}", "design", "variant", "ok", "Δ-loss", "Ω-loss");
    for c in &report.cells {
        println!(
            "{:<8} {:<9} {:>4} {:>10.3} {:>10.3}",
            c.design.name(),
            c.variant.name(),
            c.completed,
            c.median_delta_loss,
            c.median_omega_loss
        );
    }
    println!("{:.1}s on {} workers", report.wall_seconds, config.workers);
    Ok(())
}
