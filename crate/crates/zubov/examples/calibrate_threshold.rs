//! Data-driven choice of the divergence threshold M and the scale alpha.
//!
//! Samples the plane uniformly, computes I at every sample with a generous
//! provisional threshold, and picks M as a rounded 2x of the largest
//! converged integral --- leaving a visible gap between the converged cluster
//! and the censored mass, with alpha = 20/M mapping censored states into the
//! far tanh saturation zone.
//!
//! ```bash
//! cargo run --release --example calibrate_threshold
//! ```

use rayon::prelude::*;
use zubov::dynsys::{sample_one, Region, SystemModel, WKind};
use zubov::zubov::{calibrate, compute_i, ZubovConfig};

fn main() -> anyhow::Result<()> {
    let sys = SystemModel::vanderpol();
    let w = WKind::distance_to_origin(2);
    let region = Region::cube(-4.0, 4.0, 2)?;
    let scan_cfg = ZubovConfig::with_threshold(1000.0); // provisional, generous

    let n = 800;
    let outcomes: Result<Vec<_>, _> = (0..n)
        .into_par_iter()
        .map(|i| compute_i(&sys, &w, &sample_one(&region, 0, i), &scan_cfg))
        .collect();
    let outcomes = outcomes?;

    let calibration = calibrate(&outcomes)?;
    print!("{calibration}");

    // Coarse text histogram of the converged cluster.
    let max = calibration.max_converged_i;
    let mut bins = [0usize; 10];
    for o in &outcomes {
        if let Some(i) = o.i_value() {
            bins[((i / max * 9.99) as usize).min(9)] += 1;
        }
    }
    println!("\nconverged I distribution (0 .. {max:.1}):");
    for (k, count) in bins.iter().enumerate() {
        println!(
            "  [{:5.1}, {:5.1}) {:4} {}",
            k as f64 / 10.0 * max,
            (k + 1) as f64 / 10.0 * max,
            count,
            "#".repeat((count * 60 / outcomes.len()).max(usize::from(*count > 0)))
        );
    }
    Ok(())
}
