//! Transient-stability workflow on the shipped ten-machine swing model:
//! load parameters, refine the synchronous equilibrium, and classify
//! disturbed states in the standard sampling region. The squared-field-norm
//! weight handles the continuum of synchronous equilibria (any uniform angle
//! shift balances).
//!
//! ```bash
//! cargo run --release --example swing_stability
//! ```

use rayon::prelude::*;
use zubov::dynsys::{refine_equilibrium, sample_one, swing_region, SwingParams, SystemModel, WKind};
use zubov::zubov::{compute_i, IValueKind, ZubovConfig};

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/new_england_39bus.params");
    let params = SwingParams::from_file(path)?;
    println!(
        "{} machines, f0 = {} Hz, D = {}",
        params.m, params.f0, params.d
    );

    let sys = SystemModel::swing(params.clone());
    let x_eq = refine_equilibrium(&sys, &params.equilibrium_guess())?;
    let residual: f64 = sys
        .field_at(&x_eq)?
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    println!("equilibrium residual |f(x_e)| = {residual:.2e}");
    let angles: Vec<String> = (0..params.m)
        .map(|i| format!("{:+.4}", x_eq[2 * i + 1]))
        .collect();
    println!("rotor angles: [{}]", angles.join(", "));

    // Classify uniform samples of the +-1.5 rad/s, +-0.4 pi rad region.
    let region = swing_region(&params, &x_eq)?;
    let w = WKind::FieldNormScaled { scale: 1000.0 };
    let cfg = ZubovConfig::with_threshold(250.0);
    let n = 200;
    println!("\nclassifying {n} disturbed states (parallel) ...");
    let outcomes: Result<Vec<_>, _> = (0..n)
        .into_par_iter()
        .map(|i| compute_i(&sys, &w, &sample_one(&region, 42, i), &cfg))
        .collect();
    let outcomes = outcomes?;
    let mut stable = 0;
    let mut unstable = 0;
    let mut unknown = 0;
    let mut max_i = 0.0f64;
    for o in &outcomes {
        match o.kind {
            IValueKind::Converged { i_value } => {
                stable += 1;
                max_i = max_i.max(i_value);
            }
            IValueKind::Exceeded => unstable += 1,
            IValueKind::Inconclusive => unknown += 1,
        }
    }
    println!(
        "stable {stable}, unstable/boundary {unstable}, inconclusive {unknown}; \
         largest converged I = {max_i:.2}"
    );
    Ok(())
}
