//! Consistency check of the computed V against its defining PDE: along any
//! attracted trajectory, dV/dt + alpha (1 + V) W (1 - V) = 0. The residual is
//! formed by finite differences on a densely sampled trajectory, so a small
//! value ties the integrator, the weight function, and the tanh scaling
//! together.
//!
//! ```bash
//! cargo run --release --example pde_residual
//! ```

use zubov::dynsys::{SystemModel, WKind};
use zubov::zubov::{zubov_residual, ZubovConfig};

fn main() -> anyhow::Result<()> {
    let cfg = ZubovConfig::default();

    let linear = SystemModel::linear_contraction(2);
    let w = WKind::distance_to_origin(2);
    println!("{:>12}  {:>14}  starting point", "system", "max residual");
    for x0 in [[1.0, 0.0], [2.0, 1.0]] {
        let r = zubov_residual(&linear, &w, &x0, &cfg)?;
        println!("{:>12}  {:>14.3e}  {x0:?}", "linear", r);
    }

    let vdp = SystemModel::vanderpol();
    for x0 in [[0.5, 0.0], [1.0, -0.5], [-1.2, 0.6]] {
        let r = zubov_residual(&vdp, &w, &x0, &cfg)?;
        println!("{:>12}  {:>14.3e}  {x0:?}", "van der Pol", r);
    }
    Ok(())
}
