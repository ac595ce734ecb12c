//! Pointwise classification: compute I(x) and V(x) = tanh(alpha I(x)) for a
//! handful of van der Pol states and report which side of the attraction
//! boundary they sit on.
//!
//! ```bash
//! cargo run --release --example classify_state
//! ```

use zubov::dynsys::{SystemModel, WKind};
use zubov::zubov::{compute_i, eval_v, IValueKind, ZubovConfig};

fn main() -> anyhow::Result<()> {
    let sys = SystemModel::vanderpol();
    let w = WKind::distance_to_origin(2);
    let cfg = ZubovConfig::default(); // delta_I = 1e-6, M = 200, alpha = 0.1

    println!("{:>12} {:>12} {:>10} {:>8}  verdict", "x1", "x2", "I(x)", "V(x)");
    for x0 in [
        [0.0, 0.0],
        [0.5, 0.5],
        [1.0, -1.0],
        [1.8, 0.0],
        [2.2, 0.0],
        [4.0, 4.0],
    ] {
        let outcome = compute_i(&sys, &w, &x0, &cfg)?;
        match outcome.kind {
            IValueKind::Converged { i_value } => {
                let v = eval_v(&outcome, cfg.alpha)?;
                println!(
                    "{:>12.3} {:>12.3} {:>10.4} {:>8.4}  inside (converged at t = {:.1})",
                    x0[0], x0[1], i_value, v, outcome.elapsed
                );
            }
            IValueKind::Exceeded => {
                println!(
                    "{:>12.3} {:>12.3} {:>10} {:>8}  outside or boundary layer",
                    x0[0], x0[1], "> 200", "1"
                );
            }
            IValueKind::Inconclusive => {
                println!("{:>12.3} {:>12.3}  inconclusive within t_max", x0[0], x0[1]);
            }
        }
    }
    Ok(())
}
