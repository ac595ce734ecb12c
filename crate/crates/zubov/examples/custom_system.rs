//! Bring your own dynamics: any closure over state slices works as a
//! system. Here a damped pendulum (angle, velocity) with its downward rest
//! point refined by Newton iteration, then classified around the separatrix.
//!
//! ```bash
//! cargo run --release --example custom_system
//! ```

use zubov::dynsys::{refine_equilibrium, SystemModel, WKind};
use zubov::zubov::{compute_i, eval_v, IValueKind, ZubovConfig};

fn main() -> anyhow::Result<()> {
    // theta' = omega, omega' = -sin(theta) - 0.3 omega
    let sys = SystemModel::new("pendulum", 2, |x, out| {
        out[0] = x[1];
        out[1] = -x[0].sin() - 0.3 * x[1];
    })
    .with_equilibrium_hint(vec![0.1, -0.05]);

    let x_e = refine_equilibrium(&sys, sys.equilibrium_hint().unwrap())?;
    println!("refined rest point: ({:.2e}, {:.2e})", x_e[0], x_e[1]);

    // The pendulum has saddle equilibria at theta = +-pi, so the squared
    // field norm (which vanishes there too) would blur the basin; distance
    // to the refined rest point is the right weight here.
    let w = WKind::DistanceSquared { center: x_e };
    let cfg = ZubovConfig::with_threshold(500.0);

    println!("\n{:>8} {:>8} {:>10}  verdict", "theta", "omega", "V");
    for x0 in [
        [0.5, 0.0],
        [2.0, 0.0],
        [3.0, 0.0],
        [0.0, 2.2],
        [0.0, 2.8],
    ] {
        let outcome = compute_i(&sys, &w, &x0, &cfg)?;
        match outcome.kind {
            IValueKind::Inconclusive => {
                println!("{:>8.2} {:>8.2} {:>10}  inconclusive", x0[0], x0[1], "-")
            }
            _ => {
                let v = eval_v(&outcome, cfg.alpha)?;
                let verdict = if v < 1.0 { "swings back" } else { "tumbles over" };
                println!("{:>8.2} {:>8.2} {:>10.5}  {verdict}", x0[0], x0[1], v);
            }
        }
    }
    Ok(())
}
