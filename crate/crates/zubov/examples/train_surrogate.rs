//! Train the feedforward surrogate V_NN on generated data and compare its
//! predictions against fresh direct evaluations.
//!
//! ```bash
//! cargo run --release --example train_surrogate
//! ```

use zubov::datagen::generate_dataset;
use zubov::dynsys::{Region, SystemModel, WKind};
use zubov::mlp::{forward, init_params, save_model, train, validate, MlpArchitecture, TrainConfig};
use zubov::zubov::{compute_i, eval_v, ZubovConfig};

fn main() -> anyhow::Result<()> {
    let sys = SystemModel::vanderpol();
    let w = WKind::distance_to_origin(2);
    let cfg = ZubovConfig::default();
    let region = Region::cube(-1.0, 1.0, 2)?;

    println!("generating 600 + 300 trajectories ...");
    let train_set = generate_dataset(&sys, &w, &cfg, &region, 600, 4, 1)?;
    let val_set = generate_dataset(&sys, &w, &cfg, &region, 300, 4, 2)?;

    let arch = MlpArchitecture::new(2, vec![32, 32])?;
    let p0 = init_params(&arch, 0);
    let train_cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 128,
        epochs: 150,
        seed: 0,
        ..TrainConfig::default()
    };
    println!(
        "training 2x32 tanh network on {} points ...",
        train_set.len()
    );
    let (best, history) = train(&p0, &train_set, &val_set, &train_cfg)?;
    let stats = validate(&best, &val_set)?;
    println!(
        "epoch {:>3}: train loss {:.3e}, validation RMSE {:.3e}",
        history.last().unwrap().epoch,
        history.last().unwrap().train_loss,
        stats.rmse
    );
    println!(
        "signed-error percentiles: p25 = {:+.2e}, p75 = {:+.2e}, max |e| = {:.2e}",
        stats.p25, stats.p75, stats.max_abs_error
    );

    // Spot-check the surrogate against direct integration.
    println!("\n{:>8} {:>8} {:>10} {:>10}", "x1", "x2", "V direct", "V_NN");
    for x0 in [[0.2, 0.1], [0.6, -0.4], [-0.9, 0.8]] {
        let direct = eval_v(&compute_i(&sys, &w, &x0, &cfg)?, cfg.alpha)?;
        let nn = forward(&best, &x0)?;
        println!("{:>8.2} {:>8.2} {:>10.5} {:>10.5}", x0[0], x0[1], direct, nn);
    }

    let path = std::env::temp_dir().join("zubov-example-model.txt");
    save_model(&best, &path)?;
    println!("\nmodel saved to {}", path.display());
    Ok(())
}
