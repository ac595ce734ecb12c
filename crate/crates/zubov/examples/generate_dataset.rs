//! Labeled-dataset generation with along-trajectory augmentation.
//!
//! Every converged trajectory yields its anchor point plus extra points where
//! the accumulated integral crosses even quantiles of I, labeled
//! tanh(alpha (I - z)) --- five labels for the price of one integration. The
//! dataset is written in the plain-text format and read back.
//!
//! ```bash
//! cargo run --release --example generate_dataset
//! ```

use zubov::datagen::{generate_dataset, label_histogram, read_dataset, write_dataset};
use zubov::dynsys::{Region, SystemModel, WKind};
use zubov::zubov::ZubovConfig;

fn main() -> anyhow::Result<()> {
    let sys = SystemModel::vanderpol();
    let w = WKind::distance_to_origin(2);
    let cfg = ZubovConfig::default();
    let region = Region::cube(-2.5, 2.5, 2)?;

    let dataset = generate_dataset(&sys, &w, &cfg, &region, 400, 4, 7)?;
    println!(
        "{} points from 400 trajectories ({} inconclusive dropped)",
        dataset.len(),
        dataset.meta.n_inconclusive
    );

    println!("\nlabel histogram:");
    for (lo, hi, count) in label_histogram(&dataset, 10) {
        println!(
            "  [{lo:.1}, {hi:.1}) {count:5} {}",
            "#".repeat((count * 60 / dataset.len()).max(usize::from(count > 0)))
        );
    }

    let dir = std::env::temp_dir().join("zubov-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("vanderpol.csv");
    write_dataset(&dataset, &path)?;
    let back = read_dataset(&path)?;
    assert_eq!(dataset.points, back.points);
    println!("\nround-tripped {} rows through {}", back.len(), path.display());
    Ok(())
}
