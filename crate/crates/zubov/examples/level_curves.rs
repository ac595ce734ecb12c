//! Level curves of V for the van der Pol system: the r = 0.99 curve hugs the
//! attraction-domain boundary (the unstable limit cycle), inner levels nest
//! inside it. Writes the vertex table and an SVG overlay.
//!
//! ```bash
//! cargo run --release --example level_curves
//! ```

use zubov::dynsys::{Region, SystemModel, WKind};
use zubov::levelset::{evaluate_grid, extract_level, write_level_curves_csv, write_level_curves_svg};
use zubov::zubov::{compute_i, eval_v, ZubovConfig};

fn main() -> anyhow::Result<()> {
    let sys = SystemModel::vanderpol();
    let w = WKind::distance_to_origin(2);
    let cfg = ZubovConfig::default();
    let region = Region::cube(-4.0, 4.0, 2)?;

    let n = 101; // raise toward 201 for publication-quality curves
    println!("evaluating V on a {n}x{n} grid (direct integration, parallel) ...");
    let field = evaluate_grid(
        |x, y| {
            compute_i(&sys, &w, &[x, y], &cfg)
                .ok()
                .and_then(|o| eval_v(&o, cfg.alpha).ok())
        },
        &region,
        n,
        n,
    );

    let curves: Vec<_> = [0.7, 0.8, 0.99]
        .iter()
        .map(|&r| extract_level(&field, r))
        .collect();
    for c in &curves {
        let vertices: usize = c.polylines.iter().map(|p| p.len()).sum();
        println!(
            "level {:.2}: {} polylines, {vertices} vertices",
            c.level,
            c.polylines.len()
        );
    }

    let dir = std::env::temp_dir().join("zubov-example");
    std::fs::create_dir_all(&dir)?;
    write_level_curves_csv(dir.join("levelcurves.csv"), &curves)?;
    write_level_curves_svg(dir.join("levelcurves.svg"), &region, &curves)?;
    println!("wrote {}/levelcurves.{{csv,svg}}", dir.display());
    Ok(())
}
