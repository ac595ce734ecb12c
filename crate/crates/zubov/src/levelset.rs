//! Level-curve extraction for 2-D systems.
//!
//! A [`GridField`] holds `V` sampled on a regular grid; [`extract_level`]
//! traces `{x : V(x) = r}` by marching squares with linear interpolation on
//! cell edges, resolving saddle cells by the cell-center average. The curves
//! reproduce attraction-domain boundaries when `r` is taken close to 1.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dynsys::Region;

/// `V` evaluated on an `nx x ny` grid over a 2-D region, values clamped to
/// `[0, 1]`. Nodes where the evaluator failed are assigned 1 (treated as
/// outside the attraction domain) and counted in `failures`.
#[derive(Debug, Clone)]
pub struct GridField {
    pub region: Region,
    pub nx: usize,
    pub ny: usize,
    /// Row-major by y: `values[iy * nx + ix]`.
    pub values: Vec<f64>,
    pub failures: usize,
}

impl GridField {
    pub fn node_x(&self, ix: usize) -> f64 {
        let lo = self.region.lower()[0];
        let hi = self.region.upper()[0];
        lo + (hi - lo) * ix as f64 / (self.nx - 1) as f64
    }

    pub fn node_y(&self, iy: usize) -> f64 {
        let lo = self.region.lower()[1];
        let hi = self.region.upper()[1];
        lo + (hi - lo) * iy as f64 / (self.ny - 1) as f64
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }
}

/// One extracted level `{x : V(x) = r}` as a set of polylines; closed loops
/// repeat their first vertex at the end.
#[derive(Debug, Clone)]
pub struct LevelCurve {
    pub level: f64,
    pub polylines: Vec<Vec<[f64; 2]>>,
}

/// Evaluates `V` on the grid nodes, in parallel. The evaluator returns `None`
/// on failure (e.g. an inconclusive classification), which marks the node as
/// outside and counts it.
pub fn evaluate_grid<F>(evaluator: F, region: &Region, nx: usize, ny: usize) -> GridField
where
    F: Fn(f64, f64) -> Option<f64> + Sync,
{
    assert!(region.dim() == 2, "grid evaluation is 2-D only");
    assert!(nx >= 2 && ny >= 2, "need at least a 2x2 grid");
    let (x_lo, y_lo) = (region.lower()[0], region.lower()[1]);
    let (x_hi, y_hi) = (region.upper()[0], region.upper()[1]);
    let results: Vec<(f64, bool)> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % nx;
            let iy = idx / nx;
            let x = x_lo + (x_hi - x_lo) * ix as f64 / (nx - 1) as f64;
            let y = y_lo + (y_hi - y_lo) * iy as f64 / (ny - 1) as f64;
            match evaluator(x, y) {
                Some(v) => (v.clamp(0.0, 1.0), false),
                None => (1.0, true),
            }
        })
        .collect();
    let failures = results.iter().filter(|(_, failed)| *failed).count();
    GridField {
        region: region.clone(),
        nx,
        ny,
        values: results.into_iter().map(|(v, _)| v).collect(),
        failures,
    }
}

/// Grid edge carrying one curve vertex. Horizontal edges join node `(i, j)`
/// to `(i+1, j)`; vertical edges join `(i, j)` to `(i, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EdgeKey {
    H(usize, usize),
    V(usize, usize),
}

/// Traces the level set `V = r` through the grid by marching squares.
pub fn extract_level(g: &GridField, r: f64) -> LevelCurve {
    assert!(r > 0.0 && r < 1.0, "level must lie strictly inside (0, 1)");
    // Vertex per crossed edge, then one or two segments per cell.
    let mut vertices: BTreeMap<EdgeKey, [f64; 2]> = BTreeMap::new();
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();

    let interp = |va: f64, vb: f64| -> f64 {
        let denom = vb - va;
        if denom.abs() < 1e-300 {
            0.5
        } else {
            ((r - va) / denom).clamp(0.0, 1.0)
        }
    };

    for iy in 0..g.ny - 1 {
        for ix in 0..g.nx - 1 {
            let v00 = g.value(ix, iy);
            let v10 = g.value(ix + 1, iy);
            let v11 = g.value(ix + 1, iy + 1);
            let v01 = g.value(ix, iy + 1);
            let case = usize::from(v00 >= r)
                | usize::from(v10 >= r) << 1
                | usize::from(v11 >= r) << 2
                | usize::from(v01 >= r) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let bottom = EdgeKey::H(ix, iy);
            let top = EdgeKey::H(ix, iy + 1);
            let left = EdgeKey::V(ix, iy);
            let right = EdgeKey::V(ix + 1, iy);
            let mut vertex = |key: EdgeKey| -> EdgeKey {
                vertices.entry(key).or_insert_with(|| match key {
                    EdgeKey::H(i, j) => {
                        let t = interp(g.value(i, j), g.value(i + 1, j));
                        [g.node_x(i) + t * (g.node_x(i + 1) - g.node_x(i)), g.node_y(j)]
                    }
                    EdgeKey::V(i, j) => {
                        let t = interp(g.value(i, j), g.value(i, j + 1));
                        [g.node_x(i), g.node_y(j) + t * (g.node_y(j + 1) - g.node_y(j))]
                    }
                });
                key
            };
            let mut emit = |a: EdgeKey, b: EdgeKey, segments: &mut Vec<(EdgeKey, EdgeKey)>| {
                let (ka, kb) = (vertex(a), vertex(b));
                segments.push((ka, kb));
            };
            match case {
                1 => emit(left, bottom, &mut segments),
                2 => emit(bottom, right, &mut segments),
                3 => emit(left, right, &mut segments),
                4 => emit(right, top, &mut segments),
                5 => {
                    // Corners (0,0) and (1,1) inside: pairing decided by the
                    // cell-center sample.
                    let center = 0.25 * (v00 + v10 + v11 + v01);
                    if center >= r {
                        emit(bottom, right, &mut segments);
                        emit(left, top, &mut segments);
                    } else {
                        emit(left, bottom, &mut segments);
                        emit(right, top, &mut segments);
                    }
                }
                6 => emit(bottom, top, &mut segments),
                7 => emit(left, top, &mut segments),
                8 => emit(left, top, &mut segments),
                9 => emit(bottom, top, &mut segments),
                10 => {
                    let center = 0.25 * (v00 + v10 + v11 + v01);
                    if center >= r {
                        emit(left, bottom, &mut segments);
                        emit(right, top, &mut segments);
                    } else {
                        emit(bottom, right, &mut segments);
                        emit(left, top, &mut segments);
                    }
                }
                11 => emit(right, top, &mut segments),
                12 => emit(left, right, &mut segments),
                13 => emit(bottom, right, &mut segments),
                14 => emit(left, bottom, &mut segments),
                _ => unreachable!(),
            }
        }
    }
    LevelCurve {
        level: r,
        polylines: stitch(&segments, &vertices),
    }
}

/// Joins segments that share grid edges into polylines. Each edge belongs to
/// at most two segments, so the connectivity graph splits into simple chains
/// and cycles; chains start at degree-1 edges, remaining edges form loops.
fn stitch(
    segments: &[(EdgeKey, EdgeKey)],
    vertices: &BTreeMap<EdgeKey, [f64; 2]>,
) -> Vec<Vec<[f64; 2]>> {
    let mut adjacency: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (idx, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(idx);
        adjacency.entry(*b).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();

    let walk = |start_key: EdgeKey, used: &mut Vec<bool>| -> Vec<EdgeKey> {
        let mut chain = vec![start_key];
        let mut current = start_key;
        loop {
            let next_seg = adjacency[&current]
                .iter()
                .copied()
                .find(|&s| !used[s]);
            let Some(seg) = next_seg else { break };
            used[seg] = true;
            let (a, b) = segments[seg];
            current = if a == current { b } else { a };
            chain.push(current);
        }
        chain
    };

    // Open chains first.
    let endpoints: Vec<EdgeKey> = adjacency
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    for key in endpoints {
        if adjacency[&key].iter().all(|&s| used[s]) {
            continue;
        }
        let chain = walk(key, &mut used);
        polylines.push(chain.iter().map(|k| vertices[k]).collect());
    }
    // Remaining cycles.
    let keys: Vec<EdgeKey> = adjacency.keys().copied().collect();
    for key in keys {
        if adjacency[&key].iter().all(|&s| used[s]) {
            continue;
        }
        let chain = walk(key, &mut used);
        let mut line: Vec<[f64; 2]> = chain.iter().map(|k| vertices[k]).collect();
        line.push(vertices[&key]); // close the loop
        polylines.push(line);
    }
    polylines
}

/// Writes curves as `level,polyline_id,x1,x2` rows.
pub fn write_level_curves_csv(
    path: impl AsRef<Path>,
    curves: &[LevelCurve],
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "level,polyline_id,x1,x2")?;
    for curve in curves {
        for (pid, line) in curve.polylines.iter().enumerate() {
            for v in line {
                writeln!(out, "{},{pid},{:.16e},{:.16e}", curve.level, v[0], v[1])?;
            }
        }
    }
    out.flush()
}

const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Writes an SVG overlay of the curves over the grid region.
pub fn write_level_curves_svg(
    path: impl AsRef<Path>,
    region: &Region,
    curves: &[LevelCurve],
) -> std::io::Result<()> {
    let (x_lo, y_lo) = (region.lower()[0], region.lower()[1]);
    let (x_hi, y_hi) = (region.upper()[0], region.upper()[1]);
    let size = 640.0;
    let margin = 40.0;
    let sx = (size - 2.0 * margin) / (x_hi - x_lo);
    let sy = (size - 2.0 * margin) / (y_hi - y_lo);
    let map = |p: [f64; 2]| -> (f64, f64) {
        (
            margin + (p[0] - x_lo) * sx,
            size - margin - (p[1] - y_lo) * sy,
        )
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">"
    )?;
    writeln!(
        out,
        "  <rect x=\"{margin}\" y=\"{margin}\" width=\"{w}\" height=\"{w}\" fill=\"white\" \
         stroke=\"#444\"/>",
        w = size - 2.0 * margin
    )?;
    for (ci, curve) in curves.iter().enumerate() {
        let color = SVG_PALETTE[ci % SVG_PALETTE.len()];
        for line in &curve.polylines {
            let pts: Vec<String> = line
                .iter()
                .map(|&p| {
                    let (px, py) = map(p);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            writeln!(
                out,
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                pts.join(" ")
            )?;
        }
        writeln!(
            out,
            "  <text x=\"{}\" y=\"{}\" font-size=\"14\" fill=\"{color}\">r = {}</text>",
            margin + 8.0,
            margin + 20.0 + 18.0 * ci as f64,
            curve.level
        )?;
    }
    writeln!(
        out,
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#444\">[{x_lo}, {x_hi}] x [{y_lo}, {y_hi}]</text>",
        margin,
        size - margin / 2.0
    )?;
    writeln!(out, "</svg>")?;
    out.flush()
}
