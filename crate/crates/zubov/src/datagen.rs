//! Labeled-dataset generation and persistence.
//!
//! Each sampled initial state contributes its own `(x0, V(x0))` pair, and each
//! converged trajectory contributes `k_extra` more points placed where the
//! accumulated integral first crosses even quantiles of `I`. Because
//! `I(x(t)) = I(x0) - z(t)` along trajectories, those points carry the label
//! `tanh(alpha (I - z(t)))` at no extra integration cost, and the quantile
//! placement spreads labels across the level sets of `V`.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::dynsys::{sample_one, DynError, Region, SystemModel, WKind};
use crate::odeint::{integrate_to_z, AugmentedState, OdeError, WAugmented};
use crate::zubov::{compute_i, IValueKind, ZubovConfig, ZubovError};

/// One labeled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub v: f64,
}

/// Label scale of a dataset: `V`-space in `[0, 1]` (the default), or raw
/// integral values for users who regress `I` directly. Raw labels censor
/// exceeded trajectories at the threshold `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    VSpace,
    RawI,
}

impl LabelSpace {
    fn as_str(self) -> &'static str {
        match self {
            LabelSpace::VSpace => "v",
            LabelSpace::RawI => "raw_i",
        }
    }
}

/// Provenance carried alongside the points.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub system: String,
    pub w_desc: String,
    pub alpha: f64,
    pub m_threshold: f64,
    pub delta_i: f64,
    pub seed: u64,
    pub region: Region,
    pub n_traj: usize,
    pub k_extra: usize,
    /// Trajectories dropped because neither criterion fired before `t_max`.
    pub n_inconclusive: usize,
    pub dim: usize,
    pub label_space: LabelSpace,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    System(#[from] DynError),
    #[error(transparent)]
    Eval(#[from] ZubovError),
    #[error(transparent)]
    Solver(#[from] OdeError),
    #[error("region dimension {region} does not match system dimension {system}")]
    RegionDim { region: usize, system: usize },
}

/// Generates a labeled dataset from `n_traj` uniform samples of `region`.
///
/// Exceeded trajectories yield one `(x0, 1)` point; converged ones yield the
/// anchor `(x0, tanh(alpha I))` plus `k_extra` quantile points; inconclusive
/// ones are dropped and counted in the metadata. Trajectories are evaluated
/// in parallel but assembled in sample order, so the result is independent of
/// the worker count.
pub fn generate_dataset(
    sys: &SystemModel,
    w: &WKind,
    cfg: &ZubovConfig,
    region: &Region,
    n_traj: usize,
    k_extra: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    generate_dataset_with_labels(sys, w, cfg, region, n_traj, k_extra, seed, LabelSpace::VSpace)
}

/// [`generate_dataset`] with an explicit label scale.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset_with_labels(
    sys: &SystemModel,
    w: &WKind,
    cfg: &ZubovConfig,
    region: &Region,
    n_traj: usize,
    k_extra: usize,
    seed: u64,
    label_space: LabelSpace,
) -> Result<Dataset, DataError> {
    if region.dim() != sys.dim() {
        return Err(DataError::RegionDim {
            region: region.dim(),
            system: sys.dim(),
        });
    }
    let per_traj: Vec<(bool, Vec<DataPoint>)> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let x0 = sample_one(region, seed, i as u64);
            trajectory_points(sys, w, cfg, x0, k_extra, label_space)
        })
        .collect::<Result<_, _>>()?;

    let mut points = Vec::new();
    let mut n_inconclusive = 0;
    for (inconclusive, mut pts) in per_traj {
        if inconclusive {
            n_inconclusive += 1;
        }
        points.append(&mut pts);
    }
    Ok(Dataset {
        points,
        meta: DatasetMeta {
            system: sys.name().to_string(),
            w_desc: w.describe(),
            alpha: cfg.alpha,
            m_threshold: cfg.m_threshold,
            delta_i: cfg.delta_i,
            seed,
            region: region.clone(),
            n_traj,
            k_extra,
            n_inconclusive,
            dim: sys.dim(),
            label_space,
        },
    })
}

fn trajectory_points(
    sys: &SystemModel,
    w: &WKind,
    cfg: &ZubovConfig,
    x0: Vec<f64>,
    k_extra: usize,
    label_space: LabelSpace,
) -> Result<(bool, Vec<DataPoint>), DataError> {
    let label = |i_remaining: f64| -> f64 {
        match label_space {
            LabelSpace::VSpace => (cfg.alpha * i_remaining).tanh().clamp(0.0, 1.0),
            LabelSpace::RawI => i_remaining,
        }
    };
    let outcome = compute_i(sys, w, &x0, cfg)?;
    match outcome.kind {
        IValueKind::Inconclusive => Ok((true, Vec::new())),
        IValueKind::Exceeded => {
            let v = match label_space {
                LabelSpace::VSpace => 1.0,
                LabelSpace::RawI => cfg.m_threshold,
            };
            Ok((false, vec![DataPoint { x: x0, v }]))
        }
        IValueKind::Converged { i_value } => {
            let mut pts = vec![DataPoint {
                x: x0,
                v: label(i_value),
            }];
            if i_value > 0.0 && k_extra > 0 {
                let rhs = WAugmented::new(sys, w)?;
                let samples = &outcome.trajectory.samples;
                for q in 1..=k_extra {
                    let target = i_value * q as f64 / (k_extra + 1) as f64;
                    // Bracketing sample just below the target, then advance
                    // to the exact crossing.
                    let idx = samples.partition_point(|s| s.z < target);
                    let from = &samples[idx.saturating_sub(1).min(samples.len() - 1)];
                    let start = AugmentedState {
                        x: from.x.clone(),
                        z: from.z,
                    };
                    let hit = integrate_to_z(
                        &rhs,
                        &start,
                        from.t,
                        target,
                        outcome.elapsed + cfg.dt_chunk,
                        &cfg.solver,
                    )?;
                    let state = match hit {
                        Some((_, s)) => s,
                        // z never reaches the target within the horizon
                        // (can only happen through rounding at q = k_extra);
                        // fall back to the last stored sample.
                        None => AugmentedState {
                            x: samples.last().unwrap().x.clone(),
                            z: samples.last().unwrap().z,
                        },
                    };
                    pts.push(DataPoint {
                        v: label(i_value - state.z),
                        x: state.x,
                    });
                }
            }
            Ok((false, pts))
        }
    }
}

/// Histogram of labels over `[0, 1]` with equal-width bins; returns
/// `(bin_low, bin_high, count)` triples whose counts sum to the point count.
pub fn label_histogram(d: &Dataset, bins: usize) -> Vec<(f64, f64, usize)> {
    assert!(bins >= 1, "need at least one bin");
    let mut counts = vec![0usize; bins];
    for p in &d.points {
        let idx = ((p.v * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as f64 / bins as f64, (k + 1) as f64 / bins as f64, c))
        .collect()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Writes the plain-text dataset format: `#`-prefixed `key=value` header
/// lines, then one `x_1,...,x_n,v` row per point with 17 significant digits
/// (lossless for f64).
pub fn write_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let m = &d.meta;
    writeln!(out, "# zubov-dataset v1")?;
    writeln!(out, "# system={}", m.system)?;
    writeln!(out, "# w={}", m.w_desc)?;
    writeln!(out, "# alpha={}", m.alpha)?;
    writeln!(out, "# m={}", m.m_threshold)?;
    writeln!(out, "# delta_i={}", m.delta_i)?;
    writeln!(out, "# seed={}", m.seed)?;
    writeln!(out, "# dim={}", m.dim)?;
    writeln!(out, "# region_lower={}", fmt_vec(m.region.lower()))?;
    writeln!(out, "# region_upper={}", fmt_vec(m.region.upper()))?;
    writeln!(out, "# n_traj={}", m.n_traj)?;
    writeln!(out, "# k_extra={}", m.k_extra)?;
    writeln!(out, "# n_inconclusive={}", m.n_inconclusive)?;
    writeln!(out, "# label_space={}", m.label_space.as_str())?;
    for p in &d.points {
        let mut row = String::with_capacity(24 * (p.x.len() + 1));
        for xi in &p.x {
            row.push_str(&format!("{xi:.16e},"));
        }
        row.push_str(&format!("{:.16e}", p.v));
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]; parse failures carry the
/// 1-based line number.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut header: Vec<(String, String)> = Vec::new();
    let mut points = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_num = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
                if k.trim() == "dim" {
                    dim = Some(v.trim().parse().map_err(|_| DataError::Parse {
                        line: line_num,
                        msg: format!("invalid dim value '{}'", v.trim()),
                    })?);
                }
            }
            continue;
        }
        let dim = dim.ok_or(DataError::Parse {
            line: line_num,
            msg: "data row before the '# dim=' header line".into(),
        })?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != dim + 1 {
            return Err(DataError::Parse {
                line: line_num,
                msg: format!("expected {} columns, found {}", dim + 1, cols.len()),
            });
        }
        let mut vals = Vec::with_capacity(dim + 1);
        for c in &cols {
            vals.push(c.trim().parse::<f64>().map_err(|_| DataError::Parse {
                line: line_num,
                msg: format!("cannot parse '{c}' as a number"),
            })?);
        }
        let v = vals.pop().unwrap();
        points.push(DataPoint { x: vals, v });
    }
    let get = |key: &str| -> Result<String, DataError> {
        header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| DataError::Parse {
                line: 0,
                msg: format!("missing header key '{key}'"),
            })
    };
    let parse_f64 = |key: &str| -> Result<f64, DataError> {
        get(key)?.parse().map_err(|_| DataError::Parse {
            line: 0,
            msg: format!("invalid value for header key '{key}'"),
        })
    };
    let parse_usize = |key: &str| -> Result<usize, DataError> {
        get(key)?.parse().map_err(|_| DataError::Parse {
            line: 0,
            msg: format!("invalid value for header key '{key}'"),
        })
    };
    let parse_vec = |key: &str| -> Result<Vec<f64>, DataError> {
        get(key)?
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| DataError::Parse {
                    line: 0,
                    msg: format!("invalid list for header key '{key}'"),
                })
            })
            .collect()
    };
    let label_space = match get("label_space")?.as_str() {
        "v" => LabelSpace::VSpace,
        "raw_i" => LabelSpace::RawI,
        other => {
            return Err(DataError::Parse {
                line: 0,
                msg: format!("unknown label_space '{other}'"),
            })
        }
    };
    let meta = DatasetMeta {
        system: get("system")?,
        w_desc: get("w")?,
        alpha: parse_f64("alpha")?,
        m_threshold: parse_f64("m")?,
        delta_i: parse_f64("delta_i")?,
        seed: get("seed")?.parse().map_err(|_| DataError::Parse {
            line: 0,
            msg: "invalid seed".into(),
        })?,
        region: Region::new(parse_vec("region_lower")?, parse_vec("region_upper")?)?,
        n_traj: parse_usize("n_traj")?,
        k_extra: parse_usize("k_extra")?,
        n_inconclusive: parse_usize("n_inconclusive")?,
        dim: parse_usize("dim")?,
        label_space,
    };
    Ok(Dataset { points, meta })
}
