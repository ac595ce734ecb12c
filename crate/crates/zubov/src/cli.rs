//! Command-line frontend.
//!
//! Subcommands tie the pipeline together: `eval` classifies one state,
//! `ivalue` samples a region and calibrates the threshold/scale pair,
//! `dataset` persists labeled training data, `train`/`validate` handle the
//! network surrogate, `levelcurves` extracts level sets for 2-D systems, and
//! `residual-check` verifies the PDE defect along converged trajectories.
//! Every artifact-producing command writes a JSON run manifest alongside its
//! outputs with the fully resolved configuration, enabling byte-identical
//! re-runs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datagen::{
    generate_dataset_with_labels, label_histogram, read_dataset, write_dataset, LabelSpace,
};
use crate::dynsys::{
    refine_equilibrium, sample_one, swing_region, Region, SwingParams, SystemModel, WKind,
};
use crate::levelset::{
    evaluate_grid, extract_level, write_level_curves_csv, write_level_curves_svg, LevelCurve,
};
use crate::mlp::{
    forward, init_params, load_model, save_model, train, validate, MlpArchitecture, TrainConfig,
};
use crate::zubov::{
    calibrate, compute_i, eval_v, write_ivalue_table, zubov_residual, IValueKind, IValueOutcome,
    ZubovConfig,
};

#[derive(Parser)]
#[command(
    name = "zubov",
    version,
    about = "Domain-of-attraction analysis via augmented-system integration and a trainable surrogate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Args, Debug)]
pub struct GlobalArgs {
    /// Built-in system to analyze.
    #[arg(long, global = true, value_enum, default_value_t = SystemKind::Vdp)]
    pub system: SystemKind,
    /// Swing parameter file (required for --system swing).
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Base seed for all sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel evaluation (default: all cores). Outputs
    /// do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Directory for output artifacts and manifests.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    /// Van der Pol oscillator (2-D, stable origin).
    Vdp,
    /// Multi-machine swing model from a parameter file.
    Swing,
    /// Linear contraction dx/dt = -x (2-D closed-form oracle).
    Linear,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum WFlag {
    /// Squared distance to the equilibrium.
    Dist2,
    /// Squared field norm divided by --w-scale.
    Fieldnorm,
}

/// Evaluation knobs shared by every command that runs the integrator.
#[derive(Args, Debug, Clone)]
pub struct EvalFlags {
    /// Weight function (default: dist2 for vdp/linear, fieldnorm for swing).
    #[arg(long, value_enum)]
    pub w: Option<WFlag>,
    /// Scale divisor for the fieldnorm weight.
    #[arg(long, default_value_t = 1000.0)]
    pub w_scale: f64,
    /// Convergence threshold on dz/dt.
    #[arg(long, default_value_t = 1e-6)]
    pub delta_i: f64,
    /// Divergence threshold M (default: 200 for vdp/linear, 250 for swing).
    #[arg(long)]
    pub m: Option<f64>,
    /// Scale factor alpha (default: 20/M).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Chunk length between termination tests.
    #[arg(long, default_value_t = 1.0)]
    pub dt_chunk: f64,
    /// Safety horizon for inconclusive classification.
    #[arg(long, default_value_t = 500.0)]
    pub t_max: f64,
    /// Solver relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    /// Solver absolute tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub abs_tol: f64,
    /// Sampling box as "lo1,lo2,...:hi1,hi2,..." (default per system).
    #[arg(long, allow_hyphen_values = true)]
    pub region: Option<String>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Evaluate I(x) and V(x) at one state and report the verdict.
    Eval {
        /// Initial state, comma-separated.
        #[arg(allow_hyphen_values = true)]
        x0: String,
        #[command(flatten)]
        flags: EvalFlags,
    },
    /// Sample the region, tabulate I-values, and calibrate (M, alpha).
    Ivalue {
        /// Number of samples.
        #[arg(long, default_value_t = 3000)]
        n: usize,
        /// Provisional threshold used while scanning.
        #[arg(long, default_value_t = 1000.0)]
        provisional_m: f64,
        #[command(flatten)]
        flags: EvalFlags,
    },
    /// Generate a labeled dataset from sampled trajectories.
    Dataset {
        /// Number of trajectories.
        #[arg(long, default_value_t = 1000)]
        traj: usize,
        /// Extra points per converged trajectory.
        #[arg(long, default_value_t = 4)]
        extra: usize,
        /// Output file name inside --out-dir.
        #[arg(long, default_value = "dataset.csv")]
        out: String,
        /// Store raw integral labels instead of V-space labels.
        #[arg(long)]
        raw_labels: bool,
        #[command(flatten)]
        flags: EvalFlags,
    },
    /// Train the network surrogate on generated datasets.
    Train {
        /// Training dataset path.
        #[arg(long)]
        train_set: PathBuf,
        /// Validation dataset path.
        #[arg(long)]
        val_set: PathBuf,
        /// Hidden layer widths, comma-separated.
        #[arg(long, default_value = "40,40,40")]
        hidden: String,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        /// Output model file name inside --out-dir.
        #[arg(long, default_value = "model.txt")]
        model_out: String,
    },
    /// Report error statistics of a saved model over a dataset.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Report file name inside --out-dir.
        #[arg(long, default_value = "validation.json")]
        report: String,
    },
    /// Extract level curves of V for a 2-D system.
    Levelcurves {
        /// Saved model to evaluate; omitted means direct integration.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Levels r in (0,1), comma-separated.
        #[arg(long, default_value = "0.7,0.8,0.99")]
        levels: String,
        /// Grid resolution per axis.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[command(flatten)]
        flags: EvalFlags,
    },
    /// Verify the PDE defect along converged trajectories.
    ResidualCheck {
        /// Number of converged trajectories to check.
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[command(flatten)]
        flags: EvalFlags,
    },
}

/// Fully resolved evaluation context.
struct EvalContext {
    sys: SystemModel,
    w: WKind,
    cfg: ZubovConfig,
    region: Region,
    w_name: String,
}

fn parse_floats(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("cannot parse '{t}' as a number"))
        })
        .collect()
}

fn parse_region_spec(s: &str, dim: usize) -> anyhow::Result<Region> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("region must look like \"lo1,lo2:hi1,hi2\""))?;
    let lower = parse_floats(lo)?;
    let upper = parse_floats(hi)?;
    if lower.len() != dim || upper.len() != dim {
        bail!(
            "region has {}:{} coordinates, system needs {dim}",
            lower.len(),
            upper.len()
        );
    }
    Ok(Region::new(lower, upper)?)
}

fn resolve(global: &GlobalArgs, flags: &EvalFlags) -> anyhow::Result<EvalContext> {
    let (sys, params) = match global.system {
        SystemKind::Vdp => (SystemModel::vanderpol(), None),
        SystemKind::Linear => (SystemModel::linear_contraction(2), None),
        SystemKind::Swing => {
            let path = global
                .params
                .as_ref()
                .ok_or_else(|| anyhow!("--system swing requires --params <file>"))?;
            let params = SwingParams::from_file(path)
                .with_context(|| format!("loading {}", path.display()))?;
            (SystemModel::swing(params.clone()), Some(params))
        }
    };
    let equilibrium = match sys.equilibrium_hint() {
        Some(hint) => refine_equilibrium(&sys, hint)
            .context("refining the equilibrium from the model hint")?,
        None => bail!("system provides no equilibrium hint"),
    };
    let default_w = match global.system {
        SystemKind::Swing => WFlag::Fieldnorm,
        _ => WFlag::Dist2,
    };
    let w = match flags.w.unwrap_or(default_w) {
        WFlag::Dist2 => WKind::DistanceSquared {
            center: equilibrium.clone(),
        },
        WFlag::Fieldnorm => WKind::FieldNormScaled {
            scale: flags.w_scale,
        },
    };
    let m_default = match global.system {
        SystemKind::Swing => 250.0,
        _ => 200.0,
    };
    let m = flags.m.unwrap_or(m_default);
    let alpha = flags.alpha.unwrap_or(20.0 / m);
    let mut cfg = ZubovConfig {
        delta_i: flags.delta_i,
        m_threshold: m,
        alpha,
        dt_chunk: flags.dt_chunk,
        t_max: flags.t_max,
        ..ZubovConfig::default()
    };
    cfg.solver.rel_tol = flags.rel_tol;
    cfg.solver.abs_tol = flags.abs_tol;
    let region = match &flags.region {
        Some(spec) => parse_region_spec(spec, sys.dim())?,
        None => match global.system {
            SystemKind::Vdp => Region::cube(-4.0, 4.0, 2)?,
            SystemKind::Linear => Region::cube(-3.0, 3.0, 2)?,
            SystemKind::Swing => {
                let params = params.as_ref().expect("swing params resolved above");
                swing_region(params, &equilibrium)?
            }
        },
    };
    let w_name = w.describe();
    Ok(EvalContext {
        sys,
        w,
        cfg,
        region,
        w_name,
    })
}

fn flags_json(global: &GlobalArgs, ctx: &EvalContext) -> serde_json::Value {
    serde_json::json!({
        "system": format!("{:?}", global.system).to_lowercase(),
        "params": global.params.as_ref().map(|p| p.display().to_string()),
        "seed": global.seed,
        "w": ctx.w_name,
        "delta_i": ctx.cfg.delta_i,
        "m": ctx.cfg.m_threshold,
        "alpha": ctx.cfg.alpha,
        "dt_chunk": ctx.cfg.dt_chunk,
        "t_max": ctx.cfg.t_max,
        "rel_tol": ctx.cfg.solver.rel_tol,
        "abs_tol": ctx.cfg.solver.abs_tol,
        "region_lower": ctx.region.lower(),
        "region_upper": ctx.region.upper(),
    })
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: serde_json::Value,
    inputs: &[String],
    outputs: &[String],
    started: Instant,
) -> anyhow::Result<PathBuf> {
    let manifest = serde_json::json!({
        "tool": "zubov",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    let path = out_dir.join(format!("manifest-{command}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Entry point used by the `zubov` binary; returns the process exit code.
pub fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    run_with(cli)
}

pub fn run_with(cli: Cli) -> anyhow::Result<()> {
    match cli.global.workers {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .context("building the worker pool")?;
            pool.install(|| dispatch(&cli))
        }
        None => dispatch(&cli),
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Eval { x0, flags } => cmd_eval(&cli.global, flags, x0),
        Command::Ivalue {
            n,
            provisional_m,
            flags,
        } => cmd_ivalue(&cli.global, flags, *n, *provisional_m),
        Command::Dataset {
            traj,
            extra,
            out,
            raw_labels,
            flags,
        } => cmd_dataset(&cli.global, flags, *traj, *extra, out, *raw_labels),
        Command::Train {
            train_set,
            val_set,
            hidden,
            learning_rate,
            batch_size,
            epochs,
            model_out,
        } => cmd_train(
            &cli.global,
            train_set,
            val_set,
            hidden,
            *learning_rate,
            *batch_size,
            *epochs,
            model_out,
        ),
        Command::Validate {
            model,
            dataset,
            report,
        } => cmd_validate(&cli.global, model, dataset, report),
        Command::Levelcurves {
            model,
            levels,
            grid,
            flags,
        } => cmd_levelcurves(&cli.global, flags, model.as_deref(), levels, *grid),
        Command::ResidualCheck { n, flags } => cmd_residual_check(&cli.global, flags, *n),
    }
}

fn cmd_eval(global: &GlobalArgs, flags: &EvalFlags, x0: &str) -> anyhow::Result<()> {
    let ctx = resolve(global, flags)?;
    let x0 = parse_floats(x0)?;
    let outcome = compute_i(&ctx.sys, &ctx.w, &x0, &ctx.cfg)?;
    match outcome.kind {
        IValueKind::Converged { i_value } => {
            let v = eval_v(&outcome, ctx.cfg.alpha)?;
            println!("I(x) = {i_value:.6} (converged, t = {:.2})", outcome.elapsed);
            println!("V(x) = {v:.6}");
            println!("verdict: inside the domain of attraction (V < 1)");
        }
        IValueKind::Exceeded => {
            println!(
                "I(x) > {} (threshold exceeded, t = {:.2})",
                ctx.cfg.m_threshold, outcome.elapsed
            );
            println!("V(x) = 1");
            println!("verdict: outside the domain of attraction or in its boundary layer");
        }
        IValueKind::Inconclusive => {
            bail!(
                "inconclusive: neither criterion fired before t_max = {}; \
                 raise --t-max or adjust --m",
                ctx.cfg.t_max
            );
        }
    }
    Ok(())
}

fn scan_region(
    ctx: &EvalContext,
    seed: u64,
    n: usize,
) -> anyhow::Result<Vec<IValueOutcome>> {
    use rayon::prelude::*;
    let outcomes: Result<Vec<IValueOutcome>, _> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x0 = sample_one(&ctx.region, seed, i as u64);
            compute_i(&ctx.sys, &ctx.w, &x0, &ctx.cfg)
        })
        .collect();
    Ok(outcomes?)
}

fn cmd_ivalue(
    global: &GlobalArgs,
    flags: &EvalFlags,
    n: usize,
    provisional_m: f64,
) -> anyhow::Result<()> {
    let started = Instant::now();
    let mut ctx = resolve(global, flags)?;
    ctx.cfg.m_threshold = provisional_m;
    ctx.cfg.alpha = 20.0 / provisional_m;
    std::fs::create_dir_all(&global.out_dir)?;
    let outcomes = scan_region(&ctx, global.seed, n)?;
    let calibration = calibrate(&outcomes).map_err(|e| anyhow!("{e}; all {n} samples diverged"))?;
    print!("{calibration}");

    let table = global.out_dir.join("ivalues.csv");
    write_ivalue_table(&table, &outcomes, provisional_m)?;
    let svg = global.out_dir.join("ivalues.svg");
    write_ivalue_scatter(&svg, &outcomes, provisional_m)?;

    let mut config = flags_json(global, &ctx);
    config["n"] = serde_json::json!(n);
    config["provisional_m"] = serde_json::json!(provisional_m);
    config["calibrated_m"] = serde_json::json!(calibration.m_suggested);
    config["calibrated_alpha"] = serde_json::json!(calibration.alpha);
    write_manifest(
        &global.out_dir,
        "ivalue",
        config,
        &[],
        &[table.display().to_string(), svg.display().to_string()],
        started,
    )?;
    Ok(())
}

fn cmd_dataset(
    global: &GlobalArgs,
    flags: &EvalFlags,
    traj: usize,
    extra: usize,
    out: &str,
    raw_labels: bool,
) -> anyhow::Result<()> {
    let started = Instant::now();
    let ctx = resolve(global, flags)?;
    std::fs::create_dir_all(&global.out_dir)?;
    let label_space = if raw_labels {
        LabelSpace::RawI
    } else {
        LabelSpace::VSpace
    };
    let dataset = generate_dataset_with_labels(
        &ctx.sys,
        &ctx.w,
        &ctx.cfg,
        &ctx.region,
        traj,
        extra,
        global.seed,
        label_space,
    )?;
    let path = global.out_dir.join(out);
    write_dataset(&dataset, &path)?;
    println!(
        "{} points from {traj} trajectories ({} inconclusive dropped) -> {}",
        dataset.len(),
        dataset.meta.n_inconclusive,
        path.display()
    );
    if label_space == LabelSpace::VSpace {
        let hist = label_histogram(&dataset, 10);
        for (lo, hi, count) in hist {
            println!("  labels [{lo:.1}, {hi:.1}): {count}");
        }
    }
    let mut config = flags_json(global, &ctx);
    config["traj"] = serde_json::json!(traj);
    config["extra"] = serde_json::json!(extra);
    config["raw_labels"] = serde_json::json!(raw_labels);
    write_manifest(
        &global.out_dir,
        "dataset",
        config,
        &[],
        &[path.display().to_string()],
        started,
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    global: &GlobalArgs,
    train_path: &Path,
    val_path: &Path,
    hidden: &str,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    model_out: &str,
) -> anyhow::Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(&global.out_dir)?;
    let train_set = read_dataset(train_path)
        .with_context(|| format!("reading training set {}", train_path.display()))?;
    let val_set = read_dataset(val_path)
        .with_context(|| format!("reading validation set {}", val_path.display()))?;
    let widths: Vec<usize> = hidden
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("bad hidden width '{t}'"))
        })
        .collect::<Result<_, _>>()?;
    let arch = MlpArchitecture::new(train_set.meta.dim, widths)?;
    let p0 = init_params(&arch, global.seed);
    let cfg = TrainConfig {
        learning_rate,
        batch_size,
        epochs,
        seed: global.seed,
        ..TrainConfig::default()
    };
    let (best, history) = train(&p0, &train_set, &val_set, &cfg)?;

    let model_path = global.out_dir.join(model_out);
    save_model(&best, &model_path)?;
    let history_path = global.out_dir.join("history.csv");
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&history_path)?);
        writeln!(out, "epoch,train_loss,val_rmse")?;
        for h in &history {
            writeln!(out, "{},{:.16e},{:.16e}", h.epoch, h.train_loss, h.val_rmse)?;
        }
    }
    let best_rmse = history
        .iter()
        .map(|h| h.val_rmse)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained {} epochs; best validation RMSE {best_rmse:.6e} -> {}",
        history.len(),
        model_path.display()
    );
    let config = serde_json::json!({
        "seed": global.seed,
        "hidden": hidden,
        "learning_rate": learning_rate,
        "batch_size": batch_size,
        "epochs": epochs,
        "input_dim": train_set.meta.dim,
    });
    write_manifest(
        &global.out_dir,
        "train",
        config,
        &[
            train_path.display().to_string(),
            val_path.display().to_string(),
        ],
        &[
            model_path.display().to_string(),
            history_path.display().to_string(),
        ],
        started,
    )?;
    Ok(())
}

fn cmd_validate(
    global: &GlobalArgs,
    model_path: &Path,
    dataset_path: &Path,
    report: &str,
) -> anyhow::Result<()> {
    let started = Instant::now();
    std::fs::create_dir_all(&global.out_dir)?;
    let model = load_model(model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let dataset = read_dataset(dataset_path)
        .with_context(|| format!("reading dataset {}", dataset_path.display()))?;
    let stats = validate(&model, &dataset)?;
    println!("RMSE            = {:.6e}", stats.rmse);
    println!("25th percentile = {:+.6e}", stats.p25);
    println!("75th percentile = {:+.6e}", stats.p75);
    println!("max |error|     = {:.6e}", stats.max_abs_error);
    let report_path = global.out_dir.join(report);
    let json = serde_json::json!({
        "rmse": stats.rmse,
        "p25": stats.p25,
        "p75": stats.p75,
        "max_abs_error": stats.max_abs_error,
        "histogram": stats.histogram
            .iter()
            .map(|(lo, hi, c)| serde_json::json!([lo, hi, c]))
            .collect::<Vec<_>>(),
    });
    std::fs::write(&report_path, serde_json::to_string_pretty(&json)?)?;
    let config = serde_json::json!({
        "model": model_path.display().to_string(),
        "dataset": dataset_path.display().to_string(),
    });
    write_manifest(
        &global.out_dir,
        "validate",
        config,
        &[
            model_path.display().to_string(),
            dataset_path.display().to_string(),
        ],
        &[report_path.display().to_string()],
        started,
    )?;
    Ok(())
}

fn cmd_levelcurves(
    global: &GlobalArgs,
    flags: &EvalFlags,
    model: Option<&Path>,
    levels: &str,
    grid: usize,
) -> anyhow::Result<()> {
    let started = Instant::now();
    let ctx = resolve(global, flags)?;
    if ctx.sys.dim() != 2 {
        bail!("level curves are available for 2-D systems only");
    }
    if grid < 2 {
        bail!("--grid must be at least 2");
    }
    std::fs::create_dir_all(&global.out_dir)?;
    let levels: Vec<f64> = parse_floats(levels)?;
    if levels.iter().any(|&r| !(0.0 < r && r < 1.0)) {
        bail!("levels must lie strictly inside (0, 1)");
    }
    let field = match model {
        Some(path) => {
            let model =
                load_model(path).with_context(|| format!("loading model {}", path.display()))?;
            evaluate_grid(
                |x, y| forward(&model, &[x, y]).ok(),
                &ctx.region,
                grid,
                grid,
            )
        }
        None => evaluate_grid(
            |x, y| {
                compute_i(&ctx.sys, &ctx.w, &[x, y], &ctx.cfg)
                    .ok()
                    .and_then(|o| eval_v(&o, ctx.cfg.alpha).ok())
            },
            &ctx.region,
            grid,
            grid,
        ),
    };
    if field.failures > 0 {
        eprintln!(
            "note: {} grid nodes failed to classify and were treated as outside",
            field.failures
        );
    }
    let curves: Vec<LevelCurve> = levels.iter().map(|&r| extract_level(&field, r)).collect();
    for c in &curves {
        let n: usize = c.polylines.iter().map(|l| l.len()).sum();
        println!(
            "level {}: {} polylines, {n} vertices",
            c.level,
            c.polylines.len()
        );
    }
    let csv = global.out_dir.join("levelcurves.csv");
    write_level_curves_csv(&csv, &curves)?;
    let svg = global.out_dir.join("levelcurves.svg");
    write_level_curves_svg(&svg, &ctx.region, &curves)?;
    let mut config = flags_json(global, &ctx);
    config["levels"] = serde_json::json!(levels);
    config["grid"] = serde_json::json!(grid);
    config["model"] = serde_json::json!(model.map(|p| p.display().to_string()));
    config["grid_failures"] = serde_json::json!(field.failures);
    write_manifest(
        &global.out_dir,
        "levelcurves",
        config,
        &[],
        &[csv.display().to_string(), svg.display().to_string()],
        started,
    )?;
    Ok(())
}

fn cmd_residual_check(global: &GlobalArgs, flags: &EvalFlags, n: usize) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let started = Instant::now();
    let ctx = resolve(global, flags)?;
    std::fs::create_dir_all(&global.out_dir)?;
    // Scan candidates in batches until n converged trajectories are found.
    let mut residuals: Vec<(usize, f64)> = Vec::new();
    let mut next_index = 0u64;
    let cap = (50 * n).max(100) as u64;
    while residuals.len() < n && next_index < cap {
        let batch: Vec<u64> = (next_index..(next_index + n as u64).min(cap)).collect();
        next_index = next_index + batch.len() as u64;
        let found: Vec<(usize, f64)> = batch
            .par_iter()
            .map(|&i| -> anyhow::Result<Option<(usize, f64)>> {
                let x0 = sample_one(&ctx.region, global.seed, i);
                let outcome = compute_i(&ctx.sys, &ctx.w, &x0, &ctx.cfg)?;
                if !outcome.is_converged() {
                    return Ok(None);
                }
                let r = zubov_residual(&ctx.sys, &ctx.w, &x0, &ctx.cfg)?;
                Ok(Some((i as usize, r)))
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        residuals.extend(found);
    }
    residuals.truncate(n);
    if residuals.is_empty() {
        bail!("no converged trajectories found among {cap} samples");
    }
    let max = residuals.iter().fold(0.0f64, |a, (_, r)| a.max(*r));
    println!(
        "max relative PDE residual over {} converged trajectories: {max:.3e}",
        residuals.len()
    );
    let path = global.out_dir.join("residuals.csv");
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "sample_index,max_relative_residual")?;
        for (i, r) in &residuals {
            writeln!(out, "{i},{r:.16e}")?;
        }
    }
    let mut config = flags_json(global, &ctx);
    config["n"] = serde_json::json!(n);
    config["max_residual"] = serde_json::json!(max);
    write_manifest(
        &global.out_dir,
        "residual-check",
        config,
        &[],
        &[path.display().to_string()],
        started,
    )?;
    Ok(())
}

/// Scatter of I-values by sample index; censored samples sit at the sentinel
/// with a distinct marker, mirroring the calibration plots.
fn write_ivalue_scatter(
    path: impl AsRef<Path>,
    outcomes: &[IValueOutcome],
    sentinel: f64,
) -> std::io::Result<()> {
    let (width, height, margin) = (720.0, 480.0, 50.0);
    let n = outcomes.len().max(1) as f64;
    let y_max = sentinel * 1.05;
    let sx = (width - 2.0 * margin) / n;
    let sy = (height - 2.0 * margin) / y_max;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">"
    )?;
    writeln!(
        out,
        "  <rect x=\"{margin}\" y=\"{margin}\" width=\"{}\" height=\"{}\" fill=\"white\" stroke=\"#444\"/>",
        width - 2.0 * margin,
        height - 2.0 * margin
    )?;
    // Sentinel line.
    let y_sent = height - margin - sentinel * sy;
    writeln!(
        out,
        "  <line x1=\"{margin}\" y1=\"{y_sent:.1}\" x2=\"{}\" y2=\"{y_sent:.1}\" \
         stroke=\"#aaa\" stroke-dasharray=\"4 3\"/>",
        width - margin
    )?;
    for (i, o) in outcomes.iter().enumerate() {
        let x = margin + (i as f64 + 0.5) * sx;
        match o.kind {
            IValueKind::Converged { i_value } => {
                let y = height - margin - i_value * sy;
                writeln!(
                    out,
                    "  <circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"2\" fill=\"#1f77b4\"/>"
                )?;
            }
            _ => {
                writeln!(
                    out,
                    "  <g stroke=\"#d62728\"><circle cx=\"{x:.1}\" cy=\"{y_sent:.1}\" r=\"3\" \
                     fill=\"none\"/><line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\"/>\
                     <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\"/></g>",
                    x - 3.0,
                    y_sent - 3.0,
                    x + 3.0,
                    y_sent + 3.0,
                    x - 3.0,
                    y_sent + 3.0,
                    x + 3.0,
                    y_sent - 3.0,
                )?;
            }
        }
    }
    writeln!(
        out,
        "  <text x=\"{margin}\" y=\"{:.1}\" font-size=\"12\" fill=\"#444\">sample index vs I; \
         censored at {sentinel}</text>",
        height - margin / 3.0
    )?;
    writeln!(out, "</svg>")?;
    out.flush()
}
