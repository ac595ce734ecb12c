//! Adaptive Dormand-Prince 5(4) integration of W-augmented systems.
//!
//! The augmented state is `(x, z)` with `dz/dt = W(x)`, `z(0) = 0`, so `z(t)`
//! accumulates the Lyapunov integral along the trajectory. Integration is
//! chunked: [`integrate_chunk`] advances over exactly one time window and
//! reports the samples and final accepted step that the termination tests
//! upstream need.

use thiserror::Error;

use crate::dynsys::{DynError, SystemModel, WKind};

/// Step-control knobs for the embedded 5(4) pair.
///
/// `h_max` is additionally clipped to the chunk length during chunked
/// integration. `norm_cap` converts runaway trajectories into a classified
/// blow-up instead of an overflow.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Blow-up guard on the state norm `|x|`.
    pub norm_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            h_init: 1e-3,
            h_min: 1e-10,
            h_max: f64::INFINITY,
            norm_cap: 1e6,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), OdeError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(OdeError::BadConfig("tolerances must be positive".into()));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(OdeError::BadConfig(
                "step sizes must satisfy 0 < h_min <= h_init <= h_max".into(),
            ));
        }
        Ok(())
    }
}

/// State of the augmented system: original coordinates plus the accumulated
/// integral `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub z: f64,
}

impl AugmentedState {
    pub fn new(x: Vec<f64>) -> Self {
        AugmentedState { x, z: 0.0 }
    }
}

/// One integrated window: every accepted step, plus counters and the final
/// accepted step size (which the slope criterion divides by).
#[derive(Debug, Clone)]
pub struct TrajectoryChunk {
    /// `(t, state)` at the chunk start and after every accepted step.
    pub samples: Vec<(f64, AugmentedState)>,
    /// Size of the final accepted (possibly endpoint-clipped) step.
    pub last_step: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl TrajectoryChunk {
    pub fn end_time(&self) -> f64 {
        self.samples.last().map(|(t, _)| *t).unwrap_or(f64::NAN)
    }

    pub fn end_state(&self) -> &AugmentedState {
        &self.samples.last().expect("chunk has samples").1
    }

    /// `dz/dt` over the final accepted step.
    pub fn final_slope(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 || self.last_step <= 0.0 {
            return 0.0;
        }
        (self.samples[n - 1].1.z - self.samples[n - 2].1.z) / self.last_step
    }
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("non-finite value in {what} at t = {t:.6}")]
    NonFinite { what: String, t: f64 },
    #[error("state norm {norm:.3e} exceeded the blow-up guard {cap:.3e} at t = {t:.6}")]
    BlowUp { t: f64, norm: f64, cap: f64 },
    #[error("step size underflow below h_min = {h_min:.3e} at t = {t:.6}")]
    StepUnderflow { t: f64, h_min: f64 },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    System(#[from] DynError),
}

/// Right-hand side of an augmented system: writes `dx/dt` and returns
/// `dz/dt = W(x)`.
pub trait AugmentedRhs {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) -> f64;
}

/// Augmented right-hand side assembled from a system and a weight function.
///
/// For `FieldNormScaled` the weight reuses the freshly computed derivative,
/// so each evaluation costs one field call.
pub struct WAugmented<'a> {
    sys: &'a SystemModel,
    w: &'a WKind,
}

impl<'a> WAugmented<'a> {
    pub fn new(sys: &'a SystemModel, w: &'a WKind) -> Result<Self, DynError> {
        match w {
            WKind::DistanceSquared { center } => {
                if center.len() != sys.dim() {
                    return Err(DynError::DimensionMismatch {
                        expected: sys.dim(),
                        got: center.len(),
                    });
                }
            }
            WKind::FieldNormScaled { scale } => {
                if *scale <= 0.0 {
                    return Err(DynError::InvalidScale(*scale));
                }
            }
        }
        Ok(WAugmented { sys, w })
    }
}

impl AugmentedRhs for WAugmented<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> f64 {
        self.sys.eval_field_unchecked(x, dx);
        match self.w {
            WKind::DistanceSquared { center } => x
                .iter()
                .zip(center)
                .map(|(xi, ci)| (xi - ci) * (xi - ci))
                .sum(),
            WKind::FieldNormScaled { scale } => {
                dx.iter().map(|v| v * v).sum::<f64>() / scale
            }
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// Fifth-order weights (row 7 of A equals B: FSAL layout).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

// Error coefficients: fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Outcome of a single trial step.
#[derive(Debug, Clone)]
pub struct RkStepOutcome {
    pub accepted: bool,
    /// Fifth-order solution at `t + h` (meaningful when accepted).
    pub state: AugmentedState,
    /// Scaled error estimate; acceptance means `err_est <= 1`.
    pub err_est: f64,
    /// Controller-proposed next step, clamped to `[h_min, h_max]`.
    pub h_next: f64,
}

struct StageWorkspace {
    k: [Vec<f64>; 7],
    kz: [f64; 7],
    y_stage: Vec<f64>,
    y_next: Vec<f64>,
}

impl StageWorkspace {
    fn new(n: usize) -> Self {
        StageWorkspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            kz: [0.0; 7],
            y_stage: vec![0.0; n],
            y_next: vec![0.0; n],
        }
    }
}

/// One embedded 5(4) trial step of size `h` from `(t, s)`.
///
/// The step-size controller is `h * min(5, max(0.2, 0.9 * err^(-1/5)))`.
pub fn rk45_step<R: AugmentedRhs>(
    rhs: &R,
    t: f64,
    s: &AugmentedState,
    h: f64,
    cfg: &SolverConfig,
) -> Result<RkStepOutcome, OdeError> {
    cfg.validate()?;
    let mut ws = StageWorkspace::new(rhs.dim());
    let (outcome, _) = try_step(rhs, t, &s.x, s.z, h, cfg, &mut ws)?;
    Ok(outcome)
}

/// Core trial step; also returns `z` at `t + h` for callers tracking it.
fn try_step<R: AugmentedRhs>(
    rhs: &R,
    t: f64,
    x: &[f64],
    z: f64,
    h: f64,
    cfg: &SolverConfig,
    ws: &mut StageWorkspace,
) -> Result<(RkStepOutcome, f64), OdeError> {
    let n = x.len();
    ws.kz[0] = rhs.eval(t, x, &mut ws.k[0]);
    check_finite(&ws.k[0], ws.kz[0], "derivative", t)?;

    for stage in 1..7 {
        if stage < 6 {
            let a_row = &A[stage - 1];
            for i in 0..n {
                let mut acc = 0.0;
                for (j, aj) in a_row.iter().enumerate().take(stage) {
                    acc += aj * ws.k[j][i];
                }
                ws.y_stage[i] = x[i] + h * acc;
            }
            let c = a_row.iter().take(stage).sum::<f64>();
            let (head, tail) = ws.k.split_at_mut(stage);
            let _ = head;
            ws.kz[stage] = rhs.eval(t + c * h, &ws.y_stage, &mut tail[0]);
        } else {
            // Seventh stage evaluates at the fifth-order solution (t + h).
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += B5[j] * ws.k[j][i];
                }
                ws.y_next[i] = x[i] + h * acc;
            }
            let (head, tail) = ws.k.split_at_mut(6);
            let _ = head;
            ws.kz[6] = rhs.eval(t + h, &ws.y_next, &mut tail[0]);
        }
    }
    let z_next = z + h * (0..6).map(|j| B5[j] * ws.kz[j]).sum::<f64>();
    check_finite(&ws.y_next, z_next, "state", t + h)?;

    // Scaled RMS error over the n+1 augmented components.
    let mut err_sq = 0.0;
    for i in 0..n {
        let e: f64 = h * (0..7).map(|j| E[j] * ws.k[j][i]).sum::<f64>();
        let sc = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(ws.y_next[i].abs());
        err_sq += (e / sc) * (e / sc);
    }
    let ez: f64 = h * (0..7).map(|j| E[j] * ws.kz[j]).sum::<f64>();
    let sc = cfg.abs_tol + cfg.rel_tol * z.abs().max(z_next.abs());
    err_sq += (ez / sc) * (ez / sc);
    let err_est = (err_sq / (n + 1) as f64).sqrt();

    let factor = if err_est == 0.0 {
        5.0
    } else {
        (0.9 * err_est.powf(-0.2)).clamp(0.2, 5.0)
    };
    let h_next = (h * factor).clamp(cfg.h_min, cfg.h_max);
    let outcome = RkStepOutcome {
        accepted: err_est <= 1.0,
        state: AugmentedState {
            x: ws.y_next.clone(),
            z: z_next,
        },
        err_est,
        h_next,
    };
    Ok((outcome, z_next))
}

fn check_finite(x: &[f64], z: f64, what: &str, t: f64) -> Result<(), OdeError> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite {
            what: format!("{what} component x[{i}]"),
            t,
        });
    }
    if !z.is_finite() {
        return Err(OdeError::NonFinite {
            what: format!("{what} component z"),
            t,
        });
    }
    Ok(())
}

/// How a chunked integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ChunkEnd {
    /// Reached `t0 + dt_chunk`.
    Completed,
    /// `z` crossed the cap; the chunk is truncated at that step.
    ZCap,
    /// `|x|` crossed the blow-up guard; truncated at that step.
    BlowUp,
}

/// Integrates the augmented system over exactly `[t0, t0 + dt_chunk]`.
///
/// The final step is clipped to land on the endpoint. Escaping the norm guard
/// reports a blow-up error; failure to meet the tolerance at `h_min` reports
/// step underflow.
pub fn integrate_chunk(
    sys: &SystemModel,
    w: &WKind,
    s0: &AugmentedState,
    t0: f64,
    dt_chunk: f64,
    cfg: &SolverConfig,
) -> Result<TrajectoryChunk, OdeError> {
    let rhs = WAugmented::new(sys, w)?;
    if s0.x.len() != sys.dim() {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim(),
            got: s0.x.len(),
        }
        .into());
    }
    let (chunk, end) = integrate_chunk_rhs(&rhs, s0, t0, dt_chunk, cfg, None)?;
    match end {
        ChunkEnd::BlowUp => {
            let (t, s) = chunk.samples.last().expect("chunk has samples");
            Err(OdeError::BlowUp {
                t: *t,
                norm: s.x.iter().map(|v| v * v).sum::<f64>().sqrt(),
                cap: cfg.norm_cap,
            })
        }
        _ => Ok(chunk),
    }
}

/// Chunk integration over a generic right-hand side, with an optional cap on
/// `z` for early termination of runaway trajectories.
pub(crate) fn integrate_chunk_rhs<R: AugmentedRhs>(
    rhs: &R,
    s0: &AugmentedState,
    t0: f64,
    dt_chunk: f64,
    cfg: &SolverConfig,
    z_cap: Option<f64>,
) -> Result<(TrajectoryChunk, ChunkEnd), OdeError> {
    cfg.validate()?;
    if !(dt_chunk > 0.0) {
        return Err(OdeError::BadConfig(format!(
            "chunk length must be positive, got {dt_chunk}"
        )));
    }
    let t_end = t0 + dt_chunk;
    let h_max = cfg.h_max.min(dt_chunk);
    let mut ws = StageWorkspace::new(rhs.dim());
    let mut chunk = TrajectoryChunk {
        samples: vec![(t0, s0.clone())],
        last_step: 0.0,
        steps_accepted: 0,
        steps_rejected: 0,
    };
    let mut t = t0;
    let mut x = s0.x.clone();
    let mut z = s0.z;
    let mut h = cfg.h_init.clamp(cfg.h_min, h_max);
    let time_eps = 1e-12 * t_end.abs().max(1.0);

    while t < t_end - time_eps {
        let h_try = h.min(t_end - t);
        let (out, z_next) = try_step(rhs, t, &x, z, h_try, cfg, &mut ws)?;
        if out.accepted {
            t += h_try;
            if t_end - t < time_eps {
                t = t_end;
            }
            x.copy_from_slice(&out.state.x);
            z = z_next;
            chunk.steps_accepted += 1;
            chunk.last_step = h_try;
            chunk.samples.push((t, out.state));
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > cfg.norm_cap {
                return Ok((chunk, ChunkEnd::BlowUp));
            }
            if let Some(cap) = z_cap {
                if z > cap {
                    return Ok((chunk, ChunkEnd::ZCap));
                }
            }
            h = out.h_next.min(h_max);
        } else {
            chunk.steps_rejected += 1;
            if h_try <= cfg.h_min * (1.0 + 1e-12) {
                return Err(OdeError::StepUnderflow {
                    t,
                    h_min: cfg.h_min,
                });
            }
            h = out.h_next.max(cfg.h_min);
        }
    }
    Ok((chunk, ChunkEnd::Completed))
}

/// Advances from `(t0, s0)` until `z` first reaches `z_target`, refining the
/// crossing step until `z` lands on the target to ~1e-10 relative.
///
/// Gives the exact trajectory point at a prescribed accumulated integral,
/// which dataset augmentation uses to place points at z-quantiles. Returns
/// `None` if `z` fails to reach the target before `t_limit`.
pub(crate) fn integrate_to_z<R: AugmentedRhs>(
    rhs: &R,
    s0: &AugmentedState,
    t0: f64,
    z_target: f64,
    t_limit: f64,
    cfg: &SolverConfig,
) -> Result<Option<(f64, AugmentedState)>, OdeError> {
    cfg.validate()?;
    if s0.z >= z_target {
        return Ok(Some((t0, s0.clone())));
    }
    let mut ws = StageWorkspace::new(rhs.dim());
    let mut t = t0;
    let mut x = s0.x.clone();
    let mut z = s0.z;
    let mut h = cfg.h_init.clamp(cfg.h_min, cfg.h_max);

    while t < t_limit {
        let h_try = h.min(t_limit - t).max(cfg.h_min);
        let (out, z_next) = try_step(rhs, t, &x, z, h_try, cfg, &mut ws)?;
        if !out.accepted {
            chunk_shrink_guard(t, h_try, cfg)?;
            h = out.h_next.max(cfg.h_min);
            continue;
        }
        if z_next >= z_target {
            // Secant refinement on the step size: z(h) is smooth and
            // monotone over the step, so a few iterations suffice.
            let mut lo = 0.0f64;
            let mut hi = h_try;
            let mut h_cross = h_try * (z_target - z) / (z_next - z);
            let tol = 1e-10 * z_target.abs().max(1e-12);
            for _ in 0..60 {
                h_cross = h_cross.clamp(1e-4 * h_try, h_try);
                let (probe, z_probe) = try_step(rhs, t, &x, z, h_cross, cfg, &mut ws)?;
                let err = z_probe - z_target;
                if err.abs() <= tol {
                    return Ok(Some((t + h_cross, probe.state)));
                }
                if err > 0.0 {
                    hi = h_cross;
                } else {
                    lo = h_cross;
                }
                // Secant estimate from the bracket midpoint slope.
                let slope = (z_next - z) / h_try;
                let next = h_cross - err / slope.max(1e-300);
                h_cross = if next > lo && next < hi {
                    next
                } else {
                    0.5 * (lo + hi)
                };
            }
            let (probe, _) = try_step(rhs, t, &x, z, h_cross, cfg, &mut ws)?;
            return Ok(Some((t + h_cross, probe.state)));
        }
        t += h_try;
        x.copy_from_slice(&out.state.x);
        z = z_next;
        h = out.h_next;
    }
    Ok(None)
}

fn chunk_shrink_guard(t: f64, h_try: f64, cfg: &SolverConfig) -> Result<(), OdeError> {
    if h_try <= cfg.h_min * (1.0 + 1e-12) {
        return Err(OdeError::StepUnderflow {
            t,
            h_min: cfg.h_min,
        });
    }
    Ok(())
}
