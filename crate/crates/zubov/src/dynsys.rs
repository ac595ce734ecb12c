//! System definitions: vector fields, weight functions, equilibria, sampling.
//!
//! Everything downstream consumes a [`SystemModel`] (a named vector field with
//! a dimension) together with a [`WKind`] weight function that vanishes exactly
//! on the invariant set whose attraction domain is being characterized.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Errors from system construction, evaluation, and equilibrium refinement.
#[derive(Debug, Error)]
pub enum DynError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("invalid region: lower[{index}] = {lower} is not below upper[{index}] = {upper}")]
    InvalidRegion {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("singular Jacobian in Newton refinement")]
    SingularJacobian,
    #[error(
        "equilibrium refinement did not converge after {iterations} iterations \
         (residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Last Newton iterate, for diagnostics.
        last: Vec<f64>,
    },
    #[error("swing parameter file: {0}")]
    ParamFile(String),
}

/// A named autonomous vector field `f: R^n -> R^n`.
///
/// The field closure must write exactly `dim` derivative components for any
/// `dim`-length input. Models are immutable and cheap to clone (the field is
/// shared), so they can be handed to any number of worker threads.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    dim: usize,
    field: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    equilibrium_hint: Option<Vec<f64>>,
}

impl SystemModel {
    pub fn new<F>(name: impl Into<String>, dim: usize, field: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        SystemModel {
            name: name.into(),
            dim,
            field: Arc::new(field),
            equilibrium_hint: None,
        }
    }

    pub fn with_equilibrium_hint(mut self, x_e: Vec<f64>) -> Self {
        self.equilibrium_hint = Some(x_e);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn equilibrium_hint(&self) -> Option<&[f64]> {
        self.equilibrium_hint.as_deref()
    }

    /// Evaluates the field into `out`, checking dimensions.
    pub fn eval_field(&self, x: &[f64], out: &mut [f64]) -> Result<(), DynError> {
        if x.len() != self.dim {
            return Err(DynError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if out.len() != self.dim {
            return Err(DynError::DimensionMismatch {
                expected: self.dim,
                got: out.len(),
            });
        }
        (self.field)(x, out);
        Ok(())
    }

    /// Evaluates the field into a fresh vector.
    pub fn field_at(&self, x: &[f64]) -> Result<Vec<f64>, DynError> {
        let mut out = vec![0.0; self.dim];
        self.eval_field(x, &mut out)?;
        Ok(out)
    }

    pub(crate) fn eval_field_unchecked(&self, x: &[f64], out: &mut [f64]) {
        (self.field)(x, out);
    }

    /// Van der Pol oscillator with a stable origin and an unstable limit
    /// cycle bounding its attraction domain.
    pub fn vanderpol() -> Self {
        SystemModel::new("vanderpol", 2, |x, out| {
            let f = vanderpol_field(&[x[0], x[1]]);
            out[0] = f[0];
            out[1] = f[1];
        })
        .with_equilibrium_hint(vec![0.0, 0.0])
    }

    /// Linear contraction `dx/dt = -x` in `dim` dimensions; globally attracted
    /// to the origin, so every closed-form quantity is available for oracles.
    pub fn linear_contraction(dim: usize) -> Self {
        SystemModel::new("linear", dim, |x, out| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = -xi;
            }
        })
        .with_equilibrium_hint(vec![0.0; dim])
    }

    /// Classical multi-machine swing model built from a parameter set.
    pub fn swing(params: SwingParams) -> Self {
        let dim = 2 * params.m;
        let guess = params.equilibrium_guess();
        let p = Arc::new(params);
        SystemModel {
            name: "swing".into(),
            dim,
            field: Arc::new(move |x, out| p.field_unchecked(x, out)),
            equilibrium_hint: Some(guess),
        }
    }
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("equilibrium_hint", &self.equilibrium_hint)
            .finish()
    }
}

/// Van der Pol vector field: `dx1 = -x2`, `dx2 = x1 - (1 - x1^2) x2`.
pub fn vanderpol_field(x: &[f64; 2]) -> [f64; 2] {
    [-x[1], x[0] - (1.0 - x[0] * x[0]) * x[1]]
}

/// Weight function selector.
///
/// `DistanceSquared` suits a known isolated equilibrium; `FieldNormScaled`
/// vanishes on every equilibrium, which is what multi-machine models with a
/// continuum of synchronous states need. The scale divides the squared field
/// norm (`scale = 1000` gives `W = |f|^2 / 1000`).
#[derive(Debug, Clone)]
pub enum WKind {
    DistanceSquared { center: Vec<f64> },
    FieldNormScaled { scale: f64 },
}

impl WKind {
    /// Distance-squared weight about the origin of an `n`-dimensional system.
    pub fn distance_to_origin(n: usize) -> Self {
        WKind::DistanceSquared {
            center: vec![0.0; n],
        }
    }

    /// One-line description used in dataset headers and manifests.
    pub fn describe(&self) -> String {
        match self {
            WKind::DistanceSquared { center } => {
                let c: Vec<String> = center.iter().map(|v| format!("{v}")).collect();
                format!("dist2[{}]", c.join(" "))
            }
            WKind::FieldNormScaled { scale } => format!("fieldnorm2/{scale}"),
        }
    }
}

/// Evaluates the weight function at `x`.
pub fn eval_w(w: &WKind, sys: &SystemModel, x: &[f64]) -> Result<f64, DynError> {
    if x.len() != sys.dim() {
        return Err(DynError::DimensionMismatch {
            expected: sys.dim(),
            got: x.len(),
        });
    }
    match w {
        WKind::DistanceSquared { center } => {
            if center.len() != sys.dim() {
                return Err(DynError::DimensionMismatch {
                    expected: sys.dim(),
                    got: center.len(),
                });
            }
            Ok(x.iter()
                .zip(center)
                .map(|(xi, ci)| (xi - ci) * (xi - ci))
                .sum())
        }
        WKind::FieldNormScaled { scale } => {
            if *scale <= 0.0 {
                return Err(DynError::InvalidScale(*scale));
            }
            let f = sys.field_at(x)?;
            Ok(f.iter().map(|v| v * v).sum::<f64>() / scale)
        }
    }
}

/// Axis-aligned sampling box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DynError> {
        if lower.len() != upper.len() {
            return Err(DynError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(DynError::InvalidRegion {
                    index: i,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Region { lower, upper })
    }

    /// Square box `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self, DynError> {
        Region::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }
}

/// Draws `n` uniform samples from the box.
///
/// Sample `i` is a pure function of `(seed, i)`: each sample gets its own
/// counter-mode RNG stream, so chunked or parallel generation produces the
/// same list as a sequential pass.
pub fn sample_uniform(region: &Region, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n).map(|i| sample_one(region, seed, i as u64)).collect()
}

/// The `index`-th sample of the stream defined by `(region, seed)`.
pub fn sample_one(region: &Region, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    region
        .lower
        .iter()
        .zip(&region.upper)
        .map(|(&lo, &hi)| rng.random_range(lo..hi))
        .collect()
}

// ---------------------------------------------------------------------------
// Swing model
// ---------------------------------------------------------------------------

/// Parameters of the classical `m`-machine swing model.
///
/// State ordering is `(w_1, d_1, w_2, d_2, ..., w_m, d_m)` with rotor speeds
/// `w_i` in rad/s and rotor angles `d_i` in rad. For machine `i`:
///
/// ```text
/// dw_i/dt = (w0 / 2 H_i) (Pm_i - D (w_i - w0)/w0 - E_i^2 G_ii
///           - sum_{j != i} E_i E_j [B_ij sin(d_i - d_j) + G_ij cos(d_i - d_j)])
/// dd_i/dt = w_i - w0
/// ```
///
/// Units: `H` in seconds, `Pm` and `E` in per-unit, `G`/`B` in per-unit
/// admittance, `f0` in Hz; `omega0 = 2 pi f0`.
#[derive(Debug, Clone)]
pub struct SwingParams {
    pub m: usize,
    pub h: Vec<f64>,
    pub d: f64,
    pub pm: Vec<f64>,
    pub e: Vec<f64>,
    /// Conductance matrix, row-major `m x m`.
    pub g: Vec<f64>,
    /// Susceptance matrix, row-major `m x m`.
    pub b: Vec<f64>,
    pub f0: f64,
    pub omega0: f64,
    /// Optional rotor-angle guess for equilibrium refinement.
    pub delta0: Option<Vec<f64>>,
    // Cached pairwise products E_i E_j B_ij and E_i E_j G_ij.
    eb: Vec<f64>,
    eg: Vec<f64>,
}

impl SwingParams {
    pub fn new(
        m: usize,
        h: Vec<f64>,
        d: f64,
        pm: Vec<f64>,
        e: Vec<f64>,
        g: Vec<f64>,
        b: Vec<f64>,
        f0: f64,
        delta0: Option<Vec<f64>>,
    ) -> Result<Self, DynError> {
        let check_len = |name: &str, got: usize, want: usize| {
            if got != want {
                Err(DynError::ParamFile(format!(
                    "{name} has {got} entries, expected {want}"
                )))
            } else {
                Ok(())
            }
        };
        if m == 0 {
            return Err(DynError::ParamFile("m must be at least 1".into()));
        }
        if m > 64 {
            return Err(DynError::ParamFile(format!(
                "models are limited to 64 machines, got {m}"
            )));
        }
        check_len("H", h.len(), m)?;
        check_len("Pm", pm.len(), m)?;
        check_len("E", e.len(), m)?;
        check_len("G", g.len(), m * m)?;
        check_len("B", b.len(), m * m)?;
        if let Some(d0) = &delta0 {
            check_len("delta0", d0.len(), m)?;
        }
        if let Some(hi) = h.iter().find(|&&v| v <= 0.0) {
            return Err(DynError::ParamFile(format!(
                "inertia constants must be positive, found {hi}"
            )));
        }
        if f0 <= 0.0 {
            return Err(DynError::ParamFile(format!(
                "nominal frequency must be positive, got {f0}"
            )));
        }
        let mut eb = vec![0.0; m * m];
        let mut eg = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                eb[i * m + j] = e[i] * e[j] * b[i * m + j];
                eg[i * m + j] = e[i] * e[j] * g[i * m + j];
            }
        }
        Ok(SwingParams {
            m,
            h,
            d,
            pm,
            e,
            g,
            b,
            f0,
            omega0: 2.0 * PI * f0,
            delta0,
            eb,
            eg,
        })
    }

    /// Parses the structured-text parameter format.
    ///
    /// Lines are `key = values...`; a line without `=` continues the previous
    /// key's value list, and `#` starts a comment. Required keys: `m`, `f0`,
    /// `D`, and arrays `H`, `E`, `Pm` (length `m`) plus row-major matrices
    /// `G`, `B` (length `m*m`). Optional: `delta0` (length `m`).
    pub fn from_str_format(text: &str) -> Result<Self, DynError> {
        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key_part, value_part) = match line.split_once('=') {
                Some((k, v)) => (Some(k.trim()), v.trim()),
                None => (None, line),
            };
            let values: Result<Vec<f64>, _> = value_part
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|tok| !tok.is_empty())
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        DynError::ParamFile(format!(
                            "line {}: cannot parse '{tok}' as a number",
                            lineno + 1
                        ))
                    })
                })
                .collect();
            let values = values?;
            match key_part {
                Some(key) => entries.push((key.to_string(), values)),
                None => match entries.last_mut() {
                    Some((_, acc)) => acc.extend(values),
                    None => {
                        return Err(DynError::ParamFile(format!(
                            "line {}: values before any 'key =' line",
                            lineno + 1
                        )))
                    }
                },
            }
        }
        let take = |key: &str| -> Result<Vec<f64>, DynError> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| DynError::ParamFile(format!("missing key '{key}'")))
        };
        let scalar = |key: &str| -> Result<f64, DynError> {
            let v = take(key)?;
            if v.len() != 1 {
                return Err(DynError::ParamFile(format!(
                    "key '{key}' must hold exactly one value, found {}",
                    v.len()
                )));
            }
            Ok(v[0])
        };
        let m_raw = scalar("m")?;
        if m_raw.fract() != 0.0 || m_raw < 1.0 {
            return Err(DynError::ParamFile(format!(
                "m must be a positive integer, got {m_raw}"
            )));
        }
        let m = m_raw as usize;
        let g = take("G")?;
        let b = take("B")?;
        if g.len() != m * m {
            return Err(DynError::ParamFile(format!(
                "G must be a square {m}x{m} matrix ({} entries), found {}",
                m * m,
                g.len()
            )));
        }
        if b.len() != m * m {
            return Err(DynError::ParamFile(format!(
                "B must be a square {m}x{m} matrix ({} entries), found {}",
                m * m,
                b.len()
            )));
        }
        let delta0 = entries
            .iter()
            .find(|(k, _)| k == "delta0")
            .map(|(_, v)| v.clone());
        SwingParams::new(
            m,
            take("H")?,
            scalar("D")?,
            take("Pm")?,
            take("E")?,
            g,
            b,
            scalar("f0")?,
            delta0,
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DynError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            DynError::ParamFile(format!("{}: {e}", path.as_ref().display()))
        })?;
        SwingParams::from_str_format(&text)
    }

    /// Interleaved state `(w0, delta0_1, w0, delta0_2, ...)` used as the
    /// starting point for equilibrium refinement (zero angles if no `delta0`).
    pub fn equilibrium_guess(&self) -> Vec<f64> {
        let mut x = vec![0.0; 2 * self.m];
        for i in 0..self.m {
            x[2 * i] = self.omega0;
            x[2 * i + 1] = self.delta0.as_ref().map_or(0.0, |d| d[i]);
        }
        x
    }

    fn field_unchecked(&self, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        // sin/cos of each angle once; pairwise differences via identities.
        let mut sd = [0.0f64; 64];
        let mut cd = [0.0f64; 64];
        let (sd, cd) = if m <= 64 {
            (&mut sd[..m], &mut cd[..m])
        } else {
            unreachable!("swing models larger than 64 machines are rejected at parse time")
        };
        for i in 0..m {
            let (s, c) = x[2 * i + 1].sin_cos();
            sd[i] = s;
            cd[i] = c;
        }
        for i in 0..m {
            let wi = x[2 * i];
            let mut p_elec = self.eg[i * m + i];
            for j in 0..m {
                if j == i {
                    continue;
                }
                let sin_ij = sd[i] * cd[j] - cd[i] * sd[j];
                let cos_ij = cd[i] * cd[j] + sd[i] * sd[j];
                p_elec += self.eb[i * m + j] * sin_ij + self.eg[i * m + j] * cos_ij;
            }
            let acc = self.pm[i] - self.d * (wi - self.omega0) / self.omega0 - p_elec;
            out[2 * i] = self.omega0 / (2.0 * self.h[i]) * acc;
            out[2 * i + 1] = wi - self.omega0;
        }
    }
}

/// Swing vector field for state `(w_1, d_1, ..., w_m, d_m)`.
pub fn swing_field(p: &SwingParams, x: &[f64]) -> Result<Vec<f64>, DynError> {
    if x.len() != 2 * p.m {
        return Err(DynError::DimensionMismatch {
            expected: 2 * p.m,
            got: x.len(),
        });
    }
    let mut out = vec![0.0; 2 * p.m];
    p.field_unchecked(x, &mut out);
    Ok(out)
}

/// Sampling box used for swing-model studies: rotor speeds within
/// `+-1.5` rad/s of synchronous and angles within `+-0.4 pi` rad of the
/// equilibrium angles.
pub fn swing_region(p: &SwingParams, equilibrium: &[f64]) -> Result<Region, DynError> {
    if equilibrium.len() != 2 * p.m {
        return Err(DynError::DimensionMismatch {
            expected: 2 * p.m,
            got: equilibrium.len(),
        });
    }
    let mut lower = Vec::with_capacity(2 * p.m);
    let mut upper = Vec::with_capacity(2 * p.m);
    for i in 0..p.m {
        lower.push(p.omega0 - 1.5);
        upper.push(p.omega0 + 1.5);
        lower.push(equilibrium[2 * i + 1] - 0.4 * PI);
        upper.push(equilibrium[2 * i + 1] + 0.4 * PI);
    }
    Region::new(lower, upper)
}

// ---------------------------------------------------------------------------
// Equilibrium refinement
// ---------------------------------------------------------------------------

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;

/// Newton refinement of an equilibrium from `guess`.
///
/// The Jacobian comes from central differences with step
/// `1e-6 * max(1, |x_i|)`, so user systems need no analytic derivatives.
/// Rank-deficient Jacobians (e.g. models invariant under a uniform angle
/// shift, whose equilibria form a line) fall back to a damped least-squares
/// step that stays near the guess.
pub fn refine_equilibrium(sys: &SystemModel, guess: &[f64]) -> Result<Vec<f64>, DynError> {
    let n = sys.dim();
    if guess.len() != n {
        return Err(DynError::DimensionMismatch {
            expected: n,
            got: guess.len(),
        });
    }
    let mut x = guess.to_vec();
    let mut fx = sys.field_at(&x)?;
    for _ in 0..NEWTON_MAX_ITER {
        let residual = norm(&fx);
        if residual <= NEWTON_TOL {
            return Ok(x);
        }
        let jac = central_jacobian(sys, &x)?;
        let step = solve_newton_step(&jac, &fx, n)?;
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi += si;
        }
        fx = sys.field_at(&x)?;
    }
    let residual = norm(&fx);
    if residual <= NEWTON_TOL {
        return Ok(x);
    }
    Err(DynError::NonConvergence {
        iterations: NEWTON_MAX_ITER,
        residual,
        last: x,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference Jacobian, row-major `n x n`.
fn central_jacobian(sys: &SystemModel, x: &[f64]) -> Result<Vec<f64>, DynError> {
    let n = sys.dim();
    let mut jac = vec![0.0; n * n];
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let orig = xp[j];
        xp[j] = orig + h;
        sys.eval_field(&xp, &mut fp)?;
        xp[j] = orig - h;
        sys.eval_field(&xp, &mut fm)?;
        xp[j] = orig;
        for i in 0..n {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Solves `J s = -f`. Well-conditioned systems go through LU with partial
/// pivoting; numerically singular ones retry with a small ridge on the
/// normal equations, which picks a near-minimum-norm step.
fn solve_newton_step(jac: &[f64], fx: &[f64], n: usize) -> Result<Vec<f64>, DynError> {
    let rhs: Vec<f64> = fx.iter().map(|v| -v).collect();
    if let Some(step) = lu_solve(jac, &rhs, n) {
        return Ok(step);
    }
    // J^T J + lambda I, J^T rhs
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += jac[k * n + i] * jac[k * n + j];
            }
            jtj[i * n + j] = s;
        }
        jtr[i] = (0..n).map(|k| jac[k * n + i] * rhs[k]).sum();
    }
    let trace: f64 = (0..n).map(|i| jtj[i * n + i]).sum();
    if trace <= 0.0 || !trace.is_finite() {
        return Err(DynError::SingularJacobian);
    }
    let mut lambda = 1e-12 * trace / n as f64;
    for _ in 0..6 {
        if let Some(step) = cholesky_solve(&jtj, &jtr, n, lambda) {
            return Ok(step);
        }
        lambda *= 100.0;
    }
    Err(DynError::SingularJacobian)
}

/// Cholesky solve of `(A + lambda I) x = b` for symmetric positive
/// semidefinite `A`; `None` if the shifted matrix loses positivity.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize, lambda: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j] + if i == j { lambda } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// LU with partial pivoting; `None` when a pivot falls below the scaled
/// singularity threshold.
fn lu_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let tol = 1e-12 * scale;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = m[col * n + col].abs();
        for row in (col + 1)..n {
            let v = m[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < tol {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }
        let inv = 1.0 / m[col * n + col];
        for row in (col + 1)..n {
            let factor = m[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for k in (row + 1)..n {
            s -= m[row * n + k] * x[k];
        }
        x[row] = s / m[row * n + row];
    }
    Some(x)
}
