//! Feedforward tanh network for surrogate evaluation of `V`.
//!
//! The network is alternating affine maps and elementwise tanh through the
//! hidden layers with a single linear output unit. Inputs are standardized
//! with constants computed on the training set and stored with the model;
//! without this, states mixing radians and rad/s near synchronous speed make
//! the regression badly conditioned. Training is mini-batch Adam on the mean
//! squared error, keeping the parameters with the best validation RMSE.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datagen::{DataPoint, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>) -> Result<Self, MlpError> {
        if input_dim == 0 {
            return Err(MlpError::BadArchitecture("input_dim must be >= 1".into()));
        }
        if hidden_widths.is_empty() {
            return Err(MlpError::BadArchitecture(
                "need at least one hidden layer".into(),
            ));
        }
        if hidden_widths.iter().any(|&w| w == 0) {
            return Err(MlpError::BadArchitecture(
                "hidden widths must be >= 1".into(),
            ));
        }
        Ok(MlpArchitecture {
            input_dim,
            hidden_widths,
        })
    }

    /// Layer shapes `(rows, cols)` including the linear output layer.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut prev = self.input_dim;
        for &w in &self.hidden_widths {
            shapes.push((w, prev));
            prev = w;
        }
        shapes.push((1, prev));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major `rows x cols`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

/// Per-coordinate affine input map `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputScaler {
    fn identity(dim: usize) -> Self {
        InputScaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    fn from_points(points: &[DataPoint], dim: usize) -> Self {
        let n = points.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in points {
            for (m, xi) in mean.iter_mut().zip(&p.x) {
                *m += xi;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for p in points {
            for k in 0..dim {
                let d = p.x[k] - mean[k];
                var[k] += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        InputScaler { mean, std }
    }
}

/// Network parameters: architecture, layer weights/biases, input scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: MlpArchitecture,
    layers: Vec<Layer>,
    scaler: InputScaler,
}

impl MlpParams {
    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn scaler(&self) -> &InputScaler {
        &self.scaler
    }

    fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.rows.max(l.cols))
            .max()
            .unwrap_or(1)
    }
}

/// Same-shaped gradients of the loss with respect to every parameter.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
}

/// Validation-set error summary. Signed errors are `prediction - label`.
#[derive(Debug, Clone)]
pub struct ErrorStats {
    pub rmse: f64,
    pub p25: f64,
    pub p75: f64,
    pub max_abs_error: f64,
    /// 50 equal-width bins over the signed-error range.
    pub histogram: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("batch must not be empty")]
    EmptyBatch,
    #[error("dataset must not be empty")]
    EmptyDataset,
    #[error(
        "training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate"
    )]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    ModelFormat(String),
}

/// Glorot-uniform weights (`+-sqrt(6 / (fan_in + fan_out))`), zero biases,
/// identity input scaler. Deterministic per seed.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layer_shapes()
        .into_iter()
        .map(|(rows, cols)| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let weights = (0..rows * cols)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            Layer {
                weights,
                biases: vec![0.0; rows],
                rows,
                cols,
            }
        })
        .collect();
    MlpParams {
        arch: arch.clone(),
        layers,
        scaler: InputScaler::identity(arch.input_dim),
    }
}

struct ForwardScratch {
    /// Activations per layer boundary: `act[0]` is the scaled input,
    /// `act[l+1]` the output of layer `l`.
    act: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl ForwardScratch {
    fn new(p: &MlpParams) -> Self {
        let mut act = Vec::with_capacity(p.layers.len() + 1);
        act.push(vec![0.0; p.arch.input_dim]);
        for l in &p.layers {
            act.push(vec![0.0; l.rows]);
        }
        let w = p.max_width();
        ForwardScratch {
            act,
            delta: vec![0.0; w],
            delta_next: vec![0.0; w],
        }
    }
}

fn forward_into(p: &MlpParams, x: &[f64], scratch: &mut ForwardScratch) -> f64 {
    for (a, (xi, (m, s))) in scratch.act[0].iter_mut().zip(
        x.iter()
            .zip(p.scaler.mean.iter().zip(&p.scaler.std)),
    ) {
        *a = (xi - m) / s;
    }
    let n_layers = p.layers.len();
    for (l, layer) in p.layers.iter().enumerate() {
        let (inputs, outputs) = {
            let (head, tail) = scratch.act.split_at_mut(l + 1);
            (&head[l], &mut tail[0])
        };
        for r in 0..layer.rows {
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            let mut s = layer.biases[r];
            for (wi, ai) in row.iter().zip(inputs.iter()) {
                s += wi * ai;
            }
            outputs[r] = if l + 1 < n_layers { s.tanh() } else { s };
        }
    }
    scratch.act[n_layers][0]
}

/// Network output at `x`.
pub fn forward(p: &MlpParams, x: &[f64]) -> Result<f64, MlpError> {
    if x.len() != p.arch.input_dim {
        return Err(MlpError::DimMismatch {
            expected: p.arch.input_dim,
            got: x.len(),
        });
    }
    let mut scratch = ForwardScratch::new(p);
    Ok(forward_into(p, x, &mut scratch))
}

/// Mean squared prediction error over the batch.
pub fn mse_loss(p: &MlpParams, batch: &[DataPoint]) -> Result<f64, MlpError> {
    if batch.is_empty() {
        return Err(MlpError::EmptyBatch);
    }
    let mut scratch = ForwardScratch::new(p);
    let mut acc = 0.0;
    for point in batch {
        if point.x.len() != p.arch.input_dim {
            return Err(MlpError::DimMismatch {
                expected: p.arch.input_dim,
                got: point.x.len(),
            });
        }
        let e = forward_into(p, &point.x, &mut scratch) - point.v;
        acc += e * e;
    }
    Ok(acc / batch.len() as f64)
}

fn zero_grads(p: &MlpParams) -> MlpGradients {
    MlpGradients {
        weights: p.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
        biases: p.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
    }
}

/// Accumulates the batch gradient and returns the batch loss.
fn backprop(
    p: &MlpParams,
    batch: &[DataPoint],
    scratch: &mut ForwardScratch,
    grads: &mut MlpGradients,
) -> Result<f64, MlpError> {
    if batch.is_empty() {
        return Err(MlpError::EmptyBatch);
    }
    for g in &mut grads.weights {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    for g in &mut grads.biases {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let n = batch.len() as f64;
    let n_layers = p.layers.len();
    let mut loss = 0.0;
    for point in batch {
        if point.x.len() != p.arch.input_dim {
            return Err(MlpError::DimMismatch {
                expected: p.arch.input_dim,
                got: point.x.len(),
            });
        }
        let pred = forward_into(p, &point.x, scratch);
        let e = pred - point.v;
        loss += e * e;
        // Output layer delta: d(mean loss)/d(pre-activation).
        scratch.delta[0] = 2.0 * e / n;
        for l in (0..n_layers).rev() {
            let layer = &p.layers[l];
            let inputs = &scratch.act[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for r in 0..layer.rows {
                let d = scratch.delta[r];
                gb[r] += d;
                let row = &mut gw[r * layer.cols..(r + 1) * layer.cols];
                for (g, ai) in row.iter_mut().zip(inputs.iter()) {
                    *g += d * ai;
                }
            }
            if l > 0 {
                // delta through W, then through tanh of the previous layer.
                for j in 0..layer.cols {
                    let mut s = 0.0;
                    for r in 0..layer.rows {
                        s += scratch.delta[r] * layer.weights[r * layer.cols + j];
                    }
                    let a = scratch.act[l][j];
                    scratch.delta_next[j] = s * (1.0 - a * a);
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.delta_next);
            }
        }
    }
    Ok(loss / n)
}

/// Analytic gradient of [`mse_loss`] at `p`.
pub fn gradient(p: &MlpParams, batch: &[DataPoint]) -> Result<MlpGradients, MlpError> {
    let mut scratch = ForwardScratch::new(p);
    let mut grads = zero_grads(p);
    backprop(p, batch, &mut scratch, &mut grads)?;
    Ok(grads)
}

struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    fn new(p: &MlpParams) -> Self {
        AdamState {
            m_w: p.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_w: p.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_b: p.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            v_b: p.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, p: &mut MlpParams, grads: &MlpGradients, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let lr = cfg.learning_rate * bc2.sqrt() / bc1;
        for (l, layer) in p.layers.iter_mut().enumerate() {
            for (i, g) in grads.weights[l].iter().enumerate() {
                let m = &mut self.m_w[l][i];
                let v = &mut self.v_w[l][i];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                layer.weights[i] -= lr * *m / (v.sqrt() + cfg.epsilon);
            }
            for (i, g) in grads.biases[l].iter().enumerate() {
                let m = &mut self.m_b[l][i];
                let v = &mut self.v_b[l][i];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                layer.biases[i] -= lr * *m / (v.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Mini-batch Adam training with per-epoch shuffling seeded by `cfg.seed`.
///
/// The input scaler is recomputed from the training set before the first
/// epoch. Returns the parameters with the best validation RMSE seen over all
/// epochs and the per-epoch history.
pub fn train(
    p0: &MlpParams,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpParams, Vec<EpochStats>), MlpError> {
    if train_set.points.is_empty() || val_set.points.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    if train_set.meta.dim != p0.arch.input_dim {
        return Err(MlpError::DimMismatch {
            expected: p0.arch.input_dim,
            got: train_set.meta.dim,
        });
    }
    if val_set.meta.dim != p0.arch.input_dim {
        return Err(MlpError::DimMismatch {
            expected: p0.arch.input_dim,
            got: val_set.meta.dim,
        });
    }
    if cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(MlpError::BadArchitecture(
            "batch_size must be >= 1 and learning_rate positive".into(),
        ));
    }
    let mut params = p0.clone();
    params.scaler = InputScaler::from_points(&train_set.points, p0.arch.input_dim);

    let mut scratch = ForwardScratch::new(&params);
    let mut grads = zero_grads(&params);
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, MlpParams)> = None;

    let n = train_set.points.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch: Vec<DataPoint> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        shuffle(&mut order, &mut rng);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set.points[i].clone()));
            let loss = backprop(&params, &batch, &mut scratch, &mut grads)?;
            if !loss.is_finite() {
                return Err(MlpError::Diverged { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.update(&mut params, &grads, cfg);
        }
        let train_loss = epoch_loss / n as f64;
        let val_rmse = mse_loss(&params, &val_set.points)?.sqrt();
        if !val_rmse.is_finite() {
            return Err(MlpError::Diverged {
                epoch,
                loss: val_rmse,
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_rmse,
        });
        if best.as_ref().is_none_or(|(b, _)| val_rmse < *b) {
            best = Some((val_rmse, params.clone()));
        }
    }
    let (_, best_params) = best.expect("at least one epoch");
    Ok((best_params, history))
}

/// Fisher-Yates with our own RNG so shuffles stay reproducible.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Signed-error statistics of the model over a validation set.
pub fn validate(p: &MlpParams, val_set: &Dataset) -> Result<ErrorStats, MlpError> {
    if val_set.points.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    let mut scratch = ForwardScratch::new(p);
    let mut errors: Vec<f64> = Vec::with_capacity(val_set.points.len());
    for point in &val_set.points {
        if point.x.len() != p.arch.input_dim {
            return Err(MlpError::DimMismatch {
                expected: p.arch.input_dim,
                got: point.x.len(),
            });
        }
        errors.push(forward_into(p, &point.x, &mut scratch) - point.v);
    }
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    let max_abs_error = errors.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p25 = percentile(&sorted, 0.25);
    let p75 = percentile(&sorted, 0.75);

    const BINS: usize = 50;
    let lo = *sorted.first().unwrap();
    let hi = *sorted.last().unwrap();
    let width = if hi > lo { (hi - lo) / BINS as f64 } else { 1.0 };
    let mut counts = vec![0usize; BINS];
    for e in &errors {
        let idx = (((e - lo) / width) as usize).min(BINS - 1);
        counts[idx] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
        .collect();
    Ok(ErrorStats {
        rmse,
        p25,
        p75,
        max_abs_error,
        histogram,
    })
}

/// Linear-interpolated percentile of a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Writes the model as decimal text with 17 significant digits, which
/// round-trips f64 exactly.
pub fn save_model(p: &MlpParams, path: impl AsRef<Path>) -> Result<(), MlpError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "zubov-mlp v1")?;
    writeln!(out, "input_dim {}", p.arch.input_dim)?;
    let widths: Vec<String> = p.arch.hidden_widths.iter().map(|w| w.to_string()).collect();
    writeln!(out, "hidden {}", widths.join(" "))?;
    writeln!(out, "scaler_mean {}", join_precise(&p.scaler.mean))?;
    writeln!(out, "scaler_std {}", join_precise(&p.scaler.std))?;
    for (l, layer) in p.layers.iter().enumerate() {
        writeln!(out, "layer {l} {} {}", layer.rows, layer.cols)?;
        for r in 0..layer.rows {
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            writeln!(out, "w {}", join_precise(row))?;
        }
        writeln!(out, "b {}", join_precise(&layer.biases))?;
    }
    writeln!(out, "end")?;
    out.flush()?;
    Ok(())
}

fn join_precise(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Loads a model written by [`save_model`]; any structural surprise
/// (truncation, shape mismatch, unknown version) fails without a partial
/// model.
pub fn load_model(path: impl AsRef<Path>) -> Result<MlpParams, MlpError> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let mut next_line = |what: &str| -> Result<String, MlpError> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| MlpError::ModelFormat(format!("file truncated before {what}")))
    };
    let header = next_line("header")?;
    if header.trim() != "zubov-mlp v1" {
        return Err(MlpError::ModelFormat(format!(
            "unsupported header '{header}'"
        )));
    }
    let input_dim = parse_tagged_usize(&next_line("input_dim")?, "input_dim")?;
    let hidden_line = next_line("hidden")?;
    let hidden: Vec<usize> = hidden_line
        .strip_prefix("hidden")
        .ok_or_else(|| MlpError::ModelFormat("expected 'hidden' line".into()))?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| MlpError::ModelFormat(format!("bad hidden width '{t}'")))
        })
        .collect::<Result<_, _>>()?;
    let arch = MlpArchitecture::new(input_dim, hidden)?;
    let mean = parse_tagged_floats(&next_line("scaler_mean")?, "scaler_mean", input_dim)?;
    let std = parse_tagged_floats(&next_line("scaler_std")?, "scaler_std", input_dim)?;

    let mut layers = Vec::new();
    for (l, (rows, cols)) in arch.layer_shapes().into_iter().enumerate() {
        let decl = next_line("layer declaration")?;
        let expect = format!("layer {l} {rows} {cols}");
        if decl.trim() != expect {
            return Err(MlpError::ModelFormat(format!(
                "expected '{expect}', found '{decl}'"
            )));
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = next_line(&format!("layer {l} row {r}"))?;
            weights.extend(parse_tagged_floats(&line, "w", cols)?);
        }
        let biases = parse_tagged_floats(&next_line("biases")?, "b", rows)?;
        layers.push(Layer {
            weights,
            biases,
            rows,
            cols,
        });
    }
    let end = next_line("end marker")?;
    if end.trim() != "end" {
        return Err(MlpError::ModelFormat(format!(
            "expected 'end', found '{end}'"
        )));
    }
    Ok(MlpParams {
        arch,
        layers,
        scaler: InputScaler { mean, std },
    })
}

fn parse_tagged_usize(line: &str, tag: &str) -> Result<usize, MlpError> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| MlpError::ModelFormat(format!("expected '{tag}' line, found '{line}'")))?;
    rest.trim()
        .parse()
        .map_err(|_| MlpError::ModelFormat(format!("bad value in '{line}'")))
}

fn parse_tagged_floats(line: &str, tag: &str, expect: usize) -> Result<Vec<f64>, MlpError> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| MlpError::ModelFormat(format!("expected '{tag}' line, found '{line}'")))?;
    let vals: Result<Vec<f64>, _> = rest
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| MlpError::ModelFormat(format!("bad number '{t}'")))
        })
        .collect();
    let vals = vals?;
    if vals.len() != expect {
        return Err(MlpError::ModelFormat(format!(
            "'{tag}' line holds {} values, expected {expect}",
            vals.len()
        )));
    }
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{DatasetMeta, LabelSpace};
    use crate::dynsys::Region;

    fn arch(input: usize, widths: &[usize]) -> MlpArchitecture {
        MlpArchitecture::new(input, widths.to_vec()).unwrap()
    }

    fn toy_dataset(points: Vec<DataPoint>, dim: usize) -> Dataset {
        Dataset {
            points,
            meta: DatasetMeta {
                system: "toy".into(),
                w_desc: "toy".into(),
                alpha: 0.1,
                m_threshold: 200.0,
                delta_i: 1e-6,
                seed: 0,
                region: Region::cube(-1.0, 1.0, dim).unwrap(),
                n_traj: 0,
                k_extra: 0,
                n_inconclusive: 0,
                dim,
                label_space: LabelSpace::VSpace,
            },
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = arch(2, &[8, 8]);
        let p1 = init_params(&a, 42);
        let p2 = init_params(&a, 42);
        assert_eq!(p1, p2);
        for l in p1.layers() {
            assert!(l.biases.iter().all(|&b| b == 0.0));
        }
        let p3 = init_params(&a, 43);
        assert_ne!(p1.layers()[0].weights, p3.layers()[0].weights);
    }

    #[test]
    fn init_weight_variance_matches_glorot() {
        let a = arch(1000, &[1000]);
        let p = init_params(&a, 7);
        let w = &p.layers()[0].weights;
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        let var: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / 2000.0;
        assert!(
            (var - expected).abs() < 0.2 * expected,
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn forward_zero_params_outputs_zero() {
        let a = arch(3, &[4]);
        let mut p = init_params(&a, 0);
        for l in p.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        assert_eq!(forward(&p, &[0.3, -1.0, 2.0]).unwrap(), 0.0);
    }

    fn single_unit(w1: f64, b1: f64, w2: f64, b2: f64) -> MlpParams {
        let a = arch(1, &[1]);
        let mut p = init_params(&a, 0);
        p.layers_mut()[0].weights[0] = w1;
        p.layers_mut()[0].biases[0] = b1;
        p.layers_mut()[1].weights[0] = w2;
        p.layers_mut()[1].biases[0] = b2;
        p
    }

    #[test]
    fn forward_single_unit_hand_values() {
        let p = single_unit(1.0, 0.0, 1.0, 0.0);
        assert_eq!(forward(&p, &[0.0]).unwrap(), 0.0);

        let p = single_unit(1.0, 0.0, 2.0, 0.5);
        let expected = 2.0 * (1.0f64).tanh() + 0.5;
        assert!((forward(&p, &[1.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let p = init_params(&arch(2, &[4]), 0);
        assert!(matches!(
            forward(&p, &[1.0]),
            Err(MlpError::DimMismatch { .. })
        ));
    }

    #[test]
    fn mse_hand_values() {
        let p = single_unit(0.0, 0.0, 0.0, 0.0); // constant-0 net
        let pts = vec![
            DataPoint { x: vec![0.1], v: 1.0 },
            DataPoint { x: vec![0.2], v: 1.0 },
        ];
        assert_eq!(mse_loss(&p, &pts).unwrap(), 1.0);

        let p = single_unit(0.0, 0.0, 0.0, 0.5);
        let pts = vec![
            DataPoint { x: vec![0.0], v: 0.4 }, // residual +0.1
            DataPoint { x: vec![0.0], v: 0.8 }, // residual -0.3
        ];
        assert!((mse_loss(&p, &pts).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn gradient_zero_at_perfect_fit() {
        let p = single_unit(1.0, 0.0, 2.0, 0.5);
        let y = 2.0 * (1.0f64).tanh() + 0.5;
        let g = gradient(&p, &[DataPoint { x: vec![1.0], v: y }]).unwrap();
        for gl in g.weights.iter().chain(&g.biases) {
            for v in gl {
                assert!(v.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradient_chain_rule_hand_value() {
        // Point (1, 0): d loss / d w2 = 2 * prediction * tanh(1).
        let p = single_unit(1.0, 0.0, 2.0, 0.5);
        let pred = 2.0 * (1.0f64).tanh() + 0.5;
        let g = gradient(&p, &[DataPoint { x: vec![1.0], v: 0.0 }]).unwrap();
        let expected = 2.0 * pred * (1.0f64).tanh();
        assert!((g.weights[1][0] - expected).abs() < 1e-12);
    }

    /// Central-difference oracle for the loss gradient, step
    /// `1e-5 * max(1, |theta|)`.
    fn fd_gradient(p: &MlpParams, batch: &[DataPoint]) -> MlpGradients {
        let mut g = zero_grads(p);
        let n_layers = p.layers().len();
        for l in 0..n_layers {
            for i in 0..p.layers()[l].weights.len() {
                let theta = p.layers()[l].weights[i];
                let h = 1e-5 * theta.abs().max(1.0);
                let mut pp = p.clone();
                pp.layers_mut()[l].weights[i] = theta + h;
                let fp = mse_loss(&pp, batch).unwrap();
                pp.layers_mut()[l].weights[i] = theta - h;
                let fm = mse_loss(&pp, batch).unwrap();
                g.weights[l][i] = (fp - fm) / (2.0 * h);
            }
            for i in 0..p.layers()[l].biases.len() {
                let theta = p.layers()[l].biases[i];
                let h = 1e-5 * theta.abs().max(1.0);
                let mut pp = p.clone();
                pp.layers_mut()[l].biases[i] = theta + h;
                let fp = mse_loss(&pp, batch).unwrap();
                pp.layers_mut()[l].biases[i] = theta - h;
                let fm = mse_loss(&pp, batch).unwrap();
                g.biases[l][i] = (fp - fm) / (2.0 * h);
            }
        }
        g
    }

    pub(crate) fn gradient_check(p: &MlpParams, batch: &[DataPoint]) -> f64 {
        let analytic = gradient(p, batch).unwrap();
        let numeric = fd_gradient(p, batch);
        let mut worst = 0.0f64;
        for l in 0..analytic.weights.len() {
            for (a, n) in analytic.weights[l]
                .iter()
                .chain(&analytic.biases[l])
                .zip(numeric.weights[l].iter().chain(&numeric.biases[l]))
            {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for trial in 0..5 {
            let widths: Vec<usize> = (0..rng.random_range(1..=3))
                .map(|_| rng.random_range(1..=8))
                .collect();
            let input = rng.random_range(1..=4);
            let p = init_params(&arch(input, &widths), trial);
            let batch: Vec<DataPoint> = (0..rng.random_range(1..=6))
                .map(|_| DataPoint {
                    x: (0..input).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    v: rng.random_range(0.0..1.0),
                })
                .collect();
            let worst = gradient_check(&p, &batch);
            assert!(worst < 1e-5, "trial {trial}: worst rel error {worst:.3e}");
        }
    }

    #[test]
    fn train_fits_constant_labels() {
        let pts: Vec<DataPoint> = (0..64)
            .map(|k| DataPoint {
                x: vec![k as f64 / 64.0],
                v: 0.5,
            })
            .collect();
        let ds = toy_dataset(pts.clone(), 1);
        let val = toy_dataset(pts, 1);
        let p0 = init_params(&arch(1, &[1]), 3);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let (_, history) = train(&p0, &ds, &val, &cfg).unwrap();
        let final_loss = history.last().unwrap().train_loss;
        assert!(final_loss <= 1e-6, "final loss {final_loss}");
    }

    #[test]
    fn train_fits_scalar_tanh() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<DataPoint> = (0..1000)
            .map(|_| {
                let x = rng.random_range(-3.0..3.0);
                DataPoint {
                    x: vec![x],
                    v: x.tanh(),
                }
            })
            .collect();
        let val_pts: Vec<DataPoint> = (0..500)
            .map(|_| {
                let x = rng.random_range(-3.0..3.0);
                DataPoint {
                    x: vec![x],
                    v: x.tanh(),
                }
            })
            .collect();
        let ds = toy_dataset(pts, 1);
        let val = toy_dataset(val_pts, 1);
        let p0 = init_params(&arch(1, &[16, 16]), 1);
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 64,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let (best, _) = train(&p0, &ds, &val, &cfg).unwrap();
        let stats = validate(&best, &val).unwrap();
        assert!(stats.rmse < 1e-3, "rmse {}", stats.rmse);
    }

    #[test]
    fn train_history_is_deterministic() {
        let pts: Vec<DataPoint> = (0..128)
            .map(|k| {
                let x = (k as f64 - 64.0) / 32.0;
                DataPoint {
                    x: vec![x],
                    v: (x * 0.7).tanh().abs(),
                }
            })
            .collect();
        let ds = toy_dataset(pts.clone(), 1);
        let val = toy_dataset(pts, 1);
        let p0 = init_params(&arch(1, &[4]), 9);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let (pa, ha) = train(&p0, &ds, &val, &cfg).unwrap();
        let (pb, hb) = train(&p0, &ds, &val, &cfg).unwrap();
        assert_eq!(pa, pb);
        for (a, b) in ha.iter().zip(&hb) {
            assert_eq!(a.train_loss, b.train_loss);
            assert_eq!(a.val_rmse, b.val_rmse);
        }
    }

    #[test]
    fn validate_perfect_predictor() {
        let p = single_unit(0.0, 0.0, 0.0, 0.5);
        let pts = vec![
            DataPoint { x: vec![0.1], v: 0.5 },
            DataPoint { x: vec![0.9], v: 0.5 },
        ];
        let ds = toy_dataset(pts, 1);
        let stats = validate(&p, &ds).unwrap();
        assert_eq!(stats.rmse, 0.0);
        assert_eq!(stats.p25, 0.0);
        assert_eq!(stats.p75, 0.0);
        assert_eq!(stats.max_abs_error, 0.0);
    }

    #[test]
    fn validate_symmetric_two_mass_errors() {
        // Predictions constant 0.5; labels split half at 0.4, half at 0.6.
        let p = single_unit(0.0, 0.0, 0.0, 0.5);
        let mut pts = Vec::new();
        for _ in 0..50 {
            pts.push(DataPoint { x: vec![0.0], v: 0.4 }); // error +0.1
            pts.push(DataPoint { x: vec![0.0], v: 0.6 }); // error -0.1
        }
        let ds = toy_dataset(pts, 1);
        let stats = validate(&p, &ds).unwrap();
        assert!((stats.rmse - 0.1).abs() < 1e-12);
        assert!((stats.p25 + 0.1).abs() < 1e-12);
        assert!((stats.p75 - 0.1).abs() < 1e-12);
        assert!((stats.max_abs_error - 0.1).abs() < 1e-12);
        assert_eq!(stats.histogram.len(), 50);
        assert_eq!(stats.histogram.iter().map(|b| b.2).sum::<usize>(), 100);
    }

    #[test]
    fn validate_rmse_equals_sqrt_mse() {
        let p = init_params(&arch(2, &[6, 6]), 2);
        let pts: Vec<DataPoint> = (0..40)
            .map(|k| DataPoint {
                x: vec![(k as f64 * 0.13).sin(), (k as f64 * 0.07).cos()],
                v: (k as f64 * 0.05).fract(),
            })
            .collect();
        let ds = toy_dataset(pts, 2);
        let stats = validate(&p, &ds).unwrap();
        let rmse = mse_loss(&p, &ds.points).unwrap().sqrt();
        assert!((stats.rmse - rmse).abs() < 1e-14);
    }

    #[test]
    fn hidden_activations_stay_in_unit_interval() {
        // tanh rounds to exactly +-1.0 in f64 once saturated, hence <=.
        let p = init_params(&arch(2, &[8, 8]), 11);
        let mut scratch = ForwardScratch::new(&p);
        forward_into(&p, &[100.0, -50.0], &mut scratch);
        for layer_act in &scratch.act[1..scratch.act.len() - 1] {
            for a in layer_act {
                assert!(a.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn model_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let mut p = init_params(&arch(2, &[5, 3]), 21);
        p.scaler = InputScaler {
            mean: vec![0.37, -1.25],
            std: vec![2.0, 0.125],
        };
        save_model(&p, &path).unwrap();
        let q = load_model(&path).unwrap();
        assert_eq!(p, q);
        let x = [0.123456789, -2.71828];
        assert_eq!(forward(&p, &x).unwrap(), forward(&q, &x).unwrap());
    }

    #[test]
    fn truncated_model_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let p = init_params(&arch(2, &[4]), 0);
        save_model(&p, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(load_model(&path), Err(MlpError::ModelFormat(_))));
    }

    #[test]
    fn reloaded_model_validates_identically() {
        let pts: Vec<DataPoint> = (0..100)
            .map(|k| {
                let x = k as f64 / 50.0 - 1.0;
                DataPoint {
                    x: vec![x],
                    v: 0.5 * (x + 1.0).tanh(),
                }
            })
            .collect();
        let ds = toy_dataset(pts.clone(), 1);
        let val = toy_dataset(pts, 1);
        let p0 = init_params(&arch(1, &[8]), 4);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 25,
            ..TrainConfig::default()
        };
        let (best, _) = train(&p0, &ds, &val, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        save_model(&best, &path).unwrap();
        let re = load_model(&path).unwrap();
        assert_eq!(
            validate(&best, &val).unwrap().rmse,
            validate(&re, &val).unwrap().rmse
        );
    }
}
