//! Domain-of-attraction analysis for systems of ordinary differential equations.
//!
//! The library evaluates the Lyapunov function `V(x) = tanh(alpha * I(x))`,
//! where `I(x)` is the integral of a weight function `W` along the trajectory
//! starting at `x`. `I(x)` is finite exactly on the domain of attraction, so
//! `V(x) < 1` classifies a state as attracted. `V` is computed pointwise by
//! integrating the W-augmented system, which needs no grid and parallelizes
//! perfectly over initial states.
//!
//! What's here:
//!
//! - [`dynsys`]: vector fields (van der Pol, linear contraction, multi-machine
//!   swing equations), weight functions, equilibrium refinement, box sampling.
//! - [`odeint`]: adaptive Dormand-Prince 5(4) integration of the augmented
//!   system in resumable chunks.
//! - [`zubov`]: the chunked evaluation loop with its two termination criteria,
//!   threshold/scale calibration from sampled I-values, and a finite-difference
//!   consistency check of the underlying PDE along trajectories.
//! - [`datagen`]: labeled-dataset generation (with along-trajectory
//!   augmentation) and a plain-text dataset format.
//! - [`mlp`]: a small feedforward tanh network, analytic gradients, Adam
//!   training, and validation statistics, for fast surrogate evaluation of `V`.
//! - [`levelset`]: grid evaluation and marching-squares level-curve extraction
//!   for 2-D systems.
//! - [`cli`]: the `zubov` command-line frontend (`eval`, `ivalue`, `dataset`,
//!   `train`, `validate`, `levelcurves`, `residual-check`).
//!
//! Start with the `examples/` directory; each example exercises one capability
//! end to end.

pub mod cli;
pub mod datagen;
pub mod dynsys;
pub mod levelset;
pub mod mlp;
pub mod odeint;
pub mod zubov;

pub use datagen::{generate_dataset, read_dataset, write_dataset, DataPoint, Dataset};
pub use dynsys::{
    eval_w, refine_equilibrium, sample_uniform, Region, SwingParams, SystemModel, WKind,
};
pub use mlp::{init_params, train, validate, MlpArchitecture, MlpParams, TrainConfig};
pub use odeint::{integrate_chunk, AugmentedState, SolverConfig, TrajectoryChunk};
pub use zubov::{calibrate, compute_i, eval_v, zubov_residual, IValueOutcome, ZubovConfig};
