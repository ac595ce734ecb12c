//! Behavior of the shipped multi-machine swing model end to end: parameter
//! loading, equilibrium self-consistency, conservation on the frictionless
//! toy pair, and classification in the sampling region.

use rayon::prelude::*;
use zubov::dynsys::{
    refine_equilibrium, sample_one, sample_uniform, swing_field, swing_region, SwingParams,
    SystemModel, WKind,
};
use zubov::odeint::{integrate_chunk, AugmentedState, SolverConfig};
use zubov::zubov::{compute_i, write_ivalue_table, IValueKind, IValueOutcome, ZubovConfig};

fn shipped_params() -> SwingParams {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/new_england_39bus.params");
    SwingParams::from_file(path).expect("shipped parameter file parses")
}

#[test]
fn shipped_equilibrium_is_self_consistent() {
    let params = shipped_params();
    let sys = SystemModel::swing(params.clone());
    let guess = params.equilibrium_guess();
    let f = swing_field(&params, &guess).unwrap();
    let res = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res <= 1e-8, "residual at shipped angles: {res:.3e}");

    let xe = refine_equilibrium(&sys, &guess).unwrap();
    let f = swing_field(&params, &xe).unwrap();
    let res = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res <= 1e-10, "refined residual: {res:.3e}");

    // The shipped angles already balance, so refinement stays put.
    for (a, b) in xe.iter().zip(&guess) {
        assert!((a - b).abs() < 1e-6, "refinement drifted: {a} vs {b}");
    }
}

#[test]
fn equilibrium_hint_satisfies_model_invariant() {
    let params = shipped_params();
    let sys = SystemModel::swing(params);
    let hint = sys.equilibrium_hint().expect("swing model carries a hint");
    let f = sys.field_at(hint).unwrap();
    let res = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res <= 1e-8);
}

#[test]
fn frictionless_pair_conserves_energy() {
    // m = 2, D = 0, G = 0: kinetic sum H_i (w_i - w0)^2 / w0 plus the
    // coupling potential is a first integral; short windows must hold it to
    // solver tolerance.
    let params = SwingParams::new(
        2,
        vec![1.0, 1.0],
        0.0,
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0; 4],
        vec![0.0, 1.0, 1.0, 0.0],
        60.0,
        None,
    )
    .unwrap();
    let w0 = params.omega0;
    let energy = |x: &[f64]| -> f64 {
        let kinetic: f64 = (0..2)
            .map(|i| params.h[i] * (x[2 * i] - w0) * (x[2 * i] - w0) / w0)
            .sum();
        kinetic - (x[1] - x[3]).cos()
    };
    let sys = SystemModel::swing(params.clone());
    let w = WKind::FieldNormScaled { scale: 1000.0 };
    let x0 = vec![w0 + 0.5, 0.9, w0 - 0.2, -0.4];
    let e0 = energy(&x0);
    let mut state = AugmentedState::new(x0);
    let cfg = SolverConfig {
        rel_tol: 1e-9,
        abs_tol: 1e-12,
        ..SolverConfig::default()
    };
    let mut t = 0.0;
    for _ in 0..5 {
        let chunk = integrate_chunk(&sys, &w, &state, t, 1.0, &cfg).unwrap();
        t = chunk.end_time();
        state = chunk.end_state().clone();
        let drift = (energy(&state.x) - e0).abs() / e0.abs().max(1.0);
        assert!(drift < 1e-7, "energy drift {drift:.3e} at t = {t}");
    }
}

#[test]
fn sampling_region_classifies_with_mixed_outcomes() {
    let params = shipped_params();
    let sys = SystemModel::swing(params.clone());
    let w = WKind::FieldNormScaled { scale: 1000.0 };
    let region = swing_region(&params, &params.equilibrium_guess()).unwrap();
    let cfg = ZubovConfig::with_threshold(250.0);

    // The equilibrium itself converges with an (almost) zero integral.
    let out = compute_i(&sys, &w, &params.equilibrium_guess(), &cfg).unwrap();
    match out.kind {
        IValueKind::Converged { i_value } => assert!(i_value < 1e-9, "I = {i_value:.3e}"),
        other => panic!("equilibrium must converge, got {other:?}"),
    }

    // A mild perturbation converges with a positive integral.
    let mut x = params.equilibrium_guess();
    x[0] += 0.5;
    x[3] -= 0.1;
    let out = compute_i(&sys, &w, &x, &cfg).unwrap();
    let i = out.i_value().expect("perturbation stays attracted");
    assert!(i > 0.0 && i < 250.0);

    // Across the region, samples classify without errors and the integrals
    // stay well below the threshold for attracted states.
    let samples = sample_uniform(&region, 12, 2024);
    let mut converged = 0;
    for x0 in &samples {
        let out = compute_i(&sys, &w, x0, &cfg).unwrap();
        if let IValueKind::Converged { i_value } = out.kind {
            converged += 1;
            assert!(i_value <= 250.0);
        }
    }
    assert!(converged >= 8, "only {converged}/12 converged");
}

#[test]
fn dataset_labels_cover_the_unit_interval() {
    // Boundary concentration plus quantile augmentation: the top label bin
    // dominates and every bin from 0.1 to 0.9 is populated.
    use zubov::datagen::{generate_dataset, label_histogram};
    let params = shipped_params();
    let sys = SystemModel::swing(params.clone());
    let w = WKind::FieldNormScaled { scale: 1000.0 };
    let region = swing_region(&params, &params.equilibrium_guess()).unwrap();
    let cfg = ZubovConfig::with_threshold(50.0);
    let d = generate_dataset(&sys, &w, &cfg, &region, 800, 4, 11).unwrap();
    let hist = label_histogram(&d, 10);
    let top = hist.last().unwrap().2;
    assert!(
        top * 4 >= d.len(),
        "top bin holds {top} of {} points",
        d.len()
    );
    for (lo, hi, count) in &hist[1..9] {
        assert!(*count > 0, "empty label bin [{lo}, {hi})");
    }
}

#[test]
fn ivalue_table_holds_converged_and_censored_rows() {
    // A 500-sample scan of the standard region produces a mixed table: the
    // region straddles the attraction boundary.
    let params = shipped_params();
    let sys = SystemModel::swing(params.clone());
    let w = WKind::FieldNormScaled { scale: 1000.0 };
    let region = swing_region(&params, &params.equilibrium_guess()).unwrap();
    let cfg = ZubovConfig::with_threshold(1000.0);
    let outcomes: Vec<IValueOutcome> = (0..500u64)
        .into_par_iter()
        .map(|i| compute_i(&sys, &w, &sample_one(&region, 7, i), &cfg).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("swing-ivalues.csv");
    write_ivalue_table(&path, &outcomes, cfg.m_threshold).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let n_converged = text.lines().filter(|l| l.ends_with(",0")).count();
    let n_censored = text.lines().filter(|l| !l.ends_with(",0")).count() - 1; // header
    assert!(n_converged > 0, "no converged rows");
    assert!(n_censored > 0, "no censored rows");
    assert_eq!(n_converged + n_censored, 500);
}
