mod common;

use bathy_core::rng::substream;
use bathy_core::tv::{select_lambda, smoothed_total_variation, total_variation, TvProblem};
use bathy_core::{tv_map, tv_objective, Field, GridSpec, ObservationModel, TvConfig};
use common::*;
use nalgebra::{DMatrix, DVector};

fn wls(model: &ObservationModel, y: &DVector<f64>) -> DVector<f64> {
    let h = model.h();
    let w = DMatrix::from_diagonal(&model.noise_variances().map(|v| 1.0 / v));
    (h.transpose() * &w * h).lu().solve(&(h.transpose() * &w * y)).unwrap()
}

fn overdetermined(seed: u64) -> (ObservationModel, DVector<f64>) {
    let grid = GridSpec::new(4, 4, 1.0, 1.0).unwrap();
    let mut rng = substream(seed, "tv-instance", 0);
    let h = random_matrix(&mut rng, 24, 16);
    let r = DVector::from_fn(24, |k, _| if k % 2 == 0 { 0.01 } else { 0.05 });
    let y = DVector::from_fn(24, |_, _| normal(&mut rng));
    (ObservationModel::from_matrix(grid, h, r, 0).unwrap(), y)
}

#[test]
fn gradient_vanishes_at_weighted_least_squares_solution() {
    let (model, y) = overdetermined(1);
    let x = Field::new(*model.grid(), wls(&model, &y)).unwrap();
    let cfg = TvConfig {
        lambda: 0.0,
        ..TvConfig::default()
    };
    let (_, g) = tv_objective(&x, &y, &model, &cfg).unwrap();
    assert!(g.norm() < 1e-8, "{}", g.norm());
}

#[test]
fn gradient_matches_finite_differences() {
    let (model, y) = overdetermined(2);
    let cfg = TvConfig {
        lambda: 0.8,
        eps: 0.1,
        ..TvConfig::default()
    };
    let problem = TvProblem::new(&y, &model, &cfg).unwrap();
    let mut rng = substream(2, "tv-x", 0);
    let x = DVector::from_fn(16, |_, _| normal(&mut rng));
    let (_, g) = problem.value_and_gradient(&x).unwrap();
    let h = 1e-6;
    for k in 0..16 {
        let mut xp = x.clone();
        xp[k] += h;
        let mut xm = x.clone();
        xm[k] -= h;
        let fd = (problem.value_and_gradient(&xp).unwrap().0 - problem.value_and_gradient(&xm).unwrap().0) / (2.0 * h);
        let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-6, "component {k}: {} vs {fd}", g[k]);
    }
}

#[test]
fn zero_lambda_solution_is_weighted_least_squares() {
    let (model, y) = overdetermined(3);
    let cfg = TvConfig {
        lambda: 0.0,
        grad_tol: 1e-9,
        ..TvConfig::default()
    };
    let (x, report) = tv_map(&y, &model, &cfg, &Field::zeros(*model.grid())).unwrap();
    assert!(
        report.converged,
        "{:?}",
        (report.iterations, report.grad_norm, report.stalled, report.objective)
    );
    let oracle = wls(&model, &y);
    let rms = ((x.values() - &oracle).norm_squared() / 16.0).sqrt();
    assert!(rms < 1e-6, "{rms}");
    for w in report.history.windows(2) {
        assert!(w[1].objective <= w[0].objective);
    }
}

#[test]
fn piecewise_constant_profile_is_recovered() {
    let grid = GridSpec::new(2, 40, 1.0, 1.0).unwrap();
    let truth = Field::from_fn(grid, |c| if c.j < 20 { 0.0 } else { 2.0 }).unwrap();
    let model =
        ObservationModel::from_matrix(grid, DMatrix::identity(80, 80), DVector::from_element(80, 0.01), 80).unwrap();
    let y = model.observe(&truth, Some(4)).unwrap();
    let cfg = TvConfig {
        lambda: 1.0,
        eps: 1e-3,
        ..TvConfig::default()
    };
    let (x, report) = tv_map(&y, &model, &cfg, &Field::zeros(grid)).unwrap();
    assert!(report.converged || report.stalled, "{:?}", report.grad_norm);
    let away: Vec<usize> = grid
        .coords()
        .enumerate()
        .filter(|(_, c)| c.j != 19 && c.j != 20)
        .map(|(k, _)| k)
        .collect();
    let err = (away
        .iter()
        .map(|&k| (x.values()[k] - truth.values()[k]).powi(2))
        .sum::<f64>()
        / away.len() as f64)
        .sqrt();
    assert!(err < 0.1, "rms {err}");
    // The plain noisy data is worse than the regularized estimate.
    let raw = (away.iter().map(|&k| (y[k] - truth.values()[k]).powi(2)).sum::<f64>() / away.len() as f64).sqrt();
    assert!(err < raw);
}

#[test]
fn starting_at_the_truth_stays_put() {
    let (model, _) = overdetermined(5);
    let truth = Field::from_fn(*model.grid(), |c| if c.i < 2 { 1.0 } else { -1.0 }).unwrap();
    let y = model.apply(truth.values()).unwrap();
    let zero = TvConfig {
        lambda: 0.0,
        ..TvConfig::default()
    };
    let (x, report) = tv_map(&y, &model, &zero, &truth).unwrap();
    assert_eq!(report.iterations, 0);
    assert_eq!(x, truth);

    let small = TvConfig {
        lambda: 0.01,
        eps: 0.01,
        ..TvConfig::default()
    };
    let start = tv_objective(&truth, &y, &model, &small).unwrap().0;
    let (_, report) = tv_map(&y, &model, &small, &truth).unwrap();
    assert!(report.objective <= start);
    assert!(report.converged);
}

#[test]
fn smoothing_converges_monotonically_to_exact_tv() {
    let grid = GridSpec::new(5, 6, 1.0, 1.0).unwrap();
    let mut rng = substream(6, "tv-field", 0);
    let f = Field::new(grid, DVector::from_fn(30, |_, _| normal(&mut rng))).unwrap();
    let exact = total_variation(&f);
    let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&e| smoothed_total_variation(&f, e) - exact)
        .collect();
    assert!(gaps.iter().all(|g| *g >= 0.0));
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    assert!(gaps[2] < 1e-3 * 49.0);
}

#[test]
fn zero_lambda_solution_is_shift_equivariant() {
    // Rows summing to one map a constant field to the same constant.
    let grid = GridSpec::new(4, 4, 1.0, 1.0).unwrap();
    let mut h = DMatrix::identity(18, 16);
    for c in 0..4 {
        h[(16, c)] = 0.25;
        h[(17, 12 + c)] = 0.25;
    }
    let model = ObservationModel::from_matrix(grid, h, DVector::from_element(18, 0.01), 16).unwrap();
    let mut rng = substream(7, "shift", 0);
    let y = DVector::from_fn(18, |_, _| normal(&mut rng));
    let cfg = TvConfig {
        lambda: 0.0,
        grad_tol: 1e-10,
        ..TvConfig::default()
    };
    let init = Field::zeros(grid);
    let (a, _) = tv_map(&y, &model, &cfg, &init).unwrap();
    let c = 3.5;
    let (b, _) = tv_map(&y.add_scalar(c), &model, &cfg, &Field::constant(grid, c)).unwrap();
    assert!((b.values() - a.values().add_scalar(c)).amax() < 1e-9);
}

#[test]
fn lambda_selection_prefers_regularization_on_blocky_truth() {
    let grid = GridSpec::new(2, 30, 1.0, 1.0).unwrap();
    let truth = Field::from_fn(grid, |c| if c.j < 15 { 0.0 } else { 2.0 }).unwrap();
    let model =
        ObservationModel::from_matrix(grid, DMatrix::identity(60, 60), DVector::from_element(60, 0.04), 60).unwrap();
    let y = model.observe(&truth, Some(8)).unwrap();
    let cfg = TvConfig::default();
    let lambda = select_lambda(&y, &model, &cfg, &Field::zeros(grid), &[0.0, 1.0, 5.0], 4).unwrap();
    assert!(lambda > 0.0);
    assert!(select_lambda(&y, &model, &cfg, &Field::zeros(grid), &[], 4).is_err());
}

#[test]
fn invalid_configs_rejected() {
    let (model, y) = overdetermined(9);
    let x = Field::zeros(*model.grid());
    for cfg in [
        TvConfig {
            lambda: -1.0,
            ..TvConfig::default()
        },
        TvConfig {
            eps: 0.0,
            ..TvConfig::default()
        },
        TvConfig {
            max_iters: 0,
            ..TvConfig::default()
        },
    ] {
        assert!(tv_objective(&x, &y, &model, &cfg).is_err());
    }
}

#[test]
fn objective_change_matches_direct_difference() {
    let (model, y) = overdetermined(10);
    let cfg = TvConfig {
        lambda: 0.5,
        eps: 0.05,
        ..TvConfig::default()
    };
    let problem = TvProblem::new(&y, &model, &cfg).unwrap();
    let mut rng = substream(10, "change", 0);
    let x = DVector::from_fn(16, |_, _| normal(&mut rng));
    let d = DVector::from_fn(16, |_, _| 0.3 * normal(&mut rng));
    let direct = problem.value_and_gradient(&(&x + &d)).unwrap().0 - problem.value_and_gradient(&x).unwrap().0;
    let change = problem.change(&x, &d).unwrap();
    assert!((direct - change).abs() < 1e-10 * direct.abs().max(1.0));
}
