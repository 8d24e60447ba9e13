mod common;

use std::sync::Arc;

use bathy_core::evaluation::{
    coverage_batch, coverage_gaussian, extract_section, extract_section_batch, extract_section_gaussian, run_benchmark,
    std_map_batch, std_map_gaussian, SharedEstimator,
};
use bathy_core::kriging::sample_posterior_cholesky;
use bathy_core::realization::normal_quantile;
use bathy_core::rng::substream;
use bathy_core::synthetic::{generate_pair, make_base_surveys, mean_field};
use bathy_core::{
    build_covariance, rmse, Axis, BenchmarkConfig, ConstantMean, Field, GaussianFieldSampler, GaussianPrior, GridSpec,
    JumpSpec, KernelSpec, Kriging, Method, NoiseScaling, ObservationModel, RealizationBatch, TestSurvey, TvConfig,
};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn rmse_examples() {
    let g = GridSpec::new(2, 2, 1.0, 1.0).unwrap();
    let a = Field::from_vec(g, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
    let z = Field::zeros(g);
    assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    assert_eq!(rmse(&Field::constant(g, 1.0), &z).unwrap(), 1.0);
    assert!((rmse(&a, &z).unwrap() - 2.5).abs() < 1e-15);
    // The two-point profile [3, 4] vs [0, 0], repeated on both rows.
    let b = Field::from_vec(g, vec![3.0, 4.0, 3.0, 4.0]).unwrap();
    assert!((rmse(&b, &z).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
    let other = Field::zeros(GridSpec::new(2, 3, 1.0, 1.0).unwrap());
    assert!(rmse(&other, &z).is_err());
}

proptest! {
    #[test]
    fn rmse_is_a_metric(a in proptest::collection::vec(-10.0f64..10.0, 6),
                        b in proptest::collection::vec(-10.0f64..10.0, 6),
                        c in proptest::collection::vec(-10.0f64..10.0, 6)) {
        let g = GridSpec::new(2, 3, 1.0, 1.0).unwrap();
        let (a, b, c) = (Field::from_vec(g, a).unwrap(), Field::from_vec(g, b).unwrap(), Field::from_vec(g, c).unwrap());
        let ab = rmse(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, rmse(&b, &a).unwrap());
        prop_assert!(ab <= rmse(&a, &c).unwrap() + rmse(&c, &b).unwrap() + 1e-12);
    }
}

#[test]
fn section_examples() {
    let g = GridSpec::new(3, 4, 2.0, 3.0).unwrap();
    let idx = Field::from_fn(g, |c| (c.i * 4 + c.j) as f64).unwrap();
    let row = extract_section(&idx, Axis::AlongShore, 1).unwrap();
    assert_eq!(row.mean, vec![4.0, 5.0, 6.0, 7.0]);
    assert_eq!(row.position, vec![0.0, 1.0, 2.0, 3.0]);
    let col = extract_section(&idx, Axis::AcrossShore, 2).unwrap();
    assert_eq!(col.mean, vec![2.0, 6.0, 10.0]);
    assert_eq!(col.position, vec![0.0, 1.0, 2.0]);
    let flat = extract_section(&Field::constant(g, 3.0), Axis::AcrossShore, 0).unwrap();
    assert!(flat.mean.iter().all(|v| *v == 3.0));
    assert!(extract_section(&idx, Axis::AlongShore, 3).is_err());
    assert!(extract_section(&idx, Axis::AcrossShore, 4).is_err());

    let same = RealizationBatch::new(g, vec![idx.values().clone(); 5]).unwrap();
    let s = extract_section_batch(&same, Axis::AlongShore, 1).unwrap();
    assert_eq!(s.lo, s.hi);
    assert_eq!(s.std.unwrap(), vec![0.0; 4]);
}

#[test]
fn std_maps() {
    let g = GridSpec::new(2, 2, 1.0, 1.0).unwrap();
    let one = RealizationBatch::new(g, vec![DVector::from_element(4, 2.0)]).unwrap();
    assert_eq!(std_map_batch(&one).unwrap(), Field::zeros(g));
    assert!(std_map_batch(&RealizationBatch::empty(g)).is_err());

    // Scalar case embedded in a 2x2 grid: Q = I, observe point 0 with R = 1.
    let prior = GaussianPrior::new(Field::zeros(g), DMatrix::identity(4, 4)).unwrap();
    let mut h = DMatrix::zeros(1, 4);
    h[(0, 0)] = 1.0;
    let model = ObservationModel::from_matrix(g, h, DVector::from_element(1, 1.0), 1).unwrap();
    let post = Kriging::new(&prior, &model, NoiseScaling(0.0))
        .unwrap()
        .posterior(&DVector::from_element(1, 1.0))
        .unwrap();
    assert!((std_map_gaussian(&post).unwrap().values()[0] - 0.5f64.sqrt()).abs() < 1e-15);

    let (prior, model, y) = toy9();
    let post = Kriging::new(&prior, &model, NoiseScaling(0.0))
        .unwrap()
        .posterior(&y)
        .unwrap();
    let batch = sample_posterior_cholesky(&post, 2000, 3).unwrap();
    let mc = std_map_batch(&batch).unwrap();
    let exact = std_map_gaussian(&post).unwrap();
    for k in 0..9 {
        let rel = (mc.values()[k] - exact.values()[k]).abs() / exact.values()[k];
        assert!(rel < 0.1, "point {k}: {rel}");
    }
}

#[test]
fn section_std_is_band_half_width_over_z() {
    let (prior, model, y) = toy9();
    let post = Kriging::new(&prior, &model, NoiseScaling(0.0))
        .unwrap()
        .posterior(&y)
        .unwrap();
    let sd = post.std_dev();
    let s = extract_section_gaussian(&post.mean, &sd, 0.95, Axis::AcrossShore, 1).unwrap();
    let z = normal_quantile(0.95).unwrap();
    let std_section = extract_section(&std_map_gaussian(&post).unwrap(), Axis::AcrossShore, 1).unwrap();
    for k in 0..3 {
        let half = (s.hi.as_ref().unwrap()[k] - s.lo.as_ref().unwrap()[k]) / 2.0;
        assert!((std_section.mean[k] - half / z).abs() < 1e-12);
    }
}

#[test]
fn coverage_examples() {
    let g = GridSpec::new(2, 3, 1.0, 1.0).unwrap();
    let mean = Field::from_fn(g, |c| c.j as f64).unwrap();
    let sd = DVector::from_element(6, 0.5);
    assert_eq!(coverage_gaussian(&mean, &sd, &mean, 0.5).unwrap(), 1.0);
    let far = Field::from_fn(g, |c| c.j as f64 + 10.0).unwrap();
    assert_eq!(coverage_gaussian(&mean, &sd, &far, 0.95).unwrap(), 0.0);
    let batch = RealizationBatch::new(g, vec![mean.values().clone(); 3]).unwrap();
    assert_eq!(coverage_batch(&batch, &mean, 0.9).unwrap(), 1.0);
    assert!(coverage_batch(&batch, &mean, 1.0).is_err());
}

#[test]
fn gaussian_bands_are_calibrated() {
    let (prior, model, y) = toy9();
    let post = Kriging::new(&prior, &model, NoiseScaling(0.0))
        .unwrap()
        .posterior(&y)
        .unwrap();
    let sd = post.std_dev();
    let refs = sample_posterior_cholesky(&post, 500, 77).unwrap();
    let total: f64 = refs
        .realizations()
        .iter()
        .map(|r| coverage_gaussian(&post.mean, &sd, r, 0.95).unwrap())
        .sum();
    let mean = total / 500.0;
    assert!((0.92..=0.98).contains(&mean), "{mean}");
}

struct Bench {
    surveys: Vec<TestSurvey>,
    prior: GaussianPrior,
    model: ObservationModel,
}

fn small_bench(count: usize) -> Bench {
    let g = GridSpec::new(8, 12, 100.0, 150.0).unwrap();
    let model = ObservationModel::default_for(g).unwrap();
    let bases = make_base_surveys(&g, 6, 1);
    let prior = GaussianPrior::new(
        mean_field(&bases).unwrap(),
        build_covariance(&KernelSpec::prior_shape(), &g).unwrap(),
    )
    .unwrap();
    let sampler = GaussianFieldSampler::new(&KernelSpec::perturbation(), &g).unwrap();
    let tests = make_base_surveys(&g, count, 500);
    let surveys = tests
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let (_, truth, corner) = generate_pair(b, k % 2 == 0, &sampler, &model, 3, k as u64).unwrap();
            TestSurvey {
                id: format!("s{k}"),
                truth,
                jump: corner.map(JumpSpec::standard),
            }
        })
        .collect();
    Bench { surveys, prior, model }
}

#[test]
fn single_method_single_survey_table() {
    let b = small_bench(1);
    let rep = run_benchmark(
        &b.surveys,
        &[("kriging".into(), Method::Kriging)],
        &b.prior,
        &b.model,
        &BenchmarkConfig::default(),
    )
    .unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.report_csv().lines().count(), 2);
    assert_eq!(rep.summary_csv().lines().count(), 2);
    let cov = rep.rows[0].coverage.unwrap();
    assert!((0.0..=1.0).contains(&cov));
    assert!(rep.rows[0].rmse >= 0.0);
    assert_eq!(rep.sections.len(), 2);
}

#[test]
fn identical_methods_give_identical_columns_and_reruns_match() {
    let b = small_bench(4);
    let est: SharedEstimator = Arc::new(ConstantMean(b.prior.mean().clone()));
    let methods = vec![
        ("a".to_string(), Method::Dnn(est.clone())),
        ("b".to_string(), Method::Dnn(est.clone())),
        ("hybrid".to_string(), Method::DnnKriging(est)),
        ("kriging".to_string(), Method::Kriging),
        (
            "tv".to_string(),
            Method::Tv(TvConfig {
                eps: 1e-2,
                ..TvConfig::default()
            }),
        ),
    ];
    let cfg = BenchmarkConfig {
        dnn_samples: 20,
        seed: 4,
        ..BenchmarkConfig::default()
    };
    let rep = run_benchmark(&b.surveys, &methods, &b.prior, &b.model, &cfg).unwrap();
    assert_eq!(rep.rmse_column("a"), rep.rmse_column("b"));
    for s in &rep.surveys {
        assert_eq!(rep.row(s, "a").unwrap().coverage, rep.row(s, "b").unwrap().coverage);
        // A constant estimator corrected by Kriging is plain Kriging.
        assert!((rep.row(s, "hybrid").unwrap().rmse - rep.row(s, "kriging").unwrap().rmse).abs() < 1e-12);
        assert!(rep.row(s, "tv").unwrap().coverage.is_none());
    }
    let again = run_benchmark(&b.surveys, &methods, &b.prior, &b.model, &cfg).unwrap();
    assert_eq!(rep.report_csv(), again.report_csv());
    assert_eq!(rep.sections_csv(), again.sections_csv());
    assert!(rep
        .sections_csv()
        .starts_with("survey,method,axis,index,position,mean,lo,hi,reference\n"));
}

#[test]
fn benchmark_rejects_bad_method_lists() {
    let b = small_bench(1);
    let cfg = BenchmarkConfig::default();
    assert!(run_benchmark(&b.surveys, &[], &b.prior, &b.model, &cfg).is_err());
    let dup = vec![("k".to_string(), Method::Kriging), ("k".to_string(), Method::Kriging)];
    assert!(run_benchmark(&b.surveys, &dup, &b.prior, &b.model, &cfg).is_err());
}

#[test]
fn sections_pass_through_jump_center() {
    let b = small_bench(2);
    let s = &b.surveys[0];
    let jump = s.jump.unwrap();
    let c = jump.center(s.truth.grid());
    assert_eq!(s.section_indices(), (c.j, c.i));
    let plain = &b.surveys[1];
    assert!(plain.jump.is_none());
    assert_eq!(plain.section_indices(), (6, 4));
    let _ = substream(0, "unused", 0);
}
