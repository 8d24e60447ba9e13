use bathy_core::covariance::sample_gaussian_field;
use bathy_core::synthetic::{generate_dataset, jumps_per_survey, make_base_surveys};
use bathy_core::{DatasetSpec, Field, GaussianFieldSampler, GridSpec, KernelSpec, ObservationModel};

#[test]
fn perturbation_moments_match_kernel() {
    let g = GridSpec::new(10, 10, 1.0, 1.0).unwrap();
    let base = Field::from_fn(g, |c| c.i as f64 - 0.5 * c.j as f64).unwrap();
    let sampler = GaussianFieldSampler::new(&KernelSpec::perturbation(), &g).unwrap();
    let count = 5000;
    let mut sum = vec![0.0; g.len()];
    let mut sum_sq = vec![0.0; g.len()];
    for k in 0..count {
        let mut rng = bathy_core::rng::substream(3, "moments", k);
        let f = sampler.sample(&base, &mut rng).unwrap();
        for (i, (v, b)) in f.values().iter().zip(base.values().iter()).enumerate() {
            let d = v - b;
            sum[i] += d;
            sum_sq[i] += d * d;
        }
    }
    let bound = 3.0 * (0.15f64 / count as f64).sqrt();
    let within = sum.iter().filter(|s| (*s / count as f64).abs() < bound).count();
    assert!(within as f64 >= 0.99 * g.len() as f64, "{within}");
    for (s, q) in sum.iter().zip(&sum_sq) {
        let mean = s / count as f64;
        let var = (q - count as f64 * mean * mean) / (count - 1) as f64;
        assert!((var - 0.15).abs() < 0.015, "{var}");
    }
}

#[test]
fn seeded_field_sampling_is_reproducible() {
    let g = GridSpec::new(6, 7, 1.0, 1.0).unwrap();
    let base = Field::zeros(g);
    let a = sample_gaussian_field(&base, &KernelSpec::perturbation(), 5).unwrap();
    let b = sample_gaussian_field(&base, &KernelSpec::perturbation(), 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_gaussian_field(&base, &KernelSpec::perturbation(), 6).unwrap());
}

#[test]
fn full_size_dataset_counts() {
    assert_eq!(239 * 400, 95_600);
    assert_eq!(239 * jumps_per_survey(400, 0.5), 47_800);
}

#[test]
fn zero_jump_fraction_and_determinism() {
    let g = GridSpec::new(8, 11, 10.0, 10.0).unwrap();
    let model = ObservationModel::default_for(g).unwrap();
    let one = make_base_surveys(&g, 1, 2);
    let spec = DatasetSpec {
        per_survey: 4,
        jump_fraction: 0.0,
        kernel: KernelSpec::perturbation(),
        seed: 1,
    };
    let ds = generate_dataset(&one, &model, &spec).unwrap();
    assert_eq!(ds.len(), 4);
    assert_eq!(ds.jumped(), 0);

    let two = make_base_surveys(&g, 2, 2);
    let spec = DatasetSpec {
        per_survey: 10,
        jump_fraction: 0.5,
        ..spec
    };
    let a = generate_dataset(&two, &model, &spec).unwrap();
    let b = generate_dataset(&two, &model, &spec).unwrap();
    assert_eq!(a.inputs, b.inputs);
    assert_eq!(a.targets, b.targets);
    assert_eq!(a.meta, b.meta);
    assert_eq!(a.jumped(), 10);
}
