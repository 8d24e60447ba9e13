#![allow(dead_code)]

use bathy_core::rng::substream;
use bathy_core::{Field, GaussianPrior, GridSpec, KernelSpec, ObservationModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// A random dense linear-Gaussian problem.
pub struct Instance {
    pub grid: GridSpec,
    pub prior: GaussianPrior,
    pub model: ObservationModel,
    pub q: DMatrix<f64>,
    pub r: DVector<f64>,
    pub y: DVector<f64>,
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// `A A^T / k + 0.1 I`, comfortably positive definite.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

pub fn random_instance(seed: u64, index: u64, max_n: usize, max_m: usize) -> Instance {
    let mut rng = substream(seed, "test-instance", index);
    let rows = rng.random_range(2..=7usize);
    let cols = rng.random_range(2..=(max_n / rows).clamp(2, 7));
    let grid = GridSpec::new(rows, cols, 1.0, 1.0).unwrap();
    let n = grid.len();
    let m = rng.random_range(1..=max_m);
    let q = random_spd(&mut rng, n);
    let mean = DVector::from_fn(n, |_, _| normal(&mut rng));
    let h = random_matrix(&mut rng, m, n);
    let r = DVector::from_fn(m, |_, _| rng.random_range(0.05..1.0));
    let y = DVector::from_fn(m, |_, _| 3.0 * normal(&mut rng));
    let prior = GaussianPrior::new(Field::new(grid, mean).unwrap(), q.clone()).unwrap();
    let model = ObservationModel::from_matrix(grid, h, r.clone(), 0).unwrap();
    Instance {
        grid,
        prior,
        model,
        q,
        r,
        y,
    }
}

/// Dense inverse by LU, independent of any Cholesky code path.
pub fn inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().lu().try_inverse().expect("invertible")
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// A 3x3 grid (n = 9) with the default prior shape, a smooth mean and four
/// point observations.
pub fn toy9() -> (GaussianPrior, ObservationModel, DVector<f64>) {
    let grid = GridSpec::new(3, 3, 1.0, 1.0).unwrap();
    let q0 = bathy_core::build_covariance(&KernelSpec::prior_shape(), &grid).unwrap();
    let mean = Field::from_fn(grid, |c| 1.0 - 0.5 * c.i as f64 + 0.1 * c.j as f64).unwrap();
    let prior = GaussianPrior::new(mean, q0).unwrap();
    let mut h = DMatrix::zeros(4, 9);
    for (r, c) in [0usize, 2, 4, 7].iter().enumerate() {
        h[(r, *c)] = 1.0;
    }
    let model = ObservationModel::from_matrix(grid, h, DVector::from_element(4, 0.05), 4).unwrap();
    let y = DVector::from_vec(vec![1.3, 1.0, 0.2, -0.4]);
    (prior, model, y)
}

/// Sample mean and unbiased covariance of column-stacked draws.
pub fn moments(draws: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = draws[0].len();
    let k = draws.len() as f64;
    let mean = draws.iter().fold(DVector::zeros(n), |acc, d| acc + d) / k;
    let mut cov = DMatrix::zeros(n, n);
    for d in draws {
        let e = d - &mean;
        cov += &e * e.transpose();
    }
    (mean, cov / (k - 1.0))
}
