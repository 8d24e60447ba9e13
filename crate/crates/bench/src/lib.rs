//! Fixtures shared by the benches: the desk-scale grid with its default
//! layout, a prior built from synthetic surveys and one noisy measurement.

use std::sync::Arc;

use bathy_core::kriging::PriorShape;
use bathy_core::synthetic::{make_base_surveys, mean_field};
use bathy_core::{Field, GaussianPrior, GridSpec, KernelSpec, ObservationModel};
use nalgebra::DVector;

pub struct Problem {
    pub grid: GridSpec,
    pub model: ObservationModel,
    pub prior: GaussianPrior,
    pub truth: Field,
    pub y: DVector<f64>,
}

/// `rows x cols` grid over a 500 m x 750 m domain.
pub fn problem(rows: usize, cols: usize) -> Problem {
    let grid = GridSpec::new(rows, cols, 500.0, 750.0).expect("valid grid");
    let model = ObservationModel::default_for(grid).expect("default layout");
    let surveys = make_base_surveys(&grid, 5, 1);
    let shape = Arc::new(PriorShape::from_kernel(&KernelSpec::prior_shape(), &grid).expect("prior shape"));
    let prior = GaussianPrior::with_shape(mean_field(&surveys).expect("surveys"), shape, 0.0).expect("prior");
    let truth = surveys[0].clone();
    let y = model.observe(&truth, Some(3)).expect("measurement");
    Problem {
        grid,
        model,
        prior,
        truth,
        y,
    }
}

pub fn desk() -> Problem {
    problem(26, 38)
}
