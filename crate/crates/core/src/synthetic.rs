//! Synthetic surveys and training pairs.
//!
//! Training targets are base surveys perturbed by a correlated Gaussian
//! field, optionally with a rectangular jump; inputs are noisy measurements
//! of the targets.

use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::covariance::{GaussianFieldSampler, KernelSpec};
use crate::error::{check_dim, Error, Result};
use crate::grid::{Field, GridCoord, GridSpec};
use crate::observation::ObservationModel;
use crate::rng::substream;

/// Height (m) added inside a synthetic jump.
pub const JUMP_HEIGHT: f64 = 12.0;
/// Jump extent as a fraction of the domain width and length.
pub const JUMP_FRACTION: f64 = 0.44;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSpec {
    pub height: f64,
    pub frac_w: f64,
    pub frac_l: f64,
    /// Top-left (smallest-index) corner.
    pub corner: GridCoord,
}

impl JumpSpec {
    pub fn new(height: f64, frac_w: f64, frac_l: f64, corner: GridCoord) -> Result<Self> {
        let ok = |f: f64| f > 0.0 && f <= 1.0;
        if !(ok(frac_w) && ok(frac_l)) || !height.is_finite() {
            return Err(Error::validation(
                "jump",
                format!("fractions must lie in (0, 1], got {frac_w} x {frac_l}"),
            ));
        }
        Ok(Self {
            height,
            frac_w,
            frac_l,
            corner,
        })
    }

    /// The standard +12 m, 0.44 W x 0.44 L jump at `corner`.
    pub fn standard(corner: GridCoord) -> Self {
        Self {
            height: JUMP_HEIGHT,
            frac_w: JUMP_FRACTION,
            frac_l: JUMP_FRACTION,
            corner,
        }
    }

    /// Standard jump with its corner drawn uniformly over the grid points.
    pub fn random<R: Rng + ?Sized>(grid: &GridSpec, rng: &mut R) -> Self {
        let i = rng.random_range(0..grid.rows());
        let j = rng.random_range(0..grid.cols());
        Self::standard(GridCoord::new(i, j))
    }

    /// Grid points whose physical position lies in
    /// `[corner, corner + (frac_w W, frac_l L))`, clipped to the grid.
    pub fn contains(&self, grid: &GridSpec, c: GridCoord) -> bool {
        let di = c.i as f64 - self.corner.i as f64;
        let dj = c.j as f64 - self.corner.j as f64;
        di >= 0.0
            && dj >= 0.0
            && di < self.frac_w * (grid.rows() - 1) as f64
            && dj < self.frac_l * (grid.cols() - 1) as f64
    }

    /// Center of the unclipped rectangle, rounded and clipped to the grid.
    pub fn center(&self, grid: &GridSpec) -> GridCoord {
        let ci = self.corner.i as f64 + 0.5 * self.frac_w * (grid.rows() - 1) as f64;
        let cj = self.corner.j as f64 + 0.5 * self.frac_l * (grid.cols() - 1) as f64;
        GridCoord::new(
            (ci.round() as usize).min(grid.rows() - 1),
            (cj.round() as usize).min(grid.cols() - 1),
        )
    }
}

pub fn add_jump(field: &Field, jump: &JumpSpec) -> Result<Field> {
    let grid = *field.grid();
    grid.check(jump.corner)?;
    let mut values = field.values().clone();
    for (k, c) in grid.coords().enumerate() {
        if jump.contains(&grid, c) {
            values[k] += jump.height;
        }
    }
    Field::new(grid, values)
}

/// Smooth synthetic base profile: planar beach slope plus low-frequency
/// sinusoidal bars with an along-shore meander. Elevation in meters,
/// decreasing offshore.
pub fn base_survey<R: Rng + ?Sized>(grid: &GridSpec, rng: &mut R) -> Field {
    let shore = rng.random_range(0.5..1.5);
    let drop = rng.random_range(6.0..9.0);
    let bar_amp = rng.random_range(0.3..0.9);
    let bar_waves = rng.random_range(1.0..2.5);
    let bar_phase = rng.random_range(0.0..2.0 * PI);
    let meander_amp = rng.random_range(0.0..0.08);
    let meander_waves = rng.random_range(0.5..1.5);
    let meander_phase = rng.random_range(0.0..2.0 * PI);
    let rows = (grid.rows() - 1) as f64;
    let cols = (grid.cols() - 1) as f64;
    let values = grid.coords().map(|c| {
        let u = c.i as f64 / rows;
        let v = c.j as f64 / cols;
        let shift = meander_amp * (2.0 * PI * meander_waves * v + meander_phase).sin();
        shore - drop * u + bar_amp * (2.0 * PI * bar_waves * (u + shift) + bar_phase).sin()
    });
    Field::new(*grid, DVector::from_iterator(grid.len(), values)).expect("base survey values are finite")
}

/// `count` base surveys, survey `k` drawn from its own substream.
pub fn make_base_surveys(grid: &GridSpec, count: usize, seed: u64) -> Vec<Field> {
    (0..count)
        .map(|k| base_survey(grid, &mut substream(seed, "base-survey", k as u64)))
        .collect()
}

/// Point-wise average of surveys on a common grid.
pub fn mean_field(surveys: &[Field]) -> Result<Field> {
    let first = surveys
        .first()
        .ok_or_else(|| Error::validation("surveys", "need at least one survey"))?;
    let mut sum = DVector::zeros(first.grid().len());
    for s in surveys {
        first.check_same_grid(s)?;
        sum += s.values();
    }
    Field::new(*first.grid(), sum / surveys.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMeta {
    pub survey: usize,
    pub jump: Option<GridCoord>,
}

/// Training pairs stored column-wise: `inputs` is `m x N`, `targets` `n x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset {
    pub grid: GridSpec,
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub meta: Vec<PairMeta>,
    pub seed: u64,
}

impl TrainingDataset {
    pub fn new(
        grid: GridSpec,
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        meta: Vec<PairMeta>,
        seed: u64,
    ) -> Result<Self> {
        check_dim("dataset targets", grid.len(), targets.nrows())?;
        check_dim("dataset pairs", inputs.ncols(), targets.ncols())?;
        check_dim("dataset metadata", inputs.ncols(), meta.len())?;
        Ok(Self {
            grid,
            inputs,
            targets,
            meta,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn jumped(&self) -> usize {
        self.meta.iter().filter(|m| m.jump.is_some()).count()
    }

    pub fn target_field(&self, k: usize) -> Field {
        Field::new(self.grid, self.targets.column(k).into_owned()).expect("stored targets are finite")
    }

    /// First `k` pairs.
    pub fn head(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            grid: self.grid,
            inputs: self.inputs.columns(0, k).into_owned(),
            targets: self.targets.columns(0, k).into_owned(),
            meta: self.meta[..k].to_vec(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub per_survey: usize,
    pub jump_fraction: f64,
    pub kernel: KernelSpec,
    pub seed: u64,
}

/// Number of jumped samples per survey.
pub fn jumps_per_survey(per_survey: usize, jump_fraction: f64) -> usize {
    ((jump_fraction * per_survey as f64).round() as usize).min(per_survey)
}

/// One pair: perturb `base`, maybe add a jump, observe with noise. Draws come
/// from the pair's own substream in the order perturbation, jump corner,
/// measurement noise.
pub fn generate_pair(
    base: &Field,
    jumped: bool,
    sampler: &GaussianFieldSampler,
    model: &ObservationModel,
    seed: u64,
    index: u64,
) -> Result<(DVector<f64>, Field, Option<GridCoord>)> {
    let mut rng = substream(seed, "dataset-pair", index);
    let mut field = sampler.sample(base, &mut rng)?;
    let mut corner = None;
    if jumped {
        let jump = JumpSpec::random(base.grid(), &mut rng);
        field = add_jump(&field, &jump)?;
        corner = Some(jump.corner);
    }
    let y = model.observe_with(&field, Some(&mut rng))?;
    Ok((y, field, corner))
}

pub fn generate_dataset(surveys: &[Field], model: &ObservationModel, spec: &DatasetSpec) -> Result<TrainingDataset> {
    let first = surveys
        .first()
        .ok_or_else(|| Error::validation("dataset", "need at least one survey"))?;
    if !(0.0..=1.0).contains(&spec.jump_fraction) {
        return Err(Error::validation(
            "dataset",
            format!("jump fraction {} outside [0, 1]", spec.jump_fraction),
        ));
    }
    let grid = *first.grid();
    for s in surveys {
        first.check_same_grid(s)?;
    }
    if model.grid() != &grid {
        return Err(Error::validation(
            "dataset",
            "observation model grid differs from surveys",
        ));
    }
    let sampler = GaussianFieldSampler::new(&spec.kernel, &grid)?;
    let jumped_each = jumps_per_survey(spec.per_survey, spec.jump_fraction);
    let total = surveys.len() * spec.per_survey;

    let pairs: Vec<_> = (0..total)
        .into_par_iter()
        .map(|p| {
            let survey = p / spec.per_survey;
            let k = p % spec.per_survey;
            let (y, x, corner) =
                generate_pair(&surveys[survey], k < jumped_each, &sampler, model, spec.seed, p as u64)?;
            Ok((y, x.into_values(), PairMeta { survey, jump: corner }))
        })
        .collect::<Result<_>>()?;

    let mut inputs = DMatrix::zeros(model.m(), total);
    let mut targets = DMatrix::zeros(grid.len(), total);
    let mut meta = Vec::with_capacity(total);
    for (p, (y, x, m)) in pairs.into_iter().enumerate() {
        inputs.set_column(p, &y);
        targets.set_column(p, &x);
        meta.push(m);
    }
    TrainingDataset::new(grid, inputs, targets, meta, spec.seed)
}

const DATASET_MAGIC: &[u8; 8] = b"BATHYDS1";

/// Packed little-endian dataset: magic, counts and grid header, then per-pair
/// metadata, inputs and targets (column by column) as `f64`.
pub fn write_dataset_binary(ds: &TrainingDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    for v in [
        ds.len() as u64,
        ds.input_dim() as u64,
        ds.grid.len() as u64,
        ds.grid.rows() as u64,
        ds.grid.cols() as u64,
        ds.seed,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ds.grid.width().to_le_bytes())?;
    w.write_all(&ds.grid.length().to_le_bytes())?;
    for m in &ds.meta {
        w.write_all(&(m.survey as u64).to_le_bytes())?;
        let (flag, i, j) = match m.jump {
            Some(c) => (1u64, c.i as u64, c.j as u64),
            None => (0, 0, 0),
        };
        for v in [flag, i, j] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in ds.inputs.iter().chain(ds.targets.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_binary(path: &Path) -> Result<TrainingDataset> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::parse(path, 0, "not a packed dataset file"));
    }
    let mut u = || -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let count = u()? as usize;
    let m = u()? as usize;
    let n = u()? as usize;
    let rows = u()? as usize;
    let cols = u()? as usize;
    let seed = u()?;
    let width = f64::from_bits(u()?);
    let length = f64::from_bits(u()?);
    let grid = GridSpec::new(rows, cols, width, length)?;
    check_dim("packed dataset grid", grid.len(), n)?;
    let mut meta = Vec::with_capacity(count);
    for _ in 0..count {
        let survey = u()? as usize;
        let flag = u()?;
        let (i, j) = (u()? as usize, u()? as usize);
        meta.push(PairMeta {
            survey,
            jump: (flag == 1).then_some(GridCoord::new(i, j)),
        });
    }
    let mut read_block = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    };
    let inputs = DMatrix::from_vec(m, count, read_block(m * count)?);
    let targets = DMatrix::from_vec(n, count, read_block(n * count)?);
    TrainingDataset::new(grid, inputs, targets, meta, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(10, 14, 100.0, 300.0).unwrap()
    }

    #[test]
    fn jump_at_origin_adds_height() {
        let g = grid();
        let f = add_jump(&Field::zeros(g), &JumpSpec::standard(GridCoord::new(0, 0))).unwrap();
        for c in g.coords() {
            let inside = (c.i as f64) < 0.44 * 9.0 && (c.j as f64) < 0.44 * 13.0;
            assert_eq!(f.get(c).unwrap(), if inside { 12.0 } else { 0.0 });
        }
        // 0.44 * 9 = 3.96 -> rows 0..=3; 0.44 * 13 = 5.72 -> cols 0..=5.
        assert_eq!(f.values().iter().filter(|&&v| v == 12.0).count(), 4 * 6);
    }

    #[test]
    fn zero_height_is_identity() {
        let g = grid();
        let base = Field::from_fn(g, |c| c.i as f64 - 0.5 * c.j as f64).unwrap();
        let jump = JumpSpec::new(0.0, 0.44, 0.44, GridCoord::new(3, 4)).unwrap();
        assert_eq!(add_jump(&base, &jump).unwrap(), base);
    }

    #[test]
    fn far_corner_is_clipped() {
        let g = grid();
        let corner = GridCoord::new(8, 12);
        let f = add_jump(&Field::zeros(g), &JumpSpec::standard(corner)).unwrap();
        let mut expected = Vec::new();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                if i >= 8 && j >= 12 {
                    expected.push(g.flatten(GridCoord::new(i, j)).unwrap());
                }
            }
        }
        let got: Vec<usize> = (0..g.len()).filter(|&k| f.values()[k] != 0.0).collect();
        assert_eq!(got, expected);
        assert!(f.values().iter().all(|&v| v == 0.0 || v == 12.0));
    }

    #[test]
    fn invalid_jump_rejected() {
        assert!(JumpSpec::new(12.0, 0.0, 0.5, GridCoord::new(0, 0)).is_err());
        assert!(JumpSpec::new(12.0, 0.5, 1.5, GridCoord::new(0, 0)).is_err());
        let out = JumpSpec::standard(GridCoord::new(10, 0));
        assert!(add_jump(&Field::zeros(grid()), &out).is_err());
    }

    #[test]
    fn base_surveys_are_smooth_and_reproducible() {
        let g = grid();
        let a = make_base_surveys(&g, 3, 5);
        assert_eq!(a, make_base_surveys(&g, 3, 5));
        assert_ne!(a[0], a[1]);
        // Offshore is deeper than the shoreline.
        let shore = a[0].get(GridCoord::new(0, 0)).unwrap();
        let off = a[0].get(GridCoord::new(9, 0)).unwrap();
        assert!(off < shore);
    }

    #[test]
    fn jump_counts() {
        assert_eq!(239 * jumps_per_survey(400, 0.5), 47_800);
        assert_eq!(jumps_per_survey(4, 0.0), 0);
        assert_eq!(jumps_per_survey(4, 1.0), 4);
    }

    #[test]
    fn dataset_shapes_and_determinism() {
        let g = grid();
        let surveys = make_base_surveys(&g, 2, 1);
        let model = ObservationModel::default_for(g).unwrap();
        let spec = DatasetSpec {
            per_survey: 10,
            jump_fraction: 0.5,
            kernel: KernelSpec::perturbation(),
            seed: 99,
        };
        let ds = generate_dataset(&surveys, &model, &spec).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.jumped(), 10);
        assert_eq!(ds.input_dim(), 59);
        assert_eq!(generate_dataset(&surveys, &model, &spec).unwrap(), ds);

        let none = generate_dataset(
            &surveys[..1],
            &model,
            &DatasetSpec {
                per_survey: 4,
                jump_fraction: 0.0,
                ..spec
            },
        )
        .unwrap();
        assert_eq!((none.len(), none.jumped()), (4, 0));
        assert!(generate_dataset(&[], &model, &spec).is_err());
        assert!(generate_dataset(
            &surveys,
            &model,
            &DatasetSpec {
                jump_fraction: 1.5,
                ..spec
            }
        )
        .is_err());
    }

    #[test]
    fn packed_dataset_roundtrip() {
        let g = grid();
        let surveys = make_base_surveys(&g, 1, 2);
        let model = ObservationModel::default_for(g).unwrap();
        let spec = DatasetSpec {
            per_survey: 3,
            jump_fraction: 0.34,
            kernel: KernelSpec::perturbation(),
            seed: 5,
        };
        let ds = generate_dataset(&surveys, &model, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        write_dataset_binary(&ds, &path).unwrap();
        assert_eq!(read_dataset_binary(&path).unwrap(), ds);
    }
}
