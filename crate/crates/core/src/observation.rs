//! Linear multi-scale forward model `y = Hx + v`.
//!
//! Measurement rows come in two groups: point picks first (one-hot rows), then
//! grid-cell averages (rows with `1/|block|` on the block). The noise
//! covariance is diagonal.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::grid::{Field, GridCoord, GridSpec};
use crate::rng::{standard_normals, substream};

/// Noise variance (m²) of point measurements.
pub const POINT_NOISE_VARIANCE: f64 = 0.01;
/// Noise variance (m²) of grid-cell average measurements.
pub const AVERAGE_NOISE_VARIANCE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointStations {
    coords: Vec<GridCoord>,
}

impl PointStations {
    pub fn new(coords: Vec<GridCoord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(coords.len());
        for c in &coords {
            if !seen.insert(*c) {
                return Err(Error::validation(
                    "stations",
                    format!("duplicate station ({}, {})", c.i, c.j),
                ));
            }
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[GridCoord] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Inclusive rectangle of grid indices `[i0, i1] x [j0, j1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBlock {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl CellBlock {
    pub fn new(i0: usize, j0: usize, i1: usize, j1: usize) -> Self {
        Self { i0, j0, i1, j1 }
    }

    pub fn is_empty(&self) -> bool {
        self.i1 < self.i0 || self.j1 < self.j0
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.i1 - self.i0 + 1) * (self.j1 - self.j0 + 1)
        }
    }

    pub fn coords(&self) -> impl Iterator<Item = GridCoord> + '_ {
        (self.i0..=self.i1).flat_map(move |i| (self.j0..=self.j1).map(move |j| GridCoord::new(i, j)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPartition {
    blocks: Vec<CellBlock>,
}

impl CellPartition {
    /// Blocks must be non-empty, pairwise disjoint, and together tile a
    /// rectangle.
    pub fn new(blocks: Vec<CellBlock>) -> Result<Self> {
        if let Some(k) = blocks.iter().position(CellBlock::is_empty) {
            return Err(Error::validation("partition", format!("block {k} is empty")));
        }
        for (a, ba) in blocks.iter().enumerate() {
            for (b, bb) in blocks.iter().enumerate().skip(a + 1) {
                let overlap = ba.i0 <= bb.i1 && bb.i0 <= ba.i1 && ba.j0 <= bb.j1 && bb.j0 <= ba.j1;
                if overlap {
                    return Err(Error::validation("partition", format!("blocks {a} and {b} overlap")));
                }
            }
        }
        if !blocks.is_empty() {
            let hull = CellBlock::new(
                blocks.iter().map(|b| b.i0).min().unwrap_or(0),
                blocks.iter().map(|b| b.j0).min().unwrap_or(0),
                blocks.iter().map(|b| b.i1).max().unwrap_or(0),
                blocks.iter().map(|b| b.j1).max().unwrap_or(0),
            );
            let covered: usize = blocks.iter().map(CellBlock::len).sum();
            if covered != hull.len() {
                return Err(Error::validation("partition", "blocks do not tile a rectangle"));
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[CellBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// One selector row per station, in station order.
pub fn build_point_rows(stations: &PointStations, grid: &GridSpec) -> Result<DMatrix<f64>> {
    let mut rows = DMatrix::zeros(stations.len(), grid.len());
    for (r, c) in stations.coords().iter().enumerate() {
        rows[(r, grid.flatten(*c)?)] = 1.0;
    }
    Ok(rows)
}

/// One averaging row per block, weights `1/|block|` on the block.
pub fn build_average_rows(partition: &CellPartition, grid: &GridSpec) -> Result<DMatrix<f64>> {
    let mut rows = DMatrix::zeros(partition.len(), grid.len());
    for (r, block) in partition.blocks().iter().enumerate() {
        if block.is_empty() {
            return Err(Error::validation("partition", format!("block {r} is empty")));
        }
        let w = 1.0 / block.len() as f64;
        for c in block.coords() {
            rows[(r, grid.flatten(c)?)] = w;
        }
    }
    Ok(rows)
}

/// 35 stations on a 5x7 index lattice with half-spacing margins, and 24 cell
/// averages tiling the largest origin-anchored sub-rectangle divisible into
/// 4x6 equal blocks.
pub fn default_layout(grid: &GridSpec) -> Result<(PointStations, CellPartition)> {
    const STATION_ROWS: usize = 5;
    const STATION_COLS: usize = 7;
    const BLOCK_ROWS: usize = 4;
    const BLOCK_COLS: usize = 6;
    if grid.rows() < 7 || grid.cols() < 10 {
        return Err(Error::validation(
            "layout",
            format!(
                "default layout needs at least a 7x10 grid, got {}x{}",
                grid.rows(),
                grid.cols()
            ),
        ));
    }
    let lattice = |count: usize, extent: usize| -> Vec<usize> {
        (0..count).map(|k| (2 * k + 1) * extent / (2 * count)).collect()
    };
    let si = lattice(STATION_ROWS, grid.rows());
    let sj = lattice(STATION_COLS, grid.cols());
    let stations = PointStations::new(
        si.iter()
            .flat_map(|&i| sj.iter().map(move |&j| GridCoord::new(i, j)))
            .collect(),
    )?;

    let bh = grid.rows() / BLOCK_ROWS;
    let bw = grid.cols() / BLOCK_COLS;
    let mut blocks = Vec::with_capacity(BLOCK_ROWS * BLOCK_COLS);
    for a in 0..BLOCK_ROWS {
        for b in 0..BLOCK_COLS {
            blocks.push(CellBlock::new(a * bh, b * bw, (a + 1) * bh - 1, (b + 1) * bw - 1));
        }
    }
    Ok((stations, CellPartition::new(blocks)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    grid: GridSpec,
    h: DMatrix<f64>,
    noise_var: DVector<f64>,
    n_points: usize,
}

impl ObservationModel {
    /// Forward model for a station/block layout with the default noise
    /// variances.
    pub fn from_layout(grid: GridSpec, stations: &PointStations, partition: &CellPartition) -> Result<Self> {
        Self::from_layout_with_noise(grid, stations, partition, POINT_NOISE_VARIANCE, AVERAGE_NOISE_VARIANCE)
    }

    pub fn from_layout_with_noise(
        grid: GridSpec,
        stations: &PointStations,
        partition: &CellPartition,
        point_var: f64,
        average_var: f64,
    ) -> Result<Self> {
        let hp = build_point_rows(stations, &grid)?;
        let hg = build_average_rows(partition, &grid)?;
        let (mp, mg) = (hp.nrows(), hg.nrows());
        let mut h = DMatrix::zeros(mp + mg, grid.len());
        h.rows_mut(0, mp).copy_from(&hp);
        h.rows_mut(mp, mg).copy_from(&hg);
        let noise_var = DVector::from_iterator(
            mp + mg,
            std::iter::repeat_n(point_var, mp).chain(std::iter::repeat_n(average_var, mg)),
        );
        Self::from_matrix(grid, h, noise_var, mp)
    }

    pub fn default_for(grid: GridSpec) -> Result<Self> {
        let (stations, partition) = default_layout(&grid)?;
        Self::from_layout(grid, &stations, &partition)
    }

    /// Arbitrary linear model; the first `n_points` rows are labelled as point
    /// measurements in the observation file format.
    pub fn from_matrix(grid: GridSpec, h: DMatrix<f64>, noise_var: DVector<f64>, n_points: usize) -> Result<Self> {
        check_dim("forward map columns", grid.len(), h.ncols())?;
        check_dim("noise variances", h.nrows(), noise_var.len())?;
        if n_points > h.nrows() {
            return Err(Error::validation("observation model", "more point rows than rows"));
        }
        if noise_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::validation(
                "observation model",
                "noise variances must be positive",
            ));
        }
        Ok(Self {
            grid,
            h,
            noise_var,
            n_points,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_averages(&self) -> usize {
        self.m() - self.n_points
    }

    /// Diagonal of the base noise covariance `R0`.
    pub fn noise_variances(&self) -> &DVector<f64> {
        &self.noise_var
    }

    /// Diagonal of `10^theta2 * R0`.
    pub fn scaled_noise_variances(&self, theta2: f64) -> DVector<f64> {
        &self.noise_var * 10f64.powf(theta2)
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("forward map input", self.grid.len(), x.len())?;
        Ok(&self.h * x)
    }

    /// `Hx`, plus `v ~ N(0, R0)` drawn from `noise_seed` when given.
    pub fn observe(&self, field: &Field, noise_seed: Option<u64>) -> Result<DVector<f64>> {
        match noise_seed {
            None => self.observe_with(field, None::<&mut crate::rng::StreamRng>),
            Some(seed) => {
                let mut rng = substream(seed, "observation-noise", 0);
                self.observe_with(field, Some(&mut rng))
            }
        }
    }

    pub fn observe_with<R: Rng + ?Sized>(&self, field: &Field, rng: Option<&mut R>) -> Result<DVector<f64>> {
        if field.grid() != &self.grid {
            return Err(Error::validation("field", "grid differs from observation model"));
        }
        let mut y = self.apply(field.values())?;
        if let Some(rng) = rng {
            y += self.draw_noise(rng, 0.0);
        }
        Ok(y)
    }

    /// One draw of `v ~ N(0, 10^theta2 R0)`.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R, theta2: f64) -> DVector<f64> {
        let scale = 10f64.powf(theta2);
        let mut v = standard_normals(rng, self.m());
        v.iter_mut()
            .zip(self.noise_var.iter())
            .for_each(|(e, var)| *e *= (var * scale).sqrt());
        v
    }

    /// `(y - Hx)^T R^-1 (y - Hx)` with `R = 10^theta2 R0`.
    pub fn weighted_misfit(&self, y: &DVector<f64>, x: &DVector<f64>, theta2: f64) -> Result<f64> {
        check_dim("measurement vector", self.m(), y.len())?;
        let r = y - self.apply(x)?;
        let scale = 10f64.powf(theta2);
        Ok(r.iter()
            .zip(self.noise_var.iter())
            .map(|(e, v)| e * e / (v * scale))
            .sum())
    }
}

/// A measurement vector with its per-entry noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub values: DVector<f64>,
    pub variances: DVector<f64>,
    pub n_points: usize,
}

impl Observations {
    pub fn new(model: &ObservationModel, values: DVector<f64>) -> Result<Self> {
        check_dim("measurement vector", model.m(), values.len())?;
        Ok(Self {
            values,
            variances: model.noise_variances().clone(),
            n_points: model.n_points(),
        })
    }

    pub fn n_averages(&self) -> usize {
        self.values.len() - self.n_points
    }

    /// Header `m_p m_g`, then `P|G value variance` per measurement.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n_points, self.n_averages());
        for (k, (v, var)) in self.values.iter().zip(self.variances.iter()).enumerate() {
            let tag = if k < self.n_points { 'P' } else { 'G' };
            let _ = writeln!(out, "{tag} {v} {var}");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hl, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty observation file"))?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, hl + 1, "expected `m_p m_g`"))?;
        if h.len() != 2 {
            return Err(Error::parse(path, hl + 1, "expected `m_p m_g`"));
        }
        let (mp, mg) = (h[0], h[1]);
        let mut values = Vec::with_capacity(mp + mg);
        let mut variances = Vec::with_capacity(mp + mg);
        for (lineno, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |m: &str| Error::parse(path, lineno + 1, m.to_string());
            if toks.len() != 3 {
                return Err(err("expected `type value variance`"));
            }
            let expected = if values.len() < mp { "P" } else { "G" };
            if toks[0] != expected {
                return Err(err(&format!("expected type {expected}, found {}", toks[0])));
            }
            values.push(toks[1].parse::<f64>().map_err(|_| err("bad value"))?);
            let var: f64 = toks[2].parse().map_err(|_| err("bad variance"))?;
            if var.is_nan() || var <= 0.0 {
                return Err(err("variance must be positive"));
            }
            variances.push(var);
        }
        if values.len() != mp + mg {
            return Err(Error::parse(
                path,
                0,
                format!("expected {} measurements, found {}", mp + mg, values.len()),
            ));
        }
        Ok(Self {
            values: DVector::from_vec(values),
            variances: DVector::from_vec(variances),
            n_points: mp,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Station and block layout as stored on disk: `i j` lines for stations,
/// then `i0 j0 i1 j1` lines for blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub stations: PointStations,
    pub partition: CellPartition,
}

impl Layout {
    pub fn default_for(grid: &GridSpec) -> Result<Self> {
        let (stations, partition) = default_layout(grid)?;
        Ok(Self { stations, partition })
    }

    pub fn model(&self, grid: GridSpec) -> Result<ObservationModel> {
        ObservationModel::from_layout(grid, &self.stations, &self.partition)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# stations: i j\n");
        for c in self.stations.coords() {
            let _ = writeln!(out, "{} {}", c.i, c.j);
        }
        out.push_str("# blocks: i0 j0 i1 j1 (inclusive)\n");
        for b in self.partition.blocks() {
            let _ = writeln!(out, "{} {} {} {}", b.i0, b.j0, b.i1, b.j1);
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut coords = Vec::new();
        let mut blocks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, lineno + 1, "expected non-negative integers"))?;
            match nums.len() {
                2 if blocks.is_empty() => coords.push(GridCoord::new(nums[0], nums[1])),
                4 => blocks.push(CellBlock::new(nums[0], nums[1], nums[2], nums[3])),
                _ => {
                    return Err(Error::parse(
                        path,
                        lineno + 1,
                        "expected `i j` station or `i0 j0 i1 j1` block (stations first)",
                    ))
                }
            }
        }
        Ok(Self {
            stations: PointStations::new(coords)?,
            partition: CellPartition::new(blocks)?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid(rows: usize, cols: usize) -> GridSpec {
        GridSpec::new(rows, cols, 1.0, 1.0).unwrap()
    }

    fn index_field(g: GridSpec) -> Field {
        Field::from_vec(g, (0..g.len()).map(|k| k as f64).collect()).unwrap()
    }

    #[test]
    fn point_rows_select() {
        let g = grid(2, 2);
        let st = PointStations::new(vec![GridCoord::new(0, 0)]).unwrap();
        let rows = build_point_rows(&st, &g).unwrap();
        assert_eq!(
            rows.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0, 0.0]
        );

        let g3 = grid(3, 3);
        let st = PointStations::new(vec![GridCoord::new(1, 2), GridCoord::new(2, 0)]).unwrap();
        let rows = build_point_rows(&st, &g3).unwrap();
        let y = &rows * index_field(g3).values();
        assert_eq!(y[0], 5.0);
        assert_eq!(y[1], 6.0);
        let c = &rows * DVector::from_element(9, -2.5);
        assert!(c.iter().all(|&v| v == -2.5));
    }

    #[test]
    fn duplicate_station_rejected() {
        let err = PointStations::new(vec![GridCoord::new(1, 1), GridCoord::new(1, 1)]);
        assert!(matches!(err, Err(Error::Validation { .. })));
        let st = PointStations::new(vec![GridCoord::new(4, 0)]).unwrap();
        assert!(matches!(build_point_rows(&st, &grid(3, 3)), Err(Error::Index { .. })));
    }

    #[test]
    fn average_rows_mean() {
        let g = grid(2, 2);
        let p = CellPartition::new(vec![CellBlock::new(0, 0, 1, 1)]).unwrap();
        let rows = build_average_rows(&p, &g).unwrap();
        let y = &rows * DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y[0], 2.5);
    }

    #[test]
    fn empty_or_overlapping_blocks_rejected() {
        assert!(CellPartition::new(vec![CellBlock::new(2, 0, 1, 1)]).is_err());
        assert!(CellPartition::new(vec![CellBlock::new(0, 0, 1, 1), CellBlock::new(1, 1, 2, 2)]).is_err());
        // Disjoint but leaving a hole in the hull.
        assert!(CellPartition::new(vec![CellBlock::new(0, 0, 0, 0), CellBlock::new(1, 1, 1, 1)]).is_err());
    }

    #[test]
    fn average_rows_match_block_loop() {
        let g = grid(6, 6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = standard_normals(&mut rng, 36);
        let mut blocks = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                blocks.push(CellBlock::new(2 * a, 2 * b, 2 * a + 1, 2 * b + 1));
            }
        }
        let p = CellPartition::new(blocks.clone()).unwrap();
        let y = build_average_rows(&p, &g).unwrap() * &x;
        for (k, b) in blocks.iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0;
            for i in b.i0..=b.i1 {
                for j in b.j0..=b.j1 {
                    sum += x[i * 6 + j];
                    count += 1;
                }
            }
            assert!((y[k] - sum / count as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn default_layout_on_paper_grid() {
        let g = grid(51, 75);
        let (st, p) = default_layout(&g).unwrap();
        assert_eq!(st.len(), 35);
        assert_eq!(p.len(), 24);
        let mut owner = vec![usize::MAX; g.len()];
        for (k, b) in p.blocks().iter().enumerate() {
            assert!(!b.is_empty());
            for c in b.coords() {
                let idx = g.flatten(c).unwrap();
                assert_eq!(owner[idx], usize::MAX, "blocks overlap at {c:?}");
                owner[idx] = k;
            }
        }
        // 48x72 sub-rectangle anchored at the origin.
        assert_eq!(owner.iter().filter(|&&o| o != usize::MAX).count(), 48 * 72);
        let model = ObservationModel::from_layout(g, &st, &p).unwrap();
        assert_eq!(model.m(), 59);
        assert_eq!((model.n_points(), model.n_averages()), (35, 24));
        assert!(default_layout(&grid(6, 20)).is_err());
        assert!(default_layout(&grid(20, 9)).is_err());
    }

    #[test]
    fn rows_sum_to_one_and_point_rows_are_one_hot() {
        let model = ObservationModel::default_for(grid(26, 38)).unwrap();
        for r in 0..model.m() {
            let row = model.h().row(r);
            assert!((row.sum() - 1.0).abs() < 1e-12);
            if r < model.n_points() {
                assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|&&v| v != 0.0).count(), 1);
            }
        }
    }

    #[test]
    fn observe_noise_free_and_seeded() {
        let g = grid(51, 75);
        let model = ObservationModel::default_for(g).unwrap();
        let y = model.observe(&Field::constant(g, 5.0), None).unwrap();
        assert_eq!(y.len(), 59);
        assert!(y.iter().all(|v| (v - 5.0).abs() < 1e-12));

        let f = index_field(g);
        assert_eq!(model.observe(&f, None).unwrap(), model.h() * f.values());
        let a = model.observe(&f, Some(11)).unwrap();
        let b = model.observe(&f, Some(11)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, model.observe(&f, Some(12)).unwrap());
    }

    #[test]
    fn point_noise_variance_monte_carlo() {
        let g = grid(26, 38);
        let model = ObservationModel::default_for(g).unwrap();
        let f = Field::zeros(g);
        let draws = 10_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for k in 0..draws {
            let y = model.observe(&f, Some(1000 + k)).unwrap();
            s += y[0];
            s2 += y[0] * y[0];
        }
        let mean = s / draws as f64;
        let var = (s2 - draws as f64 * mean * mean) / (draws - 1) as f64;
        assert!((var - 0.01).abs() < 0.05 * 0.01, "variance {var}");
    }

    #[test]
    fn observation_and_layout_files_roundtrip() {
        let g = grid(26, 38);
        let layout = Layout::default_for(&g).unwrap();
        let back = Layout::parse(&layout.to_text(), Path::new("layout")).unwrap();
        assert_eq!(back, layout);

        let model = layout.model(g).unwrap();
        let obs = Observations::new(&model, model.observe(&Field::constant(g, 1.25), Some(4)).unwrap()).unwrap();
        let back = Observations::parse(&obs.to_text(), Path::new("obs")).unwrap();
        assert_eq!(back, obs);
        assert!(Observations::parse("1 1\nG 1 1\nP 2 1\n", Path::new("o")).is_err());
    }
}
