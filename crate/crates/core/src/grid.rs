//! Grid geometry and depth fields.
//!
//! Rows run cross-shore and columns along-shore. Grid point `(i, j)` sits at
//! physical position `(i / (rows - 1) * W, j / (cols - 1) * L)`, so the domain
//! corners are grid points. Fields are stored row-major.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    width: f64,
    length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCoord {
    pub i: usize,
    pub j: usize,
}

impl GridCoord {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

impl GridSpec {
    /// `width` is the cross-shore extent (along rows), `length` the
    /// along-shore extent (along columns), both in meters.
    pub fn new(rows: usize, cols: usize, width: f64, length: f64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::validation(
                "grid",
                format!("need at least 2x2 points, got {rows}x{cols}"),
            ));
        }
        if !(width > 0.0 && width.is_finite() && length > 0.0 && length.is_finite()) {
            return Err(Error::validation(
                "grid",
                format!("extents must be positive, got W={width} L={length}"),
            ));
        }
        Ok(Self {
            rows,
            cols,
            width,
            length,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Flattened field dimension `rows * cols`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, c: GridCoord) -> bool {
        c.i < self.rows && c.j < self.cols
    }

    pub fn check(&self, c: GridCoord) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(Error::Index {
                row: c.i,
                col: c.j,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn flatten(&self, c: GridCoord) -> Result<usize> {
        self.check(c)?;
        Ok(c.i * self.cols + c.j)
    }

    pub fn unflatten(&self, index: usize) -> Result<GridCoord> {
        if index >= self.len() {
            return Err(Error::Index {
                row: index / self.cols,
                col: index % self.cols,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(GridCoord::new(index / self.cols, index % self.cols))
    }

    /// Physical `(cross-shore, along-shore)` position in meters.
    pub fn position(&self, c: GridCoord) -> (f64, f64) {
        (
            c.i as f64 / (self.rows - 1) as f64 * self.width,
            c.j as f64 / (self.cols - 1) as f64 * self.length,
        )
    }

    /// Anisotropic distance with along-shore offsets scaled by `L` and
    /// cross-shore offsets by `W`; opposite corners are `sqrt(2)` apart.
    pub fn normalized_distance(&self, a: GridCoord, b: GridCoord) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.normalized_distance_unchecked(a, b))
    }

    pub(crate) fn normalized_distance_unchecked(&self, a: GridCoord, b: GridCoord) -> f64 {
        let (xa, ya) = self.position(a);
        let (xb, yb) = self.position(b);
        let dx = (xa - xb) / self.width;
        let dy = (ya - yb) / self.length;
        dx.hypot(dy)
    }

    /// Row-major iteration over every grid point.
    pub fn coords(&self) -> impl Iterator<Item = GridCoord> + '_ {
        (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| GridCoord::new(i, j)))
    }
}

/// A depth field (meters) on a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: DVector<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                context: "field values",
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation("field", format!("non-finite value at index {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_vec(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, DVector::from_vec(values))
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: DVector::from_element(grid.len(), value),
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(GridCoord) -> f64) -> Result<Self> {
        let values = DVector::from_iterator(grid.len(), grid.coords().map(&mut f));
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn get(&self, c: GridCoord) -> Result<f64> {
        Ok(self.values[self.grid.flatten(c)?])
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        self.check_grid(&other.grid)
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.grid != *grid {
            return Err(Error::validation(
                "field",
                format!(
                    "grid mismatch: {}x{} vs {}x{}",
                    self.grid.rows, self.grid.cols, grid.rows, grid.cols
                ),
            ));
        }
        Ok(())
    }

    /// Text form: header `rows cols width_W length_L`, then one line per row.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut out = String::with_capacity(g.len() * 20);
        let _ = writeln!(out, "{} {} {} {}", g.rows, g.cols, g.width, g.length);
        for i in 0..g.rows {
            let row = &self.values.as_slice()[i * g.cols..(i + 1) * g.cols];
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty field file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(Error::parse(path, hline + 1, "expected `rows cols width length`"));
        }
        let bad = |msg: &str| Error::parse(path, hline + 1, msg.to_string());
        let rows: usize = h[0].parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = h[1].parse().map_err(|_| bad("bad column count"))?;
        let width: f64 = h[2].parse().map_err(|_| bad("bad width"))?;
        let length: f64 = h[3].parse().map_err(|_| bad("bad length"))?;
        let grid = GridSpec::new(rows, cols, width, length)?;

        let mut values = Vec::with_capacity(grid.len());
        let mut seen_rows = 0;
        for (lineno, line) in lines {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(path, lineno + 1, format!("bad value `{tok}`")))?;
                values.push(v);
            }
            if values.len() - before != cols {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected {cols} values, found {}", values.len() - before),
                ));
            }
            seen_rows += 1;
        }
        if seen_rows != rows {
            return Err(Error::parse(
                path,
                0,
                format!("expected {rows} rows, found {seen_rows}"),
            ));
        }
        Field::from_vec(grid, values)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(rows: usize, cols: usize) -> GridSpec {
        GridSpec::new(rows, cols, 500.0, 1000.0).unwrap()
    }

    #[test]
    fn flatten_examples() {
        let g = grid(51, 75);
        assert_eq!(g.flatten(GridCoord::new(0, 0)).unwrap(), 0);
        assert_eq!(g.flatten(GridCoord::new(1, 0)).unwrap(), 75);
        assert!(matches!(g.flatten(GridCoord::new(51, 0)), Err(Error::Index { .. })));
        assert!(g.unflatten(51 * 75).is_err());
    }

    #[test]
    fn flatten_roundtrip_exhaustive() {
        let g = grid(3, 4);
        let mut seen = [false; 12];
        for i in 0..3 {
            for j in 0..4 {
                let c = GridCoord::new(i, j);
                let k = g.flatten(c).unwrap();
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(g.unflatten(k).unwrap(), c);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn distance_examples() {
        let g = grid(51, 75);
        let a = GridCoord::new(0, 0);
        assert_eq!(g.normalized_distance(a, a).unwrap(), 0.0);
        let far = GridCoord::new(50, 74);
        assert!((g.normalized_distance(a, far).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((g.normalized_distance(a, GridCoord::new(0, 74)).unwrap() - 1.0).abs() < 1e-15);
        assert!(g.normalized_distance(a, GridCoord::new(0, 75)).is_err());
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(GridSpec::new(1, 5, 1.0, 1.0).is_err());
        assert!(GridSpec::new(5, 5, 0.0, 1.0).is_err());
        assert!(GridSpec::new(5, 5, 1.0, -2.0).is_err());
        let g = grid(2, 2);
        assert!(Field::from_vec(g, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Field::from_vec(g, vec![1.0, 2.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let g = GridSpec::new(3, 4, 12.5, 40.0).unwrap();
        let f = Field::from_fn(g, |c| (c.i as f64 * 0.1 - 1.0 / 3.0) * (c.j as f64 + 0.7)).unwrap();
        let back = Field::parse(&f.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn parse_rejects_ragged_rows() {
        let err = Field::parse("2 2 1 1\n1 2\n3\n", Path::new("f.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            rows in 2usize..12, cols in 2usize..12,
            a in (0usize..100, 0usize..100),
            b in (0usize..100, 0usize..100),
            c in (0usize..100, 0usize..100),
        ) {
            let g = grid(rows, cols);
            let p = |(i, j): (usize, usize)| GridCoord::new(i % rows, j % cols);
            let (a, b, c) = (p(a), p(b), p(c));
            let ab = g.normalized_distance(a, b).unwrap();
            let ba = g.normalized_distance(b, a).unwrap();
            let bc = g.normalized_distance(b, c).unwrap();
            let ac = g.normalized_distance(a, c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
