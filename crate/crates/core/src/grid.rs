//! Rectangular grids, nodal scalar fields and cell-centered vector fields.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor-product grid on `[x0, x1] x [y0, y1]` with `nx * ny` cells and
/// `(nx + 1) * (ny + 1)` nodes.
///
/// Nodes are stored row-major in `y` (`k = j * (nx + 1) + i`), cells likewise
/// (`c = j * nx + i`); cell `(i, j)` has corner nodes `(i, j)`, `(i + 1, j)`,
/// `(i, j + 1)`, `(i + 1, j + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub n: [usize; 2],
}

impl GridDomain {
    pub fn new(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        let g = Self { x, y, n: [nx, ny] };
        g.validate()?;
        Ok(g)
    }

    /// Square grid `[lo, hi]^2` with `n` cells per axis.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new([lo, hi], [lo, hi], n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n[0] < 2 || self.n[1] < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 cells per axis, got {:?}", self.n)));
        }
        if !(self.x[1] > self.x[0] && self.y[1] > self.y[0]) || !self.x.iter().chain(&self.y).all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid(format!("degenerate extents {:?} x {:?}", self.x, self.y)));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.n[0]
    }

    pub fn ny(&self) -> usize {
        self.n[1]
    }

    pub fn hx(&self) -> f64 {
        (self.x[1] - self.x[0]) / self.n[0] as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y[1] - self.y[0]) / self.n[1] as f64
    }

    /// Lebesgue measure of one cell.
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn area(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.x[1] - self.x[0]) + (self.y[1] - self.y[0]))
    }

    /// Largest grid spacing.
    pub fn h(&self) -> f64 {
        self.hx().max(self.hy())
    }

    pub fn diameter(&self) -> f64 {
        (self.x[1] - self.x[0]).hypot(self.y[1] - self.y[0])
    }

    pub fn node_count(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n[0] + 1) + i
    }

    pub fn node_ij(&self, k: usize) -> (usize, usize) {
        (k % (self.n[0] + 1), k / (self.n[0] + 1))
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.n[0], c / self.n[0])
    }

    pub fn node_x(&self, i: usize) -> f64 {
        if i == self.n[0] {
            self.x[1]
        } else {
            self.x[0] + i as f64 * self.hx()
        }
    }

    pub fn node_y(&self, j: usize) -> f64 {
        if j == self.n[1] {
            self.y[1]
        } else {
            self.y[0] + j as f64 * self.hy()
        }
    }

    pub fn node_xy(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(k);
        (self.node_x(i), self.node_y(j))
    }

    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (i, j) = self.cell_ij(c);
        (self.x[0] + (i as f64 + 0.5) * self.hx(), self.y[0] + (j as f64 + 0.5) * self.hy())
    }

    pub fn is_boundary_node(&self, k: usize) -> bool {
        let (i, j) = self.node_ij(k);
        i == 0 || j == 0 || i == self.n[0] || j == self.n[1]
    }

    /// Corner nodes of a cell in the order `00, 10, 01, 11`.
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        let (i, j) = self.cell_ij(c);
        let k = self.node_index(i, j);
        let row = self.n[0] + 1;
        [k, k + 1, k + row, k + row + 1]
    }

    /// Boundary nodes in counter-clockwise order starting at the lower-left
    /// corner, each listed once.
    pub fn boundary_loop(&self) -> Vec<usize> {
        let (nx, ny) = (self.n[0], self.n[1]);
        let mut out = Vec::with_capacity(2 * (nx + ny));
        out.extend((0..nx).map(|i| self.node_index(i, 0)));
        out.extend((0..ny).map(|j| self.node_index(nx, j)));
        out.extend((1..=nx).rev().map(|i| self.node_index(i, ny)));
        out.extend((1..=ny).rev().map(|j| self.node_index(0, j)));
        out
    }
}

/// Values at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridDomain,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch { expected: grid.node_count(), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite nodal value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridDomain) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: GridDomain, f: F) -> Self {
        let values = (0..grid.node_count())
            .map(|k| {
                let (x, y) = grid.node_xy(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    /// Average of the four corner values of a cell.
    pub fn cell_average(&self, c: usize) -> f64 {
        let [a, b, d, e] = self.grid.cell_nodes(c);
        0.25 * (self.values[a] + self.values[b] + self.values[d] + self.values[e])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute value over boundary nodes.
    pub fn boundary_max_abs(&self) -> f64 {
        (0..self.values.len())
            .filter(|&k| self.grid.is_boundary_node(k))
            .fold(0.0, |m, k| m.max(self.values[k].abs()))
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn add_scaled(&self, other: &Self, t: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::IncompatibleGrids);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + t * b).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,x,y,value")?;
        for k in 0..self.values.len() {
            let (i, j) = self.grid.node_ij(k);
            let (x, y) = self.grid.node_xy(k);
            writeln!(w, "{i},{j},{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(self.values[k]))?;
        }
        Ok(())
    }

    /// Reads the `i,j,x,y,value` layout; every node of `grid` must appear once.
    pub fn read_csv<R: BufRead>(grid: GridDomain, r: R) -> Result<Self> {
        let rows = read_rows(r, &["i", "j", "x", "y", "value"])?;
        let mut values = vec![f64::NAN; grid.node_count()];
        for (line, row) in rows {
            let (i, j) = (row[0] as usize, row[1] as usize);
            if i > grid.nx() || j > grid.ny() || row[0].fract() != 0.0 || row[1].fract() != 0.0 {
                return Err(Error::Csv(format!("line {line}: node ({}, {}) outside the grid", row[0], row[1])));
            }
            values[grid.node_index(i, j)] = row[4];
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Csv("missing nodes".into()));
        }
        Self::new(grid, values)
    }
}

/// Two-component vectors at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: GridDomain,
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(grid: GridDomain, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::LengthMismatch { expected: grid.cell_count(), found: values.len() });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite cell vector".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64, f64) -> [f64; 2]>(grid: GridDomain, f: F) -> Self {
        let values = (0..grid.cell_count())
            .map(|c| {
                let (x, y) = grid.cell_center(c);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,x,y,v1,v2")?;
        for (c, v) in self.values.iter().enumerate() {
            let (i, j) = self.grid.cell_ij(c);
            let (x, y) = self.grid.cell_center(c);
            writeln!(w, "{i},{j},{},{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(v[0]), fmt_f64(v[1]))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(grid: GridDomain, r: R) -> Result<Self> {
        let rows = read_rows(r, &["i", "j", "x", "y", "v1", "v2"])?;
        let mut values = vec![[f64::NAN; 2]; grid.cell_count()];
        for (line, row) in rows {
            let (i, j) = (row[0] as usize, row[1] as usize);
            if i >= grid.nx() || j >= grid.ny() || row[0].fract() != 0.0 || row[1].fract() != 0.0 {
                return Err(Error::Csv(format!("line {line}: cell ({}, {}) outside the grid", row[0], row[1])));
            }
            values[grid.cell_index(i, j)] = [row[4], row[5]];
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Csv("missing cells".into()));
        }
        Self::new(grid, values)
    }
}

/// Scientific notation with 17 significant digits, which round-trips every
/// finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_rows<R: BufRead>(r: R, header: &[&str]) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut lines = r.lines().enumerate();
    let first = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Csv("empty input".into())),
    };
    let got: Vec<&str> = first.trim().split(',').map(str::trim).collect();
    if got != header {
        return Err(Error::Csv(format!("expected header {}, found {}", header.join(","), first.trim())));
    }
    let mut rows = Vec::new();
    for (n, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let row = l
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Csv(format!("line {}: {e}", n + 1)))?;
        if row.len() != header.len() {
            return Err(Error::Csv(format!("line {}: expected {} columns, found {}", n + 1, header.len(), row.len())));
        }
        rows.push((n + 1, row));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let g = GridDomain::new([0.0, 2.0], [-1.0, 1.0], 4, 3).unwrap();
        assert_eq!(g.node_count(), 20);
        assert_eq!(g.cell_count(), 12);
        for k in 0..g.node_count() {
            let (i, j) = g.node_ij(k);
            assert_eq!(g.node_index(i, j), k);
        }
        assert_eq!(g.cell_nodes(g.cell_index(1, 2)), [11, 12, 16, 17]);
        assert_eq!(g.node_xy(g.node_index(4, 3)), (2.0, 1.0));
        let loop_ = g.boundary_loop();
        assert_eq!(loop_.len(), 2 * (4 + 3));
        assert!(loop_.iter().all(|&k| g.is_boundary_node(k)));
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridDomain::square(0.0, 1.0, 1).is_err());
        assert!(GridDomain::new([1.0, 1.0], [0.0, 1.0], 4, 4).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = GridDomain::square(-1.0, 1.0, 5).unwrap();
        let u = ScalarField::from_fn(g, |x, y| (x * 3.1).sin() + y / 7.0);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = ScalarField::read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(back, u);

        let v = VectorField::from_fn(g, |x, y| [x.exp(), -y / 3.0]);
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert_eq!(VectorField::read_csv(g, buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn csv_reader_reports_bad_header() {
        let g = GridDomain::square(0.0, 1.0, 2).unwrap();
        assert!(matches!(ScalarField::read_csv(g, "a,b\n".as_bytes()), Err(Error::Csv(_))));
    }
}
