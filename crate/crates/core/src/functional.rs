//! Generalized area energies on a grid.
//!
//! The energy of a nodal field `u` is
//! `F_H(u) = sum_cells (|grad u + F| + H * mean(u)) * cell_area`, where the
//! gradient is the cell-centered average of forward differences. With
//! `F = -X*` (`X* = (y, -x)` in the plane) this is the p-area of the graph of
//! `u` in the first Heisenberg group; with `F = 0` it is the least-gradient
//! (total variation) energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, ScalarField, VectorField};
use crate::measure::VectorMeasure;
use crate::sum::pairwise_sum;

/// The vector field `F` of the energy.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceField {
    Zero,
    /// `F = -X* = (-y, x)`.
    MinusXStar,
    Custom(VectorField),
}

/// The scalar weight `H` of the linear term.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Constant(f64),
    Cells(Vec<f64>),
}

/// The pair `(F, H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    pub force: ForceField,
    pub h: Weight,
}

impl EnergySpec {
    pub fn least_gradient() -> Self {
        Self { force: ForceField::Zero, h: Weight::Constant(0.0) }
    }

    pub fn p_area() -> Self {
        Self { force: ForceField::MinusXStar, h: Weight::Constant(0.0) }
    }

    pub fn custom(field: VectorField) -> Self {
        Self { force: ForceField::Custom(field), h: Weight::Constant(0.0) }
    }

    pub fn with_h(mut self, h: Weight) -> Self {
        self.h = h;
        self
    }

    /// Same `F`, `H = 0`.
    pub fn without_h(&self) -> Self {
        Self { force: self.force.clone(), h: Weight::Constant(0.0) }
    }

    pub fn has_h(&self) -> bool {
        match &self.h {
            Weight::Constant(c) => *c != 0.0,
            Weight::Cells(v) => v.iter().any(|x| *x != 0.0),
        }
    }

    /// `F` at every cell center of `grid`.
    pub fn force_cells(&self, grid: &GridDomain) -> Result<Vec<[f64; 2]>> {
        match &self.force {
            ForceField::Zero => Ok(vec![[0.0, 0.0]; grid.cell_count()]),
            ForceField::MinusXStar => Ok((0..grid.cell_count())
                .map(|c| {
                    let (x, y) = grid.cell_center(c);
                    [-y, x]
                })
                .collect()),
            ForceField::Custom(f) => {
                if f.grid != *grid {
                    return Err(Error::IncompatibleGrids);
                }
                Ok(f.values.clone())
            }
        }
    }

    pub fn h_cells(&self, grid: &GridDomain) -> Result<Vec<f64>> {
        match &self.h {
            Weight::Constant(c) => {
                if !c.is_finite() {
                    return Err(Error::InvalidSpec("H must be finite".into()));
                }
                Ok(vec![*c; grid.cell_count()])
            }
            Weight::Cells(v) => {
                if v.len() != grid.cell_count() {
                    return Err(Error::LengthMismatch { expected: grid.cell_count(), found: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSpec("H must be finite".into()));
                }
                Ok(v.clone())
            }
        }
    }

    /// `sup |F|`, including the domain corners for the closed-form presets.
    pub fn force_sup(&self, grid: &GridDomain) -> Result<f64> {
        let cells = self.force_cells(grid)?.iter().fold(0.0_f64, |m, v| m.max(v[0].hypot(v[1])));
        Ok(match self.force {
            ForceField::MinusXStar => {
                let corner = grid.x.iter().flat_map(|x| grid.y.iter().map(move |y| x.hypot(*y)));
                corner.fold(cells, f64::max)
            }
            _ => cells,
        })
    }
}

/// Cell-centered gradient: average of the two forward differences along each
/// axis. Exact for affine (indeed bilinear) nodal data.
pub fn gradient(u: &ScalarField) -> VectorField {
    let g = &u.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let values = (0..g.cell_count())
        .map(|c| {
            let [a, b, d, e] = g.cell_nodes(c);
            let v = &u.values;
            [(v[b] - v[a] + v[e] - v[d]) / (2.0 * hx), (v[d] - v[a] + v[e] - v[b]) / (2.0 * hy)]
        })
        .collect();
    VectorField { grid: *g, values }
}

/// `grad u + F` per cell.
pub fn shifted_gradient(u: &ScalarField, spec: &EnergySpec) -> Result<Vec<[f64; 2]>> {
    let f = spec.force_cells(&u.grid)?;
    Ok(gradient(u).values.iter().zip(&f).map(|(g, f)| [g[0] + f[0], g[1] + f[1]]).collect())
}

/// `F_H(u)` by midpoint quadrature with cell-averaged `u` in the `H` term.
pub fn energy_fh(u: &ScalarField, spec: &EnergySpec) -> Result<f64> {
    let g = shifted_gradient(u, spec)?;
    let h = spec.h_cells(&u.grid)?;
    let area = u.grid.cell_area();
    let terms: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(c, v)| (v[0].hypot(v[1]) + h[c] * u.cell_average(c)) * area)
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Cells where `grad u + F` vanishes to grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSet {
    pub cells: Vec<usize>,
    /// Lebesgue measure estimate `count * cell_area`.
    pub measure: f64,
}

impl SingularSet {
    pub fn contains(&self, c: usize) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &c in &self.cells {
            m[c] = true;
        }
        m
    }
}

/// Default scale of the singular-set detector.
pub const DEFAULT_SINGULAR_TOL: f64 = 1.0;

/// Frobenius norm of the discrete Jacobian of a cell field, by central
/// differences between neighbouring cells (one-sided at the border).
fn local_lipschitz(grid: &GridDomain, field: &[[f64; 2]], c: usize) -> f64 {
    let (i, j) = grid.cell_ij(c);
    let (nx, ny) = (grid.nx(), grid.ny());
    let diff = |lo: usize, hi: usize, step: f64| -> [f64; 2] {
        let (a, b) = (field[lo], field[hi]);
        [(b[0] - a[0]) / step, (b[1] - a[1]) / step]
    };
    let (il, ih) = (i.saturating_sub(1), (i + 1).min(nx - 1));
    let (jl, jh) = (j.saturating_sub(1), (j + 1).min(ny - 1));
    let dx = diff(grid.cell_index(il, j), grid.cell_index(ih, j), (ih - il) as f64 * grid.hx());
    let dy = diff(grid.cell_index(i, jl), grid.cell_index(i, jh), (jh - jl) as f64 * grid.hy());
    (dx[0] * dx[0] + dx[1] * dx[1] + dy[0] * dy[0] + dy[1] * dy[1]).sqrt()
}

/// Cells whose center lies within `tol` half-diagonals of a zero of
/// `grad u + F`, judged by the local first-order model
/// `|G(center)| <= tol * |DG| * half_diagonal`.
pub fn singular_set(u: &ScalarField, spec: &EnergySpec, tol: f64) -> Result<SingularSet> {
    let g = shifted_gradient(u, spec)?;
    Ok(singular_set_of(&u.grid, &g, tol))
}

pub(crate) fn singular_set_of(grid: &GridDomain, g: &[[f64; 2]], tol: f64) -> SingularSet {
    let half_diag = 0.5 * grid.hx().hypot(grid.hy());
    let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v[0].hypot(v[1])));
    let floor = crate::measure::ZERO_DENSITY_REL * gmax;
    let cells: Vec<usize> = (0..g.len())
        .filter(|&c| {
            let r = g[c][0].hypot(g[c][1]);
            r <= floor || r <= tol * local_lipschitz(grid, g, c) * half_diag
        })
        .collect();
    let measure = cells.len() as f64 * grid.cell_area();
    SingularSet { cells, measure }
}

/// `d mu = (grad u + F) d^2x` with exact zeros on the singular cells, so that
/// a direction measure `(grad phi) d^2x` decomposes with its singular part
/// carried by the singular set.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMeasure {
    pub mu: VectorMeasure,
    pub singular: SingularSet,
}

pub fn field_to_measure(u: &ScalarField, spec: &EnergySpec, tol: f64) -> Result<GraphMeasure> {
    let g = shifted_gradient(u, spec)?;
    let singular = singular_set_of(&u.grid, &g, tol);
    let mask = singular.mask(g.len());
    let dens: Vec<Vec<f64>> =
        g.iter().zip(&mask).map(|(v, &s)| if s { vec![0.0, 0.0] } else { v.to_vec() }).collect();
    let weights = vec![u.grid.cell_area(); g.len()];
    Ok(GraphMeasure { mu: VectorMeasure::from_densities(2, &weights, &dens)?, singular })
}

/// `(grad phi) d^2x` on the cells of `phi.grid`.
pub fn direction_measure(phi: &ScalarField) -> VectorMeasure {
    let g = gradient(phi);
    let weights = vec![phi.grid.cell_area(); g.values.len()];
    let dens: Vec<Vec<f64>> = g.values.iter().map(|v| v.to_vec()).collect();
    VectorMeasure::from_densities(2, &weights, &dens).expect("gradient measure is well formed")
}

/// Numerical check of the structural hypotheses on `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `max |d_K F_I - d_I f_K|` over interior cells, when candidates `f_K`
    /// were supplied.
    pub closedness_residual: Option<f64>,
    /// `min div F*` over interior cells, `F* = (F_2, -F_1)`.
    pub min_div_f_star: f64,
    pub div_f_star_positive: bool,
    /// Rectangles have flat sides, so they never satisfy the uniform
    /// parabola condition; recorded for completeness.
    pub parabolically_convex: bool,
}

pub fn hypothesis_checks(
    grid: &GridDomain,
    spec: &EnergySpec,
    f_list: Option<&[ScalarField]>,
) -> Result<HypothesisReport> {
    let f = spec.force_cells(grid)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let interior: Vec<(usize, usize)> = (1..ny.saturating_sub(1)).flat_map(|j| (1..nx - 1).map(move |i| (i, j))).collect();
    // dF[c][K][I] = d_K F_I by central differences
    let df = |i: usize, j: usize| -> [[f64; 2]; 2] {
        let (l, r) = (f[grid.cell_index(i - 1, j)], f[grid.cell_index(i + 1, j)]);
        let (b, t) = (f[grid.cell_index(i, j - 1)], f[grid.cell_index(i, j + 1)]);
        let (hx2, hy2) = (2.0 * grid.hx(), 2.0 * grid.hy());
        [[(r[0] - l[0]) / hx2, (r[1] - l[1]) / hx2], [(t[0] - b[0]) / hy2, (t[1] - b[1]) / hy2]]
    };

    let closedness_residual = match f_list {
        None => None,
        Some(list) => {
            if list.len() != 2 {
                return Err(Error::LengthMismatch { expected: 2, found: list.len() });
            }
            if list.iter().any(|fk| fk.grid != *grid) {
                return Err(Error::IncompatibleGrids);
            }
            let grads: Vec<VectorField> = list.iter().map(gradient).collect();
            let mut worst: f64 = 0.0;
            for &(i, j) in &interior {
                let d = df(i, j);
                let c = grid.cell_index(i, j);
                for k in 0..2 {
                    for ii in 0..2 {
                        // d_K F_I - d_I f_K
                        worst = worst.max((d[k][ii] - grads[k].values[c][ii]).abs());
                    }
                }
            }
            Some(worst)
        }
    };

    let min_div = interior
        .iter()
        .map(|&(i, j)| {
            let d = df(i, j);
            d[0][1] - d[1][0]
        })
        .fold(f64::INFINITY, f64::min);
    Ok(HypothesisReport {
        closedness_residual,
        min_div_f_star: min_div,
        div_f_star_positive: min_div > 0.0,
        parabolically_convex: false,
    })
}
