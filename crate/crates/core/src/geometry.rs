//! Area elements of hypersurfaces through a degenerate cotangent inner
//! product, and discrete mean curvatures of planar graphs.
//!
//! A coframe `omega^1, ..., omega^{n+1}` with `dv = omega^1 ^ ... ^ omega^{n+1}`
//! is described by its Gram matrix `g^{ij} = <omega^i, omega^j>`, which may be
//! only positive semidefinite (the contact form of the Heisenberg group is a
//! null direction). For a defining function `phi` with frame derivatives
//! `v_i(phi)` and `v_{n+1}(phi) != 0` the induced area element is
//!
//! ```text
//! dv_Sigma = (-1)^n / v_{n+1}(phi) * |d phi| * omega^1 ^ ... ^ omega^n,
//! |d phi|^2 = v_i(phi) g^{ij} v_j(phi).
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{gradient, singular_set, EnergySpec, DEFAULT_SINGULAR_TOL};
use crate::grid::{fmt_f64, GridDomain, ScalarField};

/// Gram matrix of a coframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Coframe {
    gram: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for Coframe {
    type Error = Error;

    fn try_from(gram: Vec<Vec<f64>>) -> Result<Self> {
        Coframe::new(gram)
    }
}

impl From<Coframe> for Vec<Vec<f64>> {
    fn from(c: Coframe) -> Self {
        c.gram
    }
}

impl Coframe {
    /// Checks symmetry and positive semidefiniteness (down to `-1e-12`).
    pub fn new(gram: Vec<Vec<f64>>) -> Result<Self> {
        let n = gram.len();
        if n == 0 {
            return Err(Error::InvalidSpec("empty Gram matrix".into()));
        }
        if let Some(row) = gram.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch { expected: n, found: row.len() });
        }
        if gram.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite Gram entry".into()));
        }
        let scale = gram.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (gram[i][j] - gram[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidSpec(format!("Gram matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        if !cholesky_succeeds(&gram, 1e-12) {
            return Err(Error::InvalidSpec("Gram matrix has a negative eigenvalue".into()));
        }
        Ok(Self { gram })
    }

    /// Orthonormal coframe of `R^dim`.
    pub fn euclidean(dim: usize) -> Self {
        let gram = (0..dim).map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Self { gram }
    }

    /// `(dx_1, dy_1, ..., dx_n, dy_n, Theta)` on the Heisenberg group of
    /// dimension `2n + 1`; `Theta` is null.
    pub fn heisenberg(n: usize) -> Self {
        let mut c = Self::euclidean(2 * n + 1);
        c.gram[2 * n][2 * n] = 0.0;
        c
    }

    /// `(dy, Theta, dx)` on the first Heisenberg group.
    pub fn intrinsic() -> Self {
        let mut c = Self::euclidean(3);
        c.gram[1][1] = 0.0;
        c
    }

    pub fn dim(&self) -> usize {
        self.gram.len()
    }

    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }
}

/// Cholesky factorization of `g + shift I`; succeeds iff the smallest
/// eigenvalue of `g` exceeds `-shift` (up to rounding).
fn cholesky_succeeds(g: &[Vec<f64>], shift: f64) -> bool {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g[i][j] + if i == j { shift } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

/// Frame derivatives `v_i(phi)` of a defining function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DefiningData {
    vphi: Vec<f64>,
}

impl TryFrom<Vec<f64>> for DefiningData {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DefiningData::new(v)
    }
}

impl From<DefiningData> for Vec<f64> {
    fn from(d: DefiningData) -> Self {
        d.vphi
    }
}

impl DefiningData {
    pub fn new(vphi: Vec<f64>) -> Result<Self> {
        match vphi.last() {
            None => Err(Error::InvalidSpec("empty defining data".into())),
            Some(&last) if last == 0.0 => Err(Error::DegenerateDefiningData),
            Some(_) if vphi.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidSpec("non-finite defining data".into()))
            }
            Some(_) => Ok(Self { vphi }),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.vphi
    }
}

/// Coefficients `c_k = sum_j lambda_j g^{jk}` of `omega _| dv` in the basis
/// `(-1)^{k-1} omega^1 ^ .. (omega^k omitted) .. ^ omega^{n+1}`, for
/// `omega = lambda_j omega^j`.
pub fn contract_form(lambda: &[f64], frame: &Coframe) -> Result<Vec<f64>> {
    let n = frame.dim();
    if lambda.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: lambda.len() });
    }
    Ok((0..n).map(|k| (0..n).map(|j| lambda[j] * frame.gram[j][k]).sum()).collect())
}

/// `<eta, omega>` under the frame's Gram matrix.
pub fn pairing(eta: &[f64], omega: &[f64], frame: &Coframe) -> Result<f64> {
    let c = contract_form(omega, frame)?;
    if eta.len() != c.len() {
        return Err(Error::LengthMismatch { expected: c.len(), found: eta.len() });
    }
    Ok(eta.iter().zip(&c).map(|(a, b)| a * b).sum())
}

/// Signed coefficient of `omega^1 ^ ... ^ omega^n` in `dv_Sigma`.
pub fn area_element_coeff(frame: &Coframe, dd: &DefiningData) -> Result<f64> {
    let v = &dd.vphi;
    let m = frame.dim();
    if v.len() != m {
        return Err(Error::LengthMismatch { expected: m, found: v.len() });
    }
    let norm_sq = pairing(v, v, frame)?;
    let n = m - 1;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign / v[n] * norm_sq.max(0.0).sqrt())
}

/// An area density up to orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaDensity {
    pub magnitude: f64,
    /// Orientation sign of the coefficient; `0` when the density vanishes.
    pub sign: f64,
}

impl AreaDensity {
    fn from_coeff(c: f64) -> Self {
        Self { magnitude: c.abs(), sign: if c == 0.0 { 0.0 } else { c.signum() } }
    }

    pub fn signed(&self) -> f64 {
        self.sign * self.magnitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// Graph `z = u(x)` in Euclidean space.
    Euclidean,
    /// Graph `z = u(x, y)` in the Heisenberg group.
    Heisenberg,
    /// Intrinsic graph `x = phi(eta, tau)` in the first Heisenberg group.
    Intrinsic,
}

/// Derivative data of a graph at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Jet {
    /// `grad u`.
    Graph(Vec<f64>),
    /// `(phi, phi_eta, phi_tau)`.
    Intrinsic([f64; 3]),
}

/// Frame and defining data for a density kind at a point.
pub fn density_setup(kind: DensityKind, point: &[f64], jet: &Jet) -> Result<(Coframe, DefiningData)> {
    match (kind, jet) {
        (DensityKind::Euclidean, Jet::Graph(grad)) => {
            let mut v: Vec<f64> = grad.iter().map(|g| -g).collect();
            v.push(1.0);
            Ok((Coframe::euclidean(grad.len() + 1), DefiningData::new(v)?))
        }
        (DensityKind::Heisenberg, Jet::Graph(grad)) => {
            if grad.is_empty() || grad.len() % 2 != 0 {
                return Err(Error::InvalidSpec("Heisenberg graphs need an even number of derivatives".into()));
            }
            if point.len() != grad.len() {
                return Err(Error::LengthMismatch { expected: grad.len(), found: point.len() });
            }
            // e_j = d/dx_j + y_j d/dz, e_j' = d/dy_j - x_j d/dz applied to z - u
            let mut v = Vec::with_capacity(grad.len() + 1);
            for j in 0..grad.len() / 2 {
                let (x, y) = (point[2 * j], point[2 * j + 1]);
                v.push(y - grad[2 * j]);
                v.push(-x - grad[2 * j + 1]);
            }
            v.push(1.0);
            Ok((Coframe::heisenberg(grad.len() / 2), DefiningData::new(v)?))
        }
        (DensityKind::Intrinsic, Jet::Intrinsic([phi, phi_eta, phi_tau])) => {
            // defining function rho - phi(eta, tau) on the surface rho = phi
            let v = vec![-phi_eta + 2.0 * phi * phi_tau, -phi_tau, 1.0];
            Ok((Coframe::intrinsic(), DefiningData::new(v)?))
        }
        _ => Err(Error::InvalidSpec(format!("jet does not match density kind {kind:?}"))),
    }
}

/// The closed-form graph densities, computed through
/// [`area_element_coeff`] on the matching frame.
pub fn graph_area_density(kind: DensityKind, point: &[f64], jet: &Jet) -> Result<AreaDensity> {
    let (frame, dd) = density_setup(kind, point, jet)?;
    Ok(AreaDensity::from_coeff(area_element_coeff(&frame, &dd)?))
}

/// Values on the cells of a grid, `None` where not evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct CellValues {
    pub grid: GridDomain,
    pub values: Vec<Option<f64>>,
}

impl CellValues {
    pub fn get(&self, c: usize) -> Option<f64> {
        self.values[c]
    }

    /// Largest absolute value over the evaluated cells accepted by `keep`.
    pub fn max_abs_where(&self, keep: impl Fn(f64, f64) -> bool) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(c, v)| {
                let (x, y) = self.grid.cell_center(c);
                v.filter(|_| keep(x, y))
            })
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `i,j,x,y,value`, with `nan` on unevaluated cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,x,y,value")?;
        for (c, v) in self.values.iter().enumerate() {
            let (i, j) = self.grid.cell_ij(c);
            let (x, y) = self.grid.cell_center(c);
            let value = v.map_or_else(|| "nan".to_string(), fmt_f64);
            writeln!(w, "{i},{j},{},{},{value}", fmt_f64(x), fmt_f64(y))?;
        }
        Ok(())
    }
}

/// Density of `kind` at every cell, from cell-centered derivatives of `u`.
/// For the intrinsic kind the grid coordinates are `(eta, tau)` and `u` is
/// `phi`.
pub fn density_field(kind: DensityKind, u: &ScalarField) -> Result<Vec<AreaDensity>> {
    let grad = gradient(u);
    (0..u.grid.cell_count())
        .map(|c| {
            let (x, y) = u.grid.cell_center(c);
            let g = grad.values[c];
            let jet = match kind {
                DensityKind::Intrinsic => Jet::Intrinsic([u.cell_average(c), g[0], g[1]]),
                _ => Jet::Graph(g.to_vec()),
            };
            graph_area_density(kind, &[x, y], &jet)
        })
        .collect()
}

/// First-order cell Hessians: forward differences of the cell gradients.
/// The last cell row and column have no forward neighbour and get `None`.
fn cell_hessians(u: &ScalarField) -> Vec<Option<[f64; 3]>> {
    let grid = &u.grid;
    let g = gradient(u).values;
    (0..grid.cell_count())
        .map(|c| {
            let (i, j) = grid.cell_ij(c);
            if i + 1 >= grid.nx() || j + 1 >= grid.ny() {
                return None;
            }
            let (e, n) = (g[grid.cell_index(i + 1, j)], g[grid.cell_index(i, j + 1)]);
            let (hx, hy) = (grid.hx(), grid.hy());
            let uxx = (e[0] - g[c][0]) / hx;
            let uyy = (n[1] - g[c][1]) / hy;
            let uxy = 0.5 * ((n[0] - g[c][0]) / hy + (e[1] - g[c][1]) / hx);
            Some([uxx, uxy, uyy])
        })
        .collect()
}

/// Mean curvature of the graph `z = u(x, y)` as the trace of the second
/// fundamental form in an orthonormal tangent frame,
/// `H = h(e_1, e_1) + h(e_2, e_2)`, with normal `(-grad u, 1)/W`. This is the
/// Riemannian specialization of the first-variation formula (connection
/// forms with vanishing diagonal and `omega_i^{n+1} = h_ij omega^j`); with
/// this orientation it equals `div(grad u / W)`.
pub fn mean_curvature_h22_euclidean(u: &ScalarField) -> CellValues {
    let grad = gradient(u).values;
    let values = cell_hessians(u)
        .into_iter()
        .enumerate()
        .map(|(c, hess)| {
            let [uxx, uxy, uyy] = hess?;
            let [p, q] = grad[c];
            let w = (1.0 + p * p + q * q).sqrt();
            // Gram-Schmidt on t1 = (1, 0, p), t2 = (0, 1, q)
            let t1 = [1.0, 0.0, p];
            let l1 = (1.0 + p * p).sqrt();
            let e1 = [t1[0] / l1, t1[1] / l1, t1[2] / l1];
            let t2 = [0.0, 1.0, q];
            let d = t2[0] * e1[0] + t2[1] * e1[1] + t2[2] * e1[2];
            let r = [t2[0] - d * e1[0], t2[1] - d * e1[1], t2[2] - d * e1[2]];
            let l2 = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            let e2 = [r[0] / l2, r[1] / l2, r[2] / l2];
            // h(a, b) = (a_x b_x u_xx + (a_x b_y + a_y b_x) u_xy + a_y b_y u_yy) / W
            let h = |a: [f64; 3]| (a[0] * a[0] * uxx + 2.0 * a[0] * a[1] * uxy + a[1] * a[1] * uyy) / w;
            Some(h(e1) + h(e2))
        })
        .collect();
    CellValues { grid: u.grid, values }
}

/// `div((grad u - X*)/|grad u - X*|)` on the non-singular cells, using the
/// same first-order cell Hessians. The antisymmetric derivative of `X*`
/// drops out of `G^T DG G`, leaving `(|G|^2 lap u - G^T Hess u G) / |G|^3`.
pub fn p_mean_curvature(u: &ScalarField) -> Result<CellValues> {
    let spec = EnergySpec::p_area();
    let g = crate::functional::shifted_gradient(u, &spec)?;
    let singular = singular_set(u, &spec, DEFAULT_SINGULAR_TOL)?.mask(g.len());
    let values = cell_hessians(u)
        .into_iter()
        .enumerate()
        .map(|(c, hess)| {
            let [uxx, uxy, uyy] = hess?;
            if singular[c] {
                return None;
            }
            let [a, b] = g[c];
            let r2 = a * a + b * b;
            let quad = a * a * uxx + 2.0 * a * b * uxy + b * b * uyy;
            Some((r2 * (uxx + uyy) - quad) / (r2 * r2.sqrt()))
        })
        .collect();
    Ok(CellValues { grid: u.grid, values })
}
