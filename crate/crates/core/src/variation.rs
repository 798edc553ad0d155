//! First and second variations of graph energies along boundary-vanishing
//! directions, finite-difference validation, and the angle condition on
//! singular curves.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{
    direction_measure, energy_fh, field_to_measure, gradient, shifted_gradient, singular_set_of, EnergySpec,
    DEFAULT_SINGULAR_TOL,
};
use crate::grid::{GridDomain, ScalarField};
use crate::measure::{variation_report, VariationReport};
use crate::sum::pairwise_sum;

/// A variation direction `phi` with zero boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    phi: ScalarField,
}

impl DirectionField {
    pub fn new(phi: ScalarField) -> Result<Self> {
        let worst = phi.boundary_max_abs();
        if worst != 0.0 {
            return Err(Error::DirectionNotVanishing(worst));
        }
        Ok(Self { phi })
    }

    /// Samples `f` at the interior nodes; boundary nodes are set to zero.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: GridDomain, f: F) -> Self {
        let mut phi = ScalarField::from_fn(grid, f);
        for k in grid.boundary_loop() {
            phi.values[k] = 0.0;
        }
        Self { phi }
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn grid(&self) -> &GridDomain {
        &self.phi.grid
    }
}

/// One-sided first variation of `F_H` at a candidate minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerVariation {
    /// Slopes of `eps -> F_H(u + eps phi)` at `eps = 0`, including the `H`
    /// term; `f_value` is `F_H(u)`.
    pub report: VariationReport,
    /// `int_S |grad phi|` over the singular cells of `u`.
    pub singular_integral: f64,
    /// `int H phi`.
    pub h_term: f64,
    /// `1e-4 (1 + F(0))`.
    pub tol: f64,
    /// `F'(0-) <= tol` and `F'(0+) >= -tol`.
    pub is_critical: bool,
    pub singular_cells: usize,
}

fn check_grids(u: &ScalarField, dir: &DirectionField) -> Result<()> {
    if u.grid != dir.phi.grid {
        return Err(Error::IncompatibleGrids);
    }
    Ok(())
}

fn h_integral(f: &ScalarField, spec: &EnergySpec) -> Result<f64> {
    let h = spec.h_cells(&f.grid)?;
    let area = f.grid.cell_area();
    let terms: Vec<f64> = h.iter().enumerate().map(|(c, hc)| hc * f.cell_average(c) * area).collect();
    Ok(pairwise_sum(&terms))
}

/// [`minimizer_first_variation_with`] at the default singular-set tolerance.
pub fn minimizer_first_variation(u: &ScalarField, spec: &EnergySpec, dir: &DirectionField) -> Result<MinimizerVariation> {
    minimizer_first_variation_with(u, spec, dir, DEFAULT_SINGULAR_TOL)
}

/// `F'(0-)` and `F'(0+)` for `F(eps) = F_H(u + eps phi)`, via the measure
/// `(grad u + F) dx` (zeroed on the singular set detected at `singular_tol`)
/// and `(grad phi) dx`.
pub fn minimizer_first_variation_with(
    u: &ScalarField,
    spec: &EnergySpec,
    dir: &DirectionField,
    singular_tol: f64,
) -> Result<MinimizerVariation> {
    check_grids(u, dir)?;
    let gm = field_to_measure(u, spec, singular_tol)?;
    let nu = direction_measure(&dir.phi);
    let mut report = variation_report(&gm.mu, &nu, 0.0)?;
    let h_term = h_integral(&dir.phi, spec)?;
    let h_u = h_integral(u, spec)?;
    report.f_value += h_u;
    report.fprime_minus += h_term;
    report.fprime_plus += h_term;

    let grad_phi = gradient(&dir.phi);
    let area = u.grid.cell_area();
    let terms: Vec<f64> =
        gm.singular.cells.iter().map(|&c| grad_phi.values[c][0].hypot(grad_phi.values[c][1]) * area).collect();
    let singular_integral = pairwise_sum(&terms);

    let tol = 1e-4 * (1.0 + report.f_value.abs());
    let is_critical = report.fprime_minus <= tol && report.fprime_plus >= -tol;
    Ok(MinimizerVariation {
        report,
        singular_integral,
        h_term,
        tol,
        is_critical,
        singular_cells: gm.singular.cells.len(),
    })
}

/// Which area functional a graph variation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// Euclidean area `int sqrt(1 + |grad u|^2)`; `F` and `H` are ignored.
    Riemannian,
    /// `int |grad u + F|` (the p-area for `F = -X*`).
    Generalized,
}

/// `|v - (v.n) n|^2` for a unit `n`.
fn perp_sq(v: &[f64], n: &[f64]) -> f64 {
    let vn: f64 = v.iter().zip(n).map(|(a, b)| a * b).sum();
    v.iter().zip(n).map(|(a, b)| (a - vn * b).powi(2)).sum()
}

/// [`second_variation_graph_with`] at the default singular-set tolerance.
pub fn second_variation_graph(u: &ScalarField, spec: &EnergySpec, dir: &DirectionField, mode: GraphMode) -> Result<f64> {
    second_variation_graph_with(u, spec, dir, mode, DEFAULT_SINGULAR_TOL)
}

/// Closed-form second variation at `eps = 0`:
///
/// * Riemannian: `int (|grad phi|^2 W^2 - (grad u . grad phi)^2) / W^3`,
///   `W = sqrt(1 + |grad u|^2)`;
/// * generalized: `int (|G|^2 |grad phi|^2 - (G . grad phi)^2) / |G|^3` over
///   the non-singular cells, `G = grad u + F`.
///
/// Both integrands are evaluated as squared norms of projections, so the
/// result is never negative.
pub fn second_variation_graph_with(
    u: &ScalarField,
    spec: &EnergySpec,
    dir: &DirectionField,
    mode: GraphMode,
    singular_tol: f64,
) -> Result<f64> {
    check_grids(u, dir)?;
    let area = u.grid.cell_area();
    let dphi = gradient(&dir.phi).values;
    let terms: Vec<f64> = match mode {
        GraphMode::Riemannian => gradient(u)
            .values
            .iter()
            .zip(&dphi)
            .map(|(g, p)| {
                let w = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
                let n = [g[0] / w, g[1] / w, -1.0 / w];
                perp_sq(&[p[0], p[1], 0.0], &n) / w * area
            })
            .collect(),
        GraphMode::Generalized => {
            let g = shifted_gradient(u, spec)?;
            let singular = singular_set_of(&u.grid, &g, singular_tol).mask(g.len());
            g.iter()
                .zip(&dphi)
                .zip(&singular)
                .map(|((g, p), &s)| {
                    let r = g[0].hypot(g[1]);
                    if s || r == 0.0 {
                        return 0.0;
                    }
                    perp_sq(p, &[g[0] / r, g[1] / r]) / r * area
                })
                .collect()
        }
    };
    Ok(pairwise_sum(&terms))
}

/// `eps -> E(u + eps phi)` for the functional of `mode`.
pub fn graph_energy(u: &ScalarField, spec: &EnergySpec, dir: &DirectionField, mode: GraphMode, eps: f64) -> Result<f64> {
    check_grids(u, dir)?;
    let v = u.add_scaled(&dir.phi, eps)?;
    match mode {
        GraphMode::Generalized => energy_fh(&v, spec),
        GraphMode::Riemannian => {
            let area = v.grid.cell_area();
            let terms: Vec<f64> =
                gradient(&v).values.iter().map(|g| (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt() * area).collect();
            Ok(pairwise_sum(&terms))
        }
    }
}

/// One step size of a finite-difference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdRow {
    pub h: f64,
    /// `(E(h) - E(0)) / h`
    pub forward: f64,
    /// `(E(0) - E(-h)) / h`
    pub backward: f64,
    /// `(E(h) - 2 E(0) + E(-h)) / h^2`
    pub second: f64,
    pub forward_error: f64,
    pub backward_error: f64,
    pub second_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub mode: GraphMode,
    pub fprime_minus: f64,
    pub fprime_plus: f64,
    pub fsecond: f64,
    pub rows: Vec<FdRow>,
    /// Observed orders between consecutive rows, `None` where an error is
    /// at rounding level.
    pub forward_orders: Vec<Option<f64>>,
    pub backward_orders: Vec<Option<f64>>,
    pub second_orders: Vec<Option<f64>>,
}

fn analytic_first(u: &ScalarField, spec: &EnergySpec, dir: &DirectionField, mode: GraphMode) -> Result<(f64, f64)> {
    match mode {
        GraphMode::Generalized => {
            let v = minimizer_first_variation_with(u, spec, dir, 0.0)?;
            Ok((v.report.fprime_minus, v.report.fprime_plus))
        }
        GraphMode::Riemannian => {
            let area = u.grid.cell_area();
            let dphi = gradient(&dir.phi).values;
            let terms: Vec<f64> = gradient(u)
                .values
                .iter()
                .zip(&dphi)
                .map(|(g, p)| (g[0] * p[0] + g[1] * p[1]) / (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt() * area)
                .collect();
            let d = pairwise_sum(&terms);
            Ok((d, d))
        }
    }
}

fn orders(rows: &[FdRow], err: impl Fn(&FdRow) -> f64) -> Vec<Option<f64>> {
    rows.windows(2)
        .map(|w| {
            let (e0, e1) = (err(&w[0]), err(&w[1]));
            if e0 <= 1e-14 || e1 <= 1e-14 {
                None
            } else {
                Some((e0 / e1).ln() / (w[0].h / w[1].h).ln())
            }
        })
        .collect()
}

/// Difference quotients of `eps -> E(u + eps phi)` against the closed-form
/// slopes and second variation. In the generalized mode the closed forms
/// treat only exact zeros of `grad u + F` as singular, which is what the
/// quotients see for small steps.
pub fn fd_validate(
    u: &ScalarField,
    spec: &EnergySpec,
    dir: &DirectionField,
    h_list: &[f64],
    mode: GraphMode,
) -> Result<FdReport> {
    if h_list.is_empty() || h_list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidConfig("finite-difference steps must be positive".into()));
    }
    let (fm, fp) = analytic_first(u, spec, dir, mode)?;
    let fsecond = second_variation_graph_with(u, spec, dir, mode, 0.0)?;
    let e0 = graph_energy(u, spec, dir, mode, 0.0)?;
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let ep = graph_energy(u, spec, dir, mode, h)?;
        let em = graph_energy(u, spec, dir, mode, -h)?;
        let forward = (ep - e0) / h;
        let backward = (e0 - em) / h;
        let second = (ep - 2.0 * e0 + em) / (h * h);
        rows.push(FdRow {
            h,
            forward,
            backward,
            second,
            forward_error: (forward - fp).abs(),
            backward_error: (backward - fm).abs(),
            second_error: (second - fsecond).abs(),
        });
    }
    Ok(FdReport {
        mode,
        fprime_minus: fm,
        fprime_plus: fp,
        fsecond,
        forward_orders: orders(&rows, |r| r.forward_error),
        backward_orders: orders(&rows, |r| r.backward_error),
        second_orders: orders(&rows, |r| r.second_error),
        rows,
    })
}

/// Local data of a singular curve at one station along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSegment {
    pub point: [f64; 2],
    pub tau: [f64; 2],
    /// Limit of `(grad u + F)/|grad u + F|` on the side `tau` rotated by
    /// `+pi/2` points to.
    pub nu_plus: [f64; 2],
    pub nu_minus: [f64; 2],
    pub e1_plus: [f64; 2],
    pub e1_minus: [f64; 2],
    /// `|e1+ . tau - e1- . tau|`
    pub residual: f64,
    /// `|nu+ + nu-|`, zero for graphs that are smooth across the curve.
    pub smooth_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularCurve {
    /// Singular cells of the component, ordered along the curve.
    pub cells: Vec<usize>,
    pub segments: Vec<CurveSegment>,
    pub max_residual: f64,
    pub low_confidence: bool,
}

fn rot90(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

fn unit(v: [f64; 2]) -> Option<[f64; 2]> {
    let r = v[0].hypot(v[1]);
    (r > 0.0 && r.is_finite()).then(|| [v[0] / r, v[1] / r])
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Principal axes of a point cloud: (mean, major axis, major variance,
/// minor variance).
fn principal_axes(points: &[[f64; 2]]) -> ([f64; 2], [f64; 2], f64, f64) {
    let n = points.len() as f64;
    let m = [points.iter().map(|p| p[0]).sum::<f64>() / n, points.iter().map(|p| p[1]).sum::<f64>() / n];
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let tr = sxx + syy;
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let (l1, l2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    (m, [theta.cos(), theta.sin()], l1, l2)
}

fn locate(grid: &GridDomain, p: [f64; 2]) -> Option<usize> {
    let fx = (p[0] - grid.x[0]) / grid.hx();
    let fy = (p[1] - grid.y[0]) / grid.hy();
    if !(fx >= 0.0 && fy >= 0.0) {
        return None;
    }
    let (i, j) = (fx.floor() as usize, fy.floor() as usize);
    (i < grid.nx() && j < grid.ny()).then(|| grid.cell_index(i, j))
}

/// Connected components of the marked cells under 8-neighbour adjacency.
fn components(grid: &GridDomain, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            comp.push(c);
            let (i, j) = grid.cell_ij(c);
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= grid.nx() as i64 || nj >= grid.ny() as i64 {
                        continue;
                    }
                    let nc = grid.cell_index(ni as usize, nj as usize);
                    if mask[nc] && !seen[nc] {
                        seen[nc] = true;
                        queue.push_back(nc);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// One-sided limit of the unit field on the side `side` of `point`: the
/// first two non-singular cells met along the normal, extrapolated linearly
/// back to the curve.
fn one_sided_limit(
    grid: &GridDomain,
    unit_field: &[Option<[f64; 2]>],
    singular: &[bool],
    point: [f64; 2],
    normal: [f64; 2],
) -> Option<[f64; 2]> {
    let step = 0.25 * grid.hx().min(grid.hy());
    let reach = 12.0 * grid.h();
    let mut found: Vec<(usize, f64)> = Vec::new();
    let mut s = step;
    while s <= reach && found.len() < 2 {
        let c = locate(grid, [point[0] + s * normal[0], point[1] + s * normal[1]])?;
        if !singular[c] && unit_field[c].is_some() && found.iter().all(|&(f, _)| f != c) {
            let (x, y) = grid.cell_center(c);
            found.push((c, dot2([x - point[0], y - point[1]], normal)));
        }
        s += step;
    }
    let &(c1, d1) = found.first()?;
    let n1 = unit_field[c1]?;
    let Some(&(c2, d2)) = found.get(1) else {
        return Some(n1);
    };
    let n2 = unit_field[c2]?;
    if d2 - d1 <= 1e-12 * grid.h() {
        return Some(n1);
    }
    let t = d1 / (d2 - d1);
    unit([n1[0] + t * (n1[0] - n2[0]), n1[1] + t * (n1[1] - n2[1])]).or(Some(n1))
}

/// Fewest stations on each side of a station used for its tangent.
const TANGENT_HALF_WINDOW: usize = 4;
/// The tangent window also spans this fraction of the chain, so the
/// staircase error of the digital curve shrinks with `h`.
const TANGENT_WINDOW_FRACTION: f64 = 0.125;

/// [`angle_condition_with`] at the default singular-set tolerance.
pub fn angle_condition(u: &ScalarField, spec: &EnergySpec) -> Result<Vec<SingularCurve>> {
    angle_condition_with(u, spec, DEFAULT_SINGULAR_TOL)
}

/// Extracts the curve-like components of the singular set and evaluates
/// `|e1+ . tau - e1- . tau|` at stations one cell apart, with `e1 = nu`
/// rotated by `+pi/2`. Components shorter than three cells or not clearly
/// elongated (isolated singular points) are skipped.
pub fn angle_condition_with(u: &ScalarField, spec: &EnergySpec, singular_tol: f64) -> Result<Vec<SingularCurve>> {
    let grid = u.grid;
    let g = shifted_gradient(u, spec)?;
    let set = singular_set_of(&grid, &g, singular_tol);
    let mask = set.mask(g.len());
    let unit_field: Vec<Option<[f64; 2]>> = g.iter().map(|v| unit(*v)).collect();
    let hmax = grid.hx().max(grid.hy());
    let center = |c: usize| {
        let (x, y) = grid.cell_center(c);
        [x, y]
    };

    let mut curves = Vec::new();
    for comp in components(&grid, &mask) {
        if comp.len() < 3 {
            continue;
        }
        let pts: Vec<[f64; 2]> = comp.iter().map(|&c| center(c)).collect();
        let (mean, axis, _, _) = principal_axes(&pts);
        let across = rot90(axis);
        let proj: Vec<f64> = pts.iter().map(|p| dot2([p[0] - mean[0], p[1] - mean[1]], axis)).collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let wproj: Vec<f64> = pts.iter().map(|p| dot2([p[0] - mean[0], p[1] - mean[1]], across)).collect();
        let width = wproj.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - wproj.iter().copied().fold(f64::INFINITY, f64::min);
        let length = hi - lo;
        if length < 3.0 * hmax || width > 0.5 * length {
            continue;
        }

        let nbins = (length / hmax).floor() as usize + 1;
        let bin_of = |p: f64| (((p - lo) / hmax).floor() as usize).min(nbins - 1);
        let mut bins: Vec<Vec<usize>> = vec![Vec::new(); nbins];
        for (k, &p) in proj.iter().enumerate() {
            bins[bin_of(p)].push(k);
        }
        let mut order: Vec<usize> = (0..comp.len()).collect();
        order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(comp[a].cmp(&comp[b])));
        let cells: Vec<usize> = order.iter().map(|&k| comp[k]).collect();

        let half_window = TANGENT_HALF_WINDOW.max((TANGENT_WINDOW_FRACTION * nbins as f64).round() as usize);
        let mut low_confidence = bins.iter().any(|b| b.is_empty());
        let mut segments = Vec::new();
        for b in 0..nbins {
            if bins[b].is_empty() {
                continue;
            }
            let members = &bins[b];
            let widest = members.iter().map(|&k| wproj[k]).fold(f64::NEG_INFINITY, f64::max)
                - members.iter().map(|&k| wproj[k]).fold(f64::INFINITY, f64::min);
            if widest > 3.0 * hmax {
                low_confidence = true;
            }
            let point = {
                let n = members.len() as f64;
                [
                    members.iter().map(|&k| pts[k][0]).sum::<f64>() / n,
                    members.iter().map(|&k| pts[k][1]).sum::<f64>() / n,
                ]
            };
            // full-length window, shifted inward near the ends of the chain
            let span = (2 * half_window + 1).min(nbins);
            let first = b.saturating_sub(half_window).min(nbins - span);
            let window: Vec<[f64; 2]> = (first..first + span)
                .flat_map(|bb| bins[bb].iter().map(|&k| pts[k]))
                .collect();
            let mut tau = if window.len() >= 3 { principal_axes(&window).1 } else { axis };
            if dot2(tau, axis) < 0.0 {
                tau = [-tau[0], -tau[1]];
            }
            let normal = rot90(tau);
            let plus = one_sided_limit(&grid, &unit_field, &mask, point, normal);
            let minus = one_sided_limit(&grid, &unit_field, &mask, point, [-normal[0], -normal[1]]);
            let (Some(nu_plus), Some(nu_minus)) = (plus, minus) else {
                low_confidence = true;
                continue;
            };
            let (e1_plus, e1_minus) = (rot90(nu_plus), rot90(nu_minus));
            segments.push(CurveSegment {
                point,
                tau,
                nu_plus,
                nu_minus,
                e1_plus,
                e1_minus,
                residual: (dot2(e1_plus, tau) - dot2(e1_minus, tau)).abs(),
                smooth_residual: (nu_plus[0] + nu_minus[0]).hypot(nu_plus[1] + nu_minus[1]),
            });
        }
        if segments.is_empty() {
            continue;
        }
        let max_residual = segments.iter().map(|s| s.residual).fold(0.0, f64::max);
        curves.push(SingularCurve { cells, segments, max_residual, low_confidence });
    }
    Ok(curves)
}
