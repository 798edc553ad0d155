//! Elliptic regularization and continuation.
//!
//! For `a > 0` the regularized problem
//!
//! ```text
//! div( (grad v + F) / sqrt(a^2 + |grad v + F|^2) ) = H   in the domain,
//! v = phi                                             on the boundary,
//! ```
//!
//! is the Euler-Lagrange equation of the strictly convex energy
//! `E_a(v) = sum_cells (sqrt(a^2 + |grad v + F|^2) + H mean(v)) * area`.
//! [`solve_regularized`] minimizes `E_a` over the interior nodal values by
//! Newton's method with Armijo backtracking; the Newton systems are solved
//! matrix-free with Jacobi-preconditioned conjugate gradients. The discrete
//! divergence (the gradient of `E_a` divided by the cell area) is the
//! optimality certificate.
//!
//! [`continuation_minimize`] drives `a` to zero along a decreasing schedule,
//! warm-starting every stage from the previous one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{energy_fh, hypothesis_checks, EnergySpec};
use crate::grid::{GridDomain, ScalarField};
use crate::sum::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Transfinite (Coons) interpolation of the boundary data.
    Coons,
    /// Boundary data with a zero interior.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub a_schedule: Vec<f64>,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    pub continuation_stop: f64,
    pub cg_rel_tol: f64,
    pub cg_max_iters: usize,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            a_schedule: (0..=12).map(|k| 0.5f64.powi(k)).collect(),
            newton_tol: 1e-10,
            max_newton_iters: 50,
            backtrack_factor: 0.5,
            max_halvings: 30,
            continuation_stop: 1e-6,
            cg_rel_tol: 1e-12,
            cg_max_iters: 20_000,
            initial_guess: InitialGuess::Coons,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_schedule.is_empty() {
            return Err(Error::InvalidConfig("empty a_schedule".into()));
        }
        if self.a_schedule.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidConfig("a_schedule entries must be positive".into()));
        }
        if self.a_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig("a_schedule must be strictly decreasing".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidConfig("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.newton_tol > 0.0) || !(self.cg_rel_tol > 0.0) || !(self.continuation_stop >= 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One Newton run at fixed `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub a: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    /// `E_a` after every accepted iterate, starting with the initial one.
    pub energy_history: Vec<f64>,
    /// Sup-norm change from the previous stage.
    pub change: Option<f64>,
    /// Residual produced by one-ulp perturbations of the iterate; at small
    /// `a` on fine grids this exceeds `newton_tol`, and reaching it counts
    /// as convergence.
    pub residual_floor: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub u: ScalarField,
    /// Max-norm of the discrete residual at interior nodes.
    pub residual_norm: f64,
    pub a_final: f64,
    /// Newton iterations, summed over stages.
    pub iterations: usize,
    /// `F_H(u)` with the unregularized integrand.
    pub energy: f64,
    /// The last stage reached `newton_tol` or its rounding floor.
    pub converged: bool,
    pub stages: Vec<StageRecord>,
}

/// The regularized energy at fixed `a` on a grid.
struct Regularized<'a> {
    grid: &'a GridDomain,
    force: Vec<[f64; 2]>,
    h: Vec<f64>,
    a: f64,
    area: f64,
    bx: f64,
    by: f64,
}

/// Corner signs of the cell gradient stencil, order `00, 10, 01, 11`.
const SX: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
const SY: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

impl<'a> Regularized<'a> {
    fn new(grid: &'a GridDomain, spec: &EnergySpec, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::NonPositiveRegularization(a));
        }
        Ok(Self {
            grid,
            force: spec.force_cells(grid)?,
            h: spec.h_cells(grid)?,
            a,
            area: grid.cell_area(),
            bx: 0.5 / grid.hx(),
            by: 0.5 / grid.hy(),
        })
    }

    fn cell_grad(&self, v: &[f64], nodes: &[usize; 4]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (k, &n) in nodes.iter().enumerate() {
            g[0] += SX[k] * self.bx * v[n];
            g[1] += SY[k] * self.by * v[n];
        }
        g
    }

    fn shifted(&self, u: &[f64], c: usize) -> ([usize; 4], [f64; 2]) {
        let nodes = self.grid.cell_nodes(c);
        let g = self.cell_grad(u, &nodes);
        (nodes, [g[0] + self.force[c][0], g[1] + self.force[c][1]])
    }

    fn mean(u: &[f64], nodes: &[usize; 4]) -> f64 {
        0.25 * nodes.iter().map(|&n| u[n]).sum::<f64>()
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.grid.cell_count())
            .map(|c| {
                let (nodes, g) = self.shifted(u, c);
                (self.a.hypot(g[0].hypot(g[1])) + self.h[c] * Self::mean(u, &nodes)) * self.area
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// Gradient of the energy; boundary entries are zeroed.
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for c in 0..self.grid.cell_count() {
            let (nodes, g) = self.shifted(u, c);
            let s = self.a.hypot(g[0].hypot(g[1]));
            let (qx, qy) = (g[0] / s * self.area, g[1] / s * self.area);
            let hq = 0.25 * self.h[c] * self.area;
            for (k, &n) in nodes.iter().enumerate() {
                out[n] += SX[k] * self.bx * qx + SY[k] * self.by * qy + hq;
            }
        }
        self.mask(&mut out);
        out
    }

    fn mask(&self, v: &mut [f64]) {
        for (k, x) in v.iter_mut().enumerate() {
            if self.grid.is_boundary_node(k) {
                *x = 0.0;
            }
        }
    }

    /// Per-cell Hessian blocks `area * (I / s - G G^T / s^3)`.
    fn blocks(&self, u: &[f64]) -> Vec<[f64; 3]> {
        (0..self.grid.cell_count())
            .map(|c| {
                let (_, g) = self.shifted(u, c);
                let s = self.a.hypot(g[0].hypot(g[1]));
                let s3 = s * s * s;
                [
                    self.area * (1.0 / s - g[0] * g[0] / s3),
                    self.area * (-g[0] * g[1] / s3),
                    self.area * (1.0 / s - g[1] * g[1] / s3),
                ]
            })
            .collect()
    }

    fn hess_apply(&self, blocks: &[[f64; 3]], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (c, k) in blocks.iter().enumerate() {
            let nodes = self.grid.cell_nodes(c);
            let d = self.cell_grad(v, &nodes);
            let (px, py) = (k[0] * d[0] + k[1] * d[1], k[1] * d[0] + k[2] * d[1]);
            for (i, &n) in nodes.iter().enumerate() {
                out[n] += SX[i] * self.bx * px + SY[i] * self.by * py;
            }
        }
        self.mask(out);
    }

    fn hess_diag(&self, blocks: &[[f64; 3]], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (c, k) in blocks.iter().enumerate() {
            let nodes = self.grid.cell_nodes(c);
            for (i, &nd) in nodes.iter().enumerate() {
                let (bx, by) = (SX[i] * self.bx, SY[i] * self.by);
                out[nd] += bx * (k[0] * bx + k[1] * by) + by * (k[1] * bx + k[2] * by);
            }
        }
        out
    }

    /// Residual change caused by moving every nodal value by one ulp in
    /// alternating columns, times four. (A checkerboard pattern would be
    /// invisible to the averaged gradient.)
    fn rounding_floor(&self, u: &[f64]) -> f64 {
        let base = self.gradient(u);
        let perturbed: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let (i, _) = self.grid.node_ij(k);
                let d = f64::EPSILON * x.abs().max(1.0);
                if i % 2 == 0 { x + d } else { x - d }
            })
            .collect();
        let moved = self.gradient(&perturbed);
        4.0 * base.iter().zip(&moved).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / self.area
    }

    fn residual_norm(&self, grad: &[f64]) -> f64 {
        grad.iter().fold(0.0_f64, |m, g| m.max(g.abs())) / self.area
    }
}

/// Jacobi-preconditioned CG on the interior nodes; returns the iterate.
fn pcg(reg: &Regularized, blocks: &[[f64; 3]], rhs: &[f64], rel_tol: f64, max_iters: usize) -> Vec<f64> {
    let n = rhs.len();
    let diag = reg.hess_diag(blocks, n);
    let inv: Vec<f64> = (0..n)
        .map(|k| if reg.grid.is_boundary_node(k) || diag[k] <= 0.0 { 0.0 } else { 1.0 / diag[k] })
        .collect();
    let dotp = |a: &[f64], b: &[f64]| pairwise_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dotp(&r, &z);
    let r0 = dotp(&r, &r).sqrt();
    if r0 == 0.0 {
        return x;
    }
    let mut ap = vec![0.0; n];
    for _ in 0..max_iters {
        reg.hess_apply(blocks, &p, &mut ap);
        let pap = dotp(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dotp(&r, &r).sqrt() <= rel_tol * r0 {
            break;
        }
        for k in 0..n {
            z[k] = r[k] * inv[k];
        }
        let rz_new = dotp(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    x
}

/// Boundary values of `phi` with an interior filled according to `guess`.
pub fn initial_field(phi: &ScalarField, guess: InitialGuess) -> ScalarField {
    let g = phi.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let v = |i: usize, j: usize| phi.values[g.node_index(i, j)];
    let mut out = phi.clone();
    for j in 1..ny {
        for i in 1..nx {
            out.values[g.node_index(i, j)] = match guess {
                InitialGuess::Zero => 0.0,
                InitialGuess::Coons => {
                    let s = i as f64 / nx as f64;
                    let t = j as f64 / ny as f64;
                    (1.0 - s) * v(0, j) + s * v(nx, j) + (1.0 - t) * v(i, 0) + t * v(i, ny)
                        - ((1.0 - s) * (1.0 - t) * v(0, 0)
                            + s * (1.0 - t) * v(nx, 0)
                            + (1.0 - s) * t * v(0, ny)
                            + s * t * v(nx, ny))
                }
            };
        }
    }
    out
}

/// Discrete residual `max |div N_a(u) - H|` over interior nodes.
pub fn regularized_residual(u: &ScalarField, spec: &EnergySpec, a: f64) -> Result<f64> {
    let reg = Regularized::new(&u.grid, spec, a)?;
    Ok(reg.residual_norm(&reg.gradient(&u.values)))
}

/// `E_a(u)`.
pub fn regularized_energy(u: &ScalarField, spec: &EnergySpec, a: f64) -> Result<f64> {
    Ok(Regularized::new(&u.grid, spec, a)?.energy(&u.values))
}

fn newton(reg: &Regularized, u: &mut [f64], cfg: &SolverConfig) -> StageRecord {
    let mut energy = reg.energy(u);
    let mut history = vec![energy];
    let mut grad = reg.gradient(u);
    let mut residual = reg.residual_norm(&grad);
    let mut iterations = 0;
    let mut trial = vec![0.0; u.len()];
    let mut floor = 0.0;
    while residual > cfg.newton_tol && iterations < cfg.max_newton_iters {
        if residual < 1e-6 {
            floor = reg.rounding_floor(u);
            if residual <= floor {
                break;
            }
        }
        let blocks = reg.blocks(u);
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let step = pcg(reg, &blocks, &rhs, cfg.cg_rel_tol, cfg.cg_max_iters);
        let slope = pairwise_sum(&grad.iter().zip(&step).map(|(g, p)| g * p).collect::<Vec<_>>());
        if !(slope < 0.0) {
            break;
        }
        // Below this predicted decrease, energy differences are rounding
        // noise and the line search falls back to the residual.
        let noise = 1e-13 * energy.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            for k in 0..u.len() {
                trial[k] = u[k] + t * step[k];
            }
            if -t * slope > noise {
                let e = reg.energy(&trial);
                if e <= energy + 1e-4 * t * slope {
                    accepted = Some((e, None));
                    break;
                }
            } else {
                let g = reg.gradient(&trial);
                let r = reg.residual_norm(&g);
                if r < residual {
                    accepted = Some((reg.energy(&trial), Some((g, r))));
                    break;
                }
            }
            t *= cfg.backtrack_factor;
        }
        let Some((e, gr)) = accepted else {
            break;
        };
        u.copy_from_slice(&trial);
        energy = e;
        (grad, residual) = match gr {
            Some(gr) => gr,
            None => {
                let g = reg.gradient(u);
                let r = reg.residual_norm(&g);
                (g, r)
            }
        };
        history.push(energy);
        iterations += 1;
    }
    StageRecord {
        a: reg.a,
        iterations,
        residual_norm: residual,
        energy_history: history,
        change: None,
        residual_floor: floor,
        converged: residual <= cfg.newton_tol || residual <= floor,
    }
}

fn check_boundary(dom: &GridDomain, phi: &ScalarField) -> Result<()> {
    if phi.grid != *dom {
        return Err(Error::IncompatibleGrids);
    }
    if phi.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid("boundary data must be finite".into()));
    }
    Ok(())
}

/// Solves the regularized equation at a single `a`, starting from the
/// configured initial guess.
pub fn solve_regularized(
    dom: &GridDomain,
    spec: &EnergySpec,
    a: f64,
    phi: &ScalarField,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    check_boundary(dom, phi)?;
    let start = initial_field(phi, cfg.initial_guess);
    solve_regularized_from(spec, a, start, cfg)
}

/// Same as [`solve_regularized`] but starting from `start`, whose boundary
/// values are the Dirichlet data.
pub fn solve_regularized_from(spec: &EnergySpec, a: f64, start: ScalarField, cfg: &SolverConfig) -> Result<SolveResult> {
    let grid = start.grid;
    let reg = Regularized::new(&grid, spec, a)?;
    let mut u = start;
    let stage = newton(&reg, &mut u.values, cfg);
    let energy = energy_fh(&u, spec)?;
    Ok(SolveResult {
        residual_norm: stage.residual_norm,
        a_final: a,
        iterations: stage.iterations,
        energy,
        converged: stage.converged,
        stages: vec![stage],
        u,
    })
}

/// Runs the `a` schedule with warm starts and stops once two consecutive
/// stages agree to `continuation_stop` in sup-norm. A stage that fails to
/// converge ends the run with `converged = false`.
pub fn continuation_minimize(
    dom: &GridDomain,
    spec: &EnergySpec,
    phi: &ScalarField,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    check_boundary(dom, phi)?;
    let mut u = initial_field(phi, cfg.initial_guess);
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for &a in &cfg.a_schedule {
        let reg = Regularized::new(dom, spec, a)?;
        let mut stage = newton(&reg, &mut u.values, cfg);
        let change = previous
            .as_ref()
            .map(|p| p.iter().zip(&u.values).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())));
        stage.change = change;
        let converged = stage.converged;
        stages.push(stage);
        if !converged {
            break;
        }
        if change.is_some_and(|c| c <= cfg.continuation_stop) {
            break;
        }
        previous = Some(u.values.clone());
    }
    let last = stages.last().expect("at least one stage");
    Ok(SolveResult {
        residual_norm: last.residual_norm,
        a_final: last.a,
        iterations: stages.iter().map(|s| s.iterations).sum(),
        energy: energy_fh(&u, &spec.without_h())?,
        converged: last.converged,
        stages,
        u,
    })
}

/// Outcome of the ordered-boundary comparison test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub min_difference: f64,
    pub max_difference: f64,
    pub boundary_gap: f64,
    pub tol: f64,
    pub holds: bool,
    pub violations: Vec<String>,
}

pub const COMPARISON_TOL: f64 = 1e-6;

/// Checks `0 <= u1 - u2 <= sup_boundary |phi1 - phi2|` (up to `1e-6`) for
/// solutions with ordered boundary data `phi1 >= phi2`. Refuses when
/// `div F* > 0` fails or the data are not ordered.
pub fn comparison_check(
    r1: &SolveResult,
    r2: &SolveResult,
    phi1: &ScalarField,
    phi2: &ScalarField,
    spec: &EnergySpec,
) -> Result<ComparisonReport> {
    let grid = r1.u.grid;
    if r2.u.grid != grid || phi1.grid != grid || phi2.grid != grid {
        return Err(Error::IncompatibleGrids);
    }
    let hyp = hypothesis_checks(&grid, spec, None)?;
    if !hyp.div_f_star_positive {
        return Err(Error::Hypothesis(format!(
            "comparison requires div F* > 0, found min {}",
            hyp.min_div_f_star
        )));
    }
    let boundary: Vec<usize> = grid.boundary_loop();
    if let Some(&k) = boundary.iter().find(|&&k| phi1.values[k] < phi2.values[k]) {
        let (x, y) = grid.node_xy(k);
        return Err(Error::Hypothesis(format!("boundary data not ordered at ({x}, {y})")));
    }
    let gap = boundary.iter().fold(0.0_f64, |m, &k| m.max(phi1.values[k] - phi2.values[k]));
    let diff: Vec<f64> = r1.u.values.iter().zip(&r2.u.values).map(|(a, b)| a - b).collect();
    let min = diff.iter().copied().fold(f64::INFINITY, f64::min);
    let max = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut violations = Vec::new();
    if min < -COMPARISON_TOL {
        violations.push(format!("min(u1 - u2) = {min:e} < -{COMPARISON_TOL:e}"));
    }
    if max > gap + COMPARISON_TOL {
        violations.push(format!("max(u1 - u2) = {max:e} exceeds boundary gap {gap:e}"));
    }
    Ok(ComparisonReport {
        min_difference: min,
        max_difference: max,
        boundary_gap: gap,
        tol: COMPARISON_TOL,
        holds: violations.is_empty(),
        violations,
    })
}

/// Left and right side of an inequality with its discretization slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

/// `int |grad u + F| <= sup|phi| |boundary| + sup|F| |domain|`, with slack
/// `10 h |boundary|`.
pub fn energy_bound_check(r: &SolveResult, spec: &EnergySpec, phi: &ScalarField) -> Result<BoundReport> {
    let grid = r.u.grid;
    if phi.grid != grid {
        return Err(Error::IncompatibleGrids);
    }
    let lhs = energy_fh(&r.u, &spec.without_h())?;
    let rhs = phi.boundary_max_abs() * grid.perimeter() + spec.force_sup(&grid)? * grid.area();
    let slack = 10.0 * grid.h() * grid.perimeter();
    Ok(BoundReport { lhs, rhs, slack, holds: lhs <= rhs + slack })
}

/// Closed cell rectangle `[i0, i1) x [j0, j1)` of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub i: [usize; 2],
    pub j: [usize; 2],
}

impl CellRect {
    fn validate(&self, g: &GridDomain) -> Result<()> {
        if self.i[0] >= self.i[1] || self.j[0] >= self.j[1] || self.i[1] > g.nx() || self.j[1] > g.ny() {
            return Err(Error::InvalidGrid(format!("bad subdomain {self:?}")));
        }
        Ok(())
    }
}

/// Residual accepted by [`lemma23_check`] for its inputs.
pub const LEMMA23_SOLUTION_TOL: f64 = 1e-6;

/// `| int_sub (sqrt(a^2 + |grad v + F|^2) - sqrt(a^2 + |grad w + F|^2)) |
/// <= int_{boundary of sub} |v - w|`, with slack `10 h |boundary of sub|`.
pub fn lemma23_check(
    v: &SolveResult,
    w: &SolveResult,
    a: f64,
    spec: &EnergySpec,
    sub: CellRect,
) -> Result<BoundReport> {
    let grid = v.u.grid;
    if w.u.grid != grid {
        return Err(Error::IncompatibleGrids);
    }
    sub.validate(&grid)?;
    let reg = Regularized::new(&grid, spec, a)?;
    for r in [v, w] {
        let grad = reg.gradient(&r.u.values);
        let mut worst: f64 = 0.0;
        for j in sub.j[0] + 1..sub.j[1] {
            for i in sub.i[0] + 1..sub.i[1] {
                worst = worst.max(grad[grid.node_index(i, j)].abs() / reg.area);
            }
        }
        if worst > LEMMA23_SOLUTION_TOL {
            return Err(Error::NotASolution(worst));
        }
    }
    let cells: Vec<usize> =
        (sub.j[0]..sub.j[1]).flat_map(|j| (sub.i[0]..sub.i[1]).map(move |i| grid.cell_index(i, j))).collect();
    let terms: Vec<f64> = cells
        .iter()
        .map(|&c| {
            let (_, gv) = reg.shifted(&v.u.values, c);
            let (_, gw) = reg.shifted(&w.u.values, c);
            (a.hypot(gv[0].hypot(gv[1])) - a.hypot(gw[0].hypot(gw[1]))) * reg.area
        })
        .collect();
    let lhs = pairwise_sum(&terms).abs();

    // trapezoid rule along the four sides
    let d = |i: usize, j: usize| {
        let k = grid.node_index(i, j);
        (v.u.values[k] - w.u.values[k]).abs()
    };
    let mut edge = Vec::new();
    for i in sub.i[0]..sub.i[1] {
        for j in [sub.j[0], sub.j[1]] {
            edge.push(0.5 * (d(i, j) + d(i + 1, j)) * grid.hx());
        }
    }
    for j in sub.j[0]..sub.j[1] {
        for i in [sub.i[0], sub.i[1]] {
            edge.push(0.5 * (d(i, j) + d(i, j + 1)) * grid.hy());
        }
    }
    let rhs = pairwise_sum(&edge);
    let perimeter = 2.0 * ((sub.i[1] - sub.i[0]) as f64 * grid.hx() + (sub.j[1] - sub.j[0]) as f64 * grid.hy());
    let slack = 10.0 * grid.h() * perimeter;
    Ok(BoundReport { lhs, rhs, slack, holds: lhs <= rhs + slack })
}
