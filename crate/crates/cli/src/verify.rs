//! Seeded invariant suite. Each invariant reports a measured value that
//! passes when it does not exceed its threshold.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use parea::functional::{energy_fh, EnergySpec};
use parea::geometry::{
    area_element_coeff, contract_form, density_field, density_setup, graph_area_density, mean_curvature_h22_euclidean,
    Coframe, DensityKind, Jet,
};
use parea::grid::{GridDomain, ScalarField};
use parea::measure::{
    first_variation_pm, line_energy, second_variation, structural_identity_residual, total_variation, Atom, Cell,
    VectorMeasure,
};
use parea::solver::{comparison_check, continuation_minimize, energy_bound_check, InitialGuess, SolveResult, SolverConfig};
use parea::variation::{fd_validate, minimizer_first_variation, DirectionField, GraphMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::random_direction;

#[derive(Debug, Clone, Serialize)]
pub struct Invariant {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub seed: u64,
    pub all_pass: bool,
    pub failures: Vec<String>,
    pub invariants: Vec<Invariant>,
}

type Check = fn(&mut ChaCha8Rng) -> Result<f64>;

const SUITE: &[(&str, f64, Check)] = &[
    ("measure.structural_identity", 1e-12, structural_identity),
    ("measure.first_variation_quotients", 1e-3, first_variation_quotients),
    ("measure.singular_jump", 1e-12, singular_jump),
    ("measure.convexity_gap", 1e-12, convexity_gap),
    ("measure.negative_second_variation", 0.0, negative_second_variation),
    ("geometry.contraction_identity", 1e-12, contraction_identity),
    ("geometry.frame_consistency", 0.0, frame_consistency),
    ("geometry.intrinsic_density", 1e-14, intrinsic_density),
    ("geometry.sphere_cap_curvature", 0.04, sphere_cap_curvature),
    ("solver.affine_exactness", 1e-8, affine_exactness),
    ("solver.comparison", 1e-6, comparison),
    ("solver.energy_bound", 0.0, energy_bound),
    ("solver.minimality", 0.0, minimality),
    ("variation.criticality", 0.0, criticality),
    ("variation.fd_first_order", 0.1, fd_first_order),
    ("variation.fd_second_order", 0.2, fd_second_order),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SUITE.iter().map(|(n, _, _)| *n)
}

/// Runs every invariant with its own random stream derived from `seed`.
pub fn run(seed: u64, overrides: &BTreeMap<String, f64>) -> Result<VerifyReport> {
    if let Some(name) = overrides.keys().find(|k| !names().any(|n| n == k.as_str())) {
        bail!("unknown invariant `{name}` in thresholds");
    }
    let mut invariants = Vec::with_capacity(SUITE.len());
    for (stream, (name, default, check)) in SUITE.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let measured = check(&mut rng)?;
        let threshold = overrides.get(*name).copied().unwrap_or(*default);
        invariants.push(Invariant { name: name.to_string(), measured, threshold, pass: measured <= threshold });
    }
    let failures: Vec<String> = invariants.iter().filter(|i| !i.pass).map(|i| i.name.clone()).collect();
    Ok(VerifyReport { command: "verify", seed, all_pass: failures.is_empty(), failures, invariants })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- measures

/// Dyadic value in `[-1, 1]`, so constructed cancellations are exact.
fn dyadic(r: &mut ChaCha8Rng) -> f64 {
    f64::from(r.gen_range(-64i32..=64)) / 64.0
}

struct Instance {
    mu: VectorMeasure,
    nu: VectorMeasure,
    eps: f64,
    /// `|nu|` of the site where `mu + eps nu` cancels.
    cancelled_mass: Option<f64>,
}

/// Random pair with cells and atoms; every site except the cancelled one
/// keeps `|mu + t nu| >= 0.1` for `|t - eps| <= 1e-3`.
fn instance(r: &mut ChaCha8Rng, singular: bool) -> Result<Instance> {
    loop {
        let d = r.gen_range(2..=6);
        let (ncells, natoms) = (r.gen_range(1..=8), r.gen_range(0..=3));
        let eps = f64::from(r.gen_range(-16i32..=16)) / 16.0;
        let weights: Vec<f64> = (0..ncells).map(|_| f64::from(r.gen_range(1..=8)) / 8.0).collect();
        let mut draw = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| dyadic(r)).collect()).collect() };
        let (mut mu_c, nu_c, mut mu_a, nu_a) = (draw(ncells), draw(ncells), draw(natoms), draw(natoms));
        let mut cancelled = None;
        if singular {
            let k = r.gen_range(0..ncells + natoms);
            let (m, v, w) = if k < ncells {
                (&mut mu_c[k], &nu_c[k], weights[k])
            } else {
                (&mut mu_a[k - ncells], &nu_a[k - ncells], 1.0)
            };
            if v.iter().all(|x| *x == 0.0) {
                continue;
            }
            *m = v.iter().map(|x| -eps * x).collect();
            cancelled = Some((k, norm(v) * w));
        }
        let separated = mu_c.iter().zip(&nu_c).chain(mu_a.iter().zip(&nu_a)).enumerate().all(|(k, (m, v))| {
            cancelled.is_some_and(|(c, _)| c == k)
                || [-1e-3, 0.0, 1e-3].iter().all(|dt| {
                    let s: Vec<f64> = m.iter().zip(v).map(|(a, b)| a + (eps + dt) * b).collect();
                    norm(&s) >= 0.1
                })
        });
        if !separated {
            continue;
        }
        let cells = |dens: &[Vec<f64>]| -> Vec<Cell> {
            dens.iter().zip(&weights).enumerate().map(|(id, (x, &weight))| Cell { id, weight, density: x.clone() }).collect()
        };
        let atoms = |m: &[Vec<f64>]| -> Vec<Atom> {
            m.iter().enumerate().map(|(k, mass)| Atom { site: 100 + k, mass: mass.clone() }).collect()
        };
        return Ok(Instance {
            mu: VectorMeasure::new(d, cells(&mu_c), atoms(&mu_a))?,
            nu: VectorMeasure::new(d, cells(&nu_c), atoms(&nu_a))?,
            eps,
            cancelled_mass: cancelled.map(|(_, m)| m),
        });
    }
}

fn structural_identity(r: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (d, n) = (r.gen_range(2..=6), r.gen_range(1..=12));
        let weights: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..2.0)).collect();
        let draw = |r: &mut ChaCha8Rng| -> Result<VectorMeasure> {
            let cells = (0..n)
                .map(|id| {
                    let density =
                        if r.gen_bool(0.25) { vec![0.0; d] } else { (0..d).map(|_| r.gen_range(-3.0..3.0)).collect() };
                    Cell { id, weight: weights[id], density }
                })
                .collect();
            let atoms = (0..r.gen_range(0..3))
                .map(|site| Atom { site, mass: (0..d).map(|_| r.gen_range(-1.0..1.0)).collect() })
                .collect();
            Ok(VectorMeasure::new(d, cells, atoms)?)
        };
        let (a, b) = (draw(r)?, draw(r)?);
        worst = worst.max(structural_identity_residual(&a, &b)?);
    }
    Ok(worst)
}

/// Largest one-sided difference-quotient error relative to `|nu|(X)`.
fn first_variation_quotients(r: &mut ChaCha8Rng) -> Result<f64> {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let i = instance(r, k % 2 == 0)?;
        let (fm, fp) = first_variation_pm(&i.mu, &i.nu, i.eps)?;
        let f = |e: f64| line_energy(&i.mu, &i.nu, e);
        let f0 = f(i.eps)?;
        let fwd = (f(i.eps + h)? - f0) / h;
        let bwd = (f0 - f(i.eps - h)?) / h;
        let scale = total_variation(&i.nu);
        worst = worst.max((fwd - fp).abs() / scale).max((bwd - fm).abs() / scale);
    }
    Ok(worst)
}

/// `|F'+ - F'- - 2 |nu|(cancelled site)|`, relative.
fn singular_jump(r: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let i = instance(r, true)?;
        let (fm, fp) = first_variation_pm(&i.mu, &i.nu, i.eps)?;
        let m = i.cancelled_mass.unwrap_or_default();
        worst = worst.max(((fp - fm) - 2.0 * m).abs() / (1.0 + m));
    }
    Ok(worst)
}

fn convexity_gap(r: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let singular = r.gen_bool(0.5);
        let i = instance(r, singular)?;
        let (e1, e2, t) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(0.0..1.0));
        let f = |e: f64| line_energy(&i.mu, &i.nu, e);
        let (f1, f2) = (f(e1)?, f(e2)?);
        let gap = f(t * e1 + (1.0 - t) * e2)? - (t * f1 + (1.0 - t) * f2);
        worst = worst.max(gap / (1.0 + f1.abs() + f2.abs()));
    }
    Ok(worst)
}

/// `max(0, -min F'')` over regular instances.
fn negative_second_variation(r: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let i = instance(r, false)?;
        worst = worst.max(-second_variation(&i.mu, &i.nu, i.eps)?);
    }
    Ok(worst)
}

// ---------------------------------------------------------------- geometry

fn permutation_sign(idx: &[usize]) -> f64 {
    let mut sign = 1.0;
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            if idx[i] == idx[j] {
                return 0.0;
            }
            if idx[i] > idx[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Top coefficient of `eta ^ sum_k c_k (-1)^k e^0 ^ .. (omit k) .. ^ e^{m-1}`.
fn wedge_top(eta: &[f64], c: &[f64]) -> f64 {
    let m = eta.len();
    let mut total = 0.0;
    for j in 0..m {
        for k in 0..m {
            let mut idx = vec![j];
            idx.extend((0..m).filter(|&l| l != k));
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            total += eta[j] * c[k] * sign * permutation_sign(&idx);
        }
    }
    total
}

/// `|eta ^ (lambda contracted) - <eta, lambda>|` over random positive
/// semidefinite frames.
fn contraction_identity(r: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = r.gen_range(2..=6);
        let rank = r.gen_range(1..=m);
        let b: Vec<Vec<f64>> = (0..m).map(|_| (0..rank).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let gram: Vec<Vec<f64>> =
            (0..m).map(|i| (0..m).map(|j| (0..rank).map(|k| b[i][k] * b[j][k]).sum()).collect()).collect();
        let lambda: Vec<f64> = (0..m).map(|_| r.gen_range(-2.0..2.0)).collect();
        let eta: Vec<f64> = (0..m).map(|_| r.gen_range(-2.0..2.0)).collect();
        let inner: f64 = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| eta[i] * gram[i][j] * lambda[j]).sum();
        let c = contract_form(&lambda, &Coframe::new(gram)?)?;
        worst = worst.max((wedge_top(&eta, &c) - inner).abs());
    }
    Ok(worst)
}

fn frame_consistency(r: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut v = || r.gen_range(-3.0..3.0);
        let (x, y, p, q, phi) = (v(), v(), v(), v(), v());
        let cases = [
            (DensityKind::Euclidean, Jet::Graph(vec![p, q])),
            (DensityKind::Heisenberg, Jet::Graph(vec![p, q])),
            (DensityKind::Intrinsic, Jet::Intrinsic([phi, p, q])),
        ];
        for (kind, jet) in cases {
            let d = graph_area_density(kind, &[x, y], &jet)?;
            let (frame, dd) = density_setup(kind, &[x, y], &jet)?;
            worst = worst.max((d.signed() - area_element_coeff(&frame, &dd)?).abs());
        }
    }
    Ok(worst)
}

/// `phi = eta + c` has intrinsic density `sqrt 2`.
fn intrinsic_density(r: &mut ChaCha8Rng) -> Result<f64> {
    let c = r.gen_range(-1.0..1.0);
    let g = GridDomain::square(-1.0, 1.0, 32)?;
    let dens = density_field(DensityKind::Intrinsic, &ScalarField::from_fn(g, |eta, _| eta + c))?;
    Ok(dens.iter().fold(0.0_f64, |m, d| m.max((d.magnitude - 2f64.sqrt()).abs())))
}

/// Unit sphere cap: `|H + 2|` away from the rim.
fn sphere_cap_curvature(_: &mut ChaCha8Rng) -> Result<f64> {
    let g = GridDomain::square(-0.6, 0.6, 128)?;
    let h = mean_curvature_h22_euclidean(&ScalarField::from_fn(g, |x, y| (1.0 - x * x - y * y).sqrt()));
    Ok((0..g.cell_count())
        .filter_map(|c| {
            let (x, y) = g.cell_center(c);
            h.get(c).filter(|_| x.hypot(y) <= 0.5)
        })
        .fold(0.0_f64, |m, v| m.max((v + 2.0).abs())))
}

// ---------------------------------------------------------------- solver

const GRID_N: usize = 16;

fn square() -> Result<GridDomain> {
    Ok(GridDomain::square(-1.0, 1.0, GRID_N)?)
}

fn solve(g: &GridDomain, spec: &EnergySpec, phi: &ScalarField, guess: InitialGuess) -> Result<SolveResult> {
    let cfg = SolverConfig { initial_guess: guess, ..Default::default() };
    let r = continuation_minimize(g, spec, phi, &cfg)?;
    if !r.converged {
        bail!("verification solve did not converge (residual {:e})", r.residual_norm);
    }
    Ok(r)
}

/// Smooth random data on `[-1, 1]^2`.
fn random_smooth(r: &mut ChaCha8Rng) -> impl Fn(f64, f64) -> f64 {
    let c: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
    let (kx, ky) = (r.gen_range(0.5..2.0), r.gen_range(0.5..2.0));
    move |x, y| c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * (kx * x).sin() + c[5] * (ky * y).cos()
}

fn affine_exactness(r: &mut ChaCha8Rng) -> Result<f64> {
    let g = square()?;
    let (a, b, c) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-1.0..1.0));
    let phi = ScalarField::from_fn(g, |x, y| a * x + b * y + c);
    let res = solve(&g, &EnergySpec::least_gradient(), &phi, InitialGuess::Zero)?;
    Ok(res.u.sup_distance(&phi))
}

/// Worst violation of `0 <= u1 - u2 <= sup_boundary (phi1 - phi2)`.
fn comparison(r: &mut ChaCha8Rng) -> Result<f64> {
    let g = square()?;
    let spec = EnergySpec::p_area();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..2 {
        let base = random_smooth(r);
        let (d0, d1, d2) = (r.gen_range(0.0..0.3), r.gen_range(0.0..0.3), r.gen_range(0.0..0.3));
        let lower = ScalarField::from_fn(g, &base);
        let upper = ScalarField::from_fn(g, |x, y| base(x, y) + d0 + d1 * (x + 1.0).powi(2) + d2 * (1.0 - y).powi(2));
        let (ru, rl) = (solve(&g, &spec, &upper, InitialGuess::Coons)?, solve(&g, &spec, &lower, InitialGuess::Coons)?);
        let c = comparison_check(&ru, &rl, &upper, &lower, &spec)?;
        worst = worst.max(-c.min_difference).max(c.max_difference - c.boundary_gap);
    }
    Ok(worst)
}

/// `lhs - rhs - slack` of the energy bound.
fn energy_bound(r: &mut ChaCha8Rng) -> Result<f64> {
    let g = square()?;
    let mut worst = f64::NEG_INFINITY;
    for spec in [EnergySpec::p_area(), EnergySpec::least_gradient()] {
        let phi = ScalarField::from_fn(g, random_smooth(r));
        let b = energy_bound_check(&solve(&g, &spec, &phi, InitialGuess::Coons)?, &spec, &phi)?;
        worst = worst.max(b.lhs - b.rhs - b.slack);
    }
    Ok(worst)
}

fn smooth_solution(r: &mut ChaCha8Rng) -> Result<(SolveResult, EnergySpec)> {
    let g = square()?;
    let spec = EnergySpec::p_area();
    let phi = ScalarField::from_fn(g, random_smooth(r));
    Ok((solve(&g, &spec, &phi, InitialGuess::Coons)?, spec))
}

/// Largest relative energy decrease `(E(u) - E(u + psi)) / (1 + E(u))` over
/// random interior perturbations of amplitude `1e-2 .. 1`.
fn minimality(r: &mut ChaCha8Rng) -> Result<f64> {
    let (res, spec) = smooth_solution(r)?;
    let g = res.u.grid;
    let e0 = energy_fh(&res.u, &spec)?;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..10 {
        let amp = 10f64.powf(-2.0 + 2.0 * f64::from(k) / 9.0);
        let values =
            (0..g.node_count()).map(|n| if g.is_boundary_node(n) { 0.0 } else { amp * r.gen_range(-1.0..1.0) }).collect();
        let e = energy_fh(&res.u.add_scaled(&ScalarField::new(g, values)?, 1.0)?, &spec)?;
        worst = worst.max((e0 - e) / (1.0 + e0));
    }
    Ok(worst)
}

/// `max(F'(0-) - tol, -tol - F'(0+))` over random directions at a solution.
fn criticality(r: &mut ChaCha8Rng) -> Result<f64> {
    let (res, spec) = smooth_solution(r)?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let dir = random_direction(r, res.u.grid)?;
        let v = minimizer_first_variation(&res.u, &spec, &dir)?;
        worst = worst.max(v.report.fprime_minus - v.tol).max(-v.tol - v.report.fprime_plus);
    }
    Ok(worst)
}

// ---------------------------------------------------------------- variation

/// Observed orders of the difference quotients on a smooth regular graph.
fn fd_orders(r: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = GridDomain::new([0.0, 1.0], [0.0, 1.0], GRID_N, GRID_N)?;
    let (a, b, c) = (r.gen_range(2.0..3.0), r.gen_range(-0.5..0.5), r.gen_range(-0.2..0.2));
    let u = ScalarField::from_fn(g, |x, y| a * x + b * y + c * (3.0 * x * y).sin());
    let (kx, ky) = (f64::from(r.gen_range(1..3)), f64::from(r.gen_range(1..3)));
    let dir = DirectionField::from_fn(g, |x, y| (kx * std::f64::consts::PI * x).sin() * (ky * std::f64::consts::PI * y).sin());
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for mode in [GraphMode::Riemannian, GraphMode::Generalized] {
        let rep = fd_validate(&u, &EnergySpec::p_area(), &dir, &[1e-2, 5e-3, 2.5e-3], mode)?;
        first.extend(rep.forward_orders.iter().chain(&rep.backward_orders).flatten());
        second.extend(rep.second_orders.iter().flatten());
    }
    Ok((first, second))
}

/// `max |order - 1|` of the one-sided quotients.
fn fd_first_order(r: &mut ChaCha8Rng) -> Result<f64> {
    let (first, _) = fd_orders(r)?;
    Ok(first.iter().fold(0.0_f64, |m, o| m.max((o - 1.0).abs())))
}

/// `max |order - 2|` of the second differences.
fn fd_second_order(r: &mut ChaCha8Rng) -> Result<f64> {
    let (_, second) = fd_orders(r)?;
    Ok(second.iter().fold(0.0_f64, |m, o| m.max((o - 2.0).abs())))
}
