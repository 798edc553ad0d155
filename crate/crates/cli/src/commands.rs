//! The field-processing subcommands.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use parea::functional::{energy_fh, gradient, shifted_gradient, singular_set, DEFAULT_SINGULAR_TOL};
use parea::geometry::{density_field, mean_curvature_h22_euclidean, p_mean_curvature};
use parea::grid::{fmt_f64, GridDomain, ScalarField};
use parea::measure::{decompose, singular_epsilons, variation_report, RnDecomposition, VariationReport};
use parea::solver::{continuation_minimize, StageRecord};
use parea::variation::{minimizer_first_variation, second_variation_graph, DirectionField, GraphMode, MinimizerVariation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    load, AreaConfig, CurvatureConfig, CurvatureKind, DecomposeConfig, DirectionSource, EnergyConfig, FieldSource, SolveConfig, VaryConfig,
};
use crate::output::OutDir;
use crate::Outcome;

/// Random direction vanishing on the boundary: a sine product plus nodal
/// noise.
pub fn random_direction(rng: &mut ChaCha8Rng, g: GridDomain) -> Result<DirectionField> {
    let (kx, ky) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let amp = rng.gen_range(0.1..2.0);
    let noise = rng.gen_range(0.0..0.5);
    let (lx, ly) = (g.x[1] - g.x[0], g.y[1] - g.y[0]);
    let values = (0..g.node_count())
        .map(|k| {
            let (x, y) = g.node_xy(k);
            let sx = (f64::from(kx) * std::f64::consts::PI * (x - g.x[0]) / lx).sin();
            let sy = (f64::from(ky) * std::f64::consts::PI * (y - g.y[0]) / ly).sin();
            if g.is_boundary_node(k) {
                0.0
            } else {
                amp * sx * sy + noise * rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    Ok(DirectionField::new(ScalarField::new(g, values)?)?)
}

#[derive(Serialize)]
struct SingularSummary {
    cells: usize,
    measure: f64,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    seed: u64,
    domain: GridDomain,
    energy_config: &'a EnergyConfig,
    /// `int |grad u + F|`.
    energy: f64,
    /// `F_H(u)`.
    energy_with_h: f64,
    residual_norm: f64,
    a_final: f64,
    iterations: usize,
    converged: bool,
    singular_set: SingularSummary,
    stages: &'a [StageRecord],
}

pub fn solve(path: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let (cfg, base): (SolveConfig, _) = load(path)?;
    let seed = seed.or(cfg.seed).unwrap_or(crate::config::DEFAULT_SEED);
    let grid = cfg.grid()?;
    let spec = cfg.energy.spec()?;
    let phi = cfg.boundary.load(grid, &base)?;
    let r = continuation_minimize(&grid, &spec, &phi, &cfg.solver)?;
    let sing = singular_set(&r.u, &spec, DEFAULT_SINGULAR_TOL)?;
    let report = SolveReport {
        command: "solve",
        seed,
        domain: grid,
        energy_config: &cfg.energy,
        energy: r.energy,
        energy_with_h: energy_fh(&r.u, &spec)?,
        residual_norm: r.residual_norm,
        a_final: r.a_final,
        iterations: r.iterations,
        converged: r.converged,
        singular_set: SingularSummary { cells: sing.cells.len(), measure: sing.measure },
        stages: &r.stages,
    };
    let dir = OutDir::create(out)?;
    dir.csv("u.csv", |w| Ok(r.u.write_csv(w)?))?;
    dir.json("solve.json", &report)?;
    Ok(if r.converged { Outcome::Pass } else { Outcome::NotConverged })
}

#[derive(Serialize)]
struct SecondVariations {
    riemannian: f64,
    generalized: f64,
}

#[derive(Serialize)]
struct VaryReport<'a> {
    command: &'static str,
    seed: u64,
    domain: GridDomain,
    energy_config: &'a EnergyConfig,
    first_variation: MinimizerVariation,
    second_variation: SecondVariations,
}

fn direction(src: &DirectionSource, grid: GridDomain, base: &Path, seed: u64) -> Result<DirectionField> {
    match src {
        DirectionSource::Expr(text) => {
            Ok(DirectionField::new(FieldSource::Expr(text.clone()).load(grid, base)?)?)
        }
        DirectionSource::Csv(p) => Ok(DirectionField::new(FieldSource::Csv(p.clone()).load(grid, base)?)?),
        DirectionSource::Random => random_direction(&mut ChaCha8Rng::seed_from_u64(seed), grid),
    }
}

pub fn vary(path: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let (cfg, base): (VaryConfig, _) = load(path)?;
    let seed = seed.or(cfg.seed).unwrap_or(crate::config::DEFAULT_SEED);
    let grid = cfg.grid()?;
    let spec = cfg.energy.spec()?;
    let u = cfg.field.load(grid, &base)?;
    let dir = direction(&cfg.direction, grid, &base, seed)?;
    let first = minimizer_first_variation(&u, &spec, &dir)?;
    let second = SecondVariations {
        riemannian: second_variation_graph(&u, &spec, &dir, GraphMode::Riemannian)?,
        generalized: second_variation_graph(&u, &spec, &dir, GraphMode::Generalized)?,
    };
    let out_dir = OutDir::create(out)?;
    if cfg.integrand_csv {
        let g = shifted_gradient(&u, &spec)?;
        let mask = singular_set(&u, &spec, DEFAULT_SINGULAR_TOL)?.mask(grid.cell_count());
        let dphi = gradient(dir.phi());
        out_dir.csv("integrand.csv", |w| {
            writeln!(w, "i,j,x,y,regular,singular")?;
            for c in 0..grid.cell_count() {
                let (i, j) = grid.cell_ij(c);
                let (x, y) = grid.cell_center(c);
                let (v, p) = (g[c], dphi.values[c]);
                let (regular, singular) = if mask[c] {
                    (0.0, p[0].hypot(p[1]))
                } else {
                    ((v[0] * p[0] + v[1] * p[1]) / v[0].hypot(v[1]), 0.0)
                };
                writeln!(w, "{i},{j},{},{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(regular), fmt_f64(singular))?;
            }
            Ok(())
        })?;
    }
    let report = VaryReport {
        command: "vary",
        seed,
        domain: grid,
        energy_config: &cfg.energy,
        first_variation: first,
        second_variation: second,
    };
    out_dir.json("vary.json", &report)?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct AreaReport {
    command: &'static str,
    seed: u64,
    domain: GridDomain,
    kind: parea::geometry::DensityKind,
    /// Sum of density magnitudes times cell area.
    total_area: f64,
}

pub fn area(path: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let (cfg, base): (AreaConfig, _) = load(path)?;
    let seed = seed.or(cfg.seed).unwrap_or(crate::config::DEFAULT_SEED);
    let grid = cfg.grid()?;
    let u = cfg.field.load(grid, &base)?;
    let dens = density_field(cfg.kind, &u)?;
    let dir = OutDir::create(out)?;
    dir.csv("area.csv", |w| {
        writeln!(w, "i,j,x,y,magnitude,sign")?;
        for (c, d) in dens.iter().enumerate() {
            let (i, j) = grid.cell_ij(c);
            let (x, y) = grid.cell_center(c);
            writeln!(w, "{i},{j},{},{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(d.magnitude), d.sign)?;
        }
        Ok(())
    })?;
    let total_area = parea::sum::pairwise_sum_by(dens.len(), |c| dens[c].magnitude * grid.cell_area());
    dir.json("area.json", &AreaReport { command: "area", seed, domain: grid, kind: cfg.kind, total_area })?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct CurvatureReport {
    command: &'static str,
    seed: u64,
    domain: GridDomain,
    kind: CurvatureKind,
    max_abs: f64,
    /// Cells without a value: the last row and column, and for the
    /// Heisenberg kind the singular set.
    undefined_cells: usize,
}

pub fn curvature(path: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let (cfg, base): (CurvatureConfig, _) = load(path)?;
    let seed = seed.or(cfg.seed).unwrap_or(crate::config::DEFAULT_SEED);
    let grid = cfg.grid()?;
    let u = cfg.field.load(grid, &base)?;
    let values = match cfg.kind {
        CurvatureKind::Euclidean => mean_curvature_h22_euclidean(&u),
        CurvatureKind::Heisenberg => p_mean_curvature(&u)?,
    };
    let dir = OutDir::create(out)?;
    dir.csv("curvature.csv", |w| Ok(values.write_csv(w)?))?;
    let report = CurvatureReport {
        command: "curvature",
        seed,
        domain: grid,
        kind: cfg.kind,
        max_abs: values.max_abs_where(|_, _| true),
        undefined_cells: values.values.iter().filter(|v| v.is_none()).count(),
    };
    dir.json("curvature.json", &report)?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct DecomposeReport {
    command: &'static str,
    seed: u64,
    epsilon: f64,
    /// Decomposition of `nu` against `mu + epsilon nu`.
    decomposition: RnDecomposition,
    variation: VariationReport,
    singular_epsilons: Vec<f64>,
}

pub fn decompose_cmd(path: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let (cfg, _): (DecomposeConfig, _) = load(path)?;
    let seed = seed.or(cfg.seed).unwrap_or(crate::config::DEFAULT_SEED);
    let mu_eps = cfg.mu.add_scaled(&cfg.nu, cfg.epsilon).context("forming mu + epsilon nu")?;
    let report = DecomposeReport {
        command: "decompose",
        seed,
        epsilon: cfg.epsilon,
        decomposition: decompose(&cfg.nu, &mu_eps)?,
        variation: variation_report(&cfg.mu, &cfg.nu, cfg.epsilon)?,
        singular_epsilons: singular_epsilons(&cfg.mu, &cfg.nu)?,
    };
    OutDir::create(out)?.json("decompose.json", &report)?;
    Ok(Outcome::Pass)
}

