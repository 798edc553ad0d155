//! Discrete vector-valued measures.
//!
//! A [`VectorMeasure`] is an `R^d`-valued measure on a finite cell complex:
//! an absolutely continuous part given by a density per cell (against the
//! cell's Lebesgue weight) plus a singular part made of atoms sitting on a
//! separate site index space. Because atoms never share an index with cells,
//! mutual singularity of the two parts is structural.
//!
//! On top of this model the module evaluates the total variation functional
//! `F(mu) = |mu|(X)`, the Radon-Nikodym split of one measure against the total
//! variation of another, and the closed-form one-sided first derivatives and
//! second derivative of `eps -> F(mu + eps nu)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::{dot, norm, pairwise_sum};

/// Densities whose norm is below this fraction of the largest one are treated
/// as exactly zero when classifying supports.
pub const ZERO_DENSITY_REL: f64 = 1e-14;

/// Relative per-component tolerance of the cancellation test in
/// [`singular_epsilons`].
pub const CANCELLATION_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub weight: f64,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub site: usize,
    pub mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct VectorMeasure {
    dim: usize,
    cells: Vec<Cell>,
    atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    d: usize,
    #[serde(default)]
    cells: Vec<Cell>,
    #[serde(default)]
    atoms: Vec<Atom>,
}

impl TryFrom<RawMeasure> for VectorMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        VectorMeasure::new(raw.d, raw.cells, raw.atoms)
    }
}

impl From<VectorMeasure> for RawMeasure {
    fn from(m: VectorMeasure) -> Self {
        RawMeasure { d: m.dim, cells: m.cells, atoms: m.atoms }
    }
}

/// Where a point of a support lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    /// Position of the cell in the measure's cell list.
    Cell(usize),
    /// Atom site id.
    Atom(usize),
}

impl VectorMeasure {
    pub fn new(dim: usize, cells: Vec<Cell>, atoms: Vec<Atom>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        for c in &cells {
            if c.density.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.density.len() });
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidMeasure(format!("cell {} has weight {}", c.id, c.weight)));
            }
            if c.density.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure(format!("cell {} has a non-finite density", c.id)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &atoms {
            if a.mass.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: a.mass.len() });
            }
            if a.mass.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom {} has a non-finite mass", a.site)));
            }
            if !seen.insert(a.site) {
                return Err(Error::InvalidMeasure(format!("duplicate atom site {}", a.site)));
            }
        }
        Ok(Self { dim, cells, atoms })
    }

    /// Absolutely continuous measure with the given weights and densities;
    /// cell ids are the positions.
    pub fn from_densities(dim: usize, weights: &[f64], densities: &[Vec<f64>]) -> Result<Self> {
        if weights.len() != densities.len() {
            return Err(Error::LengthMismatch { expected: weights.len(), found: densities.len() });
        }
        let cells = weights
            .iter()
            .zip(densities)
            .enumerate()
            .map(|(id, (&weight, density))| Cell { id, weight, density: density.clone() })
            .collect();
        Self::new(dim, cells, Vec::new())
    }

    /// The zero measure on the same cells, without atoms.
    pub fn zero_like(&self) -> Self {
        let cells = self
            .cells
            .iter()
            .map(|c| Cell { id: c.id, weight: c.weight, density: vec![0.0; self.dim] })
            .collect();
        Self { dim: self.dim, cells, atoms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, site: usize) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.site == site)
    }

    /// Vector mass carried by a site (density times weight for cells).
    pub fn mass_at(&self, site: Site) -> Vec<f64> {
        match site {
            Site::Cell(k) => {
                let c = &self.cells[k];
                c.density.iter().map(|v| v * c.weight).collect()
            }
            Site::Atom(s) => self.atom(s).map(|a| a.mass.clone()).unwrap_or_else(|| vec![0.0; self.dim]),
        }
    }

    /// Sites of the support of `|self|`, after the zero-density threshold.
    pub fn support(&self) -> Vec<Site> {
        let cut = self.thresholds();
        let mut out: Vec<Site> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| !is_zero(&c.density, cut.0))
            .map(|(k, _)| Site::Cell(k))
            .collect();
        let mut atoms: Vec<usize> =
            self.atoms.iter().filter(|a| !is_zero(&a.mass, cut.1)).map(|a| a.site).collect();
        atoms.sort_unstable();
        out.extend(atoms.into_iter().map(Site::Atom));
        out
    }

    fn thresholds(&self) -> (f64, f64) {
        let cell_max = self.cells.iter().map(|c| norm(&c.density)).fold(0.0, f64::max);
        let atom_max = self.atoms.iter().map(|a| norm(&a.mass)).fold(0.0, f64::max);
        (ZERO_DENSITY_REL * cell_max, ZERO_DENSITY_REL * atom_max)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.cells.len() != other.cells.len() {
            return Err(Error::IncompatibleCells(format!(
                "{} cells vs {} cells",
                self.cells.len(),
                other.cells.len()
            )));
        }
        for (a, b) in self.cells.iter().zip(&other.cells) {
            if a.id != b.id || a.weight != b.weight {
                return Err(Error::IncompatibleCells(format!(
                    "cell {} (weight {}) vs cell {} (weight {})",
                    a.id, a.weight, b.id, b.weight
                )));
            }
        }
        Ok(())
    }

    /// `self + eps * other`.
    pub fn add_scaled(&self, other: &Self, eps: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| Cell {
                id: a.id,
                weight: a.weight,
                density: a.density.iter().zip(&b.density).map(|(x, y)| x + eps * y).collect(),
            })
            .collect();
        let mut merged: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for a in &self.atoms {
            merged.insert(a.site, a.mass.clone());
        }
        for b in &other.atoms {
            let entry = merged.entry(b.site).or_insert_with(|| vec![0.0; self.dim]);
            for (x, y) in entry.iter_mut().zip(&b.mass) {
                *x += eps * y;
            }
        }
        let atoms = merged.into_iter().map(|(site, mass)| Atom { site, mass }).collect();
        Ok(Self { dim: self.dim, cells, atoms })
    }

    /// All atom sites of either measure, sorted.
    fn atom_sites(&self, other: &Self) -> Vec<usize> {
        let mut sites: Vec<usize> = self.atoms.iter().chain(&other.atoms).map(|a| a.site).collect();
        sites.sort_unstable();
        sites.dedup();
        sites
    }
}

fn is_zero(v: &[f64], cut: f64) -> bool {
    let n = norm(v);
    n == 0.0 || n < cut
}

/// `|m|(X)`: sum of `|density| * weight` over cells plus `|mass|` over atoms.
pub fn total_variation(m: &VectorMeasure) -> f64 {
    let mut terms: Vec<f64> = m.cells.iter().map(|c| norm(&c.density) * c.weight).collect();
    terms.extend(m.atoms.iter().map(|a| norm(&a.mass)));
    pairwise_sum(&terms)
}

/// One point of the support of `|mu_eps|` with its Radon-Nikodym data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub site: Site,
    /// `|mu_eps|` mass of the point.
    pub total_mass: f64,
    /// Unit polar vector of `mu_eps`.
    pub n: Vec<f64>,
    /// Density of `nu` with respect to `|mu_eps|`.
    pub a: Vec<f64>,
}

/// `mu_eps = N |mu_eps|`, `nu = A |mu_eps| + nu_s` with `nu_s` singular to
/// `|mu_eps|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnDecomposition {
    pub support: Vec<SupportPoint>,
    pub nu_s: VectorMeasure,
}

impl RnDecomposition {
    /// `A |mu_eps| + nu_s`, which reproduces the decomposed `nu`.
    pub fn reconstruct(&self) -> VectorMeasure {
        let mut out = self.nu_s.clone();
        for p in &self.support {
            let mass: Vec<f64> = p.a.iter().map(|v| v * p.total_mass).collect();
            match p.site {
                Site::Cell(k) => {
                    let c = &mut out.cells[k];
                    c.density = mass.iter().map(|v| v / c.weight).collect();
                }
                Site::Atom(s) => out.atoms.push(Atom { site: s, mass }),
            }
        }
        out.atoms.sort_by_key(|a| a.site);
        out
    }

    /// Sites where `nu_s` carries mass.
    pub fn singular_sites(&self) -> Vec<Site> {
        let mut out: Vec<Site> = self
            .nu_s
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.density.iter().any(|v| *v != 0.0))
            .map(|(k, _)| Site::Cell(k))
            .collect();
        out.extend(self.nu_s.atoms.iter().filter(|a| a.mass.iter().any(|v| *v != 0.0)).map(|a| Site::Atom(a.site)));
        out
    }
}

/// Radon-Nikodym decomposition of `nu` against `|mu_eps|`.
pub fn decompose(nu: &VectorMeasure, mu_eps: &VectorMeasure) -> Result<RnDecomposition> {
    mu_eps.check_compatible(nu)?;
    let (cell_cut, atom_cut) = mu_eps.thresholds();
    let dim = nu.dim;
    let mut support = Vec::new();
    let mut nu_s = nu.zero_like();

    for (k, (mc, nc)) in mu_eps.cells.iter().zip(&nu.cells).enumerate() {
        let r = norm(&mc.density);
        if is_zero(&mc.density, cell_cut) {
            nu_s.cells[k].density = nc.density.clone();
        } else {
            support.push(SupportPoint {
                site: Site::Cell(k),
                total_mass: r * mc.weight,
                n: mc.density.iter().map(|v| v / r).collect(),
                a: nc.density.iter().map(|v| v / r).collect(),
            });
        }
    }

    for site in mu_eps.atom_sites(nu) {
        let m = mu_eps.atom(site).map(|a| a.mass.clone()).unwrap_or_else(|| vec![0.0; dim]);
        let v = nu.atom(site).map(|a| a.mass.clone()).unwrap_or_else(|| vec![0.0; dim]);
        if is_zero(&m, atom_cut) {
            if v.iter().any(|x| *x != 0.0) {
                nu_s.atoms.push(Atom { site, mass: v });
            }
        } else {
            let r = norm(&m);
            support.push(SupportPoint {
                site: Site::Atom(site),
                total_mass: r,
                n: m.iter().map(|x| x / r).collect(),
                a: v.iter().map(|x| x / r).collect(),
            });
        }
    }
    Ok(RnDecomposition { support, nu_s })
}

/// `F(eps) = |mu + eps nu|(X)`.
pub fn line_energy(mu: &VectorMeasure, nu: &VectorMeasure, eps: f64) -> Result<f64> {
    Ok(total_variation(&mu.add_scaled(nu, eps)?))
}

/// Regular part `sum N . A |mu_eps|` and singular mass `|nu_s|(X)`.
fn first_variation_parts(rn: &RnDecomposition) -> (f64, f64) {
    let terms: Vec<f64> = rn.support.iter().map(|p| dot(&p.n, &p.a) * p.total_mass).collect();
    (pairwise_sum(&terms), total_variation(&rn.nu_s))
}

/// One-sided derivatives `(F'(eps-), F'(eps+))` of `F(eps) = |mu + eps nu|(X)`.
pub fn first_variation_pm(mu: &VectorMeasure, nu: &VectorMeasure, eps: f64) -> Result<(f64, f64)> {
    let rn = decompose(nu, &mu.add_scaled(nu, eps)?)?;
    let (regular, singular) = first_variation_parts(&rn);
    Ok((regular - singular, regular + singular))
}

fn second_variation_of(rn: &RnDecomposition) -> f64 {
    let terms: Vec<f64> = rn
        .support
        .iter()
        .map(|p| {
            let an = dot(&p.a, &p.n);
            // |A|^2 - (A.N)^2 written as |A - (A.N)N|^2 to keep it nonnegative
            let perp: f64 = p.a.iter().zip(&p.n).map(|(a, n)| (a - an * n).powi(2)).sum();
            perp * p.total_mass
        })
        .collect();
    pairwise_sum(&terms)
}

/// `sum (|A|^2 - (A.N)^2) |mu_eps|`, the second derivative at regular `eps`
/// and the common one-sided derivative of `F'_+`/`F'_-` at singular `eps`.
pub fn second_variation(mu: &VectorMeasure, nu: &VectorMeasure, eps: f64) -> Result<f64> {
    let rn = decompose(nu, &mu.add_scaled(nu, eps)?)?;
    Ok(second_variation_of(&rn))
}

/// The values of `eps` at which some site of `mu + eps nu` cancels exactly
/// while `nu` does not vanish there; every other `eps` is regular.
pub fn singular_epsilons(mu: &VectorMeasure, nu: &VectorMeasure) -> Result<Vec<f64>> {
    mu.check_compatible(nu)?;
    let mut out = Vec::new();
    let mut push_root = |m: &[f64], v: &[f64]| {
        let vv = dot(v, v);
        if vv == 0.0 {
            return;
        }
        let eps = -dot(m, v) / vv;
        let cancels = m.iter().zip(v).all(|(mi, vi)| {
            let scale = mi.abs().max((eps * vi).abs());
            (mi + eps * vi).abs() <= CANCELLATION_REL * scale
        });
        if cancels {
            out.push(eps);
        }
    };
    for (mc, nc) in mu.cells.iter().zip(&nu.cells) {
        push_root(&mc.density, &nc.density);
    }
    let zero = vec![0.0; mu.dim];
    for site in mu.atom_sites(nu) {
        let m = mu.atom(site).map(|a| a.mass.as_slice()).unwrap_or(&zero);
        let v = nu.atom(site).map(|a| a.mass.as_slice()).unwrap_or(&zero);
        push_root(m, v);
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= CANCELLATION_REL * a.abs().max(b.abs()));
    Ok(out)
}

/// Polar vector of a mass, extended by zero off the support.
fn polar(mass: &[f64], cut: f64) -> Vec<f64> {
    if is_zero(mass, cut) {
        vec![0.0; mass.len()]
    } else {
        let r = norm(mass);
        mass.iter().map(|v| v / r).collect()
    }
}

/// Largest pointwise defect of the identity
///
/// `(N - N').(mu - mu') = (1 - N.N')(|mu| + |mu'|) = |N - N'|^2 (|mu| + |mu'|) / (chi_E + chi_E')`
///
/// over all cells and atoms, where `N`, `N'` are the polar vectors extended by
/// zero off the supports, `E'` is the support of `mu'` and `E` is the part of
/// `E'` charged by `mu` together with the complement of `E'`.
pub fn structural_identity_residual(mu: &VectorMeasure, mu2: &VectorMeasure) -> Result<f64> {
    mu.check_compatible(mu2)?;
    let (c1, a1) = mu.thresholds();
    let (c2, a2) = mu2.thresholds();
    let point = |m: &[f64], m2: &[f64], cut: f64, cut2: f64| -> f64 {
        let n = polar(m, cut);
        let n2 = polar(m2, cut2);
        let (r, r2) = (if is_zero(m, cut) { 0.0 } else { norm(m) }, if is_zero(m2, cut2) { 0.0 } else { norm(m2) });
        let dn: Vec<f64> = n.iter().zip(&n2).map(|(x, y)| x - y).collect();
        let dm: Vec<f64> = m.iter().zip(m2).map(|(x, y)| x - y).collect();
        let lhs = dot(&dn, &dm);
        let middle = (1.0 - dot(&n, &n2)) * (r + r2);
        let in_e_prime = r2 > 0.0;
        let in_e = !in_e_prime || r > 0.0;
        let chi = f64::from(u8::from(in_e)) + f64::from(u8::from(in_e_prime));
        let rhs = dot(&dn, &dn) * (r + r2) / chi;
        (lhs - middle).abs().max((lhs - rhs).abs())
    };
    let mut worst: f64 = 0.0;
    for k in 0..mu.cells.len() {
        worst = worst.max(point(&mu.mass_at(Site::Cell(k)), &mu2.mass_at(Site::Cell(k)), c1 * mu.cells[k].weight, c2 * mu.cells[k].weight));
    }
    for site in mu.atom_sites(mu2) {
        worst = worst.max(point(&mu.mass_at(Site::Atom(site)), &mu2.mass_at(Site::Atom(site)), a1, a2));
    }
    Ok(worst)
}

/// Second derivative entry of a [`VariationReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondVariation {
    Value(f64),
    UndefinedAtSingular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub f_value: f64,
    pub fprime_minus: f64,
    pub fprime_plus: f64,
    pub fsecond: SecondVariation,
    pub epsilon: f64,
    pub is_regular: bool,
}

/// Value, one-sided slopes and (at regular `eps`) second derivative of
/// `F(eps) = |mu + eps nu|(X)`.
pub fn variation_report(mu: &VectorMeasure, nu: &VectorMeasure, eps: f64) -> Result<VariationReport> {
    let mu_eps = mu.add_scaled(nu, eps)?;
    let rn = decompose(nu, &mu_eps)?;
    let (regular, singular) = first_variation_parts(&rn);
    let is_regular = singular == 0.0;
    Ok(VariationReport {
        f_value: total_variation(&mu_eps),
        fprime_minus: regular - singular,
        fprime_plus: regular + singular,
        fsecond: if is_regular {
            SecondVariation::Value(second_variation_of(&rn))
        } else {
            SecondVariation::UndefinedAtSingular
        },
        epsilon: eps,
        is_regular,
    })
}
