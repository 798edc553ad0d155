//! Run configurations and the fields they describe.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use evalexpr::{build_operator_tree, ContextWithMutableVariables, HashMapContext, Node, Value};
use parea::functional::{EnergySpec, Weight};
use parea::grid::{GridDomain, ScalarField};
use parea::measure::VectorMeasure;
use parea::geometry::DensityKind;
use parea::solver::SolverConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 12345;

/// Reads and validates a JSON config. Relative paths inside it are resolved
/// against the config's directory.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf)> {
    let file = File::open(path).with_context(|| format!("opening config {}", path.display()))?;
    let cfg = serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing config {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    PArea,
    LeastGradient,
}

/// `F` by preset and a constant `H`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub preset: Preset,
    pub h: f64,
}

impl EnergyConfig {
    pub fn spec(&self) -> Result<EnergySpec> {
        if !self.h.is_finite() {
            bail!("energy.h must be finite");
        }
        let base = match self.preset {
            Preset::PArea => EnergySpec::p_area(),
            Preset::LeastGradient => EnergySpec::least_gradient(),
        };
        Ok(base.with_h(Weight::Constant(self.h)))
    }
}

/// A nodal field given by an expression in `x, y` (aliases `eta, tau`) or
/// by an `i,j,x,y,value` CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Expr(String),
    Csv(PathBuf),
}

impl FieldSource {
    pub fn load(&self, grid: GridDomain, base: &Path) -> Result<ScalarField> {
        match self {
            Self::Expr(text) => {
                let f = Expression::parse(text)?;
                let values = (0..grid.node_count())
                    .map(|k| {
                        let (x, y) = grid.node_xy(k);
                        f.eval(x, y)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(ScalarField::new(grid, values)?)
            }
            Self::Csv(path) => {
                let path = base.join(path);
                let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                ScalarField::read_csv(grid, BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
            }
        }
    }
}

const VARIABLES: [&str; 5] = ["x", "y", "eta", "tau", "pi"];

/// A compiled scalar expression of the plane coordinates.
pub struct Expression {
    text: String,
    tree: Node,
}

impl Expression {
    pub fn parse(text: &str) -> Result<Self> {
        let tree = build_operator_tree(text).with_context(|| format!("parsing expression `{text}`"))?;
        if let Some(v) = tree.iter_variable_identifiers().find(|v| !VARIABLES.contains(v)) {
            bail!("unknown variable `{v}` in `{text}` (expected one of {VARIABLES:?})");
        }
        Ok(Self { text: text.to_string(), tree })
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let mut ctx = HashMapContext::new();
        for (name, v) in [("x", x), ("y", y), ("eta", x), ("tau", y), ("pi", std::f64::consts::PI)] {
            ctx.set_value(name.into(), Value::Float(v))?;
        }
        let v = self.tree.eval_number_with_context(&ctx).with_context(|| format!("evaluating `{}`", self.text))?;
        if !v.is_finite() {
            bail!("`{}` is not finite at ({x}, {y})", self.text);
        }
        Ok(v)
    }
}

fn validated(grid: GridDomain) -> Result<GridDomain> {
    grid.validate()?;
    Ok(grid)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub domain: GridDomain,
    #[serde(default)]
    pub energy: EnergyConfig,
    pub boundary: FieldSource,
    #[serde(default)]
    pub solver: SolverConfig,
    pub seed: Option<u64>,
}

impl SolveConfig {
    pub fn grid(&self) -> Result<GridDomain> {
        validated(self.domain)
    }
}

/// Direction of a variation: an expression or CSV that vanishes on the
/// boundary, or a seeded random field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionSource {
    Expr(String),
    Csv(PathBuf),
    Random,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaryConfig {
    pub domain: GridDomain,
    #[serde(default)]
    pub energy: EnergyConfig,
    pub field: FieldSource,
    pub direction: DirectionSource,
    #[serde(default = "yes")]
    pub integrand_csv: bool,
    pub seed: Option<u64>,
}

fn yes() -> bool {
    true
}

impl VaryConfig {
    pub fn grid(&self) -> Result<GridDomain> {
        validated(self.domain)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaConfig {
    pub domain: GridDomain,
    pub kind: DensityKind,
    pub field: FieldSource,
    pub seed: Option<u64>,
}

impl AreaConfig {
    pub fn grid(&self) -> Result<GridDomain> {
        validated(self.domain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    /// Mean curvature of a Euclidean graph.
    Euclidean,
    /// p-mean curvature of a graph in the Heisenberg group.
    Heisenberg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    pub domain: GridDomain,
    pub kind: CurvatureKind,
    pub field: FieldSource,
    pub seed: Option<u64>,
}

impl CurvatureConfig {
    pub fn grid(&self) -> Result<GridDomain> {
        validated(self.domain)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    pub mu: VectorMeasure,
    pub nu: VectorMeasure,
    #[serde(default)]
    pub epsilon: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Replacement thresholds by invariant name.
    pub thresholds: std::collections::BTreeMap<String, f64>,
    pub seed: Option<u64>,
}
