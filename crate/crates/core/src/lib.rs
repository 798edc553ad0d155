//! Generalized area functionals `F_H(u) = int |grad u + F| + H u` on planar
//! grids, their extension to vector-valued measures with exact one-sided
//! first and second variations, a regularize-and-continue minimizer, and the
//! unified sub-Riemannian area element and mean curvature formulas.

pub mod error;
pub mod functional;
pub mod geometry;
pub mod grid;
pub mod measure;
pub mod solver;
pub mod variation;
pub mod sum;

pub use error::{Error, Result};
