//! Primal-dual weak Galerkin finite elements for the Poisson equation
//! `Delta u = f` in a polygon, `u = g` on its boundary, with a
//! domain-decomposition solver based on Robin data exchange.

pub mod basis;
pub mod checks;
pub mod dd;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod partition;
pub mod pdwg;
pub mod quadrature;
pub mod verification;
pub mod weak;

pub use error::{Error, Result};
