//! Scaled monomial bases on triangles and Legendre bases on edges.

use crate::mesh::Point;

/// Supported scheme degrees `k`.
pub const SUPPORTED_DEGREES: &str = "1, 2, 3";

pub fn check_degree(k: usize) -> crate::Result<()> {
    if (1..=3).contains(&k) {
        Ok(())
    } else {
        Err(crate::Error::UnsupportedDegree {
            degree: k,
            supported: SUPPORTED_DEGREES,
        })
    }
}

/// Dimension of `P_r` in two variables.
pub const fn dim_p(r: usize) -> usize {
    (r + 1) * (r + 2) / 2
}

/// Exponents `(a, b)` with `a + b <= degree`, ordered by total degree and
/// then by `a` descending.
pub fn monomial_exponents(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim_p(degree));
    for d in 0..=degree {
        for a in (0..=d).rev() {
            out.push((a, d - a));
        }
    }
    out
}

/// `((x - xc) / h)^a ((y - yc) / h)^b` for all `a + b <= degree`.
///
/// Evaluation outside the element is permitted (plain polynomial
/// extrapolation).
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub degree: usize,
    pub centroid: Point,
    pub scale: f64,
    exponents: Vec<(usize, usize)>,
}

impl ElementBasis {
    pub fn new(degree: usize, centroid: Point, scale: f64) -> Self {
        Self {
            degree,
            centroid,
            scale,
            exponents: monomial_exponents(degree),
        }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    fn local(&self, p: Point) -> (f64, f64) {
        ((p[0] - self.centroid[0]) / self.scale, (p[1] - self.centroid[1]) / self.scale)
    }

    pub fn eval(&self, p: Point) -> Vec<f64> {
        let (x, y) = self.local(p);
        self.exponents.iter().map(|&(a, b)| powi(x, a) * powi(y, b)).collect()
    }

    /// Gradients, including the `1/h` chain factor.
    pub fn eval_grad(&self, p: Point) -> Vec<[f64; 2]> {
        let (x, y) = self.local(p);
        let inv = 1.0 / self.scale;
        self.exponents
            .iter()
            .map(|&(a, b)| {
                let dx = if a > 0 { a as f64 * powi(x, a - 1) * powi(y, b) } else { 0.0 };
                let dy = if b > 0 { b as f64 * powi(x, a) * powi(y, b - 1) } else { 0.0 };
                [dx * inv, dy * inv]
            })
            .collect()
    }

    pub fn eval_laplacian(&self, p: Point) -> Vec<f64> {
        let (x, y) = self.local(p);
        let inv2 = 1.0 / (self.scale * self.scale);
        self.exponents
            .iter()
            .map(|&(a, b)| {
                let xx = if a > 1 { (a * (a - 1)) as f64 * powi(x, a - 2) * powi(y, b) } else { 0.0 };
                let yy = if b > 1 { (b * (b - 1)) as f64 * powi(x, a) * powi(y, b - 2) } else { 0.0 };
                (xx + yy) * inv2
            })
            .collect()
    }
}

fn powi(x: f64, n: usize) -> f64 {
    x.powi(n as i32)
}

/// Legendre polynomials `L_0 .. L_{n-1}` in the edge parameter.
#[derive(Debug, Clone, Copy)]
pub struct EdgeBasis {
    /// Number of functions, i.e. polynomial degree + 1.
    pub len: usize,
}

impl EdgeBasis {
    pub fn of_degree(degree: usize) -> Self {
        Self { len: degree + 1 }
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        legendre_values(self.len, s)
    }

    /// Diagonal of the mass matrix on an edge of length `length`.
    pub fn mass_diagonal(&self, length: f64) -> Vec<f64> {
        (0..self.len).map(|i| length / (2 * i + 1) as f64).collect()
    }
}

pub fn legendre_values(len: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if len > 0 {
        out.push(1.0);
    }
    if len > 1 {
        out.push(s);
    }
    for j in 2..len {
        let jf = j as f64;
        let v = ((2.0 * jf - 1.0) * s * out[j - 1] - (jf - 1.0) * out[j - 2]) / jf;
        out.push(v);
    }
    out
}
