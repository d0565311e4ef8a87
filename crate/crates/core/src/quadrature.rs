//! Gauss–Legendre rules on `[-1, 1]` and fully symmetric rules on the
//! reference triangle `{x, y >= 0, x + y <= 1}`.
//!
//! Triangle rules are conical (collapsed) Gauss products averaged over the
//! six permutations of the barycentric coordinates, so every rule is
//! invariant under the symmetry group of the triangle and keeps the
//! exactness of the underlying product rule. Rules are built once per
//! degree and cached for the lifetime of the process.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Highest exactness available on triangles.
pub const MAX_TRI_DEGREE: usize = 20;
/// Highest exactness available on edges.
pub const MAX_EDGE_DEGREE: usize = 40;

/// A quadrature rule. Triangle rules store barycentric points
/// `[l0, l1, l2]` (reference coordinates `x = l1`, `y = l2`) and weights
/// summing to `1/2`; edge rules store `s`-values in the first slot and
/// weights summing to `2`.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Edge parameters `s` of an edge rule.
    pub fn s_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p[0])
    }
}

/// Gauss–Legendre nodes and weights with `n` points on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = ((4 * i + 3) as f64 * std::f64::consts::PI / (4.0 * nf + 2.0)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn build_edge_rule(degree: usize) -> QuadRule {
    let n = (degree + 1).div_ceil(2).max(1);
    let (s, w) = gauss_legendre(n);
    QuadRule {
        points: s.into_iter().map(|s| [s, 0.0, 0.0]).collect(),
        weights: w,
        exactness_degree: 2 * n - 1,
    }
}

fn build_tri_rule(degree: usize) -> QuadRule {
    // x = u, y = v (1 - u) with Jacobian (1 - u): degree + 1 in u, degree in v.
    let nu = (degree + 2).div_ceil(2).max(1);
    let nv = (degree + 1).div_ceil(2).max(1);
    let (gu, wu) = gauss_legendre(nu);
    let (gv, wv) = gauss_legendre(nv);
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut points = Vec::with_capacity(6 * nu * nv);
    let mut weights = Vec::with_capacity(6 * nu * nv);
    for (a, &su) in gu.iter().enumerate() {
        let u = 0.5 * (su + 1.0);
        for (b, &sv) in gv.iter().enumerate() {
            let v = 0.5 * (sv + 1.0);
            let x = u;
            let y = v * (1.0 - u);
            let bary = [1.0 - x - y, x, y];
            let w = 0.25 * wu[a] * wv[b] * (1.0 - u) / 6.0;
            for p in PERMS {
                points.push([bary[p[0]], bary[p[1]], bary[p[2]]]);
                weights.push(w);
            }
        }
    }
    QuadRule {
        points,
        weights,
        exactness_degree: degree,
    }
}

static TRI_RULES: OnceLock<Vec<QuadRule>> = OnceLock::new();
static EDGE_RULES: OnceLock<Vec<QuadRule>> = OnceLock::new();

/// Symmetric triangle rule integrating every polynomial of total degree
/// `required_degree` exactly on the reference triangle.
pub fn make_tri_rule(required_degree: usize) -> Result<&'static QuadRule> {
    if required_degree > MAX_TRI_DEGREE {
        return Err(Error::UnsupportedQuadrature(required_degree));
    }
    let rules = TRI_RULES.get_or_init(|| (0..=MAX_TRI_DEGREE).map(build_tri_rule).collect());
    Ok(&rules[required_degree])
}

/// Gauss–Legendre rule with `ceil((required_degree + 1) / 2)` points.
pub fn make_edge_rule(required_degree: usize) -> Result<&'static QuadRule> {
    if required_degree > MAX_EDGE_DEGREE {
        return Err(Error::UnsupportedQuadrature(required_degree));
    }
    let rules = EDGE_RULES.get_or_init(|| (0..=MAX_EDGE_DEGREE).map(build_edge_rule).collect());
    Ok(&rules[required_degree])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    fn tri_monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn tri_integrate(rule: &QuadRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * f(p[1], p[2]))
            .sum()
    }

    #[test]
    fn degree_one_rule_measures_reference_area() {
        let rule = make_tri_rule(1).unwrap();
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 0.5).abs() < 1e-15);
        assert!((tri_integrate(rule, |x, _| x) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn x2_y3_needs_degree_five() {
        let exact = tri_monomial_exact(2, 3);
        for d in 5..=MAX_TRI_DEGREE {
            let rule = make_tri_rule(d).unwrap();
            let got = tri_integrate(rule, |x, y| x * x * y * y * y);
            assert!((got - exact).abs() <= 1e-13 * exact, "d={d}: {got} vs {exact}");
        }
    }

    #[test]
    fn every_triangle_rule_is_exact_to_its_degree() {
        for d in 0..=MAX_TRI_DEGREE {
            let rule = make_tri_rule(d).unwrap();
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let exact = tri_monomial_exact(a, b);
                    let got = tri_integrate(rule, |x, y| x.powi(a as i32) * y.powi(b as i32));
                    assert!(
                        (got - exact).abs() <= 1e-12 * exact.max(1.0),
                        "degree {d}, x^{a} y^{b}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn triangle_rules_are_permutation_symmetric() {
        let rule = make_tri_rule(7).unwrap();
        // Each orbit of six consecutive points shares one weight.
        for chunk in rule.weights.chunks(6) {
            assert!(chunk.iter().all(|w| *w == chunk[0]));
        }
        for p in &rule.points {
            assert!((p[0] + p[1] + p[2] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_rules() {
        let r1 = make_edge_rule(1).unwrap();
        assert_eq!(r1.len(), 1);
        assert!(r1.points[0][0].abs() < 1e-16 && (r1.weights[0] - 2.0).abs() < 1e-15);

        let r2 = make_edge_rule(3).unwrap();
        assert_eq!(r2.len(), 2);
        let s2: f64 = r2.s_values().zip(&r2.weights).map(|(s, w)| w * s * s).sum();
        assert!((s2 - 2.0 / 3.0).abs() < 1e-15);

        let r4 = make_edge_rule(7).unwrap();
        assert_eq!(r4.len(), 4);
        let s6: f64 = r4.s_values().zip(&r4.weights).map(|(s, w)| w * s.powi(6)).sum();
        assert!((s6 - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn edge_rules_exact_to_degree() {
        for d in 0..=MAX_EDGE_DEGREE {
            let rule = make_edge_rule(d).unwrap();
            assert!(rule.exactness_degree >= d);
            for p in 0..=d as i32 {
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                let got: f64 = rule.s_values().zip(&rule.weights).map(|(s, w)| w * s.powi(p)).sum();
                assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "d={d} p={p}");
            }
        }
    }

    #[test]
    fn unsupported_degrees_are_rejected() {
        assert!(make_tri_rule(21).is_err());
        assert!(make_edge_rule(41).is_err());
    }
}
