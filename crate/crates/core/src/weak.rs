//! Weak functions, L2 projections and the discrete weak Laplacian.
//!
//! A weak function on a triangle is a triplet `{s0, sb, sn}`: an interior
//! polynomial of degree `k`, and per edge a trace and a flux polynomial of
//! degree `k - 1` in the Legendre basis of the edge parameter. Flux blocks
//! are always stored against the global edge normal `n_e`; element-local
//! formulas multiply them by `tau = n_T . n_e`.
//!
//! Local dof layout on an element: `[s0 | sb(e0) sb(e1) sb(e2) | sn(e0) sn(e1) sn(e2)]`.

use faer::linalg::solvers::Llt;
use faer::prelude::*;
use faer::{Mat, Side};

use crate::basis::{dim_p, legendre_values, ElementBasis, EdgeBasis};
use crate::error::{Error, Result};
use crate::mesh::{outward_normal, Mesh2D, Point};
use crate::quadrature::{make_edge_rule, make_tri_rule, QuadRule, MAX_TRI_DEGREE};

/// Triangle rule exactness used when projecting non-polynomial fields.
pub const FIELD_QUAD_DEGREE: usize = 16;
/// Edge rule exactness used when projecting non-polynomial fields.
pub const FIELD_EDGE_QUAD_DEGREE: usize = 31;

#[derive(Debug, Clone, Copy)]
pub struct GeomEdge {
    pub edge: usize,
    pub tau: f64,
    pub length: f64,
    /// Endpoints in the direction of increasing edge parameter.
    pub ends: [Point; 2],
    /// Outward normal of the element.
    pub outward: Point,
}

impl GeomEdge {
    pub fn point(&self, s: f64) -> Point {
        let [p, q] = self.ends;
        [
            0.5 * (p[0] + q[0]) + 0.5 * s * (q[0] - p[0]),
            0.5 * (p[1] + q[1]) + 0.5 * s * (q[1] - p[1]),
        ]
    }

    /// `int_e f ds` using an edge rule.
    pub fn integrate(&self, rule: &QuadRule, f: impl Fn(f64, Point) -> f64) -> f64 {
        let sum: f64 = rule
            .s_values()
            .zip(&rule.weights)
            .map(|(s, w)| w * f(s, self.point(s)))
            .sum();
        0.5 * self.length * sum
    }
}

/// Geometry of one triangle as seen by the local formulas.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub element: usize,
    pub vertices: [Point; 3],
    pub centroid: Point,
    pub area: f64,
    /// `h_T`, the longest edge.
    pub diameter: f64,
    pub edges: [GeomEdge; 3],
}

impl ElementGeometry {
    pub fn from_mesh(mesh: &Mesh2D, t: usize) -> Self {
        let vertices = mesh.element_vertices(t);
        let edges = std::array::from_fn(|l| {
            let le = mesh.element_edges[t][l];
            let rec = &mesh.edges[le.edge];
            GeomEdge {
                edge: le.edge,
                tau: le.tau,
                length: rec.length,
                ends: rec.endpoints.map(|v| mesh.vertices[v]),
                outward: outward_normal(vertices[l], vertices[(l + 1) % 3]),
            }
        });
        Self::assemble(t, vertices, edges)
    }

    /// A free-standing counterclockwise triangle whose edge `l` runs from
    /// vertex `l` to vertex `l + 1` with `tau = +1`.
    pub fn from_triangle(vertices: [Point; 3]) -> Result<Self> {
        let area = 0.5
            * ((vertices[1][0] - vertices[0][0]) * (vertices[2][1] - vertices[0][1])
                - (vertices[2][0] - vertices[0][0]) * (vertices[1][1] - vertices[0][1]));
        if area <= 0.0 {
            return Err(Error::Geometry {
                element: 0,
                detail: format!("signed area {area:e} is not positive"),
            });
        }
        let edges = std::array::from_fn(|l| {
            let (a, b) = (vertices[l], vertices[(l + 1) % 3]);
            GeomEdge {
                edge: l,
                tau: 1.0,
                length: (b[0] - a[0]).hypot(b[1] - a[1]),
                ends: [a, b],
                outward: outward_normal(a, b),
            }
        });
        Ok(Self::assemble(0, vertices, edges))
    }

    fn assemble(element: usize, vertices: [Point; 3], edges: [GeomEdge; 3]) -> Self {
        let centroid = [
            (vertices[0][0] + vertices[1][0] + vertices[2][0]) / 3.0,
            (vertices[0][1] + vertices[1][1] + vertices[2][1]) / 3.0,
        ];
        let area = 0.5
            * ((vertices[1][0] - vertices[0][0]) * (vertices[2][1] - vertices[0][1])
                - (vertices[2][0] - vertices[0][0]) * (vertices[1][1] - vertices[0][1]));
        let diameter = edges.iter().map(|e| e.length).fold(0.0, f64::max);
        Self {
            element,
            vertices,
            centroid,
            area,
            diameter,
            edges,
        }
    }

    /// Same triangle with the stored normal of local edge `l` reversed.
    pub fn with_flipped_normal(&self, l: usize) -> Self {
        let mut g = self.clone();
        g.edges[l].tau = -g.edges[l].tau;
        g
    }

    pub fn point(&self, bary: &[f64; 3]) -> Point {
        let [a, b, c] = self.vertices;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// `int_T f dA` using a triangle rule.
    pub fn integrate(&self, rule: &QuadRule, f: impl Fn(Point) -> f64) -> f64 {
        let sum: f64 = rule.points.iter().zip(&rule.weights).map(|(p, w)| w * f(self.point(p))).sum();
        2.0 * self.area * sum
    }

    pub fn basis(&self, degree: usize) -> ElementBasis {
        ElementBasis::new(degree, self.centroid, self.diameter)
    }

    /// Gram matrix of the degree-`r` basis.
    pub fn gram(&self, r: usize) -> Result<Mat<f64>> {
        let basis = self.basis(r);
        let rule = make_tri_rule((2 * r).max(1))?;
        let n = basis.dim();
        let mut g = Mat::<f64>::zeros(n, n);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let v = basis.eval(self.point(p));
            let wt = 2.0 * self.area * w;
            for i in 0..n {
                for j in i..n {
                    g[(i, j)] += wt * v[i] * v[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        Ok(g)
    }

    pub fn gram_factor(&self, r: usize) -> Result<Llt<f64>> {
        self.gram(r)?.llt(Side::Lower).map_err(|e| Error::Geometry {
            element: self.element,
            detail: format!("Gram matrix of P_{r} is not positive definite ({e:?})"),
        })
    }
}

pub(crate) fn llt_solve(llt: &Llt<f64>, rhs: &[f64]) -> Vec<f64> {
    let b = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
    let x = llt.solve(&b);
    (0..rhs.len()).map(|i| x[i]).collect()
}

pub(crate) fn mat_vec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

/// Weak function on one element.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeakFunction {
    pub sigma0: Vec<f64>,
    pub sigma_b: [Vec<f64>; 3],
    pub sigma_n: [Vec<f64>; 3],
}

impl LocalWeakFunction {
    pub fn zeros(k: usize) -> Self {
        Self {
            sigma0: vec![0.0; dim_p(k)],
            sigma_b: std::array::from_fn(|_| vec![0.0; k]),
            sigma_n: std::array::from_fn(|_| vec![0.0; k]),
        }
    }

    pub fn degree(&self) -> usize {
        self.sigma_b[0].len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.sigma0.clone();
        for b in &self.sigma_b {
            v.extend_from_slice(b);
        }
        for n in &self.sigma_n {
            v.extend_from_slice(n);
        }
        v
    }

    pub fn from_vec(k: usize, v: &[f64]) -> Self {
        let n0 = dim_p(k);
        assert_eq!(v.len(), local_dim(k), "local weak vector has wrong length");
        Self {
            sigma0: v[..n0].to_vec(),
            sigma_b: std::array::from_fn(|l| v[n0 + l * k..n0 + (l + 1) * k].to_vec()),
            sigma_n: std::array::from_fn(|l| v[n0 + 3 * k + l * k..n0 + 3 * k + (l + 1) * k].to_vec()),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        let ok = self.sigma0.len() == dim_p(k)
            && self.sigma_b.iter().chain(&self.sigma_n).all(|b| b.len() == k);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "weak function blocks do not match degree {k}"
            )))
        }
    }
}

/// Number of local weak dofs on a triangle.
pub const fn local_dim(k: usize) -> usize {
    dim_p(k) + 6 * k
}

pub fn trace_slot(k: usize, l: usize) -> usize {
    dim_p(k) + l * k
}

pub fn flux_slot(k: usize, l: usize) -> usize {
    dim_p(k) + 3 * k + l * k
}

/// A weak function on the whole mesh with single-valued edge blocks.
/// Trace blocks exist on every edge; members of `W_h^0` carry zeros on
/// boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakCoeffs {
    pub degree: usize,
    pub interior: Vec<f64>,
    pub trace: Vec<f64>,
    pub flux: Vec<f64>,
}

impl WeakCoeffs {
    pub fn zeros(mesh: &Mesh2D, k: usize) -> Self {
        Self {
            degree: k,
            interior: vec![0.0; mesh.num_elements() * dim_p(k)],
            trace: vec![0.0; mesh.num_edges() * k],
            flux: vec![0.0; mesh.num_edges() * k],
        }
    }

    pub fn interior_block(&self, t: usize) -> &[f64] {
        let n0 = dim_p(self.degree);
        &self.interior[t * n0..(t + 1) * n0]
    }

    pub fn trace_block(&self, e: usize) -> &[f64] {
        &self.trace[e * self.degree..(e + 1) * self.degree]
    }

    pub fn flux_block(&self, e: usize) -> &[f64] {
        &self.flux[e * self.degree..(e + 1) * self.degree]
    }

    /// Restriction to element `t`.
    pub fn local(&self, mesh: &Mesh2D, t: usize) -> LocalWeakFunction {
        let les = &mesh.element_edges[t];
        LocalWeakFunction {
            sigma0: self.interior_block(t).to_vec(),
            sigma_b: std::array::from_fn(|l| self.trace_block(les[l].edge).to_vec()),
            sigma_n: std::array::from_fn(|l| self.flux_block(les[l].edge).to_vec()),
        }
    }
}

/// L2 projection onto `P_degree(T)` using a triangle rule of exactness
/// `quad_degree` (raised to `2 * degree` if smaller).
pub fn project_element(
    f: impl Fn(Point) -> f64,
    degree: usize,
    geom: &ElementGeometry,
    quad_degree: usize,
) -> Result<Vec<f64>> {
    let llt = geom.gram_factor(degree)?;
    let basis = geom.basis(degree);
    let rule = make_tri_rule(quad_degree.max(2 * degree).min(MAX_TRI_DEGREE))?;
    let mut rhs = vec![0.0; basis.dim()];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let x = geom.point(p);
        let fx = f(x) * 2.0 * geom.area * w;
        for (r, v) in rhs.iter_mut().zip(basis.eval(x)) {
            *r += fx * v;
        }
    }
    Ok(llt_solve(&llt, &rhs))
}

/// Legendre coefficients of the L2 projection onto `P_{len-1}` of a
/// function of the edge parameter `s in [-1, 1]`.
pub fn project_edge(f: impl Fn(f64) -> f64, len: usize, quad_degree: usize) -> Result<Vec<f64>> {
    let rule = make_edge_rule(quad_degree.max(2 * len))?;
    let mut c = vec![0.0; len];
    for (s, w) in rule.s_values().zip(&rule.weights) {
        let fs = f(s);
        for (i, l) in legendre_values(len, s).into_iter().enumerate() {
            c[i] += w * fs * l;
        }
    }
    for (i, ci) in c.iter_mut().enumerate() {
        *ci *= (2 * i + 1) as f64 / 2.0;
    }
    Ok(c)
}

/// Precomputed local operators of one element for degree `k`.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    pub geom: ElementGeometry,
    pub k: usize,
    /// Gram factor of `P_{k-1}(T)`.
    gram_low: Llt<f64>,
    gram_low_mat: Mat<f64>,
    gram_high_mat: Mat<f64>,
    /// Per edge: Legendre coefficients of `Q_b s0` as a `k x dim P_k` map.
    pub trace_of_interior: [Mat<f64>; 3],
    /// Per edge: Legendre coefficients of `grad s0 . n_T`.
    pub normal_derivative: [Mat<f64>; 3],
    /// Right side of the weak Laplacian: `dim P_{k-1} x local_dim(k)`.
    pub weak_laplacian_rhs: Mat<f64>,
}

impl ElementKernel {
    pub fn new(geom: ElementGeometry, k: usize) -> Result<Self> {
        crate::basis::check_degree(k)?;
        let n0 = dim_p(k);
        let n1 = dim_p(k - 1);
        let nloc = local_dim(k);
        let high = geom.basis(k);
        let low = geom.basis(k - 1);
        let gram_low_mat = geom.gram(k - 1)?;
        let gram_low = gram_low_mat.llt(Side::Lower).map_err(|e| Error::Geometry {
            element: geom.element,
            detail: format!("Gram matrix is not positive definite ({e:?})"),
        })?;
        let gram_high_mat = geom.gram(k)?;
        let edge_rule = make_edge_rule(2 * k + 1)?;
        let tri_rule = make_tri_rule(2 * k + 2)?;
        let edge_basis = EdgeBasis { len: k };

        let mut trace_of_interior: [Mat<f64>; 3] = std::array::from_fn(|_| Mat::zeros(k, n0));
        let mut normal_derivative: [Mat<f64>; 3] = std::array::from_fn(|_| Mat::zeros(k, n0));
        let mut d = Mat::<f64>::zeros(n1, nloc);

        for (p, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
            let x = geom.point(p);
            let wt = 2.0 * geom.area * w;
            let vh = high.eval(x);
            let lap_low = low.eval_laplacian(x);
            for i in 0..n1 {
                if lap_low[i] == 0.0 {
                    continue;
                }
                for j in 0..n0 {
                    d[(i, j)] += wt * vh[j] * lap_low[i];
                }
            }
        }

        for (l, ge) in geom.edges.iter().enumerate() {
            let n = ge.outward;
            for (s, w) in edge_rule.s_values().zip(&edge_rule.weights) {
                let x = ge.point(s);
                let leg = edge_basis.eval(s);
                let vh = high.eval(x);
                let gh = high.eval_grad(x);
                let vl = low.eval(x);
                let gl = low.eval_grad(x);
                let half = 0.5 * ge.length * w;
                for c in 0..k {
                    let proj = (2 * c + 1) as f64 / 2.0 * w * leg[c];
                    for j in 0..n0 {
                        trace_of_interior[l][(c, j)] += proj * vh[j];
                        normal_derivative[l][(c, j)] += proj * (gh[j][0] * n[0] + gh[j][1] * n[1]);
                    }
                    for i in 0..n1 {
                        let dn = gl[i][0] * n[0] + gl[i][1] * n[1];
                        d[(i, trace_slot(k, l) + c)] -= half * leg[c] * dn;
                        d[(i, flux_slot(k, l) + c)] += ge.tau * half * leg[c] * vl[i];
                    }
                }
            }
        }

        Ok(Self {
            geom,
            k,
            gram_low,
            gram_low_mat,
            gram_high_mat,
            trace_of_interior,
            normal_derivative,
            weak_laplacian_rhs: d,
        })
    }

    pub fn from_mesh(mesh: &Mesh2D, t: usize, k: usize) -> Result<Self> {
        Self::new(ElementGeometry::from_mesh(mesh, t), k)
    }

    /// Mass matrix of `P_{k-1}(T)`.
    pub fn gram_low(&self) -> &Mat<f64> {
        &self.gram_low_mat
    }

    /// Mass matrix of `P_k(T)`.
    pub fn gram_high(&self) -> &Mat<f64> {
        &self.gram_high_mat
    }

    /// Coefficients of `Delta_w sigma` in `P_{k-1}(T)`.
    pub fn weak_laplacian(&self, sigma: &LocalWeakFunction) -> Result<Vec<f64>> {
        sigma.check(self.k)?;
        Ok(self.weak_laplacian_vec(&sigma.to_vec()))
    }

    pub(crate) fn weak_laplacian_vec(&self, local: &[f64]) -> Vec<f64> {
        llt_solve(&self.gram_low, &mat_vec(&self.weak_laplacian_rhs, local))
    }

    /// Solve with the `P_{k-1}` Gram matrix.
    pub fn solve_gram_low(&self, rhs: &[f64]) -> Vec<f64> {
        llt_solve(&self.gram_low, rhs)
    }
}

/// `Delta_w sigma` on element `geom` for degree `k = sigma.degree()`.
pub fn weak_laplacian(sigma: &LocalWeakFunction, geom: &ElementGeometry) -> Result<Vec<f64>> {
    ElementKernel::new(geom.clone(), sigma.degree())?.weak_laplacian(sigma)
}

/// `Q_h w = {Q_0 w, Q_b w, Q_b(grad w . n_e)}` on a single element.
pub fn interpolate_local(
    w: impl Fn(Point) -> f64,
    grad: impl Fn(Point) -> [f64; 2],
    geom: &ElementGeometry,
    k: usize,
) -> Result<LocalWeakFunction> {
    let sigma0 = project_element(&w, k, geom, FIELD_QUAD_DEGREE)?;
    let sigma_b = std::array::from_fn(|l| {
        let ge = &geom.edges[l];
        project_edge(|s| w(ge.point(s)), k, FIELD_EDGE_QUAD_DEGREE).expect("edge rule")
    });
    let sigma_n = std::array::from_fn(|l| {
        let ge = &geom.edges[l];
        let n = [ge.tau * ge.outward[0], ge.tau * ge.outward[1]];
        project_edge(
            |s| {
                let g = grad(ge.point(s));
                g[0] * n[0] + g[1] * n[1]
            },
            k,
            FIELD_EDGE_QUAD_DEGREE,
        )
        .expect("edge rule")
    });
    Ok(LocalWeakFunction { sigma0, sigma_b, sigma_n })
}

/// `Q_h w` on the whole mesh; flux blocks use the global normals.
pub fn interpolate_qh(
    w: impl Fn(Point) -> f64 + Sync,
    grad: impl Fn(Point) -> [f64; 2] + Sync,
    mesh: &Mesh2D,
    k: usize,
) -> Result<WeakCoeffs> {
    use rayon::prelude::*;
    crate::basis::check_degree(k)?;
    let n0 = dim_p(k);
    let interior: Vec<Vec<f64>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|t| project_element(&w, k, &ElementGeometry::from_mesh(mesh, t), FIELD_QUAD_DEGREE))
        .collect::<Result<_>>()?;
    let edges: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.num_edges())
        .into_par_iter()
        .map(|e| {
            let n = mesh.edges[e].global_normal;
            let tr = project_edge(|s| w(mesh.edge_point(e, s)), k, FIELD_EDGE_QUAD_DEGREE)?;
            let fl = project_edge(
                |s| {
                    let g = grad(mesh.edge_point(e, s));
                    g[0] * n[0] + g[1] * n[1]
                },
                k,
                FIELD_EDGE_QUAD_DEGREE,
            )?;
            Ok((tr, fl))
        })
        .collect::<Result<_>>()?;
    let mut out = WeakCoeffs::zeros(mesh, k);
    for (t, block) in interior.iter().enumerate() {
        out.interior[t * n0..(t + 1) * n0].copy_from_slice(block);
    }
    for (e, (tr, fl)) in edges.iter().enumerate() {
        out.trace[e * k..(e + 1) * k].copy_from_slice(tr);
        out.flux[e * k..(e + 1) * k].copy_from_slice(fl);
    }
    Ok(out)
}
