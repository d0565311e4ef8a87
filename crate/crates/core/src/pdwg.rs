//! Assembly and monolithic solution of the primal-dual weak Galerkin
//! saddle-point system
//!
//! ```text
//! s(lambda_h, sigma) + b(u_h, sigma) = (f, sigma_0) + <g, sigma_n>_boundary   for all sigma in W_h^0
//! b(v, lambda_h)                     = 0                                      for all v in M_h
//! ```
//!
//! with `b(v, sigma) = sum_T (v, Delta_w sigma)_T` and the boundary
//! least-squares stabilizer `s`.

use faer::Mat;
use rayon::prelude::*;

use crate::basis::{check_degree, dim_p, legendre_values};
use crate::error::Result;
use crate::linalg::{CsrMatrix, SparseBuilder, SparseLu};
use crate::mesh::{Mesh2D, Point};
use crate::quadrature::{make_edge_rule, make_tri_rule};
use crate::weak::{flux_slot, local_dim, mat_vec, trace_slot, ElementKernel, WeakCoeffs};

/// Residual bound accepted from the direct solver.
pub const SOLVE_RESIDUAL_LIMIT: f64 = 1e-10;

/// Triangle rule exactness for load vectors with non-polynomial data.
pub fn load_quad_degree(k: usize) -> usize {
    2 * k + 4
}

/// Stabilizer matrix of one element over its local weak dofs (flux dofs in
/// global-normal storage):
///
/// `s_T = h^-3 <Q_b l0 - lb, Q_b s0 - sb> + h^-1 <grad l0 . n - ln, grad s0 . n - sn>`.
pub fn local_stabilizer(kernel: &ElementKernel) -> Mat<f64> {
    let k = kernel.k;
    let n0 = dim_p(k);
    let nloc = local_dim(k);
    let h = kernel.geom.diameter;
    let mut s = Mat::<f64>::zeros(nloc, nloc);
    for (l, ge) in kernel.geom.edges.iter().enumerate() {
        let mass: Vec<f64> = (0..k).map(|c| ge.length / (2 * c + 1) as f64).collect();
        for (weight, map, slot, sign) in [
            (h.powi(-3), &kernel.trace_of_interior[l], trace_slot(k, l), 1.0),
            (h.powi(-1), &kernel.normal_derivative[l], flux_slot(k, l), ge.tau),
        ] {
            // Row c of the difference operator: map[c, :] on s0, -sign on the edge dof.
            let row = |c: usize| -> Vec<(usize, f64)> {
                let mut r: Vec<(usize, f64)> = (0..n0).map(|j| (j, map[(c, j)])).collect();
                r.push((slot + c, -sign));
                r
            };
            for c in 0..k {
                let rc = row(c);
                let wm = weight * mass[c];
                for &(a, va) in &rc {
                    for &(b, vb) in &rc {
                        if b >= a {
                            s[(a, b)] += wm * va * vb;
                        }
                    }
                }
            }
        }
    }
    for a in 0..nloc {
        for b in 0..a {
            s[(a, b)] = s[(b, a)];
        }
    }
    s
}

/// `(phi_i, Delta_w chi_j)_T` for `phi_i` in `P_{k-1}(T)` and local weak dofs `chi_j`.
pub fn local_b(kernel: &ElementKernel) -> Mat<f64> {
    kernel.weak_laplacian_rhs.clone()
}

/// Element kernels and stabilizers of a mesh for one degree `k`.
#[derive(Debug)]
pub struct Discretization<'m> {
    pub mesh: &'m Mesh2D,
    pub k: usize,
    pub kernels: Vec<ElementKernel>,
    pub stabilizers: Vec<Mat<f64>>,
}

impl<'m> Discretization<'m> {
    pub fn new(mesh: &'m Mesh2D, k: usize) -> Result<Self> {
        check_degree(k)?;
        let kernels: Vec<ElementKernel> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|t| ElementKernel::from_mesh(mesh, t, k))
            .collect::<Result<_>>()?;
        let stabilizers = kernels.par_iter().map(local_stabilizer).collect();
        Ok(Self {
            mesh,
            k,
            kernels,
            stabilizers,
        })
    }

    /// `sum_T s_T(lambda, lambda)` over all elements.
    pub fn stabilizer_energy(&self, lambda: &WeakCoeffs) -> f64 {
        (0..self.mesh.num_elements())
            .map(|t| {
                let x = lambda.local(self.mesh, t).to_vec();
                quad_form(&self.stabilizers[t], &x)
            })
            .sum()
    }

    /// `max_T ||Delta_w lambda||_T`.
    pub fn weak_harmonicity_defect(&self, lambda: &WeakCoeffs) -> f64 {
        (0..self.mesh.num_elements())
            .map(|t| {
                let kern = &self.kernels[t];
                let lap = kern.weak_laplacian_vec(&lambda.local(self.mesh, t).to_vec());
                quad_form(kern.gram_low(), &lap).max(0.0).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn quad_form(m: &Mat<f64>, x: &[f64]) -> f64 {
    mat_vec(m, x).iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Layout of the unknowns of a (sub)domain problem:
/// `[all interior | all trace | all flux | all primal]`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub k: usize,
    pub elements: Vec<usize>,
    pub edges: Vec<usize>,
    element_slot: Vec<usize>,
    edge_slot: Vec<usize>,
    trace_offset: Vec<Option<usize>>,
    flux_offset: Vec<usize>,
    pub n_lambda: usize,
    pub n_primal: usize,
}

const NONE: usize = usize::MAX;

impl DofMap {
    /// Dofs of the elements `elements`; trace blocks of edges for which
    /// `eliminate_trace` holds are removed.
    pub fn new(mesh: &Mesh2D, k: usize, elements: &[usize], eliminate_trace: impl Fn(usize) -> bool) -> Self {
        let n0 = dim_p(k);
        let mut element_slot = vec![NONE; mesh.num_elements()];
        for (i, &t) in elements.iter().enumerate() {
            element_slot[t] = i;
        }
        let mut covered = vec![false; mesh.num_edges()];
        for &t in elements {
            for le in &mesh.element_edges[t] {
                covered[le.edge] = true;
            }
        }
        let edges: Vec<usize> = (0..mesh.num_edges()).filter(|&e| covered[e]).collect();
        let mut edge_slot = vec![NONE; mesh.num_edges()];
        for (i, &e) in edges.iter().enumerate() {
            edge_slot[e] = i;
        }
        let mut next = elements.len() * n0;
        let trace_offset = edges
            .iter()
            .map(|&e| {
                if eliminate_trace(e) {
                    None
                } else {
                    next += k;
                    Some(next - k)
                }
            })
            .collect();
        let flux_offset = edges
            .iter()
            .map(|_| {
                next += k;
                next - k
            })
            .collect();
        Self {
            k,
            elements: elements.to_vec(),
            edges,
            element_slot,
            edge_slot,
            trace_offset,
            flux_offset,
            n_lambda: next,
            n_primal: elements.len() * dim_p(k - 1),
        }
    }

    /// Whole mesh with boundary traces eliminated (`W_h^0 x M_h`).
    pub fn monolithic(mesh: &Mesh2D, k: usize) -> Self {
        let all: Vec<usize> = (0..mesh.num_elements()).collect();
        Self::new(mesh, k, &all, |e| mesh.edges[e].is_boundary)
    }

    pub fn len(&self) -> usize {
        self.n_lambda + self.n_primal
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_interior(&self) -> usize {
        self.elements.len() * dim_p(self.k)
    }

    pub fn n_trace(&self) -> usize {
        self.trace_offset.iter().flatten().count() * self.k
    }

    pub fn n_flux(&self) -> usize {
        self.edges.len() * self.k
    }

    pub fn contains_element(&self, t: usize) -> bool {
        self.element_slot[t] != NONE
    }

    pub fn interior_offset(&self, t: usize) -> usize {
        self.element_slot[t] * dim_p(self.k)
    }

    pub fn trace_offset(&self, e: usize) -> Option<usize> {
        self.trace_offset[self.edge_slot[e]]
    }

    pub fn flux_offset(&self, e: usize) -> usize {
        self.flux_offset[self.edge_slot[e]]
    }

    /// Offset in the full system vector of the primal block of element `t`.
    pub fn primal_offset(&self, t: usize) -> usize {
        self.n_lambda + self.element_slot[t] * dim_p(self.k - 1)
    }

    /// Global positions of the local weak dofs of element `t`; `None` for
    /// eliminated traces.
    pub fn element_lambda_dofs(&self, mesh: &Mesh2D, t: usize) -> Vec<Option<usize>> {
        let k = self.k;
        let n0 = dim_p(k);
        let base = self.interior_offset(t);
        let mut out: Vec<Option<usize>> = (0..n0).map(|i| Some(base + i)).collect();
        let les = &mesh.element_edges[t];
        for le in les {
            let off = self.trace_offset(le.edge);
            out.extend((0..k).map(|c| off.map(|o| o + c)));
        }
        for le in les {
            let off = self.flux_offset(le.edge);
            out.extend((0..k).map(|c| Some(off + c)));
        }
        out
    }

    /// Gathers the `lambda` part of a system vector into full-mesh weak
    /// coefficients (blocks outside this map stay zero).
    pub fn unpack_lambda(&self, mesh: &Mesh2D, x: &[f64]) -> WeakCoeffs {
        let k = self.k;
        let n0 = dim_p(k);
        let mut w = WeakCoeffs::zeros(mesh, k);
        for &t in &self.elements {
            let o = self.interior_offset(t);
            w.interior[t * n0..(t + 1) * n0].copy_from_slice(&x[o..o + n0]);
        }
        for &e in &self.edges {
            if let Some(o) = self.trace_offset(e) {
                w.trace[e * k..(e + 1) * k].copy_from_slice(&x[o..o + k]);
            }
            let o = self.flux_offset(e);
            w.flux[e * k..(e + 1) * k].copy_from_slice(&x[o..o + k]);
        }
        w
    }

    pub fn unpack_primal(&self, mesh: &Mesh2D, x: &[f64]) -> PrimalCoeffs {
        let n1 = dim_p(self.k - 1);
        let mut values = vec![0.0; mesh.num_elements() * n1];
        for &t in &self.elements {
            let o = self.primal_offset(t);
            values[t * n1..(t + 1) * n1].copy_from_slice(&x[o..o + n1]);
        }
        PrimalCoeffs { k: self.k, values }
    }
}

/// Element-wise `P_{k-1}` coefficients of `u_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalCoeffs {
    pub k: usize,
    pub values: Vec<f64>,
}

impl PrimalCoeffs {
    pub fn block(&self, t: usize) -> &[f64] {
        let n1 = dim_p(self.k - 1);
        &self.values[t * n1..(t + 1) * n1]
    }
}

/// Adds the stabilizer and `b` blocks of the elements in `dofs` to the
/// builders (`s` is `n_lambda x n_lambda`, `b` is `n_primal x n_lambda`).
pub(crate) fn scatter_operator(disc: &Discretization, dofs: &DofMap, s: &mut SparseBuilder, b: &mut SparseBuilder) {
    let n1 = dim_p(disc.k - 1);
    for &t in &dofs.elements {
        let map = dofs.element_lambda_dofs(disc.mesh, t);
        let st = &disc.stabilizers[t];
        for (a, ga) in map.iter().enumerate() {
            let Some(ga) = ga else { continue };
            for (c, gc) in map.iter().enumerate() {
                let Some(gc) = gc else { continue };
                let v = st[(a, c)];
                if v != 0.0 {
                    s.push(*ga, *gc, v);
                }
            }
        }
        let d = &disc.kernels[t].weak_laplacian_rhs;
        let prow = dofs.primal_offset(t) - dofs.n_lambda;
        for i in 0..n1 {
            for (c, gc) in map.iter().enumerate() {
                let Some(gc) = gc else { continue };
                let v = d[(i, c)];
                if v != 0.0 {
                    b.push(prow + i, *gc, v);
                }
            }
        }
    }
}

/// `(f, sigma_0)` on the elements of `dofs` plus `<g, sigma_n>` on the
/// boundary edges of the domain that carry flux dofs in `dofs`.
pub(crate) fn assemble_load(
    disc: &Discretization,
    dofs: &DofMap,
    f: &(impl Fn(Point) -> f64 + Sync),
    g: &(impl Fn(Point) -> f64 + Sync),
) -> Result<Vec<f64>> {
    let mesh = disc.mesh;
    let k = disc.k;
    let tri = make_tri_rule(load_quad_degree(k))?;
    let edge = make_edge_rule(2 * k + 4)?;
    let elem_loads: Vec<Vec<f64>> = dofs
        .elements
        .par_iter()
        .map(|&t| {
            let geom = &disc.kernels[t].geom;
            let basis = geom.basis(k);
            let mut out = vec![0.0; basis.dim()];
            for (p, w) in tri.points.iter().zip(&tri.weights) {
                let x = geom.point(p);
                let fx = f(x) * 2.0 * geom.area * w;
                for (o, v) in out.iter_mut().zip(basis.eval(x)) {
                    *o += fx * v;
                }
            }
            out
        })
        .collect();
    let mut rhs = vec![0.0; dofs.n_lambda];
    for (&t, load) in dofs.elements.iter().zip(&elem_loads) {
        let o = dofs.interior_offset(t);
        for (i, v) in load.iter().enumerate() {
            rhs[o + i] += v;
        }
    }
    for &e in &dofs.edges {
        if !mesh.edges[e].is_boundary {
            continue;
        }
        let len = mesh.edges[e].length;
        let o = dofs.flux_offset(e);
        for (s, w) in edge.s_values().zip(&edge.weights) {
            let gv = g(mesh.edge_point(e, s)) * 0.5 * len * w;
            for (c, l) in legendre_values(k, s).into_iter().enumerate() {
                rhs[o + c] += gv * l;
            }
        }
    }
    Ok(rhs)
}

/// The assembled saddle-point system over `W_h^0 x M_h`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    /// Stabilizer block over the `lambda` dofs.
    pub s: CsrMatrix,
    /// `b` block: rows are primal dofs, columns `lambda` dofs.
    pub b: CsrMatrix,
    pub rhs_lambda: Vec<f64>,
    pub rhs_u: Vec<f64>,
    pub dofs: DofMap,
}

impl SaddleSystem {
    pub fn matrix(&self) -> CsrMatrix {
        CsrMatrix::saddle(&self.s, &self.b)
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = self.rhs_lambda.clone();
        r.extend_from_slice(&self.rhs_u);
        r
    }
}

pub fn assemble(
    disc: &Discretization,
    f: impl Fn(Point) -> f64 + Sync,
    g: impl Fn(Point) -> f64 + Sync,
) -> Result<SaddleSystem> {
    let dofs = DofMap::monolithic(disc.mesh, disc.k);
    let mut s = SparseBuilder::new(dofs.n_lambda, dofs.n_lambda);
    let mut b = SparseBuilder::new(dofs.n_primal, dofs.n_lambda);
    scatter_operator(disc, &dofs, &mut s, &mut b);
    let rhs_lambda = assemble_load(disc, &dofs, &f, &g)?;
    Ok(SaddleSystem {
        s: s.build(),
        b: b.build(),
        rhs_lambda,
        rhs_u: vec![0.0; dofs.n_primal],
        dofs,
    })
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: PrimalCoeffs,
    pub lambda: WeakCoeffs,
}

pub fn solve_monolithic(mesh: &Mesh2D, system: &SaddleSystem) -> Result<Solution> {
    let d = &system.dofs;
    let lu = SparseLu::new(system.matrix(), format!(
        "PDWG saddle system ({} interior + {} trace + {} flux + {} primal dofs)",
        d.n_interior(),
        d.n_trace(),
        d.n_flux(),
        d.n_primal
    ))?;
    let x = lu.solve_checked(&system.rhs(), SOLVE_RESIDUAL_LIMIT)?;
    Ok(Solution {
        u: d.unpack_primal(mesh, &x),
        lambda: d.unpack_lambda(mesh, &x),
    })
}

/// Assemble and solve in one call.
pub fn solve(
    disc: &Discretization,
    f: impl Fn(Point) -> f64 + Sync,
    g: impl Fn(Point) -> f64 + Sync,
) -> Result<Solution> {
    let sys = assemble(disc, f, g)?;
    solve_monolithic(disc.mesh, &sys)
}

/// `||v||_{L2(Omega)}` for element-wise `P_{k-1}` coefficients.
pub fn primal_l2_norm(disc: &Discretization, u: &PrimalCoeffs) -> f64 {
    (0..disc.mesh.num_elements())
        .map(|t| quad_form(disc.kernels[t].gram_low(), u.block(t)))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// `||lambda_0||_{L2(Omega)}`.
pub fn interior_l2_norm(disc: &Discretization, w: &WeakCoeffs) -> f64 {
    (0..disc.mesh.num_elements())
        .map(|t| quad_form(disc.kernels[t].gram_high(), w.interior_block(t)))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;
    use crate::weak::{interpolate_local, interpolate_qh, project_element, ElementGeometry, LocalWeakFunction};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn stabilizer_vanishes_on_consistent_functions() {
        let g = ElementGeometry::from_triangle([[0.1, 0.0], [0.7, 0.2], [0.3, 0.5]]).unwrap();
        for k in 1..=3 {
            let kern = ElementKernel::new(g.clone(), k).unwrap();
            let st = local_stabilizer(&kern);
            // A polynomial of degree k with exact traces and normal derivatives.
            let w = |p: Point| 1.0 + p[0] - 2.0 * p[1] + if k >= 2 { p[0] * p[1] } else { 0.0 };
            let gw = |p: Point| [1.0 + if k >= 2 { p[1] } else { 0.0 }, -2.0 + if k >= 2 { p[0] } else { 0.0 }];
            let s = interpolate_local(w, gw, &g, k).unwrap();
            let val = quad_form(&st, &s.to_vec());
            assert!(val.abs() < 1e-10, "k={k}: {val}");
        }
    }

    #[test]
    fn stabilizer_of_single_trace() {
        let g = ElementGeometry::from_triangle([[0.0, 0.0], [1.0, 0.0], [0.2, 0.8]]).unwrap();
        let kern = ElementKernel::new(g.clone(), 2).unwrap();
        let st = local_stabilizer(&kern);
        let mut s = LocalWeakFunction::zeros(2);
        s.sigma_b[1][0] = 1.0;
        let expect = g.diameter.powi(-3) * g.edges[1].length;
        let got = quad_form(&st, &s.to_vec());
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn stabilizer_matches_term_by_term_quadrature() {
        // Oracle: evaluate both boundary integrals directly with a high-order rule.
        let g = ElementGeometry::from_triangle([[0.05, 0.1], [0.6, 0.0], [0.4, 0.45]]).unwrap();
        let mut seed = 7;
        for k in 1..=3 {
            let kern = ElementKernel::new(g.clone(), k).unwrap();
            let st = local_stabilizer(&kern);
            let v: Vec<f64> = (0..local_dim(k)).map(|_| lcg(&mut seed)).collect();
            let s = LocalWeakFunction::from_vec(k, &v);
            let basis = g.basis(k);
            let rule = make_edge_rule(30).unwrap();
            let mut oracle = 0.0;
            for (l, ge) in g.edges.iter().enumerate() {
                let qb: Vec<f64> = crate::weak::project_edge(
                    |t| basis.eval(ge.point(t)).iter().zip(&s.sigma0).map(|(a, b)| a * b).sum(),
                    k,
                    30,
                )
                .unwrap();
                oracle += g.diameter.powi(-3)
                    * ge.integrate(rule, |t, _| {
                        let leg = legendre_values(k, t);
                        (0..k).map(|c| (qb[c] - s.sigma_b[l][c]) * leg[c]).sum::<f64>().powi(2)
                    });
                oracle += g.diameter.powi(-1)
                    * ge.integrate(rule, |t, x| {
                        let grad = basis.eval_grad(x);
                        let dn: f64 = grad
                            .iter()
                            .zip(&s.sigma0)
                            .map(|(gr, c)| c * (gr[0] * ge.outward[0] + gr[1] * ge.outward[1]))
                            .sum();
                        let leg = legendre_values(k, t);
                        let sn: f64 = (0..k).map(|c| s.sigma_n[l][c] * leg[c]).sum();
                        (dn - ge.tau * sn).powi(2)
                    });
            }
            let got = quad_form(&st, &v);
            assert!((got - oracle).abs() < 1e-11 * oracle.max(1.0), "k={k}: {got} vs {oracle}");
        }
    }

    #[test]
    fn b_block_annihilates_consistent_constant_and_matches_composition() {
        let g = ElementGeometry::from_triangle([[0.0, 0.0], [0.5, 0.1], [0.1, 0.4]]).unwrap();
        let mut seed = 3;
        for k in 1..=3 {
            let kern = ElementKernel::new(g.clone(), k).unwrap();
            let b = local_b(&kern);
            let mut c = LocalWeakFunction::zeros(k);
            c.sigma0[0] = 1.0;
            for blk in &mut c.sigma_b {
                blk[0] = 1.0;
            }
            assert!(mat_vec(&b, &c.to_vec()).iter().all(|v| v.abs() < 1e-11));

            let v: Vec<f64> = (0..local_dim(k)).map(|_| lcg(&mut seed)).collect();
            let direct = mat_vec(&b, &v);
            let lap = kern.weak_laplacian_vec(&v);
            let composed = mat_vec(kern.gram_low(), &lap);
            for (a, bb) in direct.iter().zip(&composed) {
                assert!((a - bb).abs() < 1e-12 * a.abs().max(1.0));
            }
        }
        // Row sums against Q_h(x^2 + y^2) equal (phi_i, 4).
        let kern = ElementKernel::new(g.clone(), 2).unwrap();
        let s = interpolate_local(|p| p[0] * p[0] + p[1] * p[1], |p| [2.0 * p[0], 2.0 * p[1]], &g, 2).unwrap();
        let got = mat_vec(&local_b(&kern), &s.to_vec());
        let four = project_element(|_| 4.0, 1, &g, 4).unwrap();
        let expect = mat_vec(kern.gram_low(), &four);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn single_element_dof_counts() {
        let mesh = Mesh2D::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        for k in 1..=3 {
            let all = DofMap::new(&mesh, k, &[0], |_| false);
            assert_eq!(all.n_lambda, dim_p(k) + 6 * k);
            assert_eq!(all.n_primal, k * (k + 1) / 2);
            let mono = DofMap::monolithic(&mesh, k);
            assert_eq!(mono.n_lambda, dim_p(k) + 3 * k);
        }
    }

    #[test]
    fn homogeneous_data_gives_zero_rhs_and_psd_symmetric_stabilizer() {
        let mesh = build_uniform_mesh(3).unwrap();
        let disc = Discretization::new(&mesh, 2).unwrap();
        let sys = assemble(&disc, |_| 0.0, |_| 0.0).unwrap();
        assert!(sys.rhs().iter().all(|&v| v == 0.0));
        assert!(sys.s.is_symmetric());
        assert!(sys.matrix().is_symmetric());
        let mut seed = 11;
        for _ in 0..20 {
            let x: Vec<f64> = (0..sys.s.nrows).map(|_| lcg(&mut seed)).collect();
            let q = sys.s.quadratic_form(&x);
            let n2: f64 = x.iter().map(|v| v * v).sum();
            assert!(q >= -1e-12 * n2);
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = build_uniform_mesh(4).unwrap();
        for k in 1..=3 {
            let disc = Discretization::new(&mesh, k).unwrap();
            let sol = solve(&disc, |_| 0.0, |_| 0.0).unwrap();
            assert!(sol.u.values.iter().all(|v| v.abs() < 1e-10));
            assert!(sol.lambda.interior.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn linear_solution_is_reproduced_for_k2() {
        let mesh = build_uniform_mesh(4).unwrap();
        let disc = Discretization::new(&mesh, 2).unwrap();
        let sol = solve(&disc, |_| 0.0, |p| p[0]).unwrap();
        for t in 0..mesh.num_elements() {
            let expect = project_element(|p| p[0], 1, &disc.kernels[t].geom, 4).unwrap();
            for (a, b) in sol.u.block(t).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-9, "t={t}: {a} vs {b}");
            }
        }
        assert!(disc.stabilizer_energy(&sol.lambda).sqrt() < 1e-9);
        assert!(sol.lambda.interior.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn dual_solution_is_weakly_harmonic() {
        let mesh = build_uniform_mesh(8).unwrap();
        let disc = Discretization::new(&mesh, 1).unwrap();
        let pi = std::f64::consts::PI;
        let sol = solve(
            &disc,
            |p| -2.0 * pi * pi * (pi * p[0]).sin() * (pi * p[1]).sin(),
            |_| 0.0,
        )
        .unwrap();
        assert!(disc.weak_harmonicity_defect(&sol.lambda) <= 1e-10);
        assert!(disc.stabilizer_energy(&sol.lambda) > 0.0);
    }

    #[test]
    fn solution_scales_with_data() {
        let mesh = build_uniform_mesh(4).unwrap();
        let disc = Discretization::new(&mesh, 2).unwrap();
        let a = solve(&disc, |p| p[0].exp() * p[1], |p| p[1].cos()).unwrap();
        let b = solve(&disc, |p| -3.0 * p[0].exp() * p[1], |p| -3.0 * p[1].cos()).unwrap();
        for (x, y) in a.u.values.iter().zip(&b.u.values) {
            assert!((y + 3.0 * x).abs() < 1e-8 * x.abs().max(1.0));
        }
        for (x, y) in a.lambda.interior.iter().zip(&b.lambda.interior) {
            assert!((y + 3.0 * x).abs() < 1e-8 * x.abs().max(1e-3));
        }
    }

    #[test]
    fn interpolant_is_consistent_with_global_storage() {
        // Q_h of a polynomial has zero stabilizer energy when k >= degree.
        let mesh = build_uniform_mesh(3).unwrap();
        let disc = Discretization::new(&mesh, 2).unwrap();
        let w = interpolate_qh(|p| p[0] * p[1] - p[0], |p| [p[1] - 1.0, p[0]], &mesh, 2).unwrap();
        assert!(disc.stabilizer_energy(&w).abs() < 1e-10);
    }
}
