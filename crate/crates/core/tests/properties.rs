use pdwg::basis::{dim_p, legendre_values};
use pdwg::mesh::{build_uniform_mesh, Point};
use pdwg::partition::{build_partition, PartitionStrategy};
use pdwg::quadrature::{make_edge_rule, make_tri_rule};
use pdwg::weak::{interpolate_local, project_edge, project_element, weak_laplacian, ElementGeometry, LocalWeakFunction};
use proptest::prelude::*;

/// Triangles whose smallest angle exceeds 20 degrees.
fn shape_regular_triangle() -> impl Strategy<Value = [Point; 3]> {
    prop::array::uniform3(prop::array::uniform2(-1.0f64..1.0)).prop_filter("shape regular", |v| {
        let ang = |a: Point, b: Point, c: Point| {
            let (u, w) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
            let cos = (u[0] * w[0] + u[1] * w[1]) / ((u[0].hypot(u[1])) * (w[0].hypot(w[1])));
            cos.clamp(-1.0, 1.0).acos()
        };
        let min = ang(v[0], v[1], v[2]).min(ang(v[1], v[2], v[0])).min(ang(v[2], v[0], v[1]));
        min.is_finite() && min > 20f64.to_radians()
    })
    .prop_map(|[a, b, c]| {
        let signed = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if signed > 0.0 { [a, b, c] } else { [a, c, b] }
    })
}

/// Global polynomial `sum c_ab x^a y^b` of total degree <= `deg`.
#[derive(Debug, Clone)]
struct Poly {
    terms: Vec<(i32, i32, f64)>,
}

impl Poly {
    fn new(deg: i32, coeffs: &[f64]) -> Self {
        let mut terms = Vec::new();
        for d in 0..=deg {
            for a in 0..=d {
                terms.push((a, d - a, coeffs[terms.len() % coeffs.len()]));
            }
        }
        Self { terms }
    }
    fn eval(&self, p: Point) -> f64 {
        self.terms.iter().map(|&(a, b, c)| c * p[0].powi(a) * p[1].powi(b)).sum()
    }
    fn grad(&self, p: Point) -> [f64; 2] {
        let dx = self
            .terms
            .iter()
            .filter(|t| t.0 > 0)
            .map(|&(a, b, c)| c * a as f64 * p[0].powi(a - 1) * p[1].powi(b))
            .sum();
        let dy = self
            .terms
            .iter()
            .filter(|t| t.1 > 0)
            .map(|&(a, b, c)| c * b as f64 * p[0].powi(a) * p[1].powi(b - 1))
            .sum();
        [dx, dy]
    }
    fn laplacian(&self, p: Point) -> f64 {
        self.terms
            .iter()
            .map(|&(a, b, c)| {
                let xx = if a > 1 { (a * (a - 1)) as f64 * p[0].powi(a - 2) * p[1].powi(b) } else { 0.0 };
                let yy = if b > 1 { (b * (b - 1)) as f64 * p[0].powi(a) * p[1].powi(b - 2) } else { 0.0 };
                c * (xx + yy)
            })
            .sum()
    }
}

fn mass(geom: &ElementGeometry, r: usize) -> Vec<Vec<f64>> {
    let g = geom.gram(r).unwrap();
    (0..g.nrows()).map(|i| (0..g.ncols()).map(|j| g[(i, j)]).collect()).collect()
}

fn l2_norm_of_coeffs(m: &[Vec<f64>], c: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..c.len() {
        for j in 0..c.len() {
            s += c[i] * m[i][j] * c[j];
        }
    }
    s.max(0.0).sqrt()
}

fn l2_norm_on(geom: &ElementGeometry, f: impl Fn(Point) -> f64) -> f64 {
    let rule = make_tri_rule(20).unwrap();
    geom.integrate(rule, |p| f(p) * f(p)).sqrt()
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for j in c..n {
                a[r][j] -= f * a[c][j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r][j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Independent evaluation of the weak Laplacian with degree-20 rules.
fn weak_laplacian_oracle(sigma: &LocalWeakFunction, geom: &ElementGeometry) -> Vec<f64> {
    let k = sigma.sigma0.len();
    let k = (1..=3).find(|&d| dim_p(d) == k).unwrap();
    let hi = geom.basis(k);
    let lo = geom.basis(k - 1);
    let n1 = dim_p(k - 1);
    let tri = make_tri_rule(20).unwrap();
    let edge = make_edge_rule(40).unwrap();
    let mut gram = vec![vec![0.0; n1]; n1];
    let mut rhs = vec![0.0; n1];
    for i in 0..n1 {
        for j in 0..n1 {
            gram[i][j] = geom.integrate(tri, |p| lo.eval(p)[i] * lo.eval(p)[j]);
        }
        rhs[i] = geom.integrate(tri, |p| {
            let s0: f64 = hi.eval(p).iter().zip(&sigma.sigma0).map(|(a, b)| a * b).sum();
            s0 * lo.eval_laplacian(p)[i]
        });
        for (l, ge) in geom.edges.iter().enumerate() {
            rhs[i] += ge.integrate(edge, |s, x| {
                let leg = legendre_values(k, s);
                let sb: f64 = leg.iter().zip(&sigma.sigma_b[l]).map(|(a, b)| a * b).sum();
                let sn: f64 = leg.iter().zip(&sigma.sigma_n[l]).map(|(a, b)| a * b).sum();
                let g = lo.eval_grad(x)[i];
                -sb * (g[0] * ge.outward[0] + g[1] * ge.outward[1]) + ge.tau * sn * lo.eval(x)[i]
            });
        }
    }
    dense_solve(gram, rhs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn commuting_property(tri in shape_regular_triangle(), k in 1usize..=3, coeffs in prop::collection::vec(-1.0f64..1.0, 15)) {
        let geom = ElementGeometry::from_triangle(tri).unwrap();
        let w = Poly::new(k as i32 + 1, &coeffs);
        let qh = interpolate_local(|p| w.eval(p), |p| w.grad(p), &geom, k).unwrap();
        let lap = weak_laplacian(&qh, &geom).unwrap();
        let proj = project_element(|p| w.laplacian(p), k - 1, &geom, 2 * k + 2).unwrap();
        let diff: Vec<f64> = lap.iter().zip(&proj).map(|(a, b)| a - b).collect();
        let err = l2_norm_of_coeffs(&mass(&geom, k - 1), &diff);
        let norm = l2_norm_on(&geom, |p| w.eval(p));
        prop_assert!(err <= 1e-10 * norm.max(1e-3), "err {} norm {}", err, norm);
    }

    #[test]
    fn weak_laplacian_matches_dense_oracle(tri in shape_regular_triangle(), k in 1usize..=3, seed in prop::collection::vec(-1.0f64..1.0, 64)) {
        let geom = ElementGeometry::from_triangle(tri).unwrap();
        let n = dim_p(k) + 6 * k;
        let sigma = LocalWeakFunction::from_vec(k, &seed[..n]);
        let got = weak_laplacian(&sigma, &geom).unwrap();
        let want = weak_laplacian_oracle(&sigma, &geom);
        let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-11 * scale, "{} vs {}", a, b);
        }
    }

    #[test]
    fn weak_laplacian_is_linear(tri in shape_regular_triangle(), k in 1usize..=3, v in prop::collection::vec(-1.0f64..1.0, 64), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let geom = ElementGeometry::from_triangle(tri).unwrap();
        let n = dim_p(k) + 6 * k;
        let (x, y) = (&v[..n], &v[n..2 * n]);
        let comb: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        let lx = weak_laplacian(&LocalWeakFunction::from_vec(k, x), &geom).unwrap();
        let ly = weak_laplacian(&LocalWeakFunction::from_vec(k, y), &geom).unwrap();
        let lc = weak_laplacian(&LocalWeakFunction::from_vec(k, &comb), &geom).unwrap();
        let scale = lc.iter().chain(&lx).chain(&ly).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..lc.len() {
            prop_assert!((lc[i] - (a * lx[i] + b * ly[i])).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn projections_are_idempotent(tri in shape_regular_triangle(), r in 0usize..=3, c in prop::collection::vec(-1.0f64..1.0, 10)) {
        let geom = ElementGeometry::from_triangle(tri).unwrap();
        let basis = geom.basis(r);
        let coeffs = &c[..dim_p(r)];
        let p = project_element(|x| basis.eval(x).iter().zip(coeffs).map(|(a, b)| a * b).sum(), r, &geom, 2 * r).unwrap();
        for (a, b) in p.iter().zip(coeffs) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let len = r + 1;
        let e = project_edge(|s| legendre_values(len, s).iter().zip(coeffs).map(|(a, b)| a * b).sum(), len, 2 * len).unwrap();
        for (a, b) in e.iter().zip(coeffs) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn element_mass_matrices_are_positive_definite(tri in shape_regular_triangle(), r in 0usize..=3) {
        let geom = ElementGeometry::from_triangle(tri).unwrap();
        prop_assert!(geom.gram_factor(r).is_ok());
        let g = geom.gram(r).unwrap();
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                prop_assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn refinement_scales_counts_and_size(n in 1usize..12) {
        let (a, b) = (build_uniform_mesh(n).unwrap(), build_uniform_mesh(2 * n).unwrap());
        prop_assert_eq!(b.num_elements(), 4 * a.num_elements());
        prop_assert!((b.h_max - a.h_max / 2.0).abs() < 1e-15);
        prop_assert!((a.h_max - 2f64.sqrt() / n as f64).abs() < 1e-15);
    }

    #[test]
    fn mesh_invariants(n in 1usize..10) {
        let mesh = build_uniform_mesh(n).unwrap();
        prop_assert_eq!(mesh.num_vertices() as i64 - mesh.num_edges() as i64 + mesh.num_elements() as i64, 1);
        for (e, rec) in mesh.edges.iter().enumerate() {
            prop_assert!((rec.global_normal[0].hypot(rec.global_normal[1]) - 1.0).abs() <= 1e-14);
            let taus: Vec<f64> = rec.incident_elements.iter().map(|&t| mesh.tau(t, e).unwrap()).collect();
            if rec.is_boundary {
                prop_assert_eq!(taus, vec![1.0]);
            } else {
                prop_assert_eq!(taus.len(), 2);
                prop_assert_eq!(taus[0] + taus[1], 0.0);
                prop_assert_eq!(mesh.tau(rec.owner(), e).unwrap(), 1.0);
            }
        }
        for t in 0..mesh.num_elements() {
            prop_assert!(mesh.element_area(t) > 0.0);
        }
        let hmax = (0..mesh.num_elements()).map(|t| mesh.element_diameter(t)).fold(0.0, f64::max);
        prop_assert_eq!(hmax, mesh.h_max);
    }

    #[test]
    fn block_partitions_cover_the_mesh(m in 1usize..4, p in 1usize..4) {
        let mesh = build_uniform_mesh(m * p).unwrap();
        let part = build_partition(&mesh, PartitionStrategy::Blocks(p)).unwrap();
        prop_assert_eq!(part.count, p * p);
        for id in 1..=part.count {
            prop_assert_eq!(part.elements_of(id).len(), 2 * m * m);
        }
        // Each internal cut line of the block grid has m*p edges per line, p-1 lines per direction.
        prop_assert_eq!(part.interface_edge_count(), 2 * (p - 1) * m * p);
    }
}
