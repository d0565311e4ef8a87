//! Self-contained invariant suite, runnable from the command line.
//!
//! Each check is small enough to finish in well under a second on a desk
//! machine. Randomness is drawn from a seeded ChaCha stream, so a given
//! seed always produces the same verdicts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::dim_p;
use crate::dd::{DdParams, DdProblem, RobinWeights};
use crate::error::Result;
use crate::linalg::norm2;
use crate::mesh::{build_uniform_mesh, Point};
use crate::partition::{build_partition, PartitionStrategy};
use crate::pdwg::{assemble, primal_l2_norm, solve, solve_monolithic, Discretization};
use crate::quadrature::make_tri_rule;
use crate::verification::{error_triple, ManufacturedCase};
use crate::weak::{interpolate_local, project_element, weak_laplacian, ElementGeometry};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Random polynomial `sum c_ab x^a y^b` of total degree `deg`.
#[derive(Debug, Clone)]
pub struct RandomPolynomial {
    terms: Vec<(i32, i32, f64)>,
}

impl RandomPolynomial {
    pub fn new(deg: usize, rng: &mut impl Rng) -> Self {
        let mut terms = Vec::new();
        for d in 0..=deg as i32 {
            for a in 0..=d {
                terms.push((a, d - a, rng.random_range(-1.0..1.0)));
            }
        }
        Self { terms }
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.terms.iter().map(|&(a, b, c)| c * p[0].powi(a) * p[1].powi(b)).sum()
    }

    pub fn grad(&self, p: Point) -> [f64; 2] {
        let mut g = [0.0; 2];
        for &(a, b, c) in &self.terms {
            if a > 0 {
                g[0] += c * a as f64 * p[0].powi(a - 1) * p[1].powi(b);
            }
            if b > 0 {
                g[1] += c * b as f64 * p[0].powi(a) * p[1].powi(b - 1);
            }
        }
        g
    }

    pub fn laplacian(&self, p: Point) -> f64 {
        let mut s = 0.0;
        for &(a, b, c) in &self.terms {
            if a > 1 {
                s += c * (a * (a - 1)) as f64 * p[0].powi(a - 2) * p[1].powi(b);
            }
            if b > 1 {
                s += c * (b * (b - 1)) as f64 * p[0].powi(a) * p[1].powi(b - 2);
            }
        }
        s
    }
}

/// Counter-clockwise triangle in `[-1, 1]^2` with all angles above 20 degrees.
pub fn random_shape_regular_triangle(rng: &mut impl Rng) -> [Point; 3] {
    loop {
        let mut v = [[0.0; 2]; 3];
        for p in &mut v {
            *p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        }
        let angle = |a: Point, b: Point, c: Point| {
            let (u, w) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
            let cos = (u[0] * w[0] + u[1] * w[1]) / (u[0].hypot(u[1]) * w[0].hypot(w[1]));
            cos.clamp(-1.0, 1.0).acos()
        };
        let min = angle(v[0], v[1], v[2]).min(angle(v[1], v[2], v[0])).min(angle(v[2], v[0], v[1]));
        if !(min.is_finite() && min > 20f64.to_radians()) {
            continue;
        }
        let signed = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[1][1] - v[0][1]) * (v[2][0] - v[0][0]);
        if signed < 0.0 {
            v.swap(1, 2);
        }
        return v;
    }
}

/// `(||Delta_w Q_h w - Q^{k-1} Delta w||_T, ||w||_T)` on one triangle.
pub fn commuting_defect(tri: [Point; 3], k: usize, w: &RandomPolynomial) -> Result<(f64, f64)> {
    let geom = ElementGeometry::from_triangle(tri)?;
    let qh = interpolate_local(|p| w.eval(p), |p| w.grad(p), &geom, k)?;
    let lap = weak_laplacian(&qh, &geom)?;
    let proj = project_element(|p| w.laplacian(p), k - 1, &geom, 2 * k + 2)?;
    let gram = geom.gram(k - 1)?;
    let n = dim_p(k - 1);
    let mut err = 0.0;
    for i in 0..n {
        for j in 0..n {
            err += (lap[i] - proj[i]) * gram[(i, j)] * (lap[j] - proj[j]);
        }
    }
    let rule = make_tri_rule(2 * k + 2)?;
    let norm = geom.integrate(rule, |p| w.eval(p).powi(2)).sqrt();
    Ok((err.max(0.0).sqrt(), norm))
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn commuting(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        for _ in 0..100 {
            let tri = random_shape_regular_triangle(rng);
            let w = RandomPolynomial::new(k + 1, rng);
            let (err, norm) = commuting_defect(tri, k, &w)?;
            worst = worst.max(err / norm.max(f64::MIN_POSITIVE));
        }
    }
    Ok((worst <= 1e-10, format!("max relative defect {worst:.2e} over 300 triangles")))
}

fn exactness() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for case in ManufacturedCase::library() {
        for k in 1..=3 {
            if !case.is_exact_for(k) {
                continue;
            }
            for n in [2, 4] {
                let mesh = build_uniform_mesh(n)?;
                let disc = Discretization::new(&mesh, k)?;
                let sol = solve(&disc, case.f, |p| case.g(p))?;
                let e = error_triple(&disc, &sol, &case)?;
                worst = worst.max(e.triple_bar).max(e.e_h_l2).max(e.lambda0_l2);
            }
        }
    }
    Ok((worst <= 1e-8, format!("max error {worst:.2e} on polynomial cases")))
}

fn symmetry(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut ok = true;
    let mut min_ratio = f64::INFINITY;
    for k in 1..=3 {
        let mesh = build_uniform_mesh(3)?;
        let disc = Discretization::new(&mesh, k)?;
        let sys = assemble(&disc, |_| 0.0, |_| 0.0)?;
        ok &= sys.s.is_symmetric() && sys.matrix().is_symmetric();
        for _ in 0..20 {
            let x: Vec<f64> = (0..sys.dofs.n_lambda).map(|_| rng.random_range(-1.0..1.0)).collect();
            min_ratio = min_ratio.min(sys.s.quadratic_form(&x) / norm2(&x).powi(2));
        }
    }
    ok &= min_ratio >= -1e-12;
    Ok((ok, format!("symmetric: {ok}, min x'Sx/|x|^2 = {min_ratio:.2e}")))
}

fn zero_solution() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for k in 1..=2 {
        for n in [2, 4] {
            let mesh = build_uniform_mesh(n)?;
            let disc = Discretization::new(&mesh, k)?;
            let sys = assemble(&disc, |_| 0.0, |_| 0.0)?;
            let sol = solve_monolithic(&mesh, &sys)?;
            let size = primal_l2_norm(&disc, &sol.u) + disc.stabilizer_energy(&sol.lambda).max(0.0).sqrt();
            worst = worst.max(size);
        }
    }
    Ok((worst <= 1e-9, format!("max ||u_h|| + |||lambda_h||| = {worst:.2e}")))
}

fn harmonicity() -> Result<(bool, String)> {
    let case = ManufacturedCase::by_name("sine")?;
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        let mesh = build_uniform_mesh(4)?;
        let disc = Discretization::new(&mesh, k)?;
        let sol = solve(&disc, case.f, |p| case.g(p))?;
        worst = worst.max(disc.weak_harmonicity_defect(&sol.lambda));
    }
    Ok((worst <= 1e-9, format!("max_T ||Delta_w lambda_h|| = {worst:.2e}")))
}

fn energy_identity() -> Result<(bool, String)> {
    let case = ManufacturedCase::by_name("sine")?;
    let mesh = build_uniform_mesh(2)?;
    let disc = Discretization::new(&mesh, 1)?;
    let part = build_partition(&mesh, PartitionStrategy::PerElement)?;
    let dd = DdProblem::new(&disc, &part, case.f, |p| case.g(p), RobinWeights::auto(&mesh))?;
    let rep = dd.iterate(&DdParams {
        tol: 1e-9,
        ..Default::default()
    })?;
    let monotone = rep
        .records
        .windows(2)
        .all(|w| w[1].weighted_residual <= w[0].weighted_residual * (1.0 + 1e-12));
    let passed = rep.converged && monotone && rep.max_energy_defect <= 1e-9;
    Ok((
        passed,
        format!(
            "{} sweeps, converged {}, monotone {monotone}, max defect {:.2e}",
            rep.iterations, rep.converged, rep.max_energy_defect
        ),
    ))
}

fn homogeneous_decay(seed: u64) -> Result<(bool, String)> {
    let mesh = build_uniform_mesh(2)?;
    let disc = Discretization::new(&mesh, 1)?;
    let part = build_partition(&mesh, PartitionStrategy::PerElement)?;
    let dd = DdProblem::new(&disc, &part, |_| 0.0, |_| 0.0, RobinWeights::auto(&mesh))?;
    let rep = dd.iterate(&DdParams {
        tol: 1e-9,
        initial: Some(dd.random_state(seed)),
        ..Default::default()
    })?;
    let first = rep.records[0].interface_norm;
    let last = rep.records.last().map_or(first, |r| r.interface_norm);
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    Ok((
        rep.converged && ratio <= 1e-6,
        format!("{} sweeps, interface norm ratio {ratio:.2e}", rep.iterations),
    ))
}

/// Runs every invariant; `seed` drives the random triangles, polynomials,
/// test vectors and initial transmission data.
pub fn run_invariant_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        outcome("commuting_property", commuting(&mut rng)),
        outcome("polynomial_exactness", exactness()),
        outcome("saddle_symmetry", symmetry(&mut rng)),
        outcome("zero_solution", zero_solution()),
        outcome("weak_harmonicity", harmonicity()),
        outcome("energy_identity", energy_identity()),
        outcome("homogeneous_decay", homogeneous_decay(seed)),
    ]
}
