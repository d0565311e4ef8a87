//! Manufactured solutions, discrete error measures and convergence studies.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::basis::check_degree;
use crate::dd::{DdParams, DdProblem, RobinWeights};
use crate::error::{Error, Result};
use crate::mesh::{build_uniform_mesh, Point};
use crate::partition::{build_partition, PartitionStrategy};
use crate::pdwg::{interior_l2_norm, quad_form, Discretization, PrimalCoeffs, Solution};
use crate::weak::{project_element, WeakCoeffs};

/// Smoothness class of a manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    Smooth,
    /// Global polynomial of the given total degree.
    Polynomial(usize),
}

/// Exact solution `u` with `Delta u = f` in the unit square and `g = u` on
/// its boundary.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub u: fn(Point) -> f64,
    pub grad_u: fn(Point) -> [f64; 2],
    pub f: fn(Point) -> f64,
    pub regularity: Regularity,
}

impl ManufacturedCase {
    pub fn g(&self, p: Point) -> f64 {
        (self.u)(p)
    }

    pub fn library() -> [ManufacturedCase; 7] {
        [
            ManufacturedCase {
                name: "sine",
                u: |p| (PI * p[0]).sin() * (PI * p[1]).sin(),
                grad_u: |p| {
                    [
                        PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
                        PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
                    ]
                },
                f: |p| -2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin(),
                regularity: Regularity::Smooth,
            },
            ManufacturedCase {
                name: "harmonic",
                u: |p| p[0].exp() * p[1].sin(),
                grad_u: |p| [p[0].exp() * p[1].sin(), p[0].exp() * p[1].cos()],
                f: |_| 0.0,
                regularity: Regularity::Smooth,
            },
            ManufacturedCase {
                name: "zero",
                u: |_| 0.0,
                grad_u: |_| [0.0, 0.0],
                f: |_| 0.0,
                regularity: Regularity::Polynomial(0),
            },
            ManufacturedCase {
                name: "constant",
                u: |_| 1.0,
                grad_u: |_| [0.0, 0.0],
                f: |_| 0.0,
                regularity: Regularity::Polynomial(0),
            },
            ManufacturedCase {
                name: "linear",
                u: |p| p[0],
                grad_u: |_| [1.0, 0.0],
                f: |_| 0.0,
                regularity: Regularity::Polynomial(1),
            },
            ManufacturedCase {
                name: "quadratic",
                u: |p| p[0] * p[0] - p[1] * p[1],
                grad_u: |p| [2.0 * p[0], -2.0 * p[1]],
                f: |_| 0.0,
                regularity: Regularity::Polynomial(2),
            },
            ManufacturedCase {
                name: "cubic",
                u: |p| p[0].powi(3) - 3.0 * p[0] * p[1] * p[1],
                grad_u: |p| [3.0 * p[0] * p[0] - 3.0 * p[1] * p[1], -6.0 * p[0] * p[1]],
                f: |_| 0.0,
                regularity: Regularity::Polynomial(3),
            },
        ]
    }

    pub fn by_name(name: &str) -> Result<ManufacturedCase> {
        Self::library().into_iter().find(|c| c.name == name).ok_or_else(|| {
            let known: Vec<&str> = Self::library().iter().map(|c| c.name).collect();
            Error::InvalidArgument(format!("unknown case '{name}' (known: {})", known.join(", ")))
        })
    }

    /// Whether the scheme of degree `k` reproduces this case exactly.
    pub fn is_exact_for(&self, k: usize) -> bool {
        matches!(self.regularity, Regularity::Polynomial(d) if d < k)
    }

    /// Largest mismatch between `f` and a fourth-order finite-difference
    /// Laplacian of `u`, and between `grad_u` and central differences, over
    /// the given points.
    pub fn finite_difference_defect(&self, points: &[Point]) -> f64 {
        let e = 1e-2;
        let u = self.u;
        let d2 = |p: Point, dir: [f64; 2]| {
            let at = |s: f64| u([p[0] + s * dir[0], p[1] + s * dir[1]]);
            (-at(2.0 * e) + 16.0 * at(e) - 30.0 * at(0.0) + 16.0 * at(-e) - at(-2.0 * e)) / (12.0 * e * e)
        };
        let d1 = |p: Point, dir: [f64; 2]| {
            let at = |s: f64| u([p[0] + s * dir[0], p[1] + s * dir[1]]);
            (-at(2.0 * e) + 8.0 * at(e) - 8.0 * at(-e) + at(-2.0 * e)) / (12.0 * e)
        };
        points
            .iter()
            .map(|&p| {
                let lap = d2(p, [1.0, 0.0]) + d2(p, [0.0, 1.0]);
                let g = (self.grad_u)(p);
                let scale = (self.f)(p).abs().max(1.0);
                ((lap - (self.f)(p)).abs() / scale)
                    .max((g[0] - d1(p, [1.0, 0.0])).abs())
                    .max((g[1] - d1(p, [0.0, 1.0])).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// The three discrete error quantities of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorTriple {
    /// `s(lambda_h, lambda_h)^(1/2)`.
    pub triple_bar: f64,
    /// `||u_h - Q_h u||` with `Q_h` the projection onto `P_{k-1}` per element.
    pub e_h_l2: f64,
    /// `||lambda_0||`.
    pub lambda0_l2: f64,
}

/// Triangle rule exactness used for error integrals.
pub fn error_quad_degree(k: usize) -> usize {
    2 * k + 4
}

/// `||u_h - Q_h u||` for an arbitrary exact field `u`.
pub fn primal_projection_error(disc: &Discretization, u_h: &PrimalCoeffs, u: impl Fn(Point) -> f64) -> Result<f64> {
    let k = disc.k;
    let mut sum = 0.0;
    for t in 0..disc.mesh.num_elements() {
        let kern = &disc.kernels[t];
        let pu = project_element(&u, k - 1, &kern.geom, error_quad_degree(k))?;
        let d: Vec<f64> = u_h.block(t).iter().zip(&pu).map(|(a, b)| a - b).collect();
        sum += quad_form(kern.gram_low(), &d);
    }
    Ok(sum.max(0.0).sqrt())
}

pub fn error_triple_of(disc: &Discretization, u_h: &PrimalCoeffs, lambda: &WeakCoeffs, case: &ManufacturedCase) -> Result<ErrorTriple> {
    Ok(ErrorTriple {
        triple_bar: disc.stabilizer_energy(lambda).max(0.0).sqrt(),
        e_h_l2: primal_projection_error(disc, u_h, case.u)?,
        lambda0_l2: interior_l2_norm(disc, lambda),
    })
}

pub fn error_triple(disc: &Discretization, solution: &Solution, case: &ManufacturedCase) -> Result<ErrorTriple> {
    error_triple_of(disc, &solution.u, &solution.lambda, case)
}

/// Errors at or below this value count as exact reproduction.
pub const EXACT_FLOOR: f64 = 1e-10;

/// Empirical order of convergence between two consecutive meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Finite(f64),
    /// Exact reproduction on one of the two meshes; no slope is defined.
    Exact,
}

impl Rate {
    pub fn value(self) -> Option<f64> {
        match self {
            Rate::Finite(r) => Some(r),
            Rate::Exact => None,
        }
    }
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rate::Finite(r) => write!(f, "{r:.3}"),
            Rate::Exact => f.write_str("exact"),
        }
    }
}

/// `rate_i = ln(e_i / e_{i+1}) / ln(h_i / h_{i+1})` for `(h, e)` pairs.
pub fn eoc(errors: &[(f64, f64)]) -> Result<Vec<Rate>> {
    errors
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            if !(h0 > 0.0 && h1 > 0.0 && h0 != h1) {
                return Err(Error::InvalidArgument(format!("mesh sizes {h0} and {h1} give no slope")));
            }
            Ok(if e0 <= EXACT_FLOOR || e1 <= EXACT_FLOOR {
                Rate::Exact
            } else {
                Rate::Finite((e0 / e1).ln() / (h0 / h1).ln())
            })
        })
        .collect()
}

/// Solver used for every row of a study.
#[derive(Debug, Clone)]
pub enum StudyMode {
    Monolithic,
    Dd {
        strategy: PartitionStrategy,
        /// `None` selects [`RobinWeights::auto`] per mesh.
        weights: Option<RobinWeights>,
        tol: f64,
        max_iters: usize,
        workers: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdSummary {
    pub iterations: usize,
    pub converged: bool,
    pub max_energy_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    /// Errors, or the message of the failure on this mesh.
    pub errors: std::result::Result<ErrorTriple, String>,
    /// `max_T ||Delta_w lambda_h||_T`.
    pub harmonicity_defect: f64,
    pub dd: Option<DdSummary>,
}

#[derive(Debug, Clone)]
pub struct StudyTable {
    pub case: &'static str,
    pub k: usize,
    pub rows: Vec<StudyRow>,
}

/// Rates of one error column; `None` where a row failed.
pub type RateColumn = Vec<Option<Rate>>;

impl StudyTable {
    fn column(&self, pick: impl Fn(&ErrorTriple) -> f64) -> RateColumn {
        self.rows
            .windows(2)
            .map(|w| match (&w[0].errors, &w[1].errors) {
                (Ok(a), Ok(b)) => eoc(&[(w[0].h, pick(a)), (w[1].h, pick(b))]).ok().map(|r| r[0]),
                _ => None,
            })
            .collect()
    }

    /// Rates of `|||eps_h||| + ||e_h||`.
    pub fn primal_rates(&self) -> RateColumn {
        self.column(|e| e.triple_bar + e.e_h_l2)
    }

    pub fn triple_bar_rates(&self) -> RateColumn {
        self.column(|e| e.triple_bar)
    }

    pub fn e_h_rates(&self) -> RateColumn {
        self.column(|e| e.e_h_l2)
    }

    pub fn lambda0_rates(&self) -> RateColumn {
        self.column(|e| e.lambda0_l2)
    }

    /// Header `n,h,triple_bar,e_h_l2,lambda0_l2,eoc_primal,eoc_triple_bar,eoc_e_h,eoc_lambda0,...`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("n,h,triple_bar,e_h_l2,lambda0_l2,eoc_primal,eoc_triple_bar,eoc_e_h,eoc_lambda0,iterations,energy_defect,status\n");
        let cols = [self.primal_rates(), self.triple_bar_rates(), self.e_h_rates(), self.lambda0_rates()];
        for (i, row) in self.rows.iter().enumerate() {
            let rate = |c: &RateColumn| match i.checked_sub(1).and_then(|j| c[j]) {
                Some(r) => r.to_string(),
                None => String::new(),
            };
            let (vals, status) = match &row.errors {
                Ok(e) => (format!("{:.6e},{:.6e},{:.6e}", e.triple_bar, e.e_h_l2, e.lambda0_l2), "ok".to_string()),
                Err(msg) => (",,".into(), format!("failed: {}", msg.replace(',', ";"))),
            };
            let (iters, defect) = match row.dd {
                Some(d) => (d.iterations.to_string(), format!("{:.3e}", d.max_energy_defect)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{:.6e},{},{},{},{},{},{},{},{}",
                row.n,
                row.h,
                vals,
                rate(&cols[0]),
                rate(&cols[1]),
                rate(&cols[2]),
                rate(&cols[3]),
                iters,
                defect,
                status
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("case {} | k = {}\n", self.case, self.k);
        let _ = writeln!(
            out,
            "{:>5} {:>11} {:>11} {:>11} {:>11} {:>8} {:>8}",
            "n", "h", "|||eps|||", "||e_h||", "||l0||", "eoc", "eoc l0"
        );
        let (p, l) = (self.primal_rates(), self.lambda0_rates());
        for (i, row) in self.rows.iter().enumerate() {
            let rate = |c: &RateColumn| match i.checked_sub(1).and_then(|j| c[j]) {
                Some(r) => r.to_string(),
                None => "-".into(),
            };
            match &row.errors {
                Ok(e) => {
                    let _ = writeln!(
                        out,
                        "{:>5} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>8} {:>8}",
                        row.n,
                        row.h,
                        e.triple_bar,
                        e.e_h_l2,
                        e.lambda0_l2,
                        rate(&p),
                        rate(&l)
                    );
                }
                Err(msg) => {
                    let _ = writeln!(out, "{:>5} {:>11.4e} failed: {msg}", row.n, row.h);
                }
            }
        }
        out
    }
}

fn run_row(case: &ManufacturedCase, k: usize, n: usize, mode: &StudyMode) -> Result<StudyRow> {
    let mesh = build_uniform_mesh(n)?;
    let disc = Discretization::new(&mesh, k)?;
    let g = |p: Point| case.g(p);
    let (u, lambda, dd) = match mode {
        StudyMode::Monolithic => {
            let sol = crate::pdwg::solve(&disc, case.f, g)?;
            (sol.u, sol.lambda, None)
        }
        StudyMode::Dd {
            strategy,
            weights,
            tol,
            max_iters,
            workers,
        } => {
            let partition = build_partition(&mesh, *strategy)?;
            let weights = weights.unwrap_or_else(|| RobinWeights::auto(&mesh));
            let problem = DdProblem::new(&disc, &partition, case.f, g, weights)?;
            let report = problem.iterate(&DdParams {
                tol: *tol,
                max_iters: *max_iters,
                workers: *workers,
                ..Default::default()
            })?;
            let summary = DdSummary {
                iterations: report.iterations,
                converged: report.converged,
                max_energy_defect: report.max_energy_defect,
            };
            (report.u, report.lambda, Some(summary))
        }
    };
    Ok(StudyRow {
        n,
        h: mesh.h_max,
        errors: Ok(error_triple_of(&disc, &u, &lambda, case)?),
        harmonicity_defect: disc.weak_harmonicity_defect(&lambda),
        dd,
    })
}

/// Solves `case` on the uniform meshes `n_list` (each twice the previous)
/// and tabulates the errors. A failing mesh yields a marked row.
pub fn study(case: &ManufacturedCase, k: usize, n_list: &[usize], mode: &StudyMode) -> Result<StudyTable> {
    check_degree(k)?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidArgument(format!(
            "mesh sizes {n_list:?} must be nonempty and double at every step"
        )));
    }
    let rows = n_list
        .iter()
        .map(|&n| {
            run_row(case, k, n, mode).unwrap_or_else(|e| StudyRow {
                n,
                h: 2f64.sqrt() / n as f64,
                errors: Err(e.to_string()),
                harmonicity_defect: f64::NAN,
                dd: None,
            })
        })
        .collect();
    Ok(StudyTable {
        case: case.name,
        k,
        rows,
    })
}
