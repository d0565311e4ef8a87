//! Non-overlapping domain decomposition with Robin data exchange.
//!
//! Every subdomain `j` owns private copies of the trace and flux unknowns on
//! its interface edges and solves its own saddle system augmented by
//! `<beta lb, wb> + <sigma ln, wn>` on the interface. Subdomains talk only
//! through transmission data: the message `r[k->j]` enters the right side of
//! `j` as `<r_b, wb> + <r_n, wn>`, and after a sweep
//!
//! ```text
//! r_b[k->j] <- 2 beta  lb_k - r_b[j->k]
//! r_n[k->j] <- 2 sigma ln_k - r_n[j->k]
//! ```
//!
//! Flux copies use the global edge normal on both sides, so no sign flips
//! enter the exchange.
//!
//! The iteration is linear, so [`DdProblem::iterate`] advances the
//! increments `dr = r(m) - r(m-1)` and `dl = l(m) - l(m-1)` with homogeneous
//! local solves and accumulates them. The increments obey the homogeneous
//! recursion exactly, which makes the energy balance
//! `W(dr(m)) = W(dr(m-1)) - 4 sum_j s_j(dl(m))` checkable to round-off at
//! every sweep even for nonzero data.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{dim_p, EdgeBasis};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseBuilder, SparseLu};
use crate::mesh::{Mesh2D, Point};
use crate::partition::Partition;
use crate::pdwg::{assemble_load, quad_form, scatter_operator, DofMap, Discretization, PrimalCoeffs, Solution};
use crate::weak::WeakCoeffs;

/// Residual bound for local solves.
pub const LOCAL_RESIDUAL_LIMIT: f64 = 1e-10;

/// Interface penalty weights, constant over all interfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinWeights {
    pub beta: f64,
    pub sigma: f64,
}

impl RobinWeights {
    /// `beta = h^-3`, `sigma = h^-1` with the global mesh size.
    pub fn auto(mesh: &Mesh2D) -> Self {
        Self {
            beta: mesh.h_max.powi(-3),
            sigma: mesh.h_max.powi(-1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("sigma", self.sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// One interface edge seen from both sides. Side `s` is the incident
/// element `element[s]` (ascending element index) and its subdomain.
#[derive(Debug, Clone)]
pub struct InterfaceEdge {
    pub edge: usize,
    pub element: [usize; 2],
    pub subdomain: [usize; 2],
    /// `tau` of `element[s]` on this edge.
    pub tau: [f64; 2],
    /// Diagonal Legendre mass matrix on the edge.
    pub mass: Vec<f64>,
}

fn interface_edges(mesh: &Mesh2D, partition: &Partition, k: usize) -> Vec<InterfaceEdge> {
    let mut out: Vec<InterfaceEdge> = partition
        .interfaces
        .iter()
        .flat_map(|rec| rec.edge_ids.iter().copied())
        .map(|e| {
            let inc = &mesh.edges[e].incident_elements;
            let element = [inc[0], inc[1]];
            InterfaceEdge {
                edge: e,
                element,
                subdomain: element.map(|t| partition.subdomain_of[t]),
                tau: element.map(|t| mesh.tau(t, e).expect("incident element")),
                mass: EdgeBasis { len: k }.mass_diagonal(mesh.edges[e].length),
            }
        })
        .collect();
    out.sort_by_key(|ie| ie.edge);
    out
}

/// Trace and flux coefficient blocks on one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeData {
    pub b: Vec<f64>,
    pub n: Vec<f64>,
}

impl EdgeData {
    pub fn zeros(k: usize) -> Self {
        Self {
            b: vec![0.0; k],
            n: vec![0.0; k],
        }
    }
}

/// Transmission data of one generation. `incoming[i][s]` is the message
/// received on interface edge `i` by the subdomain of side `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobinState {
    pub generation: usize,
    pub incoming: Vec<[EdgeData; 2]>,
}

impl RobinState {
    pub fn zeros(k: usize, edges: usize) -> Self {
        Self {
            generation: 0,
            incoming: (0..edges).map(|_| [EdgeData::zeros(k), EdgeData::zeros(k)]).collect(),
        }
    }

    /// Uniform random coefficients in `[-1, 1)` from a seeded generator.
    pub fn random(k: usize, edges: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = || EdgeData {
            b: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
            n: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        Self {
            generation: 0,
            incoming: (0..edges).map(|_| [block(), block()]).collect(),
        }
    }

    fn difference(&self, older: &RobinState) -> RobinState {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        RobinState {
            generation: self.generation,
            incoming: self
                .incoming
                .iter()
                .zip(&older.incoming)
                .map(|(a, b)| {
                    std::array::from_fn(|s| EdgeData {
                        b: sub(&a[s].b, &b[s].b),
                        n: sub(&a[s].n, &b[s].n),
                    })
                })
                .collect(),
        }
    }
}

/// Interface dofs of a subdomain on one interface edge.
#[derive(Debug, Clone)]
struct Port {
    iface: usize,
    side: usize,
    trace: usize,
    flux: usize,
    mass: Vec<f64>,
}

/// Robin-augmented local saddle system of one subdomain.
#[derive(Debug)]
pub struct SubdomainProblem {
    /// Subdomain id (1-based).
    pub id: usize,
    pub dofs: DofMap,
    /// Stabilizer over the local `lambda` dofs, without Robin terms.
    pub stabilizer: CsrMatrix,
    lu: SparseLu,
    load: Vec<f64>,
    ports: Vec<Port>,
}

/// Builds the local problem of subdomain `j`. Traces on the exterior
/// boundary are eliminated; interface edges keep private copies.
pub fn build_subdomain(
    disc: &Discretization,
    partition: &Partition,
    interfaces: &[InterfaceEdge],
    j: usize,
    f: &(impl Fn(Point) -> f64 + Sync),
    g: &(impl Fn(Point) -> f64 + Sync),
    weights: RobinWeights,
) -> Result<SubdomainProblem> {
    weights.validate()?;
    let mesh = disc.mesh;
    let k = disc.k;
    let elements = partition.elements_of(j);
    if elements.is_empty() {
        return Err(Error::InvalidArgument(format!("subdomain {j} has no elements")));
    }
    let dofs = DofMap::new(mesh, k, &elements, |e| mesh.edges[e].is_boundary);
    let mut s = SparseBuilder::new(dofs.n_lambda, dofs.n_lambda);
    let mut b = SparseBuilder::new(dofs.n_primal, dofs.n_lambda);
    scatter_operator(disc, &dofs, &mut s, &mut b);
    let stabilizer = s.clone().build();

    let mut ports = Vec::new();
    for (i, ie) in interfaces.iter().enumerate() {
        for side in 0..2 {
            if ie.subdomain[side] != j {
                continue;
            }
            let trace = dofs.trace_offset(ie.edge).expect("interface traces are kept");
            let flux = dofs.flux_offset(ie.edge);
            for c in 0..k {
                s.push(trace + c, trace + c, weights.beta * ie.mass[c]);
                s.push(flux + c, flux + c, weights.sigma * ie.mass[c]);
            }
            ports.push(Port {
                iface: i,
                side,
                trace,
                flux,
                mass: ie.mass.clone(),
            });
        }
    }
    let mut load = assemble_load(disc, &dofs, f, g)?;
    load.resize(dofs.len(), 0.0);
    let matrix = CsrMatrix::saddle(&s.build(), &b.build());
    let lu = SparseLu::new(matrix, format!("subdomain {j} ({} elements)", elements.len()))?;
    Ok(SubdomainProblem {
        id: j,
        dofs,
        stabilizer,
        lu,
        load,
        ports,
    })
}

impl SubdomainProblem {
    /// Local system matrix including the Robin terms.
    pub fn matrix(&self) -> &CsrMatrix {
        self.lu.matrix()
    }

    pub fn dim(&self) -> usize {
        self.lu.dim()
    }

    /// Solves with the given incoming messages; `with_load` adds the
    /// `f` and `g` contributions.
    pub fn solve(&self, incoming: &RobinState, with_load: bool) -> Result<Vec<f64>> {
        let mut rhs = if with_load {
            self.load.clone()
        } else {
            vec![0.0; self.load.len()]
        };
        for p in &self.ports {
            let msg = &incoming.incoming[p.iface][p.side];
            for (c, m) in p.mass.iter().enumerate() {
                rhs[p.trace + c] += m * msg.b[c];
                rhs[p.flux + c] += m * msg.n[c];
            }
        }
        self.lu.solve_checked(&rhs, LOCAL_RESIDUAL_LIMIT)
    }

    /// `s_j(l, l)` of a local solution vector.
    pub fn stabilizer_energy(&self, x: &[f64]) -> f64 {
        self.stabilizer.quadratic_form(&x[..self.dofs.n_lambda])
    }
}

/// Local solution vectors of all subdomains for one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolutions {
    pub generation: usize,
    pub x: Vec<Vec<f64>>,
}

impl LocalSolutions {
    fn accumulate(&mut self, delta: &LocalSolutions) {
        for (x, d) in self.x.iter_mut().zip(&delta.x) {
            for (a, b) in x.iter_mut().zip(d) {
                *a += b;
            }
        }
        self.generation = delta.generation;
    }
}

/// Both sides of the energy balance for one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAudit {
    /// Weighted norm of the incoming data.
    pub before: f64,
    /// Weighted norm of the outgoing data.
    pub after: f64,
    /// `sum_j s_j(l_j, l_j)` of the local solutions.
    pub stab_energy: f64,
    /// `|after - (before - 4 stab)| / max(|after|, eps)`.
    pub defect: f64,
}

/// Recovered interface multipliers on one edge, from one side.
#[derive(Debug, Clone, PartialEq)]
pub struct MuBlock {
    pub edge: usize,
    pub mu_b: Vec<f64>,
    pub mu_n: Vec<f64>,
}

/// Options of [`DdProblem::iterate`].
#[derive(Debug, Clone)]
pub struct DdParams<'a> {
    pub tol: f64,
    pub max_iters: usize,
    pub workers: usize,
    /// Initial transmission data; zero when `None`.
    pub initial: Option<RobinState>,
    pub reference: Option<&'a Solution>,
    /// Record elapsed wall time per sweep.
    pub timing: bool,
}

impl Default for DdParams<'_> {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
            workers: 1,
            initial: None,
            reference: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    /// `W(dr)` of the data produced by this sweep.
    pub weighted_residual: f64,
    /// `sum_j s_j(dl_j)` of the increments of this sweep.
    pub stab_energy: f64,
    pub energy_defect: Option<f64>,
    pub diff_to_monolithic: Option<f64>,
    /// `sum_j s_j(l_j)` of the iterates themselves.
    pub raw_stab_energy: f64,
    /// Edge-mass norm of all interface trace and flux copies.
    pub interface_norm: f64,
    pub jump_b: f64,
    pub jump_n: f64,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_weighted_residual: f64,
    /// Largest audit defect over sweeps `m >= 2` (0 when none ran).
    pub max_energy_defect: f64,
    pub records: Vec<IterationRecord>,
    pub u: PrimalCoeffs,
    /// Global `lambda` with interface copies taken from the lower-index element.
    pub lambda: WeakCoeffs,
    pub locals: LocalSolutions,
    pub state: RobinState,
    /// Largest `|mu_jk - mu_kj|` over interface edges after the last sweep,
    /// relative to the largest recovered value.
    pub mu_mismatch: f64,
}

impl IterationReport {
    /// Iteration trace as CSV. `wall_ms` stays empty unless timing was on.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("m,weighted_residual,stab_energy,energy_defect,diff_to_monolithic,wall_ms\n");
        let opt = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$e}")).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{},{},{}",
                r.m,
                r.weighted_residual,
                r.stab_energy,
                opt(r.energy_defect, 17),
                opt(r.diff_to_monolithic, 17),
                r.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default()
            );
        }
        out
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.trace_csv())?;
        Ok(())
    }
}

/// All subdomain problems of a partition together with the interface layout.
#[derive(Debug)]
pub struct DdProblem<'d, 'm> {
    pub disc: &'d Discretization<'m>,
    pub weights: RobinWeights,
    pub interfaces: Vec<InterfaceEdge>,
    pub subdomains: Vec<SubdomainProblem>,
    /// `(subdomain index, trace offset, flux offset)` per interface edge and side.
    ports: Vec<[(usize, usize, usize); 2]>,
}

impl<'d, 'm> DdProblem<'d, 'm> {
    pub fn new(
        disc: &'d Discretization<'m>,
        partition: &Partition,
        f: impl Fn(Point) -> f64 + Sync,
        g: impl Fn(Point) -> f64 + Sync,
        weights: RobinWeights,
    ) -> Result<Self> {
        weights.validate()?;
        if partition.subdomain_of.len() != disc.mesh.num_elements() {
            return Err(Error::InvalidArgument("partition does not match the mesh".into()));
        }
        let interfaces = interface_edges(disc.mesh, partition, disc.k);
        let subdomains: Vec<SubdomainProblem> = (1..=partition.count)
            .into_par_iter()
            .map(|j| build_subdomain(disc, partition, &interfaces, j, &f, &g, weights))
            .collect::<Result<_>>()?;
        let mut ports = vec![[(0, 0, 0); 2]; interfaces.len()];
        for (idx, sub) in subdomains.iter().enumerate() {
            for p in &sub.ports {
                ports[p.iface][p.side] = (idx, p.trace, p.flux);
            }
        }
        Ok(Self {
            disc,
            weights,
            interfaces,
            subdomains,
            ports,
        })
    }

    pub fn k(&self) -> usize {
        self.disc.k
    }

    pub fn zero_state(&self) -> RobinState {
        RobinState::zeros(self.k(), self.interfaces.len())
    }

    pub fn random_state(&self, seed: u64) -> RobinState {
        RobinState::random(self.k(), self.interfaces.len(), seed)
    }

    /// Trace and flux copy held by side `s` of interface edge `i`.
    pub fn interface_values(&self, locals: &LocalSolutions, i: usize, s: usize) -> EdgeData {
        let k = self.k();
        let (sub, tr, fl) = self.ports[i][s];
        let x = &locals.x[sub];
        EdgeData {
            b: x[tr..tr + k].to_vec(),
            n: x[fl..fl + k].to_vec(),
        }
    }

    fn check_state(&self, state: &RobinState) -> Result<()> {
        let k = self.k();
        let ok = state.incoming.len() == self.interfaces.len()
            && state.incoming.iter().flatten().all(|d| d.b.len() == k && d.n.len() == k);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "transmission data does not match {} interface edges of degree {k}",
                self.interfaces.len()
            )))
        }
    }

    fn solve_all(&self, incoming: &RobinState, with_load: bool) -> Result<LocalSolutions> {
        let x = self
            .subdomains
            .par_iter()
            .map(|p| p.solve(incoming, with_load))
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalSolutions {
            generation: incoming.generation + 1,
            x,
        })
    }

    /// `r[k->j] = 2 w l_k - r[j->k]` for every interface edge and direction.
    pub fn transmit(&self, locals: &LocalSolutions, previous: &RobinState) -> RobinState {
        let (beta, sigma) = (self.weights.beta, self.weights.sigma);
        let incoming = (0..self.interfaces.len())
            .map(|i| {
                std::array::from_fn(|s| {
                    let from = self.interface_values(locals, i, 1 - s);
                    let old = &previous.incoming[i][1 - s];
                    EdgeData {
                        b: from.b.iter().zip(&old.b).map(|(l, r)| 2.0 * beta * l - r).collect(),
                        n: from.n.iter().zip(&old.n).map(|(l, r)| 2.0 * sigma * l - r).collect(),
                    }
                })
            })
            .collect();
        RobinState {
            generation: locals.generation,
            incoming,
        }
    }

    /// One bulk-synchronous sweep: all local solves read generation `m - 1`,
    /// then all new data of generation `m` is formed in a fixed order.
    pub fn sweep(&self, state: &RobinState) -> Result<(LocalSolutions, RobinState)> {
        self.check_state(state)?;
        let locals = self.solve_all(state, true)?;
        let next = self.transmit(&locals, state);
        Ok((locals, next))
    }

    /// `beta^-1 sum ||r_b||^2 + sigma^-1 sum ||r_n||^2` over both directions.
    pub fn weighted_norm(&self, state: &RobinState) -> f64 {
        let (beta, sigma) = (self.weights.beta, self.weights.sigma);
        self.interfaces
            .iter()
            .zip(&state.incoming)
            .map(|(ie, pair)| {
                pair.iter()
                    .map(|d| {
                        (0..ie.mass.len())
                            .map(|c| ie.mass[c] * (d.b[c] * d.b[c] / beta + d.n[c] * d.n[c] / sigma))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn stabilizer_energy(&self, locals: &LocalSolutions) -> f64 {
        self.subdomains
            .iter()
            .zip(&locals.x)
            .map(|(p, x)| p.stabilizer_energy(x))
            .sum()
    }

    /// Checks `W(next) = W(prev) - 4 sum_j s_j(l_j)` where `locals` solve
    /// the homogeneous problems with data `prev` and `next` is the data
    /// they produce.
    pub fn energy_audit(&self, prev: &RobinState, next: &RobinState, locals: &LocalSolutions) -> Result<EnergyAudit> {
        for found in [next.generation, locals.generation] {
            if found != prev.generation + 1 {
                return Err(Error::GenerationMismatch {
                    expected: prev.generation + 1,
                    found,
                });
            }
        }
        let before = self.weighted_norm(prev);
        let after = self.weighted_norm(next);
        let stab_energy = self.stabilizer_energy(locals);
        let defect = (after - (before - 4.0 * stab_energy)).abs() / after.abs().max(f64::MIN_POSITIVE);
        Ok(EnergyAudit {
            before,
            after,
            stab_energy,
            defect,
        })
    }

    /// Multipliers of subdomain `j` on its interface with `k`, from the
    /// generation-`m` solutions and the generation-`(m - 1)` data:
    /// `mu_n tau = beta lb - r_b[k->j]`, `-mu_b tau = sigma ln - r_n[k->j]`.
    pub fn recover_mu(&self, locals: &LocalSolutions, prev: &RobinState, j: usize, k: usize) -> Result<Vec<MuBlock>> {
        if locals.generation != prev.generation + 1 {
            return Err(Error::GenerationMismatch {
                expected: prev.generation + 1,
                found: locals.generation,
            });
        }
        let (beta, sigma) = (self.weights.beta, self.weights.sigma);
        Ok(self
            .interfaces
            .iter()
            .enumerate()
            .filter_map(|(i, ie)| {
                let s = (0..2).find(|&s| ie.subdomain[s] == j && ie.subdomain[1 - s] == k)?;
                let lam = self.interface_values(locals, i, s);
                let r = &prev.incoming[i][s];
                let tau = ie.tau[s];
                Some(MuBlock {
                    edge: ie.edge,
                    mu_n: lam.b.iter().zip(&r.b).map(|(l, r)| tau * (beta * l - r)).collect(),
                    mu_b: lam.n.iter().zip(&r.n).map(|(l, r)| -tau * (sigma * l - r)).collect(),
                })
            })
            .collect())
    }

    /// Largest relative residual of the two lagged interface relations
    ///
    /// ```text
    /// mu_b,jk(m) tau_j + sigma ln,jk(m) = tau_j mu_b,kj(m-1) + sigma ln,kj(m-1)
    /// beta lb,jk(m) - mu_n,jk(m) tau_j  = beta lb,kj(m-1) + mu_n,kj(m-1) tau_k
    /// ```
    ///
    /// over all interface edges and both sides, given three consecutive
    /// data generations `m-2, m-1` and local solutions `m-1, m`.
    pub fn lagged_relation_residual(
        &self,
        older: &RobinState,
        prev_locals: &LocalSolutions,
        prev: &RobinState,
        locals: &LocalSolutions,
    ) -> Result<f64> {
        let (beta, sigma) = (self.weights.beta, self.weights.sigma);
        let mut worst: f64 = 0.0;
        for (i, ie) in self.interfaces.iter().enumerate() {
            for s in 0..2 {
                let (j, k) = (ie.subdomain[s], ie.subdomain[1 - s]);
                let now = self.recover_mu(locals, prev, j, k)?;
                let then = self.recover_mu(prev_locals, older, k, j)?;
                let now = now.iter().find(|m| m.edge == ie.edge).expect("edge on interface");
                let then = then.iter().find(|m| m.edge == ie.edge).expect("edge on interface");
                let lj = self.interface_values(locals, i, s);
                let lk = self.interface_values(prev_locals, i, 1 - s);
                let (tj, tk) = (ie.tau[s], ie.tau[1 - s]);
                for c in 0..self.k() {
                    let a_l = now.mu_b[c] * tj + sigma * lj.n[c];
                    let a_r = tj * then.mu_b[c] + sigma * lk.n[c];
                    let b_l = beta * lj.b[c] - now.mu_n[c] * tj;
                    let b_r = beta * lk.b[c] + then.mu_n[c] * tk;
                    let scale = [a_l, a_r, b_l, b_r].iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                    worst = worst.max((a_l - a_r).abs() / scale).max((b_l - b_r).abs() / scale);
                }
            }
        }
        Ok(worst)
    }

    /// Restriction of a monolithic solution to every subdomain, with
    /// interface copies set to the single-valued monolithic values.
    pub fn restrict(&self, sol: &Solution) -> LocalSolutions {
        let k = self.k();
        let (n0, n1) = (dim_p(k), dim_p(k - 1));
        let x = self
            .subdomains
            .iter()
            .map(|p| {
                let d = &p.dofs;
                let mut x = vec![0.0; d.len()];
                for &t in &d.elements {
                    let o = d.interior_offset(t);
                    x[o..o + n0].copy_from_slice(sol.lambda.interior_block(t));
                    let o = d.primal_offset(t);
                    x[o..o + n1].copy_from_slice(sol.u.block(t));
                }
                for &e in &d.edges {
                    if let Some(o) = d.trace_offset(e) {
                        x[o..o + k].copy_from_slice(sol.lambda.trace_block(e));
                    }
                    let o = d.flux_offset(e);
                    x[o..o + k].copy_from_slice(sol.lambda.flux_block(e));
                }
                x
            })
            .collect();
        LocalSolutions { generation: 0, x }
    }

    /// Transmission data for which the restricted monolithic solution
    /// solves every local problem: `r = M^-1 (A x - b)` on interface dofs.
    pub fn fixed_point_state(&self, sol: &Solution) -> RobinState {
        let k = self.k();
        let restricted = self.restrict(sol);
        let residuals: Vec<Vec<f64>> = self
            .subdomains
            .iter()
            .zip(&restricted.x)
            .map(|(p, x)| {
                let ax = p.matrix().mul_vec(x);
                ax.iter().zip(&p.load).map(|(a, b)| a - b).collect()
            })
            .collect();
        let incoming = self
            .interfaces
            .iter()
            .enumerate()
            .map(|(i, ie)| {
                std::array::from_fn(|s| {
                    let (sub, tr, fl) = self.ports[i][s];
                    let res = &residuals[sub];
                    EdgeData {
                        b: (0..k).map(|c| res[tr + c] / ie.mass[c]).collect(),
                        n: (0..k).map(|c| res[fl + c] / ie.mass[c]).collect(),
                    }
                })
            })
            .collect();
        RobinState {
            generation: 0,
            incoming,
        }
    }

    /// Primal iterate on the whole mesh.
    pub fn gather_u(&self, locals: &LocalSolutions) -> PrimalCoeffs {
        let mesh = self.disc.mesh;
        let n1 = dim_p(self.k() - 1);
        let mut values = vec![0.0; mesh.num_elements() * n1];
        for (p, x) in self.subdomains.iter().zip(&locals.x) {
            for &t in &p.dofs.elements {
                let o = p.dofs.primal_offset(t);
                values[t * n1..(t + 1) * n1].copy_from_slice(&x[o..o + n1]);
            }
        }
        PrimalCoeffs { k: self.k(), values }
    }

    /// Dual iterate on the whole mesh; interface edges take the copy of
    /// their lower-index element.
    pub fn gather_lambda(&self, locals: &LocalSolutions) -> WeakCoeffs {
        let mesh = self.disc.mesh;
        let k = self.k();
        let n0 = dim_p(k);
        let mut w = WeakCoeffs::zeros(mesh, k);
        let mut foreign = vec![false; mesh.num_edges()];
        for ie in &self.interfaces {
            foreign[ie.edge] = true;
        }
        for (p, x) in self.subdomains.iter().zip(&locals.x) {
            let d = &p.dofs;
            for &t in &d.elements {
                let o = d.interior_offset(t);
                w.interior[t * n0..(t + 1) * n0].copy_from_slice(&x[o..o + n0]);
            }
            for &e in &d.edges {
                if foreign[e] {
                    continue;
                }
                if let Some(o) = d.trace_offset(e) {
                    w.trace[e * k..(e + 1) * k].copy_from_slice(&x[o..o + k]);
                }
                let o = d.flux_offset(e);
                w.flux[e * k..(e + 1) * k].copy_from_slice(&x[o..o + k]);
            }
        }
        for (i, ie) in self.interfaces.iter().enumerate() {
            let v = self.interface_values(locals, i, 0);
            w.trace[ie.edge * k..(ie.edge + 1) * k].copy_from_slice(&v.b);
            w.flux[ie.edge * k..(ie.edge + 1) * k].copy_from_slice(&v.n);
        }
        w
    }

    /// Edge-mass norms of the trace and flux jumps across all interfaces.
    pub fn jump_norms(&self, locals: &LocalSolutions) -> (f64, f64) {
        let (mut jb, mut jn) = (0.0, 0.0);
        for (i, ie) in self.interfaces.iter().enumerate() {
            let (a, b) = (self.interface_values(locals, i, 0), self.interface_values(locals, i, 1));
            for (c, m) in ie.mass.iter().enumerate() {
                jb += m * (a.b[c] - b.b[c]).powi(2);
                jn += m * (a.n[c] - b.n[c]).powi(2);
            }
        }
        (jb.sqrt(), jn.sqrt())
    }

    fn interface_norm(&self, locals: &LocalSolutions) -> f64 {
        let mut sum = 0.0;
        for (i, ie) in self.interfaces.iter().enumerate() {
            for s in 0..2 {
                let v = self.interface_values(locals, i, s);
                for (c, m) in ie.mass.iter().enumerate() {
                    sum += m * (v.b[c] * v.b[c] + v.n[c] * v.n[c]);
                }
            }
        }
        sum.sqrt()
    }

    fn primal_distance(&self, u: &PrimalCoeffs, reference: &PrimalCoeffs) -> f64 {
        (0..self.disc.mesh.num_elements())
            .map(|t| {
                let d: Vec<f64> = u.block(t).iter().zip(reference.block(t)).map(|(a, b)| a - b).collect();
                quad_form(self.disc.kernels[t].gram_low(), &d)
            })
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    fn record(
        &self,
        m: usize,
        delta: &RobinState,
        dlocals: &LocalSolutions,
        locals: &LocalSolutions,
        energy_defect: Option<f64>,
        params: &DdParams,
        start: Instant,
    ) -> IterationRecord {
        let (jump_b, jump_n) = self.jump_norms(locals);
        IterationRecord {
            m,
            weighted_residual: self.weighted_norm(delta),
            stab_energy: self.stabilizer_energy(dlocals),
            energy_defect,
            diff_to_monolithic: params
                .reference
                .map(|r| self.primal_distance(&self.gather_u(locals), &r.u)),
            raw_stab_energy: self.stabilizer_energy(locals),
            interface_norm: self.interface_norm(locals),
            jump_b,
            jump_n,
            wall_ms: params.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
        }
    }

    /// Runs sweeps until `sum_j s_j(dl) <= tol^2` and
    /// `sqrt(W(dr)) <= tol * max_m sqrt(W(r(m)))`, or `max_iters` is hit.
    pub fn iterate(&self, params: &DdParams) -> Result<IterationReport> {
        if params.tol.is_nan() || params.tol <= 0.0 {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", params.tol)));
        }
        if params.max_iters == 0 || params.workers == 0 {
            return Err(Error::InvalidArgument("max_iters and workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {} workers: {e}", params.workers)))?;
        pool.install(|| self.run(params))
    }

    fn run(&self, params: &DdParams) -> Result<IterationReport> {
        let start = Instant::now();
        let initial = params.initial.clone().unwrap_or_else(|| self.zero_state());
        self.check_state(&initial)?;
        let initial = RobinState {
            generation: 0,
            ..initial
        };

        let mut raw_prev = initial;
        let mut locals = self.solve_all(&raw_prev, true)?;
        let mut raw = self.transmit(&locals, &raw_prev);
        let mut delta = raw.difference(&raw_prev);
        let mut scale = self.weighted_norm(&raw_prev).sqrt().max(self.weighted_norm(&raw).sqrt());
        let mut records = vec![self.record(1, &delta, &locals, &locals, None, params, start)];
        let mut max_defect: f64 = 0.0;

        let converged_at = |rec: &IterationRecord, scale: f64| {
            let rel = if rec.weighted_residual == 0.0 {
                0.0
            } else {
                rec.weighted_residual.sqrt() / scale
            };
            rec.stab_energy <= params.tol * params.tol && rel <= params.tol
        };
        let mut converged = self.interfaces.is_empty() || converged_at(&records[0], scale);
        let mut m = 1;
        while !converged && m < params.max_iters {
            m += 1;
            let dlocals = self.solve_all(&delta, false)?;
            let dnext = self.transmit(&dlocals, &delta);
            let audit = self.energy_audit(&delta, &dnext, &dlocals)?;
            max_defect = max_defect.max(audit.defect);
            locals.accumulate(&dlocals);
            raw_prev = raw;
            raw = self.transmit(&locals, &raw_prev);
            delta = dnext;
            scale = scale.max(self.weighted_norm(&raw).sqrt());
            let rec = self.record(m, &delta, &dlocals, &locals, Some(audit.defect), params, start);
            converged = converged_at(&rec, scale);
            records.push(rec);
        }

        let mut mu_mismatch: f64 = 0.0;
        let mut mu_scale: f64 = 0.0;
        for ie in &self.interfaces {
            let (j, k) = (ie.subdomain[0], ie.subdomain[1]);
            let a = self.recover_mu(&locals, &raw_prev, j, k)?;
            let b = self.recover_mu(&locals, &raw_prev, k, j)?;
            let a = a.iter().find(|x| x.edge == ie.edge).expect("edge on interface");
            let b = b.iter().find(|x| x.edge == ie.edge).expect("edge on interface");
            for (x, y) in a.mu_b.iter().chain(&a.mu_n).zip(b.mu_b.iter().chain(&b.mu_n)) {
                mu_mismatch = mu_mismatch.max((x - y).abs());
                mu_scale = mu_scale.max(x.abs()).max(y.abs());
            }
        }
        if mu_scale > 0.0 {
            mu_mismatch /= mu_scale;
        }

        Ok(IterationReport {
            iterations: m,
            converged,
            final_weighted_residual: records.last().map_or(0.0, |r| r.weighted_residual),
            max_energy_defect: max_defect,
            u: self.gather_u(&locals),
            lambda: self.gather_lambda(&locals),
            records,
            locals,
            state: raw,
            mu_mismatch,
        })
    }
}
