use std::path::{Path, PathBuf};

use pdwg::checks::run_invariant_suite;
use pdwg::dd::{DdParams, DdProblem, IterationReport, RobinWeights};
use pdwg::linalg::write_vector;
use pdwg::mesh::{build_uniform_mesh, Mesh2D};
use pdwg::partition::{build_partition, Partition, PartitionStrategy};
use pdwg::pdwg::{assemble, primal_l2_norm, solve, solve_monolithic, Discretization};
use pdwg::verification::{error_triple, error_triple_of, study, ErrorTriple, ManufacturedCase, Rate, StudyMode, StudyTable};
use serde_json::{json, Map, Value};

use crate::args::{Command, Format, Options, PartitionKind, Weight};
use crate::CliError;

pub const SCHEMA: &str = "pdwg-v1";

/// Runs one subcommand. `Ok(false)` reports a completed run whose outcome
/// is a failure (an invariant violated, an iteration that did not converge).
pub fn run(command: &Command) -> Result<bool, CliError> {
    let opts = command.options();
    opts.validate()?;
    match command {
        Command::Solve(o) => run_solve(o),
        Command::DdSolve(o) => run_dd(o),
        Command::Study(o) => run_study(o),
        Command::Check(o) => run_check(o),
        Command::MeshInfo(o) => run_mesh_info(o),
    }
}

fn load_mesh(opts: &Options) -> Result<Mesh2D, CliError> {
    let mesh = match &opts.mesh_in {
        Some(path) => Mesh2D::read(path)?,
        None => build_uniform_mesh(opts.n)?,
    };
    if let Some(path) = &opts.mesh_out {
        mesh.write(path)?;
    }
    Ok(mesh)
}

fn strategy(opts: &Options) -> PartitionStrategy {
    match opts.partition.unwrap_or(PartitionKind::PerElement) {
        PartitionKind::PerElement => PartitionStrategy::PerElement,
        PartitionKind::Blocks => PartitionStrategy::Blocks(opts.p),
    }
}

fn resolve_weights(opts: &Options, mesh: &Mesh2D) -> RobinWeights {
    let auto = RobinWeights::auto(mesh);
    let pick = |w: Weight, default: f64| match w {
        Weight::Auto => default,
        Weight::Value(v) => v,
    };
    RobinWeights {
        beta: pick(opts.beta, auto.beta),
        sigma: pick(opts.sigma, auto.sigma),
    }
}

fn emit(opts: &Options, text: &str) -> Result<(), CliError> {
    match &opts.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Output(path.clone(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Depth-first `(dotted key, scalar)` pairs of a JSON object.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn render_record(value: &Value, format: Format) -> String {
    match format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(value).expect("serializable")),
        Format::Text => {
            let mut pairs = Vec::new();
            flatten("", value, &mut pairs);
            let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            pairs.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
        }
        Format::Csv => {
            let mut pairs = Vec::new();
            flatten("", value, &mut pairs);
            let (keys, vals): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            format!("{}\n{}\n", keys.join(","), vals.join(","))
        }
    }
}

fn errors_json(e: &ErrorTriple) -> Value {
    json!({ "triple_bar": e.triple_bar, "e_h_l2": e.e_h_l2, "lambda0_l2": e.lambda0_l2 })
}

fn mesh_json(mesh: &Mesh2D) -> Value {
    json!({
        "vertices": mesh.num_vertices(),
        "elements": mesh.num_elements(),
        "edges": mesh.num_edges(),
        "interior_edges": mesh.interior_edge_count(),
        "h_max": mesh.h_max,
    })
}

fn header(command: &str, opts: &Options, case: &ManufacturedCase) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema".into(), SCHEMA.into());
    m.insert("command".into(), command.into());
    m.insert("case".into(), case.name.into());
    m.insert("k".into(), opts.k.into());
    m
}

fn run_solve(opts: &Options) -> Result<bool, CliError> {
    let case = ManufacturedCase::by_name(&opts.case)?;
    let mesh = load_mesh(opts)?;
    let disc = Discretization::new(&mesh, opts.k)?;
    let sys = assemble(&disc, case.f, |p| case.g(p))?;
    if let Some(path) = &opts.dump_system {
        sys.matrix().write_matrix_market(path)?;
        write_vector(&rhs_path(path), &sys.rhs())?;
    }
    let sol = solve_monolithic(&mesh, &sys)?;
    let errors = error_triple(&disc, &sol, &case)?;
    let mut out = header("solve", opts, &case);
    out.insert("mesh".into(), mesh_json(&mesh));
    out.insert(
        "dofs".into(),
        json!({ "lambda": sys.dofs.n_lambda, "primal": sys.dofs.n_primal }),
    );
    out.insert("errors".into(), errors_json(&errors));
    out.insert("harmonicity_defect".into(), disc.weak_harmonicity_defect(&sol.lambda).into());
    out.insert("u_l2".into(), primal_l2_norm(&disc, &sol.u).into());
    emit(opts, &render_record(&Value::Object(out), opts.format.unwrap_or(Format::Json)))?;
    Ok(true)
}

fn rhs_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".rhs");
    PathBuf::from(s)
}

fn dd_json(report: &IterationReport, partition: &Partition, weights: RobinWeights, strategy: PartitionStrategy) -> Value {
    let last = report.records.last();
    json!({
        "partition": match strategy {
            PartitionStrategy::PerElement => "per-element".to_string(),
            PartitionStrategy::Blocks(p) => format!("blocks({p})"),
        },
        "subdomains": partition.count,
        "interface_edges": partition.interface_edge_count(),
        "beta": weights.beta,
        "sigma": weights.sigma,
        "iterations": report.iterations,
        "converged": report.converged,
        "final_weighted_residual": report.final_weighted_residual,
        "max_energy_defect": report.max_energy_defect,
        "mu_mismatch": report.mu_mismatch,
        "diff_to_monolithic": last.and_then(|r| r.diff_to_monolithic),
        "jump_b": last.map(|r| r.jump_b),
        "jump_n": last.map(|r| r.jump_n),
    })
}

fn run_dd(opts: &Options) -> Result<bool, CliError> {
    let case = ManufacturedCase::by_name(&opts.case)?;
    let mesh = load_mesh(opts)?;
    let disc = Discretization::new(&mesh, opts.k)?;
    let strategy = strategy(opts);
    let partition = build_partition(&mesh, strategy)?;
    let weights = resolve_weights(opts, &mesh);
    let reference = solve(&disc, case.f, |p| case.g(p))?;
    let problem = DdProblem::new(&disc, &partition, case.f, |p| case.g(p), weights)?;
    let report = problem.iterate(&DdParams {
        tol: opts.tol,
        max_iters: opts.max_iters,
        workers: opts.workers,
        initial: opts.random_initial.then(|| problem.random_state(opts.seed)),
        reference: Some(&reference),
        timing: opts.timing,
    })?;
    if let Some(path) = &opts.trace {
        report.write_trace(path)?;
    }
    let errors = error_triple_of(&disc, &report.u, &report.lambda, &case)?;
    let mut out = header("dd-solve", opts, &case);
    out.insert("mesh".into(), mesh_json(&mesh));
    out.insert("errors".into(), errors_json(&errors));
    out.insert("dd".into(), dd_json(&report, &partition, weights, strategy));
    emit(opts, &render_record(&Value::Object(out), opts.format.unwrap_or(Format::Json)))?;
    if !report.converged {
        eprintln!(
            "dd-solve: no convergence to tol {:e} within {} sweeps",
            opts.tol, opts.max_iters
        );
    }
    Ok(report.converged)
}

fn rate_json(r: Option<Rate>) -> Value {
    match r {
        Some(Rate::Finite(v)) => v.into(),
        Some(Rate::Exact) => "exact".into(),
        None => Value::Null,
    }
}

fn study_json(table: &StudyTable) -> Value {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            let mut row = json!({ "n": r.n, "h": r.h, "harmonicity_defect": r.harmonicity_defect });
            match &r.errors {
                Ok(e) => row["errors"] = errors_json(e),
                Err(msg) => row["failure"] = msg.clone().into(),
            }
            if let Some(dd) = &r.dd {
                row["dd"] = json!({
                    "iterations": dd.iterations,
                    "converged": dd.converged,
                    "max_energy_defect": dd.max_energy_defect,
                });
            }
            row
        })
        .collect();
    let col = |c: Vec<Option<Rate>>| Value::Array(c.into_iter().map(rate_json).collect());
    json!({
        "schema": SCHEMA,
        "command": "study",
        "case": table.case,
        "k": table.k,
        "rows": rows,
        "rates": {
            "primal": col(table.primal_rates()),
            "triple_bar": col(table.triple_bar_rates()),
            "e_h": col(table.e_h_rates()),
            "lambda0": col(table.lambda0_rates()),
        },
    })
}

fn run_study(opts: &Options) -> Result<bool, CliError> {
    let case = ManufacturedCase::by_name(&opts.case)?;
    let n_list: Vec<usize> = (0..opts.levels).map(|i| opts.n << i).collect();
    let mode = if opts.dd {
        let weights = match (opts.beta, opts.sigma) {
            (Weight::Auto, Weight::Auto) => None,
            (Weight::Value(beta), Weight::Value(sigma)) => Some(RobinWeights { beta, sigma }),
            _ => {
                return Err(CliError::Config(
                    "a study uses either mesh-scaled weights (both auto) or fixed weights (both given)".into(),
                ))
            }
        };
        StudyMode::Dd {
            strategy: strategy(opts),
            weights,
            tol: opts.tol,
            max_iters: opts.max_iters,
            workers: opts.workers,
        }
    } else {
        StudyMode::Monolithic
    };
    let table = study(&case, opts.k, &n_list, &mode)?;
    let text = match opts.format.unwrap_or(Format::Text) {
        Format::Text => table.to_text(),
        Format::Csv => table.to_csv(),
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&study_json(&table)).expect("serializable")),
    };
    emit(opts, &text)?;
    let ok = table.rows.iter().all(|r| r.errors.is_ok() && r.dd.is_none_or(|d| d.converged));
    Ok(ok)
}

fn run_check(opts: &Options) -> Result<bool, CliError> {
    let outcomes = run_invariant_suite(opts.seed);
    let passed = outcomes.iter().all(|c| c.passed);
    let text = match opts.format.unwrap_or(Format::Text) {
        Format::Json => {
            let checks: Vec<Value> = outcomes
                .iter()
                .map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail }))
                .collect();
            let v = json!({ "schema": SCHEMA, "command": "check", "seed": opts.seed, "passed": passed, "checks": checks });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("serializable"))
        }
        Format::Csv => {
            let mut s = String::from("name,passed,detail\n");
            for c in &outcomes {
                s.push_str(&format!("{},{},\"{}\"\n", c.name, c.passed, c.detail.replace('"', "'")));
            }
            s
        }
        Format::Text => outcomes
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect(),
    };
    emit(opts, &text)?;
    for c in outcomes.iter().filter(|c| !c.passed) {
        eprintln!("invariant violated: {} ({})", c.name, c.detail);
    }
    Ok(passed)
}

fn run_mesh_info(opts: &Options) -> Result<bool, CliError> {
    let mesh = load_mesh(opts)?;
    let mut out = Map::new();
    out.insert("schema".into(), SCHEMA.into());
    out.insert("command".into(), "mesh-info".into());
    out.insert("mesh".into(), mesh_json(&mesh));
    out.insert("boundary_edges".into(), (mesh.num_edges() - mesh.interior_edge_count()).into());
    out.insert("structured_n".into(), mesh.structured_size().into());
    if opts.partition.is_some() {
        let part = build_partition(&mesh, strategy(opts))?;
        out.insert(
            "partition".into(),
            json!({ "subdomains": part.count, "interface_edges": part.interface_edge_count(), "pairs": part.interfaces.len() }),
        );
    }
    emit(opts, &render_record(&Value::Object(out), opts.format.unwrap_or(Format::Json)))?;
    Ok(true)
}
