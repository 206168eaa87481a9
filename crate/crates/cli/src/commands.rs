//! The six batch commands.

use std::collections::BTreeMap;
use std::path::Path;

use num_traits::ToPrimitive;
use serde::Serialize;

use lds_core::evolution::{
    generate_flow_system, integrate_flow, FlowParameter, FlowPath, FlowTarget,
};
use lds_core::lattice::{LatticeSpec, MultiIndex};
use lds_core::oracle::{direct_correlator, OracleConfig, OracleMethod, OracleResult};
use lds_core::propagators;
use lds_core::reduction::{ReductionTrace, Reducer};
use lds_core::symmetry::{self, count_primitive_basis, CountLevel};

use crate::config::{
    BasisKind, FlowKind, JobSpec, MethodKind, OutputFormat, PathKind, SpaceKind,
};
use crate::report::{combination_json, emit, to_json, Report, TermJson};
use crate::CliError;

fn lattice_spec(job: &JobSpec) -> Result<LatticeSpec, CliError> {
    let section = job
        .lattice
        .as_ref()
        .ok_or_else(|| CliError::Usage("missing [lattice] section".into()))?;
    section.to_spec().map_err(CliError::Usage)
}

fn targets(job: &JobSpec, spec: &LatticeSpec) -> Result<Vec<MultiIndex>, CliError> {
    let section = job.lattice.as_ref().expect("checked by lattice_spec");
    if job.targets.is_empty() {
        return Err(CliError::Usage("missing [targets] section".into()));
    }
    job.targets
        .iter()
        .map(|dense| section.index(spec, dense).map_err(CliError::Usage))
        .collect()
}

/// Memo cap from the environment, if set.
fn memo_cap() -> Option<usize> {
    std::env::var("LDS_MEMO_CAP").ok().and_then(|s| s.parse().ok())
}

fn reducer_for(spec: &LatticeSpec) -> Reducer<'_> {
    match memo_cap() {
        Some(cap) => Reducer::with_memo_cap(spec, cap),
        None => Reducer::new(spec),
    }
}

/// Splits `items` across up to `threads` workers, preserving order.
fn run_parallel<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut out: Vec<Option<R>> = Vec::new();
    out.resize_with(items.len(), || None);
    std::thread::scope(|scope| {
        for (slot_chunk, item_chunk) in out.chunks_mut(chunk).zip(items.chunks(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (slot, item) in slot_chunk.iter_mut().zip(item_chunk) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

#[derive(Serialize)]
struct TraceJson {
    steps: u64,
    visited: u64,
    max_branching: usize,
}

impl From<ReductionTrace> for TraceJson {
    fn from(t: ReductionTrace) -> Self {
        TraceJson {
            steps: t.steps,
            visited: t.visited,
            max_branching: t.max_branching,
        }
    }
}

#[derive(Serialize)]
struct ReduceEntry {
    target: Vec<u32>,
    terms: Vec<TermJson>,
    trace: TraceJson,
}

fn require_json(job: &JobSpec, command: &str) -> Result<(), CliError> {
    if job.format != OutputFormat::Json {
        return Err(CliError::Usage(format!(
            "{command} emits structured results; only json is supported"
        )));
    }
    Ok(())
}

pub fn cmd_reduce(job: &JobSpec, out: Option<&Path>) -> Result<(), CliError> {
    require_json(job, "reduce")?;
    let spec = lattice_spec(job)?;
    let nus = targets(job, &spec)?;
    let results: Vec<Result<ReduceEntry, lds_core::Error>> =
        run_parallel(nus, job.threads, |nu| {
            let mut reducer = reducer_for(&spec);
            let (combo, trace) = reducer.reduce(nu)?;
            Ok(ReduceEntry {
                target: nu.dense(&spec),
                terms: combination_json(&combo, &spec),
                trace: trace.into(),
            })
        });
    let entries: Vec<ReduceEntry> = results
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(CliError::Compute)?;
    let report = Report {
        command: "reduce".into(),
        config: job.to_config_string(),
        results: entries,
    };
    emit(out, &to_json(&report)).map_err(CliError::Io)
}

#[derive(Serialize)]
struct CountEntry {
    extent: u32,
    dimension: usize,
    m_anh: u32,
    level: String,
    count: String,
}

pub fn cmd_count(job: &JobSpec, out: Option<&Path>) -> Result<(), CliError> {
    let section = job
        .count
        .as_ref()
        .ok_or_else(|| CliError::Usage("missing [count] section".into()))?;
    let mut entries = Vec::new();
    for &extent in &section.extents {
        for &level in &section.levels {
            let count = count_primitive_basis(extent, section.dimension, section.m_anh, level)
                .map_err(|e| match e {
                    lds_core::Error::EnumerationTooLarge(_) => CliError::Usage(e.to_string()),
                    other => CliError::Compute(other),
                })?;
            entries.push(CountEntry {
                extent,
                dimension: section.dimension,
                m_anh: section.m_anh,
                level: match level {
                    CountLevel::None => "none".into(),
                    CountLevel::Parity => "parity".into(),
                    CountLevel::Full => "full".into(),
                },
                count: count.to_string(),
            });
        }
    }
    match job.format {
        OutputFormat::Json => {
            let report = Report {
                command: "count".into(),
                config: job.to_config_string(),
                results: entries,
            };
            emit(out, &to_json(&report)).map_err(CliError::Io)
        }
        OutputFormat::Csv => {
            let mut text = String::from("extent,dimension,m_anh,level,count\n");
            for e in entries {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    e.extent, e.dimension, e.m_anh, e.level, e.count
                ));
            }
            emit(out, &text).map_err(CliError::Io)
        }
    }
}

#[derive(Serialize)]
struct SeriesPoint {
    at: f64,
    value: f64,
}

pub fn cmd_propagator(job: &JobSpec, out: Option<&Path>) -> Result<(), CliError> {
    let section = job
        .propagator
        .as_ref()
        .ok_or_else(|| CliError::Usage("missing [propagator] section".into()))?;
    let mut series = Vec::new();
    match section.space {
        SpaceKind::Line => {
            for &t in &section.times {
                series.push(SeriesPoint {
                    at: t,
                    value: propagators::propagator_line(section.m, t),
                });
            }
        }
        SpaceKind::Circle => {
            let period = section
                .period
                .ok_or_else(|| CliError::Usage("circle propagator needs period".into()))?;
            for &t in &section.times {
                let value = propagators::propagator_circle(section.m, period, t, job.tol)
                    .map_err(CliError::Compute)?;
                series.push(SeriesPoint { at: t, value });
            }
        }
        SpaceKind::Lattice => {
            let spacing = section
                .spacing
                .ok_or_else(|| CliError::Usage("lattice propagator needs spacing".into()))?;
            for &n in &section.points {
                series.push(SeriesPoint {
                    at: n as f64 * spacing,
                    value: propagators::propagator_infinite_lattice(section.m, spacing, n),
                });
            }
        }
        SpaceKind::Circular => {
            let spacing = section
                .spacing
                .ok_or_else(|| CliError::Usage("circular propagator needs spacing".into()))?;
            let sites = section
                .sites
                .ok_or_else(|| CliError::Usage("circular propagator needs sites".into()))?;
            for &n in &section.points {
                series.push(SeriesPoint {
                    at: n as f64 * spacing,
                    value: propagators::propagator_circular_lattice(section.m, sites, spacing, n),
                });
            }
        }
    }
    match job.format {
        OutputFormat::Json => {
            let report = Report {
                command: "propagator".into(),
                config: job.to_config_string(),
                results: series,
            };
            emit(out, &to_json(&report)).map_err(CliError::Io)
        }
        OutputFormat::Csv => {
            let mut text = String::from("at,value\n");
            for p in series {
                text.push_str(&format!("{:e},{:e}\n", p.at, p.value));
            }
            emit(out, &text).map_err(CliError::Io)
        }
    }
}

#[derive(Serialize)]
struct EvolveResult {
    basis: Vec<Vec<u32>>,
    values: Vec<f64>,
    vacuum: f64,
    error_estimate: f64,
    normalized_targets: Vec<NormalizedTarget>,
}

#[derive(Serialize)]
struct NormalizedTarget {
    target: Vec<u32>,
    normalized: f64,
}

pub fn cmd_evolve(job: &JobSpec, out: Option<&Path>) -> Result<(), CliError> {
    require_json(job, "evolve")?;
    let spec = lattice_spec(job)?;
    let flow = job
        .flow
        .as_ref()
        .ok_or_else(|| CliError::Usage("missing [flow] section".into()))?;

    let parity = spec.is_even();
    let basis = match flow.basis {
        BasisKind::Full => symmetry::primitive_basis(&spec, parity),
        BasisKind::Orbit => symmetry::orbit_basis(&spec, parity),
    }
    .map_err(CliError::Compute)?;

    let parameter = match flow.parameter {
        FlowKind::W => FlowParameter::GlobalW,
        FlowKind::K => FlowParameter::GlobalK,
        FlowKind::Lambda => FlowParameter::GlobalLambda,
        FlowKind::PerBond => FlowParameter::PerBondW,
    };
    let mut system =
        generate_flow_system(&spec, parameter, &basis).map_err(CliError::Compute)?;
    system.set_start(flow.start.clone());

    let target = match parameter {
        FlowParameter::PerBondW => FlowTarget::PerBond {
            values: flow
                .target
                .iter()
                .map(|q| q.to_f64().unwrap_or(f64::NAN))
                .collect(),
            path: match flow.path {
                PathKind::Diagonal => FlowPath::Diagonal,
                PathKind::Sequential => FlowPath::Sequential,
            },
        },
        _ => {
            let first = flow
                .target
                .first()
                .ok_or_else(|| CliError::Usage("flow target missing".into()))?;
            FlowTarget::Scalar(first.to_f64().unwrap_or(f64::NAN))
        }
    };
    let state = integrate_flow(&system, &target, job.tol).map_err(CliError::Compute)?;

    let vacuum_pos = basis
        .iter()
        .position(|nu| nu.is_empty())
        .ok_or_else(|| CliError::Usage("basis lacks the vacuum".into()))?;
    let vacuum = state.values[vacuum_pos];

    // normalized correlators for the requested targets, through reduction
    let mut normalized_targets = Vec::new();
    if !job.targets.is_empty() {
        let section = job.lattice.as_ref().unwrap();
        // evaluate reductions on the endpoint (numeric) couplings
        let mut assignment: BTreeMap<lds_core::ring::Symbol, num_rational::BigRational> =
            BTreeMap::new();
        for (sym, value) in system.flow_symbols().iter().zip(flow.target.iter().cycle()) {
            assignment.insert(sym.clone(), value.clone());
        }
        let endpoint_spec = spec.substitute(&assignment);
        let mut reducer = reducer_for(&endpoint_spec);
        for dense in &job.targets {
            let nu = section.index(&spec, dense).map_err(CliError::Usage)?;
            let (combo, _) = reducer.reduce(&nu).map_err(CliError::Compute)?;
            let mut total = 0.0;
            for (mu, coeff) in combo.iter() {
                let position = basis.iter().position(|b| b == mu).or_else(|| {
                    let canonical = symmetry::canonicalize(mu, &endpoint_spec).canonical;
                    basis.iter().position(|b| b == &canonical)
                });
                let position = position.ok_or_else(|| {
                    CliError::Usage(format!("reduced term of {nu} missing from basis"))
                })?;
                let q = coeff
                    .as_rational()
                    .and_then(|q| q.to_f64())
                    .ok_or_else(|| {
                        CliError::Usage("endpoint couplings must be numeric".into())
                    })?;
                total += q * state.values[position];
            }
            normalized_targets.push(NormalizedTarget {
                target: dense.clone(),
                normalized: total / vacuum,
            });
        }
    }

    let report = Report {
        command: "evolve".into(),
        config: job.to_config_string(),
        results: EvolveResult {
            basis: basis.iter().map(|nu| nu.dense(&spec)).collect(),
            values: state.values,
            vacuum,
            error_estimate: state.error_estimate,
            normalized_targets,
        },
    };
    emit(out, &to_json(&report)).map_err(CliError::Io)
}

#[derive(Serialize)]
struct OracleEntry {
    target: Vec<u32>,
    unnormalized: f64,
    normalized: f64,
    error: f64,
}

pub fn cmd_oracle(job: &JobSpec, out: Option<&Path>) -> Result<(), CliError> {
    let spec = lattice_spec(job)?;
    let nus = targets(job, &spec)?;
    let section = job.oracle.clone().unwrap_or_default();
    let cfg = OracleConfig {
        method: match section.method {
            MethodKind::Quadrature => OracleMethod::TensorQuadrature {
                nodes_per_axis: section.nodes,
            },
            MethodKind::MonteCarlo => OracleMethod::MonteCarlo {
                samples: section.samples,
            },
        },
        phi_max: section.phi_max,
        seed: job.seed,
        tol: job.tol,
    };
    let results: Vec<Result<OracleEntry, lds_core::Error>> =
        run_parallel(nus, job.threads, |nu| {
            let result: OracleResult<f64> = direct_correlator(&spec, nu, &cfg)?;
            Ok(OracleEntry {
                target: nu.dense(&spec),
                unnormalized: result.unnormalized,
                normalized: result.normalized,
                error: result.error,
            })
        });
    let entries: Vec<OracleEntry> = results
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(CliError::Compute)?;
    match job.format {
        OutputFormat::Json => {
            let report = Report {
                command: "oracle".into(),
                config: job.to_config_string(),
                results: entries,
            };
            emit(out, &to_json(&report)).map_err(CliError::Io)
        }
        OutputFormat::Csv => {
            let mut text = String::from("target,unnormalized,normalized,error\n");
            for e in entries {
                let joined: Vec<String> = e.target.iter().map(|o| o.to_string()).collect();
                text.push_str(&format!(
                    "{},{:e},{:e},{:e}\n",
                    joined.join(" "),
                    e.unnormalized,
                    e.normalized,
                    e.error
                ));
            }
            emit(out, &text).map_err(CliError::Io)
        }
    }
}

pub use crate::verify::cmd_verify;
