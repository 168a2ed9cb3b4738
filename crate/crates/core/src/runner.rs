//! Scenario orchestration: solve on every grid of a ladder, evaluate the
//! requested estimates, fold them into refinement reports, write outputs.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify, reciprocals_of, ClassVerdict, DiffusionParams};
use crate::config::{ExponentSpec, Oracle, Scenario, Suite};
use crate::drift::{DriftError, DriftPreset, DriftSpec};
use crate::estimates::{
    self, merge_refinement, EstimateReport, EstimateRequest, Mode, RunData, Sampler, Status, TrendGate,
};
use crate::fluid::{self, CoupledConfig, CoupledRun, FluidError};
use crate::grid::{GridError, ScalarField, SpaceTimeDomain};
use crate::io::{read_f64_le, write_f64_le, write_slice_csv};
use crate::measure::{mollify, MeasureError};
use crate::norms::ExponentPair;
use crate::solver::{solve, SolverConfig, SolverError, Trajectory};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("trajectory dump: {0}")]
    Dump(String),
}

/// Result of one scenario on one grid.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub n: usize,
    /// `(request key, report)`, in request order.
    pub reports: Vec<(String, TrendGate, EstimateReport)>,
    pub oracle_error: Option<f64>,
    pub budget_residual: f64,
    pub runtime_s: f64,
    pub steps: usize,
}

/// Everything kept from a grid run besides the reports, for the CLI.
pub struct GridArtifacts {
    pub domain: SpaceTimeDomain,
    pub trajectory: Trajectory,
    pub samples: Option<ScalarField>,
    pub coupled: Option<CoupledRun>,
    pub header: DumpHeader,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassVerdict>,
    pub reports: Vec<EstimateReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oracle_errors: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub grids: Vec<GridRun>,
}

impl ScenarioResult {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.reports.iter().any(EstimateReport::literal_failure)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Bundle {
    pub schema: u32,
    pub pass: bool,
    pub scenarios: Vec<ScenarioResult>,
}

/// Verdict of the scenario's drift exponents, if it declares any.
pub fn scenario_class(s: &Scenario) -> Option<ClassVerdict> {
    let spec = s.drift_spec();
    let e = spec.exponents()?;
    let p = DiffusionParams::new(s.solver.m, s.dim).ok()?;
    Some(classify(&p, reciprocals_of(e.q1, e.q2), spec.divergence_free()))
}

/// Exact solution of the oracle at the final time, per cell.
pub fn oracle_solution(s: &Scenario, domain: &SpaceTimeDomain) -> Option<Vec<f64>> {
    let t = s.solver.t_end(domain);
    let atoms = &s.measure.initial_atoms;
    let d = domain.dim() as f64;
    match s.oracle? {
        Oracle::Heat => Some(domain.sample_cells(|x| {
            atoms
                .iter()
                .map(|a| {
                    let r2: f64 = x.iter().zip(&a.x).map(|(p, q)| (p - q).powi(2)).sum();
                    a.mass * (-r2 / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).powf(0.5 * d)
                })
                .sum()
        })),
        Oracle::Barenblatt => {
            let a = &atoms[0];
            let c = (a.mass / (8.0 * std::f64::consts::PI)).sqrt();
            let st = t.sqrt();
            Some(domain.sample_cells(|x| {
                let r2: f64 = x.iter().zip(&a.x).map(|(p, q)| (p - q).powi(2)).sum();
                (c - r2 / (16.0 * st)).max(0.0) / st
            }))
        }
    }
}

fn l1_distance(domain: &SpaceTimeDomain, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    domain.integrate(&diff)
}

fn evaluate(req: &EstimateRequest, run: &RunData) -> EstimateReport {
    match req.evaluate(run) {
        Ok(r) => r,
        Err(e) => EstimateReport {
            id: req_id(req).to_string(),
            scenario: run.scenario.to_string(),
            params: Default::default(),
            lhs: 0.0,
            rhs: 0.0,
            ratio: 0.0,
            mode: Mode::RatioTrend,
            status: Status::NotApplicable,
            pass: true,
            note: Some(e.to_string()),
            refinement_series: None,
        },
    }
}

fn req_id(req: &EstimateRequest) -> &'static str {
    match req {
        EstimateRequest::MassBound => "mass_bound",
        EstimateRequest::WeightedGradient { .. } => "weighted_gradient",
        EstimateRequest::AlphaGradient { .. } => "alpha_gradient",
        EstimateRequest::EnergyBound { .. } => "energy_bound",
        EstimateRequest::Interpolation { .. } => "interpolation",
        EstimateRequest::ParabolicEmbedding { .. } => "parabolic_embedding",
    }
}

/// Header of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub scenario: String,
    pub domain: SpaceTimeDomain,
    pub solver: SolverConfig,
    pub data_mass: f64,
    pub sup_mass: f64,
    pub drift: DriftPreset,
    pub drift_divergence_free: bool,
    pub drift_exponents: Option<ExponentSpec>,
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
}

const DUMP_MAGIC: &[u8; 4] = b"PMDT";
const DUMP_VERSION: u32 = 1;

/// `PMDT`, version (u32 LE), header length (u64 LE), JSON header, then the
/// sampled slices as little-endian `f64`.
pub fn write_dump<W: Write>(header: &DumpHeader, samples: &ScalarField, mut out: W) -> io::Result<()> {
    let json = serde_json::to_vec(header).map_err(io::Error::other)?;
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&DUMP_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for s in samples.slices() {
        write_f64_le(s, &mut out)?;
    }
    out.flush()
}

pub fn read_dump<R: Read>(mut input: R) -> Result<(DumpHeader, ScalarField), RunError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(RunError::Dump("not a trajectory dump".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != DUMP_VERSION {
        return Err(RunError::Dump(format!("unsupported version {}", u32::from_le_bytes(b4))));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: DumpHeader = serde_json::from_slice(&json).map_err(|e| RunError::Dump(e.to_string()))?;
    let cells = header.domain.cell_count();
    let slices = (0..header.times.len()).map(|_| read_f64_le(cells, &mut input)).collect::<io::Result<Vec<_>>>()?;
    let field = ScalarField::with_weights(header.domain, header.times.clone(), header.weights.clone(), slices)?
        .into_density()?;
    Ok((header, field))
}

/// Evaluates `requests` on a dumped trajectory.
pub fn verify_dump(
    header: &DumpHeader,
    samples: &ScalarField,
    requests: &[EstimateRequest],
) -> Result<Vec<EstimateReport>, RunError> {
    let mut spec = DriftSpec::preset(header.drift.clone()).with_divergence_free(header.drift_divergence_free);
    if let Some(e) = &header.drift_exponents {
        spec = spec.with_exponents(Some(ExponentPair { q1: e.q1, q2: e.q2 }));
    }
    let drift = spec.prepare(&header.domain)?;
    let run = RunData {
        scenario: &header.scenario,
        samples,
        drift: &drift,
        drift_exponents: spec.exponents(),
        m: header.solver.m,
        data_mass: header.data_mass,
        sup_mass: header.sup_mass,
    };
    Ok(requests.iter().map(|r| evaluate(r, &run)).collect())
}

/// Solves `s` on an `n`-cell grid and evaluates its estimates.
pub fn run_grid(s: &Scenario, n: usize) -> Result<(GridRun, GridArtifacts), RunError> {
    let start = Instant::now();
    let domain = s.domain(n)?;
    let forcing = mollify(&s.measure, s.mollify, &domain)?;
    let data_mass = s.measure.total_mass(&domain, true);
    let spec = s.drift_spec();
    let header = |sup_mass: f64, samples: Option<&ScalarField>| DumpHeader {
        scenario: s.id.clone(),
        domain,
        solver: s.solver.clone(),
        data_mass,
        sup_mass,
        drift: s.drift.clone(),
        drift_divergence_free: spec.divergence_free(),
        drift_exponents: s.drift_exponents.clone(),
        times: samples.map(|f| f.times().to_vec()).unwrap_or_default(),
        weights: samples.map(|f| f.weights().to_vec()).unwrap_or_default(),
    };

    if let Some(c) = &s.couple {
        let cfg = CoupledConfig {
            solver: s.solver.clone(),
            potential: c.potential.clone(),
            alphas: c.alphas.clone().unwrap_or_else(|| vec![1.0, 1.5, 1.9]),
            keep_snapshots: true,
        };
        let run = fluid::coupled_solve(&cfg, &domain, &forcing, None, None)?;
        let sup = run.density.sup_mass();
        let mut reports = Vec::new();
        let mut mass = EstimateReport {
            id: "mass_bound".into(),
            scenario: s.id.clone(),
            params: Default::default(),
            lhs: sup,
            rhs: data_mass,
            ratio: estimates::ratio(sup, data_mass),
            mode: Mode::Literal,
            status: Status::Pass,
            pass: true,
            note: None,
            refinement_series: None,
        };
        if sup > data_mass * (1.0 + estimates::MASS_SLACK) {
            mass.pass = false;
            mass.status = Status::Fail;
        }
        reports.push(("mass_bound".to_string(), TrendGate::None, mass));
        for r in fluid::verify_coupled_energy(&s.id, &run) {
            let key = format!("{}:{}", r.id, r.params.get("alpha").map_or(0.0, |p| p.0));
            let gate = if r.mode == Mode::RatioTrend { TrendGate::Bounded } else { TrendGate::None };
            reports.push((key, gate, r));
        }
        let grid = GridRun {
            n,
            reports,
            oracle_error: None,
            budget_residual: run.density.max_budget_residual(),
            runtime_s: start.elapsed().as_secs_f64(),
            steps: run.density.steps.len(),
        };
        let art = GridArtifacts {
            domain,
            trajectory: run.density.clone(),
            samples: None,
            header: header(sup, None),
            coupled: Some(run),
        };
        return Ok((grid, art));
    }

    let drift = spec.prepare(&domain)?;
    let mut sampler = Sampler::midpoints(s.solver.t_end(&domain), s.samples);
    let traj = solve(&s.solver, &domain, &forcing, &drift, None, Some(&mut sampler))?;
    let samples = sampler.into_field(&domain)?;
    let run = RunData {
        scenario: &s.id,
        samples: &samples,
        drift: &drift,
        drift_exponents: spec.exponents(),
        m: s.solver.m,
        data_mass,
        sup_mass: traj.sup_mass(),
    };
    let reports = s.estimate_requests().iter().map(|req| (req.key(), req.gate(), evaluate(req, &run))).collect();
    let oracle_error = oracle_solution(s, &domain).map(|exact| l1_distance(&domain, traj.final_slice(), &exact));
    let grid = GridRun {
        n,
        reports,
        oracle_error,
        budget_residual: traj.max_budget_residual(),
        runtime_s: start.elapsed().as_secs_f64(),
        steps: traj.steps.len(),
    };
    let head = header(traj.sup_mass(), Some(&samples));
    Ok((grid, GridArtifacts { domain, trajectory: traj, samples: Some(samples), coupled: None, header: head }))
}

/// Runs the whole ladder of `s` and merges the reports.
pub fn run_scenario(s: &Scenario) -> ScenarioResult {
    let mut grids = Vec::new();
    let mut error = None;
    for &n in &s.ladder {
        match run_grid(s, n) {
            Ok((g, _)) => grids.push(g),
            Err(e) => {
                error = Some(format!("N = {n}: {e}"));
                break;
            }
        }
    }
    let reports = if error.is_some() { Vec::new() } else { merge_grids(&grids) };
    ScenarioResult {
        id: s.id.clone(),
        classification: scenario_class(s),
        reports,
        oracle_errors: grids.iter().filter_map(|g| g.oracle_error.map(|e| (g.n, e))).collect(),
        error,
        grids,
    }
}

/// Groups per-grid reports by request key and folds each group.
pub fn merge_grids(grids: &[GridRun]) -> Vec<EstimateReport> {
    let Some(first) = grids.first() else { return Vec::new() };
    first
        .reports
        .iter()
        .enumerate()
        .filter_map(|(k, (key, gate, _))| {
            let series: Vec<(usize, EstimateReport)> = grids
                .iter()
                .filter_map(|g| g.reports.get(k).filter(|r| &r.0 == key).map(|r| (g.n, r.2.clone())))
                .collect();
            merge_refinement(series, *gate)
        })
        .collect()
}

/// Runs every scenario on a pool of `workers` threads (all cores if `None`);
/// results are ordered by id.
pub fn run_suite(suite: &Suite, workers: Option<usize>) -> Bundle {
    let work = || suite.scenarios.par_iter().map(run_scenario).collect::<Vec<_>>();
    let mut scenarios = match workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        },
        None => work(),
    };
    scenarios.sort_by(|a, b| a.id.cmp(&b.id));
    Bundle { schema: crate::config::SCHEMA, pass: scenarios.iter().all(|s| !s.failed()), scenarios }
}

/// Short label of a report for CSV headers.
pub fn report_label(r: &EstimateReport) -> String {
    let params: Vec<String> = r
        .params
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "m" | "d" | "sigma1" | "sigma2" | "r1"))
        .map(|(k, v)| if v.0.is_infinite() { format!("{k}=inf") } else { format!("{k}={}", v.0) })
        .collect();
    if params.is_empty() {
        r.id.clone()
    } else {
        format!("{}[{}]", r.id, params.join(";"))
    }
}

/// Per-grid series: `N, steps, runtime_s, budget_residual, oracle_error`,
/// then one ratio column per estimate.
pub fn write_convergence_csv<W: Write>(grids: &[GridRun], mut out: W) -> io::Result<()> {
    let labels: Vec<String> =
        grids.first().map(|g| g.reports.iter().map(|r| report_label(&r.2)).collect()).unwrap_or_default();
    write!(out, "N,steps,runtime_s,budget_residual,oracle_error")?;
    for l in &labels {
        write!(out, ",{l}")?;
    }
    writeln!(out)?;
    for g in grids {
        write!(out, "{},{},{:.3},{:e},", g.n, g.steps, g.runtime_s, g.budget_residual)?;
        match g.oracle_error {
            Some(e) => write!(out, "{e:e}")?,
            None => write!(out, "")?,
        }
        for r in &g.reports {
            write!(out, ",{:e}", r.2.ratio)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)?;
    w.flush()
}

/// Writes the bundle and one convergence CSV per scenario under `dir`.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(bundle, &dir.join("reports.json"))?;
    for s in &bundle.scenarios {
        let f = BufWriter::new(File::create(dir.join(format!("{}.convergence.csv", s.id)))?);
        write_convergence_csv(&s.grids, f)?;
    }
    Ok(())
}

/// Snapshots, budget and dump of one solved grid.
pub fn write_artifacts(art: &GridArtifacts, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let traj = &art.trajectory;
    for (k, (t, s)) in traj.times.iter().zip(&traj.slices).enumerate() {
        let f = BufWriter::new(File::create(dir.join(format!("rho_{k:04}.csv")))?);
        let _ = t;
        write_slice_csv(&art.domain, s, f)?;
    }
    let mut b = BufWriter::new(File::create(dir.join("budget.csv"))?);
    writeln!(b, "t,mass,forcing_cum,outflux_cum")?;
    for r in traj.budget_rows() {
        writeln!(b, "{:e},{:e},{:e},{:e}", r[0], r[1], r[2], r[3])?;
    }
    b.flush()?;
    let mut tm = BufWriter::new(File::create(dir.join("times.csv"))?);
    writeln!(tm, "index,t")?;
    for (k, t) in traj.times.iter().enumerate() {
        writeln!(tm, "{k},{t:e}")?;
    }
    tm.flush()?;
    if let Some(samples) = &art.samples {
        write_dump(&art.header, samples, BufWriter::new(File::create(dir.join("trajectory.pmdt"))?))?;
    }
    if let Some(run) = &art.coupled {
        let mut e = BufWriter::new(File::create(dir.join("energy.csv"))?);
        writeln!(e, "t,mass,kinetic,dissipation_cum,forcing_cum")?;
        for r in &run.energy {
            writeln!(e, "{:e},{:e},{:e},{:e},{:e}", r.t, r.mass, r.kinetic, r.dissipation_cum, r.forcing_cum)?;
        }
        e.flush()?;
        for (k, (_, v)) in run.snapshots.iter().enumerate() {
            let mut w = BufWriter::new(File::create(dir.join(format!("v_{k:04}.csv")))?);
            writeln!(w, "axis,face,value")?;
            for (axis, comp) in v.comps.iter().enumerate() {
                for (f, x) in comp.iter().enumerate() {
                    writeln!(w, "{axis},{f},{x:e}")?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn open_dump(path: &Path) -> Result<(DumpHeader, ScalarField), RunError> {
    read_dump(BufReader::new(File::open(path)?))
}
