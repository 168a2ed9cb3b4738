use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use pmdrift::classify::{classify, region_sweep, write_sweep_csv, DiffusionParams, Reciprocals};
use pmdrift::config::{Scenario, Suite};
use pmdrift::estimates::{EstimateReport, EstimateRequest};
use pmdrift::norms::Exponent;
use pmdrift::runner::{
    open_dump, run_grid, run_scenario, run_suite, verify_dump, write_artifacts, write_bundle, write_convergence_csv,
    write_json,
};

#[derive(Parser)]
#[command(name = "pmdrift", version, about = "Drift-diffusion with measure forcing")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, env = "PMDRIFT_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify a drift exponent pair.
    Classify {
        #[arg(long)]
        m: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Spatial exponent (number or `inf`).
        #[arg(long)]
        q1: Exponent,
        /// Temporal exponent (number or `inf`).
        #[arg(long)]
        q2: Exponent,
        #[arg(long)]
        divergence_free: bool,
    },
    /// Classify a grid of reciprocal exponents on [0, 1.5]^2 and write CSV.
    RegionSweep {
        #[arg(long)]
        m: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 150)]
        steps: usize,
        #[arg(long)]
        divergence_free: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one scenario on one grid and write snapshots, budget and a
    /// trajectory dump.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Scenario id (defaults to the first one).
        #[arg(long)]
        id: Option<String>,
        /// Grid size (defaults to the scenario's finest).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate estimates on a trajectory dump; prints a JSON array.
    Verify {
        #[arg(long)]
        traj: PathBuf,
        /// `all` or a comma-separated list of estimate ids.
        #[arg(long, default_value = "all")]
        estimates: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a coupled density/flow scenario on one grid.
    Couple {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario over a ladder of grids and write the series as CSV.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        id: Option<String>,
        /// Comma-separated grid sizes (defaults to the scenario's ladder).
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scenario of a suite and write the report bundle.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn pick<'a>(suite: &'a Suite, id: Option<&str>) -> Result<&'a Scenario> {
    match id {
        Some(id) => suite.find(id).ok_or_else(|| anyhow!("no scenario `{id}`")),
        None => suite.scenarios.first().ok_or_else(|| anyhow!("suite has no scenarios")),
    }
}

fn finest(s: &Scenario, n: Option<usize>) -> usize {
    n.unwrap_or_else(|| *s.ladder.last().expect("validated ladder"))
}

fn print_reports(reports: &[EstimateReport], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir)?;
            }
            write_json(&reports, p)?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, reports)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn solve_one(config: &Path, id: Option<&str>, n: Option<usize>, out: &Path, coupled: bool) -> Result<bool> {
    let suite = Suite::load(config)?;
    let s = pick(&suite, id)?;
    if coupled && s.couple.is_none() {
        bail!("scenario `{}` has no `couple` table", s.id);
    }
    let n = finest(s, n);
    let (grid, art) = run_grid(s, n).with_context(|| format!("scenario `{}` at N = {n}", s.id))?;
    write_artifacts(&art, out)?;
    let reports: Vec<EstimateReport> = grid.reports.into_iter().map(|r| r.2).collect();
    write_json(&reports, &out.join("reports.json"))?;
    eprintln!("{}: {} steps, max budget residual {:e}", s.id, grid.steps, grid.budget_residual);
    Ok(!reports.iter().any(EstimateReport::literal_failure))
}

/// `Ok(true)` when every literal check passed and nothing errored.
fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Classify { m, d, q1, q2, divergence_free } => {
            let p = DiffusionParams::new(m, d)?;
            let r = Reciprocals::new(q1.reciprocal(), q2.reciprocal())?;
            let v = classify(&p, r, divergence_free);
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(true)
        }
        Cmd::RegionSweep { m, d, steps, divergence_free, out } => {
            let p = DiffusionParams::new(m, d)?;
            fs::create_dir_all(&out)?;
            let rows = region_sweep(&p, steps, divergence_free);
            let path = out.join(format!("sweep_m{m}_d{d}{}.csv", if divergence_free { "_divfree" } else { "" }));
            write_sweep_csv(&rows, BufWriter::new(File::create(&path)?))?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
            Ok(true)
        }
        Cmd::Solve { config, id, n, out } => solve_one(&config, id.as_deref(), n, &out, false),
        Cmd::Couple { config, id, n, out } => solve_one(&config, id.as_deref(), n, &out, true),
        Cmd::Verify { traj, estimates, out } => {
            let (header, samples) = open_dump(&traj)?;
            let (m, d) = (header.solver.m, header.domain.dim());
            let mut requests = Vec::new();
            for id in estimates.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let r = EstimateRequest::by_id(id, m, d).ok_or_else(|| anyhow!("unknown estimate id `{id}`"))?;
                requests.extend(r);
            }
            let reports = verify_dump(&header, &samples, &requests)?;
            print_reports(&reports, out.as_deref())?;
            Ok(!reports.iter().any(EstimateReport::literal_failure))
        }
        Cmd::Convergence { config, id, ladder, out } => {
            let suite = Suite::load(&config)?;
            let mut s = pick(&suite, id.as_deref())?.clone();
            if let Some(l) = ladder {
                if l.is_empty() || l.windows(2).any(|w| w[1] <= w[0]) {
                    bail!("ladder must be strictly increasing");
                }
                s.ladder = l;
            }
            let r = run_scenario(&s);
            fs::create_dir_all(&out)?;
            write_convergence_csv(
                &r.grids,
                BufWriter::new(File::create(out.join(format!("{}.convergence.csv", s.id)))?),
            )?;
            write_json(&r, &out.join(format!("{}.json", s.id)))?;
            if let Some(e) = &r.error {
                eprintln!("{}: {e}", s.id);
            }
            Ok(!r.failed())
        }
        Cmd::Suite { config, out } => {
            let suite = Suite::load(&config)?;
            let bundle = run_suite(&suite, cli.workers);
            write_bundle(&bundle, &out)?;
            for s in &bundle.scenarios {
                let fails: Vec<&str> =
                    s.reports.iter().filter(|r| r.literal_failure()).map(|r| r.id.as_str()).collect();
                match (&s.error, fails.is_empty()) {
                    (Some(e), _) => eprintln!("{}: error: {e}", s.id),
                    (None, false) => eprintln!("{}: literal failures: {}", s.id, fails.join(", ")),
                    (None, true) => eprintln!("{}: ok", s.id),
                }
            }
            Ok(bundle.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        // the global pool also drives the data-parallel solver sweeps
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
