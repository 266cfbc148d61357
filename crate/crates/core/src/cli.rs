//! Command-line front end. `run` returns the process exit code so it can be
//! driven from tests without spawning a process.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analyzer::{self, AnalyzerOpts};
use crate::harness;
use crate::problem::{self, Instance, Tolerances};
use crate::report::{self, AnalyzeReport, FalsifyReport, EXIT_INPUT};

const SCHEMA_HINT: &str = "expected instance layout: {\"n\", \"m\", \"x_base\": [..n], \"sigma\" > 0, \"f\": {\"terms\": [{\"c\", \"e\": [..n]}]}, \"g\": [1+m polynomials, g[0] first], optional \"tolerances\", \"seed\"}";

#[derive(Debug, Parser)]
#[command(name = "socp-tilt", version, about = "Tilt-stability verifier for second-order cone programs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Cone membership tolerance.
    #[arg(long, global = true)]
    pub tol_cone: Option<f64>,
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,
    /// Margin for strict inequalities in verdicts.
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    /// Overrides the instance seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Random directions sampled on top of the grid.
    #[arg(long, global = true, default_value_t = AnalyzerOpts::default().budget)]
    pub budget: usize,
    /// Angular spacing of the kernel direction grid.
    #[arg(long, global = true, default_value_t = AnalyzerOpts::default().grid_h)]
    pub grid_h: f64,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Record wall-clock timing in the report (breaks byte-identical output).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide tilt stability at the base point.
    Analyze {
        file: PathBuf,
        /// Also run the tilted-minimization experiment.
        #[arg(long)]
        empirical: bool,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-3)]
        r_tilt: f64,
        /// Points per tilt direction.
        #[arg(long, default_value_t = 11)]
        tilt_grid: usize,
    },
    /// Search for counterexamples to a declared property.
    Falsify {
        #[command(subcommand)]
        test: FalsifyCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum FalsifyCommand {
    /// Metric subregularity with the declared modulus sigma.
    Mscq {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Neighborhood second-order condition with modulus kappa.
    Neighborhood {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1e-2)]
        eta: f64,
    },
}

struct InputError(String);

fn load(path: &Path, g: &GlobalOpts) -> Result<Instance, InputError> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?;
    let inst = problem::parse_instance(&text).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    let mut tol: Tolerances = inst.tol;
    for (slot, val, name) in [(&mut tol.cone, g.tol_cone, "--tol-cone"), (&mut tol.rank, g.tol_rank, "--tol-rank"), (&mut tol.margin, g.margin, "--margin")] {
        if let Some(v) = val {
            if !(v.is_finite() && v > 0.0) {
                return Err(InputError(format!("{name} must be positive, got {v}")));
            }
            *slot = v;
        }
    }
    let mut inst = inst.with_tolerances(tol);
    if let Some(seed) = g.seed {
        inst.seed = seed;
    }
    Ok(inst)
}

fn positive(name: &str, v: f64) -> Result<(), InputError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(InputError(format!("{name} must be positive, got {v}")))
    }
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), InputError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| InputError(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_analyze(g: &GlobalOpts, file: &Path, empirical: bool, gamma: f64, r_tilt: f64, tilt_grid: usize) -> Result<i32, InputError> {
    positive("--grid-h", g.grid_h)?;
    if empirical {
        positive("--gamma", gamma)?;
        positive("--r-tilt", r_tilt)?;
    }
    let inst = load(file, g)?;
    let opts = AnalyzerOpts { grid_h: g.grid_h, budget: g.budget, ..AnalyzerOpts::default() };
    let t0 = Instant::now();
    let analysis = analyzer::analyze(&inst, &opts);
    let analysis_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let exp = empirical.then(|| harness::empirical_tilt(&inst, gamma, r_tilt, tilt_grid.max(1), analysis.verdict.bound()));
    let empirical_ms = empirical.then(|| t1.elapsed().as_secs_f64() * 1e3);
    let mut rep = AnalyzeReport::new(&inst, analysis, exp);
    if g.timing {
        rep.timing = Some(report::Timing { analysis_ms, empirical_ms });
    }
    match rep.bound_estimate {
        Some(b) => eprintln!("{}: {} (modulus bound {b:.6e})", file.display(), rep.verdict),
        None => eprintln!("{}: {}", file.display(), rep.verdict),
    }
    emit(&report::to_json(&rep), g.report.as_deref())?;
    Ok(rep.exit_code())
}

fn run_falsify(g: &GlobalOpts, test: &FalsifyCommand) -> Result<i32, InputError> {
    let t0 = Instant::now();
    let mut rep = match *test {
        FalsifyCommand::Mscq { ref file, samples } => {
            let inst = load(file, g)?;
            FalsifyReport::from_mscq(&inst, harness::mscq_falsify(&inst, samples, inst.seed))
        }
        FalsifyCommand::Neighborhood { ref file, samples, kappa, eta } => {
            positive("--kappa", kappa)?;
            positive("--eta", eta)?;
            let inst = load(file, g)?;
            FalsifyReport::from_neighborhood(&inst, kappa, eta, harness::neighborhood_falsify(&inst, kappa, eta, samples, inst.seed))
        }
    };
    if rep.samples == 0 {
        rep.warnings.push("no samples drawn: the absence of a witness is vacuous".into());
    }
    if g.timing {
        rep.timing_ms = Some(t0.elapsed().as_secs_f64() * 1e3);
    }
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("witness found: {}", rep.witness_found);
    emit(&report::to_json(&rep), g.report.as_deref())?;
    Ok(rep.exit_code())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let out = match &cli.command {
        Command::Analyze { file, empirical, gamma, r_tilt, tilt_grid } => run_analyze(&cli.global, file, *empirical, *gamma, *r_tilt, *tilt_grid),
        Command::Falsify { test } => run_falsify(&cli.global, test),
    };
    match out {
        Ok(code) => code,
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{SCHEMA_HINT}");
            EXIT_INPUT
        }
    }
}
