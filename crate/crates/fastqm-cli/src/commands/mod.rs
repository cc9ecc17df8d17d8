//! Subcommand definitions and shared input handling.

mod eval;
mod fit;
mod rotation;
mod svd;
mod sweep;
mod synth;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use fastqm::io;
use fastqm::snapshots::{CenteringMode, SnapshotSet};
use fastqm::stiefel::{LineSearchConfig, SolverConfig};
use fastqm::{Error, Result};

use crate::config::ConfigMap;

#[derive(Parser)]
#[command(
    name = "fastqm",
    version,
    about = "Quadratic-manifold dimensionality reduction of snapshot data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Center snapshots and extract a candidate basis (thin SVD)
    Svd(svd::SvdArgs),
    /// Fit a model to a stored candidate basis
    Fit(fit::FitArgs),
    /// Evaluate a stored model on test snapshots
    Eval(eval::EvalArgs),
    /// Fit and evaluate methods over a parameter grid
    Sweep(sweep::SweepArgs),
    /// Generate synthetic snapshot data
    Synth(synth::SynthArgs),
    /// Scan the 2D quadratic-manifold error over rotation angles
    RotationSweep(rotation::RotationArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Svd(args) => svd::run(args),
        Command::Fit(args) => fit::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Synth(args) => synth::run(args),
        Command::RotationSweep(args) => rotation::run(args),
    }
}

/// Riemannian solver settings shared by `fit` and `sweep`.
#[derive(Args, Debug)]
pub struct SolverArgs {
    /// Stop when the Riemannian gradient norm falls below this value
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Iteration budget of the optimizer
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Steepest-descent restart period of the CG direction
    #[arg(long)]
    pub cg_restart: Option<usize>,
    /// Seed reserved for randomized restarts
    #[arg(long)]
    pub seed: Option<u64>,
    /// Nominal first line-search step
    #[arg(long)]
    pub ls_initial_step: Option<f64>,
    /// Armijo sufficient-decrease constant
    #[arg(long)]
    pub ls_armijo: Option<f64>,
    /// Line-search backtracking factor
    #[arg(long)]
    pub ls_backtrack: Option<f64>,
    /// Line-search trials before giving up
    #[arg(long)]
    pub ls_max_backtracks: Option<usize>,
}

impl SolverArgs {
    pub fn build(&self, cfg: &ConfigMap) -> Result<SolverConfig> {
        let defaults = SolverConfig::default();
        let ls_defaults = LineSearchConfig::default();
        Ok(SolverConfig {
            grad_tol: cfg.resolve(self.grad_tol, "grad-tol", defaults.grad_tol)?,
            max_iters: cfg.resolve(self.max_iters, "max-iters", defaults.max_iters)?,
            cg_restart_period: cfg.resolve(
                self.cg_restart,
                "cg-restart",
                defaults.cg_restart_period,
            )?,
            seed: cfg.resolve(self.seed, "seed", defaults.seed)?,
            line_search: LineSearchConfig {
                initial_step: cfg.resolve(
                    self.ls_initial_step,
                    "ls-initial-step",
                    ls_defaults.initial_step,
                )?,
                armijo_c: cfg.resolve(self.ls_armijo, "ls-armijo", ls_defaults.armijo_c)?,
                backtrack: cfg.resolve(self.ls_backtrack, "ls-backtrack", ls_defaults.backtrack)?,
                max_backtracks: cfg.resolve(
                    self.ls_max_backtracks,
                    "ls-max-backtracks",
                    ls_defaults.max_backtracks,
                )?,
            },
        })
    }
}

/// The invoking command line, stored in output metadata so results can be
/// reproduced.
pub fn command_line() -> String {
    let args: Vec<String> = std::env::args().collect();
    args.join(" ")
}

/// Loads snapshots from a container (used as stored) or from a raw matrix
/// (centered with the given mode).
pub fn load_snapshot_input(
    path: &Path,
    mode: Option<CenteringMode>,
    custom_ref: Option<&Path>,
    default_mode: CenteringMode,
) -> Result<SnapshotSet> {
    if io::is_fqm1(path)? {
        let probe = io::Fqm1File::read(path)?;
        if probe.meta("kind") == Some("snapshots") {
            if mode.is_some() {
                eprintln!(
                    "warning: --centering is ignored; {} is already a centered snapshot container",
                    path.display()
                );
            }
            return io::load_snapshots(path);
        }
    }
    let raw = io::read_matrix_auto(path)?;
    let mode = mode.unwrap_or(default_mode);
    let reference = match custom_ref {
        Some(p) => {
            let m = io::read_matrix_auto(p)?;
            if m.ncols() != 1 {
                return Err(Error::invalid(format!(
                    "reference file {} must hold a single column",
                    p.display()
                )));
            }
            Some(DVector::from_column_slice(m.as_slice()))
        }
        None => None,
    };
    SnapshotSet::center(&raw, mode, reference.as_ref())
}

/// Loads a test set and centers it by the model's reference; container
/// inputs must already use that reference.
pub fn load_test_set(path: &Path, reference: &DVector<f64>) -> Result<SnapshotSet> {
    if io::is_fqm1(path)? {
        let probe = io::Fqm1File::read(path)?;
        if probe.meta("kind") == Some("snapshots") {
            let set = io::load_snapshots(path)?;
            if set.reference().len() != reference.len()
                || (set.reference() - reference).norm() > 1e-8 * (1.0 + reference.norm())
            {
                return Err(Error::invalid(
                    "test container is centered by a different reference than the model",
                ));
            }
            return Ok(set);
        }
    }
    let raw = io::read_matrix_auto(path)?;
    if raw.nrows() != reference.len() {
        return Err(Error::invalid(format!(
            "test data has {} rows but the model state dimension is {}",
            raw.nrows(),
            reference.len()
        )));
    }
    SnapshotSet::center(&raw, CenteringMode::Custom, Some(reference))
}

/// Writes a small CSV report: `#` comment lines, a header, then rows.
pub fn write_report_csv(
    path: &Path,
    comments: &[String],
    header: &str,
    rows: &[String],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces the extension of `path` with `suffix` (e.g. `report.csv`).
pub fn sibling_with_extension(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

pub fn parse_centering(s: Option<&str>) -> Result<Option<CenteringMode>> {
    s.map(CenteringMode::parse).transpose()
}
