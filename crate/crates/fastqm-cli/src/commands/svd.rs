//! `fastqm svd` — center snapshots and store the candidate basis.

use std::path::PathBuf;

use clap::Args;

use fastqm::io;
use fastqm::snapshots::{CandidateBasis, CenteringMode};
use fastqm::Result;

use crate::config::ConfigMap;

use super::{command_line, load_snapshot_input, parse_centering};

#[derive(Args, Debug)]
pub struct SvdArgs {
    /// Snapshot input: CSV matrix, FQM1 matrix, or FQM1 snapshot container
    #[arg(long)]
    pub input: PathBuf,
    /// Number of candidate modes to keep (1 ≤ m ≤ min(N, K))
    #[arg(long, short)]
    pub m: Option<usize>,
    /// Basis output file (FQM1)
    #[arg(long, short)]
    pub output: PathBuf,
    /// Centering for raw-matrix inputs: zero|mean|initial|custom (default mean)
    #[arg(long)]
    pub centering: Option<String>,
    /// Reference vector file for --centering custom (single-column matrix)
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Flat key=value config file; flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: SvdArgs) -> Result<()> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let m: usize = cfg.resolve_required(args.m, "m")?;
    let centering = match parse_centering(args.centering.as_deref())? {
        Some(c) => Some(c),
        None => cfg
            .get::<String>("centering")?
            .map(|s| CenteringMode::parse(&s))
            .transpose()?,
    };
    let set = load_snapshot_input(
        &args.input,
        centering,
        args.reference.as_deref(),
        CenteringMode::Mean,
    )?;
    let basis = CandidateBasis::from_snapshots(&set, m)?;
    let meta = vec![
        ("command".to_string(), command_line()),
        ("n".to_string(), basis.state_dim().to_string()),
        ("k".to_string(), basis.len().to_string()),
        ("input".to_string(), args.input.display().to_string()),
    ];
    io::save_basis(&args.output, &basis, &meta)?;
    println!(
        "basis: m = {} modes of a {} x {} snapshot matrix -> {}",
        basis.m(),
        basis.state_dim(),
        basis.len(),
        args.output.display()
    );
    Ok(())
}
