//! Command line driver for the convergence harness.
//!
//! `layerpot run` executes one case (surface, grid size, smoothing
//! ratio, mode, backend), prints the error norms, and appends a CSV row
//! to the output file.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use layerpot::harness::{csv_row, run_case, CaseConfig, Mode, SumKind, SurfaceKind, CSV_HEADER};
use layerpot::pou::PouParams;
use layerpot::quad::NodeSet;
use layerpot::summation::TreeParams;

#[derive(Parser)]
#[command(name = "layerpot", version, about = "Laplace layer potentials on implicit surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one convergence-study case and append a CSV row.
    Run(RunArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SurfaceArg {
    RotEllipsoid,
    ThinEllipsoid,
    Torus,
    Molecule,
    Cassini,
}

impl From<SurfaceArg> for SurfaceKind {
    fn from(s: SurfaceArg) -> SurfaceKind {
        match s {
            SurfaceArg::RotEllipsoid => SurfaceKind::RotEllipsoid,
            SurfaceArg::ThinEllipsoid => SurfaceKind::ThinEllipsoid,
            SurfaceArg::Torus => SurfaceKind::Torus,
            SurfaceArg::Molecule => SurfaceKind::Molecule,
            SurfaceArg::Cassini => SurfaceKind::Cassini,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Near,
    On,
    Both,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SumArg {
    Direct,
    Treecode,
}

#[derive(Args)]
struct RunArgs {
    /// Surface to evaluate on.
    #[arg(long, value_enum)]
    surface: SurfaceArg,

    /// Grid cells per box side; the box spans [-1.1, 1.1] per axis.
    #[arg(long)]
    n: usize,

    /// Smoothing length over grid spacing (the study uses 1, 2, 3).
    #[arg(long, default_value_t = 2.0)]
    delta_ratio: f64,

    /// Partition-of-unity cap angle in degrees.
    #[arg(long, default_value_t = 70.0)]
    theta: f64,

    /// Which point sets to evaluate: grid nodes near the surface,
    /// quadrature nodes on it, or both.
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,

    /// Summation backend for near-surface evaluation; on-surface
    /// evaluation always sums directly.
    #[arg(long, value_enum, default_value_t = SumArg::Direct)]
    sum: SumArg,

    /// CSV output file; created with a header when missing, appended
    /// to otherwise.
    #[arg(long)]
    out: PathBuf,

    /// Also write the quadrature node set (positions, normals, chart
    /// weights) to this file.
    #[arg(long)]
    dump_nodes: Option<PathBuf>,
}

const CANONICAL_N: [usize; 4] = [64, 128, 256, 512];
const CANONICAL_RATIOS: [f64; 3] = [1.0, 2.0, 3.0];

fn run(args: &RunArgs) -> Result<(), String> {
    if !CANONICAL_N.contains(&args.n) {
        return Err(format!(
            "--n must be one of {CANONICAL_N:?}, got {}",
            args.n
        ));
    }
    if !(args.delta_ratio > 0.0) {
        return Err(format!("--delta-ratio must be positive, got {}", args.delta_ratio));
    }
    if !CANONICAL_RATIOS.contains(&args.delta_ratio) {
        eprintln!(
            "note: --delta-ratio {} is outside the study set {CANONICAL_RATIOS:?}",
            args.delta_ratio
        );
    }
    let cfg = CaseConfig {
        surface: args.surface.into(),
        n: args.n,
        delta_ratio: args.delta_ratio,
        theta_deg: args.theta,
        mode: match args.mode {
            ModeArg::Near => Mode::Near,
            ModeArg::On => Mode::On,
            ModeArg::Both => Mode::Both,
        },
        backend: match args.sum {
            SumArg::Direct => SumKind::Direct,
            SumArg::Treecode => SumKind::Treecode(TreeParams::default()),
        },
    };
    if matches!(args.sum, SumArg::Treecode) && matches!(args.mode, ModeArg::On) {
        eprintln!("note: on-surface evaluation always sums directly; --sum treecode has no effect");
    }

    let res = run_case(&cfg).map_err(|e| e.to_string())?;
    if !res.resolved {
        eprintln!(
            "warning: h = {:.4} exceeds the resolution limit {:.4} for this surface; \
             node sheets may be merged",
            res.h, res.h0
        );
    }

    let fresh = !args.out.exists()
        || std::fs::metadata(&args.out)
            .map(|m| m.len() == 0)
            .unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.out)
        .map_err(|e| format!("open {}: {e}", args.out.display()))?;
    let mut out = BufWriter::new(file);
    if fresh {
        writeln!(out, "{CSV_HEADER}").map_err(|e| e.to_string())?;
    }
    writeln!(out, "{}", csv_row(&cfg, &res)).map_err(|e| e.to_string())?;
    out.flush().map_err(|e| e.to_string())?;

    if let Some(path) = &args.dump_nodes {
        let surface = cfg.surface.build();
        let pou = PouParams::new_degrees(cfg.theta_deg).map_err(|e| e.to_string())?;
        let nodes = NodeSet::generate(surface.as_ref(), res.h, pou).map_err(|e| e.to_string())?;
        let file = std::fs::File::create(path).map_err(|e| format!("create {}: {e}", path.display()))?;
        let mut w = BufWriter::new(file);
        nodes.write_nodes(&mut w).map_err(|e| e.to_string())?;
        w.flush().map_err(|e| e.to_string())?;
    }

    println!(
        "{} N={} delta/h={} mode={} backend={}: nodes {} targets {} in {:.1}s",
        cfg.surface,
        cfg.n,
        cfg.delta_ratio,
        cfg.mode.name(),
        cfg.backend.name(),
        res.nodes,
        res.targets,
        res.seconds
    );
    for (label, v) in [
        ("e2_irreg", res.e2_irreg),
        ("einf_irreg", res.einf_irreg),
        ("e2_reg", res.e2_reg),
        ("einf_reg", res.einf_reg),
        ("e2_quad", res.e2_quad),
        ("einf_quad", res.einf_quad),
    ] {
        if let Some(v) = v {
            println!("  {label:>10} = {v:.5e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::FAILURE
            }
        },
    }
}
