//! Thin command-line front end over [`dispar::pipeline`].
//!
//! Exit codes: 0 on success, 2 on validation/input errors, 3 when a sweep
//! finished but some (treebank, system) tasks failed (see `errors.json` in
//! the output directory). Set `DISPAR_THREADS` to cap sweep parallelism.

use clap::{Parser, Subcommand};
use dispar::pipeline::{
    cmd_compare, cmd_correlate, cmd_displacement_report, cmd_inherent, cmd_stats, cmd_train_eval,
    enumerate_json, load_manifest, Group, Overrides, RunManifest,
};
use dispar::transitions::System;

use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dispar",
    version,
    about = "Displacement analysis for transition-based dependency parsers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run manifest (TOML). Required by every subcommand except `enumerate`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Master seed for sampling, training, and walk generation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated sentence-length bins, e.g. `1-3,4-6,7-99`.
    #[arg(long, global = true)]
    bins: Option<String>,

    /// Count arcs headed by the artificial root as displacement samples.
    #[arg(long, global = true)]
    include_root_arcs: bool,

    /// Monte Carlo repetitions per (treebank, system, bin).
    #[arg(long, global = true)]
    reps: Option<u32>,

    /// Output directory (overrides the manifest's `out_dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Minimum training trees for a treebank to participate.
    #[arg(long, global = true)]
    min_train: Option<usize>,

    /// Minimum test trees for a treebank to participate.
    #[arg(long, global = true)]
    min_test: Option<usize>,

    /// Displacement report covers |d| up to this bound.
    #[arg(long, global = true)]
    clip_displacement: Option<i32>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-bin test-set size statistics across treebanks (stats.csv).
    Stats,
    /// Train every system on every treebank and evaluate UAS per bin
    /// (uas.csv, models/, parsed/, errors.json).
    TrainEval,
    /// Per-displacement precision/recall with pairwise Welch tests
    /// (pr.csv, pr_pvalues.csv). Needs train-eval's parsed outputs.
    DisplacementReport,
    /// Sample inherent distributions and estimate per-bin EMD against the
    /// observed distributions (emd.csv, skipped.csv, inherent/*.json).
    Inherent {
        /// Feed the observed distribution back as every repetition's
        /// sample; all EMD estimates are then exactly zero.
        #[arg(long)]
        self_test: bool,
    },
    /// Correlate δUAS against mean EMD per bin, pooling treebanks and the
    /// group's systems. Needs uas.csv and emd.csv.
    Correlate {
        /// projective (3 systems), nonprojective (2), or all.
        #[arg(long, default_value = "all")]
        group: Group,
    },
    /// Per-treebank ΔUAS vs ΔEMD between two named systems.
    Compare { first: System, second: System },
    /// Exact inherent distribution for one system and sentence length
    /// (printed as JSON; no manifest needed).
    Enumerate {
        system: System,
        n: usize,
    },
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        seed: cli.seed,
        bins: cli.bins.clone(),
        include_root_arcs: cli.include_root_arcs.then_some(true),
        reps: cli.reps,
        out_dir: cli.out_dir.clone(),
        min_train: cli.min_train,
        min_test: cli.min_test,
        clip_displacement: cli.clip_displacement,
    }
}

fn manifest(cli: &Cli) -> Result<RunManifest, String> {
    let path = cli
        .manifest
        .as_ref()
        .ok_or("this subcommand needs --manifest <file>")?;
    load_manifest(path, &overrides(cli)).map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Stats => {
            let m = manifest(cli)?;
            let stats = cmd_stats(&m).map_err(|e| e.to_string())?;
            println!("{} bins -> {}", stats.len(), m.out_dir.join("stats.csv").display());
        }
        Command::TrainEval => {
            let m = manifest(cli)?;
            let out = cmd_train_eval(&m).map_err(|e| e.to_string())?;
            for r in out.rows.iter().filter(|r| r.bin == "all") {
                println!(
                    "{:24} {:16} UAS {:.4} ({} / {})",
                    r.treebank, r.system.name(), r.uas, r.correct, r.total
                );
            }
            println!("wrote {}", m.out_dir.join("uas.csv").display());
            if !out.failures.is_empty() {
                eprintln!(
                    "{} task(s) failed; see {}",
                    out.failures.len(),
                    m.out_dir.join("errors.json").display()
                );
                return Ok(ExitCode::from(3));
            }
        }
        Command::DisplacementReport => {
            let m = manifest(cli)?;
            cmd_displacement_report(&m).map_err(|e| e.to_string())?;
            println!(
                "wrote {} and {}",
                m.out_dir.join("pr.csv").display(),
                m.out_dir.join("pr_pvalues.csv").display()
            );
        }
        Command::Inherent { self_test } => {
            let m = manifest(cli)?;
            let out = cmd_inherent(&m, *self_test).map_err(|e| e.to_string())?;
            println!(
                "{} estimates, {} skipped bins -> {}",
                out.rows.len(),
                out.skipped.len(),
                m.out_dir.join("emd.csv").display()
            );
        }
        Command::Correlate { group } => {
            let m = manifest(cli)?;
            let out = cmd_correlate(&m, *group).map_err(|e| e.to_string())?;
            for row in &out.per_bin {
                match (row.r, row.p) {
                    (Some(r), Some(p)) => println!(
                        "{:>7} bin {:>6}: n={:<4} r={:+.4} p={:.3e}",
                        group.name(), row.bin, row.n_points, r, p
                    ),
                    _ => println!(
                        "{:>7} bin {:>6}: n={:<4} {}",
                        group.name(), row.bin, row.n_points, row.note
                    ),
                }
            }
        }
        Command::Compare { first, second } => {
            let m = manifest(cli)?;
            let out = cmd_compare(&m, *first, *second).map_err(|e| e.to_string())?;
            for row in &out.per_bin {
                match (row.r, row.p) {
                    (Some(r), Some(p)) => println!(
                        "{first} vs {second} bin {:>6}: n={:<4} r={:+.4} p={:.3e}",
                        row.bin, row.n_points, r, p
                    ),
                    _ => println!(
                        "{first} vs {second} bin {:>6}: n={:<4} {}",
                        row.bin, row.n_points, row.note
                    ),
                }
            }
        }
        Command::Enumerate { system, n } => {
            let text = enumerate_json(*system, *n, cli.include_root_arcs)
                .map_err(|e| e.to_string())?;
            println!("{text}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("DISPAR_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: DISPAR_THREADS: {e}");
                    return ExitCode::from(2);
                }
            }
            _ => {
                eprintln!("error: DISPAR_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
