//! The full experiment as a library call: does δUAS track EMD?
//!
//! Runs the pipeline over the bundled synthetic corpora — training sweep,
//! inherent-distribution sampling, then the per-bin correlation of δUAS
//! against mean EMD — and prints the resulting table. Equivalent to the
//! `train-eval`, `inherent`, and `correlate` subcommands of the `dispar`
//! binary with the bundled manifest.
//!
//! Usage: cargo run --release --example correlation_report [group] [out-dir]
//! Group is `projective` (default), `nonprojective`, or `all`.

use dispar::parser::TrainConfig;
use dispar::pipeline::{
    cmd_correlate, cmd_inherent, cmd_train_eval, Group, RunManifest, TreebankEntry,
};
use dispar::sampler::SamplerConfig;
use dispar::transitions::System;
use dispar::treebank::BinSpec;

use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let group: Group = args
        .next()
        .map(|s| s.parse().expect("group is projective, nonprojective, or all"))
        .unwrap_or(Group::Projective);
    let out_dir: PathBuf = args
        .next()
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("dispar-correlation-report"));

    let testdata = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let manifest = RunManifest {
        treebanks: ["synth-headfirst", "synth-headlast", "synth-mixed"]
            .iter()
            .map(|n| TreebankEntry { name: n.to_string(), path: testdata.join(n) })
            .collect(),
        systems: System::ALL.to_vec(),
        bins: BinSpec::default(),
        sampler: SamplerConfig { seed: 42, ..SamplerConfig::default() },
        training: TrainConfig { epochs: 5, seed: 42, hash_bits: 18 },
        seed: 42,
        out_dir,
        min_train: 1000,
        min_test: 1000,
        clip_displacement: 10,
        whole_treebank_uas: false,
    };

    println!("training sweep ({} tasks)...", manifest.treebanks.len() * 5);
    let sweep = cmd_train_eval(&manifest).expect("sweep runs");
    assert!(sweep.failures.is_empty(), "failures: {:?}", sweep.failures);
    println!("sampling inherent distributions...");
    let inherent = cmd_inherent(&manifest, false).expect("sampling runs");
    println!(
        "{} EMD estimates, {} skipped bins\n",
        inherent.rows.len(),
        inherent.skipped.len()
    );

    let out = cmd_correlate(&manifest, group).expect("correlate runs");
    println!("correlation of δUAS against mean EMD, {group} group:");
    println!("  bin      n    r        r²       p");
    for row in &out.per_bin {
        match (row.r, row.r_squared, row.p) {
            (Some(r), Some(r2), Some(p)) => {
                println!("  {:>6}  {:>3}  {r:+.4}  {r2:.4}  {p:.3e}", row.bin, row.n_points)
            }
            _ => println!("  {:>6}  {:>3}  {}", row.bin, row.n_points, row.note),
        }
    }
    println!("\nfull tables under {}", manifest.out_dir.display());
}
