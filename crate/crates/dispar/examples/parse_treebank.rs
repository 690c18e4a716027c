//! Loads a treebank directory and summarizes its structure.
//!
//! Reports split sizes, per-bin sentence counts, the share of
//! non-projective trees, and the observed displacement distribution of the
//! test split (root arcs excluded, as in all default analyses).
//!
//! Usage: cargo run --example parse_treebank [treebank-dir]
//! The default is the bundled `synth-mixed` corpus.

use dispar::transitions::is_projective;
use dispar::treebank::{bin_sentences, observed_distribution, BinSpec, ParseOptions, Treebank};

use std::path::PathBuf;

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/synth-mixed")
        });
    let tb = Treebank::from_dir(&dir, &ParseOptions::default()).expect("load treebank");
    println!("treebank {}: {} train / {} test trees", tb.name, tb.train.len(), tb.test.len());

    let nonproj = tb
        .test
        .iter()
        .filter(|s| !is_projective(&s.gold_heads()).expect("gold trees are valid"))
        .count();
    println!(
        "non-projective test trees: {} ({:.1}%)",
        nonproj,
        100.0 * nonproj as f64 / tb.test.len() as f64
    );

    let spec = BinSpec::default();
    let binned = bin_sentences(&tb.test, &spec);
    println!("\ntest sentences per length bin:");
    for (range, members) in &binned.bins {
        println!("  {range:>6}  {}", members.len());
    }
    if binned.dropped > 0 {
        println!("  (+{} sentences outside every bin)", binned.dropped);
    }

    let refs: Vec<&_> = tb.test.iter().collect();
    let observed = observed_distribution(&refs, false).expect("test split has non-root arcs");
    println!("\nobserved displacement distribution (test split, root arcs excluded):");
    for (&d, &p) in observed.mass() {
        if p >= 0.005 {
            println!("  {d:+3}  {p:.4}  {}", "#".repeat((p * 120.0).round() as usize));
        }
    }
    println!("  ({} arcs total)", observed.support_count());
}
