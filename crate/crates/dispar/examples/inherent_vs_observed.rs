//! Earth mover's distance between inherent and observed distributions.
//!
//! For one sentence-length bin of a treebank's test split, samples each
//! system's inherent displacement distribution (10 repetitions, one
//! uniformly drawn arc per random walk) and reports the mean EMD to the
//! bin's observed gold distribution. Systems whose structural bias matches
//! the treebank's word order sit closer.
//!
//! Usage: cargo run --release --example inherent_vs_observed [treebank-dir] [bin]
//! Defaults: the bundled `synth-headfirst` corpus, bin 10-12.

use dispar::sampler::{estimate_emd, BinOutcome, SamplerConfig};
use dispar::transitions::System;
use dispar::treebank::{
    bin_sentences, observed_distribution, BinRange, BinSpec, ParseOptions, Treebank,
};

use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = args.next().map(Into::into).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/synth-headfirst")
    });
    let bin: BinRange = args
        .next()
        .map(|s| s.parse().expect("bin must look like 10-12"))
        .unwrap_or(BinRange { lo: 10, hi: 12 });

    let tb = Treebank::from_dir(&dir, &ParseOptions::default()).expect("load treebank");
    let spec = BinSpec::new(vec![bin]).expect("one bin");
    let binned = bin_sentences(&tb.test, &spec);
    let members = &binned.bins[0].1;
    println!(
        "treebank {}, bin {bin}: {} test sentences",
        tb.name,
        members.len()
    );

    let observed = observed_distribution(members, false).expect("bin has non-root arcs");
    println!("observed distribution over {} arcs\n", observed.support_count());

    let cfg = SamplerConfig { seed: 42, ..SamplerConfig::default() };
    let lengths: Vec<usize> = members.iter().map(|s| s.len()).collect();
    println!("system            mean EMD    std err   (lower = bias closer to the data)");
    for system in System::ALL {
        let outcome = estimate_emd(system, &observed, &lengths, &cfg, &tb.name, &bin.to_string())
            .expect("estimation succeeds");
        match outcome {
            BinOutcome::Estimated { estimate, .. } => println!(
                "{:16} {:>8.4}   {:>7.4}",
                system.name(),
                estimate.mean_emd,
                estimate.std_error
            ),
            BinOutcome::Skipped { sentences, min_required } => println!(
                "{:16} skipped ({sentences} sentences, need {min_required})",
                system.name()
            ),
        }
    }
}
