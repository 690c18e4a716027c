//! Regenerates the bundled synthetic treebanks.
//!
//! Usage: `cargo run --example synthetic_treebank [-- <out-dir>]`
//!
//! Writes `train.conllu`/`test.conllu` for each built-in profile under
//! `<out-dir>` (default `crates/dispar/testdata`). Generation is keyed by
//! `(seed, profile, split, index)`, so the output is byte-identical on every
//! run; a unit test in the `synth` module holds the checked-in copies to the
//! generator's current output.

use dispar::synth::{builtin_profiles, generate, write_to_dir};
use dispar::treebank::arc_displacement;

use std::env;
use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let out_dir: PathBuf = env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| PathBuf::from("crates/dispar/testdata"));

    for profile in builtin_profiles() {
        let tb = generate(&profile);
        let mut sum = 0.0;
        let mut arcs = 0usize;
        for s in tb.train.iter().chain(&tb.test) {
            for (dep, &head) in s.gold_heads().iter().enumerate() {
                if head != 0 {
                    sum += arc_displacement(head, dep + 1) as f64;
                    arcs += 1;
                }
            }
        }
        write_to_dir(&tb, &out_dir)?;
        println!(
            "{:16} {} train / {} test trees, mean displacement {:+.3} over {} arcs",
            tb.name,
            tb.train.len(),
            tb.test.len(),
            sum / arcs as f64,
            arcs
        );
    }
    println!("wrote corpora under {}", out_dir.display());
    Ok(())
}
