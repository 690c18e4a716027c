//! Static oracles: canonical derivations and graceful degradation.
//!
//! Replays each system's static oracle against gold trees. For a small
//! sentence the full transition sequence is printed; then a sample of the
//! treebank is replayed to confirm that reachable trees are rebuilt exactly
//! and that projective systems on non-projective gold still produce legal
//! (projective) derivations, losing only the arcs they must.
//!
//! Usage: cargo run --release --example oracle_replay [treebank-dir]

use dispar::parser::{oracle_sequence, GoldTree};
use dispar::transitions::{is_projective, System};
use dispar::treebank::{ParseOptions, Treebank};

use std::path::PathBuf;

fn main() {
    let dir: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/synth-mixed")
    });
    let tb = Treebank::from_dir(&dir, &ParseOptions::default()).expect("load treebank");

    let sample = tb
        .train
        .iter()
        .find(|s| s.len() == 5)
        .expect("a length-5 sentence exists");
    let heads = sample.gold_heads();
    println!("gold heads of {}: {heads:?}\n", sample.id);
    for system in System::ALL {
        let gold = GoldTree::new(&heads).expect("valid tree");
        let (seq, rebuilt) = oracle_sequence(system, &gold, heads.len()).expect("oracle runs");
        let names: Vec<&str> = seq
            .iter()
            .map(|t| match t {
                dispar::transitions::Transition::Shift => "SH",
                dispar::transitions::Transition::LeftArc => "LA",
                dispar::transitions::Transition::RightArc => "RA",
                dispar::transitions::Transition::Reduce => "RE",
                dispar::transitions::Transition::NoArc => "NO",
                dispar::transitions::Transition::Swap => "SW",
            })
            .collect();
        let exact = if rebuilt == heads { "exact" } else { "approx" };
        println!("{:16} {exact:<6} {}", system.name(), names.join(" "));
    }

    println!("\nreplaying 400 training trees per system:");
    let sample: Vec<_> = tb.train.iter().take(400).collect();
    for system in System::ALL {
        let mut exact = 0usize;
        let mut lost_arcs = 0usize;
        let mut nonproj_gold = 0usize;
        for s in &sample {
            let heads = s.gold_heads();
            let projective = is_projective(&heads).expect("valid tree");
            if !projective {
                nonproj_gold += 1;
            }
            let gold = GoldTree::new(&heads).expect("valid tree");
            let (_, rebuilt) = oracle_sequence(system, &gold, heads.len()).expect("oracle runs");
            if system.is_projective() {
                assert!(is_projective(&rebuilt).expect("valid tree"), "derivation stayed legal");
            }
            if rebuilt == heads {
                exact += 1;
            } else {
                lost_arcs += rebuilt
                    .iter()
                    .zip(&heads)
                    .filter(|(a, b)| a != b)
                    .count();
            }
        }
        println!(
            "{:16} rebuilt {exact}/{} exactly ({} non-projective gold trees), {} arcs differ",
            system.name(),
            sample.len(),
            nonproj_gold,
            lost_arcs
        );
    }
}
