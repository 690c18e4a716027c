//! Trains a greedy parser and inspects its predictions.
//!
//! Fits one averaged perceptron per requested system on a treebank's
//! training split, scores UAS on the test split against the
//! attach-to-previous-token baseline, and pretty-prints one parsed
//! sentence.
//!
//! Usage: cargo run --release --example train_and_parse [treebank-dir] [system]
//! Without a system argument all five are trained.

use dispar::metrics::uas_counts;
use dispar::parser::{previous_token_baseline, train, TrainConfig};
use dispar::transitions::System;
use dispar::treebank::{ParseOptions, Sentence, Treebank};

use std::path::PathBuf;

fn score(tb: &Treebank, parse: impl Fn(&Sentence) -> Vec<usize>) -> f64 {
    let mut correct = 0;
    let mut total = 0;
    for s in &tb.test {
        let (c, t) = uas_counts(&parse(s), &s.gold_heads()).expect("aligned");
        correct += c;
        total += t;
    }
    correct as f64 / total as f64
}

fn main() {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = args.next().map(Into::into).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/synth-mixed")
    });
    let systems: Vec<System> = match args.next() {
        Some(s) => vec![s.parse().expect("unknown system")],
        None => System::ALL.to_vec(),
    };

    let tb = Treebank::from_dir(&dir, &ParseOptions::default()).expect("load treebank");
    println!("treebank {}: {} train / {} test trees", tb.name, tb.train.len(), tb.test.len());
    let baseline = score(&tb, |s| previous_token_baseline(s.len()));
    println!("attach-to-previous baseline UAS: {baseline:.4}\n");

    let cfg = TrainConfig { epochs: 5, seed: 1, hash_bits: 18 };
    let mut last_model = None;
    for system in systems {
        let model = train(system, &tb.train, &cfg).expect("training succeeds");
        let uas = score(&tb, |s| model.parse(s).expect("parsing cannot fail"));
        println!("{:16} UAS {uas:.4}  ({:+.4} over baseline)", system.name(), uas - baseline);
        last_model = Some(model);
    }

    let model = last_model.expect("at least one system");
    let sample = tb
        .test
        .iter()
        .find(|s| (6..=10).contains(&s.len()))
        .unwrap_or(&tb.test[0]);
    let predicted = model.parse(sample).expect("parsing cannot fail");
    let gold = sample.gold_heads();
    println!("\nsentence {} parsed by {}:", sample.id, model.system().name());
    println!("  idx  form        upos    gold  predicted");
    for t in sample.tokens() {
        let p = predicted[t.index - 1];
        let mark = if p == gold[t.index - 1] { ' ' } else { '*' };
        println!(
            "  {:>3}  {:<10}  {:<6}  {:>4}  {:>8} {mark}",
            t.index, t.form, t.upos, t.gold_head, p
        );
    }
}
