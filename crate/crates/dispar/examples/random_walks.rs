//! Uniformly random legal-transition walks and what they build.
//!
//! Draws seeded random walks for one transition system and sentence length,
//! prints a few of the finalized trees, and compares the empirical
//! displacement distribution of many walks against the exact enumeration
//! oracle (available for lengths up to 7).
//!
//! Usage: cargo run --release --example random_walks [system] [n] [walks]

use dispar::sampler::{enumerate_inherent, random_walk, tree_displacements, walk_rng};
use dispar::transitions::System;

use std::collections::BTreeMap;

fn main() {
    let mut args = std::env::args().skip(1);
    let system: System = args
        .next()
        .map(|s| s.parse().expect("unknown system"))
        .unwrap_or(System::ArcEager);
    let n: usize = args.next().map(|s| s.parse().expect("bad n")).unwrap_or(4);
    let walks: u32 = args.next().map(|s| s.parse().expect("bad walk count")).unwrap_or(100_000);

    println!("system {system}, sentence length {n}, {walks} walks\n");
    println!("first walks:");
    for ordinal in 0..5.min(walks) {
        let mut rng = walk_rng(7, "demo", "all", 0, ordinal);
        let heads = random_walk(system, n, &mut rng).expect("walks cannot dead-end");
        println!("  heads {heads:?}  displacements {:?}", tree_displacements(&heads, false));
    }

    let mut counts: BTreeMap<i32, u64> = BTreeMap::new();
    let mut qualifying = 0u64;
    for ordinal in 0..walks {
        let mut rng = walk_rng(7, "demo", "all", 0, ordinal);
        let heads = random_walk(system, n, &mut rng).expect("walks cannot dead-end");
        let ds = tree_displacements(&heads, false);
        if ds.is_empty() {
            continue;
        }
        // One uniformly drawn arc per walk, matching the estimator.
        use rand::Rng;
        *counts.entry(ds[rng.random_range(0..ds.len())]).or_insert(0) += 1;
        qualifying += 1;
    }

    println!("\nempirical vs exact inherent distribution (root arcs excluded):");
    let exact = enumerate_inherent(system, n, false).expect("n within exact range");
    let lo = exact.distribution.min_displacement();
    let hi = exact.distribution.max_displacement();
    println!("  d     empirical   exact       |diff| in std errors");
    for d in lo..=hi {
        if d == 0 {
            continue;
        }
        let p_hat = *counts.get(&d).unwrap_or(&0) as f64 / qualifying as f64;
        let p = exact.distribution.prob(d);
        let se = (p * (1.0 - p) / qualifying as f64).sqrt();
        let sigmas = if se > 0.0 { (p_hat - p).abs() / se } else { 0.0 };
        println!("  {d:+3}   {p_hat:.5}     {p:.5}     {sigmas:.2}");
    }
}
