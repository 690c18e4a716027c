//! Exact inherent displacement distributions for small sentence lengths.
//!
//! Expands the full configuration DAG of each transition system under
//! uniformly random legal transitions and prints the resulting law of a
//! uniformly drawn arc displacement, together with the number of reachable
//! trees. Projective systems reach exactly the projective trees; the
//! non-projective ones reach all (n+1)^(n-1) rooted trees.
//!
//! Usage: cargo run --release --example exact_enumeration [max_n] [--include-root-arcs]

use std::time::Instant;

use dispar::sampler::enumerate_inherent;
use dispar::transitions::System;

fn main() {
    let mut max_n = 5usize;
    let mut include_root_arcs = false;
    for arg in std::env::args().skip(1) {
        if arg == "--include-root-arcs" {
            include_root_arcs = true;
        } else {
            max_n = arg.parse().expect("max_n must be a positive integer");
        }
    }

    for n in 1..=max_n {
        println!("== n = {n} ==");
        for sys in System::ALL {
            let started = Instant::now();
            let exact = match enumerate_inherent(sys, n, include_root_arcs) {
                Ok(e) => e,
                Err(err) => {
                    println!("  {sys:<15} {err}");
                    continue;
                }
            };
            let elapsed = started.elapsed();
            print!("  {sys:<15} {:>6} trees  {elapsed:>10.2?}  ", exact.trees.len());
            let d = &exact.distribution;
            let parts: Vec<String> = (d.min_displacement()..=d.max_displacement())
                .filter(|&k| d.prob(k) > 0.0)
                .map(|k| format!("{k:+}:{:.4}", d.prob(k)))
                .collect();
            println!("{}", parts.join(" "));
        }
    }
}
