//! Deterministic synthetic treebank generator.
//!
//! Produces small CoNLL-U corpora with controllable head-direction bias so
//! the end-to-end pipeline can be exercised without external data.  Three
//! built-in profiles differ in where a span's head tends to sit:
//!
//! * `synth-headfirst` — heads early in their span, displacements skew
//!   negative;
//! * `synth-headlast` — heads late, displacements skew positive;
//! * `synth-mixed` — no directional bias, plus a fraction of sentences with
//!   one deliberately non-projective arc.
//!
//! Trees are built by recursive span partitioning (always projective before
//! the optional non-projective rewrite), and the part-of-speech tags encode
//! structural roles, so a feature-based parser has real signal to learn
//! from.  Every sentence is keyed by `(seed, profile, split, index)`, making
//! corpora reproducible token-for-token regardless of generation order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fnv::Fnv1a;
use crate::transitions::is_projective;
use crate::treebank::{write_conllu, NodeId, Sentence, Token, Treebank};

use std::fs;
use std::io;
use std::path::Path;

/// Parameters for one synthetic corpus.
#[derive(Debug, Clone)]
pub struct Profile {
    pub name: String,
    /// In (0, 1): small values put span heads near the right edge
    /// (positive displacements), large values near the left edge.
    pub head_bias: f64,
    /// Fraction of sentences given one crossing arc.
    pub nonproj_rate: f64,
    pub seed: u64,
    pub train_trees: usize,
    pub test_trees: usize,
}

/// The three corpora used by the bundled examples and the end-to-end tests.
pub fn builtin_profiles() -> Vec<Profile> {
    let base = |name: &str, head_bias, nonproj_rate| Profile {
        name: name.to_string(),
        head_bias,
        nonproj_rate,
        seed: 2026,
        train_trees: 1100,
        test_trees: 1040,
    };
    vec![
        base("synth-headfirst", 0.82, 0.0),
        base("synth-headlast", 0.18, 0.0),
        base("synth-mixed", 0.5, 0.18),
    ]
}

/// Sentence lengths cycle through this schedule (with ±1 jitter), so every
/// default length bin up to 40-99 keeps a healthy share of each split.
const LENGTH_SCHEDULE: [usize; 30] = [
    2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 23, 24, 26, 27, 29,
    31, 35, 37, 41, 44,
];

fn sentence_rng(profile: &Profile, split: &str, index: usize) -> ChaCha8Rng {
    let word = |salt: u64| {
        let mut h = Fnv1a::new();
        h.write_u64(profile.seed)
            .write(profile.name.as_bytes())
            .write(&[0x1f])
            .write(split.as_bytes())
            .write(&[0x1f])
            .write_u64(index as u64)
            .write_u64(salt);
        h.finish()
    };
    let mut key = [0u8; 32];
    for (i, salt) in (0..4).enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&word(salt).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Attaches children of `parent` covering positions `lo..=hi`: the span is
/// cut into chunks, each chunk's head (position drawn with the directional
/// bias) attaches to `parent`, and the chunk remainders recurse under it.
fn attach_span(heads: &mut [NodeId], lo: usize, hi: usize, parent: NodeId, bias: f64, rng: &mut ChaCha8Rng) {
    let mut start = lo;
    while start <= hi {
        let mut end = start;
        while end < hi && rng.random::<f64>() < 0.55 {
            end += 1;
        }
        let span = end - start;
        // bias b maps to exponent b/(1-b): >1 skews the head leftward.
        let shape = bias / (1.0 - bias);
        let r = rng.random::<f64>().powf(shape);
        let head = start + ((r * (span + 1) as f64) as usize).min(span);
        heads[head] = parent;
        if head > start {
            attach_span(heads, start, head - 1, head, bias, rng);
        }
        if head < end {
            attach_span(heads, head + 1, end, head, bias, rng);
        }
        start = end + 1;
    }
}

/// Re-attaches one leaf to a distant head, retrying until the tree actually
/// becomes non-projective. Leaves have no dependents, so any re-attachment
/// keeps the structure a tree.
fn inject_crossing(heads: &mut [NodeId], rng: &mut ChaCha8Rng) {
    let n = heads.len();
    let leaves: Vec<usize> = (1..=n)
        .filter(|&i| !heads.contains(&i))
        .collect();
    if leaves.is_empty() {
        return;
    }
    for _ in 0..12 {
        let x = leaves[rng.random_range(0..leaves.len())];
        let y = rng.random_range(1..=n);
        if y == x || y.abs_diff(x) < 3 || heads[x - 1] == y {
            continue;
        }
        let saved = heads[x - 1];
        heads[x - 1] = y;
        // Re-attaching a leaf always keeps the structure a tree.
        if !is_projective(heads).expect("leaf re-attachment keeps a tree") {
            return;
        }
        heads[x - 1] = saved;
    }
}

/// Tags encode structural role: internal nodes cycle VERB/NOUN/ADP by depth,
/// leaves signal the direction and distance to their head.
fn assign_upos(heads: &[NodeId]) -> Vec<&'static str> {
    let n = heads.len();
    let mut has_children = vec![false; n + 1];
    for &h in heads {
        has_children[h] = true;
    }
    let depth = |mut i: usize| {
        let mut d = 0;
        while i != 0 {
            i = heads[i - 1];
            d += 1;
        }
        d
    };
    (1..=n)
        .map(|i| {
            if has_children[i] {
                match depth(i) % 3 {
                    1 => "VERB",
                    2 => "NOUN",
                    _ => "ADP",
                }
            } else {
                let h = heads[i - 1];
                let near = h.abs_diff(i) == 1;
                match (i < h, near) {
                    (true, true) => "DET",
                    (true, false) => "ADJ",
                    (false, true) => "ADV",
                    (false, false) => "PRON",
                }
            }
        })
        .collect()
}

fn form_for(upos: &str, rng: &mut ChaCha8Rng) -> String {
    // Squaring the draw gives a Zipf-like skew toward low word ids.
    let u = rng.random::<f64>();
    let idx = ((u * u) * 30.0) as usize;
    format!("{}{:02}", upos.to_lowercase(), idx)
}

fn generate_sentence(profile: &Profile, split: &str, index: usize) -> Sentence {
    let mut rng = sentence_rng(profile, split, index);
    let base = LENGTH_SCHEDULE[index % LENGTH_SCHEDULE.len()];
    let n = (base + rng.random_range(0..3)).saturating_sub(1).clamp(2, 99);
    let mut heads = vec![0usize; n];
    {
        // Slot 0 is a scratch cell so `attach_span` can index by position.
        let mut padded = vec![0usize; n + 1];
        attach_span(&mut padded, 1, n, 0, profile.head_bias, &mut rng);
        heads.copy_from_slice(&padded[1..]);
    }
    if rng.random::<f64>() < profile.nonproj_rate {
        inject_crossing(&mut heads, &mut rng);
    }
    let upos = assign_upos(&heads);
    let tokens: Vec<Token> = (1..=n)
        .map(|i| Token {
            index: i,
            form: form_for(upos[i - 1], &mut rng),
            upos: upos[i - 1].to_string(),
            gold_head: heads[i - 1],
        })
        .collect();
    let id = format!("{}-{}-{:05}", profile.name, split, index);
    Sentence::new(id, tokens).expect("generator emits valid trees")
}

/// Generates the full corpus for one profile.
pub fn generate(profile: &Profile) -> Treebank {
    let split = |name: &str, count: usize| {
        (0..count)
            .map(|i| generate_sentence(profile, name, i))
            .collect::<Vec<_>>()
    };
    Treebank {
        name: profile.name.clone(),
        train: split("train", profile.train_trees),
        test: split("test", profile.test_trees),
    }
}

/// Writes `train.conllu` and `test.conllu` under `dir/<treebank name>/`.
pub fn write_to_dir(tb: &Treebank, dir: impl AsRef<Path>) -> io::Result<()> {
    let dir = dir.as_ref().join(&tb.name);
    fs::create_dir_all(&dir)?;
    let mut train = Vec::new();
    write_conllu(&mut train, &tb.train)?;
    fs::write(dir.join("train.conllu"), train)?;
    let mut test = Vec::new();
    write_conllu(&mut test, &tb.test)?;
    fs::write(dir.join("test.conllu"), test)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{arc_displacement, bin_sentences, BinSpec};

    #[test]
    fn generation_is_deterministic() {
        let profile = &builtin_profiles()[0];
        let a = generate_sentence(profile, "train", 17);
        let b = generate_sentence(profile, "train", 17);
        assert_eq!(a, b);
        assert_ne!(a, generate_sentence(profile, "train", 18));
        assert_ne!(a, generate_sentence(profile, "test", 17));
    }

    #[test]
    fn profiles_have_advertised_sizes_and_valid_trees() {
        for profile in builtin_profiles() {
            let tb = generate(&profile);
            assert_eq!(tb.train.len(), profile.train_trees);
            assert_eq!(tb.test.len(), profile.test_trees);
            // Sentence::new validated every tree during generation.
        }
    }

    #[test]
    fn every_default_bin_is_populated() {
        let profile = &builtin_profiles()[1];
        let tb = generate(profile);
        let spec = BinSpec::default();
        for split in [&tb.train, &tb.test] {
            let grouped = bin_sentences(split, &spec);
            assert_eq!(grouped.dropped, 0);
            for (range, members) in &grouped.bins {
                assert!(
                    members.len() >= 20,
                    "bin {}-{} has only {} sentences",
                    range.lo,
                    range.hi,
                    members.len()
                );
            }
        }
    }

    #[test]
    fn head_bias_controls_displacement_sign() {
        let mean_displacement = |name: &str| {
            let profile = builtin_profiles()
                .into_iter()
                .find(|p| p.name == name)
                .unwrap();
            let tb = generate(&profile);
            let mut sum = 0.0;
            let mut count = 0usize;
            for s in &tb.train {
                for (dep, &head) in s.gold_heads().iter().enumerate() {
                    if head != 0 {
                        sum += arc_displacement(head, dep + 1) as f64;
                        count += 1;
                    }
                }
            }
            sum / count as f64
        };
        let first = mean_displacement("synth-headfirst");
        let last = mean_displacement("synth-headlast");
        let mixed = mean_displacement("synth-mixed");
        assert!(first < -0.5, "head-first mean displacement {first}");
        assert!(last > 0.5, "head-last mean displacement {last}");
        assert!(mixed > first && mixed < last, "mixed {mixed} not between");
    }

    #[test]
    fn committed_corpora_match_generator_output() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
        let tmp = tempfile::tempdir().unwrap();
        for profile in builtin_profiles() {
            let tb = generate(&profile);
            write_to_dir(&tb, tmp.path()).unwrap();
            for split in ["train.conllu", "test.conllu"] {
                let fresh = fs::read(tmp.path().join(&profile.name).join(split)).unwrap();
                let committed = fs::read(root.join(&profile.name).join(split)).unwrap();
                assert_eq!(fresh, committed, "{}/{split} drifted", profile.name);
            }
        }
    }

    #[test]
    fn mixed_profile_has_nonprojective_sentences() {
        let profiles = builtin_profiles();
        let count_nonproj = |tb: &Treebank| {
            tb.train
                .iter()
                .filter(|s| !is_projective(&s.gold_heads()).unwrap())
                .count()
        };
        let mixed = generate(&profiles[2]);
        let share = count_nonproj(&mixed) as f64 / mixed.train.len() as f64;
        assert!(share > 0.10 && share < 0.25, "non-projective share {share}");
        assert_eq!(count_nonproj(&generate(&profiles[0])), 0);
        assert_eq!(count_nonproj(&generate(&profiles[1])), 0);
    }
}
