//! Monte Carlo approximation of a system's inherent displacement
//! distribution, plus an exact enumerator for small sentence lengths that
//! serves as its validation oracle.
//!
//! A random walk runs a transition system from the initial configuration to
//! termination, choosing uniformly among the legal transitions at every
//! step. The inherent distribution over a bin of sentence lengths is the law
//! of the displacement of one arc drawn uniformly from a random walk's tree,
//! with one walk per sentence so lengths are weighted by their empirical
//! frequency.
//!
//! Every walk draws from an RNG stream derived from
//! (seed, treebank, bin, repetition, sentence ordinal), so results do not
//! depend on iteration order or parallel scheduling.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fnv::Fnv1a;
use crate::metrics::emd;
use crate::transitions::{Configuration, System, TransitionError};
use crate::treebank::{DisplacementDistribution, DistributionError, NodeId};

/// Largest sentence length supported by [`enumerate_inherent`].
pub const MAX_EXACT_LENGTH: usize = 7;

/// Hard cap on live states during exact enumeration.
const STATE_LIMIT: usize = 50_000_000;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("exact enumeration supports lengths up to {max}, got {n}")]
    UnsupportedLength { n: usize, max: usize },
    #[error("exact enumeration exceeded the limit of {limit} live states")]
    CapacityExceeded { limit: usize },
    #[error("repetitions must be at least 1")]
    NoRepetitions,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Monte Carlo repetitions per bin.
    pub repetitions: u32,
    pub seed: u64,
    /// Count arcs headed by the artificial root as displacement samples.
    pub include_root_arcs: bool,
    /// Bins with fewer sentences are skipped rather than estimated.
    pub min_bin_sentences: usize,
    /// Harvest every qualifying arc of each walk instead of one uniform
    /// draw. Lower variance, but long sentences then carry more weight.
    pub all_arcs: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            repetitions: 10,
            seed: 0,
            include_root_arcs: false,
            min_bin_sentences: 5,
            all_arcs: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmdEstimate {
    pub mean_emd: f64,
    /// Sample standard deviation across repetitions over sqrt(repetitions);
    /// 0 for a single repetition.
    pub std_error: f64,
    pub repetitions: u32,
    /// Set when a single repetition makes the standard error meaningless.
    pub low_confidence: bool,
}

/// Outcome of estimating one (treebank, system, bin) cell.
#[derive(Debug)]
pub enum BinOutcome {
    Estimated {
        estimate: EmdEstimate,
        /// One sampled inherent distribution per repetition, in order.
        samples: Vec<DisplacementDistribution>,
    },
    /// The bin had too few sentences; distinguished from an error so sweeps
    /// can record it and continue.
    Skipped { sentences: usize, min_required: usize },
}

// === Seeded walks ===

/// RNG for one walk, keyed by the full task identity. Streams for distinct
/// tuples are independent ChaCha8 keys, so any evaluation order (or parallel
/// schedule) yields identical samples.
pub fn walk_rng(seed: u64, treebank: &str, bin: &str, repetition: u32, ordinal: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (word, chunk) in key.chunks_exact_mut(8).enumerate() {
        let mut h = Fnv1a::new();
        h.write_u64(seed);
        h.write(treebank.as_bytes());
        h.write(&[0x1f]);
        h.write(bin.as_bytes());
        h.write(&[0x1f]);
        h.write_u32(repetition);
        h.write_u32(ordinal);
        h.write_u64(word as u64);
        chunk.copy_from_slice(&h.finish().to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Runs one uniformly random derivation to termination and returns the
/// finalized head vector.
pub fn random_walk<R: Rng>(
    system: System,
    n: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, TransitionError> {
    let mut c = system.initial(n)?;
    while !system.is_terminal(&c) {
        let legal = system.legal(&c)?;
        let t = legal[rng.random_range(0..legal.len())];
        system.apply_in_place(&mut c, t)?;
    }
    system.finalize(&c)
}

/// Displacements (head position minus dependent position) of a finalized
/// tree's arcs, excluding root arcs unless requested.
pub fn tree_displacements(heads: &[NodeId], include_root_arcs: bool) -> Vec<i32> {
    heads
        .iter()
        .enumerate()
        .filter(|&(_, &h)| h != 0 || include_root_arcs)
        .map(|(i, &h)| h as i32 - (i + 1) as i32)
        .collect()
}

/// One Monte Carlo repetition of the inherent distribution for a bin: one
/// random walk per sentence length, one displacement drawn uniformly from
/// each walk's qualifying arcs (or all of them under `all_arcs`). Walks with
/// no qualifying arcs contribute nothing and are not redrawn; if every walk
/// comes up empty the distribution is empty and an error is returned.
pub fn sample_inherent_bin(
    system: System,
    lengths: &[usize],
    cfg: &SamplerConfig,
    treebank: &str,
    bin: &str,
    repetition: u32,
) -> Result<DisplacementDistribution, SamplerError> {
    let mut counts: BTreeMap<i32, u64> = BTreeMap::new();
    for (ordinal, &n) in lengths.iter().enumerate() {
        let mut rng = walk_rng(cfg.seed, treebank, bin, repetition, ordinal as u32);
        let heads = random_walk(system, n, &mut rng)?;
        let ds = tree_displacements(&heads, cfg.include_root_arcs);
        if ds.is_empty() {
            continue;
        }
        if cfg.all_arcs {
            for d in ds {
                *counts.entry(d).or_insert(0) += 1;
            }
        } else {
            let d = ds[rng.random_range(0..ds.len())];
            *counts.entry(d).or_insert(0) += 1;
        }
    }
    Ok(DisplacementDistribution::from_counts(&counts)?)
}

/// Estimates the earth mover's distance between a bin's observed
/// distribution and the system's inherent distribution: `repetitions`
/// independent samples, their mean and standard error. Bins under
/// `min_bin_sentences` are skipped, not errors.
pub fn estimate_emd(
    system: System,
    observed: &DisplacementDistribution,
    lengths: &[usize],
    cfg: &SamplerConfig,
    treebank: &str,
    bin: &str,
) -> Result<BinOutcome, SamplerError> {
    if cfg.repetitions == 0 {
        return Err(SamplerError::NoRepetitions);
    }
    if lengths.len() < cfg.min_bin_sentences {
        return Ok(BinOutcome::Skipped {
            sentences: lengths.len(),
            min_required: cfg.min_bin_sentences,
        });
    }
    let mut samples = Vec::with_capacity(cfg.repetitions as usize);
    let mut emds = Vec::with_capacity(cfg.repetitions as usize);
    for rep in 1..=cfg.repetitions {
        let sampled = sample_inherent_bin(system, lengths, cfg, treebank, bin, rep)?;
        emds.push(emd(observed, &sampled));
        samples.push(sampled);
    }
    let reps = emds.len() as f64;
    let mean = emds.iter().sum::<f64>() / reps;
    let std_error = if emds.len() < 2 {
        0.0
    } else {
        let var = emds.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps - 1.0);
        (var / reps).sqrt()
    };
    Ok(BinOutcome::Estimated {
        estimate: EmdEstimate {
            mean_emd: mean,
            std_error,
            repetitions: cfg.repetitions,
            low_confidence: cfg.repetitions < 2,
        },
        samples,
    })
}

// === Exact enumeration ===

/// Exact inherent distribution for a single sentence length.
#[derive(Debug, Clone)]
pub struct ExactInherent {
    /// The law of one arc displacement drawn uniformly from a random
    /// derivation's tree, conditioned on at least one qualifying arc.
    pub distribution: DisplacementDistribution,
    /// Every reachable finalized tree with its exact probability under
    /// uniformly random legal transitions, sorted by head vector.
    pub trees: Vec<(Vec<NodeId>, f64)>,
}

/// Exactly expands the uniform branching process over the configuration
/// DAG by forward probability propagation in strictly increasing potential
/// order: every transition strictly increases `phi`, so when a state is
/// popped its inbound mass is complete. Supported for n up to
/// [`MAX_EXACT_LENGTH`]; beyond that the state space no longer reliably
/// fits in memory.
pub fn enumerate_inherent(
    system: System,
    n: usize,
    include_root_arcs: bool,
) -> Result<ExactInherent, SamplerError> {
    if n == 0 {
        return Err(SamplerError::Transition(TransitionError::EmptySentence));
    }
    if n > MAX_EXACT_LENGTH {
        return Err(SamplerError::UnsupportedLength { n, max: MAX_EXACT_LENGTH });
    }

    let initial = system.initial(n)?;
    let mut frontier: BTreeMap<(u64, u128), (f64, Configuration)> = BTreeMap::new();
    frontier.insert((phi(system, &initial, n), state_key(&initial, n)), (1.0, initial));
    let mut tree_mass: BTreeMap<Vec<NodeId>, f64> = BTreeMap::new();

    while let Some(((cur_phi, _), (mass, c))) = frontier.pop_first() {
        if frontier.len() > STATE_LIMIT {
            return Err(SamplerError::CapacityExceeded { limit: STATE_LIMIT });
        }
        if system.is_terminal(&c) {
            *tree_mass.entry(system.finalize(&c)?).or_insert(0.0) += mass;
            continue;
        }
        let legal = system.legal(&c)?;
        let share = mass / legal.len() as f64;
        for t in legal {
            let next = system.apply(&c, t)?;
            let next_phi = phi(system, &next, n);
            debug_assert!(next_phi > cur_phi, "potential must strictly increase");
            frontier
                .entry((next_phi, state_key(&next, n)))
                .and_modify(|(m, _)| *m += share)
                .or_insert((share, next));
        }
    }

    let mut disp_mass: BTreeMap<i32, f64> = BTreeMap::new();
    let mut qualifying = 0.0;
    let mut contributing = 0u64;
    for (heads, p) in &tree_mass {
        let ds = tree_displacements(heads, include_root_arcs);
        if ds.is_empty() {
            continue;
        }
        let w = p / ds.len() as f64;
        for d in ds {
            *disp_mass.entry(d).or_insert(0.0) += w;
        }
        qualifying += p;
        contributing += 1;
    }
    if qualifying <= 0.0 {
        return Err(SamplerError::Distribution(DistributionError::Empty));
    }
    for v in disp_mass.values_mut() {
        *v /= qualifying;
    }
    let distribution = DisplacementDistribution::from_probs(disp_mass, contributing)?;
    Ok(ExactInherent { distribution, trees: tree_mass.into_iter().collect() })
}

/// Strictly increasing potential along every transition, packed as
/// (high << 4) | low. For stack systems the high part counts inversions in
/// the remaining stack-then-buffer node sequence plus n per consumed token
/// (arcs and REDUCE raise it by at least one net) and the low part counts
/// buffer departures (SHIFT and arc-eager RIGHT_ARC raise it by one while
/// leaving the high part fixed; SWAP trades a -1 low for a +16 high). For
/// Covington the high part is the number of shifted tokens and the low part
/// the lambda2 length, which every non-SHIFT transition grows.
fn phi(system: System, c: &Configuration, n: usize) -> u64 {
    match system {
        System::ArcStandard | System::ArcEager | System::SwapEager => {
            let mut seq: Vec<NodeId> = Vec::with_capacity(n);
            for k in (0..c.left_len()).rev() {
                let x = c.left_nth(k).expect("k < left_len");
                if x != 0 {
                    seq.push(x);
                }
            }
            for k in 0..c.buffer_len() {
                seq.push(c.buffer_nth(k).expect("k < buffer_len"));
            }
            let mut inversions = 0u64;
            for i in 0..seq.len() {
                for j in i + 1..seq.len() {
                    if seq[i] > seq[j] {
                        inversions += 1;
                    }
                }
            }
            let consumed = (n - seq.len()) as u64;
            ((inversions + n as u64 * consumed) << 4) | (n - c.buffer_len()) as u64
        }
        System::CovingtonProj | System::CovingtonNp => {
            let shifted = (n - c.buffer_len()) as u64;
            let lambda2 = shifted + 1 - c.left_len() as u64;
            (shifted << 4) | lambda2
        }
    }
}

/// Injective fixed-width encoding of a configuration for n <= 7: node ids
/// fit in 3 bits and optional heads in 4 (0xF = none). Used only to
/// deduplicate states reached along different paths; the configuration
/// itself travels alongside, so the key is never decoded.
fn state_key(c: &Configuration, n: usize) -> u128 {
    debug_assert!(n <= MAX_EXACT_LENGTH);
    let mut key: u128 = 0;
    key = (key << 4) | c.left_len() as u128;
    for slot in 0..8 {
        let x = c.left_nth(slot).unwrap_or(0);
        key = (key << 3) | x as u128;
    }
    key = (key << 4) | c.buffer_len() as u128;
    for slot in 0..7 {
        let x = c.buffer_nth(slot).unwrap_or(0);
        key = (key << 3) | x as u128;
    }
    for d in 1..=n {
        let h = c.head_of(d).map_or(0xF, |h| h as u128);
        key = (key << 4) | h;
    }
    key
}
