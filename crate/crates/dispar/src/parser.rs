//! Static oracles, fixed feature templates, and an averaged perceptron for
//! greedy transition-based parsing.
//!
//! The oracle maps (gold tree, configuration) to the canonical next
//! transition of each system. When the gold tree is unreachable (a
//! non-projective tree under a projective system), it falls back to the
//! legal transition that loses the fewest gold arcs, breaking ties by the
//! fixed legality order, so every oracle sequence is a valid derivation.
//!
//! The feature set is fixed — identical templates for every treebank — and
//! hashed into a bounded weight table; training is teacher-forced averaged
//! perceptron over oracle sequences with per-epoch seeded shuffling.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fnv::{fnv1a64, Fnv1a};
use crate::transitions::{Configuration, System, Transition, TransitionError};
use crate::treebank::{NodeId, Sentence, TreeError};

/// Bump when the template set changes; stored in model files so stale
/// models are rejected instead of silently mis-scoring.
pub const TEMPLATE_VERSION: u32 = 1;

/// Number of feature templates; every extraction emits exactly this many.
pub const TEMPLATE_COUNT: usize = 22;

const MODEL_MAGIC: &[u8; 8] = b"DISPARM\0";
const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("model was trained for {model}, not {requested}")]
    SystemMismatch { model: System, requested: System },
    #[error("malformed model file: {0}")]
    BadModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

// === Gold-tree bookkeeping for the oracles ===

/// Precomputed gold-tree facts the oracles consult: heads, dependent
/// counts, and the projective order (rank in the in-order traversal of the
/// gold tree with children visited in surface order).
#[derive(Debug, Clone)]
pub struct GoldTree {
    /// head[d] for d in 1..=n; index 0 unused.
    head: Vec<NodeId>,
    /// Gold dependents per node, indices 0..=n.
    dep_count: Vec<usize>,
    /// Projective-order rank per node, indices 0..=n. Sorting nodes by this
    /// rank makes the gold tree projective.
    mpo: Vec<usize>,
}

impl GoldTree {
    /// `heads[i]` is the gold head of token `i + 1`.
    pub fn new(heads: &[NodeId]) -> Result<Self, TreeError> {
        crate::treebank::validate_tree(heads)?;
        let n = heads.len();
        let mut head = vec![0; n + 1];
        let mut dep_count = vec![0usize; n + 1];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n + 1];
        for (i, &h) in heads.iter().enumerate() {
            let d = i + 1;
            head[d] = h;
            dep_count[h] += 1;
            children[h].push(d); // ascending by construction
        }
        let mut mpo = vec![0usize; n + 1];
        let mut rank = 0usize;
        // In-order traversal: left children, the node, right children.
        let mut stack: Vec<(NodeId, bool)> = vec![(0, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                mpo[v] = rank;
                rank += 1;
                continue;
            }
            // Pushed in reverse so the pops come out left-to-right.
            for &c in children[v].iter().rev().filter(|&&c| c > v) {
                stack.push((c, false));
            }
            stack.push((v, true));
            for &c in children[v].iter().rev().filter(|&&c| c < v) {
                stack.push((c, false));
            }
        }
        debug_assert_eq!(rank, n + 1);
        Ok(GoldTree { head, dep_count, mpo })
    }

    pub fn head_of(&self, d: NodeId) -> NodeId {
        self.head[d]
    }

    fn complete(&self, c: &Configuration, x: NodeId) -> bool {
        c.dep_count(x) == self.dep_count[x]
    }
}

// === Static oracles ===

/// The canonical next transition for `c` against `gold`, or the
/// fewest-arcs-lost fallback when the canonical choice is illegal or no
/// rule matches. Always legal; errors only on terminal configurations.
pub fn oracle_transition(
    system: System,
    c: &Configuration,
    gold: &GoldTree,
) -> Result<Transition, TransitionError> {
    if system.is_terminal(c) {
        return Err(TransitionError::Terminal);
    }
    if let Some(t) = canonical(system, c, gold) {
        if system.is_legal(c, t) {
            return Ok(t);
        }
    }
    Ok(fallback(system, c, gold))
}

/// Replays the oracle from the initial configuration and returns the
/// transition sequence and the finalized head vector.
pub fn oracle_sequence(
    system: System,
    gold: &GoldTree,
    n: usize,
) -> Result<(Vec<Transition>, Vec<NodeId>), TransitionError> {
    let mut c = system.initial(n)?;
    let mut seq = Vec::new();
    while !system.is_terminal(&c) {
        let t = oracle_transition(system, &c, gold)?;
        system.apply_in_place(&mut c, t)?;
        seq.push(t);
    }
    Ok((seq, system.finalize(&c)?))
}

/// The canonical rule of each system. May propose an illegal transition
/// (gold outside the system's reachable class); the caller screens it.
fn canonical(system: System, c: &Configuration, gold: &GoldTree) -> Option<Transition> {
    match system {
        System::ArcStandard | System::SwapEager => {
            let s0 = c.left_nth(0)?;
            if system == System::SwapEager {
                if let Some(s1) = c.left_nth(1) {
                    if s1 != 0 && s1 < s0 && gold.mpo[s1] > gold.mpo[s0] {
                        return Some(Transition::Swap);
                    }
                }
            }
            if let Some(s1) = c.left_nth(1) {
                // Arcs only once the dependent has collected its own
                // dependents: popping it earlier would strand them.
                if s1 != 0 && gold.head[s1] == s0 && gold.complete(c, s1) {
                    return Some(Transition::LeftArc);
                }
                if gold.head[s0] == s1 && gold.complete(c, s0) {
                    return Some(Transition::RightArc);
                }
            }
            Some(Transition::Shift)
        }
        System::ArcEager => {
            let s0 = c.left_nth(0)?;
            let b0 = c.buffer_nth(0)?;
            if s0 != 0 && c.head_of(s0).is_none() && gold.head[s0] == b0 {
                return Some(Transition::LeftArc);
            }
            // Root children are left for finalize; an explicit root arc
            // would consume the front and is never required.
            if s0 != 0 && gold.head[b0] == s0 {
                return Some(Transition::RightArc);
            }
            // Pop an attached top when the front's business lies further
            // down: its gold head precedes s0, or a still-headless token
            // before s0 is its gold dependent.
            if c.head_of(s0).is_some() {
                let front_links_below = gold.head[b0] < s0
                    || (1..s0).any(|d| c.head_of(d).is_none() && gold.head[d] == b0);
                if front_links_below {
                    return Some(Transition::Reduce);
                }
            }
            Some(Transition::Shift)
        }
        System::CovingtonProj | System::CovingtonNp => {
            let j = c.buffer_nth(0)?;
            if let Some(i) = c.left_nth(0) {
                if i != 0 && gold.head[i] == j && c.head_of(i).is_none() {
                    return Some(Transition::LeftArc);
                }
                // Root children are left for finalize, as in every system.
                if i != 0 && gold.head[j] == i && c.head_of(j).is_none() {
                    return Some(Transition::RightArc);
                }
                // lambda1 is always exactly [0, 1, .., |lambda1|-1], so a
                // pending gold arc deeper in it means NO_ARC walks on.
                let pending = (1..i).any(|k| {
                    (gold.head[k] == j && c.head_of(k).is_none())
                        || (gold.head[j] == k && c.head_of(j).is_none())
                });
                if pending {
                    return Some(Transition::NoArc);
                }
            }
            Some(Transition::Shift)
        }
    }
}

/// Fewest-gold-arcs-lost fallback: applies every legal transition to a
/// scratch copy, counts the gold arcs still buildable afterwards, and keeps
/// the first maximizer in legality order.
fn fallback(system: System, c: &Configuration, gold: &GoldTree) -> Transition {
    let legal = system.legal(c).expect("caller checked non-terminal");
    let mut best = legal[0];
    let mut best_buildable = 0usize;
    for (k, &t) in legal.iter().enumerate() {
        let next = system.apply(c, t).expect("legal transitions apply");
        let buildable = count_buildable(system, &next, gold);
        if k == 0 || buildable > best_buildable {
            best = t;
            best_buildable = buildable;
        }
    }
    best
}

/// Number of gold arcs already built or still constructible in `c`,
/// judged myopically per system (position bookkeeping only, ignoring
/// future ordering constraints).
fn count_buildable(system: System, c: &Configuration, gold: &GoldTree) -> usize {
    let n = c.n();
    let mut alive = 0;
    for d in 1..=n {
        let h = gold.head[d];
        if let Some(built) = c.head_of(d) {
            if built == h {
                alive += 1;
            }
            continue;
        }
        let ok = match system {
            // Both endpoints must survive on stack or buffer; arc-eager
            // additionally cannot connect two stack items.
            System::ArcStandard | System::SwapEager => {
                c.is_unconsumed(d) && c.is_unconsumed(h)
            }
            System::ArcEager => {
                c.is_unconsumed(d)
                    && c.is_unconsumed(h)
                    && !(c.on_stack(d) && c.on_stack(h) && d != 0 && h != 0)
            }
            // The pair (min, max) is still visitable while max sits beyond
            // the buffer front, or at the front with min inside lambda1
            // (lambda1 is the contiguous block [0, left_len)).
            System::CovingtonProj | System::CovingtonNp => {
                let (lo, hi) = (h.min(d), h.max(d));
                if !c.in_buffer(hi) {
                    false
                } else if c.buffer_nth(0) == Some(hi) {
                    lo < c.left_len()
                } else {
                    true
                }
            }
        };
        if ok {
            alive += 1;
        }
    }
    alive
}

// === Feature extraction ===

/// Distance buckets for |pos(s0) - pos(b0)|: 1, 2, 3, 4, and 5+.
fn distance_bucket(a: NodeId, b: NodeId) -> u64 {
    let d = a.abs_diff(b);
    d.min(5) as u64
}

/// Hashes the 22 fixed templates of `c` into `out` as weight-table bucket
/// ids. Every template emits exactly one feature; absent positions emit a
/// NULL-valued feature, so the vector length is always [`TEMPLATE_COUNT`].
pub fn extract_features(c: &Configuration, s: &Sentence, mask: u64, out: &mut Vec<u32>) {
    out.clear();
    let s0 = c.left_nth(0);
    let s1 = c.left_nth(1);
    let s2 = c.left_nth(2);
    let b0 = c.buffer_nth(0);
    let b1 = c.buffer_nth(1);
    let b2 = c.buffer_nth(2);

    let form = |x: Option<NodeId>| x.map(|x| s.form(x));
    let upos = |x: Option<NodeId>| x.map(|x| s.upos(x));

    let mut emit = |template: u8, parts: &[Option<&str>]| {
        let mut h = Fnv1a::new();
        h.write(&[template]);
        for p in parts {
            match p {
                Some(v) => {
                    h.write(&[1]);
                    h.write(v.as_bytes());
                }
                None => {
                    h.write(&[0]);
                }
            }
        }
        out.push((h.finish() & mask) as u32);
    };

    emit(0, &[form(s0)]);
    emit(1, &[upos(s0)]);
    emit(2, &[form(s1)]);
    emit(3, &[upos(s1)]);
    emit(4, &[form(s2)]);
    emit(5, &[upos(s2)]);
    emit(6, &[form(b0)]);
    emit(7, &[upos(b0)]);
    emit(8, &[form(b1)]);
    emit(9, &[upos(b1)]);
    emit(10, &[form(b2)]);
    emit(11, &[upos(b2)]);
    emit(12, &[upos(s0.and_then(|x| c.leftmost_dep(x)))]);
    emit(13, &[upos(s0.and_then(|x| c.rightmost_dep(x)))]);
    emit(14, &[upos(b0.and_then(|x| c.leftmost_dep(x)))]);
    emit(15, &[upos(b0.and_then(|x| c.rightmost_dep(x)))]);

    // Numeric templates hash their value directly.
    let mut emit_num = |template: u8, v: Option<u64>| {
        let mut h = Fnv1a::new();
        h.write(&[template]);
        match v {
            Some(v) => {
                h.write(&[1]);
                h.write_u64(v);
            }
            None => {
                    h.write(&[0]);
                }
        }
        out.push((h.finish() & mask) as u32);
    };
    emit_num(16, s0.map(|x| c.dep_count(x) as u64));

    let mut emit2 = |template: u8, parts: &[Option<&str>]| {
        let mut h = Fnv1a::new();
        h.write(&[template]);
        for p in parts {
            match p {
                Some(v) => {
                    h.write(&[1]);
                    h.write(v.as_bytes());
                }
                None => {
                    h.write(&[0]);
                }
            }
        }
        out.push((h.finish() & mask) as u32);
    };
    emit2(17, &[upos(s0), upos(b0)]);
    emit2(18, &[form(s0), upos(b0)]);
    emit2(19, &[upos(s0), form(b0)]);
    emit2(20, &[upos(s0), upos(b0), upos(b1)]);

    let mut emit_dist = |template: u8, v: Option<u64>| {
        let mut h = Fnv1a::new();
        h.write(&[template]);
        match v {
            Some(v) => {
                h.write(&[1]);
                h.write_u64(v);
            }
            None => {
                    h.write(&[0]);
                }
        }
        out.push((h.finish() & mask) as u32);
    };
    emit_dist(21, s0.zip(b0).map(|(a, b)| distance_bucket(a, b)));

    debug_assert_eq!(out.len(), TEMPLATE_COUNT);
}

// === The model ===

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    system: System,
    hash_bits: u32,
    /// Bucket-major: weights[bucket * |T| + transition_index].
    weights: Vec<f64>,
    seed: u64,
    epochs: u32,
    template_version: u32,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: u32,
    pub seed: u64,
    /// Weight-table size is 2^hash_bits buckets per transition.
    pub hash_bits: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 5, seed: 0, hash_bits: 18 }
    }
}

impl Model {
    pub fn system(&self) -> System {
        self.system
    }

    /// A zero-weight model: parses as "always the first legal transition".
    pub fn zeroed(system: System, hash_bits: u32) -> Model {
        let n_t = system.transitions().len();
        Model {
            system,
            hash_bits,
            weights: vec![0.0; (1usize << hash_bits) * n_t],
            seed: 0,
            epochs: 0,
            template_version: TEMPLATE_VERSION,
        }
    }

    pub fn ensure_system(&self, requested: System) -> Result<(), ParserError> {
        if self.system != requested {
            return Err(ParserError::SystemMismatch { model: self.system, requested });
        }
        Ok(())
    }

    fn mask(&self) -> u64 {
        (1u64 << self.hash_bits) - 1
    }

    fn score(&self, features: &[u32], t_idx: usize, n_t: usize) -> f64 {
        features.iter().map(|&f| self.weights[f as usize * n_t + t_idx]).sum()
    }

    /// Greedy parse: argmax-scored legal transition at every step, ties
    /// broken by the fixed legality order, then finalize.
    pub fn parse(&self, sentence: &Sentence) -> Result<Vec<NodeId>, ParserError> {
        let n_t = self.system.transitions().len();
        let mut c = self.system.initial(sentence.len())?;
        let mut features = Vec::with_capacity(TEMPLATE_COUNT);
        while !self.system.is_terminal(&c) {
            extract_features(&c, sentence, self.mask(), &mut features);
            let legal = self.system.legal(&c)?;
            let mut best = legal[0];
            let mut best_score = f64::NEG_INFINITY;
            for &t in &legal {
                let idx = transition_index(self.system, t);
                let score = self.score(&features, idx, n_t);
                if score > best_score {
                    best = t;
                    best_score = score;
                }
            }
            self.system.apply_in_place(&mut c, best)?;
        }
        Ok(self.system.finalize(&c)?)
    }
}

fn transition_index(system: System, t: Transition) -> usize {
    system
        .transitions()
        .iter()
        .position(|&x| x == t)
        .expect("transition belongs to the system")
}

/// Teacher-forced averaged-perceptron training over oracle sequences.
/// Deterministic for a fixed (data order, seed, epochs).
pub fn train(
    system: System,
    sentences: &[Sentence],
    cfg: &TrainConfig,
) -> Result<Model, ParserError> {
    if sentences.is_empty() {
        return Err(ParserError::EmptyTrainingSet);
    }
    let n_t = system.transitions().len();
    let buckets = 1usize << cfg.hash_bits;
    let mask = (buckets as u64) - 1;
    let mut weights = vec![0.0f64; buckets * n_t];
    // Lazy averaging: accumulated[w] trails weights[w] by the last step it
    // was touched, so idle cells cost nothing per step.
    let mut accumulated = vec![0.0f64; buckets * n_t];
    let mut last_touched = vec![0u64; buckets * n_t];
    let mut step = 0u64;

    let golds: Vec<GoldTree> = sentences
        .iter()
        .map(|s| GoldTree::new(&s.gold_heads()).map_err(ParserError::from))
        .collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut features = Vec::with_capacity(TEMPLATE_COUNT);
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, cfg.seed, system, epoch);
        for &si in &order {
            let sentence = &sentences[si];
            let gold = &golds[si];
            let mut c = system.initial(sentence.len())?;
            while !system.is_terminal(&c) {
                let target = oracle_transition(system, &c, gold)?;
                step += 1;
                extract_features(&c, sentence, mask, &mut features);
                let legal = system.legal(&c)?;
                let mut best = legal[0];
                let mut best_score = f64::NEG_INFINITY;
                for &t in &legal {
                    let idx = transition_index(system, t);
                    let score: f64 =
                        features.iter().map(|&f| weights[f as usize * n_t + idx]).sum();
                    if score > best_score {
                        best = t;
                        best_score = score;
                    }
                }
                if best != target {
                    let up = transition_index(system, target);
                    let down = transition_index(system, best);
                    for &f in &features {
                        for (idx, delta) in [(up, 1.0), (down, -1.0)] {
                            let w = f as usize * n_t + idx;
                            accumulated[w] += weights[w] * (step - last_touched[w]) as f64;
                            last_touched[w] = step;
                            weights[w] += delta;
                        }
                    }
                }
                // Teacher forcing: follow the oracle regardless of the
                // prediction so every epoch sees the same configurations.
                system.apply_in_place(&mut c, target)?;
            }
        }
    }

    // Close out the averages.
    for w in 0..weights.len() {
        accumulated[w] += weights[w] * (step - last_touched[w]) as f64;
    }
    let averaged: Vec<f64> =
        accumulated.iter().map(|&a| if step == 0 { 0.0 } else { a / step as f64 }).collect();

    Ok(Model {
        system,
        hash_bits: cfg.hash_bits,
        weights: averaged,
        seed: cfg.seed,
        epochs: cfg.epochs,
        template_version: TEMPLATE_VERSION,
    })
}

/// Seeded Fisher-Yates; the stream is keyed by (seed, system, epoch) so
/// epochs and systems draw independent permutations.
fn shuffle(order: &mut [usize], seed: u64, system: System, epoch: u32) {
    let mut h = Fnv1a::new();
    h.write_u64(seed);
    h.write(b"train-shuffle");
    h.write(system.name().as_bytes());
    h.write_u32(epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
    for i in (1..order.len()).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
}

// === Model files ===

/// Little-endian binary container: magic, format version, system name,
/// hyperparameters, then only the nonzero weight cells.
pub fn save_model(model: &Model, path: &Path) -> Result<(), ParserError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    let name = model.system.name().as_bytes();
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name)?;
    w.write_all(&model.hash_bits.to_le_bytes())?;
    w.write_all(&model.seed.to_le_bytes())?;
    w.write_all(&model.epochs.to_le_bytes())?;
    w.write_all(&model.template_version.to_le_bytes())?;
    let nonzero: Vec<(u64, f64)> = model
        .weights
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i as u64, v))
        .collect();
    w.write_all(&(nonzero.len() as u64).to_le_bytes())?;
    for (i, v) in nonzero {
        w.write_all(&i.to_le_bytes())?;
        w.write_all(&v.to_bits().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ParserError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(ParserError::BadModel("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ParserError::BadModel(format!(
            "format version {version}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    let name_len = read_u32(&mut r)? as usize;
    if name_len > 64 {
        return Err(ParserError::BadModel(format!("system name length {name_len}")));
    }
    let mut name = vec![0u8; name_len];
    read_exact(&mut r, &mut name)?;
    let name = String::from_utf8(name).map_err(|_| ParserError::BadModel("system name".into()))?;
    let system: System =
        name.parse().map_err(|e: String| ParserError::BadModel(e))?;
    let hash_bits = read_u32(&mut r)?;
    if hash_bits > 28 {
        return Err(ParserError::BadModel(format!("hash_bits {hash_bits} out of range")));
    }
    let seed = read_u64(&mut r)?;
    let epochs = read_u32(&mut r)?;
    let template_version = read_u32(&mut r)?;
    if template_version != TEMPLATE_VERSION {
        return Err(ParserError::BadModel(format!(
            "template version {template_version}, expected {TEMPLATE_VERSION}"
        )));
    }
    let n_t = system.transitions().len();
    let len = (1usize << hash_bits) * n_t;
    let mut weights = vec![0.0f64; len];
    let nonzero = read_u64(&mut r)? as usize;
    if nonzero > len {
        return Err(ParserError::BadModel(format!("{nonzero} nonzero cells exceed table {len}")));
    }
    for _ in 0..nonzero {
        let i = read_u64(&mut r)? as usize;
        let v = f64::from_bits(read_u64(&mut r)?);
        if i >= len {
            return Err(ParserError::BadModel(format!("weight index {i} out of range")));
        }
        weights[i] = v;
    }
    Ok(Model { system, hash_bits, weights, seed, epochs, template_version })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), ParserError> {
    r.read_exact(buf).map_err(|_| ParserError::BadModel("truncated file".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32, ParserError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ParserError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// The always-attach-to-previous-token baseline: head of token i is i - 1
/// (token 1 attaches to the root). The weakest credible parser; trained
/// models must beat it.
pub fn previous_token_baseline(n: usize) -> Vec<NodeId> {
    (0..n).collect()
}

/// Seed derivation for per-(treebank, system) training, so sweeps don't
/// share streams.
pub fn train_seed(seed: u64, treebank: &str, system: System) -> u64 {
    let mut h = Fnv1a::new();
    h.write_u64(seed);
    h.write(treebank.as_bytes());
    h.write(&[0x1f]);
    h.write(system.name().as_bytes());
    h.finish() ^ fnv1a64(b"train-seed")
}
