//! Treebank ingestion: CoNLL-U parsing, sentence validation, length binning,
//! and observed displacement distributions.
//!
//! Only the columns relevant to unlabeled parsing are retained (ID, FORM,
//! UPOS, HEAD). Multiword-token ranges (`3-4`) and empty nodes (`3.1`) are
//! skipped, so token counts reflect syntactic words only.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position of a token in the sentence; 0 is the artificial root.
pub type NodeId = usize;

/// Validation failures for head assignments that are structurally not a tree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("token {dependent} has head {head} outside 0..={n}")]
    HeadOutOfRange { dependent: NodeId, head: NodeId, n: usize },
    #[error("token {0} is its own head")]
    SelfLoop(NodeId),
    #[error("head chain starting at token {0} never reaches the root")]
    Cyclic(NodeId),
    #[error("sentence has no tokens")]
    Empty,
}

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("i/o error reading treebank: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {what}")]
    Malformed { line: usize, what: String },
    #[error("sentence {id:?} (ending line {line}): {source}")]
    InvalidTree { id: String, line: usize, source: TreeError },
    #[error("treebank directory {0} is missing {1}")]
    MissingSplit(PathBuf, &'static str),
}

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("distribution has no mass")]
    Empty,
    #[error("displacement 0 is not a valid key")]
    ZeroDisplacement,
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("negative probability {1} at displacement {0}")]
    Negative(i32, f64),
}

// === Tokens and sentences ===

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position.
    pub index: NodeId,
    pub form: String,
    pub upos: String,
    /// Head position in 0..=n; 0 is the artificial root.
    pub gold_head: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    tokens: Vec<Token>,
}

impl Sentence {
    /// Validates contiguous indices, head range, self-loops, and that every
    /// head chain terminates at the root.
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Result<Self, TreeError> {
        if tokens.is_empty() {
            return Err(TreeError::Empty);
        }
        let n = tokens.len();
        for (i, tok) in tokens.iter().enumerate() {
            debug_assert_eq!(tok.index, i + 1, "token indices must be contiguous from 1");
            if tok.gold_head > n {
                return Err(TreeError::HeadOutOfRange { dependent: tok.index, head: tok.gold_head, n });
            }
            if tok.gold_head == tok.index {
                return Err(TreeError::SelfLoop(tok.index));
            }
        }
        let heads: Vec<NodeId> = tokens.iter().map(|t| t.gold_head).collect();
        validate_tree(&heads)?;
        Ok(Sentence { id: id.into(), tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Gold heads, entry `i` holding the head of token `i + 1`.
    pub fn gold_heads(&self) -> Vec<NodeId> {
        self.tokens.iter().map(|t| t.gold_head).collect()
    }

    /// FORM of a node; the artificial root renders as `<root>`.
    pub fn form(&self, node: NodeId) -> &str {
        if node == 0 {
            "<root>"
        } else {
            &self.tokens[node - 1].form
        }
    }

    /// UPOS of a node; the artificial root renders as `ROOT`.
    pub fn upos(&self, node: NodeId) -> &str {
        if node == 0 {
            "ROOT"
        } else {
            &self.tokens[node - 1].upos
        }
    }
}

/// Checks that a complete head vector (entry `i` = head of token `i + 1`)
/// forms a single-headed acyclic tree rooted at 0.
pub fn validate_tree(heads: &[NodeId]) -> Result<(), TreeError> {
    let n = heads.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    for (i, &h) in heads.iter().enumerate() {
        let dep = i + 1;
        if h > n {
            return Err(TreeError::HeadOutOfRange { dependent: dep, head: h, n });
        }
        if h == dep {
            return Err(TreeError::SelfLoop(dep));
        }
    }
    // Follow each head chain; more than n steps means a cycle.
    for start in 1..=n {
        let mut cur = start;
        let mut steps = 0;
        while cur != 0 {
            cur = heads[cur - 1];
            steps += 1;
            if steps > n {
                return Err(TreeError::Cyclic(start));
            }
        }
    }
    Ok(())
}

// === CoNLL-U parsing and serialization ===

/// What to do with a sentence whose head assignments are not a valid tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InvalidTreePolicy {
    /// Drop the sentence and record a diagnostic.
    #[default]
    Skip,
    /// Abort the whole file.
    Fail,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub on_invalid_tree: InvalidTreePolicy,
}

#[derive(Debug, Clone)]
pub struct Rejected {
    pub id: String,
    pub line: usize,
    pub reason: TreeError,
}

#[derive(Debug, Default)]
pub struct ParsedConllu {
    pub sentences: Vec<Sentence>,
    pub rejected: Vec<Rejected>,
}

/// Parses CoNLL-U text. Comment lines contribute only `sent_id`; multiword
/// ranges and empty nodes are skipped. Unparseable ID/HEAD fields are hard
/// errors with a line number; invalid trees follow `ParseOptions`.
pub fn parse_conllu(reader: impl Read, opts: &ParseOptions) -> Result<ParsedConllu, ConlluError> {
    let reader = BufReader::new(reader);
    let mut out = ParsedConllu::default();
    let mut pending: Vec<(NodeId, String, String, NodeId)> = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut line_no = 0;

    let flush = |pending: &mut Vec<(NodeId, String, String, NodeId)>,
                     sent_id: &mut Option<String>,
                     out: &mut ParsedConllu,
                     line: usize|
     -> Result<(), ConlluError> {
        if pending.is_empty() {
            *sent_id = None;
            return Ok(());
        }
        let id = sent_id
            .take()
            .unwrap_or_else(|| format!("s{}", out.sentences.len() + out.rejected.len() + 1));
        let tokens: Vec<Token> = pending
            .drain(..)
            .map(|(index, form, upos, gold_head)| Token { index, form, upos, gold_head })
            .collect();
        match Sentence::new(id.clone(), tokens) {
            Ok(s) => out.sentences.push(s),
            Err(reason) => match opts.on_invalid_tree {
                InvalidTreePolicy::Skip => out.rejected.push(Rejected { id, line, reason }),
                InvalidTreePolicy::Fail => {
                    return Err(ConlluError::InvalidTree { id, line, source: reason })
                }
            },
        }
        Ok(())
    };

    for line in reader.lines() {
        line_no += 1;
        let line = line?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            flush(&mut pending, &mut sent_id, &mut out, line_no)?;
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 {
            return Err(ConlluError::Malformed {
                line: line_no,
                what: format!("expected at least 7 tab-separated columns, found {}", cols.len()),
            });
        }
        // Multiword token range or empty node: not a syntactic word.
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: NodeId = cols[0].parse().map_err(|_| ConlluError::Malformed {
            line: line_no,
            what: format!("unparseable token ID {:?}", cols[0]),
        })?;
        let expected = pending.len() + 1;
        if index != expected {
            return Err(ConlluError::Malformed {
                line: line_no,
                what: format!("token ID {index} out of order, expected {expected}"),
            });
        }
        let head: NodeId = cols[6].parse().map_err(|_| ConlluError::Malformed {
            line: line_no,
            what: format!("unparseable HEAD {:?}", cols[6]),
        })?;
        pending.push((index, cols[1].to_string(), cols[3].to_string(), head));
    }
    flush(&mut pending, &mut sent_id, &mut out, line_no)?;
    Ok(out)
}

/// Writes sentences in CoNLL-U form. Only ID/FORM/UPOS/HEAD carry content;
/// re-parsing the output yields the same sentences.
pub fn write_conllu(mut w: impl Write, sentences: &[Sentence]) -> std::io::Result<()> {
    for s in sentences {
        writeln!(w, "# sent_id = {}", s.id)?;
        for t in s.tokens() {
            writeln!(
                w,
                "{}\t{}\t_\t{}\t_\t_\t{}\t_\t_\t_",
                t.index, t.form, t.upos, t.gold_head
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Replaces every head with the prediction, keeping forms and tags.
pub fn with_heads(sentence: &Sentence, heads: &[NodeId]) -> Sentence {
    assert_eq!(heads.len(), sentence.len());
    let tokens = sentence
        .tokens()
        .iter()
        .zip(heads)
        .map(|(t, &h)| Token { gold_head: h, ..t.clone() })
        .collect();
    Sentence::new(sentence.id.clone(), tokens).expect("predicted heads form a tree")
}

// === Treebanks ===

#[derive(Debug, Clone)]
pub struct Treebank {
    pub name: String,
    pub train: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

impl Treebank {
    /// Loads `<dir>/train.conllu` and `<dir>/test.conllu`; the treebank takes
    /// the directory's name.
    pub fn from_dir(dir: impl AsRef<Path>, opts: &ParseOptions) -> Result<Self, ConlluError> {
        let dir = dir.as_ref();
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let train_path = dir.join("train.conllu");
        let test_path = dir.join("test.conllu");
        if !train_path.is_file() {
            return Err(ConlluError::MissingSplit(dir.to_path_buf(), "train.conllu"));
        }
        if !test_path.is_file() {
            return Err(ConlluError::MissingSplit(dir.to_path_buf(), "test.conllu"));
        }
        Self::from_paths(name, train_path, test_path, opts)
    }

    pub fn from_paths(
        name: impl Into<String>,
        train: impl AsRef<Path>,
        test: impl AsRef<Path>,
        opts: &ParseOptions,
    ) -> Result<Self, ConlluError> {
        let train = parse_conllu(fs::File::open(train)?, opts)?.sentences;
        let test = parse_conllu(fs::File::open(test)?, opts)?.sentences;
        Ok(Treebank { name: name.into(), train, test })
    }
}

/// Scans `root` for subdirectories holding `train.conllu`/`test.conllu`,
/// sorted by name.
pub fn discover_treebanks(root: impl AsRef<Path>, opts: &ParseOptions) -> Result<Vec<Treebank>, ConlluError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root.as_ref())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("train.conllu").is_file() && p.join("test.conllu").is_file())
        .collect();
    dirs.sort();
    dirs.into_iter().map(|d| Treebank::from_dir(d, opts)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredOut {
    pub name: String,
    pub train_size: usize,
    pub test_size: usize,
}

/// Keeps treebanks with at least `min_train` training and `min_test` test
/// trees; undersized ones are returned for diagnostics.
pub fn filter_by_size(
    treebanks: Vec<Treebank>,
    min_train: usize,
    min_test: usize,
) -> (Vec<Treebank>, Vec<FilteredOut>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for tb in treebanks {
        if tb.train.len() >= min_train && tb.test.len() >= min_test {
            kept.push(tb);
        } else {
            dropped.push(FilteredOut {
                name: tb.name,
                train_size: tb.train.len(),
                test_size: tb.test.len(),
            });
        }
    }
    (kept, dropped)
}

// === Sentence-length bins ===

/// Inclusive sentence-length range, e.g. `10-12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinRange {
    pub lo: usize,
    pub hi: usize,
}

impl BinRange {
    pub fn contains(&self, len: usize) -> bool {
        self.lo <= len && len <= self.hi
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

impl fmt::Display for BinRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for BinRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s.split_once('-').ok_or_else(|| format!("bin {s:?} is not of the form lo-hi"))?;
        let lo = lo.trim().parse().map_err(|_| format!("bad bin lower bound in {s:?}"))?;
        let hi = hi.trim().parse().map_err(|_| format!("bad bin upper bound in {s:?}"))?;
        if lo == 0 || hi < lo {
            return Err(format!("bin {s:?} must satisfy 1 <= lo <= hi"));
        }
        Ok(BinRange { lo, hi })
    }
}

/// Ordered, non-overlapping sentence-length bins. Lengths outside every bin
/// are dropped (and counted) by `bin_sentences`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinSpec {
    ranges: Vec<BinRange>,
}

impl Default for BinSpec {
    /// The twelve report bins: 1-3 through 25-27 in steps of three, then
    /// 28-33, 34-39, and 40-99.
    fn default() -> Self {
        let ranges = [
            (1, 3), (4, 6), (7, 9), (10, 12), (13, 15), (16, 18),
            (19, 21), (22, 24), (25, 27), (28, 33), (34, 39), (40, 99),
        ]
        .iter()
        .map(|&(lo, hi)| BinRange { lo, hi })
        .collect();
        BinSpec { ranges }
    }
}

impl BinSpec {
    pub fn new(ranges: Vec<BinRange>) -> Result<Self, String> {
        if ranges.is_empty() {
            return Err("bin spec needs at least one range".into());
        }
        for w in ranges.windows(2) {
            if w[1].lo <= w[0].hi {
                return Err(format!("bins {} and {} overlap or are out of order", w[0], w[1]));
            }
        }
        Ok(BinSpec { ranges })
    }

    pub fn ranges(&self) -> &[BinRange] {
        &self.ranges
    }

    pub fn find(&self, len: usize) -> Option<BinRange> {
        self.ranges.iter().copied().find(|r| r.contains(len))
    }
}

impl FromStr for BinSpec {
    type Err = String;

    /// Parses a comma-separated list such as `1-3,4-6,7-9`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ranges = s
            .split(',')
            .map(|part| part.trim().parse())
            .collect::<Result<Vec<BinRange>, _>>()?;
        BinSpec::new(ranges)
    }
}

#[derive(Debug)]
pub struct BinnedSentences<'a> {
    /// One entry per bin in spec order; empty bins are present.
    pub bins: Vec<(BinRange, Vec<&'a Sentence>)>,
    /// Sentences whose length fell outside every bin.
    pub dropped: usize,
}

pub fn bin_sentences<'a>(sentences: &'a [Sentence], spec: &BinSpec) -> BinnedSentences<'a> {
    let mut bins: Vec<(BinRange, Vec<&Sentence>)> =
        spec.ranges().iter().map(|&r| (r, Vec::new())).collect();
    let mut dropped = 0;
    for s in sentences {
        match spec.ranges().iter().position(|r| r.contains(s.len())) {
            Some(i) => bins[i].1.push(s),
            None => dropped += 1,
        }
    }
    BinnedSentences { bins, dropped }
}

/// Per-bin test-set size summary across treebanks.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStat {
    pub bin: BinRange,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Mean and quartiles of per-treebank test-tree counts for each bin. A
/// treebank with no sentences in a bin contributes a count of 0; with a
/// single treebank the quartiles collapse onto its count.
pub fn bin_stats(treebanks: &[Treebank], spec: &BinSpec) -> Vec<BinStat> {
    let counts_per_tb: Vec<Vec<usize>> = treebanks
        .iter()
        .map(|tb| {
            bin_sentences(&tb.test, spec)
                .bins
                .iter()
                .map(|(_, ss)| ss.len())
                .collect()
        })
        .collect();
    spec.ranges()
        .iter()
        .enumerate()
        .map(|(bi, &bin)| {
            let mut counts: Vec<f64> = counts_per_tb.iter().map(|c| c[bi] as f64).collect();
            counts.sort_by(|a, b| a.total_cmp(b));
            let mean = if counts.is_empty() { 0.0 } else { counts.iter().sum::<f64>() / counts.len() as f64 };
            BinStat {
                bin,
                mean,
                q1: quantile_sorted(&counts, 0.25),
                q3: quantile_sorted(&counts, 0.75),
            }
        })
        .collect()
}

/// Quantile with linear interpolation between order statistics (the numpy
/// default). `xs` must be sorted ascending and non-empty for a meaningful
/// result; an empty slice yields 0.
fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
        }
    }
}

// === Displacement distributions ===

/// Signed displacement of an arc: head position minus dependent position.
/// Negative values are rightward arcs (head precedes dependent), positive
/// values leftward arcs. Zero is impossible.
pub fn arc_displacement(head: NodeId, dependent: NodeId) -> i32 {
    debug_assert_ne!(head, dependent);
    head as i32 - dependent as i32
}

/// A probability distribution over arc displacements. Construction enforces
/// that no key is 0, all masses are positive, and the total is 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementDistribution {
    mass: BTreeMap<i32, f64>,
    /// Number of arcs (or samples) the estimate is based on.
    support_count: u64,
}

impl DisplacementDistribution {
    pub fn from_counts(counts: &BTreeMap<i32, u64>) -> Result<Self, DistributionError> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(DistributionError::Empty);
        }
        let mut mass = BTreeMap::new();
        for (&d, &c) in counts {
            if d == 0 {
                return Err(DistributionError::ZeroDisplacement);
            }
            if c > 0 {
                mass.insert(d, c as f64 / total as f64);
            }
        }
        Ok(DisplacementDistribution { mass, support_count: total })
    }

    pub fn from_probs(mass: BTreeMap<i32, f64>, support_count: u64) -> Result<Self, DistributionError> {
        if mass.is_empty() {
            return Err(DistributionError::Empty);
        }
        let mut total = 0.0;
        for (&d, &p) in &mass {
            if d == 0 {
                return Err(DistributionError::ZeroDisplacement);
            }
            if p < 0.0 {
                return Err(DistributionError::Negative(d, p));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(DistributionError::NotNormalized(total));
        }
        let mass = mass.into_iter().filter(|&(_, p)| p > 0.0).collect();
        Ok(DisplacementDistribution { mass, support_count })
    }

    pub fn mass(&self) -> &BTreeMap<i32, f64> {
        &self.mass
    }

    pub fn prob(&self, d: i32) -> f64 {
        self.mass.get(&d).copied().unwrap_or(0.0)
    }

    pub fn support_count(&self) -> u64 {
        self.support_count
    }

    pub fn min_displacement(&self) -> i32 {
        *self.mass.keys().next().expect("distribution is never empty")
    }

    pub fn max_displacement(&self) -> i32 {
        *self.mass.keys().next_back().expect("distribution is never empty")
    }
}

/// Observed displacement distribution of the gold arcs in `sentences`.
/// Arcs headed by the artificial root are excluded unless
/// `include_root_arcs`; if nothing qualifies the distribution is empty and
/// an error is returned.
pub fn observed_distribution(
    sentences: &[&Sentence],
    include_root_arcs: bool,
) -> Result<DisplacementDistribution, DistributionError> {
    let mut counts: BTreeMap<i32, u64> = BTreeMap::new();
    for s in sentences {
        for t in s.tokens() {
            if t.gold_head == 0 && !include_root_arcs {
                continue;
            }
            *counts.entry(arc_displacement(t.gold_head, t.index)).or_insert(0) += 1;
        }
    }
    DisplacementDistribution::from_counts(&counts)
}
