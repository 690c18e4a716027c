//! Manifest-driven batch pipeline.
//!
//! Each command reads a [`RunManifest`] (TOML file plus command-line
//! overrides; overrides win) and writes schema-stable CSV/JSON files into
//! the manifest's output directory:
//!
//! * [`cmd_stats`] — per-bin test-set size statistics (`stats.csv`);
//! * [`cmd_train_eval`] — training/evaluation sweep over every
//!   (treebank, system) pair (`uas.csv`, `models/`, `parsed/`,
//!   `errors.json`);
//! * [`cmd_displacement_report`] — per-displacement precision/recall with
//!   pairwise Welch tests (`pr.csv`, `pr_pvalues.csv`);
//! * [`cmd_inherent`] — Monte Carlo inherent-distribution sampling and EMD
//!   estimates (`emd.csv`, `skipped.csv`, `inherent/*.json`);
//! * [`cmd_correlate`] — per-bin correlation of δUAS against mean EMD
//!   (`correlations_<group>.csv`, `scatter_<group>.csv`,
//!   `report_<group>.csv`);
//! * [`cmd_compare`] — pairwise ΔUAS vs ΔEMD for two named systems;
//! * [`enumerate_json`] — the exact inherent-distribution oracle.
//!
//! Later commands consume only the declared outputs of earlier ones, so a
//! run can be resumed or partially re-executed freely. Sweeps parallelize
//! over (treebank, system) tasks with rayon — set `DISPAR_THREADS` to cap
//! the pool — and every task derives its randomness from the manifest seed
//! and its own identity, so outputs are byte-identical across re-runs and
//! thread counts. Files are written atomically (temp + rename).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    delta_uas, pearson, pr_by_displacement, uas_counts, welch_t_from_summary, MetricsError,
    PrCell,
};
use crate::parser::{save_model, train, train_seed, ParserError, TrainConfig};
use crate::sampler::{enumerate_inherent, estimate_emd, BinOutcome, SamplerConfig, SamplerError};
use crate::transitions::System;
use crate::treebank::{
    bin_sentences, bin_stats, filter_by_size, observed_distribution, with_heads, write_conllu,
    BinRange, BinSpec, BinStat, ConlluError, DisplacementDistribution, ParseOptions, Sentence,
    Treebank,
};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("malformed input: {0}")]
    BadInput(String),
    #[error("no treebanks left after size filtering")]
    NoTreebanks,
    #[error(transparent)]
    Conllu(#[from] ConlluError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Parser(#[from] ParserError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

// === Manifest ===

#[derive(Debug, Clone)]
pub struct TreebankEntry {
    pub name: String,
    pub path: PathBuf,
}

/// A validated run configuration: the manifest file merged with
/// command-line overrides.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub treebanks: Vec<TreebankEntry>,
    pub systems: Vec<System>,
    pub bins: BinSpec,
    pub sampler: SamplerConfig,
    pub training: TrainConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub min_train: usize,
    pub min_test: usize,
    /// Displacement report covers |d| ≤ clip.
    pub clip_displacement: i32,
    /// Correlate with whole-treebank UAS instead of bin-restricted UAS.
    pub whole_treebank_uas: bool,
}

/// Command-line overrides; `None` fields defer to the manifest file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub bins: Option<String>,
    pub include_root_arcs: Option<bool>,
    pub reps: Option<u32>,
    pub out_dir: Option<PathBuf>,
    pub min_train: Option<usize>,
    pub min_test: Option<usize>,
    pub clip_displacement: Option<i32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    systems: Option<Vec<String>>,
    /// Directory scanned for `<name>/{train,test}.conllu` subdirectories.
    treebank_root: Option<PathBuf>,
    #[serde(default)]
    treebanks: Vec<RawTreebank>,
    /// Bin ranges as "lo-hi" strings, e.g. ["1-3", "4-6"].
    bins: Option<Vec<String>>,
    sampler: Option<RawSampler>,
    training: Option<RawTraining>,
    filter: Option<RawFilter>,
    report: Option<RawReport>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTreebank {
    path: PathBuf,
    name: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    repetitions: Option<u32>,
    include_root_arcs: Option<bool>,
    min_bin_sentences: Option<usize>,
    all_arcs: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    epochs: Option<u32>,
    hash_bits: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    min_train: Option<usize>,
    min_test: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    clip_displacement: Option<i32>,
    whole_treebank_uas: Option<bool>,
}

/// Parses a comma-separated bin list like `1-3,4-6,7-99`.
pub fn parse_bin_spec(s: &str) -> Result<BinSpec, PipelineError> {
    let ranges: Vec<BinRange> = s
        .split(',')
        .map(|part| {
            BinRange::from_str(part.trim())
                .map_err(|e| PipelineError::InvalidArgument(format!("bin {part:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    BinSpec::new(ranges).map_err(PipelineError::InvalidArgument)
}

/// Reads and validates a manifest file, then applies overrides.
pub fn load_manifest(path: &Path, overrides: &Overrides) -> Result<RunManifest, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
    let raw: RawManifest = toml::from_str(&text)
        .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
    resolve_manifest(raw, overrides)
}

fn resolve_manifest(raw: RawManifest, ov: &Overrides) -> Result<RunManifest, PipelineError> {
    let systems = match &raw.systems {
        None => System::ALL.to_vec(),
        Some(names) => {
            let systems: Vec<System> = names
                .iter()
                .map(|n| System::from_str(n).map_err(PipelineError::Manifest))
                .collect::<Result<_, _>>()?;
            for (i, s) in systems.iter().enumerate() {
                if systems[..i].contains(s) {
                    return Err(PipelineError::Manifest(format!("duplicate system {s}")));
                }
            }
            systems
        }
    };
    if systems.is_empty() {
        return Err(PipelineError::Manifest("systems list is empty".into()));
    }

    let mut treebanks: Vec<TreebankEntry> = raw
        .treebanks
        .iter()
        .map(|t| {
            let name = t.name.clone().unwrap_or_else(|| {
                t.path
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| t.path.display().to_string())
            });
            TreebankEntry { name, path: t.path.clone() }
        })
        .collect();
    if let Some(root) = &raw.treebank_root {
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)
            .map_err(|e| PipelineError::Manifest(format!("treebank_root {}: {e}", root.display())))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join("train.conllu").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let name = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string());
            if !treebanks.iter().any(|t| t.name == name) {
                treebanks.push(TreebankEntry { name, path: dir });
            }
        }
    }
    treebanks.sort_by(|a, b| a.name.cmp(&b.name));
    if treebanks.is_empty() {
        return Err(PipelineError::Manifest("manifest lists no treebanks".into()));
    }
    for t in &treebanks {
        for split in ["train.conllu", "test.conllu"] {
            if !t.path.join(split).is_file() {
                return Err(PipelineError::Manifest(format!(
                    "treebank {}: {} has no {split}",
                    t.name,
                    t.path.display()
                )));
            }
        }
    }

    let bins = match (&ov.bins, &raw.bins) {
        (Some(s), _) => parse_bin_spec(s)?,
        (None, Some(list)) => parse_bin_spec(&list.join(","))?,
        (None, None) => BinSpec::default(),
    };

    let seed = ov.seed.or(raw.seed).unwrap_or(0);
    let raw_sampler = raw.sampler.unwrap_or_default();
    let sampler = SamplerConfig {
        repetitions: ov
            .reps
            .or(raw_sampler.repetitions)
            .unwrap_or(SamplerConfig::default().repetitions),
        seed,
        include_root_arcs: ov
            .include_root_arcs
            .or(raw_sampler.include_root_arcs)
            .unwrap_or(false),
        min_bin_sentences: raw_sampler
            .min_bin_sentences
            .unwrap_or(SamplerConfig::default().min_bin_sentences),
        all_arcs: raw_sampler.all_arcs.unwrap_or(false),
    };
    let raw_training = raw.training.unwrap_or_default();
    let training = TrainConfig {
        epochs: raw_training.epochs.unwrap_or(TrainConfig::default().epochs),
        seed,
        hash_bits: raw_training.hash_bits.unwrap_or(TrainConfig::default().hash_bits),
    };
    let raw_filter = raw.filter.unwrap_or_default();
    let raw_report = raw.report.unwrap_or_default();
    let out_dir = ov
        .out_dir
        .clone()
        .or(raw.out_dir)
        .ok_or_else(|| PipelineError::Manifest("no output directory (out_dir or --out-dir)".into()))?;

    Ok(RunManifest {
        treebanks,
        systems,
        bins,
        sampler,
        training,
        seed,
        out_dir,
        min_train: ov.min_train.or(raw_filter.min_train).unwrap_or(1000),
        min_test: ov.min_test.or(raw_filter.min_test).unwrap_or(1000),
        clip_displacement: ov
            .clip_displacement
            .or(raw_report.clip_displacement)
            .unwrap_or(10),
        whole_treebank_uas: raw_report.whole_treebank_uas.unwrap_or(false),
    })
}

/// Loads and size-filters the manifest's treebanks; dropped ones are
/// reported on stderr.
pub fn load_treebanks(m: &RunManifest) -> Result<Vec<Treebank>, PipelineError> {
    let opts = ParseOptions::default();
    let loaded: Vec<Treebank> = m
        .treebanks
        .iter()
        .map(|t| {
            Treebank::from_paths(
                t.name.clone(),
                t.path.join("train.conllu"),
                t.path.join("test.conllu"),
                &opts,
            )
        })
        .collect::<Result<_, _>>()?;
    let (kept, dropped) = filter_by_size(loaded, m.min_train, m.min_test);
    for d in &dropped {
        eprintln!(
            "skipping treebank {} ({} train / {} test trees, need {}/{})",
            d.name, d.train_size, d.test_size, m.min_train, m.min_test
        );
    }
    if kept.is_empty() {
        return Err(PipelineError::NoTreebanks);
    }
    Ok(kept)
}

// === Output plumbing ===

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// CSV cells are plain identifiers and numbers by construction; quoting is
/// deliberately unsupported, so a comma in a treebank name is refused early.
fn csv_cell(s: &str) -> &str {
    assert!(
        !s.contains(',') && !s.contains('\n') && !s.contains('"'),
        "CSV cell {s:?} needs quoting, which the fixed schemas do not use"
    );
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Label of a bin column cell; the unbinned row uses `all`.
pub const ALL_BIN: &str = "all";

fn bin_label(r: BinRange) -> String {
    r.to_string()
}

// === stats ===

/// Per-bin mean/quartile test-set sizes; writes `stats.csv`
/// (`bin,mean,q1,q3`, one row per configured bin, zeros for empty bins).
pub fn cmd_stats(m: &RunManifest) -> Result<Vec<BinStat>, PipelineError> {
    let treebanks = load_treebanks(m)?;
    let stats = bin_stats(&treebanks, &m.bins);
    let mut out = String::from("bin,mean,q1,q3\n");
    for s in &stats {
        out.push_str(&format!("{},{},{},{}\n", s.bin, s.mean, s.q1, s.q3));
    }
    write_atomic(&m.out_dir.join("stats.csv"), out.as_bytes())?;
    Ok(stats)
}

// === train-eval ===

/// One failed (treebank, system) task; the sweep records it and moves on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFailure {
    pub treebank: String,
    pub system: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug)]
pub struct TrainEvalOutcome {
    pub rows: Vec<UasRow>,
    pub failures: Vec<SweepFailure>,
}

/// One `uas.csv` row. `bin` is a range label or [`ALL_BIN`].
#[derive(Debug, Clone, PartialEq)]
pub struct UasRow {
    pub treebank: String,
    pub system: System,
    pub bin: String,
    pub sentences: usize,
    pub correct: usize,
    pub total: usize,
    pub uas: f64,
    pub delta_uas: f64,
}

struct EvalCounts {
    treebank: String,
    system: System,
    /// (bin label, sentences, correct, total), bins first, then the
    /// unbinned entry.
    per_bin: Vec<(String, usize, usize, usize)>,
}

fn model_path(out_dir: &Path, treebank: &str, system: System) -> PathBuf {
    out_dir.join("models").join(format!("{treebank}.{system}.model"))
}

fn parsed_path(out_dir: &Path, treebank: &str, system: System) -> PathBuf {
    out_dir.join("parsed").join(format!("{treebank}.{system}.conllu"))
}

fn run_train_eval_task(
    m: &RunManifest,
    tb: &Treebank,
    system: System,
) -> Result<EvalCounts, SweepFailure> {
    let fail = |stage: &str, message: String| SweepFailure {
        treebank: tb.name.clone(),
        system: system.name().to_string(),
        stage: stage.to_string(),
        message,
    };
    let cfg = TrainConfig {
        epochs: m.training.epochs,
        seed: train_seed(m.seed, &tb.name, system),
        hash_bits: m.training.hash_bits,
    };
    let model = train(system, &tb.train, &cfg).map_err(|e| fail("train", e.to_string()))?;
    let final_path = model_path(&m.out_dir, &tb.name, system);
    let mut tmp = final_path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    save_model(&model, &tmp).map_err(|e| fail("save-model", e.to_string()))?;
    fs::rename(&tmp, &final_path).map_err(|e| fail("save-model", e.to_string()))?;

    let mut parsed: Vec<Sentence> = Vec::with_capacity(tb.test.len());
    for s in &tb.test {
        let heads = model.parse(s).map_err(|e| fail("parse", format!("{}: {e}", s.id)))?;
        parsed.push(with_heads(s, &heads));
    }
    let mut bytes = Vec::new();
    write_conllu(&mut bytes, &parsed).map_err(|e| fail("write-parsed", e.to_string()))?;
    write_atomic(&parsed_path(&m.out_dir, &tb.name, system), &bytes)
        .map_err(|e| fail("write-parsed", e.to_string()))?;

    // Count correct heads per bin; every sentence feeds the unbinned entry.
    let nbins = m.bins.ranges().len();
    let mut counts = vec![(0usize, 0usize, 0usize); nbins + 1];
    for (s, p) in tb.test.iter().zip(&parsed) {
        let (correct, total) =
            uas_counts(&p.gold_heads(), &s.gold_heads()).expect("aligned sentences");
        let slot = m.bins.ranges().iter().position(|r| r.contains(s.len()));
        // Sentences outside every bin still count toward the unbinned entry.
        for i in slot.into_iter().chain([nbins]) {
            counts[i].0 += 1;
            counts[i].1 += correct;
            counts[i].2 += total;
        }
    }
    let mut per_bin = Vec::new();
    for (i, &(sentences, correct, total)) in counts.iter().enumerate() {
        let label = if i == nbins {
            ALL_BIN.to_string()
        } else {
            bin_label(m.bins.ranges()[i])
        };
        if total > 0 {
            per_bin.push((label, sentences, correct, total));
        }
    }
    Ok(EvalCounts { treebank: tb.name.clone(), system, per_bin })
}

/// Trains every manifest system on every treebank, parses the test splits,
/// and writes `uas.csv`, the model files, the parsed CoNLL-U files, and
/// `errors.json`. Per-task failures do not abort the sweep.
pub fn cmd_train_eval(m: &RunManifest) -> Result<TrainEvalOutcome, PipelineError> {
    let treebanks = load_treebanks(m)?;
    fs::create_dir_all(m.out_dir.join("models"))?;
    fs::create_dir_all(m.out_dir.join("parsed"))?;
    let tasks: Vec<(&Treebank, System)> = treebanks
        .iter()
        .flat_map(|tb| m.systems.iter().map(move |&s| (tb, s)))
        .collect();
    let results: Vec<Result<EvalCounts, SweepFailure>> = tasks
        .par_iter()
        .map(|&(tb, system)| run_train_eval_task(m, tb, system))
        .collect();

    let mut counts = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => counts.push(c),
            Err(f) => failures.push(f),
        }
    }

    // δUAS per (treebank, bin) across the systems that succeeded.
    let mut scores: BTreeMap<(String, String), BTreeMap<System, f64>> = BTreeMap::new();
    for c in &counts {
        for (label, _, correct, total) in &c.per_bin {
            scores
                .entry((c.treebank.clone(), label.clone()))
                .or_default()
                .insert(c.system, *correct as f64 / *total as f64);
        }
    }
    let deltas: BTreeMap<(String, String), BTreeMap<System, f64>> = scores
        .iter()
        .map(|(k, v)| (k.clone(), delta_uas(v).expect("nonempty scores")))
        .collect();

    let mut rows = Vec::new();
    for c in &counts {
        for (label, sentences, correct, total) in &c.per_bin {
            let key = (c.treebank.clone(), label.clone());
            rows.push(UasRow {
                treebank: c.treebank.clone(),
                system: c.system,
                bin: label.clone(),
                sentences: *sentences,
                correct: *correct,
                total: *total,
                uas: *correct as f64 / *total as f64,
                delta_uas: deltas[&key][&c.system],
            });
        }
    }
    sort_rows(&mut rows, m);
    write_uas_csv(&m.out_dir.join("uas.csv"), &rows)?;
    failures.sort_by(|a, b| (&a.treebank, &a.system).cmp(&(&b.treebank, &b.system)));
    write_atomic(
        &m.out_dir.join("errors.json"),
        serde_json::to_string_pretty(&failures)?.as_bytes(),
    )?;
    Ok(TrainEvalOutcome { rows, failures })
}

fn system_rank(s: System) -> usize {
    System::ALL.iter().position(|&x| x == s).expect("known system")
}

fn bin_rank(m: &RunManifest, label: &str) -> usize {
    m.bins
        .ranges()
        .iter()
        .position(|r| bin_label(*r) == label)
        .unwrap_or(usize::MAX)
}

fn sort_rows(rows: &mut [UasRow], m: &RunManifest) {
    rows.sort_by(|a, b| {
        (&a.treebank, system_rank(a.system), bin_rank(m, &a.bin))
            .cmp(&(&b.treebank, system_rank(b.system), bin_rank(m, &b.bin)))
    });
}

const UAS_HEADER: &str = "treebank,system,bin,sentences,correct,total,uas,delta_uas";

fn write_uas_csv(path: &Path, rows: &[UasRow]) -> Result<(), PipelineError> {
    let mut out = String::from(UAS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_cell(&r.treebank),
            r.system,
            r.bin,
            r.sentences,
            r.correct,
            r.total,
            r.uas,
            r.delta_uas
        ));
    }
    write_atomic(path, out.as_bytes())?;
    Ok(())
}

fn read_uas_csv(path: &Path) -> Result<Vec<UasRow>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|_| {
        PipelineError::MissingInput(format!("{} (run train-eval first)", path.display()))
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != UAS_HEADER {
        return Err(PipelineError::BadInput(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let ctx = || format!("{} line {}", path.display(), i + 2);
        if f.len() != 8 {
            return Err(PipelineError::BadInput(ctx()));
        }
        let bad = || PipelineError::BadInput(ctx());
        rows.push(UasRow {
            treebank: f[0].to_string(),
            system: System::from_str(f[1]).map_err(|_| bad())?,
            bin: f[2].to_string(),
            sentences: f[3].parse().map_err(|_| bad())?,
            correct: f[4].parse().map_err(|_| bad())?,
            total: f[5].parse().map_err(|_| bad())?,
            uas: f[6].parse().map_err(|_| bad())?,
            delta_uas: f[7].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

// === displacement report ===

/// Per-(system, displacement) precision/recall aggregated over treebanks,
/// plus pairwise Welch p-values; reads the parsed files from the train-eval
/// sweep. Writes `pr.csv` and `pr_pvalues.csv`.
pub fn cmd_displacement_report(m: &RunManifest) -> Result<(), PipelineError> {
    let treebanks = load_treebanks(m)?;
    let opts = ParseOptions::default();
    // tables[system][treebank index] = displacement -> cell
    let mut tables: BTreeMap<System, Vec<BTreeMap<i32, PrCell>>> = BTreeMap::new();
    for tb in &treebanks {
        for &system in &m.systems {
            let path = parsed_path(&m.out_dir, &tb.name, system);
            if !path.is_file() {
                return Err(PipelineError::MissingInput(format!(
                    "{} (run train-eval first)",
                    path.display()
                )));
            }
            let parsed = crate::treebank::parse_conllu(fs::File::open(&path)?, &opts)?.sentences;
            if parsed.len() != tb.test.len() {
                return Err(PipelineError::BadInput(format!(
                    "{}: {} sentences, test split has {}",
                    path.display(),
                    parsed.len(),
                    tb.test.len()
                )));
            }
            let pairs: Vec<(Vec<usize>, Vec<usize>)> = parsed
                .iter()
                .zip(&tb.test)
                .map(|(p, g)| (p.gold_heads(), g.gold_heads()))
                .collect();
            let slices: Vec<(&[usize], &[usize])> =
                pairs.iter().map(|(p, g)| (p.as_slice(), g.as_slice())).collect();
            let table = pr_by_displacement(&slices)?;
            tables.entry(system).or_default().push(table);
        }
    }

    // Aggregate defined cells across treebanks; undefined cells are
    // excluded rather than counted as zero.
    struct Agg {
        n: usize,
        mean: f64,
        sd: f64,
    }
    let aggregate = |values: &[f64]| -> Option<Agg> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0))
                .sqrt()
        };
        Some(Agg { n, mean, sd })
    };

    let clip = m.clip_displacement.abs().max(1);
    let displacements: Vec<i32> = (-clip..=clip).filter(|&d| d != 0).collect();
    // samples[(system, d)] = (precision values, recall values) per treebank
    let mut samples: BTreeMap<(System, i32), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (&system, per_tb) in &tables {
        for table in per_tb {
            for &d in &displacements {
                let cell = table.get(&d).copied().unwrap_or_default();
                let entry = samples.entry((system, d)).or_default();
                if let Some(p) = cell.precision() {
                    entry.0.push(p);
                }
                if let Some(r) = cell.recall() {
                    entry.1.push(r);
                }
            }
        }
    }

    let mut pr = String::from(
        "system,displacement,n_precision,mean_precision,sd_precision,n_recall,mean_recall,sd_recall\n",
    );
    for &system in &m.systems {
        for &d in &displacements {
            let (ps, rs) = samples.get(&(system, d)).cloned().unwrap_or_default();
            let (pa, ra) = (aggregate(&ps), aggregate(&rs));
            if pa.is_none() && ra.is_none() {
                continue;
            }
            let cols = |a: &Option<Agg>| match a {
                Some(a) => (a.n, fmt_opt(Some(a.mean)), fmt_opt(Some(a.sd))),
                None => (0, String::new(), String::new()),
            };
            let (np, mp, sp) = cols(&pa);
            let (nr, mr, sr) = cols(&ra);
            pr.push_str(&format!("{system},{d},{np},{mp},{sp},{nr},{mr},{sr}\n"));
        }
    }
    write_atomic(&m.out_dir.join("pr.csv"), pr.as_bytes())?;

    let mut pv = String::from("system_a,system_b,displacement,p_precision,p_recall\n");
    for (i, &a) in m.systems.iter().enumerate() {
        for &b in &m.systems[i + 1..] {
            for &d in &displacements {
                let welch = |xs: &[f64], ys: &[f64]| -> Option<f64> {
                    if xs.len() < 2 || ys.len() < 2 {
                        return None;
                    }
                    let ax = aggregate(xs).expect("nonempty");
                    let ay = aggregate(ys).expect("nonempty");
                    welch_t_from_summary(ax.mean, ax.sd, ax.n, ay.mean, ay.sd, ay.n)
                        .ok()
                        .map(|w| w.p)
                };
                let sa = samples.get(&(a, d)).cloned().unwrap_or_default();
                let sb = samples.get(&(b, d)).cloned().unwrap_or_default();
                let pp = welch(&sa.0, &sb.0);
                let pr_ = welch(&sa.1, &sb.1);
                if pp.is_none() && pr_.is_none() {
                    continue;
                }
                pv.push_str(&format!(
                    "{a},{b},{d},{},{}\n",
                    fmt_opt(pp),
                    fmt_opt(pr_)
                ));
            }
        }
    }
    write_atomic(&m.out_dir.join("pr_pvalues.csv"), pv.as_bytes())?;
    Ok(())
}

// === inherent ===

/// One `emd.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmdRow {
    pub treebank: String,
    pub system: System,
    pub bin: String,
    pub mean_emd: f64,
    pub std_error: f64,
    pub reps: u32,
}

#[derive(Debug, Clone)]
pub struct SkippedBin {
    pub treebank: String,
    pub system: System,
    pub bin: String,
    pub sentences: usize,
    pub min_required: usize,
    pub reason: &'static str,
}

#[derive(Debug)]
pub struct InherentOutcome {
    pub rows: Vec<EmdRow>,
    pub skipped: Vec<SkippedBin>,
}

#[derive(Serialize)]
struct InherentDump<'a> {
    treebank: &'a str,
    system: &'a str,
    bin: String,
    /// Gold displacement distribution of the bin's test sentences.
    observed: &'a BTreeMap<i32, f64>,
    /// One sampled inherent distribution per repetition.
    repetitions: Vec<&'a BTreeMap<i32, f64>>,
}

/// Samples each system's inherent displacement distribution over every
/// (treebank, bin) and estimates the EMD against the observed distribution.
/// Writes `emd.csv`, `skipped.csv`, and one JSON dump per estimated cell
/// under `inherent/`. With `self_test` the observed distribution is fed
/// back as every repetition's sample, so all estimates are exactly zero.
pub fn cmd_inherent(m: &RunManifest, self_test: bool) -> Result<InherentOutcome, PipelineError> {
    let treebanks = load_treebanks(m)?;
    let tasks: Vec<(&Treebank, System)> = treebanks
        .iter()
        .flat_map(|tb| m.systems.iter().map(move |&s| (tb, s)))
        .collect();

    type TaskOut = (Vec<EmdRow>, Vec<SkippedBin>);
    let run_task = |tb: &Treebank, system: System| -> Result<TaskOut, PipelineError> {
        let mut rows = Vec::new();
        let mut skipped = Vec::new();
        let binned = bin_sentences(&tb.test, &m.bins);
        for (range, members) in &binned.bins {
            let label = bin_label(*range);
            let skip = |sentences, reason| SkippedBin {
                treebank: tb.name.clone(),
                system,
                bin: label.clone(),
                sentences,
                min_required: m.sampler.min_bin_sentences,
                reason,
            };
            if members.len() < m.sampler.min_bin_sentences {
                skipped.push(skip(members.len(), "too_few_sentences"));
                continue;
            }
            let observed = match observed_distribution(members, m.sampler.include_root_arcs) {
                Ok(d) => d,
                Err(_) => {
                    skipped.push(skip(members.len(), "no_observed_arcs"));
                    continue;
                }
            };
            let lengths: Vec<usize> = members.iter().map(|s| s.len()).collect();
            let (estimate, samples): (_, Vec<DisplacementDistribution>) = if self_test {
                let reps = m.sampler.repetitions;
                (
                    crate::sampler::EmdEstimate {
                        mean_emd: 0.0,
                        std_error: 0.0,
                        repetitions: reps,
                        low_confidence: reps < 2,
                    },
                    vec![observed.clone(); reps as usize],
                )
            } else {
                match estimate_emd(system, &observed, &lengths, &m.sampler, &tb.name, &label)? {
                    BinOutcome::Estimated { estimate, samples } => (estimate, samples),
                    BinOutcome::Skipped { sentences, min_required } => {
                        debug_assert!(sentences < min_required);
                        skipped.push(skip(sentences, "too_few_sentences"));
                        continue;
                    }
                }
            };
            let dump = InherentDump {
                treebank: &tb.name,
                system: system.name(),
                bin: label.clone(),
                observed: observed.mass(),
                repetitions: samples.iter().map(|s| s.mass()).collect(),
            };
            let path = m
                .out_dir
                .join("inherent")
                .join(format!("{}.{}.{}.json", tb.name, system, label));
            write_atomic(&path, serde_json::to_string_pretty(&dump)?.as_bytes())?;
            rows.push(EmdRow {
                treebank: tb.name.clone(),
                system,
                bin: label,
                mean_emd: estimate.mean_emd,
                std_error: estimate.std_error,
                reps: estimate.repetitions,
            });
        }
        Ok((rows, skipped))
    };

    let results: Vec<Result<TaskOut, PipelineError>> = tasks
        .par_iter()
        .map(|&(tb, system)| run_task(tb, system))
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        let (mut rs, mut ss) = r?;
        rows.append(&mut rs);
        skipped.append(&mut ss);
    }
    let key = |t: &String, s: System, b: &str, m: &RunManifest| {
        (t.clone(), system_rank(s), bin_rank(m, b))
    };
    rows.sort_by_key(|a| key(&a.treebank, a.system, &a.bin, m));
    skipped.sort_by_key(|a| key(&a.treebank, a.system, &a.bin, m));

    write_emd_csv(&m.out_dir.join("emd.csv"), &rows)?;
    let mut sk = String::from("treebank,system,bin,sentences,min_required,reason\n");
    for s in &skipped {
        eprintln!(
            "skipped {} {} bin {}: {} ({} sentences, need {})",
            s.treebank, s.system, s.bin, s.reason, s.sentences, s.min_required
        );
        sk.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_cell(&s.treebank),
            s.system,
            s.bin,
            s.sentences,
            s.min_required,
            s.reason
        ));
    }
    write_atomic(&m.out_dir.join("skipped.csv"), sk.as_bytes())?;
    Ok(InherentOutcome { rows, skipped })
}

const EMD_HEADER: &str = "treebank,system,bin,mean_emd,std_error,reps";

fn write_emd_csv(path: &Path, rows: &[EmdRow]) -> Result<(), PipelineError> {
    let mut out = String::from(EMD_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_cell(&r.treebank),
            r.system,
            r.bin,
            r.mean_emd,
            r.std_error,
            r.reps
        ));
    }
    write_atomic(path, out.as_bytes())?;
    Ok(())
}

fn read_emd_csv(path: &Path) -> Result<Vec<EmdRow>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|_| {
        PipelineError::MissingInput(format!("{} (run inherent first)", path.display()))
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != EMD_HEADER {
        return Err(PipelineError::BadInput(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let ctx = || format!("{} line {}", path.display(), i + 2);
        if f.len() != 6 {
            return Err(PipelineError::BadInput(ctx()));
        }
        let bad = || PipelineError::BadInput(ctx());
        rows.push(EmdRow {
            treebank: f[0].to_string(),
            system: System::from_str(f[1]).map_err(|_| bad())?,
            bin: f[2].to_string(),
            mean_emd: f[3].parse().map_err(|_| bad())?,
            std_error: f[4].parse().map_err(|_| bad())?,
            reps: f[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

// === correlate ===

/// Which systems' (δUAS, mean EMD) points are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Projective,
    NonProjective,
    All,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Projective => "projective",
            Group::NonProjective => "nonprojective",
            Group::All => "all",
        }
    }

    fn members(self, manifest_systems: &[System]) -> Vec<System> {
        manifest_systems
            .iter()
            .copied()
            .filter(|s| match self {
                Group::Projective => s.is_projective(),
                Group::NonProjective => !s.is_projective(),
                Group::All => true,
            })
            .collect()
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "projective" => Ok(Group::Projective),
            "nonprojective" | "non-projective" => Ok(Group::NonProjective),
            "all" => Ok(Group::All),
            other => Err(format!(
                "unknown group {other:?}; expected projective, nonprojective, or all"
            )),
        }
    }
}

/// The joined per-(treebank, system, bin) record a correlation run is built
/// from; δUAS is relative to the group mean on the same treebank and bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinReport {
    pub treebank: String,
    pub system: System,
    pub bin: String,
    pub uas: f64,
    pub delta_uas: f64,
    pub mean_emd: f64,
    pub emd_std_error: f64,
    pub sentence_count: usize,
}

/// One row of `correlations_<group>.csv`; `r`, `r_squared`, and `p` are
/// empty when the bin was skipped or degenerate (see `note`).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrRow {
    pub bin: String,
    pub n_points: usize,
    pub r: Option<f64>,
    pub r_squared: Option<f64>,
    pub p: Option<f64>,
    pub note: String,
}

#[derive(Debug)]
pub struct CorrelateOutcome {
    pub reports: Vec<BinReport>,
    pub per_bin: Vec<CorrRow>,
}

fn correlate_points(rows: &[BinReport], bin: Option<&str>) -> CorrRow {
    let points: Vec<&BinReport> = rows
        .iter()
        .filter(|r| bin.is_none_or(|b| r.bin == b))
        .collect();
    let label = bin.unwrap_or(ALL_BIN).to_string();
    let n = points.len();
    if n < 3 {
        return CorrRow {
            bin: label,
            n_points: n,
            r: None,
            r_squared: None,
            p: None,
            note: "skipped: fewer than 3 points".into(),
        };
    }
    let xs: Vec<f64> = points.iter().map(|p| p.delta_uas).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_emd).collect();
    match pearson(&xs, &ys) {
        Ok(p) => CorrRow {
            bin: label,
            n_points: n,
            r: Some(p.r),
            r_squared: Some(p.r_squared),
            p: Some(p.p),
            note: String::new(),
        },
        Err(MetricsError::ConstantSeries(which)) => CorrRow {
            bin: label,
            n_points: n,
            r: None,
            r_squared: None,
            p: None,
            note: format!(
                "undefined: constant {}",
                if which == "x" { "delta_uas" } else { "mean_emd" }
            ),
        },
        Err(e) => CorrRow {
            bin: label,
            n_points: n,
            r: None,
            r_squared: None,
            p: None,
            note: format!("undefined: {e}"),
        },
    }
}

/// Pools (δUAS, mean EMD) points over treebanks and the group's systems for
/// each bin and for all bins together; δUAS is recomputed within the group.
/// Reads `uas.csv` and `emd.csv`; writes `report_<group>.csv`,
/// `scatter_<group>.csv`, and `correlations_<group>.csv`.
pub fn cmd_correlate(m: &RunManifest, group: Group) -> Result<CorrelateOutcome, PipelineError> {
    let members = group.members(&m.systems);
    if members.is_empty() {
        return Err(PipelineError::InvalidArgument(format!(
            "group {group} matches none of the manifest's systems"
        )));
    }
    let uas_rows = read_uas_csv(&m.out_dir.join("uas.csv"))?;
    let emd_rows = read_emd_csv(&m.out_dir.join("emd.csv"))?;

    // UAS lookup for the group's systems: per (treebank, bin) and unbinned.
    let mut uas: BTreeMap<(String, String, System), (f64, usize)> = BTreeMap::new();
    for r in &uas_rows {
        if members.contains(&r.system) {
            uas.insert(
                (r.treebank.clone(), r.bin.clone(), r.system),
                (r.uas, r.sentences),
            );
        }
    }
    // Group-relative δUAS per (treebank, bin-or-all).
    let mut deltas: BTreeMap<(String, String), BTreeMap<System, f64>> = BTreeMap::new();
    {
        let mut scores: BTreeMap<(String, String), BTreeMap<System, f64>> = BTreeMap::new();
        for ((tb, bin, sys), &(u, _)) in &uas {
            scores.entry((tb.clone(), bin.clone())).or_default().insert(*sys, u);
        }
        for (k, v) in scores {
            deltas.insert(k, delta_uas(&v).expect("nonempty scores"));
        }
    }

    let mut reports = Vec::new();
    for e in &emd_rows {
        if !members.contains(&e.system) {
            continue;
        }
        let delta_bin = if m.whole_treebank_uas { ALL_BIN } else { e.bin.as_str() };
        let Some(&(u, sentences)) = uas.get(&(e.treebank.clone(), e.bin.clone(), e.system)) else {
            return Err(PipelineError::BadInput(format!(
                "emd.csv row ({}, {}, {}) has no matching uas.csv row",
                e.treebank, e.system, e.bin
            )));
        };
        let delta = deltas
            .get(&(e.treebank.clone(), delta_bin.to_string()))
            .and_then(|d| d.get(&e.system))
            .copied()
            .ok_or_else(|| {
                PipelineError::BadInput(format!(
                    "no UAS rows to derive delta for ({}, {}, {delta_bin})",
                    e.treebank, e.system
                ))
            })?;
        reports.push(BinReport {
            treebank: e.treebank.clone(),
            system: e.system,
            bin: e.bin.clone(),
            uas: u,
            delta_uas: delta,
            mean_emd: e.mean_emd,
            emd_std_error: e.std_error,
            sentence_count: sentences,
        });
    }

    let mut per_bin: Vec<CorrRow> = m
        .bins
        .ranges()
        .iter()
        .map(|r| correlate_points(&reports, Some(&bin_label(*r))))
        .collect();
    per_bin.push(correlate_points(&reports, None));
    for row in &per_bin {
        if !row.note.is_empty() {
            eprintln!("correlate {group} bin {}: {}", row.bin, row.note);
        }
    }

    let mut rep = String::from(
        "treebank,system,bin,uas,delta_uas,mean_emd,emd_std_error,sentence_count\n",
    );
    for r in &reports {
        rep.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_cell(&r.treebank),
            r.system,
            r.bin,
            r.uas,
            r.delta_uas,
            r.mean_emd,
            r.emd_std_error,
            r.sentence_count
        ));
    }
    write_atomic(&m.out_dir.join(format!("report_{group}.csv")), rep.as_bytes())?;

    let mut sc = String::from("group,bin,treebank,system,delta_uas,mean_emd\n");
    for r in &reports {
        sc.push_str(&format!(
            "{group},{},{},{},{},{}\n",
            r.bin,
            csv_cell(&r.treebank),
            r.system,
            r.delta_uas,
            r.mean_emd
        ));
    }
    write_atomic(&m.out_dir.join(format!("scatter_{group}.csv")), sc.as_bytes())?;

    let mut co = String::from("group,bin,n_points,r,r_squared,p,note\n");
    for c in &per_bin {
        co.push_str(&format!(
            "{group},{},{},{},{},{},{}\n",
            c.bin,
            c.n_points,
            fmt_opt(c.r),
            fmt_opt(c.r_squared),
            fmt_opt(c.p),
            c.note
        ));
    }
    write_atomic(
        &m.out_dir.join(format!("correlations_{group}.csv")),
        co.as_bytes(),
    )?;

    Ok(CorrelateOutcome { reports, per_bin })
}

// === compare ===

#[derive(Debug, Clone, PartialEq)]
pub struct ComparePoint {
    pub bin: String,
    pub treebank: String,
    /// UAS of the first system minus UAS of the second.
    pub uas_diff: f64,
    /// Mean EMD of the first system minus the second's.
    pub emd_diff: f64,
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub points: Vec<ComparePoint>,
    pub per_bin: Vec<CorrRow>,
}

/// Correlates per-treebank (ΔUAS, ΔEMD) between two named systems, per bin
/// and pooled. Writes `compare_<a>_vs_<b>.csv` and
/// `compare_scatter_<a>_vs_<b>.csv`.
pub fn cmd_compare(m: &RunManifest, a: System, b: System) -> Result<CompareOutcome, PipelineError> {
    if a == b {
        return Err(PipelineError::InvalidArgument(format!(
            "compare needs two distinct systems, got {a} twice"
        )));
    }
    let uas_rows = read_uas_csv(&m.out_dir.join("uas.csv"))?;
    let emd_rows = read_emd_csv(&m.out_dir.join("emd.csv"))?;
    let mut uas: BTreeMap<(String, String, System), f64> = BTreeMap::new();
    for r in &uas_rows {
        uas.insert((r.treebank.clone(), r.bin.clone(), r.system), r.uas);
    }
    let mut emd: BTreeMap<(String, String, System), f64> = BTreeMap::new();
    for r in &emd_rows {
        emd.insert((r.treebank.clone(), r.bin.clone(), r.system), r.mean_emd);
    }

    let mut points = Vec::new();
    let treebanks: Vec<String> = {
        let mut names: Vec<String> = uas_rows.iter().map(|r| r.treebank.clone()).collect();
        names.sort();
        names.dedup();
        names
    };
    for range in m.bins.ranges() {
        let bin = bin_label(*range);
        for tb in &treebanks {
            let k = |s: System| (tb.clone(), bin.clone(), s);
            let (Some(&ua), Some(&ub)) = (uas.get(&k(a)), uas.get(&k(b))) else { continue };
            let (Some(&ea), Some(&eb)) = (emd.get(&k(a)), emd.get(&k(b))) else { continue };
            points.push(ComparePoint {
                bin: bin.clone(),
                treebank: tb.clone(),
                uas_diff: ua - ub,
                emd_diff: ea - eb,
            });
        }
    }

    let corr_for = |bin: Option<&str>| -> CorrRow {
        let sel: Vec<&ComparePoint> = points
            .iter()
            .filter(|p| bin.is_none_or(|b| p.bin == b))
            .collect();
        let label = bin.unwrap_or(ALL_BIN).to_string();
        if sel.len() < 3 {
            return CorrRow {
                bin: label,
                n_points: sel.len(),
                r: None,
                r_squared: None,
                p: None,
                note: "skipped: fewer than 3 points".into(),
            };
        }
        let xs: Vec<f64> = sel.iter().map(|p| p.uas_diff).collect();
        let ys: Vec<f64> = sel.iter().map(|p| p.emd_diff).collect();
        match pearson(&xs, &ys) {
            Ok(p) => CorrRow {
                bin: label,
                n_points: sel.len(),
                r: Some(p.r),
                r_squared: Some(p.r_squared),
                p: Some(p.p),
                note: String::new(),
            },
            Err(e) => CorrRow {
                bin: label,
                n_points: sel.len(),
                r: None,
                r_squared: None,
                p: None,
                note: format!("undefined: {e}"),
            },
        }
    };
    let mut per_bin: Vec<CorrRow> = m
        .bins
        .ranges()
        .iter()
        .map(|r| corr_for(Some(&bin_label(*r))))
        .collect();
    per_bin.push(corr_for(None));

    let stem = format!("{a}_vs_{b}");
    let mut sc = String::from("bin,treebank,uas_diff,emd_diff\n");
    for p in &points {
        sc.push_str(&format!(
            "{},{},{},{}\n",
            p.bin,
            csv_cell(&p.treebank),
            p.uas_diff,
            p.emd_diff
        ));
    }
    write_atomic(
        &m.out_dir.join(format!("compare_scatter_{stem}.csv")),
        sc.as_bytes(),
    )?;
    let mut co = String::from("bin,n_points,r,r_squared,p,note\n");
    for c in &per_bin {
        co.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.bin,
            c.n_points,
            fmt_opt(c.r),
            fmt_opt(c.r_squared),
            fmt_opt(c.p),
            c.note
        ));
    }
    write_atomic(&m.out_dir.join(format!("compare_{stem}.csv")), co.as_bytes())?;
    Ok(CompareOutcome { points, per_bin })
}

// === enumerate ===

/// Exact inherent distribution as pretty JSON, for the `enumerate`
/// subcommand.
pub fn enumerate_json(
    system: System,
    n: usize,
    include_root_arcs: bool,
) -> Result<String, PipelineError> {
    let exact = enumerate_inherent(system, n, include_root_arcs)?;
    #[derive(Serialize)]
    struct Out<'a> {
        system: &'a str,
        n: usize,
        include_root_arcs: bool,
        distribution: &'a BTreeMap<i32, f64>,
        tree_count: usize,
    }
    Ok(serde_json::to_string_pretty(&Out {
        system: system.name(),
        n,
        include_root_arcs,
        distribution: exact.distribution.mass(),
        tree_count: exact.trees.len(),
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use std::io::Write as _;

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.toml");
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn testdata() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata")
    }

    #[test]
    fn manifest_defaults_and_overrides() {
        let tmp = tempfile::tempdir().unwrap();
        let body = format!(
            "out_dir = \"{}\"\nseed = 9\ntreebank_root = \"{}\"\n",
            tmp.path().join("out").display(),
            testdata().display()
        );
        let path = write_manifest(tmp.path(), &body);
        let m = load_manifest(&path, &Overrides::default()).unwrap();
        assert_eq!(m.seed, 9);
        assert_eq!(m.sampler.seed, 9);
        assert_eq!(m.training.seed, 9);
        assert_eq!(m.systems, System::ALL.to_vec());
        assert_eq!(m.treebanks.len(), 3);
        assert_eq!(m.bins.ranges().len(), 12);
        assert_eq!(m.sampler.repetitions, 10);
        assert_eq!(m.min_train, 1000);
        assert_eq!(m.clip_displacement, 10);

        let ov = Overrides {
            seed: Some(4),
            bins: Some("1-9,10-99".into()),
            reps: Some(3),
            min_train: Some(10),
            clip_displacement: Some(2),
            ..Overrides::default()
        };
        let m = load_manifest(&path, &ov).unwrap();
        assert_eq!(m.seed, 4);
        assert_eq!(m.sampler.repetitions, 3);
        assert_eq!(m.bins.ranges().len(), 2);
        assert_eq!(m.min_train, 10);
        assert_eq!(m.clip_displacement, 2);
    }

    #[test]
    fn manifest_rejects_bad_input() {
        let tmp = tempfile::tempdir().unwrap();
        let nonexistent = tmp.path().join("nope");
        let cases = [
            "out_dir = \"o\"\n".to_string(),
            format!("out_dir = \"o\"\n[[treebanks]]\npath = \"{}\"\n", nonexistent.display()),
            format!(
                "out_dir = \"o\"\nsystems = [\"arc_standard\", \"arc_standard\"]\ntreebank_root = \"{}\"\n",
                testdata().display()
            ),
            format!(
                "out_dir = \"o\"\nsystems = []\ntreebank_root = \"{}\"\n",
                testdata().display()
            ),
            format!(
                "out_dir = \"o\"\nmystery = 1\ntreebank_root = \"{}\"\n",
                testdata().display()
            ),
        ];
        for body in &cases {
            let path = write_manifest(tmp.path(), body);
            let err = load_manifest(&path, &Overrides::default()).unwrap_err();
            assert!(matches!(err, PipelineError::Manifest(_)), "{body}: {err}");
        }
        // Missing out_dir is fine when the flag provides one.
        let body = format!("treebank_root = \"{}\"\n", testdata().display());
        let path = write_manifest(tmp.path(), &body);
        let ov = Overrides { out_dir: Some(tmp.path().join("o")), ..Overrides::default() };
        assert!(load_manifest(&path, &ov).is_ok());
    }

    #[test]
    fn bin_spec_parsing() {
        assert!(parse_bin_spec("1-3,4-6").is_ok());
        assert!(parse_bin_spec("1-3,3-6").is_err());
        assert!(parse_bin_spec("").is_err());
        assert!(parse_bin_spec("6-4").is_err());
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("deep").join("file.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        let entries: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn group_membership() {
        let all = System::ALL.to_vec();
        assert_eq!(
            Group::Projective.members(&all),
            vec![System::ArcStandard, System::ArcEager, System::CovingtonProj]
        );
        assert_eq!(
            Group::NonProjective.members(&all),
            vec![System::CovingtonNp, System::SwapEager]
        );
        assert_eq!(Group::All.members(&all).len(), 5);
        assert_eq!(Group::Projective.members(&[System::SwapEager]), vec![]);
        assert_eq!("nonprojective".parse::<Group>().unwrap(), Group::NonProjective);
        assert!("banana".parse::<Group>().is_err());
    }

    #[test]
    fn uas_and_emd_csv_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let rows = vec![
            UasRow {
                treebank: "tb".into(),
                system: System::ArcEager,
                bin: "1-3".into(),
                sentences: 7,
                correct: 13,
                total: 20,
                uas: 0.65,
                delta_uas: -0.012345678901234567,
            },
            UasRow {
                treebank: "tb".into(),
                system: System::ArcEager,
                bin: ALL_BIN.into(),
                sentences: 9,
                correct: 25,
                total: 40,
                uas: 0.625,
                delta_uas: 0.012345678901234567,
            },
        ];
        let path = tmp.path().join("uas.csv");
        write_uas_csv(&path, &rows).unwrap();
        assert_eq!(read_uas_csv(&path).unwrap(), rows);

        let erows = vec![EmdRow {
            treebank: "tb".into(),
            system: System::SwapEager,
            bin: "4-6".into(),
            mean_emd: 1.5000000000000002,
            std_error: 0.25,
            reps: 10,
        }];
        let epath = tmp.path().join("emd.csv");
        write_emd_csv(&epath, &erows).unwrap();
        assert_eq!(read_emd_csv(&epath).unwrap(), erows);

        assert!(matches!(
            read_uas_csv(&tmp.path().join("absent.csv")),
            Err(PipelineError::MissingInput(_))
        ));
        fs::write(&epath, "wrong,header\n").unwrap();
        assert!(matches!(read_emd_csv(&epath), Err(PipelineError::BadInput(_))));
    }

    /// A tiny manifest over generated micro-corpora, for fast end-to-end
    /// unit coverage; the bundled full-size corpora are exercised by the
    /// integration suites.
    fn micro_manifest(dir: &Path, systems: &[System]) -> RunManifest {
        let data = dir.join("data");
        for (i, name) in ["alpha", "beta", "gamma"].iter().enumerate() {
            let profile = synth::Profile {
                name: format!("micro-{name}"),
                head_bias: [0.8, 0.2, 0.5][i],
                nonproj_rate: if i == 2 { 0.2 } else { 0.0 },
                seed: 31 + i as u64,
                train_trees: 60,
                test_trees: 40,
            };
            synth::write_to_dir(&synth::generate(&profile), &data).unwrap();
        }
        RunManifest {
            treebanks: ["micro-alpha", "micro-beta", "micro-gamma"]
                .iter()
                .map(|n| TreebankEntry { name: n.to_string(), path: data.join(n) })
                .collect(),
            systems: systems.to_vec(),
            bins: parse_bin_spec("1-6,7-12,13-99").unwrap(),
            sampler: SamplerConfig { repetitions: 3, seed: 5, ..SamplerConfig::default() },
            training: TrainConfig { epochs: 2, seed: 5, hash_bits: 14 },
            seed: 5,
            out_dir: dir.join("out"),
            min_train: 0,
            min_test: 0,
            clip_displacement: 4,
            whole_treebank_uas: false,
        }
    }

    #[test]
    fn stats_rows_cover_every_bin() {
        let tmp = tempfile::tempdir().unwrap();
        let m = micro_manifest(tmp.path(), &System::ALL);
        let stats = cmd_stats(&m).unwrap();
        assert_eq!(stats.len(), 3);
        let text = fs::read_to_string(m.out_dir.join("stats.csv")).unwrap();
        assert!(text.starts_with("bin,mean,q1,q3\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn train_eval_writes_complete_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let systems = [System::ArcStandard, System::ArcEager];
        let m = micro_manifest(tmp.path(), &systems);
        let out = cmd_train_eval(&m).unwrap();
        assert!(out.failures.is_empty(), "{:#?}", out.failures);
        for tb in ["micro-alpha", "micro-beta", "micro-gamma"] {
            for &sys in &systems {
                assert!(model_path(&m.out_dir, tb, sys).is_file());
                assert!(parsed_path(&m.out_dir, tb, sys).is_file());
            }
            // δUAS sums to zero per (treebank, bin).
            for bin in ["1-6", "7-12", "13-99", ALL_BIN] {
                let sum: f64 = out
                    .rows
                    .iter()
                    .filter(|r| r.treebank == tb && r.bin == bin)
                    .map(|r| r.delta_uas)
                    .sum();
                assert!(sum.abs() < 1e-12, "{tb} {bin}: {sum}");
            }
        }
        assert_eq!(
            fs::read_to_string(m.out_dir.join("errors.json")).unwrap().trim(),
            "[]"
        );
        // The parsed output is valid CoNLL-U aligned with the test split.
        let parsed = crate::treebank::parse_conllu(
            fs::File::open(parsed_path(&m.out_dir, "micro-alpha", System::ArcEager)).unwrap(),
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(parsed.sentences.len(), 40);
        assert!(parsed.rejected.is_empty());
    }

    #[test]
    fn inherent_self_test_gives_zero_emd() {
        let tmp = tempfile::tempdir().unwrap();
        let mut m = micro_manifest(tmp.path(), &[System::ArcStandard]);
        m.sampler.min_bin_sentences = 1;
        let out = cmd_inherent(&m, true).unwrap();
        assert!(!out.rows.is_empty());
        for r in &out.rows {
            assert_eq!(r.mean_emd, 0.0);
            assert_eq!(r.std_error, 0.0);
            assert_eq!(r.reps, 3);
        }
        let dump: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(
                m.out_dir.join("inherent").join("micro-alpha.arc_standard.1-6.json"),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(dump["repetitions"].as_array().unwrap().len(), 3);
        assert_eq!(dump["observed"], dump["repetitions"][0]);
    }

    #[test]
    fn inherent_respects_min_bin_sentences() {
        let tmp = tempfile::tempdir().unwrap();
        let mut m = micro_manifest(tmp.path(), &[System::ArcEager]);
        m.sampler.min_bin_sentences = 10_000;
        let out = cmd_inherent(&m, false).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.skipped.len(), 3 * 3);
        assert!(out.skipped.iter().all(|s| s.reason == "too_few_sentences"));
        let text = fs::read_to_string(m.out_dir.join("skipped.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 9);
    }

    #[test]
    fn compare_rejects_self_and_negates_when_swapped() {
        let tmp = tempfile::tempdir().unwrap();
        let systems = [System::ArcStandard, System::ArcEager];
        let m = micro_manifest(tmp.path(), &systems);
        assert!(matches!(
            cmd_compare(&m, System::ArcEager, System::ArcEager),
            Err(PipelineError::InvalidArgument(_))
        ));
        cmd_train_eval(&m).unwrap();
        cmd_inherent(&m, false).unwrap();
        let ab = cmd_compare(&m, System::ArcStandard, System::ArcEager).unwrap();
        let ba = cmd_compare(&m, System::ArcEager, System::ArcStandard).unwrap();
        assert_eq!(ab.points.len(), ba.points.len());
        assert_eq!(ab.points.len(), 9, "one point per treebank per bin");
        for (p, q) in ab.points.iter().zip(&ba.points) {
            assert_eq!(p.treebank, q.treebank);
            assert_eq!(p.uas_diff, -q.uas_diff);
            assert_eq!(p.emd_diff, -q.emd_diff);
        }
    }

    #[test]
    fn correlate_joins_and_diagnoses() {
        let tmp = tempfile::tempdir().unwrap();
        let m = micro_manifest(tmp.path(), &System::ALL);
        cmd_train_eval(&m).unwrap();
        cmd_inherent(&m, false).unwrap();
        let out = cmd_correlate(&m, Group::Projective).unwrap();
        // 3 treebanks × 3 projective systems × 3 bins.
        assert_eq!(out.reports.len(), 27);
        // δUAS recomputed within the group sums to zero per treebank-bin.
        for tb in ["micro-alpha", "micro-beta", "micro-gamma"] {
            for bin in ["1-6", "7-12", "13-99"] {
                let sum: f64 = out
                    .reports
                    .iter()
                    .filter(|r| r.treebank == tb && r.bin == bin)
                    .map(|r| r.delta_uas)
                    .sum();
                assert!(sum.abs() < 1e-12);
            }
        }
        assert_eq!(out.per_bin.len(), 4);
        let overall = &out.per_bin[3];
        assert_eq!(overall.bin, ALL_BIN);
        assert_eq!(overall.n_points, 27);
        assert!(overall.r.is_some());
        for name in ["report_projective.csv", "scatter_projective.csv", "correlations_projective.csv"]
        {
            assert!(m.out_dir.join(name).is_file(), "{name}");
        }
        // A group absent from the manifest's systems is rejected.
        let mut only_np = m.clone();
        only_np.systems = vec![System::SwapEager];
        assert!(matches!(
            cmd_correlate(&only_np, Group::Projective),
            Err(PipelineError::InvalidArgument(_))
        ));
    }

    #[test]
    fn missing_inputs_are_named() {
        let tmp = tempfile::tempdir().unwrap();
        let m = micro_manifest(tmp.path(), &[System::ArcStandard, System::ArcEager]);
        match cmd_correlate(&m, Group::All) {
            Err(PipelineError::MissingInput(msg)) => assert!(msg.contains("uas.csv")),
            other => panic!("expected MissingInput, got {other:?}"),
        }
        match cmd_displacement_report(&m) {
            Err(PipelineError::MissingInput(msg)) => assert!(msg.contains("parsed")),
            other => panic!("expected MissingInput, got {other:?}"),
        }
    }

    #[test]
    fn enumerate_json_is_well_formed() {
        let text = enumerate_json(System::ArcStandard, 2, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["system"], "arc_standard");
        assert_eq!(v["tree_count"], 3);
        assert_eq!(v["distribution"]["1"], 0.5);
        assert_eq!(v["distribution"]["-1"], 0.5);
    }
}
