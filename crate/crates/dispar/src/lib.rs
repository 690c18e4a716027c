//! Dependency displacement analysis for transition-based parsers.
//!
//! Five transition systems (Arc-Standard, Arc-Eager, projective and
//! non-projective Covington, Swap-Eager) share one configuration calculus.
//! Random walks through their legal-transition graphs expose each system's
//! inherent displacement distribution — the law of head-minus-dependent
//! position over arcs the system builds when it parses blindly — and the
//! earth mover's distance from that law to a treebank's observed
//! displacements quantifies how much the system's bias fights the data.
//! Greedy perceptron parsers trained per system turn the question around:
//! does a system's accuracy edge track its distributional fit?
//!
//! Modules:
//! - [`treebank`]: CoNLL-U reading/writing, tree validation, length bins,
//!   displacement distributions.
//! - [`transitions`]: the five systems, legality, application, finalizing,
//!   projectivity, exhaustive tree enumeration.
//! - [`sampler`]: seeded random walks, Monte Carlo inherent-distribution
//!   estimation, and the exact enumerator that validates it.
//! - [`metrics`]: earth mover's distance, attachment scores, Pearson
//!   correlation, Welch's t-test.
//! - [`parser`]: static oracles, hashed features, averaged-perceptron
//!   training, greedy parsing, model files.
//! - [`pipeline`]: manifest-driven batch runs writing schema-stable
//!   CSV/JSON reports.
//! - [`synth`]: deterministic synthetic treebanks with controllable
//!   displacement bias.
//!
//! The `examples/` directory is the guided tour; each example exercises one
//! capability end to end (see the README for the catalog). The `dispar`
//! binary wraps the [`pipeline`] commands for batch use.

pub mod fnv;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod sampler;
pub mod synth;
pub mod transitions;
pub mod treebank;

pub use metrics::{emd, pearson, welch_t_from_summary, MetricsError, Pearson, WelchTest};
pub use parser::{
    extract_features, load_model, oracle_sequence, oracle_transition, save_model, train, GoldTree,
    Model, ParserError, TrainConfig,
};
pub use pipeline::{
    cmd_compare, cmd_correlate, cmd_displacement_report, cmd_inherent, cmd_stats, cmd_train_eval,
    enumerate_json, load_manifest, Group, Overrides, PipelineError, RunManifest,
};
pub use sampler::{
    enumerate_inherent, estimate_emd, random_walk, sample_inherent_bin, BinOutcome, EmdEstimate,
    ExactInherent, SamplerConfig, SamplerError,
};
pub use transitions::{
    all_projective_trees, all_trees, is_projective, Configuration, System, Transition,
    TransitionError,
};
pub use treebank::{
    arc_displacement, observed_distribution, parse_conllu, BinRange, BinSpec, ConlluError,
    DisplacementDistribution, NodeId, Sentence, Token, Treebank,
};
