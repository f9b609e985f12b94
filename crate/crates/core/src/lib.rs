//! Exact and sampled Gibbs measures of branching random walks on d-ary
//! trees, with a query-complexity ledger.
//!
//! A branching random walk assigns each vertex v of the infinite rooted
//! d-ary tree a value X_v = Σ Y_w over the ancestors w of v, with i.i.d.
//! increments Y. The inverse-temperature-β Gibbs measure on depth-N leaves
//! weights each leaf by exp(βX_u). This crate provides:
//!
//! - deterministic instances: a 64-bit seed defines every increment of the
//!   infinite tree through a splittable mixing chain, so any algorithm can
//!   query arbitrary vertices reproducibly and pay for exactly what it
//!   touches ([`tree`]);
//! - increment laws with closed-form log-MGF φ(β) = log d + log E e^{βY}
//!   and the critical inverse temperature β_c ([`increments`]);
//! - exact partition functions, Gibbs measures, entropy, and KL divergence
//!   by full enumeration in stable log-domain arithmetic ([`gibbs`]);
//! - the block-recursive sampler, its exact output law, and an exact
//!   closed-form KL divergence from the target measure ([`sampler`]);
//! - the supercritical hardness experiment: exceptional-vertex search,
//!   maximum tail estimates, and rescaled-path statistics ([`hardness`]).
//!
//! All exact computations reduce in fixed order, so results are bit-stable
//! across runs, machines, and thread counts; parallel batch helpers reduce
//! in input order.

pub mod error;
pub mod gibbs;
pub mod hardness;
pub mod increments;
pub mod numeric;
pub mod prf;
pub mod sampler;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use gibbs::{
    derivative_partition, gibbs_distribution, gibbs_restriction, kl_divergence, kl_gibbs_pair,
    log_partition, partition_report, LeafDistribution, LogPartition, PartitionReport,
};
pub use hardness::{
    calibrate_z, exceptional_probability, is_exceptional, max_tail_probe, naive_search,
    rescaled_path, typical_speed, ExceptionalEstimate, ProbeOrder, SearchRecord, TailPoint,
};
pub use increments::{IncrementFamily, IncrementModel};
pub use prf::{derive_seed, unit_from_word, UniformStream};
pub use sampler::{
    algorithm_law, block_plan, kl_algorithm_exact, kl_statistics, kl_summary_from_samples,
    recursive_sample, tau_formula, KlSummary, RunRecord,
};
pub use tree::{BrwInstance, QueryLedger, TraceEntry, VertexPath, DEFAULT_CAP};
