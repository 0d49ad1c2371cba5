//! Decomposable families of itemsets over binary transaction data.
//!
//! A junction forest of itemset cliques defines a tractable probability model
//! of a dataset. This crate mines candidate itemsets, greedily assembles
//! forests by entropy minimisation under AIC/BIC/MDL regularization, extracts
//! sequences of disjoint families, and answers boolean frequency-bound
//! queries through small per-component linear programs — each piece checked
//! against brute-force references in [`oracle`].

pub mod dataset;
pub mod fixtures;
pub mod jtree;
pub mod lp;
pub mod miner;
pub mod model;
mod numeric;
pub mod oracle;
pub mod query;
pub mod search;

pub use dataset::{
    generate_path_dataset, AttributeId, DataError, Itemset, MarginalTable, TransactionDataset,
};
pub use jtree::{
    score, tree_distribution_eval, tree_entropy, tree_log_likelihood, JunctionForest, ModelScore,
    Regularization,
};
pub use miner::{mine_candidates, CandidateFamily, Frequency};
pub use query::{query_bounds, query_multi, singleton_interval, QueryInterval, QueryOutcome};
pub use search::{edge_weight, gate_threshold, search_sequence, search_tree, TreeSearch};
