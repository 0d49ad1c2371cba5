//! Junction forests: forests of itemset cliques whose edges are labelled by
//! the intersection of their endpoints, satisfying the running intersection
//! property. A valid forest defines a decomposable probability model over the
//! attribute universe; entropy, likelihood and penalised scores live here too.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeId, DataError, Itemset, TransactionDataset};
use crate::numeric::ln_gamma;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("duplicate clique {0}")]
    DuplicateClique(String),
    #[error("edge endpoint {0} is not a clique")]
    UnknownClique(String),
    #[error("edge ({0}, {1}) would create a cycle")]
    Cycle(String, String),
    #[error("edge ({0}, {1}) is a self loop")]
    SelfLoop(String, String),
    #[error("running intersection property violated at attribute {0}")]
    RunningIntersection(AttributeId),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Model selection penalty applied on top of the data log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Regularization {
    None,
    Aic,
    Bic,
    Mdl,
}

impl std::fmt::Display for Regularization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regularization::None => "none",
            Regularization::Aic => "aic",
            Regularization::Bic => "bic",
            Regularization::Mdl => "mdl",
        };
        f.write_str(s)
    }
}

/// Penalised score of a forest against a dataset. `total` is the quantity the
/// search minimises: N * entropy + penalty.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelScore {
    pub entropy_nats: f64,
    pub log_likelihood: f64,
    pub penalty: f64,
    pub total: f64,
    pub method: Regularization,
}

/// A forest of distinct itemset cliques. Node identity is the itemset itself;
/// each edge's separator is the exact intersection of its endpoints, so
/// separators are derived rather than stored.
#[derive(Clone, Debug, Default)]
pub struct JunctionForest {
    adj: BTreeMap<Itemset, BTreeSet<Itemset>>,
}

impl JunctionForest {
    /// The edgeless forest of all K singletons.
    pub fn singletons(n_attrs: usize) -> Self {
        let mut adj = BTreeMap::new();
        for a in 0..n_attrs as u32 {
            adj.insert(Itemset::singleton(a), BTreeSet::new());
        }
        JunctionForest { adj }
    }

    /// Builds a forest from explicit parts, validating structure and the
    /// running intersection property.
    pub fn from_parts(
        cliques: Vec<Itemset>,
        edges: Vec<(Itemset, Itemset)>,
    ) -> Result<Self, ForestError> {
        let mut forest = JunctionForest::default();
        for c in cliques {
            if forest.adj.insert(c.clone(), BTreeSet::new()).is_some() {
                return Err(ForestError::DuplicateClique(format!("{c:?}")));
            }
        }
        for (a, b) in edges {
            if a == b {
                return Err(ForestError::SelfLoop(format!("{a:?}"), format!("{b:?}")));
            }
            for end in [&a, &b] {
                if !forest.adj.contains_key(end) {
                    return Err(ForestError::UnknownClique(format!("{end:?}")));
                }
            }
            if forest.path(&a, &b).is_some() {
                return Err(ForestError::Cycle(format!("{a:?}"), format!("{b:?}")));
            }
            forest.add_edge(&a, &b);
        }
        if let Some(attr) = forest.find_rip_violation() {
            return Err(ForestError::RunningIntersection(attr));
        }
        Ok(forest)
    }

    pub fn n_cliques(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.values().map(|n| n.len()).sum::<usize>() / 2
    }

    pub fn contains_clique(&self, x: &Itemset) -> bool {
        self.adj.contains_key(x)
    }

    /// Cliques in canonical order.
    pub fn cliques(&self) -> impl Iterator<Item = &Itemset> {
        self.adj.keys()
    }

    pub fn neighbors(&self, x: &Itemset) -> impl Iterator<Item = &Itemset> {
        self.adj.get(x).into_iter().flatten()
    }

    /// Each edge once (smaller endpoint first) with its separator.
    pub fn edges(&self) -> impl Iterator<Item = (&Itemset, &Itemset, Itemset)> {
        self.adj.iter().flat_map(|(a, ns)| {
            ns.iter()
                .filter(move |b| a < *b)
                .map(move |b| (a, b, a.intersection(b)))
        })
    }

    /// Union of all cliques.
    pub fn attributes(&self) -> Itemset {
        let mut u = Itemset::empty();
        for c in self.adj.keys() {
            u = u.union(c);
        }
        u
    }

    pub(crate) fn add_clique(&mut self, x: Itemset) {
        self.adj.entry(x).or_default();
    }

    pub(crate) fn add_edge(&mut self, a: &Itemset, b: &Itemset) {
        self.adj.get_mut(a).unwrap().insert(b.clone());
        self.adj.get_mut(b).unwrap().insert(a.clone());
    }

    pub(crate) fn remove_edge(&mut self, a: &Itemset, b: &Itemset) {
        self.adj.get_mut(a).unwrap().remove(b);
        self.adj.get_mut(b).unwrap().remove(a);
    }

    /// Removes `w`, reattaching its other neighbours to `target`.
    pub(crate) fn remove_clique_reattach(&mut self, w: &Itemset, target: &Itemset) {
        let neighbors = self.adj.remove(w).unwrap();
        for n in &neighbors {
            self.adj.get_mut(n).unwrap().remove(w);
        }
        for n in neighbors {
            if &n != target {
                self.add_edge(&n, target);
            }
        }
    }

    /// Unique path between two cliques, endpoints included.
    pub fn path(&self, from: &Itemset, to: &Itemset) -> Option<Vec<Itemset>> {
        if !self.adj.contains_key(from) || !self.adj.contains_key(to) {
            return None;
        }
        if from == to {
            return Some(vec![from.clone()]);
        }
        let mut prev: BTreeMap<&Itemset, &Itemset> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            for n in &self.adj[cur] {
                if n != from && !prev.contains_key(n) {
                    prev.insert(n, cur);
                    if n == to {
                        let mut path = vec![to.clone()];
                        let mut at = n;
                        while at != from {
                            at = prev[at];
                            path.push(at.clone());
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Connected components; cliques inside each component are in canonical
    /// order, as is the list itself (by first clique).
    pub fn components(&self) -> Vec<Vec<Itemset>> {
        let mut seen: BTreeSet<&Itemset> = BTreeSet::new();
        let mut out = Vec::new();
        for start in self.adj.keys() {
            if seen.contains(start) {
                continue;
            }
            let mut comp = vec![start];
            seen.insert(start);
            let mut queue = VecDeque::from([start]);
            while let Some(cur) = queue.pop_front() {
                for n in &self.adj[cur] {
                    if seen.insert(n) {
                        comp.push(n);
                        queue.push_back(n);
                    }
                }
            }
            comp.sort();
            out.push(comp.into_iter().cloned().collect());
        }
        out
    }

    fn is_acyclic(&self) -> bool {
        // forest iff every component has nodes = edges + 1
        let mut nodes = 0usize;
        let mut edges = 0usize;
        for ns in self.adj.values() {
            nodes += 1;
            edges += ns.len();
        }
        let edges = edges / 2;
        let components = self.components().len();
        nodes == edges + components
    }

    fn find_rip_violation(&self) -> Option<AttributeId> {
        // In a forest, the cliques containing attribute `a` induce a subforest
        // with (#cliques) - (#edges whose both endpoints contain a) components;
        // running intersection requires exactly one.
        let mut node_count: HashMap<AttributeId, i64> = HashMap::new();
        let mut edge_count: HashMap<AttributeId, i64> = HashMap::new();
        for c in self.adj.keys() {
            for a in c.iter() {
                *node_count.entry(a).or_insert(0) += 1;
            }
        }
        for (_, _, sep) in self.edges() {
            for a in sep.iter() {
                *edge_count.entry(a).or_insert(0) += 1;
            }
        }
        let mut attrs: Vec<AttributeId> = node_count.keys().copied().collect();
        attrs.sort();
        for a in attrs {
            if node_count[&a] - edge_count.get(&a).copied().unwrap_or(0) != 1 {
                return Some(a);
            }
        }
        None
    }

    /// True iff the structure is a forest and, for every attribute, the
    /// cliques containing it induce a connected subtree.
    pub fn check_running_intersection(&self) -> bool {
        if !self.is_acyclic() {
            log::debug!("running intersection check failed: not acyclic");
            return false;
        }
        if let Some(a) = self.find_rip_violation() {
            log::debug!("running intersection check failed at attribute {a}");
            return false;
        }
        true
    }

    /// Connectivity test used by the level-wise search: for n >= 2, the path
    /// between `x` and `y` must exist and contain a separator of size exactly
    /// n - 1; for n = 1 the cliques must be in different components.
    pub fn is_n1_connected(&self, x: &Itemset, y: &Itemset, n: usize) -> Result<bool, ForestError> {
        for end in [x, y] {
            if !self.adj.contains_key(end) {
                return Err(ForestError::UnknownClique(format!("{end:?}")));
            }
        }
        if n <= 1 {
            return Ok(self.path(x, y).is_none());
        }
        match self.path(x, y) {
            None => Ok(false),
            Some(path) => Ok(path
                .windows(2)
                .any(|w| w[0].intersection_len(&w[1]) == n - 1)),
        }
    }

    /// Removes every clique that is a subset of another clique, reattaching
    /// its neighbours to a superset neighbour (one always exists under running
    /// intersection). The modelled distribution is unchanged. Returns the
    /// removed cliques.
    pub(crate) fn purge_in_place(&mut self) -> Vec<Itemset> {
        let mut removed = Vec::new();
        loop {
            let mut victim: Option<(Itemset, Itemset)> = None;
            'outer: for (c, ns) in &self.adj {
                for n in ns {
                    if c.is_subset(n) {
                        victim = Some((c.clone(), n.clone()));
                        break 'outer;
                    }
                }
            }
            match victim {
                Some((w, target)) => {
                    self.remove_clique_reattach(&w, &target);
                    removed.push(w);
                }
                None => return removed,
            }
        }
    }

    /// Copy of the forest with redundant (non-maximal) cliques removed.
    pub fn purge_redundant(&self) -> JunctionForest {
        let mut f = self.clone();
        f.purge_in_place();
        f
    }
}

/// Entropy of the decomposable model in nats: clique entropies minus
/// separator entropies, all from empirical marginals.
pub fn tree_entropy(t: &JunctionForest, d: &TransactionDataset) -> Result<f64, DataError> {
    let mut h = 0.0;
    for c in t.cliques() {
        h += d.project(c)?.entropy();
    }
    for (_, _, sep) in t.edges() {
        h -= d.project(&sep)?.entropy();
    }
    Ok(h)
}

/// Same sum evaluated through a per-itemset entropy cache.
pub(crate) fn tree_entropy_cached(
    t: &JunctionForest,
    d: &TransactionDataset,
    cache: &mut HashMap<Itemset, f64>,
) -> Result<f64, DataError> {
    let mut h = 0.0;
    for c in t.cliques() {
        h += cached_entropy(d, cache, c)?;
    }
    for (_, _, sep) in t.edges() {
        h -= cached_entropy(d, cache, &sep)?;
    }
    Ok(h)
}

pub(crate) fn cached_entropy(
    d: &TransactionDataset,
    cache: &mut HashMap<Itemset, f64>,
    x: &Itemset,
) -> Result<f64, DataError> {
    if let Some(&h) = cache.get(x) {
        return Ok(h);
    }
    let h = d.project(x)?.entropy();
    cache.insert(x.clone(), h);
    Ok(h)
}

/// Probability the decomposable model assigns to a full binary vector:
/// product of clique marginals over product of separator marginals. A zero
/// separator factor implies the clique factors are zero too, so 0/0 is 0.
pub fn tree_distribution_eval(
    t: &JunctionForest,
    d: &TransactionDataset,
    v: &[bool],
) -> Result<f64, DataError> {
    let mut tables: HashMap<Itemset, crate::dataset::MarginalTable> = HashMap::new();
    eval_with_tables(t, d, v, &mut tables)
}

pub(crate) fn eval_with_tables(
    t: &JunctionForest,
    d: &TransactionDataset,
    v: &[bool],
    tables: &mut HashMap<Itemset, crate::dataset::MarginalTable>,
) -> Result<f64, DataError> {
    assert_eq!(v.len(), d.n_attrs(), "vector length must equal K");
    let mut factor = |x: &Itemset| -> Result<f64, DataError> {
        if !tables.contains_key(x) {
            tables.insert(x.clone(), d.project(x)?);
        }
        let mut pattern = 0u64;
        for (j, a) in x.iter().enumerate() {
            if v[a as usize] {
                pattern |= 1 << j;
            }
        }
        Ok(tables[x].probability(pattern))
    };
    let mut num = 1.0;
    for c in t.cliques() {
        num *= factor(c)?;
        if num == 0.0 {
            return Ok(0.0);
        }
    }
    let mut den = 1.0;
    for (_, _, sep) in t.edges() {
        den *= factor(&sep)?;
    }
    Ok(num / den)
}

/// Data log-likelihood of the model: -N * H(T).
pub fn tree_log_likelihood(t: &JunctionForest, d: &TransactionDataset) -> Result<f64, DataError> {
    Ok(-(d.n_rows() as f64) * tree_entropy(t, d)?)
}

/// Asymptotic stochastic-complexity penalty of a k-cell multinomial:
/// (k-1)/2 ln N - ln(pi)/2 - ln Gamma(k/2).
pub fn mdl_cost(k: u64, dataset_size: u64) -> f64 {
    debug_assert!(k >= 1 && dataset_size >= 1);
    let k = k as f64;
    (k - 1.0) / 2.0 * (dataset_size as f64).ln() - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma(k / 2.0)
}

pub(crate) fn penalty_term(method: Regularization, set_len: usize, n: u64) -> f64 {
    let cells = 2f64.powi(set_len as i32);
    match method {
        Regularization::None => 0.0,
        Regularization::Aic => cells - 1.0,
        Regularization::Bic => (n as f64).ln() / 2.0 * (cells - 1.0),
        Regularization::Mdl => mdl_cost(1u64 << set_len.min(63), n),
    }
}

/// Penalised score: total = N * H(T) + penalty, where the penalty sums a
/// per-multinomial term over cliques minus separators.
pub fn score(
    t: &JunctionForest,
    d: &TransactionDataset,
    method: Regularization,
) -> Result<ModelScore, DataError> {
    let n = d.n_rows() as u64;
    let entropy = tree_entropy(t, d)?;
    let mut penalty = 0.0;
    for c in t.cliques() {
        penalty += penalty_term(method, c.len(), n);
    }
    for (_, _, sep) in t.edges() {
        penalty -= penalty_term(method, sep.len(), n);
    }
    let log_likelihood = -(n as f64) * entropy;
    Ok(ModelScore {
        entropy_nats: entropy,
        log_likelihood,
        penalty,
        total: -log_likelihood + penalty,
        method,
    })
}
