//! Greedy level-wise construction of junction forests from a candidate
//! family: at level n, cliques of size n that overlap in n-1 attributes and
//! whose union is still a candidate are merged in order of decreasing entropy
//! reduction, subject to a model-selection gate and a connectivity test that
//! keeps the forest decomposable.

use std::collections::{BTreeSet, BinaryHeap, HashMap};

use thiserror::Error;

use crate::dataset::{DataError, Itemset, TransactionDataset};
use crate::jtree::{
    self, cached_entropy, mdl_cost, tree_entropy_cached, JunctionForest, ModelScore,
    Regularization,
};
use crate::miner::CandidateFamily;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("candidate family does not cover every attribute")]
    NotCovering,
    #[error("candidate family is not downward closed: {0}")]
    NotClosed(String),
    #[error("initial forest is invalid: {0}")]
    BadInitialForest(String),
    #[error("invariant violated during search: {0}")]
    Invariant(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One accepted merge, with the tree entropy measured on both sides of it.
#[derive(Clone, Debug)]
pub struct AcceptedEdge {
    pub level: usize,
    pub x: Itemset,
    pub y: Itemset,
    pub weight: f64,
    pub entropy_before: f64,
    pub entropy_after: f64,
}

/// Progress record for one level of the search.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub level: usize,
    pub edges_considered: usize,
    pub edges_accepted: usize,
    pub entropy: f64,
    pub score_total: f64,
    /// Level-graph nodes spawned while merging.
    pub spawned: Vec<Itemset>,
    /// Tree edges removed to break cycles.
    pub removed_edges: Vec<(Itemset, Itemset)>,
    /// Marked cliques absorbed into a superset neighbour at round end.
    pub absorbed: Vec<Itemset>,
}

/// Full trace of one tree construction.
#[derive(Clone, Debug, Default)]
pub struct SearchReport {
    pub rounds: Vec<RoundRecord>,
    pub accepted: Vec<AcceptedEdge>,
    /// Candidate unions whose merge was rejected by the connectivity test and
    /// that ended up outside every final clique.
    pub excluded: Vec<Itemset>,
    /// Cliques removed by the final purge.
    pub purged: Vec<Itemset>,
}

pub struct SearchOutcome {
    pub forest: JunctionForest,
    pub report: SearchReport,
}

/// Entropy reduction from merging cliques `x` and `y`:
/// H(X) + H(Y) - H(X inter Y) - H(X union Y), clamped to be nonnegative.
/// This is the empirical conditional mutual information of the two private
/// parts given the shared part.
pub fn edge_weight(
    d: &TransactionDataset,
    x: &Itemset,
    y: &Itemset,
) -> Result<f64, DataError> {
    let h = |s: &Itemset| -> Result<f64, DataError> { Ok(d.project(s)?.entropy()) };
    let w = h(x)? + h(y)? - h(&x.intersection(y))? - h(&x.union(y))?;
    Ok(w.max(0.0))
}

/// Admissibility threshold: an edge at level `n` passes its gate when
/// N * w(e) >= gate_threshold(method, n, N).
pub fn gate_threshold(method: Regularization, n: usize, dataset_size: u64) -> f64 {
    assert!(n >= 1 && dataset_size >= 1);
    match method {
        // strictly positive weight required, so exact ties at zero are not
        // joined; the tie epsilon stands in for "improves the likelihood"
        Regularization::None => 1e-12,
        Regularization::Aic => 2f64.powi(n as i32 - 1),
        Regularization::Bic => 2f64.powi(n as i32 - 2) * (dataset_size as f64).ln(),
        Regularization::Mdl => {
            assert!(n <= 60);
            mdl_cost(1u64 << (n + 1), dataset_size) - 2.0 * mdl_cost(1u64 << n, dataset_size)
                + mdl_cost(1u64 << (n - 1), dataset_size)
        }
    }
}

/// Max-heap entry: higher weight first, ties broken by the lexicographically
/// smaller clique pair. Weights are finite by construction.
struct QueueEdge {
    weight: f64,
    x: Itemset,
    y: Itemset,
}

impl PartialEq for QueueEdge {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for QueueEdge {}
impl PartialOrd for QueueEdge {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEdge {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.weight
            .partial_cmp(&other.weight)
            .unwrap()
            .then_with(|| other.x.cmp(&self.x))
            .then_with(|| other.y.cmp(&self.y))
    }
}

pub struct TreeSearch<'a> {
    data: &'a TransactionDataset,
    family: &'a CandidateFamily,
    reg: Regularization,
    forest: JunctionForest,
    entropies: HashMap<Itemset, f64>,
    rejected: BTreeSet<Itemset>,
    report: SearchReport,
    verify: bool,
    next_level: usize,
}

impl<'a> TreeSearch<'a> {
    pub fn new(
        family: &'a CandidateFamily,
        data: &'a TransactionDataset,
        reg: Regularization,
    ) -> Result<Self, SearchError> {
        if !family.covers_all_attributes() || family.names().len() != data.n_attrs() {
            return Err(SearchError::NotCovering);
        }
        family
            .check_downward_closed()
            .map_err(|e| SearchError::NotClosed(e.to_string()))?;
        Ok(TreeSearch {
            data,
            family,
            reg,
            forest: JunctionForest::singletons(data.n_attrs()),
            entropies: HashMap::new(),
            rejected: BTreeSet::new(),
            report: SearchReport::default(),
            verify: false,
            next_level: 1,
        })
    }

    /// Starts the level loop from an existing forest at the given level,
    /// e.g. to replay a construction whose earlier levels are prescribed.
    pub fn resume(
        forest: JunctionForest,
        family: &'a CandidateFamily,
        data: &'a TransactionDataset,
        reg: Regularization,
        next_level: usize,
    ) -> Result<Self, SearchError> {
        if !forest.check_running_intersection() {
            return Err(SearchError::BadInitialForest(
                "running intersection property fails".into(),
            ));
        }
        for c in forest.cliques() {
            if !family.contains(c) {
                return Err(SearchError::BadInitialForest(format!(
                    "clique {c:?} is not in the candidate family"
                )));
            }
        }
        let mut s = TreeSearch::new(family, data, reg)?;
        s.forest = forest;
        s.next_level = next_level;
        Ok(s)
    }

    /// Enables running-intersection verification after every mutation.
    pub fn verify_invariants(mut self, on: bool) -> Self {
        self.verify = on;
        self
    }

    fn weight(&mut self, x: &Itemset, y: &Itemset) -> Result<f64, SearchError> {
        let h_x = cached_entropy(self.data, &mut self.entropies, x)?;
        let h_y = cached_entropy(self.data, &mut self.entropies, y)?;
        let h_sep = cached_entropy(self.data, &mut self.entropies, &x.intersection(y))?;
        let h_union = cached_entropy(self.data, &mut self.entropies, &x.union(y))?;
        Ok((h_x + h_y - h_sep - h_union).max(0.0))
    }

    fn tree_entropy_now(&mut self) -> Result<f64, SearchError> {
        Ok(tree_entropy_cached(
            &self.forest,
            self.data,
            &mut self.entropies,
        )?)
    }

    fn check_rip(&self, context: &str) -> Result<(), SearchError> {
        if self.verify && !self.forest.check_running_intersection() {
            return Err(SearchError::Invariant(format!(
                "running intersection property lost {context}"
            )));
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<SearchOutcome, SearchError> {
        let k = self.data.n_attrs();
        loop {
            let n = self.next_level;
            if n > k {
                break;
            }
            let created = self.run_round(n)?;
            self.next_level += 1;
            if created == 0 {
                break;
            }
        }
        let purged = self.forest.purge_in_place();
        self.report.purged = purged;
        self.check_rip("after final purge")?;

        let cliques: Vec<Itemset> = self.forest.cliques().cloned().collect();
        self.report.excluded = self
            .rejected
            .iter()
            .filter(|x| !cliques.iter().any(|c| x.is_subset(c)))
            .cloned()
            .collect();
        Ok(SearchOutcome {
            forest: self.forest,
            report: self.report,
        })
    }

    /// Runs one level; returns the number of cliques of size n + 1 created.
    fn run_round(&mut self, n: usize) -> Result<usize, SearchError> {
        let n_rows = self.data.n_rows() as u64;
        let threshold = gate_threshold(self.reg, n, n_rows);

        let mut nodes: BTreeSet<Itemset> = self
            .forest
            .cliques()
            .filter(|c| c.len() == n)
            .cloned()
            .collect();
        let mut heap: BinaryHeap<QueueEdge> = BinaryHeap::new();

        let node_list: Vec<Itemset> = nodes.iter().cloned().collect();
        for (i, x) in node_list.iter().enumerate() {
            for y in &node_list[i + 1..] {
                if x.intersection_len(y) != n - 1 {
                    continue;
                }
                let union = x.union(y);
                if !self.family.contains(&union) {
                    continue;
                }
                let w = self.weight(x, y)?;
                if n_rows as f64 * w >= threshold {
                    heap.push(QueueEdge {
                        weight: w,
                        x: x.clone(),
                        y: y.clone(),
                    });
                }
            }
        }

        let mut round = RoundRecord {
            level: n,
            edges_considered: 0,
            edges_accepted: 0,
            entropy: 0.0,
            score_total: 0.0,
            spawned: Vec::new(),
            removed_edges: Vec::new(),
            absorbed: Vec::new(),
        };
        let mut marked: BTreeSet<Itemset> = BTreeSet::new();
        let mut created = 0usize;

        while let Some(edge) = heap.pop() {
            round.edges_considered += 1;
            if self.forest.is_n1_connected(&edge.x, &edge.y, n).map_err(|e| {
                SearchError::Invariant(format!("level node vanished: {e}"))
            })? {
                self.modify_tree(&edge, n, threshold, &mut nodes, &mut heap, &mut marked, &mut round)?;
                round.edges_accepted += 1;
                created += 1;
            } else {
                self.rejected.insert(edge.x.union(&edge.y));
            }
        }

        // Absorb marked cliques that became redundant: each is removed only if
        // a neighbour is a strict superset; other neighbours reattach to it.
        for w in marked {
            if !self.forest.contains_clique(&w) {
                continue;
            }
            let target = self
                .forest
                .neighbors(&w)
                .find(|s| w.is_subset(s))
                .cloned();
            if let Some(target) = target {
                self.forest.remove_clique_reattach(&w, &target);
                round.absorbed.push(w);
            }
        }
        self.check_rip("after round-end absorption")?;

        round.entropy = self.tree_entropy_now()?;
        round.score_total = self.score_total_now()?;
        log::debug!(
            target: "decomine::search",
            "{}",
            serde_json::json!({
                "round": round.level,
                "edges_considered": round.edges_considered,
                "edges_accepted": round.edges_accepted,
                "entropy": round.entropy,
                "score": round.score_total,
            })
        );
        self.report.rounds.push(round);
        Ok(created)
    }

    fn score_total_now(&mut self) -> Result<f64, SearchError> {
        let n_rows = self.data.n_rows() as u64;
        let h = self.tree_entropy_now()?;
        let mut penalty = 0.0;
        for c in self.forest.cliques() {
            penalty += jtree::penalty_term(self.reg, c.len(), n_rows);
        }
        for (_, _, sep) in self.forest.edges() {
            penalty -= jtree::penalty_term(self.reg, sep.len(), n_rows);
        }
        Ok(n_rows as f64 * h + penalty)
    }

    /// Merges `x` and `y` into v = x union y: adds v, ensures every size-n
    /// subset of v is a clique connected to v (spawning level-graph nodes and
    /// their edges as needed), and breaks the one cycle this closes by
    /// removing a separator of size n - 1 on the old x-y path.
    #[allow(clippy::too_many_arguments)]
    fn modify_tree(
        &mut self,
        edge: &QueueEdge,
        n: usize,
        threshold: f64,
        nodes: &mut BTreeSet<Itemset>,
        heap: &mut BinaryHeap<QueueEdge>,
        marked: &mut BTreeSet<Itemset>,
        round: &mut RoundRecord,
    ) -> Result<(), SearchError> {
        let n_rows = self.data.n_rows() as u64;
        let v = edge.x.union(&edge.y);
        debug_assert_eq!(v.len(), n + 1);
        debug_assert!(self.family.contains(&v));

        let entropy_before = self.tree_entropy_now()?;
        self.forest.add_clique(v.clone());
        let mut breaks = 0usize;

        for a in v.iter().collect::<Vec<_>>() {
            let mut w_set = v.clone();
            w_set.remove(a);
            marked.insert(w_set.clone());

            if !nodes.contains(&w_set) {
                nodes.insert(w_set.clone());
                self.forest.add_clique(w_set.clone());
                round.spawned.push(w_set.clone());
                for z in nodes.iter() {
                    if *z == w_set || w_set.intersection_len(z) != n - 1 {
                        continue;
                    }
                    let union = w_set.union(z);
                    if union == v || !self.family.contains(&union) {
                        continue;
                    }
                    let w = self.weight(&w_set, z)?;
                    if n_rows as f64 * w >= threshold {
                        let (a, b) = if w_set < *z {
                            (w_set.clone(), z.clone())
                        } else {
                            (z.clone(), w_set.clone())
                        };
                        heap.push(QueueEdge { weight: w, x: a, y: b });
                    }
                }
            }

            // connect v and w, breaking the cycle if they are already linked
            if let Some(path) = self.forest.path(&v, &w_set) {
                let brk = path
                    .windows(2)
                    .find(|p| p[0].intersection_len(&p[1]) == n - 1)
                    .map(|p| (p[0].clone(), p[1].clone()));
                match brk {
                    Some((a, b)) => {
                        self.forest.remove_edge(&a, &b);
                        let (a, b) = if a < b { (a, b) } else { (b, a) };
                        round.removed_edges.push((a, b));
                        breaks += 1;
                    }
                    None => {
                        return Err(SearchError::Invariant(format!(
                            "no separator of size {} on the cycle through {v:?}",
                            n - 1
                        )));
                    }
                }
            }
            self.forest.add_edge(&v, &w_set);
        }

        // a level-1 merge bridges two components and closes no cycle; above
        // that the endpoints were connected, so exactly one break happens
        let expected_breaks = if n == 1 { 0 } else { 1 };
        if breaks != expected_breaks {
            return Err(SearchError::Invariant(format!(
                "expected {expected_breaks} cycle breaks joining {:?} and {:?}, saw {breaks}",
                edge.x, edge.y
            )));
        }
        self.check_rip("after merge")?;

        let entropy_after = self.tree_entropy_now()?;
        self.report.accepted.push(AcceptedEdge {
            level: n,
            x: edge.x.clone(),
            y: edge.y.clone(),
            weight: edge.weight,
            entropy_before,
            entropy_after,
        });
        Ok(())
    }
}

/// Builds one junction forest from the candidate family.
pub fn search_tree(
    family: &CandidateFamily,
    data: &TransactionDataset,
    reg: Regularization,
) -> Result<SearchOutcome, SearchError> {
    TreeSearch::new(family, data, reg)?.run()
}

/// One forest of a sequence, together with the decomposable family it models
/// (the candidates contained in some clique) and its score.
pub struct FamilyEntry {
    pub forest: JunctionForest,
    pub family: CandidateFamily,
    pub score: ModelScore,
    pub report: SearchReport,
}

pub struct FamilySequence {
    pub entries: Vec<FamilyEntry>,
}

/// Extracts forests repeatedly: after each round, candidates containing a
/// non-singleton member of the round's family are dropped and the search runs
/// again, until only singletons remain.
pub fn search_sequence(
    family: &CandidateFamily,
    data: &TransactionDataset,
    reg: Regularization,
    max_families: Option<usize>,
) -> Result<FamilySequence, SearchError> {
    let mut current = family.clone();
    let mut entries: Vec<FamilyEntry> = Vec::new();
    loop {
        let outcome = TreeSearch::new(&current, data, reg)?.run()?;
        let fam = current.restrict_to_forest(&outcome.forest);
        let sc = jtree::score(&outcome.forest, data, reg)?;
        let done = fam.is_singletons_only();
        let next = drop_covered_candidates(&current, &outcome.forest);
        entries.push(FamilyEntry {
            forest: outcome.forest,
            family: fam,
            score: sc,
            report: outcome.report,
        });
        if done || max_families.is_some_and(|m| entries.len() >= m) {
            break;
        }
        current = next;
    }
    Ok(FamilySequence { entries })
}

/// Removes every candidate that contains a non-singleton subset of some
/// clique (equivalently, that overlaps a clique in two or more attributes).
fn drop_covered_candidates(family: &CandidateFamily, forest: &JunctionForest) -> CandidateFamily {
    let cliques: Vec<&Itemset> = forest.cliques().filter(|c| c.len() >= 2).collect();
    family.filter_members(|x| !cliques.iter().any(|c| x.intersection_len(c) >= 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_path_dataset, TransactionDataset};
    use crate::fixtures;
    use crate::jtree::tree_entropy;
    use crate::miner::mine_candidates;

    fn set(m: &[u32]) -> Itemset {
        Itemset::from_members(m.iter().copied())
    }

    #[test]
    fn weight_is_zero_for_exactly_factorising_counts() {
        let d = TransactionDataset::parse_dense("00\n01\n10\n11").unwrap();
        let w = edge_weight(&d, &set(&[0]), &set(&[1])).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn weight_of_perfectly_correlated_pair_is_ln2() {
        let d = TransactionDataset::parse_dense("11\n00\n11\n00").unwrap();
        let w = edge_weight(&d, &set(&[0]), &set(&[1])).unwrap();
        assert!((w - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn weight_matches_independent_recount() {
        let d = generate_path_dataset(3, 77, 0.3, 21).unwrap();
        let h = |x: &Itemset| d.project(x).unwrap().entropy();
        let expect = h(&set(&[0, 1])) + h(&set(&[1, 2])) - h(&set(&[1])) - h(&set(&[0, 1, 2]));
        let w = edge_weight(&d, &set(&[0, 1]), &set(&[1, 2])).unwrap();
        assert!((w - expect.max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn gate_threshold_values() {
        assert!((gate_threshold(Regularization::Bic, 2, 100) - 4.605170185988092).abs() < 1e-12);
        assert_eq!(gate_threshold(Regularization::Aic, 3, 12345), 4.0);
        assert_eq!(gate_threshold(Regularization::None, 5, 10), 1e-12);
        // costmdl(8) - 2 costmdl(4) + costmdl(2) at N = 100
        let mdl = gate_threshold(Regularization::Mdl, 2, 100);
        assert!((mdl - 2.8134107167600364).abs() < 1e-10);
    }

    #[test]
    fn mdl_cost_closed_forms() {
        // k = 1: -ln(pi)/2 - ln Gamma(1/2) = -ln(pi)
        assert!((mdl_cost(1, 100) + std::f64::consts::PI.ln()).abs() < 1e-12);
        assert!((mdl_cost(2, 100) - 1.7302201500693456).abs() < 1e-10);
        // k = 4, N = 1: the ln N term vanishes and Gamma(2) = 1
        assert!((mdl_cost(4, 1) + 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn singleton_family_yields_isolated_singletons() {
        let d = generate_path_dataset(4, 30, 0.3, 22).unwrap();
        let f = mine_candidates(&d, 1.01).unwrap(); // singletons only
        let out = search_tree(&f, &d, Regularization::None).unwrap();
        assert_eq!(out.forest.n_cliques(), 4);
        assert_eq!(out.forest.n_edges(), 0);
        assert!(out.forest.cliques().all(|c| c.len() == 1));
    }

    #[test]
    fn correlated_pair_with_independent_third() {
        // a = b exactly; c is an independent fair coin (counts factorise)
        let d = TransactionDataset::parse_dense("110\n111\n000\n001\n110\n111\n000\n001")
            .unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let out = search_tree(&f, &d, Regularization::None).unwrap();
        let cliques: Vec<Itemset> = out.forest.cliques().cloned().collect();
        assert_eq!(cliques, vec![set(&[0, 1]), set(&[2])]);
    }

    #[test]
    fn replays_documented_second_level() {
        let fx = fixtures::worked_example();
        let search = TreeSearch::resume(
            fx.initial_forest.clone(),
            &fx.family,
            &fx.dataset,
            Regularization::None,
            2,
        )
        .unwrap()
        .verify_invariants(true);
        let out = search.run().unwrap();

        // merge of (ab, bc) spawns ac and abc; merge of (ac, cd) spawns ad
        // and acd; the edge (bc, cd) is removed to break the cycle
        let accepted: Vec<(Itemset, Itemset)> = out
            .report
            .accepted
            .iter()
            .map(|e| (e.x.clone(), e.y.clone()))
            .collect();
        assert_eq!(
            accepted,
            vec![
                (set(&[0, 1]), set(&[1, 2])),
                (set(&[0, 2]), set(&[2, 3])),
            ]
        );
        let round2 = &out.report.rounds[0];
        assert_eq!(round2.spawned, vec![set(&[0, 2]), set(&[0, 3])]);
        assert!(round2
            .removed_edges
            .contains(&(set(&[1, 2]), set(&[2, 3]))));
        assert_eq!(
            round2.absorbed,
            vec![set(&[0, 1]), set(&[0, 2]), set(&[0, 3]), set(&[1, 2]), set(&[2, 3])]
        );

        let cliques: Vec<Itemset> = out.forest.cliques().cloned().collect();
        assert_eq!(cliques, vec![set(&[0, 1, 2]), set(&[0, 2, 3]), set(&[2, 4])]);

        // the only candidate ruled out by a failed merge is bcd
        assert_eq!(out.report.excluded, vec![set(&[1, 2, 3])]);
    }

    #[test]
    fn entropy_drop_equals_edge_weight() {
        for seed in 0..6u64 {
            let d = generate_path_dataset(6, 120, 0.25, 100 + seed).unwrap();
            let f = mine_candidates(&d, 0.0).unwrap();
            let out = TreeSearch::new(&f, &d, Regularization::None)
                .unwrap()
                .verify_invariants(true)
                .run()
                .unwrap();
            assert!(!out.report.accepted.is_empty());
            for e in &out.report.accepted {
                let drop = e.entropy_before - e.entropy_after;
                assert!(
                    (drop - e.weight).abs() < 1e-9,
                    "drop {drop} != weight {} at level {}",
                    e.weight,
                    e.level
                );
                assert!(e.entropy_after <= e.entropy_before + 1e-12);
            }
        }
    }

    #[test]
    fn level_one_matches_spanning_forest_enumeration() {
        // Exhaustive minimum over all pair forests for a small universe: the
        // level-1 tree must reach the lowest achievable entropy.
        let d = generate_path_dataset(5, 60, 0.3, 23).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let pairs: Vec<(u32, u32)> = (0..5)
            .flat_map(|i| ((i + 1)..5).map(move |j| (i, j)))
            .collect();
        let h1 = |a: u32| d.project(&Itemset::singleton(a)).unwrap().entropy();
        let base: f64 = (0..5).map(h1).sum();
        let mut best = f64::INFINITY;
        for mask in 0u32..1 << pairs.len() {
            // check forest-ness with union-find
            let mut parent: Vec<u32> = (0..5).collect();
            fn find(p: &mut Vec<u32>, mut x: u32) -> u32 {
                while p[x as usize] != x {
                    p[x as usize] = p[p[x as usize] as usize];
                    x = p[x as usize];
                }
                x
            }
            let mut ok = true;
            let mut total = base;
            for (b, &(i, j)) in pairs.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri == rj {
                        ok = false;
                        break;
                    }
                    parent[ri as usize] = rj;
                    total -= edge_weight(&d, &Itemset::singleton(i), &Itemset::singleton(j))
                        .unwrap();
                }
            }
            if ok {
                best = best.min(total);
            }
        }
        // replay only level 1.
        let mut s = TreeSearch::new(&f, &d, Regularization::None).unwrap();
        s.run_round(1).unwrap();
        let got = tree_entropy(&s.forest, &d).unwrap();
        assert!(got <= best + 1e-9, "level-1 entropy {got} vs best {best}");
    }

    #[test]
    fn widening_the_gate_never_shrinks_level_one() {
        // AIC threshold (1) <= BIC threshold (ln N / 2) once N >= 8
        let d = generate_path_dataset(7, 200, 0.35, 24).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let edges = |reg| {
            let out = search_tree(&f, &d, reg).unwrap();
            out.report
                .accepted
                .iter()
                .filter(|e| e.level == 1)
                .map(|e| (e.x.clone(), e.y.clone()))
                .collect::<BTreeSet<_>>()
        };
        let aic = edges(Regularization::Aic);
        let bic = edges(Regularization::Bic);
        assert!(bic.is_subset(&aic), "bic {bic:?} not within aic {aic:?}");
    }

    #[test]
    fn sequence_on_singleton_family_has_length_one() {
        let d = generate_path_dataset(4, 25, 0.3, 25).unwrap();
        let f = mine_candidates(&d, 1.01).unwrap();
        let seq = search_sequence(&f, &d, Regularization::Bic, None).unwrap();
        assert_eq!(seq.entries.len(), 1);
        assert!(seq.entries[0].family.is_singletons_only());
    }

    #[test]
    fn sequence_families_exclude_earlier_cliques() {
        let d = generate_path_dataset(8, 500, 0.3, 26).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let seq = search_sequence(&f, &d, Regularization::Bic, None).unwrap();
        assert!(seq.entries.len() >= 2);
        for i in 0..seq.entries.len() {
            for j in i + 1..seq.entries.len() {
                for (x, _) in seq.entries[j].family.members() {
                    for (y, _) in seq.entries[i].family.members() {
                        assert!(
                            y.len() <= 1 || !y.is_subset(x),
                            "family {j} member {x:?} contains family {i} member {y:?}"
                        );
                    }
                }
            }
        }
        // scores never decrease along the sequence
        for w in seq.entries.windows(2) {
            assert!(w[0].score.total <= w[1].score.total + 1e-9);
        }
    }

    #[test]
    fn path_data_first_tree_is_the_adjacent_chain() {
        let d = generate_path_dataset(8, 1000, 0.3, 0).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let seq = search_sequence(&f, &d, Regularization::Bic, None).unwrap();
        let first: Vec<Itemset> = seq.entries[0].forest.cliques().cloned().collect();
        let chain: Vec<Itemset> = (0..7).map(|i| set(&[i, i + 1])).collect();
        assert_eq!(first, chain);
        // the second family has no adjacent pair and at least one gap pair
        if seq.entries.len() > 1 {
            let second = &seq.entries[1].family;
            for (x, _) in second.members() {
                assert!(!chain.contains(x));
            }
        }
    }

    #[test]
    fn rejects_non_covering_family() {
        let d = generate_path_dataset(4, 20, 0.3, 27).unwrap();
        let d3 = generate_path_dataset(3, 20, 0.3, 27).unwrap();
        let f3 = mine_candidates(&d3, 0.0).unwrap();
        assert!(matches!(
            search_tree(&f3, &d, Regularization::None),
            Err(SearchError::NotCovering)
        ));
    }
}
