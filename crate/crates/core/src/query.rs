//! Frequency-bound queries against decomposable families. Instead of one
//! linear program over all 2^K joint cells, each connected component of the
//! junction forest contributes a small program over per-clique distributions
//! tied together by separator-consistency constraints; the component bounds
//! combine into the final interval.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::dataset::{AttributeId, DataError, Itemset};
use crate::jtree::{ForestError, JunctionForest};
use crate::lp::{self, LpProblem, LpStatus, Sense};
use crate::miner::CandidateFamily;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query must name at least one attribute")]
    EmptyQuery,
    #[error("query attribute {0} is outside the model's universe")]
    UnknownAttribute(AttributeId),
    #[error("query plan too large: clique of {0} attributes")]
    PlanTooLarge(usize),
    #[error("family intervals are mutually inconsistent (gap {0})")]
    InconsistentFamilies(f64),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Closed interval of feasible frequencies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryInterval {
    pub lo: f64,
    pub hi: f64,
}

impl QueryInterval {
    /// Clamps endpoints into [0, 1] and absorbs sub-1e-9 inversions.
    pub fn new_clamped(lo: f64, hi: f64) -> QueryInterval {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        if lo > hi {
            debug_assert!(lo - hi < 1e-6, "inverted interval [{lo}, {hi}]");
            let mid = 0.5 * (lo + hi);
            QueryInterval { lo: mid, hi: mid }
        } else {
            QueryInterval { lo, hi }
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

/// How one component's linear program was assembled.
#[derive(Clone, Debug)]
pub struct ComponentPlan {
    pub component_index: usize,
    pub restricted_query: Itemset,
    /// Subtree left after pruning, before augmentation.
    pub pruned: JunctionForest,
    pub root: Itemset,
    /// Root-augmented subtree the program is built on.
    pub augmented: JunctionForest,
    /// Total LP variables: sum over cliques of 2^|clique|.
    pub variable_count: usize,
}

#[derive(Clone, Debug)]
pub struct ComponentReport {
    pub plan: ComponentPlan,
    pub alpha: f64,
    pub beta: f64,
    pub statuses: (LpStatus, LpStatus),
}

#[derive(Clone, Debug)]
pub struct QueryOutcome {
    pub interval: QueryInterval,
    /// Set when any component program failed to solve cleanly; the affected
    /// component then contributes the trivial bounds [0, 1].
    pub degraded: bool,
    pub components: Vec<ComponentReport>,
    pub n_components: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QueryOptions {
    /// Disable subtree pruning (used to validate that pruning is sound).
    pub prune: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions { prune: true }
    }
}

/// Interval implied by singleton frequencies alone: the exact optimum of the
/// linear program with one marginal constraint per member.
pub fn singleton_interval(freqs: &[f64]) -> QueryInterval {
    assert!(!freqs.is_empty());
    let sum: f64 = freqs.iter().sum();
    let lo = (sum - (freqs.len() as f64 - 1.0)).max(0.0);
    let hi = freqs.iter().fold(1.0f64, |a, &b| a.min(b));
    QueryInterval::new_clamped(lo, hi)
}

/// Bounds on the frequency of `q` given the frequencies of the decomposable
/// family `freqs` modelled by `forest`. `freqs` must be exactly the family
/// the forest models (see [`CandidateFamily::restrict_to_forest`]).
pub fn query_bounds(
    forest: &JunctionForest,
    freqs: &CandidateFamily,
    q: &Itemset,
) -> Result<QueryOutcome, QueryError> {
    query_bounds_with(forest, freqs, q, QueryOptions::default())
}

pub fn query_bounds_with(
    forest: &JunctionForest,
    freqs: &CandidateFamily,
    q: &Itemset,
    opts: QueryOptions,
) -> Result<QueryOutcome, QueryError> {
    if q.is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    let universe = forest.attributes();
    if let Some(a) = q.iter().find(|a| !universe.contains(*a)) {
        return Err(QueryError::UnknownAttribute(a));
    }

    let components = forest.components();
    let n_components = components.len();
    let mut reports = Vec::new();
    let mut degraded = false;

    for (idx, comp) in components.iter().enumerate() {
        let comp_attrs = comp
            .iter()
            .fold(Itemset::empty(), |acc, c| acc.union(c));
        let q_i = q.intersection(&comp_attrs);
        if q_i.is_empty() {
            // neutral component: contributes [1, 1] to the combination
            continue;
        }
        let plan = build_plan(forest, comp, &q_i, idx, opts)?;
        let (alpha, beta, statuses) = solve_component(&plan, freqs)?;
        if statuses.0 != LpStatus::Optimal || statuses.1 != LpStatus::Optimal {
            degraded = true;
            reports.push(ComponentReport {
                plan,
                alpha: 0.0,
                beta: 1.0,
                statuses,
            });
        } else {
            reports.push(ComponentReport {
                plan,
                alpha,
                beta,
                statuses,
            });
        }
    }

    // Combination across components: the empty-restriction components enter
    // with [1, 1], which the sum below absorbs.
    let active = reports.len() as f64;
    let alpha_sum: f64 = reports.iter().map(|r| r.alpha).sum();
    let lo = (alpha_sum - (active - 1.0)).max(0.0);
    let hi = reports.iter().map(|r| r.beta).fold(1.0f64, f64::min);
    Ok(QueryOutcome {
        interval: QueryInterval::new_clamped(lo, hi),
        degraded,
        components: reports,
        n_components,
    })
}

/// Intersection of the intervals from several families over the same
/// universe. The intersection is clamped nonempty at 1e-9; a wider gap means
/// the inputs disagree about the same dataset and is reported as an error.
pub fn query_multi(
    models: &[(&JunctionForest, &CandidateFamily)],
    q: &Itemset,
) -> Result<QueryOutcome, QueryError> {
    assert!(!models.is_empty());
    let mut outcomes = Vec::new();
    for (forest, fam) in models {
        outcomes.push(query_bounds(forest, fam, q)?);
    }
    let lo = outcomes.iter().map(|o| o.interval.lo).fold(0.0, f64::max);
    let hi = outcomes.iter().map(|o| o.interval.hi).fold(1.0, f64::min);
    if lo > hi + 1e-9 {
        return Err(QueryError::InconsistentFamilies(lo - hi));
    }
    let degraded = outcomes.iter().any(|o| o.degraded);
    let components = outcomes
        .into_iter()
        .flat_map(|o| o.components)
        .collect::<Vec<_>>();
    Ok(QueryOutcome {
        interval: QueryInterval::new_clamped(lo, hi.max(lo - 1e-9)),
        degraded,
        components,
        n_components: models.len(),
    })
}

// ---------------------------------------------------------------------------
// plan construction

/// Index-keyed working tree: cliques may shrink, merge and disappear while
/// pruning, which is awkward on a structure keyed by the itemsets themselves.
#[derive(Clone)]
struct WorkTree {
    sets: Vec<Option<Itemset>>,
    adj: Vec<BTreeSet<usize>>,
}

impl WorkTree {
    fn from_component(forest: &JunctionForest, comp: &[Itemset]) -> WorkTree {
        let index = |x: &Itemset| comp.iter().position(|c| c == x).unwrap();
        let mut t = WorkTree {
            sets: comp.iter().cloned().map(Some).collect(),
            adj: vec![BTreeSet::new(); comp.len()],
        };
        for c in comp {
            let i = index(c);
            for nb in forest.neighbors(c) {
                if comp.iter().any(|x| x == nb) {
                    t.adj[i].insert(index(nb));
                }
            }
        }
        t
    }

    fn alive(&self) -> impl Iterator<Item = usize> + '_ {
        self.sets
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|_| i))
    }

    /// Alive indices ordered by their current itemset.
    fn sorted_alive(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.alive().collect();
        v.sort_by(|&a, &b| self.sets[a].cmp(&self.sets[b]));
        v
    }

    fn set(&self, i: usize) -> &Itemset {
        self.sets[i].as_ref().unwrap()
    }

    fn remove_merge(&mut self, i: usize, into: usize) {
        let neighbors = std::mem::take(&mut self.adj[i]);
        for &n in &neighbors {
            self.adj[n].remove(&i);
            if n != into {
                self.adj[n].insert(into);
                self.adj[into].insert(n);
            }
        }
        self.sets[i] = None;
    }

    fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut prev = vec![usize::MAX; self.sets.len()];
        let mut queue = std::collections::VecDeque::from([from]);
        prev[from] = from;
        while let Some(cur) = queue.pop_front() {
            for &n in &self.adj[cur] {
                if prev[n] == usize::MAX {
                    prev[n] = cur;
                    if n == to {
                        let mut p = vec![to];
                        let mut at = to;
                        while at != from {
                            at = prev[at];
                            p.push(at);
                        }
                        p.reverse();
                        return Some(p);
                    }
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Merges every clique that is a subset of a neighbour into it, smallest
    /// first. Running intersection guarantees a redundant clique always has a
    /// superset neighbour.
    fn merge_redundant(&mut self) -> bool {
        let mut changed = false;
        loop {
            let mut victim = None;
            for i in self.sorted_alive() {
                if let Some(&j) = self.adj[i]
                    .iter()
                    .find(|&&j| self.set(i).is_subset(self.set(j)))
                {
                    victim = Some((i, j));
                    break;
                }
            }
            match victim {
                Some((i, j)) => {
                    self.remove_merge(i, j);
                    changed = true;
                }
                None => return changed,
            }
        }
    }

    fn to_forest(&self) -> Result<JunctionForest, ForestError> {
        let cliques: Vec<Itemset> = self.alive().map(|i| self.set(i).clone()).collect();
        let mut edges = Vec::new();
        for i in self.alive() {
            for &j in &self.adj[i] {
                if i < j {
                    edges.push((self.set(i).clone(), self.set(j).clone()));
                }
            }
        }
        JunctionForest::from_parts(cliques, edges)
    }
}

fn build_plan(
    forest: &JunctionForest,
    comp: &[Itemset],
    q_i: &Itemset,
    component_index: usize,
    opts: QueryOptions,
) -> Result<ComponentPlan, QueryError> {
    let mut u = WorkTree::from_component(forest, comp);

    if opts.prune {
        // Smallest subtree containing the restricted query: strip leaves whose
        // removal keeps every query attribute covered, to a fixed point.
        loop {
            let mut stripped = false;
            for i in u.sorted_alive() {
                if u.adj[i].len() > 1 {
                    continue; // not a leaf
                }
                let needed = q_i.iter().any(|a| {
                    u.set(i).contains(a) && !u.alive().any(|j| j != i && u.set(j).contains(a))
                });
                if !needed && u.alive().count() > 1 {
                    u.remove_merge(i, *u.adj[i].iter().next().unwrap());
                    stripped = true;
                }
            }
            if !stripped {
                break;
            }
        }

        // Jointly: drop non-query attributes that occur in a single clique and
        // merge redundant cliques, until stable.
        loop {
            let mut changed = u.merge_redundant();
            'strip: for i in u.sorted_alive() {
                for a in u.set(i).clone().iter() {
                    if q_i.contains(a) {
                        continue;
                    }
                    let occurrences = u.alive().filter(|&j| u.set(j).contains(a)).count();
                    if occurrences == 1 {
                        let mut shrunk = u.set(i).clone();
                        shrunk.remove(a);
                        u.sets[i] = Some(shrunk);
                        changed = true;
                        break 'strip;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    let pruned = u.to_forest()?;

    // Choose the root giving the fewest LP variables; ties go to the
    // lexicographically smallest clique.
    let mut best: Option<(usize, Itemset, WorkTree)> = None;
    for root in u.sorted_alive() {
        let candidate = augment(&u, root, q_i)?;
        let vars = candidate
            .alive()
            .map(|i| {
                let len = candidate.set(i).len();
                if len > 25 {
                    usize::MAX / 4
                } else {
                    1usize << len
                }
            })
            .sum::<usize>();
        let better = match &best {
            None => true,
            Some((bv, broot, _)) => {
                vars < *bv || (vars == *bv && u.set(root) < broot)
            }
        };
        if better {
            best = Some((vars, u.set(root).clone(), candidate));
        }
    }
    let (variable_count, root, augmented_tree) = best.expect("component has at least one clique");
    if variable_count >= usize::MAX / 4 {
        let widest = augmented_tree
            .alive()
            .map(|i| augmented_tree.set(i).len())
            .max()
            .unwrap_or(0);
        return Err(QueryError::PlanTooLarge(widest));
    }
    let augmented = augmented_tree.to_forest()?;
    debug_assert!(augmented.check_running_intersection());

    Ok(ComponentPlan {
        component_index,
        restricted_query: q_i.clone(),
        pruned,
        root,
        augmented,
        variable_count,
    })
}

/// Adds the query attributes to the root and to every clique on the paths
/// between the root and the cliques originally holding them, then merges the
/// cliques this made redundant.
fn augment(u: &WorkTree, root: usize, q_i: &Itemset) -> Result<WorkTree, QueryError> {
    let mut t = u.clone();
    for a in q_i.iter() {
        let holders: Vec<usize> = u.alive().filter(|&i| u.set(i).contains(a)).collect();
        for h in holders {
            let path = u.path(root, h).expect("component is connected");
            for i in path {
                let mut s = t.set(i).clone();
                s.insert(a);
                t.sets[i] = Some(s);
            }
        }
    }
    let mut root_set = t.set(root).clone();
    for a in q_i.iter() {
        root_set.insert(a);
    }
    t.sets[root] = Some(root_set);
    t.merge_redundant();
    Ok(t)
}

// ---------------------------------------------------------------------------
// program assembly

struct CliqueLayout {
    members: Vec<AttributeId>,
    offset: usize,
}

impl CliqueLayout {
    fn mask_of(&self, x: &Itemset) -> u64 {
        let mut m = 0u64;
        for (j, a) in self.members.iter().enumerate() {
            if x.contains(*a) {
                m |= 1 << j;
            }
        }
        m
    }
}

fn solve_component(
    plan: &ComponentPlan,
    freqs: &CandidateFamily,
) -> Result<(f64, f64, (LpStatus, LpStatus)), QueryError> {
    let cliques: Vec<&Itemset> = plan.augmented.cliques().collect();
    let mut layouts = Vec::with_capacity(cliques.len());
    let mut offset = 0usize;
    for c in &cliques {
        if c.len() > 25 {
            return Err(QueryError::PlanTooLarge(c.len()));
        }
        layouts.push(CliqueLayout {
            members: c.iter().collect(),
            offset,
        });
        offset += 1usize << c.len();
    }
    let num_vars = offset;
    debug_assert_eq!(num_vars, plan.variable_count);

    let root_idx = cliques
        .iter()
        .position(|c| **c == plan.root || plan.root.is_subset(c))
        .expect("root clique survives augmentation");

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();

    // marginal-matching constraints: every family member inside a clique pins
    // that clique's probability of the all-ones event on it
    for layout in &layouts {
        let members = &layout.members;
        let mut saw_empty = false;
        for sub in 0u64..1 << members.len() {
            let x: Itemset = members
                .iter()
                .enumerate()
                .filter(|(j, _)| sub >> j & 1 == 1)
                .map(|(_, &a)| a)
                .collect();
            let Some(f) = freqs.frequency_of(&x) else {
                continue;
            };
            if x.is_empty() {
                saw_empty = true;
            }
            let mut coeffs = vec![0.0; num_vars];
            for cell in 0u64..1 << members.len() {
                if cell & sub == sub {
                    coeffs[layout.offset + cell as usize] = 1.0;
                }
            }
            rows.push((coeffs, f.value()));
        }
        if !saw_empty {
            let mut coeffs = vec![0.0; num_vars];
            for cell in 0u64..1 << members.len() {
                coeffs[layout.offset + cell as usize] = 1.0;
            }
            rows.push((coeffs, 1.0));
        }
    }

    // separator-consistency constraints between adjacent cliques
    for (a, b, sep) in plan.augmented.edges() {
        let ia = cliques.iter().position(|c| *c == a).unwrap();
        let ib = cliques.iter().position(|c| *c == b).unwrap();
        let sep_members: Vec<AttributeId> = sep.iter().collect();
        for s in 0u64..1 << sep_members.len() {
            let mut coeffs = vec![0.0; num_vars];
            for (idx, sign) in [(ia, 1.0), (ib, -1.0)] {
                let layout = &layouts[idx];
                let positions: Vec<usize> = sep_members
                    .iter()
                    .map(|a| layout.members.iter().position(|m| m == a).unwrap())
                    .collect();
                for cell in 0u64..1 << layout.members.len() {
                    let matches = positions
                        .iter()
                        .enumerate()
                        .all(|(k, &p)| cell >> p & 1 == (s >> k) & 1);
                    if matches {
                        coeffs[layout.offset + cell as usize] += sign;
                    }
                }
            }
            rows.push((coeffs, 0.0));
        }
    }

    let q_mask = layouts[root_idx].mask_of(&plan.restricted_query);
    let mut objective = vec![0.0; num_vars];
    let root_layout = &layouts[root_idx];
    for cell in 0u64..1 << root_layout.members.len() {
        if cell & q_mask == q_mask {
            objective[root_layout.offset + cell as usize] = 1.0;
        }
    }

    let solve_dir = |sense: Sense| {
        let mut p = LpProblem::new(num_vars, objective.clone(), sense);
        for (coeffs, rhs) in &rows {
            p.add_constraint(coeffs.clone(), *rhs);
        }
        lp::solve(&p)
    };
    let min = solve_dir(Sense::Minimize);
    let max = solve_dir(Sense::Maximize);
    Ok((min.value, max.value, (min.status, max.status)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_path_dataset, TransactionDataset};
    use crate::jtree::Regularization;
    use crate::miner::mine_candidates;
    use crate::search::search_tree;

    fn set(m: &[u32]) -> Itemset {
        Itemset::from_members(m.iter().copied())
    }

    #[test]
    fn query_inside_a_clique_is_a_point() {
        let d = generate_path_dataset(6, 200, 0.3, 31).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let out = search_tree(&f, &d, Regularization::None).unwrap();
        let fam = f.restrict_to_forest(&out.forest);
        let clique = out
            .forest
            .cliques()
            .find(|c| c.len() >= 2)
            .expect("some merge happened")
            .clone();
        let q: Itemset = clique.iter().take(2).collect();
        let res = query_bounds(&out.forest, &fam, &q).unwrap();
        let truth = d.frequency(&q).unwrap();
        assert!(res.interval.width() < 1e-6);
        assert!((res.interval.lo - truth).abs() < 1e-6);
    }

    #[test]
    fn singleton_forest_reproduces_marginal_bound_formula() {
        // frequencies 0.8, 0.7, 0.6 over ten rows
        let rows = [
            "111", "111", "111", "111", "111", "111", "110", "100", "000", "000",
        ];
        let d = TransactionDataset::parse_dense(&rows.join("\n")).unwrap();
        assert_eq!(d.frequency(&set(&[0])).unwrap(), 0.8);
        assert_eq!(d.frequency(&set(&[1])).unwrap(), 0.7);
        assert_eq!(d.frequency(&set(&[2])).unwrap(), 0.6);
        let f = mine_candidates(&d, 1.01).unwrap(); // singletons only
        let forest = JunctionForest::singletons(3);
        let fam = f.restrict_to_forest(&forest);
        let q = set(&[0, 1, 2]);
        let res = query_bounds(&forest, &fam, &q).unwrap();
        assert!((res.interval.lo - 0.1).abs() < 1e-6);
        assert!((res.interval.hi - 0.6).abs() < 1e-6);
        let direct = singleton_interval(&[0.8, 0.7, 0.6]);
        assert!((direct.lo - 0.1).abs() < 1e-12);
        assert!((direct.hi - 0.6).abs() < 1e-12);
    }

    #[test]
    fn singleton_interval_examples() {
        let one = singleton_interval(&[0.4]);
        assert_eq!((one.lo, one.hi), (0.4, 0.4));
        let certain = singleton_interval(&[1.0, 1.0]);
        assert_eq!((certain.lo, certain.hi), (1.0, 1.0));
    }

    #[test]
    fn interval_intersection_behaviour() {
        let d = generate_path_dataset(8, 400, 0.3, 32).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let seq = crate::search::search_sequence(&f, &d, Regularization::Bic, None).unwrap();
        assert!(seq.entries.len() >= 2);
        let q = set(&[0, 3, 6]);
        let models: Vec<(&JunctionForest, &CandidateFamily)> = seq
            .entries
            .iter()
            .map(|e| (&e.forest, &e.family))
            .collect();
        let single = query_bounds(models[0].0, models[0].1, &q).unwrap();
        let multi1 = query_multi(&models[..1], &q).unwrap();
        assert!((single.interval.lo - multi1.interval.lo).abs() < 1e-12);
        assert!((single.interval.hi - multi1.interval.hi).abs() < 1e-12);
        let mut prev_width = f64::INFINITY;
        for n in 1..=models.len() {
            let res = query_multi(&models[..n], &q).unwrap();
            assert!(res.interval.width() <= prev_width + 1e-9);
            prev_width = res.interval.width();
            let truth = d.frequency(&q).unwrap();
            assert!(res.interval.contains(truth, 1e-9));
        }
    }

    #[test]
    fn pruning_does_not_change_bounds() {
        for seed in 40..46u64 {
            let d = generate_path_dataset(7, 150, 0.3, seed).unwrap();
            let f = mine_candidates(&d, 0.0).unwrap();
            let out = search_tree(&f, &d, Regularization::Aic).unwrap();
            let fam = f.restrict_to_forest(&out.forest);
            let q = set(&[0, 4, 6]);
            let pruned = query_bounds(&out.forest, &fam, &q).unwrap();
            let unpruned = query_bounds_with(
                &out.forest,
                &fam,
                &q,
                QueryOptions { prune: false },
            )
            .unwrap();
            assert!(
                (pruned.interval.lo - unpruned.interval.lo).abs() < 1e-6,
                "lo {} vs {}",
                pruned.interval.lo,
                unpruned.interval.lo
            );
            assert!((pruned.interval.hi - unpruned.interval.hi).abs() < 1e-6);
            for r in pruned.components.iter().chain(&unpruned.components) {
                assert!(r.plan.augmented.check_running_intersection());
            }
        }
    }

    #[test]
    fn unknown_attribute_is_rejected() {
        let forest = JunctionForest::singletons(3);
        let d = generate_path_dataset(3, 10, 0.3, 33).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let fam = f.restrict_to_forest(&forest);
        assert!(matches!(
            query_bounds(&forest, &fam, &set(&[7])),
            Err(QueryError::UnknownAttribute(7))
        ));
        assert!(matches!(
            query_bounds(&forest, &fam, &Itemset::empty()),
            Err(QueryError::EmptyQuery)
        ));
    }
}
