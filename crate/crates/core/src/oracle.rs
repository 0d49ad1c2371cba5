//! Brute-force reference implementations used by tests and the `check`
//! command. These deliberately avoid the main code paths: entropies are
//! recounted from raw rows, the spanning forest is an independent Kruskal,
//! and the full-joint program is assembled over all 2^K cells. Only the
//! simplex engine is shared.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::dataset::{AttributeId, DataError, Itemset, TransactionDataset};
use crate::jtree::{JunctionForest, Regularization};
use crate::lp::{self, LpProblem, LpStatus, Sense};
use crate::miner::CandidateFamily;
use crate::query::QueryInterval;
use crate::search::gate_threshold;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("universe of {0} attributes is too large for exhaustive search")]
    TooLarge(usize),
    #[error("full-joint program reported {0}")]
    Solver(LpStatus),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Empirical counts over `x`, recounted directly from rows.
fn raw_counts(d: &TransactionDataset, x: &Itemset) -> HashMap<u64, u64> {
    let members: Vec<AttributeId> = x.iter().collect();
    let mut counts = HashMap::new();
    for row in 0..d.n_rows() {
        let mut pattern = 0u64;
        for (j, &a) in members.iter().enumerate() {
            if d.bit(row, a) {
                pattern |= 1 << j;
            }
        }
        *counts.entry(pattern).or_insert(0u64) += 1;
    }
    counts
}

fn entropy_of_counts(counts: &HashMap<u64, u64>, n: f64) -> f64 {
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Bounds on fr(q) via the program over all 2^K joint cells with one
/// equality per family member. The reference that the component-wise planner
/// is checked against.
pub fn full_lp_bounds(
    family: &CandidateFamily,
    q: &Itemset,
    k: usize,
) -> Result<QueryInterval, OracleError> {
    if k > 20 {
        return Err(OracleError::TooLarge(k));
    }
    let cells = 1usize << k;
    let mask_of = |x: &Itemset| -> u64 {
        let mut m = 0u64;
        for a in x.iter() {
            m |= 1 << a;
        }
        m
    };
    let q_mask = mask_of(q);
    let mut objective = vec![0.0; cells];
    for (cell, slot) in objective.iter_mut().enumerate() {
        if cell as u64 & q_mask == q_mask {
            *slot = 1.0;
        }
    }
    let solve_dir = |sense: Sense| -> Result<f64, OracleError> {
        let mut p = LpProblem::new(cells, objective.clone(), sense);
        let mut sorted: Vec<(&Itemset, f64)> = family
            .members()
            .map(|(x, f)| (x, f.value()))
            .collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        for (x, f) in sorted {
            let m = mask_of(x);
            let coeffs: Vec<f64> = (0..cells)
                .map(|cell| if cell as u64 & m == m { 1.0 } else { 0.0 })
                .collect();
            p.add_constraint(coeffs, f);
        }
        let s = lp::solve(&p);
        if s.status != LpStatus::Optimal {
            return Err(OracleError::Solver(s.status));
        }
        Ok(s.value)
    };
    let lo = solve_dir(Sense::Minimize)?;
    let hi = solve_dir(Sense::Maximize)?;
    Ok(QueryInterval::new_clamped(lo, hi))
}

/// The decomposable model evaluated at every one of the 2^K joint vectors.
pub fn enumerate_tree_distribution(
    t: &JunctionForest,
    d: &TransactionDataset,
) -> Result<Vec<f64>, OracleError> {
    let k = d.n_attrs();
    if k > 12 {
        return Err(OracleError::TooLarge(k));
    }
    let n = d.n_rows() as f64;
    let factors: Vec<(Vec<AttributeId>, HashMap<u64, u64>, i32)> = t
        .cliques()
        .map(|c| (c.iter().collect(), raw_counts(d, c), 1))
        .chain(
            t.edges()
                .map(|(_, _, sep)| (sep.iter().collect(), raw_counts(d, &sep), -1)),
        )
        .collect();
    let mut table = Vec::with_capacity(1 << k);
    for cell in 0u64..1 << k {
        let mut num = 1.0;
        let mut den = 1.0;
        let mut zero = false;
        for (members, counts, dir) in &factors {
            let mut pattern = 0u64;
            for (j, &a) in members.iter().enumerate() {
                if cell >> a & 1 == 1 {
                    pattern |= 1 << j;
                }
            }
            let p = counts.get(&pattern).copied().unwrap_or(0) as f64 / n;
            if *dir == 1 {
                if p == 0.0 {
                    zero = true;
                    break;
                }
                num *= p;
            } else {
                den *= p;
            }
        }
        table.push(if zero { 0.0 } else { num / den });
    }
    Ok(table)
}

/// Marginal of an enumerated joint table over `x` at its all-ones pattern.
pub fn table_marginal(table: &[f64], x: &Itemset, pattern: u64) -> f64 {
    let members: Vec<AttributeId> = x.iter().collect();
    let mut total = 0.0;
    for (cell, p) in table.iter().enumerate() {
        let mut proj = 0u64;
        for (j, &a) in members.iter().enumerate() {
            if cell as u64 >> a & 1 == 1 {
                proj |= 1 << j;
            }
        }
        if proj == pattern {
            total += p;
        }
    }
    total
}

pub fn table_entropy(table: &[f64]) -> f64 {
    -table
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

#[derive(Debug)]
pub struct ChowLiuReference {
    pub total_weight: f64,
    pub edges: BTreeSet<(AttributeId, AttributeId)>,
}

/// Maximum-weight spanning forest over pairwise mutual information, via an
/// independent Kruskal: candidate edges are the attribute pairs present in
/// the family and passing the level-1 admissibility gate.
pub fn chow_liu_reference(
    d: &TransactionDataset,
    family: &CandidateFamily,
    reg: Regularization,
) -> ChowLiuReference {
    let k = d.n_attrs() as u32;
    let n = d.n_rows() as f64;
    let threshold = gate_threshold(reg, 1, d.n_rows() as u64);
    let h = |x: &Itemset| entropy_of_counts(&raw_counts(d, x), n);
    let mut edges: Vec<(f64, u32, u32)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let pair = Itemset::from_members([i, j]);
            if !family.contains(&pair) {
                continue;
            }
            let w = (h(&Itemset::singleton(i)) + h(&Itemset::singleton(j)) - h(&pair)).max(0.0);
            if n * w >= threshold {
                edges.push((w, i, j));
            }
        }
    }
    edges.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });
    let mut parent: Vec<u32> = (0..k).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    let mut total = 0.0;
    let mut chosen = BTreeSet::new();
    for (w, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri as usize] = rj;
            total += w;
            chosen.insert((i, j));
        }
    }
    ChowLiuReference {
        total_weight: total,
        edges: chosen,
    }
}
