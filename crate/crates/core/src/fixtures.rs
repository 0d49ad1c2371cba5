//! Bundled fixtures used by the `check` command and the test suites.

use crate::dataset::{Itemset, TransactionDataset};
use crate::jtree::JunctionForest;
use crate::miner::CandidateFamily;

fn set(members: &[u32]) -> Itemset {
    Itemset::from_members(members.iter().copied())
}

fn named_path_data(names: &[&str], n_rows: usize, seed: u64) -> TransactionDataset {
    let gen = crate::dataset::generate_path_dataset(names.len(), n_rows, 0.3, seed).unwrap();
    let rows: Vec<Vec<bool>> = (0..gen.n_rows()).map(|i| gen.row_bools(i)).collect();
    TransactionDataset::from_rows(names.iter().map(|s| s.to_string()).collect(), &rows).unwrap()
}

/// Six attributes a..f with the chain tree {ab}-{bcd}-{bcf}-{ce}, whose model
/// factorises as p(ab) p(bcd) p(bcf) p(ce) / (p(b) p(bc) p(c)).
pub struct Showcase {
    pub dataset: TransactionDataset,
    pub forest: JunctionForest,
    pub family: CandidateFamily,
}

pub fn showcase() -> Showcase {
    let dataset = named_path_data(&["a", "b", "c", "d", "e", "f"], 200, 7);
    let forest = JunctionForest::from_parts(
        vec![set(&[0, 1]), set(&[1, 2, 3]), set(&[1, 2, 5]), set(&[2, 4])],
        vec![
            (set(&[0, 1]), set(&[1, 2, 3])),
            (set(&[1, 2, 3]), set(&[1, 2, 5])),
            (set(&[1, 2, 5]), set(&[2, 4])),
        ],
    )
    .unwrap();
    let family = CandidateFamily::from_forest_closure(&forest, &dataset).unwrap();
    Showcase {
        dataset,
        forest,
        family,
    }
}

/// A five-attribute construction whose second level replays a documented
/// merge order: (ab, bc) first, then the spawned (ac, cd), while (bc, cd) is
/// popped last and rejected, ruling out bcd.
pub struct WorkedExample {
    pub dataset: TransactionDataset,
    pub family: CandidateFamily,
    /// The level-1 result the replay starts from: cliques ab, bc, cd, ce.
    pub initial_forest: JunctionForest,
    /// Cliques of the final tree: abc, acd, ce.
    pub final_cliques: Vec<Itemset>,
}

pub fn worked_example() -> WorkedExample {
    // Rows tuned so that w(ab,bc) > w(bc,cd) and w(ac,cd) > w(bc,cd), with
    // margins far above float noise.
    let rows = [
        "00001", "01110", "01001", "00111", "01000", "10110", "00101", "11001", "11001",
        "10111", "00100", "11010",
    ];
    let dataset = {
        let gen = TransactionDataset::parse_dense(&rows.join("\n")).unwrap();
        let names = vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()];
        let rows: Vec<Vec<bool>> = (0..gen.n_rows()).map(|i| gen.row_bools(i)).collect();
        TransactionDataset::from_rows(names, &rows).unwrap()
    };
    let sets = [
        vec![0u32],
        vec![1],
        vec![2],
        vec![3],
        vec![4],
        vec![0, 1],
        vec![0, 2],
        vec![0, 3],
        vec![1, 2],
        vec![1, 3],
        vec![2, 3],
        vec![2, 4],
        vec![0, 1, 2],
        vec![0, 2, 3],
        vec![1, 2, 3],
    ];
    let family = CandidateFamily::from_itemsets(
        &dataset,
        sets.iter().map(|m| Itemset::from_members(m.iter().copied())),
    )
    .unwrap();
    let initial_forest = JunctionForest::from_parts(
        vec![set(&[0, 1]), set(&[1, 2]), set(&[2, 3]), set(&[2, 4])],
        vec![
            (set(&[0, 1]), set(&[1, 2])),
            (set(&[1, 2]), set(&[2, 3])),
            (set(&[1, 2]), set(&[2, 4])),
        ],
    )
    .unwrap();
    WorkedExample {
        dataset,
        family,
        initial_forest,
        final_cliques: vec![set(&[0, 1, 2]), set(&[0, 2, 3]), set(&[2, 4])],
    }
}

/// Eight attributes a..h with a junction tree built for exercising the query
/// planner: pruning drops {fh}, the attribute e collapses, and the chosen
/// plan uses exactly 40 variables against 2^8 = 256 joint cells for the
/// query {a, d, g}.
pub struct QueryShowcase {
    pub dataset: TransactionDataset,
    pub forest: JunctionForest,
    pub family: CandidateFamily,
    pub query: Itemset,
    pub expected_variable_count: usize,
}

pub fn query_showcase() -> QueryShowcase {
    let dataset = named_path_data(&["a", "b", "c", "d", "e", "f", "g", "h"], 160, 11);
    let forest = JunctionForest::from_parts(
        vec![
            set(&[0, 1]), // ab
            set(&[1, 2]), // bc
            set(&[2, 4]), // ce
            set(&[2, 3]), // cd
            set(&[2, 5]), // cf
            set(&[5, 6]), // fg
            set(&[5, 7]), // fh
        ],
        vec![
            (set(&[0, 1]), set(&[1, 2])),
            (set(&[1, 2]), set(&[2, 4])),
            (set(&[2, 4]), set(&[2, 3])),
            (set(&[2, 4]), set(&[2, 5])),
            (set(&[2, 5]), set(&[5, 6])),
            (set(&[5, 6]), set(&[5, 7])),
        ],
    )
    .unwrap();
    let family = CandidateFamily::from_forest_closure(&forest, &dataset).unwrap();
    QueryShowcase {
        dataset,
        forest,
        family,
        query: set(&[0, 3, 6]),
        expected_variable_count: 40,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        let s = showcase();
        assert!(s.forest.check_running_intersection());
        assert!(s.family.check_downward_closed().is_ok());

        let w = worked_example();
        assert!(w.initial_forest.check_running_intersection());
        assert!(w.family.check_downward_closed().is_ok());
        assert_eq!(w.family.len(), 16); // 15 sets plus the empty set

        let q = query_showcase();
        assert!(q.forest.check_running_intersection());
        assert_eq!(q.forest.n_cliques(), 7);
    }

    #[test]
    fn worked_example_weights_are_ordered() {
        let w = worked_example();
        let d = &w.dataset;
        let wt = |x: &[u32], y: &[u32]| {
            crate::search::edge_weight(d, &set(x), &set(y)).unwrap()
        };
        let ab_bc = wt(&[0, 1], &[1, 2]);
        let bc_cd = wt(&[1, 2], &[2, 3]);
        let ac_cd = wt(&[0, 2], &[2, 3]);
        assert!(ab_bc > bc_cd + 0.01, "{ab_bc} vs {bc_cd}");
        assert!(ac_cd > bc_cd + 0.01, "{ac_cd} vs {bc_cd}");
        assert!(bc_cd > 0.01);
    }
}
