//! End-to-end acceptance suite. Each test prints one pass line when it
//! completes; run with `cargo test --test acceptance -- --nocapture` to see
//! them. Tolerances are pinned in the assertions.

use std::time::Instant;

use decomine::dataset::{generate_path_dataset, Itemset, TransactionDataset};
use decomine::jtree::{tree_entropy, Regularization};
use decomine::miner::{mine_candidates, CandidateFamily};
use decomine::oracle;
use decomine::query::{self, query_bounds};
use decomine::search::{search_sequence, search_tree, TreeSearch};
use decomine::{fixtures, tree_distribution_eval};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REGS: [Regularization; 4] = [
    Regularization::None,
    Regularization::Aic,
    Regularization::Bic,
    Regularization::Mdl,
];

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }
    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
    fn chance(&mut self, p: f64) -> bool {
        (self.0.next_u64() as f64) < p * 2f64.powi(64)
    }
}

/// Random datasets with varied dependence structure: chains, independent
/// biased columns, interleaved chains, and noisy prototype mixtures.
fn random_dataset(rng: &mut Rng, k: usize, n: usize) -> TransactionDataset {
    let names = decomine::dataset::attribute_names(k);
    let style = rng.below(4);
    let mut rows = Vec::with_capacity(n);
    match style {
        0 => {
            let flip = 0.1 + 0.4 * (rng.below(100) as f64) / 100.0;
            let seed = rng.0.next_u64();
            let d = generate_path_dataset(k, n, flip, seed).unwrap();
            return d;
        }
        1 => {
            let biases: Vec<f64> = (0..k).map(|_| 0.15 + 0.7 * (rng.below(100) as f64) / 100.0).collect();
            for _ in 0..n {
                rows.push((0..k).map(|j| rng.chance(biases[j])).collect());
            }
        }
        2 => {
            // two interleaved chains
            for _ in 0..n {
                let mut row = vec![false; k];
                for parity in 0..2usize {
                    let mut prev = rng.chance(0.5);
                    let mut j = parity;
                    while j < k {
                        row[j] = prev;
                        prev ^= rng.chance(0.25);
                        j += 2;
                    }
                }
                rows.push(row);
            }
        }
        _ => {
            let protos: Vec<Vec<bool>> = (0..3)
                .map(|_| (0..k).map(|_| rng.chance(0.5)).collect())
                .collect();
            for _ in 0..n {
                let p = &protos[rng.below(3)];
                rows.push(p.iter().map(|&b| b ^ rng.chance(0.3)).collect());
            }
        }
    }
    TransactionDataset::from_rows(names, &rows).unwrap()
}

/// Mines at an escalating threshold until the family is small enough for the
/// exhaustive reference programs.
fn bounded_family(d: &TransactionDataset, mut sigma: f64) -> CandidateFamily {
    loop {
        let f = mine_candidates(d, sigma).unwrap();
        if f.len() <= 600 || sigma >= 1.0 {
            return f;
        }
        sigma = (sigma + 0.1).min(1.0);
    }
}

fn random_query(rng: &mut Rng, k: usize, max_len: usize) -> Itemset {
    let len = 1 + rng.below(max_len);
    let mut q = Itemset::empty();
    while q.len() < len.min(k) {
        q.insert(rng.below(k) as u32);
    }
    q
}

#[test]
fn a01_query_bounds_match_exhaustive_reference() {
    let started = Instant::now();
    let mut rng = Rng::new(0xA01);
    for case in 0..200usize {
        let k = 4 + rng.below(7); // 4..=10
        let n = 40 + rng.below(461); // 40..=500
        let d = random_dataset(&mut rng, k, n);
        let sigma = f64::max([0.0, 0.05, 0.15][rng.below(3)], if k > 8 { 0.05 } else { 0.0 });
        let family = bounded_family(&d, sigma);
        let reg = REGS[case % 4];
        let out = search_tree(&family, &d, reg).unwrap();
        let g = family.restrict_to_forest(&out.forest);
        let q = random_query(&mut rng, k, 4);

        let fast = query_bounds(&out.forest, &g, &q).unwrap();
        let slow = oracle::full_lp_bounds(&g, &q, k).unwrap();
        assert!(
            (fast.interval.lo - slow.lo).abs() < 1e-6,
            "case {case}: lower bound {} vs reference {} (q = {q:?}, reg = {reg})",
            fast.interval.lo,
            slow.lo
        );
        assert!(
            (fast.interval.hi - slow.hi).abs() < 1e-6,
            "case {case}: upper bound {} vs reference {} (q = {q:?}, reg = {reg})",
            fast.interval.hi,
            slow.hi
        );
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "200 instances took {elapsed:.2?}"
    );
    println!("acceptance 01 query-reference equivalence (200 instances in {elapsed:.2?}): PASS");
}

#[test]
fn a02_decomposable_model_is_a_sound_distribution() {
    let mut rng = Rng::new(0xA02);
    for case in 0..50usize {
        let k = 4 + rng.below(7);
        let n = 30 + rng.below(200);
        let d = random_dataset(&mut rng, k, n);
        let family = bounded_family(&d, 0.0);
        let out = search_tree(&family, &d, REGS[case % 4]).unwrap();
        let t = &out.forest;

        let table = oracle::enumerate_tree_distribution(t, &d).unwrap();
        let total: f64 = table.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "case {case}: mass {total}");

        for clique in t.cliques() {
            let empirical = d.project(clique).unwrap();
            for (pattern, count) in empirical.counts() {
                let got = oracle::table_marginal(&table, clique, pattern);
                let want = count as f64 / n as f64;
                assert!(
                    (got - want).abs() < 1e-9,
                    "case {case}: clique {clique:?} marginal {got} vs {want}"
                );
            }
        }

        let h_table = oracle::table_entropy(&table);
        let h_tree = tree_entropy(t, &d).unwrap();
        assert!(
            (h_table - h_tree).abs() < 1e-9,
            "case {case}: entropy {h_table} vs {h_tree}"
        );

        // log-likelihood identity, checked both ways
        let mut ll = 0.0;
        for i in 0..d.n_rows() {
            ll += tree_distribution_eval(t, &d, &d.row_bools(i)).unwrap().ln();
        }
        assert!(
            (ll + n as f64 * h_tree).abs() < 1e-6,
            "case {case}: row sum {ll} vs -N*H {}",
            -(n as f64) * h_tree
        );
    }
    println!("acceptance 02 model soundness (50 forests): PASS");
}

#[test]
fn a03_merge_entropy_drops_equal_edge_weights() {
    let mut rng = Rng::new(0xA03);
    let mut merges = 0usize;
    for case in 0..20usize {
        let k = 4 + rng.below(5);
        let n = 50 + rng.below(300);
        let d = random_dataset(&mut rng, k, n);
        let family = bounded_family(&d, 0.0);
        // verify_invariants re-checks running intersection after every
        // mutation; any violation aborts the run
        let out = TreeSearch::new(&family, &d, REGS[case % 4])
            .unwrap()
            .verify_invariants(true)
            .run()
            .unwrap();
        for e in &out.report.accepted {
            let drop = e.entropy_before - e.entropy_after;
            assert!(
                (drop - e.weight).abs() < 1e-9,
                "case {case}: merge {:?}+{:?} drop {drop} weight {}",
                e.x,
                e.y,
                e.weight
            );
            merges += 1;
        }
    }
    assert!(merges > 20, "only {merges} merges across all runs");
    println!("acceptance 03 entropy drops on {merges} accepted merges: PASS");
}

#[test]
fn a04_level_one_weight_matches_kruskal_reference() {
    let mut rng = Rng::new(0xA04);
    for case in 0..50usize {
        let k = 4 + rng.below(9); // 4..=12
        let n = 30 + rng.below(250);
        let mut d = random_dataset(&mut rng, k, n);
        if case % 5 == 0 {
            // duplicate a column to force exact weight ties
            let mut rows: Vec<Vec<bool>> = (0..d.n_rows()).map(|i| d.row_bools(i)).collect();
            for row in &mut rows {
                let v = row[0];
                row[k - 1] = v;
            }
            d = TransactionDataset::from_rows(d.names().to_vec(), &rows).unwrap();
        }
        let family = bounded_family(&d, 0.0);
        let out = search_tree(&family, &d, Regularization::None).unwrap();
        let total: f64 = out
            .report
            .accepted
            .iter()
            .filter(|e| e.level == 1)
            .map(|e| e.weight)
            .sum();
        let reference = oracle::chow_liu_reference(&d, &family, Regularization::None);
        assert!(
            (total - reference.total_weight).abs() < 1e-9,
            "case {case}: level-1 weight {total} vs reference {}",
            reference.total_weight
        );
    }
    println!("acceptance 04 level-1 totals match the spanning-forest reference: PASS");
}

#[test]
fn a05_chain_data_recovers_adjacent_pairs() {
    let started = Instant::now();
    let mut recovered = 0usize;
    for seed in 0..10u64 {
        let d = generate_path_dataset(8, 1000, 0.3, seed).unwrap();
        let family = mine_candidates(&d, 0.0).unwrap();
        let out = search_tree(&family, &d, Regularization::Bic).unwrap();
        let cliques: Vec<Itemset> = out.forest.cliques().cloned().collect();
        let chain: Vec<Itemset> = (0..7u32)
            .map(|i| Itemset::from_members([i, i + 1]))
            .collect();
        if cliques == chain {
            recovered += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        recovered >= 8,
        "adjacent-pair chain recovered for only {recovered}/10 seeds"
    );
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:.2?}");
    println!(
        "acceptance 05 chain recovery ({recovered}/10 seeds in {elapsed:.2?}): PASS"
    );
}

#[test]
fn a06_sequence_scores_never_decrease() {
    let mut rng = Rng::new(0xA06);
    let mut sequences = 0usize;
    for case in 0..12usize {
        let k = 5 + rng.below(4);
        let n = 100 + rng.below(400);
        let d = random_dataset(&mut rng, k, n);
        let family = bounded_family(&d, 0.0);
        let reg = REGS[case % 4];
        let seq = search_sequence(&family, &d, reg, None).unwrap();
        for w in seq.entries.windows(2) {
            assert!(
                w[0].score.total <= w[1].score.total + 1e-9,
                "case {case} ({reg}): score {} then {}",
                w[0].score.total,
                w[1].score.total
            );
        }
        sequences += 1;
    }
    println!("acceptance 06 monotone scores across {sequences} sequences: PASS");
}

#[test]
fn a07_plan_variable_counts_stay_bounded() {
    // documented showcase: 40 variables against 2^8 = 256 joint cells
    let qs = fixtures::query_showcase();
    let fam = qs.family.restrict_to_forest(&qs.forest);
    let out = query_bounds(&qs.forest, &fam, &qs.query).unwrap();
    let vars: usize = out.components.iter().map(|c| c.plan.variable_count).sum();
    assert_eq!(vars, 40);
    assert_eq!(1usize << qs.dataset.n_attrs(), 256);

    let mut rng = Rng::new(0xA07);
    for case in 0..40usize {
        let k = 5 + rng.below(6);
        let n = 40 + rng.below(300);
        let d = random_dataset(&mut rng, k, n);
        let family = bounded_family(&d, 0.0);
        let out = search_tree(&family, &d, REGS[case % 4]).unwrap();
        let g = family.restrict_to_forest(&out.forest);
        let q = random_query(&mut rng, k, 4);
        let res = query_bounds(&out.forest, &g, &q).unwrap();
        let bound = (1usize << q.len()) * g.len() * k;
        for c in &res.components {
            assert!(
                c.plan.variable_count <= bound,
                "case {case}: {} vars exceeds 2^|Q| |G| |A| = {bound}",
                c.plan.variable_count
            );
        }
    }
    println!("acceptance 07 variable-count bound (40 vs 256 showcase): PASS");
}

#[test]
fn a08_intervals_contain_the_truth_and_tighten() {
    let mut rng = Rng::new(0xA08);
    let mut queries = 0usize;
    while queries < 500 {
        let k = 5 + rng.below(5);
        let n = 60 + rng.below(300);
        let d = random_dataset(&mut rng, k, n);
        let family = bounded_family(&d, 0.0);
        let seq = search_sequence(&family, &d, REGS[rng.below(4)], None).unwrap();
        let models: Vec<_> = seq
            .entries
            .iter()
            .map(|e| (&e.forest, &e.family))
            .collect();
        for _ in 0..25 {
            let q = random_query(&mut rng, k, 5);
            let truth = d.frequency(&q).unwrap();
            let mut prev_width = f64::INFINITY;
            for prefix in 1..=models.len() {
                let res = query::query_multi(&models[..prefix], &q).unwrap();
                assert!(
                    res.interval.contains(truth, 1e-9),
                    "fr {truth} outside [{}, {}] with {prefix} families",
                    res.interval.lo,
                    res.interval.hi
                );
                assert!(
                    res.interval.width() <= prev_width + 1e-9,
                    "width grew from {prev_width} to {}",
                    res.interval.width()
                );
                prev_width = res.interval.width();
            }
            queries += 1;
        }
    }
    println!("acceptance 08 truth containment over {queries} queries: PASS");
}

#[test]
fn a09_documented_construction_replays_exactly() {
    let fx = fixtures::worked_example();
    let out = TreeSearch::resume(
        fx.initial_forest.clone(),
        &fx.family,
        &fx.dataset,
        Regularization::None,
        2,
    )
    .unwrap()
    .verify_invariants(true)
    .run()
    .unwrap();

    let set = |m: &[u32]| Itemset::from_members(m.iter().copied());

    // merge order: (ab, bc) then the spawned (ac, cd)
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
    let round = &out.report.rounds[0];
    // ac spawned by the first merge, ad by the second
    assert_eq!(round.spawned, vec![set(&[0, 2]), set(&[0, 3])]);
    // the cycle through acd is broken by dropping (bc, cd)
    assert!(round.removed_edges.contains(&(set(&[1, 2]), set(&[2, 3]))));
    // the round's purge set: every absorbed non-maximal clique
    assert_eq!(
        round.absorbed,
        vec![
            set(&[0, 1]),
            set(&[0, 2]),
            set(&[0, 3]),
            set(&[1, 2]),
            set(&[2, 3]),
        ]
    );
    assert_eq!(
        out.forest.cliques().cloned().collect::<Vec<_>>(),
        fx.final_cliques
    );

    // the only candidate ruled out is bcd, so the surviving family is the
    // input family minus that single triple
    assert_eq!(out.report.excluded, vec![set(&[1, 2, 3])]);
    let survivors = fx
        .family
        .filter_members(|x| !out.report.excluded.contains(x));
    assert_eq!(survivors.len(), fx.family.len() - 1);
    assert!(!survivors.contains(&set(&[1, 2, 3])));
    for (x, _) in fx.family.members() {
        if *x != set(&[1, 2, 3]) {
            assert!(survivors.contains(x));
        }
    }
    println!("acceptance 09 documented construction trace: PASS");
}

#[test]
fn a10_engineering_scale_targets() {
    let build_start = Instant::now();
    let d = generate_path_dataset(30, 5000, 0.3, 0).unwrap();
    let family = mine_candidates(&d, 0.09).unwrap();
    assert!(
        (3_000..=30_000).contains(&family.len()),
        "|F| = {} is far from the intended 10^4 scale",
        family.len()
    );
    let out = search_tree(&family, &d, Regularization::Bic).unwrap();
    let build_elapsed = build_start.elapsed();
    assert!(
        build_elapsed.as_secs_f64() < 60.0,
        "mine + search took {build_elapsed:.2?}"
    );

    let g = family.restrict_to_forest(&out.forest);
    let mut rng = Rng::new(0xA10);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let mut q = Itemset::empty();
        while q.len() < 5 {
            q.insert(rng.below(30) as u32);
        }
        let t = Instant::now();
        let res = query_bounds(&out.forest, &g, &q).unwrap();
        let dt = t.elapsed().as_secs_f64();
        worst = worst.max(dt);
        assert!(dt < 1.0, "query {q:?} took {dt:.3}s");
        let truth = d.frequency(&q).unwrap();
        assert!(res.interval.contains(truth, 1e-9));
    }
    println!(
        "acceptance 10 engineering targets (|F| = {}, build {build_elapsed:.2?}, slowest query {worst:.3}s): PASS",
        family.len()
    );
}
