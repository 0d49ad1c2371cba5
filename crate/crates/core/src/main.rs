use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decomine::dataset::{generate_path_dataset, Itemset, TransactionDataset};
use decomine::jtree::Regularization;
use decomine::miner::{mine_candidates, CandidateFamily};
use decomine::model::{forest_to_dot, load_model, Model, SavedModel};
use decomine::query::{query_multi, singleton_interval};
use decomine::search::{search_sequence, FamilySequence};
use decomine::{fixtures, oracle, query, search};

#[derive(Parser)]
#[command(
    name = "decomine",
    version,
    about = "Junction-forest models of binary transaction data: mine candidate itemsets, \
             build decomposable families, and answer frequency-bound queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Verbose progress records on stderr (also via the DECOMINE_LOG env var)
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    /// whitespace-separated item tokens, one transaction per line
    Tokens,
    /// equal-length lines of 0/1 characters
    Dense,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic chain data: each item flips the previous one with
    /// the given probability
    GenPath {
        #[arg(long)]
        items: usize,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 0.3)]
        flip: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FileFormat::Tokens)]
        format: FileFormat,
    },
    /// Mine the downward-closed family of frequent itemsets
    Mine {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = FileFormat::Tokens)]
        format: FileFormat,
        #[arg(long, default_value_t = 0.0)]
        min_support: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build junction forests from a candidate family
    Build(BuildArgs),
    /// Bound the frequency of an itemset against a saved model
    Query {
        #[arg(long)]
        model: PathBuf,
        /// Use only the first N families of the model
        #[arg(long)]
        families: Option<usize>,
        /// Query attributes as item tokens
        #[arg(required = true)]
        tokens: Vec<String>,
    },
    /// Render a model's forest as DOT
    ExportDot {
        #[arg(long)]
        model: PathBuf,
        /// Index of the family to render
        #[arg(long, default_value_t = 0)]
        family: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the bundled self-checks
    Check {
        #[arg(long, value_enum, default_value_t = CheckScope::All)]
        scope: CheckScope,
        /// Also validate a saved model file
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Tokens)]
    format: FileFormat,
    /// Candidate family file; mined on the fly when absent
    #[arg(long, conflicts_with = "min_support")]
    family: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    min_support: f64,
    #[arg(long, value_enum, default_value_t = Regularization::None)]
    reg: Regularization,
    /// Extract a whole sequence of families instead of one
    #[arg(long)]
    sequence: bool,
    #[arg(long, requires = "sequence")]
    max_families: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CheckScope {
    All,
    Core,
    Tree,
    Query,
}

/// Exit codes: 1 invariant failure, 2 I/O or parse, 3 invalid input family,
/// 4 bad query.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

type CliResult = Result<(), CliError>;

fn io_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::new(2, e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger = env_logger::Builder::from_env(
        env_logger::Env::new().filter("DECOMINE_LOG"),
    );
    if cli.verbose && std::env::var_os("DECOMINE_LOG").is_none() {
        logger.filter_level(log::LevelFilter::Debug);
    }
    let _ = logger.try_init();

    let result = match cli.command {
        Command::GenPath {
            items,
            rows,
            flip,
            seed,
            out,
            format,
        } => cmd_gen_path(items, rows, flip, seed, &out, format),
        Command::Mine {
            data,
            format,
            min_support,
            out,
        } => cmd_mine(&data, format, min_support, &out),
        Command::Build(args) => cmd_build(&args),
        Command::Query {
            model,
            families,
            tokens,
        } => cmd_query(&model, families, &tokens),
        Command::ExportDot { model, family, out } => cmd_export_dot(&model, family, &out),
        Command::Check { scope, model } => cmd_check(scope, model.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn read_dataset(path: &Path, format: FileFormat) -> Result<TransactionDataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(2, format!("{}: {e}", path.display())))?;
    let parsed = match format {
        FileFormat::Tokens => TransactionDataset::parse_tokens(&text),
        FileFormat::Dense => TransactionDataset::parse_dense(&text),
    };
    parsed.map_err(|e| CliError::new(2, format!("{}: {e}", path.display())))
}

fn cmd_gen_path(
    items: usize,
    rows: usize,
    flip: f64,
    seed: u64,
    out: &Path,
    format: FileFormat,
) -> CliResult {
    let d = generate_path_dataset(items, rows, flip, seed).map_err(io_err)?;
    let text = match format {
        FileFormat::Tokens => d.to_tokens_string(),
        FileFormat::Dense => d.to_dense_string(),
    };
    std::fs::write(out, text).map_err(io_err)?;
    println!(
        "wrote {} rows over {} items to {}",
        rows,
        items,
        out.display()
    );
    Ok(())
}

fn cmd_mine(data: &Path, format: FileFormat, min_support: f64, out: &Path) -> CliResult {
    let started = Instant::now();
    let d = read_dataset(data, format)?;
    let family = mine_candidates(&d, min_support).map_err(io_err)?;
    family.save(out).map_err(io_err)?;
    println!(
        "|F| = {} itemsets at min support {} ({} rows, {} attributes, {} forced singletons below support) in {:.2?}",
        family.len(),
        min_support,
        d.n_rows(),
        d.n_attrs(),
        family.below_support_singletons().len(),
        started.elapsed()
    );
    Ok(())
}

fn load_family_for(data: &TransactionDataset, path: &Path) -> Result<CandidateFamily, CliError> {
    let loaded = CandidateFamily::load(path).map_err(|e| match &e {
        decomine::miner::FamilyError::Io(_) => CliError::new(2, e.to_string()),
        _ => CliError::new(3, e.to_string()),
    })?;
    loaded
        .resolve_against(data)
        .map_err(|e| CliError::new(3, e.to_string()))
}

fn cmd_build(args: &BuildArgs) -> CliResult {
    let started = Instant::now();
    let d = read_dataset(&args.data, args.format)?;
    let family = match &args.family {
        Some(path) => load_family_for(&d, path)?,
        None => mine_candidates(&d, args.min_support).map_err(io_err)?,
    };
    let max = if args.sequence {
        args.max_families
    } else {
        Some(1)
    };
    let seq: FamilySequence =
        search_sequence(&family, &d, args.reg, max).map_err(|e| match e {
            search::SearchError::NotCovering | search::SearchError::NotClosed(_) => {
                CliError::new(3, e.to_string())
            }
            other => CliError::new(1, other.to_string()),
        })?;
    let saved = SavedModel::from_sequence(&seq, &d, args.reg).map_err(io_err)?;
    saved.save(&args.out).map_err(io_err)?;

    println!("family  cliques  members  entropy      score");
    for (i, entry) in seq.entries.iter().enumerate() {
        println!(
            "G_{:<5} {:>7} {:>8} {:>10.4} {:>12.4}",
            i + 1,
            entry.forest.n_cliques(),
            entry.family.len(),
            entry.score.entropy_nats,
            entry.score.total
        );
    }
    let mut union: std::collections::BTreeSet<Itemset> = std::collections::BTreeSet::new();
    for entry in &seq.entries {
        union.extend(entry.family.members().map(|(x, _)| x.clone()));
    }
    println!(
        "|F| = {}   first family |G_1| = {}   all families |U G_i| = {}   ({:.2?})",
        family.len(),
        seq.entries[0].family.len(),
        union.len(),
        started.elapsed()
    );
    Ok(())
}

fn load_model_cli(path: &Path) -> Result<Model, CliError> {
    load_model(path).map_err(|e| match &e {
        decomine::model::ModelError::Io(_) | decomine::model::ModelError::Json(_) => {
            CliError::new(2, e.to_string())
        }
        decomine::model::ModelError::Invalid(_) => CliError::new(1, e.to_string()),
    })
}

fn cmd_query(model_path: &Path, families: Option<usize>, tokens: &[String]) -> CliResult {
    let model = load_model_cli(model_path)?;
    let mut q = Itemset::empty();
    for chunk in tokens {
        for tok in chunk.split_whitespace() {
            match model.attribute_names.iter().position(|n| n == tok) {
                Some(i) => q.insert(i as u32),
                None => return Err(CliError::new(4, format!("unknown item token {tok:?}"))),
            }
        }
    }
    if q.is_empty() {
        return Err(CliError::new(4, "query names no items"));
    }
    let n = families
        .unwrap_or(model.families.len())
        .clamp(1, model.families.len());
    let selected: Vec<_> = model.families[..n]
        .iter()
        .map(|f| (&f.forest, &f.family))
        .collect();
    let started = Instant::now();
    let outcome = query_multi(&selected, &q).map_err(|e| CliError::new(1, e.to_string()))?;

    let singleton_freqs: Vec<f64> = q
        .iter()
        .map(|a| {
            model.families[0]
                .family
                .frequency_of(&Itemset::singleton(a))
                .expect("families contain all singletons")
                .value()
        })
        .collect();
    let baseline = singleton_interval(&singleton_freqs);
    let ratio = if baseline.width() > 1e-15 {
        outcome.interval.width() / baseline.width()
    } else if outcome.interval.width() > 1e-15 {
        1.0
    } else {
        0.0
    };

    println!("query: {}", q.label(&model.attribute_names));
    println!("families used: {n} of {}", model.families.len());
    println!(
        "interval: [{:.6}, {:.6}]  width {:.6}",
        outcome.interval.lo,
        outcome.interval.hi,
        outcome.interval.width()
    );
    println!(
        "singleton baseline: [{:.6}, {:.6}]  width {:.6}  ratio r = {:.4}",
        baseline.lo,
        baseline.hi,
        baseline.width(),
        ratio
    );
    for c in &outcome.components {
        println!(
            "  component {}: alpha {:.6}  beta {:.6}  vars {}  status {}/{}",
            c.plan.component_index,
            c.alpha,
            c.beta,
            c.plan.variable_count,
            c.statuses.0,
            c.statuses.1
        );
    }
    if outcome.degraded {
        eprintln!("warning: a component program was numerically unstable; its bounds were widened to [0, 1]");
    }
    log::debug!("query took {:.2?}", started.elapsed());
    Ok(())
}

fn cmd_export_dot(model_path: &Path, family: usize, out: &Path) -> CliResult {
    let model = load_model_cli(model_path)?;
    let fam = model
        .families
        .get(family)
        .ok_or_else(|| CliError::new(2, format!("model has {} families", model.families.len())))?;
    let dot = forest_to_dot(&fam.forest, &model.attribute_names);
    std::fs::write(out, dot).map_err(io_err)?;
    println!(
        "wrote {} cliques, {} edges to {}",
        fam.forest.n_cliques(),
        fam.forest.n_edges(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// self checks

fn cmd_check(scope: CheckScope, model: Option<&Path>) -> CliResult {
    let mut failures = 0usize;
    let mut run = |name: &str, wanted: bool, f: &dyn Fn() -> Result<(), String>| {
        if !wanted {
            return;
        }
        match f() {
            Ok(()) => println!("check {name}: ok"),
            Err(msg) => {
                println!("check {name}: FAILED");
                eprintln!("  {msg}");
                failures += 1;
            }
        }
    };
    let core = matches!(scope, CheckScope::All | CheckScope::Core);
    let tree = matches!(scope, CheckScope::All | CheckScope::Tree);
    let query = matches!(scope, CheckScope::All | CheckScope::Query);

    run("model-normalization", core, &check_model_normalization);
    run("entropy-identity", core, &check_entropy_identity);
    run("merge-entropy-drops", tree, &check_entropy_drops);
    run("documented-construction", tree, &check_worked_example);
    run("query-reference-equivalence", query, &check_query_equivalence);
    run("marginal-bound-formula", query, &check_frechet);

    if let Some(path) = model {
        run("model-file", true, &|| {
            load_model(path).map(|_| ()).map_err(|e| e.to_string())
        });
    }
    if failures > 0 {
        Err(CliError::new(1, format!("{failures} check(s) failed")))
    } else {
        Ok(())
    }
}

fn check_model_normalization() -> Result<(), String> {
    let fx = fixtures::showcase();
    let table = oracle::enumerate_tree_distribution(&fx.forest, &fx.dataset)
        .map_err(|e| e.to_string())?;
    let total: f64 = table.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("model mass sums to {total}"));
    }
    for clique in fx.forest.cliques() {
        let marginal = fx.dataset.project(clique).map_err(|e| e.to_string())?;
        for (pattern, count) in marginal.counts() {
            let got = oracle::table_marginal(&table, clique, pattern);
            let want = count as f64 / fx.dataset.n_rows() as f64;
            if (got - want).abs() > 1e-9 {
                return Err(format!(
                    "marginal mismatch on {clique:?} pattern {pattern:#b}: {got} vs {want}"
                ));
            }
        }
    }
    Ok(())
}

fn check_entropy_identity() -> Result<(), String> {
    let fx = fixtures::showcase();
    let table = oracle::enumerate_tree_distribution(&fx.forest, &fx.dataset)
        .map_err(|e| e.to_string())?;
    let direct = oracle::table_entropy(&table);
    let tree = decomine::tree_entropy(&fx.forest, &fx.dataset).map_err(|e| e.to_string())?;
    if (direct - tree).abs() > 1e-9 {
        return Err(format!("entropy {direct} vs clique sum {tree}"));
    }
    Ok(())
}

fn check_entropy_drops() -> Result<(), String> {
    for seed in 0..3u64 {
        let d = generate_path_dataset(6, 150, 0.3, 17 + seed).map_err(|e| e.to_string())?;
        let f = mine_candidates(&d, 0.0).map_err(|e| e.to_string())?;
        let out = search::TreeSearch::new(&f, &d, Regularization::None)
            .map_err(|e| e.to_string())?
            .verify_invariants(true)
            .run()
            .map_err(|e| e.to_string())?;
        for e in &out.report.accepted {
            let drop = e.entropy_before - e.entropy_after;
            if (drop - e.weight).abs() > 1e-9 {
                return Err(format!(
                    "merge of {:?} and {:?}: entropy drop {drop}, weight {}",
                    e.x, e.y, e.weight
                ));
            }
        }
    }
    Ok(())
}

fn check_worked_example() -> Result<(), String> {
    let fx = fixtures::worked_example();
    let out = search::TreeSearch::resume(
        fx.initial_forest.clone(),
        &fx.family,
        &fx.dataset,
        Regularization::None,
        2,
    )
    .map_err(|e| e.to_string())?
    .verify_invariants(true)
    .run()
    .map_err(|e| e.to_string())?;
    let cliques: Vec<Itemset> = out.forest.cliques().cloned().collect();
    if cliques != fx.final_cliques {
        return Err(format!("final cliques {cliques:?}"));
    }
    let excluded_one_triple = out.report.excluded.len() == 1 && out.report.excluded[0].len() == 3;
    if !excluded_one_triple {
        return Err(format!("excluded sets {:?}", out.report.excluded));
    }
    Ok(())
}

fn check_query_equivalence() -> Result<(), String> {
    let fx = fixtures::showcase();
    let fam = fx.family.restrict_to_forest(&fx.forest);
    for q_members in [vec![0u32, 2], vec![0, 3, 4], vec![4, 5], vec![0, 5]] {
        let q = Itemset::from_members(q_members.iter().copied());
        let fast = query::query_bounds(&fx.forest, &fam, &q).map_err(|e| e.to_string())?;
        let slow = oracle::full_lp_bounds(&fam, &q, fx.dataset.n_attrs())
            .map_err(|e| e.to_string())?;
        if (fast.interval.lo - slow.lo).abs() > 1e-6 || (fast.interval.hi - slow.hi).abs() > 1e-6
        {
            return Err(format!(
                "bounds for {q:?}: [{}, {}] vs reference [{}, {}]",
                fast.interval.lo, fast.interval.hi, slow.lo, slow.hi
            ));
        }
    }
    let qs = fixtures::query_showcase();
    let fam = qs.family.restrict_to_forest(&qs.forest);
    let out = query::query_bounds(&qs.forest, &fam, &qs.query).map_err(|e| e.to_string())?;
    let vars: usize = out.components.iter().map(|c| c.plan.variable_count).sum();
    if vars != qs.expected_variable_count {
        return Err(format!(
            "plan uses {vars} variables, expected {}",
            qs.expected_variable_count
        ));
    }
    Ok(())
}

fn check_frechet() -> Result<(), String> {
    let direct = singleton_interval(&[0.8, 0.7, 0.6]);
    if (direct.lo - 0.1).abs() > 1e-12 || (direct.hi - 0.6).abs() > 1e-12 {
        return Err(format!("closed form gave [{}, {}]", direct.lo, direct.hi));
    }
    Ok(())
}
