//! Binary transaction data, itemsets over a fixed attribute universe, and the
//! empirical marginal distributions everything else is computed from.

use std::collections::HashMap;
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;
use thiserror::Error;

/// Dense index of an attribute (dataset column). The dataset's name table maps
/// an `AttributeId` to its display token.
pub type AttributeId = u32;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("attribute {attr} out of range (dataset has {n_attrs} attributes)")]
    AttributeOutOfRange { attr: AttributeId, n_attrs: usize },
    #[error("marginal scope of {len} attributes is too large (limit 63)")]
    ScopeTooLarge { len: usize },
    #[error("dataset must have at least one row and one attribute")]
    Empty,
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A set of attributes in canonical (ascending index) order.
///
/// Stored as a bitmask: a single inline 64-bit word covers universes of up to
/// 64 attributes; wider universes spill onto additional heap-allocated words.
/// Trailing zero words are always trimmed so that equal sets compare and hash
/// equal regardless of how they were built.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Itemset {
    words: SmallVec<[u64; 1]>,
}

impl Itemset {
    pub fn empty() -> Self {
        Itemset::default()
    }

    pub fn singleton(attr: AttributeId) -> Self {
        let mut s = Itemset::empty();
        s.insert(attr);
        s
    }

    pub fn from_members<I: IntoIterator<Item = AttributeId>>(members: I) -> Self {
        let mut s = Itemset::empty();
        for a in members {
            s.insert(a);
        }
        s
    }

    pub fn insert(&mut self, attr: AttributeId) {
        let word = attr as usize / 64;
        if word >= self.words.len() {
            self.words.resize(word + 1, 0);
        }
        self.words[word] |= 1u64 << (attr % 64);
    }

    pub fn remove(&mut self, attr: AttributeId) {
        let word = attr as usize / 64;
        if word < self.words.len() {
            self.words[word] &= !(1u64 << (attr % 64));
            self.trim();
        }
    }

    pub fn contains(&self, attr: AttributeId) -> bool {
        let word = attr as usize / 64;
        word < self.words.len() && self.words[word] >> (attr % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = AttributeId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros();
                rest &= rest - 1;
                Some(wi as u32 * 64 + bit)
            })
        })
    }

    pub fn min_attr(&self) -> Option<AttributeId> {
        self.iter().next()
    }

    pub fn max_attr(&self) -> Option<AttributeId> {
        let (wi, w) = self
            .words
            .iter()
            .enumerate()
            .rev()
            .find(|(_, w)| **w != 0)?;
        Some(wi as u32 * 64 + 63 - w.leading_zeros())
    }

    fn zip_words<'a>(&'a self, other: &'a Itemset) -> impl Iterator<Item = (u64, u64)> + 'a {
        let n = self.words.len().max(other.words.len());
        (0..n).map(move |i| {
            (
                self.words.get(i).copied().unwrap_or(0),
                other.words.get(i).copied().unwrap_or(0),
            )
        })
    }

    pub fn union(&self, other: &Itemset) -> Itemset {
        let mut s = Itemset {
            words: self.zip_words(other).map(|(a, b)| a | b).collect(),
        };
        s.trim();
        s
    }

    pub fn intersection(&self, other: &Itemset) -> Itemset {
        let mut s = Itemset {
            words: self.zip_words(other).map(|(a, b)| a & b).collect(),
        };
        s.trim();
        s
    }

    pub fn difference(&self, other: &Itemset) -> Itemset {
        let mut s = Itemset {
            words: self.zip_words(other).map(|(a, b)| a & !b).collect(),
        };
        s.trim();
        s
    }

    pub fn is_subset(&self, other: &Itemset) -> bool {
        self.zip_words(other).all(|(a, b)| a & !b == 0)
    }

    pub fn intersection_len(&self, other: &Itemset) -> usize {
        self.zip_words(other)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    /// Renders members through a name table, space separated.
    pub fn label(&self, names: &[String]) -> String {
        let mut out = String::new();
        for a in self.iter() {
            if !out.is_empty() {
                out.push(' ');
            }
            match names.get(a as usize) {
                Some(n) => out.push_str(n),
                None => out.push_str(&format!("#{a}")),
            }
        }
        out
    }
}

impl FromIterator<AttributeId> for Itemset {
    fn from_iter<I: IntoIterator<Item = AttributeId>>(iter: I) -> Self {
        Itemset::from_members(iter)
    }
}

impl Ord for Itemset {
    /// Lexicographic order on the ascending member sequence; this is the
    /// canonical tie-breaking order used everywhere determinism matters.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.iter().cmp(other.iter())
    }
}

impl PartialOrd for Itemset {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Itemset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// An immutable N x K binary matrix with named columns. Rows are packed into
/// 64-bit words so that support counting is a masked word comparison.
#[derive(Clone, Debug)]
pub struct TransactionDataset {
    names: Vec<String>,
    n_rows: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl TransactionDataset {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<bool>]) -> Result<Self, DataError> {
        if rows.is_empty() || names.is_empty() {
            return Err(DataError::Empty);
        }
        let k = names.len();
        let words_per_row = k.div_ceil(64);
        let mut bits = vec![0u64; rows.len() * words_per_row];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(DataError::Parse {
                    line: i + 1,
                    msg: format!("row has {} entries, expected {}", row.len(), k),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v {
                    bits[i * words_per_row + j / 64] |= 1u64 << (j % 64);
                }
            }
        }
        Ok(TransactionDataset {
            names,
            n_rows: rows.len(),
            words_per_row,
            bits,
        })
    }

    /// Parses the token format: one transaction per line, whitespace-separated
    /// item tokens. The attribute table is the sorted set of distinct tokens.
    pub fn parse_tokens(text: &str) -> Result<Self, DataError> {
        let lines: Vec<Vec<&str>> = text
            .lines()
            .map(|l| l.split_whitespace().collect())
            .collect();
        if lines.is_empty() {
            return Err(DataError::Empty);
        }
        let mut names: Vec<String> = lines
            .iter()
            .flatten()
            .map(|t| t.to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if names.is_empty() {
            return Err(DataError::Empty);
        }
        names.sort();
        let index: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(lines.len());
        for toks in &lines {
            let mut row = vec![false; names.len()];
            for t in toks {
                row[index[t]] = true;
            }
            rows.push(row);
        }
        TransactionDataset::from_rows(names, &rows)
    }

    /// Parses the dense format: equal-length lines of `0`/`1` characters.
    /// Columns are named `a0`, `a1`, ... zero-padded so lexicographic token
    /// order matches column order.
    pub fn parse_dense(text: &str) -> Result<Self, DataError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(DataError::Empty);
        }
        let k = lines[0].trim().len();
        let mut rows = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let line = line.trim();
            if line.len() != k {
                return Err(DataError::Parse {
                    line: i + 1,
                    msg: format!("expected {} characters, found {}", k, line.len()),
                });
            }
            let mut row = Vec::with_capacity(k);
            for ch in line.chars() {
                match ch {
                    '0' => row.push(false),
                    '1' => row.push(true),
                    _ => {
                        return Err(DataError::Parse {
                            line: i + 1,
                            msg: format!("unexpected character {ch:?}"),
                        })
                    }
                }
            }
            rows.push(row);
        }
        TransactionDataset::from_rows(attribute_names(k), &rows)
    }

    pub fn to_tokens_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows {
            let mut first = true;
            for j in 0..self.n_attrs() {
                if self.bit(i, j as u32) {
                    if !first {
                        out.push(' ');
                    }
                    out.push_str(&self.names[j]);
                    first = false;
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_dense_string(&self) -> String {
        let mut out = String::with_capacity(self.n_rows * (self.n_attrs() + 1));
        for i in 0..self.n_rows {
            for j in 0..self.n_attrs() {
                out.push(if self.bit(i, j as u32) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_attrs(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn attribute_by_name(&self, token: &str) -> Option<AttributeId> {
        self.names.iter().position(|n| n == token).map(|i| i as u32)
    }

    /// The full attribute universe as an itemset.
    pub fn all_attributes(&self) -> Itemset {
        (0..self.n_attrs() as u32).collect()
    }

    #[inline]
    pub fn bit(&self, row: usize, attr: AttributeId) -> bool {
        self.bits[row * self.words_per_row + attr as usize / 64] >> (attr % 64) & 1 == 1
    }

    pub fn row_bools(&self, row: usize) -> Vec<bool> {
        (0..self.n_attrs() as u32).map(|a| self.bit(row, a)).collect()
    }

    fn check_scope(&self, x: &Itemset) -> Result<(), DataError> {
        if let Some(max) = x.max_attr() {
            if max as usize >= self.n_attrs() {
                return Err(DataError::AttributeOutOfRange {
                    attr: max,
                    n_attrs: self.n_attrs(),
                });
            }
        }
        Ok(())
    }

    /// Number of rows in which every attribute of `x` is 1.
    pub fn support_count(&self, x: &Itemset) -> Result<u64, DataError> {
        self.check_scope(x)?;
        let masks: Vec<(usize, u64)> = mask_words(x);
        let mut count = 0u64;
        for row in 0..self.n_rows {
            let base = row * self.words_per_row;
            if masks.iter().all(|&(w, m)| self.bits[base + w] & m == m) {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Empirical probability that all attributes of `x` equal 1. The empty
    /// itemset has frequency 1.
    pub fn frequency(&self, x: &Itemset) -> Result<f64, DataError> {
        Ok(self.support_count(x)? as f64 / self.n_rows as f64)
    }

    /// Projects the empirical distribution onto the columns of `x`. Only
    /// patterns with a nonzero count are stored.
    pub fn project(&self, x: &Itemset) -> Result<MarginalTable, DataError> {
        self.check_scope(x)?;
        let members: Vec<AttributeId> = x.iter().collect();
        if members.len() > 63 {
            return Err(DataError::ScopeTooLarge { len: members.len() });
        }
        let mut cells: HashMap<u64, u64> = HashMap::new();
        for row in 0..self.n_rows {
            let base = row * self.words_per_row;
            let mut pattern = 0u64;
            for (j, &a) in members.iter().enumerate() {
                let bit = self.bits[base + a as usize / 64] >> (a % 64) & 1;
                pattern |= bit << j;
            }
            *cells.entry(pattern).or_insert(0) += 1;
        }
        Ok(MarginalTable {
            scope: x.clone(),
            n_rows: self.n_rows as u64,
            cells,
        })
    }

    /// Hex SHA-256 digest of the dataset contents (names and row bits).
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n_rows as u64).to_le_bytes());
        h.update((self.n_attrs() as u64).to_le_bytes());
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        for w in &self.bits {
            h.update(w.to_le_bytes());
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn mask_words(x: &Itemset) -> Vec<(usize, u64)> {
    let mut masks: Vec<(usize, u64)> = Vec::new();
    for a in x.iter() {
        let w = a as usize / 64;
        match masks.iter_mut().find(|(wi, _)| *wi == w) {
            Some((_, m)) => *m |= 1u64 << (a % 64),
            None => masks.push((w, 1u64 << (a % 64))),
        }
    }
    masks
}

/// Generates zero-padded column names `a0, a1, ...` whose lexicographic order
/// matches index order.
pub fn attribute_names(k: usize) -> Vec<String> {
    let width = if k <= 1 { 1 } else { (k - 1).to_string().len() };
    (0..k).map(|i| format!("a{i:0width$}")).collect()
}

/// Sparse empirical distribution over one itemset. Cell keys are bit patterns
/// whose bit `j` is the value of the scope's `j`-th member (ascending order);
/// values are row counts.
#[derive(Clone, Debug)]
pub struct MarginalTable {
    scope: Itemset,
    n_rows: u64,
    cells: HashMap<u64, u64>,
}

impl MarginalTable {
    pub fn scope(&self) -> &Itemset {
        &self.scope
    }

    pub fn n_rows(&self) -> u64 {
        self.n_rows
    }

    /// (pattern, count) pairs in unspecified order.
    pub fn counts(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.cells.iter().map(|(&p, &c)| (p, c))
    }

    pub fn probability(&self, pattern: u64) -> f64 {
        self.cells.get(&pattern).copied().unwrap_or(0) as f64 / self.n_rows as f64
    }

    /// Probability of the all-ones pattern, i.e. the frequency of the scope.
    pub fn all_ones_probability(&self) -> f64 {
        let ones = if self.scope.is_empty() {
            0
        } else {
            (1u64 << self.scope.len()) - 1
        };
        self.probability(ones)
    }

    /// Shannon entropy in nats, with the 0 log 0 = 0 convention.
    pub fn entropy(&self) -> f64 {
        let n = self.n_rows as f64;
        -self
            .cells
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    pub(crate) fn from_counts(scope: Itemset, n_rows: u64, cells: HashMap<u64, u64>) -> Self {
        MarginalTable {
            scope,
            n_rows,
            cells,
        }
    }
}

/// Synthetic chain data: item 0 is a fair coin flip and item i is item i-1
/// XOR-flipped with probability `flip_prob`. Fully determined by `seed`.
pub fn generate_path_dataset(
    n_items: usize,
    n_rows: usize,
    flip_prob: f64,
    seed: u64,
) -> Result<TransactionDataset, DataError> {
    if n_items == 0 || n_rows == 0 {
        return Err(DataError::Empty);
    }
    if !(0.0..=1.0).contains(&flip_prob) || flip_prob.is_nan() {
        return Err(DataError::InvalidProbability(flip_prob));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Compare raw 64-bit draws against a fixed-point threshold so the output
    // depends only on the ChaCha stream, not on float-sampling internals.
    let mut draw = |p: f64| -> bool {
        let threshold = (p * 2f64.powi(64)) as u128;
        (rng.next_u64() as u128) < threshold
    };
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut row = Vec::with_capacity(n_items);
        let mut prev = draw(0.5);
        row.push(prev);
        for _ in 1..n_items {
            prev ^= draw(flip_prob);
            row.push(prev);
        }
        rows.push(row);
    }
    TransactionDataset::from_rows(attribute_names(n_items), &rows)
}
