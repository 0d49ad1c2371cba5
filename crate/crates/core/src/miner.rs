//! Level-wise candidate mining: builds the downward-closed family of frequent
//! itemsets (plus all singletons and the empty set) that the tree search draws
//! its cliques from.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::dataset::{AttributeId, DataError, Itemset, TransactionDataset};
use crate::jtree::JunctionForest;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("family file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("family is not downward closed: {missing} (subset of {superset}) is absent")]
    NotDownwardClosed { missing: String, superset: String },
    #[error("family is empty; at least the singletons are required")]
    EmptyFamily,
    #[error("family does not cover attribute {token:?}")]
    NotCovering { token: String },
    #[error("token {token:?} is not an attribute of the dataset")]
    UnknownToken { token: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exact rational frequency `count / total`. Comparisons are by value, so
/// 1/4 == 25/100.
#[derive(Clone, Copy, Debug)]
pub struct Frequency {
    count: u64,
    total: u64,
}

impl Frequency {
    pub fn new(count: u64, total: u64) -> Self {
        assert!(total > 0 && count <= total);
        Frequency { count, total }
    }

    pub const ONE: Frequency = Frequency { count: 1, total: 1 };

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn value(&self) -> f64 {
        self.count as f64 / self.total as f64
    }

    fn reduced(&self) -> (u64, u64) {
        if self.count == 0 {
            return (0, 1);
        }
        let g = gcd(self.count, self.total);
        (self.count / g, self.total / g)
    }
}

impl PartialEq for Frequency {
    fn eq(&self, other: &Self) -> bool {
        self.count as u128 * other.total as u128 == other.count as u128 * self.total as u128
    }
}
impl Eq for Frequency {}

impl PartialOrd for Frequency {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frequency {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.count as u128 * other.total as u128).cmp(&(other.count as u128 * self.total as u128))
    }
}

impl fmt::Display for Frequency {
    /// Exact decimal when the reduced denominator is of the form 2^a 5^b,
    /// otherwise the reduced fraction `count/total`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (num, den) = self.reduced();
        if den == 1 {
            return write!(f, "{num}");
        }
        let mut d = den;
        let mut twos = 0u32;
        let mut fives = 0u32;
        while d % 2 == 0 {
            d /= 2;
            twos += 1;
        }
        while d % 5 == 0 {
            d /= 5;
            fives += 1;
        }
        let digits = twos.max(fives);
        if d == 1 && digits <= 38 {
            let scaled = num as u128 * 10u128.pow(digits) / den as u128;
            let s = format!("{scaled:0width$}", width = digits as usize + 1);
            let (int, frac) = s.split_at(s.len() - digits as usize);
            write!(f, "{int}.{frac}")
        } else {
            write!(f, "{num}/{den}")
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn parse_frequency(s: &str) -> Option<Frequency> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().ok()?;
        let d: u64 = d.trim().parse().ok()?;
        if d == 0 || n > d {
            return None;
        }
        return Some(Frequency::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        if frac.len() > 38 || frac.chars().any(|c| !c.is_ascii_digit()) {
            return None;
        }
        let den = 10u128.pow(frac.len() as u32);
        let num = int as u128 * den + frac.parse::<u128>().unwrap_or(0);
        if num > den || den > u64::MAX as u128 {
            return None;
        }
        return Some(Frequency::new(num as u64, den as u64));
    }
    let int: u64 = s.parse().ok()?;
    if int > 1 {
        return None;
    }
    Some(Frequency::new(int, 1))
}

/// A downward-closed collection of itemsets with exact frequencies. Always
/// contains the empty set and every singleton of its attribute universe.
#[derive(Clone, Debug)]
pub struct CandidateFamily {
    names: Vec<String>,
    entries: HashMap<Itemset, Frequency>,
    min_support: f64,
    /// Singletons kept despite falling below the support threshold.
    below_support: BTreeSet<AttributeId>,
}

impl CandidateFamily {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn min_support(&self) -> f64 {
        self.min_support
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, x: &Itemset) -> bool {
        self.entries.contains_key(x)
    }

    pub fn frequency_of(&self, x: &Itemset) -> Option<Frequency> {
        self.entries.get(x).copied()
    }

    pub fn members(&self) -> impl Iterator<Item = (&Itemset, Frequency)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Members sorted by (size, lexicographic member order).
    pub fn sorted_members(&self) -> Vec<(Itemset, Frequency)> {
        let mut v: Vec<(Itemset, Frequency)> =
            self.entries.iter().map(|(k, f)| (k.clone(), *f)).collect();
        v.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
        v
    }

    /// Singletons that were forced into the family despite being below the
    /// support threshold.
    pub fn below_support_singletons(&self) -> &BTreeSet<AttributeId> {
        &self.below_support
    }

    /// True when no member has more than one attribute.
    pub fn is_singletons_only(&self) -> bool {
        self.entries.keys().all(|x| x.len() <= 1)
    }

    /// The largest member size.
    pub fn max_member_len(&self) -> usize {
        self.entries.keys().map(|x| x.len()).max().unwrap_or(0)
    }

    /// Checks that every size-(L-1) subset of every member is present, which
    /// by induction gives full downward closure.
    pub fn check_downward_closed(&self) -> Result<(), FamilyError> {
        for x in self.entries.keys() {
            for a in x.iter() {
                let mut sub = x.clone();
                sub.remove(a);
                if !self.entries.contains_key(&sub) {
                    return Err(FamilyError::NotDownwardClosed {
                        missing: sub.label(&self.names),
                        superset: x.label(&self.names),
                    });
                }
            }
        }
        Ok(())
    }

    /// True when every attribute of the universe appears as a singleton.
    pub fn covers_all_attributes(&self) -> bool {
        (0..self.names.len() as u32).all(|a| self.entries.contains_key(&Itemset::singleton(a)))
    }

    /// Restriction to the members contained in some clique of `forest`: the
    /// decomposable family the forest models, with its frequencies.
    pub fn restrict_to_forest(&self, forest: &JunctionForest) -> CandidateFamily {
        let cliques: Vec<&Itemset> = forest.cliques().collect();
        self.filter_members(|x| cliques.iter().any(|c| x.is_subset(c)))
    }

    /// Keeps the members satisfying `keep`. The empty set and all singletons
    /// are retained unconditionally so the result stays a valid family.
    pub fn filter_members(&self, mut keep: impl FnMut(&Itemset) -> bool) -> CandidateFamily {
        let entries = self
            .entries
            .iter()
            .filter(|(x, _)| x.len() <= 1 || keep(x))
            .map(|(x, f)| (x.clone(), *f))
            .collect();
        CandidateFamily {
            names: self.names.clone(),
            entries,
            min_support: self.min_support,
            below_support: self.below_support.clone(),
        }
    }

    /// Family consisting of all subsets of the forest's cliques, with
    /// frequencies counted from `d`.
    pub fn from_forest_closure(
        forest: &JunctionForest,
        d: &TransactionDataset,
    ) -> Result<CandidateFamily, DataError> {
        let mut entries = HashMap::new();
        for clique in forest.cliques() {
            let members: Vec<AttributeId> = clique.iter().collect();
            for mask in 0u64..1 << members.len() {
                let x: Itemset = members
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| mask >> j & 1 == 1)
                    .map(|(_, &a)| a)
                    .collect();
                if !entries.contains_key(&x) {
                    let count = d.support_count(&x)?;
                    entries.insert(x, Frequency::new(count, d.n_rows() as u64));
                }
            }
        }
        Ok(CandidateFamily {
            names: d.names().to_vec(),
            entries,
            min_support: 0.0,
            below_support: BTreeSet::new(),
        })
    }

    /// Builds a family from explicit itemsets, counting frequencies from `d`.
    /// The sets are not closed automatically; closure is validated.
    pub fn from_itemsets(
        d: &TransactionDataset,
        sets: impl IntoIterator<Item = Itemset>,
    ) -> Result<CandidateFamily, FamilyError> {
        let n = d.n_rows() as u64;
        let mut entries = HashMap::new();
        entries.insert(Itemset::empty(), Frequency::new(n, n));
        for x in sets {
            let count = d.support_count(&x)?;
            entries.insert(x, Frequency::new(count, n));
        }
        for a in 0..d.n_attrs() as u32 {
            let s = Itemset::singleton(a);
            if !entries.contains_key(&s) {
                let count = d.support_count(&s)?;
                entries.insert(s, Frequency::new(count, n));
            }
        }
        let family = CandidateFamily {
            names: d.names().to_vec(),
            entries,
            min_support: 0.0,
            below_support: BTreeSet::new(),
        };
        family.check_downward_closed()?;
        Ok(family)
    }

    /// Rebuilds a family from explicit entries, validating downward closure.
    /// The empty set is supplied if absent.
    pub fn from_entries(
        names: Vec<String>,
        entries: impl IntoIterator<Item = (Itemset, Frequency)>,
    ) -> Result<CandidateFamily, FamilyError> {
        let mut map: HashMap<Itemset, Frequency> = entries.into_iter().collect();
        map.entry(Itemset::empty()).or_insert(Frequency::ONE);
        let family = CandidateFamily {
            names,
            entries: map,
            min_support: 0.0,
            below_support: BTreeSet::new(),
        };
        family.check_downward_closed()?;
        Ok(family)
    }

    /// Re-resolves a loaded family against a dataset: tokens are mapped to the
    /// dataset's attribute ids and frequencies are recounted exactly.
    pub fn resolve_against(&self, d: &TransactionDataset) -> Result<CandidateFamily, FamilyError> {
        let mut remap: Vec<AttributeId> = Vec::with_capacity(self.names.len());
        for token in &self.names {
            match d.attribute_by_name(token) {
                Some(a) => remap.push(a),
                None => {
                    return Err(FamilyError::UnknownToken {
                        token: token.clone(),
                    })
                }
            }
        }
        let n = d.n_rows() as u64;
        let mut entries = HashMap::new();
        for x in self.entries.keys() {
            let mapped: Itemset = x.iter().map(|a| remap[a as usize]).collect();
            let count = d.support_count(&mapped)?;
            entries.insert(mapped, Frequency::new(count, n));
        }
        for a in 0..d.n_attrs() as u32 {
            if !entries.contains_key(&Itemset::singleton(a)) {
                return Err(FamilyError::NotCovering {
                    token: d.names()[a as usize].clone(),
                });
            }
        }
        Ok(CandidateFamily {
            names: d.names().to_vec(),
            entries,
            min_support: self.min_support,
            below_support: BTreeSet::new(),
        })
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# min_support {}\n", self.min_support));
        for (x, f) in self.sorted_members() {
            if x.is_empty() {
                continue;
            }
            out.push_str(&format!("{} : {}\n", x.label(&self.names), f));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), FamilyError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CandidateFamily, FamilyError> {
        let text = std::fs::read_to_string(path)?;
        CandidateFamily::from_file_string(&text)
    }

    pub fn from_file_string(text: &str) -> Result<CandidateFamily, FamilyError> {
        let mut min_support = 0.0f64;
        let mut raw: Vec<(usize, Vec<String>, Frequency)> = Vec::new();
        let mut tokens: BTreeSet<String> = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("min_support") {
                    min_support = v.trim().parse().map_err(|_| FamilyError::Parse {
                        line: line_no,
                        msg: "bad min_support".into(),
                    })?;
                }
                continue;
            }
            let (lhs, rhs) = line.split_once(':').ok_or_else(|| FamilyError::Parse {
                line: line_no,
                msg: "expected `tokens : frequency`".into(),
            })?;
            let freq = parse_frequency(rhs).ok_or_else(|| FamilyError::Parse {
                line: line_no,
                msg: format!("bad frequency {:?}", rhs.trim()),
            })?;
            let toks: Vec<String> = lhs.split_whitespace().map(|t| t.to_string()).collect();
            for t in &toks {
                tokens.insert(t.clone());
            }
            raw.push((line_no, toks, freq));
        }
        if raw.is_empty() || tokens.is_empty() {
            return Err(FamilyError::EmptyFamily);
        }
        let names: Vec<String> = tokens.into_iter().collect();
        let index: HashMap<&str, u32> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect();
        let mut entries: HashMap<Itemset, Frequency> = HashMap::new();
        entries.insert(Itemset::empty(), Frequency::ONE);
        for (line_no, toks, freq) in raw {
            let mut x = Itemset::empty();
            for t in &toks {
                x.insert(index[t.as_str()]);
            }
            if x.len() != toks.len() {
                return Err(FamilyError::Parse {
                    line: line_no,
                    msg: "duplicate token in itemset".into(),
                });
            }
            if entries.insert(x, freq).is_some() {
                return Err(FamilyError::Parse {
                    line: line_no,
                    msg: "duplicate itemset".into(),
                });
            }
        }
        let family = CandidateFamily {
            names,
            entries,
            min_support,
            below_support: BTreeSet::new(),
        };
        family.check_downward_closed()?;
        if !family.covers_all_attributes() {
            // every token appears in some set; closure already forces its
            // singleton, so this is unreachable, but kept as a guard
            return Err(FamilyError::EmptyFamily);
        }
        Ok(family)
    }
}

/// Level-wise (Apriori) mining. Keeps exactly the itemsets with frequency at
/// least `min_support`, plus the empty set and all singletons unconditionally.
pub fn mine_candidates(
    d: &TransactionDataset,
    min_support: f64,
) -> Result<CandidateFamily, DataError> {
    let n = d.n_rows() as u64;
    let k = d.n_attrs();
    let mut entries: HashMap<Itemset, Frequency> = HashMap::new();
    let mut below_support = BTreeSet::new();
    entries.insert(Itemset::empty(), Frequency::new(n, n));

    let mut frequent: Vec<Itemset> = Vec::new();
    for a in 0..k as u32 {
        let s = Itemset::singleton(a);
        let count = d.support_count(&s)?;
        let f = Frequency::new(count, n);
        if f.value() >= min_support {
            frequent.push(s.clone());
        } else {
            below_support.insert(a);
        }
        entries.insert(s, f);
    }
    frequent.sort();

    while !frequent.is_empty() {
        let candidates = join_level(&frequent);
        if candidates.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for x in candidates {
            let count = d.support_count(&x)?;
            let f = Frequency::new(count, n);
            if f.value() >= min_support {
                entries.insert(x.clone(), f);
                next.push(x);
            }
        }
        next.sort();
        frequent = next;
    }

    Ok(CandidateFamily {
        names: d.names().to_vec(),
        entries,
        min_support,
        below_support,
    })
}

/// Prefix join plus full subset pruning over one frequent level.
fn join_level(frequent: &[Itemset]) -> Vec<Itemset> {
    let set: HashSet<&Itemset> = frequent.iter().collect();
    let as_vecs: Vec<Vec<AttributeId>> = frequent.iter().map(|x| x.iter().collect()).collect();
    let mut out = Vec::new();
    for i in 0..frequent.len() {
        for j in i + 1..frequent.len() {
            let (a, b) = (&as_vecs[i], &as_vecs[j]);
            if a[..a.len() - 1] != b[..b.len() - 1] {
                // inputs are sorted, so once prefixes diverge no later j matches
                break;
            }
            let union = frequent[i].union(&frequent[j]);
            let all_subsets_frequent = union.iter().all(|v| {
                let mut sub = union.clone();
                sub.remove(v);
                set.contains(&sub)
            });
            if all_subsets_frequent {
                out.push(union);
            }
        }
    }
    out
}
