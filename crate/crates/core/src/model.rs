//! Model persistence and graph export. A model file carries one or more
//! (forest, family) pairs with exact integer frequencies, per-clique marginal
//! tables, scores, and a digest of the dataset they were built from.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Itemset, MarginalTable, TransactionDataset};
use crate::jtree::{JunctionForest, ModelScore, Regularization};
use crate::miner::{CandidateFamily, Frequency};
use crate::search::FamilySequence;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model is invalid: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub attribute_names: Vec<String>,
    pub transaction_count: u64,
    pub dataset_digest: String,
    pub regularization: Regularization,
    pub families: Vec<SavedFamily>,
}

#[derive(Serialize, Deserialize)]
pub struct SavedFamily {
    /// Cliques as ascending attribute-index arrays.
    pub cliques: Vec<Vec<u32>>,
    /// Edges as index pairs into `cliques`; separators are re-derived.
    pub edges: Vec<[usize; 2]>,
    /// Family members with exact `count / total` frequencies.
    pub members: Vec<SavedMember>,
    /// Per-clique empirical tables, parallel to `cliques`. Cell patterns are
    /// bit masks over the clique's members in ascending order.
    pub marginals: Vec<Vec<[u64; 2]>>,
    pub score: ModelScore,
}

#[derive(Serialize, Deserialize)]
pub struct SavedMember {
    pub items: Vec<u32>,
    pub count: u64,
    pub total: u64,
}

/// One family of a loaded model, reconstructed and validated.
#[derive(Debug)]
pub struct ModelFamily {
    pub forest: JunctionForest,
    pub family: CandidateFamily,
    pub marginals: Vec<MarginalTable>,
    pub score: ModelScore,
}

#[derive(Debug)]
pub struct Model {
    pub attribute_names: Vec<String>,
    pub transaction_count: u64,
    pub dataset_digest: String,
    pub regularization: Regularization,
    pub families: Vec<ModelFamily>,
}

impl SavedModel {
    pub fn from_sequence(
        seq: &FamilySequence,
        data: &TransactionDataset,
        reg: Regularization,
    ) -> Result<SavedModel, ModelError> {
        let mut families = Vec::new();
        for entry in &seq.entries {
            let cliques: Vec<Itemset> = entry.forest.cliques().cloned().collect();
            let index: HashMap<&Itemset, usize> =
                cliques.iter().enumerate().map(|(i, c)| (c, i)).collect();
            let mut edges = Vec::new();
            for (a, b, _) in entry.forest.edges() {
                edges.push([index[a], index[b]]);
            }
            let mut marginals = Vec::new();
            for c in &cliques {
                let table = data
                    .project(c)
                    .map_err(|e| ModelError::Invalid(e.to_string()))?;
                let mut cells: Vec<[u64; 2]> = table.counts().map(|(p, c)| [p, c]).collect();
                cells.sort();
                marginals.push(cells);
            }
            let mut members: Vec<SavedMember> = entry
                .family
                .sorted_members()
                .into_iter()
                .map(|(x, f)| SavedMember {
                    items: x.iter().collect(),
                    count: f.count(),
                    total: f.total(),
                })
                .collect();
            members.sort_by(|a, b| (a.items.len(), &a.items).cmp(&(b.items.len(), &b.items)));
            families.push(SavedFamily {
                cliques: cliques.iter().map(|c| c.iter().collect()).collect(),
                edges,
                members,
                marginals,
                score: entry.score,
            });
        }
        Ok(SavedModel {
            format_version: 1,
            attribute_names: data.names().to_vec(),
            transaction_count: data.n_rows() as u64,
            dataset_digest: data.digest(),
            regularization: reg,
            families,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SavedModel, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Reconstructs runtime structures, validating forest structure and the
    /// running intersection property.
    pub fn into_model(self) -> Result<Model, ModelError> {
        let k = self.attribute_names.len();
        let mut families = Vec::new();
        for (fi, saved) in self.families.iter().enumerate() {
            let cliques: Vec<Itemset> = saved
                .cliques
                .iter()
                .map(|m| Itemset::from_members(m.iter().copied()))
                .collect();
            for c in &cliques {
                if let Some(max) = c.max_attr() {
                    if max as usize >= k {
                        return Err(ModelError::Invalid(format!(
                            "family {fi}: clique attribute {max} out of range"
                        )));
                    }
                }
            }
            let mut edge_sets = Vec::new();
            for e in &saved.edges {
                let get = |i: usize| -> Result<Itemset, ModelError> {
                    cliques
                        .get(i)
                        .cloned()
                        .ok_or_else(|| ModelError::Invalid(format!("edge index {i} out of range")))
                };
                edge_sets.push((get(e[0])?, get(e[1])?));
            }
            let forest = JunctionForest::from_parts(cliques.clone(), edge_sets)
                .map_err(|e| ModelError::Invalid(format!("family {fi}: {e}")))?;
            if !forest.check_running_intersection() {
                return Err(ModelError::Invalid(format!(
                    "family {fi}: running intersection property fails"
                )));
            }

            let mut entries = Vec::new();
            for m in &saved.members {
                if m.total != self.transaction_count || m.count > m.total {
                    return Err(ModelError::Invalid(format!(
                        "family {fi}: bad frequency {}/{}",
                        m.count, m.total
                    )));
                }
                entries.push((
                    Itemset::from_members(m.items.iter().copied()),
                    Frequency::new(m.count, m.total),
                ));
            }
            let family = CandidateFamily::from_entries(self.attribute_names.clone(), entries)
                .map_err(|e| ModelError::Invalid(format!("family {fi}: {e}")))?;

            if saved.marginals.len() != saved.cliques.len() {
                return Err(ModelError::Invalid(format!(
                    "family {fi}: {} marginal tables for {} cliques",
                    saved.marginals.len(),
                    saved.cliques.len()
                )));
            }
            let mut marginals = Vec::new();
            for (c, cells) in cliques.iter().zip(&saved.marginals) {
                let total: u64 = cells.iter().map(|c| c[1]).sum();
                if total != self.transaction_count {
                    return Err(ModelError::Invalid(format!(
                        "family {fi}: marginal over {c:?} sums to {total}, expected {}",
                        self.transaction_count
                    )));
                }
                let map: HashMap<u64, u64> = cells.iter().map(|c| (c[0], c[1])).collect();
                marginals.push(MarginalTable::from_counts(
                    c.clone(),
                    self.transaction_count,
                    map,
                ));
            }
            families.push(ModelFamily {
                forest,
                family,
                marginals,
                score: saved.score,
            });
        }
        if families.is_empty() {
            return Err(ModelError::Invalid("model holds no families".into()));
        }
        Ok(Model {
            attribute_names: self.attribute_names,
            transaction_count: self.transaction_count,
            dataset_digest: self.dataset_digest,
            regularization: self.regularization,
            families,
        })
    }
}

pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    SavedModel::load(path)?.into_model()
}

/// Renders a forest in DOT, one subgraph per connected component. Node labels
/// are clique tokens; edge labels are separator tokens.
pub fn forest_to_dot(forest: &JunctionForest, names: &[String]) -> String {
    let escape = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
    let mut ids: HashMap<&Itemset, usize> = HashMap::new();
    for (i, c) in forest.cliques().enumerate() {
        ids.insert(c, i);
    }
    let mut out = String::from("graph junction_forest {\n  node [shape=box];\n");
    for (comp_idx, comp) in forest.components().iter().enumerate() {
        out.push_str(&format!("  subgraph cluster_{comp_idx} {{\n"));
        for c in comp {
            let c_ref = forest.cliques().find(|x| *x == c).unwrap();
            out.push_str(&format!(
                "    c{} [label=\"{}\"];\n",
                ids[c_ref],
                escape(&c.label(names))
            ));
        }
        for (a, b, sep) in forest.edges() {
            if comp.contains(a) {
                out.push_str(&format!(
                    "    c{} -- c{} [label=\"{}\"];\n",
                    ids[a],
                    ids[b],
                    escape(&sep.label(names))
                ));
            }
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_path_dataset;
    use crate::miner::mine_candidates;
    use crate::search::search_sequence;

    #[test]
    fn model_round_trip_is_exact() {
        let d = generate_path_dataset(6, 120, 0.3, 61).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let seq = search_sequence(&f, &d, Regularization::Bic, None).unwrap();
        let saved = SavedModel::from_sequence(&seq, &d, Regularization::Bic).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        saved.save(&path).unwrap();
        let loaded = SavedModel::load(&path).unwrap();

        assert_eq!(loaded.dataset_digest, d.digest());
        assert_eq!(loaded.families.len(), seq.entries.len());
        for (a, b) in loaded.families.iter().zip(&saved.families) {
            assert_eq!(a.cliques, b.cliques);
            assert_eq!(a.edges, b.edges);
            assert_eq!(a.marginals, b.marginals);
            assert_eq!(
                a.members
                    .iter()
                    .map(|m| (m.items.clone(), m.count, m.total))
                    .collect::<Vec<_>>(),
                b.members
                    .iter()
                    .map(|m| (m.items.clone(), m.count, m.total))
                    .collect::<Vec<_>>()
            );
        }

        let model = loaded.into_model().unwrap();
        for (mf, entry) in model.families.iter().zip(&seq.entries) {
            assert_eq!(
                mf.forest.cliques().collect::<Vec<_>>(),
                entry.forest.cliques().collect::<Vec<_>>()
            );
            assert_eq!(mf.family.len(), entry.family.len());
            for (x, fr) in entry.family.members() {
                assert_eq!(mf.family.frequency_of(x), Some(fr));
            }
        }
    }

    #[test]
    fn corrupted_forest_is_rejected() {
        let d = generate_path_dataset(5, 60, 0.3, 62).unwrap();
        let f = mine_candidates(&d, 0.0).unwrap();
        let seq = search_sequence(&f, &d, Regularization::Bic, Some(1)).unwrap();
        let mut saved = SavedModel::from_sequence(&seq, &d, Regularization::Bic).unwrap();
        // break the forest: duplicate the first clique into a second node
        let first = saved.families[0].cliques[0].clone();
        saved.families[0].cliques.push(first);
        saved.families[0].marginals.push(vec![[0, 60]]);
        let err = saved.into_model().unwrap_err();
        assert!(matches!(err, ModelError::Invalid(_)));
    }

    #[test]
    fn dot_export_shape() {
        let fx = crate::fixtures::showcase();
        let dot = forest_to_dot(&fx.forest, fx.dataset.names());
        assert_eq!(dot.matches("[label=\"").count(), 7); // 4 nodes + 3 edges
        assert_eq!(dot.matches(" -- ").count(), 3);
        assert!(dot.contains("label=\"b c d\""));
        assert!(dot.contains("subgraph cluster_0"));

        let singles = JunctionForest::singletons(4);
        let names: Vec<String> = (0..4).map(|i| format!("x{i}")).collect();
        let dot = forest_to_dot(&singles, &names);
        assert_eq!(dot.matches("subgraph").count(), 4);
        assert_eq!(dot.matches(" -- ").count(), 0);
    }
}
