//! Exploratory statistics over annotated candidate tables and the shared-subject
//! networks between historians.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{DatasetKind, ExpandedDataset, PairRow};
use crate::model::{EntityId, EntityKind, EntityPair, Store};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistorianRelationStats {
    pub total_relations: usize,
    pub unique_pairs: usize,
    pub valid_relations: usize,
    pub valid_unique_pairs: usize,
    pub valid_not_recorded: usize,
    /// `None` for the institutions table, which has no per-subject collaboration column.
    pub valid_on_shared_subject: Option<usize>,
    pub unique_historians: usize,
    pub unique_subjects: usize,
    pub valid_unique_historians: usize,
    /// Auxiliary uniques over the rows counted in `valid_on_shared_subject`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_subject_uniques: Option<SubjectUniques>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectUniques {
    pub historians: usize,
    pub pairs: usize,
    pub subjects: usize,
}

impl HistorianRelationStats {
    /// The six relation-count columns; the last is `None` when not applicable.
    pub fn columns(&self) -> [Option<usize>; 6] {
        [
            Some(self.total_relations),
            Some(self.unique_pairs),
            Some(self.valid_relations),
            Some(self.valid_unique_pairs),
            Some(self.valid_not_recorded),
            self.valid_on_shared_subject,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionRelationStats {
    pub valid_collection_relations: usize,
    pub not_recorded_in_biographies: usize,
}

fn require_annotations(dataset: &ExpandedDataset) -> Result<Vec<(&PairRow, bool)>> {
    let missing: Vec<String> = dataset
        .rows
        .iter()
        .filter(|r| r.annotation.is_none())
        .map(|r| format!("{} / {}", r.pair, r.shared_subject))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteData(missing));
    }
    Ok(dataset
        .rows
        .iter()
        .map(|r| (r, r.relation_exists().unwrap_or(false)))
        .collect())
}

fn historians_of<'a>(pairs: impl IntoIterator<Item = &'a EntityPair>) -> usize {
    pairs
        .into_iter()
        .flat_map(|p| [&p.first, &p.second])
        .collect::<BTreeSet<_>>()
        .len()
}

pub fn historian_stats(dataset: &ExpandedDataset) -> Result<HistorianRelationStats> {
    let rows = require_annotations(dataset)?;
    let valid: Vec<&PairRow> = rows.iter().filter(|(_, v)| *v).map(|(r, _)| *r).collect();
    let pairs = dataset.unique_pairs();
    let valid_pairs: BTreeSet<&EntityPair> = valid.iter().map(|r| &r.pair).collect();

    let on_subject: Option<Vec<&PairRow>> = match dataset.kind {
        DatasetKind::Institutions => None,
        DatasetKind::Topics | DatasetKind::Merged => Some(
            valid
                .iter()
                .copied()
                .filter(|r| {
                    r.annotation
                        .as_ref()
                        .and_then(|a| a.topic_columns())
                        .is_some_and(|c| c.collaborated_on_subject.is_one())
                })
                .collect(),
        ),
    };
    let on_subject_uniques = on_subject.as_ref().map(|rows| {
        let pairs: BTreeSet<&EntityPair> = rows.iter().map(|r| &r.pair).collect();
        SubjectUniques {
            historians: historians_of(pairs.iter().copied()),
            pairs: pairs.len(),
            subjects: rows.iter().map(|r| &r.shared_subject).collect::<BTreeSet<_>>().len(),
        }
    });

    Ok(HistorianRelationStats {
        total_relations: rows.len(),
        unique_pairs: pairs.len(),
        valid_relations: valid.len(),
        valid_unique_pairs: valid_pairs.len(),
        valid_not_recorded: valid.iter().filter(|r| !r.derived_flags.bio_one).count(),
        valid_on_shared_subject: on_subject.map(|v| v.len()),
        unique_historians: historians_of(pairs.iter().copied()),
        unique_subjects: rows.iter().map(|(r, _)| &r.shared_subject).collect::<BTreeSet<_>>().len(),
        valid_unique_historians: historians_of(valid_pairs.iter().copied()),
        on_subject_uniques,
    })
}

pub fn merged_stats(merged: &ExpandedDataset) -> Result<HistorianRelationStats> {
    if merged.kind != DatasetKind::Merged {
        return Err(Error::UnsupportedTable(format!(
            "merged_stats expects the merged table, got {}",
            merged.kind.as_str()
        )));
    }
    historian_stats(merged)
}

pub fn collection_stats(dataset: &ExpandedDataset) -> Result<CollectionRelationStats> {
    if dataset.kind == DatasetKind::Institutions {
        return Err(Error::UnsupportedTable(
            "the institutions table has no archive relevance columns".into(),
        ));
    }
    let rows = require_annotations(dataset)?;
    let relevant: Vec<&PairRow> = rows
        .iter()
        .filter(|(r, valid)| {
            *valid
                && r.annotation
                    .as_ref()
                    .and_then(|a| a.topic_columns())
                    .is_some_and(|c| c.materials())
        })
        .map(|(r, _)| *r)
        .collect();
    Ok(CollectionRelationStats {
        valid_collection_relations: relevant.len(),
        not_recorded_in_biographies: relevant.iter().filter(|r| !r.derived_flags.bio_one).count(),
    })
}

/// Rows that break "recorded in a biography (or relevant to an archive) implies valid".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub bio_rows: usize,
    pub bio_violations: Vec<String>,
    pub materials_rows: usize,
    pub materials_violations: Vec<String>,
}

pub fn check_validity_rules(dataset: &ExpandedDataset) -> RuleCheck {
    let mut check = RuleCheck::default();
    for row in &dataset.rows {
        let Some(valid) = row.relation_exists() else { continue };
        let label = || format!("{} / {}", row.pair, row.shared_subject);
        if row.derived_flags.bio_one {
            check.bio_rows += 1;
            if !valid {
                check.bio_violations.push(label());
            }
        }
        let materials = row
            .annotation
            .as_ref()
            .and_then(|a| a.topic_columns())
            .is_some_and(|c| c.materials());
        if materials {
            check.materials_rows += 1;
            if !valid {
                check.materials_violations.push(label());
            }
        }
    }
    check
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    Topics,
    Institutions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkNode {
    pub id: EntityId,
    pub label: String,
    pub kind: EntityKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub pair: EntityPair,
    /// Number of shared subjects.
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkExport {
    pub mode: NetworkMode,
    pub nodes: Vec<NetworkNode>,
    pub edges: Vec<NetworkEdge>,
    pub density: f64,
    /// Connected components over historian nodes, each sorted, ordered by first member.
    pub components: Vec<Vec<EntityId>>,
}

/// `2|E| / (n(n-1))` for `n` nodes; 0 when fewer than two nodes.
pub fn density(nodes: usize, edges: usize) -> f64 {
    if nodes < 2 {
        return 0.0;
    }
    2.0 * edges as f64 / (nodes as f64 * (nodes as f64 - 1.0))
}

/// Historian network of a candidate table: every historian of the store is a
/// node, every unique pair an edge weighted by its number of shared subjects.
pub fn network_export(store: &Store, dataset: &ExpandedDataset, mode: NetworkMode) -> Result<NetworkExport> {
    let expected = match mode {
        NetworkMode::Topics => DatasetKind::Topics,
        NetworkMode::Institutions => DatasetKind::Institutions,
    };
    if dataset.kind != expected {
        return Err(Error::UnsupportedTable(format!(
            "{mode:?} network needs the {} table, got {}",
            expected.as_str(),
            dataset.kind.as_str()
        )));
    }
    let nodes: Vec<NetworkNode> = store
        .entities_of_kind(EntityKind::Historian)
        .map(|e| NetworkNode {
            id: e.id.clone(),
            label: e.label.clone(),
            kind: e.kind,
        })
        .collect();
    let edges: Vec<NetworkEdge> = dataset
        .rows_by_pair()
        .into_iter()
        .map(|(pair, rows)| NetworkEdge {
            pair: pair.clone(),
            weight: rows.len(),
        })
        .collect();
    let components = components(&nodes, &edges);
    Ok(NetworkExport {
        mode,
        density: density(nodes.len(), edges.len()),
        nodes,
        edges,
        components,
    })
}

fn components(nodes: &[NetworkNode], edges: &[NetworkEdge]) -> Vec<Vec<EntityId>> {
    let index: BTreeMap<&EntityId, usize> = nodes.iter().enumerate().map(|(i, n)| (&n.id, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for edge in edges {
        if let (Some(&a), Some(&b)) = (index.get(&edge.pair.first), index.get(&edge.pair.second)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<EntityId>> = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(node.id.clone());
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaReport {
    pub topics: HistorianRelationStats,
    pub institutions: HistorianRelationStats,
    pub merged: HistorianRelationStats,
    pub collections_topics: CollectionRelationStats,
    pub collections_merged: CollectionRelationStats,
    pub topic_density: f64,
    pub institution_density: f64,
    pub half_labels_replaced: usize,
    pub topic_rule_check: RuleCheck,
}

/// All EDA figures for attached topic and institution tables of one store.
pub fn build_report(
    store: &Store,
    topics: &ExpandedDataset,
    institutions: &ExpandedDataset,
    half_labels_replaced: usize,
) -> Result<EdaReport> {
    let merged = crate::expansion::merge_tables(topics, institutions)?;
    Ok(EdaReport {
        topics: historian_stats(topics)?,
        institutions: historian_stats(institutions)?,
        merged: merged_stats(&merged)?,
        collections_topics: collection_stats(topics)?,
        collections_merged: collection_stats(&merged)?,
        topic_density: network_export(store, topics, NetworkMode::Topics)?.density,
        institution_density: network_export(store, institutions, NetworkMode::Institutions)?.density,
        half_labels_replaced,
        topic_rule_check: check_validity_rules(topics),
    })
}

fn pct(part: usize, whole: usize) -> String {
    if whole == 0 {
        "n/a".to_string()
    } else {
        format!("{:.0}%", 100.0 * part as f64 / whole as f64)
    }
}

impl EdaReport {
    /// Plain-text count tables followed by a JSON counts block.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Relations between historians");
        let _ = writeln!(
            out,
            "{:<44}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}",
            "", "total", "pairs", "valid", "v.pairs", "unrec.", "on-subj"
        );
        for (label, s) in [
            ("1. At least one topic in common", &self.topics),
            ("2. At least one institution in common", &self.institutions),
            ("3. At least one institution and one topic", &self.merged),
        ] {
            let cells: Vec<String> = s
                .columns()
                .iter()
                .map(|c| c.map_or_else(|| "n/a".to_string(), |v| v.to_string()))
                .collect();
            let _ = writeln!(
                out,
                "{:<44}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}",
                label, cells[0], cells[1], cells[2], cells[3], cells[4], cells[5]
            );
            let _ = writeln!(
                out,
                "{:<44}valid {} of relations, {} of valid not recorded, {} historians / {} subjects",
                "",
                pct(s.valid_relations, s.total_relations),
                pct(s.valid_not_recorded, s.valid_relations),
                s.unique_historians,
                s.unique_subjects
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Relations between historians and collections");
        let _ = writeln!(out, "{:<44}{:>8}{:>8}", "", "rel.", "unrec.");
        for (label, c) in [
            ("1. At least one topic in common", &self.collections_topics),
            ("2. At least one institution and one topic", &self.collections_merged),
        ] {
            let _ = writeln!(
                out,
                "{:<44}{:>8}{:>8}",
                label, c.valid_collection_relations, c.not_recorded_in_biographies
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "network density: topics {:.3}, institutions {:.3}",
            self.topic_density, self.institution_density
        );
        let _ = writeln!(out, "uncertain (0.5) labels replaced with 0: {}", self.half_labels_replaced);
        let _ = writeln!(
            out,
            "biography rule: {} rows, {} invalid; archive rule: {} rows, {} invalid",
            self.topic_rule_check.bio_rows,
            self.topic_rule_check.bio_violations.len(),
            self.topic_rule_check.materials_rows,
            self.topic_rule_check.materials_violations.len()
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "--- counts ---");
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(self).expect("report serializes"));
        out
    }
}
