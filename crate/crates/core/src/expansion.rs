//! Candidate-pair tables: every pair of historians sharing a topic
//! (`artists_periods`) or an institution (`institutions`), one row per shared
//! subject, plus the merge of the two and the join with expert annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{annotation_cells, write_table, AnnotationRecord, Label, TableKind};
use crate::mentions::MentionTable;
use crate::model::{canonical_pair, EntityId, EntityKind, EntityPair, Predicate, Store};

/// Pair-level evidence flags, oriented on the canonical pair `(a, b)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedFlags {
    pub bio_one: bool,
    pub bio_both: bool,
    /// `b` mentioned in the archive of `a`.
    pub arch_a: bool,
    /// `a` mentioned in the archive of `b`.
    pub arch_b: bool,
    /// `b` relevant to the archive of `a`.
    #[serde(default)]
    pub materials_a: bool,
    /// `a` relevant to the archive of `b`.
    #[serde(default)]
    pub materials_b: bool,
}

impl DerivedFlags {
    pub fn arch_any(&self) -> bool {
        self.arch_a || self.arch_b
    }

    pub fn materials(&self) -> bool {
        self.materials_a || self.materials_b
    }

    pub fn any(&self) -> bool {
        self.bio_one || self.arch_any() || self.materials()
    }

    pub fn or(self, other: DerivedFlags) -> DerivedFlags {
        DerivedFlags {
            bio_one: self.bio_one || other.bio_one,
            bio_both: self.bio_both || other.bio_both,
            arch_a: self.arch_a || other.arch_a,
            arch_b: self.arch_b || other.arch_b,
            materials_a: self.materials_a || other.materials_a,
            materials_b: self.materials_b || other.materials_b,
        }
    }

    /// Flags read from an artists/periods annotation row, reoriented onto the canonical pair.
    pub fn from_annotation(record: &AnnotationRecord, pair: &EntityPair) -> Option<DerivedFlags> {
        let cols = record.topic_columns()?;
        let flipped = record.art_hist_1 != pair.first;
        let (arch_h1, arch_h2) = (cols.h2_mentioned_in_h1_archive.is_one(), cols.h1_mentioned_in_h2_archive.is_one());
        let (mat_h1, mat_h2) = (cols.h2_relevant_to_h1_archive.is_one(), cols.h1_relevant_to_h2_archive.is_one());
        let (arch_a, arch_b, materials_a, materials_b) = if flipped {
            (arch_h2, arch_h1, mat_h2, mat_h1)
        } else {
            (arch_h1, arch_h2, mat_h1, mat_h2)
        };
        Some(DerivedFlags {
            bio_one: cols.recorded_in_one_bio.is_one(),
            bio_both: cols.recorded_in_both_bios.is_one(),
            arch_a,
            arch_b,
            materials_a,
            materials_b,
        })
    }
}

/// Where row flags come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagSource {
    /// Annotation columns where available, detection otherwise.
    #[default]
    Annotations,
    /// Always recompute from mentions and catalogue statements.
    Mentions,
}

/// Computes [`DerivedFlags`] for historian pairs from text mentions and catalogue
/// `subject` / `includes_materials_relevant_to` statements, optionally overlaid with
/// pair-level flags taken from annotations.
#[derive(Debug, Clone, Default)]
pub struct FlagTable {
    mentions: MentionTable,
    /// historian -> historian `subject` statements.
    bio_links: BTreeSet<(EntityId, EntityId)>,
    /// (producer, target) via a collection's `subject` statement.
    archive_links: BTreeSet<(EntityId, EntityId)>,
    /// (producer, target) via `includes_materials_relevant_to`.
    material_links: BTreeSet<(EntityId, EntityId)>,
    overlay: BTreeMap<EntityPair, DerivedFlags>,
}

impl FlagTable {
    pub fn build(store: &Store, mentions: MentionTable) -> Self {
        let mut table = FlagTable {
            mentions,
            ..Default::default()
        };
        let is_hist = |id: &EntityId| store.kind_of(id) == Some(EntityKind::Historian);
        for stmt in store.statements() {
            match (stmt.predicate, store.kind_of(&stmt.subject)) {
                (Predicate::Subject, Some(EntityKind::Historian)) if is_hist(&stmt.object) => {
                    table.bio_links.insert((stmt.subject, stmt.object));
                }
                (Predicate::Subject, Some(EntityKind::Collection)) if is_hist(&stmt.object) => {
                    for producer in store.producers_of(&stmt.subject) {
                        table.archive_links.insert((producer, stmt.object.clone()));
                    }
                }
                (Predicate::IncludesMaterialsRelevantTo, Some(EntityKind::Collection)) if is_hist(&stmt.object) => {
                    for producer in store.producers_of(&stmt.subject) {
                        table.material_links.insert((producer, stmt.object.clone()));
                    }
                }
                _ => {}
            }
        }
        table
    }

    /// Pair-level overlay: OR of annotation flags over every artists/periods record of a pair.
    pub fn overlay_annotations(&mut self, records: &[AnnotationRecord]) {
        for record in records {
            let Ok(pair) = canonical_pair(&record.art_hist_1, &record.art_hist_2) else {
                continue;
            };
            if let Some(flags) = DerivedFlags::from_annotation(record, &pair) {
                let entry = self.overlay.entry(pair).or_default();
                *entry = entry.or(flags);
            }
        }
    }

    pub fn mentions(&self) -> &MentionTable {
        &self.mentions
    }

    /// Flags detected from texts and catalogue statements alone.
    pub fn detected(&self, pair: &EntityPair) -> DerivedFlags {
        let (a, b) = (&pair.first, &pair.second);
        let link = |set: &BTreeSet<(EntityId, EntityId)>, x: &EntityId, y: &EntityId| {
            set.contains(&(x.clone(), y.clone()))
        };
        let bio = |x: &EntityId, y: &EntityId| {
            self.mentions.find(x, crate::model::TextField::Biography, y).is_some() || link(&self.bio_links, x, y)
        };
        let arch = |x: &EntityId, y: &EntityId| {
            self.mentions.archive_mentions(x, y).next().is_some() || link(&self.archive_links, x, y)
        };
        let (ab, ba) = (bio(a, b), bio(b, a));
        DerivedFlags {
            bio_one: ab || ba,
            bio_both: ab && ba,
            arch_a: arch(a, b),
            arch_b: arch(b, a),
            materials_a: link(&self.material_links, a, b),
            materials_b: link(&self.material_links, b, a),
        }
    }

    pub fn flags(&self, pair: &EntityPair, source: FlagSource) -> DerivedFlags {
        match (source, self.overlay.get(pair)) {
            (FlagSource::Annotations, Some(flags)) => *flags,
            _ => self.detected(pair),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair: EntityPair,
    pub shared_subject: EntityId,
    pub table: TableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AnnotationRecord>,
    #[serde(default)]
    pub derived_flags: DerivedFlags,
}

impl PairRow {
    pub fn relation_exists(&self) -> Option<bool> {
        self.annotation.as_ref().map(|a| a.relation_exists.is_one())
    }

    fn key(&self) -> (&EntityPair, &EntityId) {
        (&self.pair, &self.shared_subject)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Topics,
    Institutions,
    /// Topic rows of pairs that also share an institution.
    Merged,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Topics => "artists_periods",
            DatasetKind::Institutions => "institutions",
            DatasetKind::Merged => "merged",
        }
    }

    pub fn row_table(self) -> TableKind {
        match self {
            DatasetKind::Institutions => TableKind::Institutions,
            DatasetKind::Topics | DatasetKind::Merged => TableKind::ArtistsPeriods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub timestamp: String,
    pub store_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedDataset {
    pub kind: DatasetKind,
    pub rows: Vec<PairRow>,
    pub provenance: Provenance,
}

impl ExpandedDataset {
    pub fn unique_pairs(&self) -> BTreeSet<&EntityPair> {
        self.rows.iter().map(|r| &r.pair).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows per pair.
    pub fn rows_by_pair(&self) -> BTreeMap<&EntityPair, Vec<&PairRow>> {
        let mut out: BTreeMap<&EntityPair, Vec<&PairRow>> = BTreeMap::new();
        for row in &self.rows {
            out.entry(&row.pair).or_default().push(row);
        }
        out
    }

    /// Writes the rows in the annotation table layout (A1.. headers).
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let table = self.kind.row_table();
        write_table(path, table, self.rows.iter().map(|row| export_cells(row, table)))
    }
}

fn export_cells(row: &PairRow, table: TableKind) -> Vec<String> {
    if let Some(record) = &row.annotation {
        return annotation_cells(record);
    }
    let flag = |b: bool| Label::from_bool(b).as_str().to_string();
    let f = &row.derived_flags;
    let mut cells = vec![
        row.pair.first.to_string(),
        row.pair.second.to_string(),
        row.shared_subject.to_string(),
        String::new(),
    ];
    match table {
        TableKind::ArtistsPeriods => cells.extend([
            flag(f.bio_one),
            flag(f.bio_both),
            String::new(),
            String::new(),
            flag(f.arch_a),
            String::new(),
            flag(f.arch_b),
        ]),
        TableKind::Institutions => cells.push(String::new()),
    }
    cells
}

fn provenance(store: &Store) -> Provenance {
    Provenance {
        timestamp: Utc::now().to_rfc3339(),
        store_hash: store.content_hash(),
    }
}

fn expand_by_kind(store: &Store, subject_kind: EntityKind, kind: DatasetKind) -> ExpandedDataset {
    let mut holders: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
    for historian in store.entities_of_kind(EntityKind::Historian) {
        let subjects = store
            .objects_of(&historian.id, Predicate::Subject, Some(subject_kind))
            .unwrap_or_default();
        for s in subjects {
            holders.entry(s).or_default().push(historian.id.clone());
        }
    }
    let mut rows = Vec::new();
    for (subject, historians) in holders {
        for (i, a) in historians.iter().enumerate() {
            for b in &historians[i + 1..] {
                rows.push(PairRow {
                    pair: canonical_pair(a, b).expect("distinct historians"),
                    shared_subject: subject.clone(),
                    table: kind.row_table(),
                    annotation: None,
                    derived_flags: DerivedFlags::default(),
                });
            }
        }
    }
    rows.sort_by(|x, y| x.key().cmp(&y.key()));
    ExpandedDataset {
        kind,
        rows,
        provenance: provenance(store),
    }
}

/// One row per (historian pair, shared topic).
pub fn expand_topic_pairs(store: &Store) -> ExpandedDataset {
    expand_by_kind(store, EntityKind::Topic, DatasetKind::Topics)
}

/// One row per (historian pair, shared institution).
pub fn expand_institution_pairs(store: &Store) -> ExpandedDataset {
    expand_by_kind(store, EntityKind::Institution, DatasetKind::Institutions)
}

/// Keeps the topic rows whose pair also shares at least one institution.
pub fn merge_tables(topics: &ExpandedDataset, insts: &ExpandedDataset) -> Result<ExpandedDataset> {
    if topics.provenance.store_hash != insts.provenance.store_hash {
        return Err(Error::Provenance(
            topics.provenance.store_hash.clone(),
            insts.provenance.store_hash.clone(),
        ));
    }
    let inst_pairs = insts.unique_pairs();
    let rows = topics
        .rows
        .iter()
        .filter(|r| inst_pairs.contains(&r.pair))
        .cloned()
        .collect();
    Ok(ExpandedDataset {
        kind: DatasetKind::Merged,
        rows,
        provenance: topics.provenance.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct Attached {
    pub dataset: ExpandedDataset,
    /// Annotation records that matched no row.
    pub orphans: Vec<AnnotationRecord>,
}

/// Joins annotation records onto rows by (unordered pair, shared subject) and fills row flags.
pub fn attach_annotations(
    dataset: &ExpandedDataset,
    records: &[AnnotationRecord],
    flags: &FlagTable,
    source: FlagSource,
) -> Result<Attached> {
    let table = dataset.kind.row_table();
    let mut by_key: BTreeMap<(EntityPair, EntityId), &AnnotationRecord> = BTreeMap::new();
    let mut orphans = Vec::new();
    for record in records {
        if record.table() != table {
            return Err(Error::Schema(format!(
                "{} annotation supplied for a {} dataset",
                record.table().as_str(),
                dataset.kind.as_str()
            )));
        }
        match canonical_pair(&record.art_hist_1, &record.art_hist_2) {
            Ok(pair) => {
                by_key.insert((pair, record.shared_subject.clone()), record);
            }
            Err(_) => orphans.push(record.clone()),
        }
    }
    let mut used = BTreeSet::new();
    let mut out = dataset.clone();
    for row in &mut out.rows {
        let key = (row.pair.clone(), row.shared_subject.clone());
        row.annotation = by_key.get(&key).map(|r| (*r).clone());
        if row.annotation.is_some() {
            used.insert(key);
        }
        let own = match (source, &row.annotation) {
            (FlagSource::Annotations, Some(record)) => DerivedFlags::from_annotation(record, &row.pair),
            _ => None,
        };
        row.derived_flags = own.unwrap_or_else(|| flags.flags(&row.pair, source));
    }
    orphans.extend(
        by_key
            .into_iter()
            .filter(|(key, _)| !used.contains(key))
            .map(|(_, r)| r.clone()),
    );
    Ok(Attached { dataset: out, orphans })
}
