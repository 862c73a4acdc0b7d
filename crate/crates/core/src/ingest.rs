//! Dump file readers and writers.
//!
//! Entities and texts are line-delimited JSON objects, statements and
//! annotation tables are comma-delimited with a header row. Any malformed
//! line aborts the whole file.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Entity, EntityId, Predicate, Statement, StatementSource, Store, TextRecord};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    ArtistsPeriods,
    Institutions,
}

impl TableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TableKind::ArtistsPeriods => "artists_periods",
            TableKind::Institutions => "institutions",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            TableKind::ArtistsPeriods => &["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11"],
            TableKind::Institutions => &["I1", "I2", "I3", "I4", "I5"],
        }
    }
}

/// An annotation cell. `Half` marks an uncertain relation and only exists before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Label {
    #[default]
    Zero,
    Half,
    One,
}

impl Label {
    pub fn is_one(self) -> bool {
        self == Label::One
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Label::One
        } else {
            Label::Zero
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Zero => "0",
            Label::Half => "0.5",
            Label::One => "1",
        }
    }

    /// Blank cells read as 0.
    fn parse(cell: &str, line: usize) -> Result<Self> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Ok(Label::Zero);
        }
        let err = || Error::Label {
            line,
            value: cell.to_string(),
        };
        let v: f64 = cell.parse().map_err(|_| err())?;
        if v == 0.0 {
            Ok(Label::Zero)
        } else if v == 0.5 {
            Ok(Label::Half)
        } else if v == 1.0 {
            Ok(Label::One)
        } else {
            Err(err())
        }
    }
}

/// Columns A5..A11 of the artists/periods table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TopicColumns {
    pub recorded_in_one_bio: Label,
    pub recorded_in_both_bios: Label,
    pub collaborated_on_subject: Label,
    pub h2_relevant_to_h1_archive: Label,
    pub h2_mentioned_in_h1_archive: Label,
    pub h1_relevant_to_h2_archive: Label,
    pub h1_mentioned_in_h2_archive: Label,
}

impl TopicColumns {
    fn labels_mut(&mut self) -> [&mut Label; 7] {
        [
            &mut self.recorded_in_one_bio,
            &mut self.recorded_in_both_bios,
            &mut self.collaborated_on_subject,
            &mut self.h2_relevant_to_h1_archive,
            &mut self.h2_mentioned_in_h1_archive,
            &mut self.h1_relevant_to_h2_archive,
            &mut self.h1_mentioned_in_h2_archive,
        ]
    }

    /// A8 or A10.
    pub fn materials(&self) -> bool {
        self.h2_relevant_to_h1_archive.is_one() || self.h1_relevant_to_h2_archive.is_one()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum AnnotationDetail {
    ArtistsPeriods(TopicColumns),
    Institutions { relation_kind_note: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub art_hist_1: EntityId,
    pub art_hist_2: EntityId,
    pub shared_subject: EntityId,
    pub relation_exists: Label,
    pub detail: AnnotationDetail,
}

impl AnnotationRecord {
    pub fn table(&self) -> TableKind {
        match self.detail {
            AnnotationDetail::ArtistsPeriods(_) => TableKind::ArtistsPeriods,
            AnnotationDetail::Institutions { .. } => TableKind::Institutions,
        }
    }

    pub fn topic_columns(&self) -> Option<&TopicColumns> {
        match &self.detail {
            AnnotationDetail::ArtistsPeriods(cols) => Some(cols),
            AnnotationDetail::Institutions { .. } => None,
        }
    }
}

/// Replaces every 0.5 with 0. Returns how many cells were replaced.
pub fn normalize_labels(records: &mut [AnnotationRecord]) -> usize {
    let mut replaced = 0;
    let mut fix = |label: &mut Label| {
        if *label == Label::Half {
            *label = Label::Zero;
            replaced += 1;
        }
    };
    for record in records.iter_mut() {
        fix(&mut record.relation_exists);
        if let AnnotationDetail::ArtistsPeriods(cols) = &mut record.detail {
            for label in cols.labels_mut() {
                fix(label);
            }
        }
    }
    replaced
}

/// File locations of one dump, relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpManifest {
    pub format_version: String,
    pub entities_path: PathBuf,
    pub statements_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts_path: Option<PathBuf>,
    #[serde(default)]
    pub annotations_paths: AnnotationPaths,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artists_periods: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub institutions: Option<PathBuf>,
}

impl DumpManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DumpManifest =
            toml::from_str(&raw).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported dump format version `{}`",
                manifest.format_version
            )));
        }
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let raw = toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.base_dir.join(rel)
        }
    }
}

/// Everything read from one manifest.
#[derive(Debug, Clone, Default)]
pub struct LoadedDump {
    pub store: Store,
    pub artists_periods: Vec<AnnotationRecord>,
    pub institutions: Vec<AnnotationRecord>,
    /// Number of 0.5 cells replaced with 0 across both tables.
    pub half_labels_replaced: usize,
}

pub fn load_dump(manifest: &DumpManifest) -> Result<LoadedDump> {
    let mut dump = LoadedDump::default();
    load_entities(&mut dump.store, &manifest.resolve(&manifest.entities_path))?;
    load_statements(&mut dump.store, &manifest.resolve(&manifest.statements_path))?;
    if let Some(texts) = &manifest.texts_path {
        load_texts(&mut dump.store, &manifest.resolve(texts))?;
    }
    if let Some(p) = &manifest.annotations_paths.artists_periods {
        dump.artists_periods = load_annotations(&manifest.resolve(p), TableKind::ArtistsPeriods)?;
        dump.half_labels_replaced += normalize_labels(&mut dump.artists_periods);
    }
    if let Some(p) = &manifest.annotations_paths.institutions {
        dump.institutions = load_annotations(&manifest.resolve(p), TableKind::Institutions)?;
        dump.half_labels_replaced += normalize_labels(&mut dump.institutions);
    }
    Ok(dump)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

fn json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e))?;
        out.push((line_no, value));
    }
    Ok(out)
}

pub fn load_entities(store: &mut Store, path: &Path) -> Result<usize> {
    let entities: Vec<(usize, Entity)> = json_lines(path)?;
    let count = entities.len();
    for (line, entity) in entities {
        store.add_entity(entity).map_err(|e| match e {
            Error::Schema(msg) => parse_err(path, line, msg),
            other => other,
        })?;
    }
    Ok(count)
}

#[derive(Debug, Deserialize)]
struct StatementRow {
    subject: String,
    predicate: String,
    object: String,
    graph: String,
    #[serde(default)]
    source: Option<StatementSource>,
}

/// Returns the number of statements actually added (after deduplication).
pub fn load_statements(store: &mut Store, path: &Path) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e))?.clone();
    let expected = ["subject", "predicate", "object", "graph"];
    if headers.len() < 4 || headers.iter().take(4).ne(expected) {
        return Err(Error::Schema(format!(
            "{}: statements header must start with subject,predicate,object,graph",
            path.display()
        )));
    }
    let mut added = 0;
    for row in reader.deserialize::<StatementRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e)
        })?;
        let stmt = Statement {
            subject: EntityId::new(row.subject)?,
            predicate: row.predicate.parse::<Predicate>()?,
            object: EntityId::new(row.object)?,
            graph: row.graph,
            source: row.source.unwrap_or(StatementSource::Catalogue),
        };
        if store.add_statement(stmt)? {
            added += 1;
        }
    }
    Ok(added)
}

/// Returns the number of records read; a repeated (entity, field) replaces the earlier text.
pub fn load_texts(store: &mut Store, path: &Path) -> Result<usize> {
    let records: Vec<(usize, TextRecord)> = json_lines(path)?;
    let count = records.len();
    for (_, record) in records {
        store.set_text(record)?;
    }
    Ok(count)
}

pub fn load_annotations(path: &Path, table: TableKind) -> Result<Vec<AnnotationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e))?.clone();
    if headers.iter().ne(table.header().iter().copied()) {
        return Err(Error::Schema(format!(
            "{}: expected header {} for table {}, found {}",
            path.display(),
            table.header().join(","),
            table.as_str(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(path, line, e)
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |i: usize| row.get(i).unwrap_or("");
        let id = |i: usize| EntityId::new(cell(i)).map_err(|_| parse_err(path, line, format!("empty id in column {}", table.header()[i])));
        let label = |i: usize| Label::parse(cell(i), line);
        let detail = match table {
            TableKind::ArtistsPeriods => AnnotationDetail::ArtistsPeriods(TopicColumns {
                recorded_in_one_bio: label(4)?,
                recorded_in_both_bios: label(5)?,
                collaborated_on_subject: label(6)?,
                h2_relevant_to_h1_archive: label(7)?,
                h2_mentioned_in_h1_archive: label(8)?,
                h1_relevant_to_h2_archive: label(9)?,
                h1_mentioned_in_h2_archive: label(10)?,
            }),
            TableKind::Institutions => AnnotationDetail::Institutions {
                relation_kind_note: Some(cell(4).to_string()).filter(|s| !s.is_empty()),
            },
        };
        out.push(AnnotationRecord {
            art_hist_1: id(0)?,
            art_hist_2: id(1)?,
            shared_subject: id(2)?,
            relation_exists: label(3)?,
            detail,
        });
    }
    Ok(out)
}

/// One line of an annotation-format table; `None` cells are written blank.
pub(crate) fn annotation_cells(record: &AnnotationRecord) -> Vec<String> {
    let mut cells = vec![
        record.art_hist_1.to_string(),
        record.art_hist_2.to_string(),
        record.shared_subject.to_string(),
        record.relation_exists.as_str().to_string(),
    ];
    match &record.detail {
        AnnotationDetail::ArtistsPeriods(c) => cells.extend(
            [
                c.recorded_in_one_bio,
                c.recorded_in_both_bios,
                c.collaborated_on_subject,
                c.h2_relevant_to_h1_archive,
                c.h2_mentioned_in_h1_archive,
                c.h1_relevant_to_h2_archive,
                c.h1_mentioned_in_h2_archive,
            ]
            .map(|l| l.as_str().to_string()),
        ),
        AnnotationDetail::Institutions { relation_kind_note } => {
            cells.push(relation_kind_note.clone().unwrap_or_default())
        }
    }
    cells
}

pub(crate) fn write_table<I>(path: &Path, table: TableKind, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    writer.write_record(table.header()).map_err(ser)?;
    for row in rows {
        writer.write_record(&row).map_err(ser)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn write_annotations(path: &Path, table: TableKind, records: &[AnnotationRecord]) -> Result<()> {
    write_table(path, table, records.iter().map(annotation_cells))
}

/// Writes the store as re-ingestable dump files plus a `manifest.toml`, returning the manifest path.
pub fn export_store(store: &Store, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let entities_path = dir.join("entities.jsonl");
    write_json_lines(&entities_path, store.entities())?;

    let statements_path = dir.join("statements.csv");
    let with_source = store.statements().any(|s| s.source != StatementSource::Catalogue);
    {
        let file = File::create(&statements_path).map_err(|e| Error::io(&statements_path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        let mut header = vec!["subject", "predicate", "object", "graph"];
        if with_source {
            header.push("source");
        }
        writer.write_record(&header).map_err(ser)?;
        for stmt in store.statements() {
            let mut row = vec![
                stmt.subject.to_string(),
                stmt.predicate.to_string(),
                stmt.object.to_string(),
                stmt.graph.clone(),
            ];
            if with_source {
                row.push(source_token(stmt.source).to_string());
            }
            writer.write_record(&row).map_err(ser)?;
        }
        writer.flush().map_err(|e| Error::io(&statements_path, e))?;
    }

    let texts_path = dir.join("texts.jsonl");
    write_json_lines(&texts_path, store.texts())?;

    let manifest = DumpManifest {
        format_version: FORMAT_VERSION.to_string(),
        entities_path: "entities.jsonl".into(),
        statements_path: "statements.csv".into(),
        texts_path: Some("texts.jsonl".into()),
        annotations_paths: AnnotationPaths::default(),
        base_dir: dir.to_path_buf(),
    };
    let manifest_path = dir.join("manifest.toml");
    manifest.write(&manifest_path)?;
    Ok(manifest_path)
}

/// [`export_store`] plus the annotation tables, so the dump re-ingests completely.
pub fn export_dump(
    store: &Store,
    artists_periods: &[AnnotationRecord],
    institutions: &[AnnotationRecord],
    dir: &Path,
) -> Result<PathBuf> {
    let manifest_path = export_store(store, dir)?;
    let mut manifest = DumpManifest::read(&manifest_path)?;
    if !artists_periods.is_empty() {
        write_annotations(&dir.join("artists_periods.csv"), TableKind::ArtistsPeriods, artists_periods)?;
        manifest.annotations_paths.artists_periods = Some("artists_periods.csv".into());
    }
    if !institutions.is_empty() {
        write_annotations(&dir.join("institutions.csv"), TableKind::Institutions, institutions)?;
        manifest.annotations_paths.institutions = Some("institutions.csv".into());
    }
    manifest.write(&manifest_path)?;
    Ok(manifest_path)
}

fn source_token(source: StatementSource) -> &'static str {
    match source {
        StatementSource::Catalogue => "catalogue",
        StatementSource::MentionDetector => "mention_detector",
        StatementSource::Annotation => "annotation",
        StatementSource::Decision => "decision",
    }
}

pub(crate) fn write_json_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::Serialization(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
