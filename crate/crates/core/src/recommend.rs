//! Rule and model recommendations, the known/unknown split and the reviewer
//! decision log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{DerivedFlags, FlagSource, FlagTable};
use crate::learn::metrics::KnownShare;
use crate::learn::{feature_vector, FeatureSpec, LabelOverrides, ModelKind, TrainedModel, Unit, Universe};
use crate::model::{canonical_pair, EntityId, EntityKind, EntityPair, Predicate, Statement, StatementSource, Store, TextField};

/// Named graph holding statements materialized from accepted decisions.
pub const DECISIONS_GRAPH: &str = "decisions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "R1_bio_mention")]
    R1BioMention,
    #[serde(rename = "R2_arch_mention")]
    R2ArchMention,
    #[serde(rename = "R3_materials")]
    R3Materials,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::R1BioMention => "R1_bio_mention",
            RuleId::R2ArchMention => "R2_arch_mention",
            RuleId::R3Materials => "R3_materials",
        }
    }

    pub fn triggers(self, flags: &DerivedFlags) -> bool {
        match self {
            RuleId::R1BioMention => flags.bio_one,
            RuleId::R2ArchMention => flags.arch_any(),
            RuleId::R3Materials => flags.materials(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecSource {
    Rule { rule: RuleId },
    Model { kind: ModelKind, spec: FeatureSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    BioMention,
    ArchMention,
    SharedTopic,
    SharedInstitution,
    /// A catalogued `includes_materials_relevant_to` link.
    Materials,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(rename = "type")]
    pub kind: EvidenceKind,
    /// Mentioned or shared entity.
    pub entity: EntityId,
    /// Entity whose text or statement carries the evidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<TextField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
}

impl Evidence {
    fn entity(kind: EvidenceKind, entity: &EntityId) -> Self {
        Evidence {
            kind,
            entity: entity.clone(),
            host: None,
            field: None,
            span: None,
            surface: None,
        }
    }

    fn mention(kind: EvidenceKind, m: &crate::mentions::Mention) -> Self {
        Evidence {
            kind,
            entity: m.entity_id.clone(),
            host: Some(m.host_entity.clone()),
            field: Some(m.field),
            span: Some(m.span),
            surface: Some(m.surface.clone()),
        }
    }
}

/// Identifies a recommendation independently of its score.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecRef {
    pub pair: EntityPair,
    pub predicate: Predicate,
}

impl fmt::Display for RecRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.pair.first, self.predicate.as_str(), self.pair.second)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecStatus {
    #[default]
    Pending,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Canonical for symmetric predicates, subject first otherwise.
    pub pair: EntityPair,
    pub predicate: Predicate,
    pub score: f64,
    pub source: RecSource,
    pub known: bool,
    pub evidence: Vec<Evidence>,
    #[serde(default)]
    pub status: RecStatus,
}

impl Recommendation {
    pub fn rec_ref(&self) -> RecRef {
        RecRef {
            pair: self.pair.clone(),
            predicate: self.predicate,
        }
    }
}

/// A historian pair with everything rules and models look at.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub pair: EntityPair,
    pub flags: DerivedFlags,
    pub shared_topics: BTreeSet<EntityId>,
    pub shared_institutions: BTreeSet<EntityId>,
    pub evidence: Vec<Evidence>,
}

impl Candidate {
    pub fn in_universe(&self, universe: Universe) -> bool {
        match universe {
            Universe::Topics => !self.shared_topics.is_empty(),
            Universe::Institutions => !self.shared_institutions.is_empty(),
            Universe::Merged => !self.shared_topics.is_empty() && !self.shared_institutions.is_empty(),
        }
    }

    pub fn features(&self, spec: &FeatureSpec) -> Vec<f64> {
        feature_vector(spec, &self.flags, self.shared_topics.len(), self.shared_institutions.len())
    }
}

/// Read-only view used to build candidates.
#[derive(Debug, Clone, Copy)]
pub struct RecContext<'a> {
    pub store: &'a Store,
    pub flags: &'a FlagTable,
    pub flag_source: FlagSource,
}

impl RecContext<'_> {
    fn shared(&self, a: &EntityId, b: &EntityId, kind: EntityKind) -> BTreeSet<EntityId> {
        self.store.shared_objects(a, b, Predicate::Subject, kind).unwrap_or_default()
    }

    /// Builds the candidate for a historian pair, or `None` when the two share
    /// nothing and no flag links them.
    pub fn candidate(&self, pair: &EntityPair) -> Option<Candidate> {
        let flags = self.flags.flags(pair, self.flag_source);
        let shared_topics = self.shared(&pair.first, &pair.second, EntityKind::Topic);
        let shared_institutions = self.shared(&pair.first, &pair.second, EntityKind::Institution);
        if shared_topics.is_empty() && shared_institutions.is_empty() && !flags.any() {
            return None;
        }
        let mentions = self.flags.mentions();
        let mut evidence = Vec::new();
        for (host, target) in [(&pair.first, &pair.second), (&pair.second, &pair.first)] {
            if let Some(m) = mentions.find(host, TextField::Biography, target) {
                evidence.push(Evidence::mention(EvidenceKind::BioMention, m));
            }
            for m in mentions.archive_mentions(host, target) {
                evidence.push(Evidence::mention(EvidenceKind::ArchMention, m));
            }
            for c in self.store.collections_of(host) {
                if self.store.has_relation(&c, Predicate::IncludesMaterialsRelevantTo, target) {
                    let mut e = Evidence::entity(EvidenceKind::Materials, target);
                    e.host = Some(c);
                    evidence.push(e);
                }
            }
        }
        // flags taken from annotations may lack a detectable text span
        for (set, kind) in [
            (flags.bio_one, EvidenceKind::BioMention),
            (flags.arch_any(), EvidenceKind::ArchMention),
            (flags.materials(), EvidenceKind::Materials),
        ] {
            if set && !evidence.iter().any(|e| e.kind == kind) {
                evidence.push(Evidence::entity(kind, &pair.second));
            }
        }
        evidence.extend(shared_topics.iter().map(|t| Evidence::entity(EvidenceKind::SharedTopic, t)));
        evidence.extend(shared_institutions.iter().map(|i| Evidence::entity(EvidenceKind::SharedInstitution, i)));
        Some(Candidate {
            pair: pair.clone(),
            flags,
            shared_topics,
            shared_institutions,
            evidence,
        })
    }

    /// Candidates pairing `historian` with every other historian.
    pub fn candidates_for(&self, historian: &EntityId) -> Vec<Candidate> {
        self.store
            .entities_of_kind(EntityKind::Historian)
            .filter(|e| &e.id != historian)
            .filter_map(|e| canonical_pair(historian, &e.id).ok())
            .filter_map(|p| self.candidate(&p))
            .collect()
    }

    /// Candidates over all historian pairs.
    pub fn all_candidates(&self) -> Vec<Candidate> {
        let ids: Vec<&EntityId> = self.store.entities_of_kind(EntityKind::Historian).map(|e| &e.id).collect();
        let mut out = Vec::new();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                if let Some(c) = canonical_pair(a, b).ok().and_then(|p| self.candidate(&p)) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Collections of `producer` whose description or subjects point at `target`.
    fn archive_hosts(&self, producer: &EntityId, target: &EntityId) -> BTreeSet<EntityId> {
        let all = self.store.collections_of(producer);
        let found: BTreeSet<EntityId> = all
            .iter()
            .filter(|c| {
                self.flags.mentions().find(c, TextField::Description, target).is_some()
                    || self.store.has_relation(c, Predicate::Subject, target)
            })
            .cloned()
            .collect();
        if found.is_empty() {
            all
        } else {
            found
        }
    }
}

fn rule_rec(pair: EntityPair, predicate: Predicate, rule: RuleId, c: &Candidate) -> Recommendation {
    Recommendation {
        pair,
        predicate,
        score: 1.0,
        source: RecSource::Rule { rule },
        known: c.flags.bio_one,
        evidence: c.evidence.clone(),
        status: RecStatus::Pending,
    }
}

/// Rules in R1, R2, R3 order; the first rule to emit a (pair, predicate) keeps it.
pub fn apply_rules(ctx: &RecContext<'_>, candidates: &[Candidate]) -> Vec<Recommendation> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |r: Recommendation, out: &mut Vec<Recommendation>| {
        if seen.insert(r.rec_ref()) {
            out.push(r);
        }
    };
    for c in candidates {
        if RuleId::R1BioMention.triggers(&c.flags) {
            push(rule_rec(c.pair.clone(), Predicate::InteractedWith, RuleId::R1BioMention, c), &mut out);
        }
        if RuleId::R2ArchMention.triggers(&c.flags) {
            push(rule_rec(c.pair.clone(), Predicate::InteractedWith, RuleId::R2ArchMention, c), &mut out);
            let directions = [
                (c.flags.arch_a, &c.pair.first, &c.pair.second),
                (c.flags.arch_b, &c.pair.second, &c.pair.first),
            ];
            for (set, producer, target) in directions {
                if !set {
                    continue;
                }
                for coll in ctx.archive_hosts(producer, target) {
                    let pair = EntityPair::directed(&coll, target);
                    push(rule_rec(pair, Predicate::IncludesMaterialsRelevantTo, RuleId::R2ArchMention, c), &mut out);
                }
            }
        }
        if RuleId::R3Materials.triggers(&c.flags) {
            push(rule_rec(c.pair.clone(), Predicate::InteractedWith, RuleId::R3Materials, c), &mut out);
        }
    }
    out
}

/// Positive model predictions not already covered by a rule.
pub fn score_candidates(
    ctx: &RecContext<'_>,
    model: &TrainedModel,
    unit: Unit,
    candidates: &[Candidate],
    rule_recs: &[Recommendation],
) -> Result<Vec<Recommendation>> {
    if model.unit != unit {
        return Err(Error::Configuration(format!(
            "model trained for {} used for {}",
            model.unit.as_str(),
            unit.as_str()
        )));
    }
    let taken: BTreeSet<RecRef> = rule_recs.iter().map(Recommendation::rec_ref).collect();
    let universe = model.spec.universe();
    let mut out = Vec::new();
    for c in candidates.iter().filter(|c| c.in_universe(universe)) {
        let p = model.predict(&c.features(&model.spec))?;
        if !p.label {
            continue;
        }
        let pairs = match unit {
            Unit::HistorianPair => vec![(c.pair.clone(), Predicate::InteractedWith)],
            Unit::CollectionPair => {
                let left = ctx.store.collections_of(&c.pair.first);
                let right = ctx.store.collections_of(&c.pair.second);
                let mut v = Vec::new();
                for a in &left {
                    for b in &right {
                        if let Ok(pair) = canonical_pair(a, b) {
                            v.push((pair, Predicate::IsRelatedTo));
                        }
                    }
                }
                v
            }
        };
        for (pair, predicate) in pairs {
            let rec = Recommendation {
                pair,
                predicate,
                score: p.score,
                source: RecSource::Model {
                    kind: model.kind,
                    spec: model.spec.clone(),
                },
                known: c.flags.bio_one,
                evidence: c.evidence.clone(),
                status: RecStatus::Pending,
            };
            if !taken.contains(&rec.rec_ref()) {
                out.push(rec);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    #[serde(flatten)]
    pub share: KnownShare,
    pub known: Vec<Recommendation>,
    pub unknown: Vec<Recommendation>,
}

pub fn partition_known_unknown(recs: &[Recommendation]) -> Partition {
    let (known, unknown): (Vec<_>, Vec<_>) = recs.iter().cloned().partition(|r| r.known);
    Partition {
        share: KnownShare::from_counts(known.len(), unknown.len()),
        known,
        unknown,
    }
}

/// Score descending, then pair, then predicate.
pub fn rank(recs: &mut [Recommendation]) {
    recs.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.pair.cmp(&b.pair))
            .then_with(|| a.predicate.cmp(&b.predicate))
    });
}

#[derive(Debug, Clone, Default)]
pub struct Models {
    pub historian: Option<TrainedModel>,
    pub collection: Option<TrainedModel>,
}

/// Rule and model recommendations for every candidate, deduplicated with rules first.
pub fn recommend_candidates(ctx: &RecContext<'_>, models: &Models, candidates: &[Candidate]) -> Result<Vec<Recommendation>> {
    let mut recs = apply_rules(ctx, candidates);
    if let Some(m) = &models.historian {
        let extra = score_candidates(ctx, m, Unit::HistorianPair, candidates, &recs)?;
        recs.extend(extra);
    }
    if let Some(m) = &models.collection {
        let mut extra = score_candidates(ctx, m, Unit::CollectionPair, candidates, &recs)?;
        // several historian pairs can map onto one collection pair; keep the best score
        rank(&mut extra);
        let mut seen = BTreeSet::new();
        extra.retain(|r| seen.insert(r.rec_ref()));
        recs.extend(extra);
    }
    Ok(recs)
}

/// Ranked recommendations touching a historian or collection, minus accepted
/// decisions and relations the catalogue already records.
pub fn recommend_for_entity(
    ctx: &RecContext<'_>,
    models: &Models,
    labels: &DecisionLabels,
    entity: &EntityId,
) -> Result<Vec<Recommendation>> {
    let kind = ctx.store.get(entity)?.kind;
    let historians: Vec<EntityId> = match kind {
        EntityKind::Historian => vec![entity.clone()],
        EntityKind::Collection => ctx.store.producers_of(entity).into_iter().collect(),
        other => {
            return Err(Error::Parameter(format!(
                "recommendations are for historians and collections, `{entity}` is a {}",
                other.as_str()
            )))
        }
    };
    let mut candidates: Vec<Candidate> = historians.iter().flat_map(|h| ctx.candidates_for(h)).collect();
    candidates.sort_by(|a, b| a.pair.cmp(&b.pair));
    candidates.dedup_by(|a, b| a.pair == b.pair);

    let mut recs = recommend_candidates(ctx, models, &candidates)?;
    recs.retain(|r| r.pair.contains(entity) || (kind == EntityKind::Historian && r.predicate != Predicate::IsRelatedTo));
    recs.retain(|r| !ctx.store.has_relation(&r.pair.first, r.predicate, &r.pair.second));
    let mut out = Vec::with_capacity(recs.len());
    for mut r in recs {
        match labels.get(&r.rec_ref()) {
            Some(true) => continue,
            Some(false) => r.status = RecStatus::Rejected,
            None => {}
        }
        out.push(r);
    }
    rank(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            other => Err(Error::Parameter(format!("unknown verdict `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub request_id: String,
    pub pair: EntityPair,
    pub predicate: Predicate,
    pub verdict: Verdict,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

impl Decision {
    pub fn rec_ref(&self) -> RecRef {
        RecRef {
            pair: self.pair.clone(),
            predicate: self.predicate,
        }
    }
}

/// Latest verdict per recommendation, true for accept.
pub type DecisionLabels = BTreeMap<RecRef, bool>;

/// Append-only JSON-lines log. Entries are never rewritten.
#[derive(Debug, Default)]
pub struct DecisionLog {
    path: Option<PathBuf>,
    entries: Vec<Decision>,
}

impl DecisionLog {
    pub fn in_memory() -> Self {
        DecisionLog::default()
    }

    /// Opens a log file, reading any existing entries. A missing file is an empty log.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        if path.exists() {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let d: Decision = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                entries.push(d);
            }
        }
        Ok(DecisionLog {
            path: Some(path.to_path_buf()),
            entries,
        })
    }

    pub fn entries(&self) -> &[Decision] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, request_id: &str) -> Option<&Decision> {
        self.entries.iter().find(|d| d.request_id == request_id)
    }

    /// Appends a decision. Returns `false` for a retry of an identical request;
    /// a different payload under a used request id is a conflict.
    pub fn append(&mut self, decision: Decision) -> Result<bool> {
        if let Some(prev) = self.find(&decision.request_id) {
            let same = prev.pair == decision.pair
                && prev.predicate == decision.predicate
                && prev.verdict == decision.verdict
                && prev.reviewer == decision.reviewer;
            return if same {
                Ok(false)
            } else {
                Err(Error::Conflict(format!("request `{}` already used", decision.request_id)))
            };
        }
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let line = serde_json::to_string(&decision).map_err(|e| Error::Serialization(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
            f.sync_data().map_err(|e| Error::io(path, e))?;
        }
        self.entries.push(decision);
        Ok(true)
    }

    /// Replays the log in order; the latest verdict wins.
    pub fn labels(&self) -> DecisionLabels {
        replay(&self.entries)
    }
}

pub fn replay(entries: &[Decision]) -> DecisionLabels {
    let mut labels = BTreeMap::new();
    for d in entries {
        labels.insert(d.rec_ref(), d.verdict == Verdict::Accept);
    }
    labels
}

fn materialize(store: &mut Store, d: &Decision) -> Result<()> {
    let (s, o) = (&d.pair.first, &d.pair.second);
    match d.verdict {
        Verdict::Accept => {
            let stmt = Statement::new(s, d.predicate, o, DECISIONS_GRAPH).with_source(StatementSource::Decision);
            store.add_statement(stmt)?;
        }
        Verdict::Reject => {
            store.retract_statement(s, d.predicate, o, DECISIONS_GRAPH);
        }
    }
    Ok(())
}

/// Brings the store's decisions graph in line with a log, e.g. after a restart.
pub fn apply_log(store: &mut Store, log: &DecisionLog) -> Result<()> {
    for d in log.entries() {
        materialize(store, d)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub decision: Decision,
    /// False when the request id had already been recorded.
    pub applied: bool,
}

/// Validates, logs and materializes a reviewer decision. `issued` says
/// whether the referenced recommendation exists.
pub fn record_decision(
    store: &mut Store,
    log: &mut DecisionLog,
    decision: Decision,
    issued: impl Fn(&RecRef) -> bool,
) -> Result<DecisionOutcome> {
    if decision.reviewer.trim().is_empty() || decision.request_id.trim().is_empty() {
        return Err(Error::Parameter("reviewer and request_id are required".into()));
    }
    if let Some(prev) = log.find(&decision.request_id) {
        // a retry: same answer, no new effect
        let prev = prev.clone();
        log.append(decision)?;
        return Ok(DecisionOutcome {
            decision: prev,
            applied: false,
        });
    }
    let rec = decision.rec_ref();
    if !issued(&rec) {
        return Err(Error::NotFound(format!("recommendation `{rec}`")));
    }
    log.append(decision.clone())?;
    materialize(store, &decision)?;
    tracing::info!(rec = %rec, verdict = ?decision.verdict, reviewer = %decision.reviewer, "decision recorded");
    Ok(DecisionOutcome {
        decision,
        applied: true,
    })
}

/// Training labels implied by decisions. Collection decisions are keyed by
/// the pair of historians producing the two collections.
pub fn label_overrides(store: &Store, labels: &DecisionLabels) -> LabelOverrides {
    let mut out = LabelOverrides::default();
    for (r, &v) in labels {
        let kinds = (store.kind_of(&r.pair.first), store.kind_of(&r.pair.second));
        match (r.predicate, kinds) {
            (Predicate::InteractedWith, (Some(EntityKind::Historian), Some(EntityKind::Historian))) => {
                if let Ok(p) = canonical_pair(&r.pair.first, &r.pair.second) {
                    out.historian.insert(p, v);
                }
            }
            (Predicate::IsRelatedTo, (Some(EntityKind::Collection), Some(EntityKind::Collection))) => {
                for a in store.producers_of(&r.pair.first) {
                    for b in store.producers_of(&r.pair.second) {
                        if let Ok(p) = canonical_pair(&a, &b) {
                            out.collection.insert(p, v);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{ModelParams, Unit};
    use crate::mentions::{AliasIndex, MentionTable};
    use crate::model::{Entity, TextRecord};

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn pair(a: &str, b: &str) -> EntityPair {
        canonical_pair(&id(a), &id(b)).unwrap()
    }

    /// H1-T1, H2-T1, H3-T2, H1-I1, H2-I1; H1's biography names H2; C1 produced by H1.
    fn f1() -> Store {
        let mut store = Store::new();
        for (i, k, l) in [
            ("H1", EntityKind::Historian, "Adolfo Venturi"),
            ("H2", EntityKind::Historian, "Ernst Steinmann"),
            ("H3", EntityKind::Historian, "Roberto Longhi"),
            ("H4", EntityKind::Historian, "Max Dvorak"),
            ("T1", EntityKind::Topic, "Renaissance"),
            ("T2", EntityKind::Topic, "Baroque"),
            ("I1", EntityKind::Institution, "Hertziana"),
            ("C1", EntityKind::Collection, "Venturi papers"),
            ("C2", EntityKind::Collection, "Steinmann papers"),
        ] {
            store.add_entity(Entity::new(i, k, l).unwrap()).unwrap();
        }
        for (s, p, o) in [
            ("H1", Predicate::Subject, "T1"),
            ("H2", Predicate::Subject, "T1"),
            ("H3", Predicate::Subject, "T2"),
            ("H1", Predicate::Subject, "I1"),
            ("H2", Predicate::Subject, "I1"),
            ("H1", Predicate::Produced, "C1"),
            ("H2", Predicate::Produced, "C2"),
        ] {
            store.add_statement(Statement::new(&id(s), p, &id(o), "g1")).unwrap();
        }
        store
            .set_text(TextRecord {
                entity_id: id("H1"),
                field: TextField::Biography,
                text: "He corresponded with Ernst Steinmann for years.".into(),
            })
            .unwrap();
        store
    }

    fn flags(store: &Store) -> FlagTable {
        FlagTable::build(store, MentionTable::build(store, &AliasIndex::build(store)))
    }

    fn ctx<'a>(store: &'a Store, flags: &'a FlagTable) -> RecContext<'a> {
        RecContext {
            store,
            flags,
            flag_source: FlagSource::Mentions,
        }
    }

    fn constant_model(unit: Unit, spec: &str, intercept: f64) -> TrainedModel {
        let spec = FeatureSpec::parse(spec).unwrap();
        TrainedModel {
            kind: ModelKind::Lr,
            unit,
            seed: 0,
            params: ModelParams::Lr {
                weights: vec![0.0; spec.dim()],
                intercept,
                iterations: 0,
            },
            spec,
        }
    }

    #[test]
    fn r1_on_f1() {
        let store = f1();
        let ft = flags(&store);
        let ctx = ctx(&store, &ft);
        let cands = ctx.all_candidates();
        let recs = apply_rules(&ctx, &cands);
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.pair, pair("H1", "H2"));
        assert_eq!(r.predicate, Predicate::InteractedWith);
        assert_eq!(r.score, 1.0);
        assert_eq!(r.source, RecSource::Rule { rule: RuleId::R1BioMention });
        assert!(r.known);
        let bio = r.evidence.iter().find(|e| e.kind == EvidenceKind::BioMention).unwrap();
        assert_eq!(bio.host, Some(id("H1")));
        assert_eq!(bio.surface.as_deref(), Some("Ernst Steinmann"));
    }

    #[test]
    fn no_flags_no_rules() {
        let mut store = f1();
        store = {
            let mut s = Store::new();
            for e in store.entities() {
                s.add_entity(e.clone()).unwrap();
            }
            for st in store.statements() {
                s.add_statement(st).unwrap();
            }
            s
        };
        let ft = flags(&store);
        let ctx = ctx(&store, &ft);
        assert!(apply_rules(&ctx, &ctx.all_candidates()).is_empty());
    }

    #[test]
    fn r2_direction_from_mention_host() {
        let mut store = f1();
        store
            .set_text(TextRecord {
                entity_id: id("C2"),
                field: TextField::Description,
                text: "Letters from Adolfo Venturi.".into(),
            })
            .unwrap();
        let ft = flags(&store);
        let ctx = ctx(&store, &ft);
        let recs = apply_rules(&ctx, &ctx.all_candidates());
        let mat: Vec<_> = recs
            .iter()
            .filter(|r| r.predicate == Predicate::IncludesMaterialsRelevantTo)
            .collect();
        assert_eq!(mat.len(), 1);
        assert_eq!(mat[0].pair, EntityPair::directed(&id("C2"), &id("H1")));
        // R1 and R2 both emit interacted_with for H1-H2; only one survives
        assert_eq!(recs.iter().filter(|r| r.predicate == Predicate::InteractedWith).count(), 1);
    }

    #[test]
    fn model_threshold_and_rule_precedence() {
        let store = f1();
        let ft = flags(&store);
        let ctx = ctx(&store, &ft);
        let cands = ctx.all_candidates();
        let rules = apply_rules(&ctx, &cands);
        // sigmoid(2.1972) ~ 0.9
        let high = constant_model(Unit::HistorianPair, "topics", (9.0f64).ln());
        let scored = score_candidates(&ctx, &high, Unit::HistorianPair, &cands, &rules).unwrap();
        assert!(scored.is_empty(), "H1-H2 is the only topic pair and R1 already covers it");
        let scored = score_candidates(&ctx, &high, Unit::HistorianPair, &cands, &[]).unwrap();
        assert_eq!(scored.len(), 1);
        assert!((scored[0].score - 0.9).abs() < 1e-12);

        let low = constant_model(Unit::HistorianPair, "topics", (0.4f64 / 0.6).ln());
        assert!(score_candidates(&ctx, &low, Unit::HistorianPair, &cands, &[]).unwrap().is_empty());

        let err = score_candidates(&ctx, &high, Unit::CollectionPair, &cands, &[]);
        assert!(matches!(err, Err(Error::Configuration(_))));
    }

    #[test]
    fn collection_model_recommends_collection_pairs() {
        let store = f1();
        let ft = flags(&store);
        let ctx = ctx(&store, &ft);
        let models = Models {
            historian: None,
            collection: Some(constant_model(Unit::CollectionPair, "bio", 1.0)),
        };
        let recs = recommend_for_entity(&ctx, &models, &DecisionLabels::new(), &id("C1")).unwrap();
        let rel: Vec<_> = recs.iter().filter(|r| r.predicate == Predicate::IsRelatedTo).collect();
        assert_eq!(rel.len(), 1);
        assert_eq!(rel[0].pair, pair("C1", "C2"));
    }

    #[test]
    fn entity_recommendations_rank_and_filter() {
        let mut store = f1();
        // H4 shares two topics and the institution with H1
        for o in ["T1", "T2", "I1"] {
            store.add_statement(Statement::new(&id("H4"), Predicate::Subject, &id(o), "g1")).unwrap();
        }
        store.add_statement(Statement::new(&id("H1"), Predicate::Subject, &id("T2"), "g1")).unwrap();
        let ft = flags(&store);
        let c = ctx(&store, &ft);
        let models = Models {
            historian: Some(constant_model(Unit::HistorianPair, "inst+topics", 2.0)),
            collection: None,
        };
        let recs = recommend_for_entity(&c, &models, &DecisionLabels::new(), &id("H1")).unwrap();
        let h4 = recs.iter().find(|r| r.pair == pair("H1", "H4")).unwrap();
        let shared: BTreeSet<_> = h4.evidence.iter().map(|e| (e.kind, e.entity.as_str().to_string())).collect();
        assert_eq!(
            shared,
            BTreeSet::from([
                (EvidenceKind::SharedTopic, "T1".to_string()),
                (EvidenceKind::SharedTopic, "T2".to_string()),
                (EvidenceKind::SharedInstitution, "I1".to_string()),
            ])
        );
        assert!(!h4.known);
        assert_eq!(recs[0].score, 1.0);
        for w in recs.windows(2) {
            assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].pair <= w[1].pair));
        }

        // a catalogued relation drops out
        store
            .add_statement(Statement::new(&id("H4"), Predicate::InteractedWith, &id("H1"), "g1"))
            .unwrap();
        let ft = flags(&store);
        let c = ctx(&store, &ft);
        let recs = recommend_for_entity(&c, &models, &DecisionLabels::new(), &id("H1")).unwrap();
        assert!(recs.iter().all(|r| r.pair != pair("H1", "H4")));

        // accepted drops out, rejected stays flagged
        let mut labels = DecisionLabels::new();
        labels.insert(
            RecRef {
                pair: pair("H1", "H2"),
                predicate: Predicate::InteractedWith,
            },
            true,
        );
        let recs = recommend_for_entity(&c, &models, &labels, &id("H1")).unwrap();
        assert!(recs.iter().all(|r| r.pair != pair("H1", "H2")));
        labels.insert(
            RecRef {
                pair: pair("H1", "H2"),
                predicate: Predicate::InteractedWith,
            },
            false,
        );
        let recs = recommend_for_entity(&c, &models, &labels, &id("H1")).unwrap();
        assert_eq!(recs.iter().find(|r| r.pair == pair("H1", "H2")).unwrap().status, RecStatus::Rejected);
    }

    #[test]
    fn isolated_entity_and_bad_ids() {
        let store = f1();
        let ft = flags(&store);
        let c = ctx(&store, &ft);
        let models = Models::default();
        // H3's only topic is unshared
        assert!(recommend_for_entity(&c, &models, &DecisionLabels::new(), &id("H3")).unwrap().is_empty());
        assert!(matches!(
            recommend_for_entity(&c, &models, &DecisionLabels::new(), &id("nobody")),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(
            recommend_for_entity(&c, &models, &DecisionLabels::new(), &id("T1")),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn partition_examples() {
        let mk = |known| Recommendation {
            pair: pair("H1", "H2"),
            predicate: Predicate::InteractedWith,
            score: 1.0,
            source: RecSource::Rule { rule: RuleId::R1BioMention },
            known,
            evidence: vec![],
            status: RecStatus::Pending,
        };
        let p = partition_known_unknown(&[mk(false), mk(false)]);
        assert_eq!((p.share.known_pct, p.share.unknown_pct), (Some(0), Some(100)));
        let p = partition_known_unknown(&[mk(true)]);
        assert_eq!(p.share.known_pct, Some(100));
        assert_eq!(partition_known_unknown(&[]).share.known_pct, None);
    }

    fn decision(rid: &str, verdict: Verdict, minute: u32) -> Decision {
        Decision {
            request_id: rid.into(),
            pair: pair("H1", "H2"),
            predicate: Predicate::InteractedWith,
            verdict,
            reviewer: "reviewer-a".into(),
            timestamp: chrono::TimeZone::with_ymd_and_hms(&Utc, 2024, 5, 1, 12, minute, 0).unwrap(),
        }
    }

    #[test]
    fn accept_then_reject() {
        let mut store = f1();
        let mut log = DecisionLog::in_memory();
        let issued = |r: &RecRef| r.pair == pair("H1", "H2");
        let out = record_decision(&mut store, &mut log, decision("r1", Verdict::Accept, 0), issued).unwrap();
        assert!(out.applied);
        assert!(store
            .statements()
            .any(|s| s.graph == DECISIONS_GRAPH && s.source == StatementSource::Decision));
        assert_eq!(log.labels().values().copied().collect::<Vec<_>>(), vec![true]);
        assert_eq!(label_overrides(&store, &log.labels()).historian.get(&pair("H1", "H2")), Some(&true));

        record_decision(&mut store, &mut log, decision("r2", Verdict::Reject, 1), issued).unwrap();
        assert!(!store.statements().any(|s| s.graph == DECISIONS_GRAPH));
        assert_eq!(log.len(), 2, "both verdicts retained");
        assert_eq!(log.labels().values().copied().collect::<Vec<_>>(), vec![false]);
    }

    #[test]
    fn retries_and_dangling_refs() {
        let mut store = f1();
        let mut log = DecisionLog::in_memory();
        let issued = |r: &RecRef| r.pair == pair("H1", "H2");
        record_decision(&mut store, &mut log, decision("r1", Verdict::Accept, 0), issued).unwrap();
        let again = record_decision(&mut store, &mut log, decision("r1", Verdict::Accept, 5), issued).unwrap();
        assert!(!again.applied);
        assert_eq!(log.len(), 1);
        let clash = record_decision(&mut store, &mut log, decision("r1", Verdict::Reject, 6), issued);
        assert!(matches!(clash, Err(Error::Conflict(_))));

        let mut d = decision("r9", Verdict::Accept, 0);
        d.pair = pair("H1", "H3");
        assert!(matches!(record_decision(&mut store, &mut log, d, issued), Err(Error::NotFound(_))));
    }

    #[test]
    fn log_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decisions.jsonl");
        let mut log = DecisionLog::open(&path).unwrap();
        log.append(decision("a", Verdict::Accept, 0)).unwrap();
        log.append(decision("b", Verdict::Reject, 1)).unwrap();
        let reread = DecisionLog::open(&path).unwrap();
        assert_eq!(reread.entries(), log.entries());
        assert_eq!(reread.labels(), log.labels());

        let mut store = f1();
        apply_log(&mut store, &reread).unwrap();
        assert!(!store.statements().any(|s| s.graph == DECISIONS_GRAPH));
    }
}
