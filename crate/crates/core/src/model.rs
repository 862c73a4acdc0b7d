//! Typed in-memory store of catalogue entities, statements tagged with their
//! named graph, and the free-text biographies and collection descriptions.
//!
//! Everything is kept in ordered maps so that iteration, export and hashing
//! are deterministic for a given store state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Catalogue identifier of an entity. Comparison is exact byte equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::Schema("entity id must not be empty".into()));
        }
        Ok(EntityId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        EntityId::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> Self {
        id.0
    }
}

impl FromStr for EntityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityId::new(s)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Historian,
    Collection,
    Institution,
    /// Artists and periods alike.
    Topic,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Historian => "historian",
            EntityKind::Collection => "collection",
            EntityKind::Institution => "institution",
            EntityKind::Topic => "topic",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
}

impl Entity {
    pub fn new(id: &str, kind: EntityKind, label: &str) -> Result<Self> {
        let entity = Entity {
            id: EntityId::new(id)?,
            kind,
            label: label.to_string(),
            aliases: Vec::new(),
            external_id: None,
        };
        entity.validate()?;
        Ok(entity)
    }

    pub fn with_aliases<I, S>(mut self, aliases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.aliases = aliases.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::Schema(format!("entity `{}` has an empty label", self.id)));
        }
        let mut seen = BTreeSet::new();
        for alias in &self.aliases {
            if !seen.insert(alias) {
                return Err(Error::Schema(format!(
                    "entity `{}` lists alias `{alias}` twice",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Closed relation vocabulary of the catalogue and of the relations the engine proposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Produced,
    Subject,
    InteractedWith,
    InteractedOn,
    ProducedBy,
    IncludesMaterialsRelevantTo,
    HeldBy,
    IsRelatedTo,
}

impl Predicate {
    pub const ALL: [Predicate; 8] = [
        Predicate::Produced,
        Predicate::Subject,
        Predicate::InteractedWith,
        Predicate::InteractedOn,
        Predicate::ProducedBy,
        Predicate::IncludesMaterialsRelevantTo,
        Predicate::HeldBy,
        Predicate::IsRelatedTo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Produced => "produced",
            Predicate::Subject => "subject",
            Predicate::InteractedWith => "interacted_with",
            Predicate::InteractedOn => "interacted_on",
            Predicate::ProducedBy => "produced_by",
            Predicate::IncludesMaterialsRelevantTo => "includes_materials_relevant_to",
            Predicate::HeldBy => "held_by",
            Predicate::IsRelatedTo => "is_related_to",
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Predicate::InteractedWith | Predicate::IsRelatedTo)
    }
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Predicate::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Vocabulary(s.to_string()))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementSource {
    Catalogue,
    MentionDetector,
    Annotation,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Statement {
    pub subject: EntityId,
    pub predicate: Predicate,
    pub object: EntityId,
    pub graph: String,
    pub source: StatementSource,
}

impl Statement {
    pub fn new(subject: &EntityId, predicate: Predicate, object: &EntityId, graph: &str) -> Self {
        Statement {
            subject: subject.clone(),
            predicate,
            object: object.clone(),
            graph: graph.to_string(),
            source: StatementSource::Catalogue,
        }
    }

    pub fn with_source(mut self, source: StatementSource) -> Self {
        self.source = source;
        self
    }
}

type StatementKey = (EntityId, Predicate, EntityId, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    Biography,
    Description,
}

impl TextField {
    pub fn as_str(self) -> &'static str {
        match self {
            TextField::Biography => "biography",
            TextField::Description => "description",
        }
    }

    fn host_kind(self) -> EntityKind {
        match self {
            TextField::Biography => EntityKind::Historian,
            TextField::Description => EntityKind::Collection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub entity_id: EntityId,
    pub field: TextField,
    pub text: String,
}

/// Two entities, ordered. Symmetric relations always use the canonical
/// (byte-ordered) form; directional ones keep subject first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityPair {
    pub first: EntityId,
    pub second: EntityId,
}

impl EntityPair {
    pub fn directed(subject: &EntityId, object: &EntityId) -> Self {
        EntityPair {
            first: subject.clone(),
            second: object.clone(),
        }
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        &self.first == id || &self.second == id
    }

    pub fn other(&self, id: &EntityId) -> Option<&EntityId> {
        if &self.first == id {
            Some(&self.second)
        } else if &self.second == id {
            Some(&self.first)
        } else {
            None
        }
    }
}

impl fmt::Display for EntityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.first, self.second)
    }
}

pub fn canonical_pair(a: &EntityId, b: &EntityId) -> Result<EntityPair> {
    match a.cmp(b) {
        std::cmp::Ordering::Less => Ok(EntityPair::directed(a, b)),
        std::cmp::Ordering::Greater => Ok(EntityPair::directed(b, a)),
        std::cmp::Ordering::Equal => Err(Error::InvalidPair(a.to_string())),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Store {
    entities: BTreeMap<EntityId, Entity>,
    statements: BTreeMap<StatementKey, StatementSource>,
    texts: BTreeMap<(EntityId, TextField), String>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<()> {
        entity.validate()?;
        match self.entities.get(&entity.id) {
            Some(existing) if existing == &entity => Ok(()),
            Some(_) => Err(Error::Conflict(entity.id.to_string())),
            None => {
                self.entities.insert(entity.id.clone(), entity);
                Ok(())
            }
        }
    }

    /// Returns `true` when the statement was new.
    pub fn add_statement(&mut self, stmt: Statement) -> Result<bool> {
        for id in [&stmt.subject, &stmt.object] {
            if !self.entities.contains_key(id) {
                return Err(Error::Referential(id.to_string()));
            }
        }
        let key = (stmt.subject, stmt.predicate, stmt.object, stmt.graph);
        if self.statements.contains_key(&key) {
            return Ok(false);
        }
        self.statements.insert(key, stmt.source);
        Ok(true)
    }

    /// Removes a statement from one named graph. Returns `true` if it was present.
    pub fn retract_statement(
        &mut self,
        subject: &EntityId,
        predicate: Predicate,
        object: &EntityId,
        graph: &str,
    ) -> bool {
        self.statements
            .remove(&(subject.clone(), predicate, object.clone(), graph.to_string()))
            .is_some()
    }

    /// Attaches (or replaces) the text of a record. Returns `true` if a previous text was replaced.
    pub fn set_text(&mut self, record: TextRecord) -> Result<bool> {
        let entity = self
            .entities
            .get(&record.entity_id)
            .ok_or_else(|| Error::NotFound(record.entity_id.to_string()))?;
        if entity.kind != record.field.host_kind() {
            return Err(Error::Kind(format!(
                "{} is only allowed on {} entities, `{}` is a {}",
                record.field.as_str(),
                record.field.host_kind(),
                entity.id,
                entity.kind
            )));
        }
        Ok(self
            .texts
            .insert((record.entity_id, record.field), record.text)
            .is_some())
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn get(&self, id: &EntityId) -> Result<&Entity> {
        self.entity(id).ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn kind_of(&self, id: &EntityId) -> Option<EntityKind> {
        self.entities.get(id).map(|e| e.kind)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entities_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(move |e| e.kind == kind)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn statement_count(&self) -> usize {
        self.statements.len()
    }

    pub fn statements(&self) -> impl Iterator<Item = Statement> + '_ {
        self.statements.iter().map(|((s, p, o, g), source)| Statement {
            subject: s.clone(),
            predicate: *p,
            object: o.clone(),
            graph: g.clone(),
            source: *source,
        })
    }

    pub fn text(&self, id: &EntityId, field: TextField) -> Option<&str> {
        self.texts.get(&(id.clone(), field)).map(String::as_str)
    }

    pub fn texts(&self) -> impl Iterator<Item = TextRecord> + '_ {
        self.texts.iter().map(|((id, field), text)| TextRecord {
            entity_id: id.clone(),
            field: *field,
            text: text.clone(),
        })
    }

    pub fn text_count(&self) -> usize {
        self.texts.len()
    }

    /// Objects of `(subject, predicate, ?)` across every named graph.
    pub fn objects_of(
        &self,
        subject: &EntityId,
        predicate: Predicate,
        kind_filter: Option<EntityKind>,
    ) -> Result<BTreeSet<EntityId>> {
        if !self.entities.contains_key(subject) {
            return Err(Error::NotFound(subject.to_string()));
        }
        Ok(self.objects_unchecked(subject, predicate, kind_filter))
    }

    fn objects_unchecked(
        &self,
        subject: &EntityId,
        predicate: Predicate,
        kind_filter: Option<EntityKind>,
    ) -> BTreeSet<EntityId> {
        let lo = (subject.clone(), predicate, min_id(), String::new());
        self.statements
            .range(lo..)
            .map(|(key, _)| key)
            .take_while(|(s, p, _, _)| s == subject && *p == predicate)
            .map(|(_, _, o, _)| o)
            .filter(|o| kind_filter.is_none_or(|k| self.kind_of(o) == Some(k)))
            .cloned()
            .collect()
    }

    /// Subjects of `(?, predicate, object)` across every named graph.
    pub fn subjects_of(&self, predicate: Predicate, object: &EntityId) -> BTreeSet<EntityId> {
        self.statements
            .keys()
            .filter(|(_, p, o, _)| *p == predicate && o == object)
            .map(|(s, _, _, _)| s.clone())
            .collect()
    }

    pub fn shared_objects(
        &self,
        a: &EntityId,
        b: &EntityId,
        predicate: Predicate,
        kind_filter: EntityKind,
    ) -> Result<BTreeSet<EntityId>> {
        if a == b {
            return Err(Error::InvalidPair(a.to_string()));
        }
        let left = self.objects_of(a, predicate, Some(kind_filter))?;
        let right = self.objects_of(b, predicate, Some(kind_filter))?;
        Ok(left.intersection(&right).cloned().collect())
    }

    /// Whether `(a, predicate, b)` is stated in any graph. For symmetric
    /// predicates the reverse direction counts as well.
    pub fn has_relation(&self, a: &EntityId, predicate: Predicate, b: &EntityId) -> bool {
        let forward = self.objects_unchecked(a, predicate, None).contains(b);
        forward || (predicate.is_symmetric() && self.objects_unchecked(b, predicate, None).contains(a))
    }

    /// Collections produced by a historian, via either `produced` or `produced_by`.
    pub fn collections_of(&self, historian: &EntityId) -> BTreeSet<EntityId> {
        let mut out = self.objects_unchecked(historian, Predicate::Produced, Some(EntityKind::Collection));
        out.extend(
            self.subjects_of(Predicate::ProducedBy, historian)
                .into_iter()
                .filter(|c| self.kind_of(c) == Some(EntityKind::Collection)),
        );
        out
    }

    /// Producers of a collection, via either `produced` or `produced_by`.
    pub fn producers_of(&self, collection: &EntityId) -> BTreeSet<EntityId> {
        let mut out = self.objects_unchecked(collection, Predicate::ProducedBy, Some(EntityKind::Historian));
        out.extend(
            self.subjects_of(Predicate::Produced, collection)
                .into_iter()
                .filter(|h| self.kind_of(h) == Some(EntityKind::Historian)),
        );
        out
    }

    /// Full scan: every statement endpoint resolves to a stored entity.
    pub fn check_referential_integrity(&self) -> Result<()> {
        for (s, _, o, _) in self.statements.keys() {
            for id in [s, o] {
                if !self.entities.contains_key(id) {
                    return Err(Error::Referential(id.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical serialization of entities, statements and texts.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for entity in self.entities.values() {
            hasher.update(serde_json::to_vec(entity).expect("entity serializes"));
            hasher.update(b"\n");
        }
        for ((s, p, o, g), source) in &self.statements {
            hasher.update(format!("{s}\t{p}\t{o}\t{g}\t{source:?}\n").as_bytes());
        }
        for ((id, field), text) in &self.texts {
            hasher.update(format!("{id}\t{}\t", field.as_str()).as_bytes());
            hasher.update(text.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

fn min_id() -> EntityId {
    // Smallest non-empty id under byte ordering.
    EntityId("\0".to_string())
}
