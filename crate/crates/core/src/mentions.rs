//! Gazetteer mention detection over biographies and collection descriptions.
//!
//! Every label and alias in the store is normalized into a token sequence
//! (case folded, diacritics stripped, punctuation as word boundary). Texts are
//! scanned left to right taking the longest key at each token; keys shared by
//! several entities are skipped and logged instead of guessed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::model::{EntityId, EntityKind, Store, TextField, TextRecord};

/// Folds one word: canonical decomposition, combining marks removed, lowercased.
fn fold_word(word: &str) -> String {
    word.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    start: usize,
    end: usize,
    norm: String,
}

/// Word tokens with char offsets. Anything that is not alphanumeric separates words.
fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let mut pos = 0;
    for (i, c) in text.chars().enumerate() {
        pos = i + 1;
        if c.is_alphanumeric() {
            current.get_or_insert_with(|| (i, String::new())).1.push(c);
        } else if let Some((start, word)) = current.take() {
            tokens.push(Token {
                start,
                end: i,
                norm: fold_word(&word),
            });
        }
    }
    if let Some((start, word)) = current {
        tokens.push(Token {
            start,
            end: pos,
            norm: fold_word(&word),
        });
    }
    tokens
}

/// Normalized lookup key of a string; empty when it has no word characters.
pub fn normalize(text: &str) -> String {
    tokenize(text)
        .into_iter()
        .map(|t| t.norm)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasIndex {
    keys: BTreeMap<String, BTreeSet<EntityId>>,
    max_tokens: usize,
}

impl AliasIndex {
    pub fn build(store: &Store) -> Self {
        let mut index = AliasIndex::default();
        for entity in store.entities() {
            for name in std::iter::once(&entity.label).chain(&entity.aliases) {
                index.insert(name, &entity.id);
            }
        }
        index
    }

    fn insert(&mut self, name: &str, id: &EntityId) {
        let key = normalize(name);
        if key.is_empty() {
            return;
        }
        self.max_tokens = self.max_tokens.max(key.split(' ').count());
        self.keys.entry(key).or_default().insert(id.clone());
    }

    pub fn lookup(&self, key: &str) -> Option<&BTreeSet<EntityId>> {
        self.keys.get(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub entity_id: EntityId,
    pub host_entity: EntityId,
    pub field: TextField,
    /// Char offsets into the host text, end exclusive.
    pub span: (usize, usize),
    pub surface: String,
}

/// A key that matched several entities and was therefore skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub host_entity: EntityId,
    pub surface: String,
    pub candidate_ids: Vec<EntityId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionScan {
    pub mentions: Vec<Mention>,
    pub ambiguities: Vec<Ambiguity>,
}

pub fn find_mentions(record: &TextRecord, index: &AliasIndex) -> MentionScan {
    let tokens = tokenize(&record.text);
    let chars: Vec<char> = record.text.chars().collect();
    let surface = |from: usize, to: usize| chars[from..to].iter().collect::<String>();
    let mut scan = MentionScan::default();
    let mut i = 0;
    while i < tokens.len() {
        let longest = (1..=index.max_tokens.min(tokens.len() - i)).rev().find_map(|n| {
            let key = tokens[i..i + n]
                .iter()
                .map(|t| t.norm.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            index.lookup(&key).map(|ids| (n, ids))
        });
        let Some((n, ids)) = longest else {
            i += 1;
            continue;
        };
        let span = (tokens[i].start, tokens[i + n - 1].end);
        if ids.len() > 1 {
            let entry = Ambiguity {
                host_entity: record.entity_id.clone(),
                surface: surface(span.0, span.1),
                candidate_ids: ids.iter().cloned().collect(),
            };
            tracing::debug!(host = %entry.host_entity, surface = %entry.surface, "ambiguous alias skipped");
            scan.ambiguities.push(entry);
        } else if let Some(id) = ids.iter().next().filter(|id| **id != record.entity_id) {
            scan.mentions.push(Mention {
                entity_id: id.clone(),
                host_entity: record.entity_id.clone(),
                field: record.field,
                span,
                surface: surface(span.0, span.1),
            });
        }
        i += n;
    }
    scan
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionScope {
    BioOne,
    BioBoth,
    ArchiveOfA,
    ArchiveOfB,
    Any,
}

/// Mentions of every text in a store, plus what is needed to answer pair-level flags.
#[derive(Debug, Clone, Default)]
pub struct MentionTable {
    by_host: BTreeMap<(EntityId, TextField), Vec<Mention>>,
    ambiguities: Vec<Ambiguity>,
    historians: BTreeSet<EntityId>,
    collections: BTreeMap<EntityId, BTreeSet<EntityId>>,
}

impl MentionTable {
    pub fn build(store: &Store, index: &AliasIndex) -> Self {
        let mut table = MentionTable {
            historians: store
                .entities_of_kind(EntityKind::Historian)
                .map(|e| e.id.clone())
                .collect(),
            ..Default::default()
        };
        for h in &table.historians {
            table.collections.insert(h.clone(), store.collections_of(h));
        }
        for record in store.texts() {
            let scan = find_mentions(&record, index);
            table.ambiguities.extend(scan.ambiguities);
            table
                .by_host
                .insert((record.entity_id.clone(), record.field), scan.mentions);
        }
        table
    }

    pub fn mentions(&self, host: &EntityId, field: TextField) -> &[Mention] {
        self.by_host
            .get(&(host.clone(), field))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn all_mentions(&self) -> impl Iterator<Item = &Mention> {
        self.by_host.values().flatten()
    }

    pub fn ambiguities(&self) -> &[Ambiguity] {
        &self.ambiguities
    }

    /// First mention of `target` in the given text, if any.
    pub fn find(&self, host: &EntityId, field: TextField, target: &EntityId) -> Option<&Mention> {
        self.mentions(host, field).iter().find(|m| &m.entity_id == target)
    }

    pub fn collections_of(&self, historian: &EntityId) -> Option<&BTreeSet<EntityId>> {
        self.collections.get(historian)
    }

    /// Mentions of `target` in any description of a collection produced by `producer`.
    pub fn archive_mentions<'a>(
        &'a self,
        producer: &EntityId,
        target: &'a EntityId,
    ) -> impl Iterator<Item = &'a Mention> + 'a {
        self.collections
            .get(producer)
            .into_iter()
            .flatten()
            .filter_map(move |c| self.find(c, TextField::Description, target))
    }

    fn in_bio(&self, host: &EntityId, target: &EntityId) -> bool {
        self.find(host, TextField::Biography, target).is_some()
    }

    fn in_archive(&self, producer: &EntityId, target: &EntityId) -> bool {
        self.archive_mentions(producer, target).next().is_some()
    }

    pub fn mention_flag(&self, a: &EntityId, b: &EntityId, scope: MentionScope) -> Result<bool> {
        for h in [a, b] {
            if !self.historians.contains(h) {
                return Err(Error::NotFound(format!("historian `{h}`")));
            }
        }
        Ok(match scope {
            MentionScope::BioOne => self.in_bio(a, b) || self.in_bio(b, a),
            MentionScope::BioBoth => self.in_bio(a, b) && self.in_bio(b, a),
            MentionScope::ArchiveOfA => self.in_archive(a, b),
            MentionScope::ArchiveOfB => self.in_archive(b, a),
            MentionScope::Any => {
                self.in_bio(a, b) || self.in_bio(b, a) || self.in_archive(a, b) || self.in_archive(b, a)
            }
        })
    }
}
