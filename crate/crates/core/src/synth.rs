//! Seeded synthetic dumps shaped like the real catalogue: historians with
//! topics, institutions, one collection each, biographies that name related
//! colleagues, and annotation tables consistent with those texts.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{AnnotationDetail, AnnotationRecord, Label, LoadedDump, TopicColumns};
use crate::model::{canonical_pair, Entity, EntityId, EntityKind, EntityPair, Predicate, Statement, Store, TextField, TextRecord};

const GIVEN: [&str; 16] = [
    "Adolfo", "Ernst", "Roberto", "Julius", "Lionello", "Aby", "Bernard", "Max", "Pietro", "Wilhelm", "Corrado",
    "Giovanni", "August", "Henry", "Igino", "Federico",
];
const FAMILY: [&str; 16] = [
    "Venturi", "Steinmann", "Longhi", "Schlosser", "Venturelli", "Warburg", "Berenson", "Dvorak", "Toesca", "Bode",
    "Ricci", "Morelli", "Schmarsow", "Thode", "Supino", "Hermanin",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub historians: usize,
    pub topics: usize,
    pub institutions: usize,
    pub seed: u64,
    /// Chance that a related pair is named in one of the two biographies.
    pub bio_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            historians: 24,
            topics: 8,
            institutions: 5,
            seed: 7,
            bio_rate: 0.35,
        }
    }
}

fn label(b: bool) -> Label {
    if b {
        Label::One
    } else {
        Label::Zero
    }
}

fn id(prefix: &str, i: usize) -> EntityId {
    EntityId::new(format!("{prefix}{:03}", i + 1)).expect("non-empty id")
}

/// Builds a dump whose annotations never contradict its texts.
pub fn synthetic_dump(cfg: &SynthConfig) -> LoadedDump {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = Store::new();
    let n = cfg.historians.min(GIVEN.len() * FAMILY.len());
    let hist: Vec<EntityId> = (0..n).map(|i| id("H", i)).collect();
    let names: Vec<String> = (0..n)
        .map(|i| format!("{} {}", GIVEN[i % GIVEN.len()], FAMILY[(i / GIVEN.len() + i) % FAMILY.len()]))
        .collect();
    let topics: Vec<EntityId> = (0..cfg.topics).map(|i| id("T", i)).collect();
    let insts: Vec<EntityId> = (0..cfg.institutions).map(|i| id("I", i)).collect();
    let colls: Vec<EntityId> = (0..n).map(|i| id("C", i)).collect();

    let add = |store: &mut Store, i: &EntityId, k: EntityKind, l: &str| {
        store.add_entity(Entity::new(i.as_str(), k, l).expect("valid entity")).expect("fresh id");
    };
    for (h, name) in hist.iter().zip(&names) {
        add(&mut store, h, EntityKind::Historian, name);
    }
    for (i, t) in topics.iter().enumerate() {
        add(&mut store, t, EntityKind::Topic, &format!("Topic number {}", i + 1));
    }
    for (i, t) in insts.iter().enumerate() {
        add(&mut store, t, EntityKind::Institution, &format!("Institute number {}", i + 1));
    }
    for (c, name) in colls.iter().zip(&names) {
        add(&mut store, c, EntityKind::Collection, &format!("Papers of {name}"));
    }
    let stmt = |store: &mut Store, s: &EntityId, p: Predicate, o: &EntityId| {
        store.add_statement(Statement::new(s, p, o, "catalogue")).expect("known ids");
    };
    for (h, c) in hist.iter().zip(&colls) {
        stmt(&mut store, h, Predicate::Produced, c);
        let nt = rng.random_range(1..=3.min(topics.len().max(1)));
        for _ in 0..nt {
            if let Some(t) = pick(&mut rng, &topics) {
                stmt(&mut store, h, Predicate::Subject, t);
            }
        }
        let ni = rng.random_range(0..=2usize);
        for _ in 0..ni {
            if let Some(t) = pick(&mut rng, &insts) {
                stmt(&mut store, h, Predicate::Subject, t);
            }
        }
    }

    // latent truth for pairs that share anything
    let mut related: BTreeSet<EntityPair> = BTreeSet::new();
    let mut bio_pairs: BTreeSet<EntityPair> = BTreeSet::new();
    let mut arch: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut materials: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut bios: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut descs: Vec<Vec<String>> = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            let st = store
                .shared_objects(&hist[a], &hist[b], Predicate::Subject, EntityKind::Topic)
                .map_or(0, |s| s.len());
            let si = store
                .shared_objects(&hist[a], &hist[b], Predicate::Subject, EntityKind::Institution)
                .map_or(0, |s| s.len());
            if st + si == 0 {
                continue;
            }
            let p = (0.15 + 0.2 * st as f64 + 0.3 * si as f64).min(0.9);
            if !rng.random_bool(p) {
                continue;
            }
            let pair = canonical_pair(&hist[a], &hist[b]).expect("distinct");
            if rng.random_bool(cfg.bio_rate) {
                let (host, other) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                bios[host].push(format!("{} worked closely with {}.", names[host], names[other]));
                bio_pairs.insert(pair.clone());
            }
            if rng.random_bool(0.2) {
                let (host, other) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                descs[host].push(format!("Includes letters from {}.", names[other]));
                arch.insert((host, other));
            }
            if rng.random_bool(0.3) {
                let (host, other) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                materials.insert((host, other));
            }
            related.insert(pair);
        }
    }
    for (i, h) in hist.iter().enumerate() {
        let mut text = format!("{} was an art historian.", names[i]);
        for s in &bios[i] {
            text.push(' ');
            text.push_str(s);
        }
        store
            .set_text(TextRecord {
                entity_id: h.clone(),
                field: TextField::Biography,
                text,
            })
            .expect("historian text");
        let mut desc = format!("Papers of {}.", names[i]);
        for s in &descs[i] {
            desc.push(' ');
            desc.push_str(s);
        }
        store
            .set_text(TextRecord {
                entity_id: colls[i].clone(),
                field: TextField::Description,
                text: desc,
            })
            .expect("collection text");
    }

    let index_of = |e: &EntityId| hist.iter().position(|h| h == e).expect("historian");
    let mut artists_periods = Vec::new();
    let mut institutions = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let pair = canonical_pair(&hist[a], &hist[b]).expect("distinct");
            let (h1, h2) = (index_of(&pair.first), index_of(&pair.second));
            let truth = related.contains(&pair);
            let bio = bio_pairs.contains(&pair);
            for t in store
                .shared_objects(&hist[a], &hist[b], Predicate::Subject, EntityKind::Topic)
                .unwrap_or_default()
            {
                // a related pair is not necessarily related on every shared topic
                let valid = truth && (bio || rng.random_bool(0.8));
                artists_periods.push(AnnotationRecord {
                    art_hist_1: pair.first.clone(),
                    art_hist_2: pair.second.clone(),
                    shared_subject: t,
                    relation_exists: label(valid),
                    detail: AnnotationDetail::ArtistsPeriods(TopicColumns {
                        recorded_in_one_bio: label(bio),
                        recorded_in_both_bios: Label::Zero,
                        collaborated_on_subject: label(valid && rng.random_bool(0.3)),
                        h2_relevant_to_h1_archive: label(valid && materials.contains(&(h1, h2))),
                        h2_mentioned_in_h1_archive: label(arch.contains(&(h1, h2))),
                        h1_relevant_to_h2_archive: label(valid && materials.contains(&(h2, h1))),
                        h1_mentioned_in_h2_archive: label(arch.contains(&(h2, h1))),
                    }),
                });
            }
            for i in store
                .shared_objects(&hist[a], &hist[b], Predicate::Subject, EntityKind::Institution)
                .unwrap_or_default()
            {
                institutions.push(AnnotationRecord {
                    art_hist_1: pair.first.clone(),
                    art_hist_2: pair.second.clone(),
                    shared_subject: i,
                    relation_exists: label(truth),
                    detail: AnnotationDetail::Institutions { relation_kind_note: None },
                });
            }
        }
    }
    LoadedDump {
        store,
        artists_periods,
        institutions,
        half_labels_replaced: 0,
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [EntityId]) -> Option<&'a EntityId> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.random_range(0..items.len())])
    }
}
