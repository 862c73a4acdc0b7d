//! One object holding a loaded dump and everything derived from it. The CLI
//! and the HTTP service both go through here.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::eda::{build_report, EdaReport};
use crate::error::{Error, Result};
use crate::expansion::{
    attach_annotations, expand_institution_pairs, expand_topic_pairs, merge_tables, ExpandedDataset, FlagTable,
};
use crate::ingest::{export_dump, load_dump, AnnotationRecord, DumpManifest, LoadedDump};
use crate::learn::{
    build_features, evaluate_grid, select_model, train, EvalMetrics, FeatureSpec, FeatureTables, Grid, LabeledDataset,
    ModelKind, TrainedModel, Unit,
};
use crate::mentions::{AliasIndex, MentionTable};
use crate::model::{Entity, EntityId, Predicate, Statement, Store, TextRecord};
use crate::recommend::{
    apply_log, label_overrides, record_decision, recommend_for_entity, Decision, DecisionLog, DecisionOutcome, Models,
    RecContext, RecRef, Recommendation, Verdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityView {
    pub entity: Entity,
    pub outgoing: Vec<Statement>,
    pub incoming: Vec<Statement>,
    pub texts: Vec<TextRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Auto,
    Kind(ModelKind),
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(ModelChoice::Auto)
        } else {
            s.parse().map(ModelChoice::Kind)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Cross-validated metrics of the chosen cell, when the grid cell succeeded.
    pub cv: Option<EvalMetrics>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub request_id: String,
    #[serde(flatten)]
    pub rec: RecRef,
    pub verdict: Verdict,
    pub reviewer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub entities: usize,
    pub statements: usize,
    pub texts: usize,
    pub topic_rows: usize,
    pub institution_rows: usize,
    pub orphan_annotations: usize,
    pub half_labels_replaced: usize,
    pub decisions: usize,
}

pub struct Engine {
    config: RunConfig,
    store: Store,
    artists_periods: Vec<AnnotationRecord>,
    institutions: Vec<AnnotationRecord>,
    half_labels_replaced: usize,
    flags: FlagTable,
    topics: ExpandedDataset,
    insts: ExpandedDataset,
    orphans: usize,
    log: DecisionLog,
    models: OnceLock<Models>,
    issued: Mutex<BTreeSet<RecRef>>,
}

impl Engine {
    /// Loads the manifest named in the config and the decision log next to the outputs.
    pub fn open(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let path = config
            .manifest
            .clone()
            .ok_or_else(|| Error::MissingInput("no dump manifest given".into()))?;
        let dump = load_dump(&DumpManifest::read(&path)?)?;
        let log = DecisionLog::open(&config.decision_log_path())?;
        Engine::from_dump(dump, log, config)
    }

    pub fn from_dump(dump: LoadedDump, log: DecisionLog, config: RunConfig) -> Result<Self> {
        dump.store.check_referential_integrity()?;
        let mut engine = Engine {
            config,
            store: dump.store,
            artists_periods: dump.artists_periods,
            institutions: dump.institutions,
            half_labels_replaced: dump.half_labels_replaced,
            flags: FlagTable::default(),
            topics: expand_topic_pairs(&Store::new()),
            insts: expand_institution_pairs(&Store::new()),
            orphans: 0,
            log,
            models: OnceLock::new(),
            issued: Mutex::new(BTreeSet::new()),
        };
        apply_log(&mut engine.store, &engine.log)?;
        engine.derive()?;
        Ok(engine)
    }

    fn derive(&mut self) -> Result<()> {
        let index = AliasIndex::build(&self.store);
        let mut flags = FlagTable::build(&self.store, MentionTable::build(&self.store, &index));
        flags.overlay_annotations(&self.artists_periods);
        let source = self.config.recommend.flag_source;
        let topics = attach_annotations(&expand_topic_pairs(&self.store), &self.artists_periods, &flags, source)?;
        let insts = attach_annotations(&expand_institution_pairs(&self.store), &self.institutions, &flags, source)?;
        self.orphans = topics.orphans.len() + insts.orphans.len();
        if self.orphans > 0 {
            tracing::warn!(orphans = self.orphans, "annotation rows without a matching candidate pair");
        }
        self.topics = topics.dataset;
        self.insts = insts.dataset;
        self.flags = flags;
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn topics(&self) -> &ExpandedDataset {
        &self.topics
    }

    pub fn institutions(&self) -> &ExpandedDataset {
        &self.insts
    }

    pub fn decisions(&self) -> &DecisionLog {
        &self.log
    }

    pub fn summary(&self) -> Summary {
        Summary {
            entities: self.store.entity_count(),
            statements: self.store.statement_count(),
            texts: self.store.text_count(),
            topic_rows: self.topics.len(),
            institution_rows: self.insts.len(),
            orphan_annotations: self.orphans,
            half_labels_replaced: self.half_labels_replaced,
            decisions: self.log.len(),
        }
    }

    pub fn entity_view(&self, id: &EntityId) -> Result<EntityView> {
        let entity = self.store.get(id)?.clone();
        let (mut outgoing, mut incoming) = (Vec::new(), Vec::new());
        for s in self.store.statements() {
            if &s.subject == id {
                outgoing.push(s);
            } else if &s.object == id {
                incoming.push(s);
            }
        }
        let texts = self.store.texts().filter(|t| &t.entity_id == id).collect();
        Ok(EntityView {
            entity,
            outgoing,
            incoming,
            texts,
        })
    }

    pub fn eda_report(&self) -> Result<EdaReport> {
        build_report(&self.store, &self.topics, &self.insts, self.half_labels_replaced)
    }

    pub fn labeled(&self, unit: Unit, spec: &FeatureSpec) -> Result<LabeledDataset> {
        let overrides = label_overrides(&self.store, &self.log.labels());
        let tables = FeatureTables {
            topics: &self.topics,
            institutions: Some(&self.insts),
        };
        build_features(tables, spec, unit, &overrides)
    }

    pub fn specs(unit: Unit) -> Vec<FeatureSpec> {
        match unit {
            Unit::HistorianPair => FeatureSpec::historian_specs(),
            Unit::CollectionPair => FeatureSpec::collection_specs(),
        }
    }

    pub fn grid(&self, unit: Unit) -> Result<Grid> {
        let datasets = Engine::specs(unit)
            .iter()
            .map(|s| self.labeled(unit, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(evaluate_grid(unit, &datasets, &ModelKind::ALL, &self.config.learn))
    }

    /// Fits a model on every labeled row. `Auto` picks the kind from the spec's grid column.
    pub fn train(&self, unit: Unit, spec: &FeatureSpec, choice: ModelChoice) -> Result<TrainOutcome> {
        let data = self.labeled(unit, spec)?;
        let grid = evaluate_grid(unit, std::slice::from_ref(&data), &ModelKind::ALL, &self.config.learn);
        let column = grid.column(spec.name());
        let kind = match choice {
            ModelChoice::Kind(k) => k,
            ModelChoice::Auto => select_model(&column).ok_or_else(|| {
                Error::DegenerateData(format!("no model could be cross-validated on spec `{spec}`"))
            })?,
        };
        let model = train(kind, &data, &self.config.learn)?;
        Ok(TrainOutcome {
            cv: column.iter().find(|(k, _)| *k == kind).map(|(_, m)| *m),
            rows: data.len(),
            model,
        })
    }

    fn default_models(&self) -> Models {
        let rc = &self.config.recommend;
        let historian = match (&rc.historian_spec, rc.historian_model) {
            (Some(spec), kind) => Some((spec.clone(), kind.map_or(ModelChoice::Auto, ModelChoice::Kind))),
            (None, _) => match self.grid(Unit::HistorianPair).map(|g| g.default_choice()) {
                Ok(Some(sel)) => Some((sel.spec, ModelChoice::Kind(sel.kind))),
                Ok(None) => None,
                Err(e) => {
                    tracing::warn!(error = %e, "historian grid unavailable");
                    None
                }
            },
        };
        let collection = Some((
            rc.collection_spec.clone(),
            rc.collection_model.map_or(ModelChoice::Auto, ModelChoice::Kind),
        ));
        let fit = |unit, choice: Option<(FeatureSpec, ModelChoice)>| {
            let (spec, choice) = choice?;
            match self.train(unit, &spec, choice) {
                Ok(t) => Some(t.model),
                Err(e) => {
                    tracing::warn!(unit = unit.as_str(), spec = %spec, error = %e, "no model, rules only");
                    None
                }
            }
        };
        Models {
            historian: fit(Unit::HistorianPair, historian),
            collection: fit(Unit::CollectionPair, collection),
        }
    }

    /// Active models, trained from the defaults on first use.
    pub fn models(&self) -> &Models {
        if let Some(m) = self.models.get() {
            return m;
        }
        let m = self.default_models();
        let _ = self.models.set(m);
        self.models.get().expect("just set")
    }

    /// Replaces the active model for the model's unit.
    pub fn install(&mut self, model: TrainedModel) {
        let mut models = self.models().clone();
        match model.unit {
            Unit::HistorianPair => models.historian = Some(model),
            Unit::CollectionPair => models.collection = Some(model),
        }
        self.models = OnceLock::from(models);
    }

    fn context(&self) -> RecContext<'_> {
        RecContext {
            store: &self.store,
            flags: &self.flags,
            flag_source: self.config.recommend.flag_source,
        }
    }

    fn generate(&self, entity: &EntityId) -> Result<Vec<Recommendation>> {
        recommend_for_entity(&self.context(), self.models(), &self.log.labels(), entity)
    }

    pub fn recommend(&self, entity: &EntityId, limit: Option<usize>) -> Result<Vec<Recommendation>> {
        let mut recs = self.generate(entity)?;
        recs.truncate(limit.unwrap_or(self.config.recommend.limit));
        self.issued
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .extend(recs.iter().map(Recommendation::rec_ref));
        Ok(recs)
    }

    fn rec_exists(&self, rec: &RecRef) -> bool {
        if self.issued.lock().unwrap_or_else(|e| e.into_inner()).contains(rec) {
            return true;
        }
        if self.log.entries().iter().any(|d| &d.rec_ref() == rec) {
            return true;
        }
        [&rec.pair.first, &rec.pair.second].into_iter().any(|e| {
            self.generate(e)
                .map(|recs| recs.iter().any(|r| &r.rec_ref() == rec))
                .unwrap_or(false)
        })
    }

    pub fn decide(&mut self, req: DecisionRequest) -> Result<DecisionOutcome> {
        if req.rec.predicate != Predicate::InteractedWith
            && req.rec.predicate != Predicate::IsRelatedTo
            && req.rec.predicate != Predicate::IncludesMaterialsRelevantTo
        {
            return Err(Error::Parameter(format!(
                "`{}` is not a recommended predicate",
                req.rec.predicate.as_str()
            )));
        }
        let exists = self.log.find(&req.request_id).is_some() || self.rec_exists(&req.rec);
        let decision = Decision {
            request_id: req.request_id,
            pair: req.rec.pair,
            predicate: req.rec.predicate,
            verdict: req.verdict,
            reviewer: req.reviewer,
            timestamp: Utc::now(),
        };
        let outcome = record_decision(&mut self.store, &mut self.log, decision, |_| exists)?;
        if outcome.applied {
            self.derive()?;
        }
        Ok(outcome)
    }

    /// Re-ingestable dump of the current store, annotations included.
    pub fn export_store(&self, dir: &Path) -> Result<PathBuf> {
        export_dump(&self.store, &self.artists_periods, &self.institutions, dir)
    }

    /// Candidate tables plus one labeled feature table per spec and unit.
    pub fn export_datasets(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let merged = merge_tables(&self.topics, &self.insts)?;
        let mut written = Vec::new();
        for (name, d) in [("topics", &self.topics), ("institutions", &self.insts), ("merged", &merged)] {
            let path = dir.join(format!("{name}.csv"));
            d.export_csv(&path)?;
            written.push(path);
        }
        for unit in [Unit::HistorianPair, Unit::CollectionPair] {
            for spec in Engine::specs(unit) {
                let data = self.labeled(unit, &spec)?;
                let path = dir.join(format!("features_{}_{}.csv", unit.as_str(), spec.name().replace('+', "_")));
                write_labeled(&path, &data)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// EDA text and JSON plus grid reports for both units.
    pub fn export_report(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        match self.eda_report() {
            Ok(report) => {
                let txt = dir.join("eda.txt");
                std::fs::write(&txt, report.render()).map_err(|e| Error::io(&txt, e))?;
                let json = dir.join("eda.json");
                let body = serde_json::to_string_pretty(&report).map_err(|e| Error::Serialization(e.to_string()))?;
                std::fs::write(&json, body).map_err(|e| Error::io(&json, e))?;
                written.extend([txt, json]);
            }
            Err(e) => tracing::warn!(error = %e, "eda report skipped"),
        }
        for unit in [Unit::HistorianPair, Unit::CollectionPair] {
            let sub = dir.join(format!("grid_{}", unit.as_str()));
            self.grid(unit)?.write_report(&sub)?;
            written.push(sub);
        }
        Ok(written)
    }
}

fn write_labeled(path: &Path, data: &LabeledDataset) -> Result<()> {
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(ser)?;
    let mut header = vec!["first".to_string(), "second".to_string()];
    header.extend(data.spec.features().iter().map(|f| {
        serde_json::to_value(f)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }));
    header.extend(["y".to_string(), "known".to_string()]);
    w.write_record(&header).map_err(ser)?;
    for r in &data.rows {
        let mut rec = vec![r.pair.first.to_string(), r.pair.second.to_string()];
        rec.extend(r.x.iter().map(|v| v.to_string()));
        rec.push(u8::from(r.y).to_string());
        rec.push(u8::from(r.known).to_string());
        w.write_record(&rec).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
