//! Pair-level feature construction, the three classifiers, stratified
//! cross-validation and precision-first model selection.

pub mod bayes;
pub mod folds;
pub mod grid;
pub mod logistic;
pub mod metrics;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{merge_tables, DerivedFlags, ExpandedDataset, PairRow};
use crate::model::EntityPair;

pub use bayes::train_nb;
pub use folds::{stratified_kfold, FoldPlan};
pub use grid::{cross_validate, evaluate_grid, select_model, CvResult, Grid, GridCell};
pub use logistic::train_lr;
pub use metrics::{ConfusionMatrix, EvalMetrics, KnownShare};
pub use tree::train_dt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    BioMention,
    ArchMention,
    SharedTopics,
    SharedInstitutions,
}

impl Feature {
    pub fn is_binary(self) -> bool {
        matches!(self, Feature::BioMention | Feature::ArchMention)
    }

    fn from_token(token: &str) -> Option<Self> {
        match token {
            "bio" => Some(Feature::BioMention),
            "arch_desc" => Some(Feature::ArchMention),
            "topics" => Some(Feature::SharedTopics),
            "inst" => Some(Feature::SharedInstitutions),
            _ => None,
        }
    }
}

/// A named feature combination such as `topics+bio`. The name fixes the feature order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSpec {
    name: String,
    features: Vec<Feature>,
}

/// Feature specs evaluated for historian pairs, in report column order.
pub const HISTORIAN_SPECS: [&str; 9] = [
    "bio",
    "arch_desc",
    "bio+arch_desc",
    "topics",
    "topics+bio",
    "topics+arch_desc",
    "topics+bio+arch_desc",
    "inst",
    "inst+topics",
];

/// Feature specs evaluated for collection pairs, in report column order.
pub const COLLECTION_SPECS: [&str; 5] = ["bio", "topics", "topics+bio", "inst", "inst+topics"];

impl FeatureSpec {
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        let mut features = Vec::new();
        for token in name.split('+').map(str::trim) {
            let feature = Feature::from_token(token)
                .ok_or_else(|| Error::Parameter(format!("unknown feature `{token}` in spec `{name}`")))?;
            if features.contains(&feature) {
                return Err(Error::Parameter(format!("feature `{token}` repeated in spec `{name}`")));
            }
            features.push(feature);
        }
        Ok(FeatureSpec {
            name: name.split('+').map(str::trim).collect::<Vec<_>>().join("+"),
            features,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn uses(&self, f: Feature) -> bool {
        self.features.contains(&f)
    }

    /// Which candidate table supplies this spec's pairs.
    pub fn universe(&self) -> Universe {
        match (self.uses(Feature::SharedInstitutions), self.uses(Feature::SharedTopics)) {
            (true, true) => Universe::Merged,
            (true, false) => Universe::Institutions,
            _ => Universe::Topics,
        }
    }

    pub fn historian_specs() -> Vec<FeatureSpec> {
        HISTORIAN_SPECS.iter().map(|n| FeatureSpec::parse(n).expect("valid spec")).collect()
    }

    pub fn collection_specs() -> Vec<FeatureSpec> {
        COLLECTION_SPECS.iter().map(|n| FeatureSpec::parse(n).expect("valid spec")).collect()
    }
}

impl TryFrom<String> for FeatureSpec {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        FeatureSpec::parse(&value)
    }
}

impl From<FeatureSpec> for String {
    fn from(spec: FeatureSpec) -> Self {
        spec.name
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSpec::parse(s)
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Universe {
    Topics,
    Institutions,
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    HistorianPair,
    CollectionPair,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::HistorianPair => "historian_pair",
            Unit::CollectionPair => "collection_pair",
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "historian" | "historian_pair" | "historians" => Ok(Unit::HistorianPair),
            "collection" | "collection_pair" | "collections" => Ok(Unit::CollectionPair),
            other => Err(Error::Parameter(format!("unknown unit `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    Nb,
    Dt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lr, ModelKind::Nb, ModelKind::Dt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Nb => "nb",
            ModelKind::Dt => "dt",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(ModelKind::Lr),
            "nb" => Ok(ModelKind::Nb),
            "dt" => Ok(ModelKind::Dt),
            other => Err(Error::Parameter(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub pair: EntityPair,
    pub x: Vec<f64>,
    pub y: bool,
    /// Whether a biography already records the pair.
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub unit: Unit,
    pub spec: FeatureSpec,
    pub rows: Vec<LabeledRow>,
}

impl LabeledDataset {
    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            unit: self.unit,
            spec: self.spec.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub(crate) fn check_both_classes(&self) -> Result<()> {
        let pos = self.rows.iter().filter(|r| r.y).count();
        if pos == 0 || pos == self.rows.len() {
            return Err(Error::DegenerateData(format!(
                "{} rows with a single class ({pos} positive)",
                self.rows.len()
            )));
        }
        Ok(())
    }
}

/// Reviewer-supplied labels that take precedence over annotations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelOverrides {
    pub historian: BTreeMap<EntityPair, bool>,
    /// Keyed by the canonical pair of the producing historians.
    pub collection: BTreeMap<EntityPair, bool>,
}

/// Candidate tables the features are read from. Rows must carry annotations and flags.
#[derive(Debug, Clone, Copy)]
pub struct FeatureTables<'a> {
    pub topics: &'a ExpandedDataset,
    pub institutions: Option<&'a ExpandedDataset>,
}

/// Feature values of one pair, independent of any label.
pub fn feature_vector(
    spec: &FeatureSpec,
    flags: &DerivedFlags,
    n_topics: usize,
    n_institutions: usize,
) -> Vec<f64> {
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    spec.features
        .iter()
        .map(|f| match f {
            Feature::BioMention => bit(flags.bio_one),
            Feature::ArchMention => bit(flags.arch_any()),
            Feature::SharedTopics => n_topics as f64,
            Feature::SharedInstitutions => n_institutions as f64,
        })
        .collect()
}

/// Field-wise OR of the flags on a pair's rows.
pub fn pair_flags(rows: &[&PairRow]) -> DerivedFlags {
    rows.iter().fold(DerivedFlags::default(), |acc, r| acc.or(r.derived_flags))
}

pub fn build_features(
    tables: FeatureTables<'_>,
    spec: &FeatureSpec,
    unit: Unit,
    overrides: &LabelOverrides,
) -> Result<LabeledDataset> {
    let merged;
    let universe: &ExpandedDataset = match spec.universe() {
        Universe::Topics => tables.topics,
        Universe::Institutions => tables
            .institutions
            .ok_or_else(|| Error::MissingInput(format!("spec `{spec}` needs the institutions table")))?,
        Universe::Merged => {
            let insts = tables
                .institutions
                .ok_or_else(|| Error::MissingInput(format!("spec `{spec}` needs the institutions table")))?;
            merged = merge_tables(tables.topics, insts)?;
            &merged
        }
    };
    let topic_rows = tables.topics.rows_by_pair();
    let inst_rows = tables.institutions.map(|d| d.rows_by_pair()).unwrap_or_default();
    let count = |m: &BTreeMap<&EntityPair, Vec<&PairRow>>, p: &EntityPair| m.get(p).map_or(0, Vec::len);

    let mut rows = Vec::new();
    for (pair, pair_rows) in universe.rows_by_pair() {
        let annotated: Vec<&&PairRow> = pair_rows.iter().filter(|r| r.annotation.is_some()).collect();
        let label = match unit {
            Unit::HistorianPair => overrides.historian.get(pair).copied().or_else(|| {
                (!annotated.is_empty()).then(|| annotated.iter().any(|r| r.relation_exists() == Some(true)))
            }),
            Unit::CollectionPair => overrides.collection.get(pair).copied().or_else(|| {
                (!annotated.is_empty()).then(|| {
                    topic_rows.get(pair).into_iter().flatten().any(|r| {
                        r.annotation
                            .as_ref()
                            .and_then(|a| a.topic_columns())
                            .is_some_and(|c| c.materials())
                    })
                })
            }),
        };
        let Some(y) = label else { continue };
        let flags = pair_flags(&pair_rows);
        rows.push(LabeledRow {
            pair: pair.clone(),
            x: feature_vector(spec, &flags, count(&topic_rows, pair), count(&inst_rows, pair)),
            y,
            known: flags.bio_one,
        });
    }
    Ok(LabeledDataset {
        unit,
        spec: spec.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    /// L2 strength for logistic regression (intercept unregularized).
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub k: usize,
    pub seed: u64,
    pub variance_floor: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            lambda: 1.0,
            tolerance: 1e-6,
            max_iter: 1000,
            k: 5,
            seed: 13,
            variance_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Lr {
        weights: Vec<f64>,
        intercept: f64,
        iterations: usize,
    },
    Nb {
        /// Class priors, index 0 = negative.
        priors: [f64; 2],
        features: Vec<bayes::Likelihood>,
    },
    Dt {
        root: tree::Node,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub spec: FeatureSpec,
    pub unit: Unit,
    pub seed: u64,
    pub params: ModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: bool,
    /// Probability of class 1.
    pub score: f64,
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.spec.dim() {
            return Err(Error::Shape {
                expected: self.spec.dim(),
                got: x.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::Lr { weights, intercept, .. } => {
                let score = logistic::sigmoid(logistic::dot(weights, x) + intercept);
                Prediction {
                    label: score >= 0.5,
                    score,
                }
            }
            ModelParams::Nb { priors, features } => {
                let score = bayes::posterior(priors, features, x)[1];
                Prediction {
                    label: score >= 0.5,
                    score,
                }
            }
            ModelParams::Dt { root } => {
                let counts = root.leaf_for(x).counts();
                let total = (counts[0] + counts[1]) as f64;
                Prediction {
                    // majority class, ties to 0
                    label: counts[1] > counts[0],
                    score: counts[1] as f64 / total,
                }
            }
        })
    }
}

pub fn train(kind: ModelKind, data: &LabeledDataset, config: &LearnConfig) -> Result<TrainedModel> {
    match kind {
        ModelKind::Lr => train_lr(data, config),
        ModelKind::Nb => train_nb(data, config),
        ModelKind::Dt => train_dt(data, config),
    }
}
