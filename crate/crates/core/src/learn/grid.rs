//! Cross-validation, the model x spec grid and model selection.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::folds::{stratified_kfold, FoldPlan};
use super::metrics::{ConfusionMatrix, EvalMetrics, KnownShare};
use super::{train, FeatureSpec, LabeledDataset, LearnConfig, ModelKind, Unit};
use crate::error::{ApiError, Error, Result};
use crate::model::EntityPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub pair: EntityPair,
    pub y: bool,
    pub label: bool,
    pub score: f64,
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLog {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: EvalMetrics,
    pub predictions: Vec<FoldPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Equal-weight mean of the fold metrics.
    pub metrics: EvalMetrics,
    /// Confusion counts pooled over folds.
    pub confusion: ConfusionMatrix,
    /// Out-of-fold positive predictions split by biography evidence.
    pub known: KnownShare,
    pub folds: Vec<FoldLog>,
}

pub fn cross_validate(kind: ModelKind, data: &LabeledDataset, plan: &FoldPlan, config: &LearnConfig) -> Result<CvResult> {
    if plan.assignment.len() != data.len() {
        return Err(Error::Shape {
            expected: data.len(),
            got: plan.assignment.len(),
        });
    }
    let mut folds = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let train_set = data.subset(&plan.train_indices(fold));
        let model = train(kind, &train_set, config).map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?;
        let mut predictions = Vec::new();
        for i in plan.test_indices(fold) {
            let row = &data.rows[i];
            let p = model.predict(&row.x)?;
            predictions.push(FoldPrediction {
                pair: row.pair.clone(),
                y: row.y,
                label: p.label,
                score: p.score,
                known: row.known,
            });
        }
        let actual: Vec<bool> = predictions.iter().map(|p| p.y).collect();
        let predicted: Vec<bool> = predictions.iter().map(|p| p.label).collect();
        let confusion = ConfusionMatrix::from_pairs(&actual, &predicted);
        folds.push(FoldLog {
            fold,
            confusion,
            metrics: EvalMetrics::from_confusion(&confusion),
            predictions,
        });
    }
    let metrics = EvalMetrics::mean(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
    let confusion = folds.iter().fold(ConfusionMatrix::default(), |acc, f| acc.add(&f.confusion));
    let known = KnownShare::from_flags(folds.iter().flat_map(|f| &f.predictions).filter(|p| p.label).map(|p| p.known));
    Ok(CvResult {
        metrics,
        confusion,
        known,
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutcome {
    Ok(CvResult),
    Error(ApiError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub spec: FeatureSpec,
    pub kind: ModelKind,
    pub rows: usize,
    pub positives: usize,
    pub outcome: CellOutcome,
}

impl GridCell {
    pub fn result(&self) -> Option<&CvResult> {
        match &self.outcome {
            CellOutcome::Ok(r) => Some(r),
            CellOutcome::Error(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub unit: Unit,
    pub k: usize,
    pub seed: u64,
    pub specs: Vec<FeatureSpec>,
    pub kinds: Vec<ModelKind>,
    pub cells: Vec<GridCell>,
}

/// Every spec x kind cell, sharing one fold plan per spec. Cell failures are kept in the cell.
pub fn evaluate_grid(unit: Unit, datasets: &[LabeledDataset], kinds: &[ModelKind], config: &LearnConfig) -> Grid {
    let mut cells = Vec::new();
    for data in datasets {
        let positives = data.rows.iter().filter(|r| r.y).count();
        let plan = stratified_kfold(&data.labels(), config.k, config.seed);
        for &kind in kinds {
            let outcome = match &plan {
                Err(e) => CellOutcome::Error(ApiError::from(e)),
                Ok(p) => match cross_validate(kind, data, p, config) {
                    Ok(r) => CellOutcome::Ok(r),
                    Err(e) => {
                        tracing::warn!(spec = %data.spec, kind = %kind, error = %e, "grid cell failed");
                        CellOutcome::Error(ApiError::from(&e))
                    }
                },
            };
            cells.push(GridCell {
                spec: data.spec.clone(),
                kind,
                rows: data.len(),
                positives,
                outcome,
            });
        }
    }
    Grid {
        unit,
        k: config.k,
        seed: config.seed,
        specs: datasets.iter().map(|d| d.spec.clone()).collect(),
        kinds: kinds.to_vec(),
        cells,
    }
}

fn preference(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Nb => 0,
        ModelKind::Lr => 1,
        ModelKind::Dt => 2,
    }
}

/// Highest p1 wins; ties go to nb, then lr, then dt.
pub fn select_model(column: &[(ModelKind, EvalMetrics)]) -> Option<ModelKind> {
    column
        .iter()
        .min_by(|a, b| {
            b.1.p1
                .total_cmp(&a.1.p1)
                .then_with(|| preference(a.0).cmp(&preference(b.0)))
        })
        .map(|c| c.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub spec: FeatureSpec,
    pub kind: ModelKind,
    pub metrics: EvalMetrics,
    pub known: KnownShare,
}

impl Grid {
    pub fn cell(&self, spec: &str, kind: ModelKind) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.spec.name() == spec && c.kind == kind)
    }

    pub fn column(&self, spec: &str) -> Vec<(ModelKind, EvalMetrics)> {
        self.cells
            .iter()
            .filter(|c| c.spec.name() == spec)
            .filter_map(|c| c.result().map(|r| (c.kind, r.metrics)))
            .collect()
    }

    /// The selected model of every spec with at least one successful cell, in spec order.
    pub fn selections(&self) -> Vec<Selection> {
        self.specs
            .iter()
            .filter_map(|spec| {
                let kind = select_model(&self.column(spec.name()))?;
                let r = self.cell(spec.name(), kind)?.result()?;
                Some(Selection {
                    spec: spec.clone(),
                    kind,
                    metrics: r.metrics,
                    known: r.known,
                })
            })
            .collect()
    }

    /// Highest p1 among selections that surface at least one unknown relation; earlier specs win ties.
    pub fn default_choice(&self) -> Option<Selection> {
        let mut best: Option<Selection> = None;
        for s in self.selections() {
            if s.known.unknown_pct.unwrap_or(0) == 0 {
                continue;
            }
            if best.as_ref().is_none_or(|b| s.metrics.p1 > b.metrics.p1) {
                best = Some(s);
            }
        }
        best
    }

    /// Text table: one row per (model, metric), one column per spec.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.specs.iter().map(|s| s.name().len()).max().unwrap_or(4).max(6);
        let _ = writeln!(out, "unit: {}  k={}  seed={}", self.unit.as_str(), self.k, self.seed);
        let _ = write!(out, "{:<8}", "");
        for s in &self.specs {
            let _ = write!(out, " {:>width$}", s.name());
        }
        out.push('\n');
        for &kind in &self.kinds {
            for (m, name) in ["p", "p1", "r1", "a"].iter().enumerate() {
                let _ = write!(out, "{:<8}", format!("{kind} {name}"));
                for s in &self.specs {
                    let cell = self.cell(s.name(), kind).map_or("-".to_string(), |c| match &c.outcome {
                        CellOutcome::Ok(r) => format!("{:.2}", r.metrics.values()[m]),
                        CellOutcome::Error(e) => format!("err:{}", e.code.as_str()),
                    });
                    let _ = write!(out, " {cell:>width$}");
                }
                out.push('\n');
            }
        }
        out.push('\n');
        let _ = writeln!(out, "{:<width$} {:>5} {:>6} {:>8}", "spec", "model", "known%", "unknown%");
        for s in self.selections() {
            let (k, u) = s.known.render();
            let _ = writeln!(out, "{:<width$} {:>5} {:>6} {:>8}", s.spec.name(), s.kind.as_str(), k, u);
        }
        out
    }

    /// Writes `grid.csv`, `grid.txt` and `folds.jsonl` into `dir`.
    pub fn write_report(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("grid.csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Serialization(e.to_string()))?;
        let header = [
            "unit", "spec", "model", "rows", "positives", "p", "p1", "r1", "a", "tp", "fp", "tn", "fn", "known_pct",
            "unknown_pct", "error",
        ];
        w.write_record(header).map_err(|e| Error::Serialization(e.to_string()))?;
        for c in &self.cells {
            let mut rec = vec![
                self.unit.as_str().to_string(),
                c.spec.name().to_string(),
                c.kind.as_str().to_string(),
                c.rows.to_string(),
                c.positives.to_string(),
            ];
            match &c.outcome {
                CellOutcome::Ok(r) => {
                    rec.extend(r.metrics.values().iter().map(|v| format!("{v:.6}")));
                    let cm = r.confusion;
                    rec.extend([cm.tp, cm.fp, cm.tn, cm.fn_].iter().map(|v| v.to_string()));
                    let (k, u) = r.known.render();
                    rec.extend([k, u, String::new()]);
                }
                CellOutcome::Error(e) => {
                    rec.extend(std::iter::repeat_n(String::new(), 10));
                    rec.push(format!("{}: {}", e.code.as_str(), e.message));
                }
            }
            w.write_record(&rec).map_err(|e| Error::Serialization(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;

        let txt = dir.join("grid.txt");
        std::fs::write(&txt, self.render()).map_err(|e| Error::io(&txt, e))?;

        #[derive(Serialize)]
        struct Line<'a> {
            spec: &'a str,
            model: ModelKind,
            fold: usize,
            #[serde(flatten)]
            prediction: &'a FoldPrediction,
        }
        let mut lines = Vec::new();
        for c in &self.cells {
            if let Some(r) = c.result() {
                for f in &r.folds {
                    for p in &f.predictions {
                        lines.push(Line {
                            spec: c.spec.name(),
                            model: c.kind,
                            fold: f.fold,
                            prediction: p,
                        });
                    }
                }
            }
        }
        crate::ingest::write_json_lines(&dir.join("folds.jsonl"), &lines)
    }
}
