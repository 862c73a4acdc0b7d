//! Unpruned binary decision tree grown greedily on Gini impurity.

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, LearnConfig, ModelKind, ModelParams, TrainedModel};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Training rows per class reaching this leaf.
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub(crate) struct Leaf([usize; 2]);

impl Leaf {
    pub(crate) fn counts(&self) -> [usize; 2] {
        self.0
    }
}

impl Node {
    pub(crate) fn leaf_for(&self, x: &[f64]) -> Leaf {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { counts } => return Leaf(*counts),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    /// Class counts of the leaf that `x` falls into.
    pub fn leaf_counts(&self, x: &[f64]) -> [usize; 2] {
        self.leaf_for(x).counts()
    }

    /// Class counts of every leaf, left to right.
    pub fn leaf_counts_all(&self) -> Vec<[usize; 2]> {
        match self {
            Node::Leaf { counts } => vec![*counts],
            Node::Split { left, right, .. } => {
                let mut v = left.leaf_counts_all();
                v.extend(right.leaf_counts_all());
                v
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

pub fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

const GAIN_EPS: f64 = 1e-12;

fn class_counts(rows: &[(&[f64], bool)]) -> [usize; 2] {
    let pos = rows.iter().filter(|r| r.1).count();
    [rows.len() - pos, pos]
}

fn grow(rows: Vec<(&[f64], bool)>, dim: usize) -> Node {
    let counts = class_counts(&rows);
    if rows.len() < 2 || counts[0] == 0 || counts[1] == 0 {
        return Node::Leaf { counts };
    }
    let n = rows.len() as f64;
    let parent = gini(counts);
    // (gain, feature, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..dim {
        let mut vals: Vec<(f64, bool)> = rows.iter().map(|r| (r.0[j], r.1)).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for i in 0..vals.len() - 1 {
            left[usize::from(vals[i].1)] += 1;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let nl = (left[0] + left[1]) as f64;
            let gain = parent - (nl / n) * gini(left) - ((n - nl) / n) * gini(right);
            if best.is_none_or(|(g, _, _)| gain > g + GAIN_EPS) {
                best = Some((gain, j, 0.5 * (vals[i].0 + vals[i + 1].0)));
            }
        }
    }
    match best {
        Some((gain, feature, threshold)) if gain > GAIN_EPS => {
            let (l, r): (Vec<_>, Vec<_>) = rows.into_iter().partition(|row| row.0[feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow(l, dim)),
                right: Box::new(grow(r, dim)),
            }
        }
        _ => Node::Leaf { counts },
    }
}

/// Fits a tree. A single-class training set yields one leaf rather than an error.
pub fn train_dt(data: &LabeledDataset, config: &LearnConfig) -> Result<TrainedModel> {
    if data.rows.is_empty() {
        return Err(crate::error::Error::DegenerateData("no training rows".into()));
    }
    let rows: Vec<(&[f64], bool)> = data.rows.iter().map(|r| (r.x.as_slice(), r.y)).collect();
    let root = grow(rows, data.spec.dim());
    Ok(TrainedModel {
        kind: ModelKind::Dt,
        spec: data.spec.clone(),
        unit: data.unit,
        seed: config.seed,
        params: ModelParams::Dt { root },
    })
}
