//! Confusion counts and the four reported scores.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_pairs(actual: &[bool], predicted: &[bool]) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (&y, &p) in actual.iter().zip(predicted) {
            match (y, p) {
                (true, true) => cm.tp += 1,
                (false, true) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (true, false) => cm.fn_ += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `p` macro precision, `p1`/`r1` precision and recall of class 1, `a` accuracy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub p: f64,
    pub p1: f64,
    pub r1: f64,
    pub a: f64,
}

impl EvalMetrics {
    /// Precision of a class with no predictions counts as 0, as does recall with no positives.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let p1 = ratio(cm.tp, cm.tp + cm.fp);
        let p0 = ratio(cm.tn, cm.tn + cm.fn_);
        EvalMetrics {
            p: 0.5 * (p0 + p1),
            p1,
            r1: ratio(cm.tp, cm.tp + cm.fn_),
            a: ratio(cm.tp + cm.tn, cm.total()),
        }
    }

    /// Equal-weight average over folds.
    pub fn mean(folds: &[EvalMetrics]) -> Self {
        let n = folds.len().max(1) as f64;
        let sum = |f: fn(&EvalMetrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
        EvalMetrics {
            p: sum(|m| m.p),
            p1: sum(|m| m.p1),
            r1: sum(|m| m.r1),
            a: sum(|m| m.a),
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.p, self.p1, self.r1, self.a]
    }
}

/// Split of positive predictions into those a biography already records and the rest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownShare {
    pub known: usize,
    pub unknown: usize,
    /// Whole percentages, `None` when there is nothing to split.
    pub known_pct: Option<u32>,
    pub unknown_pct: Option<u32>,
}

impl KnownShare {
    /// Percentages round half up on the known side and always sum to 100.
    pub fn from_counts(known: usize, unknown: usize) -> Self {
        let n = known + unknown;
        if n == 0 {
            return KnownShare { known, unknown, known_pct: None, unknown_pct: None };
        }
        let k = ((200 * known + n) / (2 * n)) as u32;
        KnownShare {
            known,
            unknown,
            known_pct: Some(k),
            unknown_pct: Some(100 - k),
        }
    }

    pub fn from_flags(known: impl IntoIterator<Item = bool>) -> Self {
        let (mut k, mut u) = (0, 0);
        for is_known in known {
            if is_known {
                k += 1;
            } else {
                u += 1;
            }
        }
        Self::from_counts(k, u)
    }

    pub fn render(&self) -> (String, String) {
        let show = |p: Option<u32>| p.map_or_else(|| "n/a".to_string(), |v| v.to_string());
        (show(self.known_pct), show(self.unknown_pct))
    }
}
