//! Naive Bayes: Bernoulli likelihoods for the 0/1 flags, Gaussian for counts.

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, LearnConfig, ModelKind, ModelParams, TrainedModel};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Likelihood {
    /// P(x = 1 | class), add-one smoothed.
    Bernoulli { p: [f64; 2] },
    Gaussian { mean: [f64; 2], var: [f64; 2] },
}

impl Likelihood {
    fn log_density(&self, class: usize, x: f64) -> f64 {
        match self {
            Likelihood::Bernoulli { p } => {
                if x >= 0.5 {
                    p[class].ln()
                } else {
                    (1.0 - p[class]).ln()
                }
            }
            Likelihood::Gaussian { mean, var } => {
                let v = var[class];
                let d = x - mean[class];
                -0.5 * (2.0 * std::f64::consts::PI * v).ln() - d * d / (2.0 * v)
            }
        }
    }
}

/// Class posteriors [P(0|x), P(1|x)].
pub fn posterior(priors: &[f64; 2], features: &[Likelihood], x: &[f64]) -> [f64; 2] {
    let mut log = [priors[0].ln(), priors[1].ln()];
    for (lik, &xi) in features.iter().zip(x) {
        for (c, l) in log.iter_mut().enumerate() {
            *l += lik.log_density(c, xi);
        }
    }
    let m = log[0].max(log[1]);
    let e = [(log[0] - m).exp(), (log[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

pub fn train_nb(data: &LabeledDataset, config: &LearnConfig) -> Result<TrainedModel> {
    data.check_both_classes()?;
    let n = data.rows.len() as f64;
    let mut by_class: [Vec<&[f64]>; 2] = [Vec::new(), Vec::new()];
    for r in &data.rows {
        by_class[usize::from(r.y)].push(&r.x);
    }
    let nc = [by_class[0].len() as f64, by_class[1].len() as f64];
    let priors = [(nc[0] + 1.0) / (n + 2.0), (nc[1] + 1.0) / (n + 2.0)];

    let features = data
        .spec
        .features()
        .iter()
        .enumerate()
        .map(|(j, f)| {
            if f.is_binary() {
                let ones = |c: usize| by_class[c].iter().filter(|x| x[j] >= 0.5).count() as f64;
                Likelihood::Bernoulli {
                    p: [(ones(0) + 1.0) / (nc[0] + 2.0), (ones(1) + 1.0) / (nc[1] + 2.0)],
                }
            } else {
                let stats = |c: usize| {
                    let vals: Vec<f64> = by_class[c].iter().map(|x| x[j]).collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                    (mean, var.max(config.variance_floor))
                };
                let (m0, v0) = stats(0);
                let (m1, v1) = stats(1);
                Likelihood::Gaussian {
                    mean: [m0, m1],
                    var: [v0, v1],
                }
            }
        })
        .collect();
    Ok(TrainedModel {
        kind: ModelKind::Nb,
        spec: data.spec.clone(),
        unit: data.unit,
        seed: config.seed,
        params: ModelParams::Nb { priors, features },
    })
}
