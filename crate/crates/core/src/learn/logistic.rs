//! L2-regularized logistic regression fit by full-batch gradient descent
//! with backtracking line search.

use super::{LabeledDataset, LearnConfig, ModelKind, ModelParams, TrainedModel};
use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Summed log-loss plus `lambda/2 * |w|^2`. The intercept is not penalized.
pub fn objective(weights: &[f64], intercept: f64, xs: &[Vec<f64>], ys: &[bool], lambda: f64) -> f64 {
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = dot(weights, x) + intercept;
        loss += softplus(z) - if y { z } else { 0.0 };
    }
    loss + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`objective`]; the last entry is the intercept component.
pub fn gradient(weights: &[f64], intercept: f64, xs: &[Vec<f64>], ys: &[bool], lambda: f64) -> Vec<f64> {
    let d = weights.len();
    let mut g = vec![0.0; d + 1];
    for (x, &y) in xs.iter().zip(ys) {
        let r = sigmoid(dot(weights, x) + intercept) - if y { 1.0 } else { 0.0 };
        for j in 0..d {
            g[j] += r * x[j];
        }
        g[d] += r;
    }
    for j in 0..d {
        g[j] += lambda * weights[j];
    }
    g
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn train_lr(data: &LabeledDataset, config: &LearnConfig) -> Result<TrainedModel> {
    data.check_both_classes()?;
    // written so NaN fails too
    if !(config.lambda >= 0.0 && config.tolerance > 0.0) {
        return Err(Error::Parameter("lambda must be >= 0 and tolerance > 0".into()));
    }
    let d = data.spec.dim();
    let xs: Vec<Vec<f64>> = data.rows.iter().map(|r| r.x.clone()).collect();
    let ys = data.labels();
    for x in &xs {
        if x.len() != d {
            return Err(Error::Shape { expected: d, got: x.len() });
        }
    }
    let lambda = config.lambda;

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut step = 1.0;
    let mut loss = objective(&w, b, &xs, &ys, lambda);
    let mut iterations = 0;
    while iterations < config.max_iter {
        let g = gradient(&w, b, &xs, &ys, lambda);
        let gn2 = g.iter().map(|x| x * x).sum::<f64>();
        if gn2.sqrt() <= config.tolerance {
            break;
        }
        iterations += 1;
        // Armijo condition with c = 0.5
        loop {
            let w_new: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let b_new = b - step * g[d];
            let new_loss = objective(&w_new, b_new, &xs, &ys, lambda);
            if new_loss <= loss - 0.5 * step * gn2 {
                w = w_new;
                b = b_new;
                loss = new_loss;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                tracing::debug!(iterations, "line search stalled");
                return Ok(model(data, config, w, b, iterations));
            }
        }
    }
    let g = gradient(&w, b, &xs, &ys, lambda);
    if !w.iter().chain([&b]).all(|v| v.is_finite()) {
        return Err(Error::DegenerateData("logistic regression diverged".into()));
    }
    tracing::debug!(iterations, grad_norm = norm(&g), "lr fit");
    Ok(model(data, config, w, b, iterations))
}

fn model(data: &LabeledDataset, config: &LearnConfig, weights: Vec<f64>, intercept: f64, iterations: usize) -> TrainedModel {
    TrainedModel {
        kind: ModelKind::Lr,
        spec: data.spec.clone(),
        unit: data.unit,
        seed: config.seed,
        params: ModelParams::Lr {
            weights,
            intercept,
            iterations,
        },
    }
}
