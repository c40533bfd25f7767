// SPDX-License-Identifier: Apache-2.0

//! One-vs-rest L2-regularized logistic regression over assembled features.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODEL_MAGIC: &str = "discort-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-3,
            iterations: 500,
            step: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", format!("{} not in [0, inf)", self.lambda)));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be >= 1"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::param("step", format!("{} not in (0, inf)", self.step)));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean logistic loss plus `lambda/2 * |w|²` (bias unpenalized).
pub fn logistic_loss(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let z = dot(xi, w) + b;
            softplus(z) - if yi { z } else { 0.0 }
        })
        .sum();
    data / n + 0.5 * lambda * dot(w, w)
}

/// Gradient of [`logistic_loss`] with respect to `(w, b)`.
pub fn logistic_gradient(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, lambda: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw: Vec<f64> = w.iter().map(|wi| lambda * wi).collect();
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let r = (sigmoid(dot(xi, w) + b) - if yi { 1.0 } else { 0.0 }) / n;
        for (g, v) in gw.iter_mut().zip(xi) {
            *g += r * v;
        }
        gb += r;
    }
    (gw, gb)
}

/// Upper bound on the loss curvature: `lambda + σ_max([X | 1])² / (4n)`,
/// with the top singular value from a fixed-start power iteration.
pub fn lipschitz_bound(x: &[Vec<f64>], lambda: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return lambda;
    }
    let d = x[0].len() + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut sigma2 = 0.0;
    for _ in 0..100 {
        let xv: Vec<f64> = x.iter().map(|xi| dot(xi, &v[..d - 1]) + v[d - 1]).collect();
        let mut next = vec![0.0; d];
        for (xi, s) in x.iter().zip(&xv) {
            for (nj, xij) in next.iter_mut().zip(xi) {
                *nj += s * xij;
            }
            next[d - 1] += s;
        }
        let norm = dot(&next, &next).sqrt();
        if norm == 0.0 {
            break;
        }
        sigma2 = norm;
        next.iter_mut().for_each(|t| *t /= norm);
        v = next;
    }
    // power iteration approaches from below; pad so the step stays safe
    lambda + 1.01 * sigma2 / (4.0 * n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent from zero with step `min(cfg.step, 1/L)`.
pub fn fit_binary(x: &[Vec<f64>], y: &[bool], cfg: &TrainConfig) -> BinaryFit {
    let d = x.first().map_or(0, Vec::len);
    let step = cfg.step.min(1.0 / lipschitz_bound(x, cfg.lambda));
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    losses.push(logistic_loss(x, y, &w, b, cfg.lambda));
    for _ in 0..cfg.iterations {
        let (gw, gb) = logistic_gradient(x, y, &w, b, cfg.lambda);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
        losses.push(logistic_loss(x, y, &w, b, cfg.lambda));
    }
    BinaryFit {
        weights: w,
        bias: b,
        losses,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationModel {
    pub labels: Vec<String>,
    pub feature_names: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    /// Labels that had at least one positive example; the rest score 0.
    pub active: Vec<bool>,
    pub config: TrainConfig,
}

/// Trains one binary model per label. `y[i]` is the label set of row `i`;
/// every row must carry at least one label.
pub fn train(
    x: &[Vec<f64>],
    y: &[BTreeSet<usize>],
    labels: &[String],
    feature_names: &[String],
    cfg: &TrainConfig,
) -> Result<AnnotationModel> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rows but {} label sets", x.len(), y.len())));
    }
    if labels.len() < 2 {
        return Err(Error::param("labels", format!("need >= 2 labels, got {}", labels.len())));
    }
    let d = feature_names.len();
    if let Some(bad) = x.iter().position(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(format!("row {bad} has {} features, expected {d}", x[bad].len())));
    }
    if let Some(bad) = y.iter().position(BTreeSet::is_empty) {
        return Err(Error::param("labels", format!("training row {bad} has no label")));
    }
    if let Some(&l) = y.iter().flatten().find(|&&l| l >= labels.len()) {
        return Err(Error::param("labels", format!("label index {l} outside vocabulary")));
    }
    let fits: Vec<Option<BinaryFit>> = (0..labels.len())
        .into_par_iter()
        .map(|l| {
            let targets: Vec<bool> = y.iter().map(|s| s.contains(&l)).collect();
            targets.iter().any(|&t| t).then(|| fit_binary(x, &targets, cfg))
        })
        .collect();
    let mut model = AnnotationModel {
        labels: labels.to_vec(),
        feature_names: feature_names.to_vec(),
        weights: Vec::with_capacity(labels.len()),
        biases: Vec::with_capacity(labels.len()),
        active: Vec::with_capacity(labels.len()),
        config: *cfg,
    };
    for (l, fit) in fits.into_iter().enumerate() {
        match fit {
            Some(f) => {
                model.weights.push(f.weights);
                model.biases.push(f.bias);
                model.active.push(true);
            }
            None => {
                warn!("label `{}` has no positive training example; it will score 0", labels[l]);
                model.weights.push(vec![0.0; d]);
                model.biases.push(0.0);
                model.active.push(false);
            }
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `(label index, score)`, best first.
    pub ranked: Vec<(usize, f64)>,
    pub k_used: usize,
}

impl AnnotationModel {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok((0..self.labels.len())
            .map(|l| {
                if self.active[l] {
                    sigmoid(dot(&self.weights[l], x) + self.biases[l])
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Top `k` labels by score; ties go to the lower label index.
    pub fn predict(&self, x: &[f64], k: usize) -> Result<Prediction> {
        let scores = self.scores(x)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let k_used = k.min(scores.len());
        Ok(Prediction {
            ranked: order.into_iter().take(k_used).map(|l| (l, scores[l])).collect(),
            k_used,
        })
    }

    /// Line-oriented, tab-separated text; floats in shortest round-trip form.
    pub fn to_text(&self, config_hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_MAGIC}\t{MODEL_VERSION}");
        let _ = writeln!(s, "config\t{config_hash}");
        let _ = writeln!(
            s,
            "train\tlambda={}\titerations={}\tstep={}",
            self.config.lambda, self.config.iterations, self.config.step
        );
        let _ = writeln!(s, "features\t{}", self.feature_names.join("\t"));
        for l in 0..self.labels.len() {
            let w: Vec<String> = self.weights[l].iter().map(f64::to_string).collect();
            let _ = writeln!(
                s,
                "label\t{}\t{}\t{}\t{}",
                self.labels[l],
                u8::from(self.active[l]),
                self.biases[l],
                w.join(" ")
            );
        }
        s
    }

    /// Parses [`to_text`](Self::to_text) output; returns the model and its config hash.
    pub fn from_text(text: &str) -> Result<(AnnotationModel, String)> {
        let bad = |line: usize, msg: &str| Error::Malformed {
            line,
            msg: msg.to_string(),
        };
        let num = |line: usize, v: &str| v.parse::<f64>().map_err(|e| bad(line, &format!("`{v}`: {e}")));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, head) = lines.next().ok_or_else(|| bad(1, "empty model file"))?;
        match head.split('\t').collect::<Vec<_>>()[..] {
            [MODEL_MAGIC, v] if v == MODEL_VERSION.to_string() => {}
            [MODEL_MAGIC, v] => return Err(bad(1, &format!("unsupported model version {v}"))),
            _ => return Err(bad(1, "not a model file")),
        }
        let mut hash = String::new();
        let mut config = TrainConfig::default();
        let mut feature_names = None;
        let mut model = AnnotationModel {
            labels: vec![],
            feature_names: vec![],
            weights: vec![],
            biases: vec![],
            active: vec![],
            config,
        };
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[0] {
                "config" => hash = fields.get(1).unwrap_or(&"").to_string(),
                "train" => {
                    for kv in &fields[1..] {
                        let (k, v) = kv.split_once('=').ok_or_else(|| bad(ln, "expected key=value"))?;
                        match k {
                            "lambda" => config.lambda = num(ln, v)?,
                            "step" => config.step = num(ln, v)?,
                            "iterations" => config.iterations = v.parse().map_err(|_| bad(ln, "bad iterations"))?,
                            _ => return Err(bad(ln, &format!("unknown training key `{k}`"))),
                        }
                    }
                }
                "features" => {
                    feature_names = Some(fields[1..].iter().filter(|f| !f.is_empty()).map(|f| f.to_string()).collect::<Vec<_>>())
                }
                "label" => {
                    if fields.len() != 5 {
                        return Err(bad(ln, "label line needs 5 fields"));
                    }
                    let dim = feature_names.as_ref().map(Vec::len).ok_or_else(|| bad(ln, "label before features"))?;
                    let w = fields[4]
                        .split(' ')
                        .filter(|t| !t.is_empty())
                        .map(|t| num(ln, t))
                        .collect::<Result<Vec<_>>>()?;
                    if w.len() != dim {
                        return Err(bad(ln, &format!("{} weights, expected {dim}", w.len())));
                    }
                    model.labels.push(fields[1].to_string());
                    model.active.push(fields[2] == "1");
                    model.biases.push(num(ln, fields[3])?);
                    model.weights.push(w);
                }
                other => return Err(bad(ln, &format!("unknown record `{other}`"))),
            }
        }
        model.feature_names = feature_names.ok_or_else(|| bad(1, "missing features line"))?;
        model.config = config;
        Ok((model, hash))
    }
}
