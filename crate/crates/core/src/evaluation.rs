// SPDX-License-Identifier: Apache-2.0

//! Multi-label F1 metrics and the holdout / parameter-sweep protocols.

use std::collections::BTreeSet;
use std::io::Write;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::annotate::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{
    assemble_features, label_posteriors, modularity_features, ContentFeatures, FeatureBlocks,
};
use crate::rgt::build_rgt;
use crate::rwr::{combine, RelevanceMatrix};

pub type LabelSets = [BTreeSet<usize>];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelScore {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_label: Vec<LabelScore>,
    pub n: usize,
}

fn check_pair(truth: &LabelSets, predicted: &LabelSets) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} truth rows, {} prediction rows",
            truth.len(),
            predicted.len()
        )));
    }
    Ok(())
}

fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// `2TP / (2TP + FP + FN)` over all pooled (thing, label) decisions.
pub fn micro_f1(truth: &LabelSets, predicted: &LabelSets) -> Result<f64> {
    check_pair(truth, predicted)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (t, p) in truth.iter().zip(predicted) {
        let hit = t.intersection(p).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += t.len() - hit;
    }
    Ok(f1_from(tp, fp, fn_))
}

/// Mean per-label F1 over labels that occur in the truth or the predictions
/// and are not listed in `exclude`.
pub fn macro_f1_excluding(truth: &LabelSets, predicted: &LabelSets, exclude: &BTreeSet<usize>) -> Result<f64> {
    let scores = per_label_scores(truth, predicted)?;
    let kept: Vec<f64> = scores.iter().filter(|s| !exclude.contains(&s.label)).map(|s| s.f1).collect();
    Ok(if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    })
}

pub fn macro_f1(truth: &LabelSets, predicted: &LabelSets) -> Result<f64> {
    macro_f1_excluding(truth, predicted, &BTreeSet::new())
}

/// Precision, recall and F1 for every label seen in truth or predictions,
/// in label order. `0/0` counts as 0.
pub fn per_label_scores(truth: &LabelSets, predicted: &LabelSets) -> Result<Vec<LabelScore>> {
    check_pair(truth, predicted)?;
    let labels: BTreeSet<usize> = truth.iter().chain(predicted).flatten().copied().collect();
    Ok(labels
        .into_iter()
        .map(|l| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (t, p) in truth.iter().zip(predicted) {
                match (t.contains(&l), p.contains(&l)) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            LabelScore {
                label: l,
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: f1_from(tp, fp, fn_),
            }
        })
        .collect())
}

pub fn f1_report(truth: &LabelSets, predicted: &LabelSets, exclude: &BTreeSet<usize>) -> Result<F1Report> {
    Ok(F1Report {
        micro_f1: micro_f1(truth, predicted)?,
        macro_f1: macro_f1_excluding(truth, predicted, exclude)?,
        per_label: per_label_scores(truth, predicted)?,
        n: truth.len(),
    })
}

/// Picks the things whose labels are hidden: for every label, `fraction` of
/// the things carrying it (rounded, at least one). Unlabeled things are
/// never picked.
pub fn holdout_split(labels: &LabelSets, fraction: f64, rng: &mut ChaCha8Rng) -> Result<BTreeSet<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param("fraction", format!("{fraction} not in (0, 1)")));
    }
    let vocab: BTreeSet<usize> = labels.iter().flatten().copied().collect();
    let mut held = BTreeSet::new();
    for l in vocab {
        let mut carriers: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].contains(&l)).collect();
        let take = ((fraction * carriers.len() as f64).round() as usize).clamp(1, carriers.len());
        carriers.shuffle(rng);
        held.extend(carriers.into_iter().take(take));
    }
    Ok(held)
}

/// Labeled things with their relevance-independent side inputs.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub things: Vec<String>,
    pub label_names: Vec<String>,
    /// Ground-truth label sets, aligned with `things`.
    pub labels: Vec<BTreeSet<usize>>,
    pub content: ContentFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub fractions: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub k_rgt: usize,
    pub k_eig: usize,
    pub train: TrainConfig,
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::param("fractions", "need at least one fraction"));
        }
        for &f in &self.fractions {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::param("fractions", format!("{f} not in (0, 1)")));
            }
        }
        if self.reps == 0 {
            return Err(Error::param("reps", "must be >= 1"));
        }
        if self.k_rgt == 0 {
            return Err(Error::param("k", "must be >= 1"));
        }
        if self.k_eig == 0 {
            return Err(Error::param("k_eig", "must be >= 1"));
        }
        self.train.validate()
    }

    /// Randomness for one (fraction, repetition) cell; independent of the
    /// evaluated setting so settings are compared on the same splits.
    pub fn rng(&self, fraction_index: usize, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((fraction_index as u64) << 32) | rep as u64);
        rng
    }
}

/// One row of an experiment report. `rep = None` marks a mean row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub setting: String,
    pub fraction: f64,
    pub rep: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

/// Holdout runs of one relevance matrix and feature set over every
/// (fraction, repetition) cell, followed by one mean row per fraction.
pub fn holdout_experiment(
    data: &EvalData,
    r: &RelevanceMatrix,
    blocks: FeatureBlocks,
    protocol: &Protocol,
    setting: &str,
    alpha: f64,
    beta: f64,
) -> Result<Vec<ReportRow>> {
    protocol.validate()?;
    let n = data.things.len();
    if r.len() != n || data.labels.len() != n || data.content.vectors.len() != n {
        return Err(Error::DimensionMismatch("evaluation inputs disagree on thing count".into()));
    }
    if data.label_names.len() < 2 {
        return Err(Error::param("labels", "need a labeled dataset with >= 2 labels"));
    }
    let rgt = build_rgt(r, &data.things, protocol.k_rgt)?;
    let fs = modularity_features(&rgt, protocol.k_eig)?;

    let cells: Vec<(usize, usize)> = (0..protocol.fractions.len())
        .flat_map(|f| (0..protocol.reps).map(move |rep| (f, rep)))
        .collect();
    let reports = cells
        .par_iter()
        .map(|&(fi, rep)| {
            let mut rng = protocol.rng(fi, rep);
            let held = holdout_split(&data.labels, protocol.fractions[fi], &mut rng)?;
            run_cell(data, r, &fs, blocks, &held, &protocol.train)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(cells.len() + protocol.fractions.len());
    for (&(fi, rep), rpt) in cells.iter().zip(&reports) {
        rows.push(ReportRow {
            setting: setting.to_string(),
            fraction: protocol.fractions[fi],
            rep: Some(rep),
            alpha,
            beta,
            micro_f1: rpt.micro_f1,
            macro_f1: rpt.macro_f1,
        });
    }
    for (fi, &fraction) in protocol.fractions.iter().enumerate() {
        let mine: Vec<&F1Report> = cells
            .iter()
            .zip(&reports)
            .filter(|((f, _), _)| *f == fi)
            .map(|(_, r)| r)
            .collect();
        let mean = |g: fn(&F1Report) -> f64| mine.iter().map(|r| g(r)).sum::<f64>() / mine.len() as f64;
        let row = ReportRow {
            setting: setting.to_string(),
            fraction,
            rep: None,
            alpha,
            beta,
            micro_f1: mean(|r| r.micro_f1),
            macro_f1: mean(|r| r.macro_f1),
        };
        info!(
            "{setting} fraction {fraction}: mean micro-F1 {:.4}, macro-F1 {:.4}",
            row.micro_f1, row.macro_f1
        );
        rows.push(row);
    }
    Ok(rows)
}

/// Hides the labels of `held`, rebuilds label posteriors, trains, and scores
/// the held-out things with `k` equal to their true label count.
fn run_cell(
    data: &EvalData,
    r: &RelevanceMatrix,
    fs: &[Vec<f64>],
    blocks: FeatureBlocks,
    held: &BTreeSet<usize>,
    cfg: &TrainConfig,
) -> Result<F1Report> {
    let n_labels = data.label_names.len();
    let visible: Vec<BTreeSet<usize>> = (0..data.things.len())
        .map(|i| if held.contains(&i) { BTreeSet::new() } else { data.labels[i].clone() })
        .collect();
    let fl = label_posteriors(r, &visible, n_labels)?;
    let fm = assemble_features(&data.things, &data.label_names, &fl, fs, &data.content)?.select(blocks);
    let train_idx: Vec<usize> = (0..data.things.len()).filter(|i| !visible[*i].is_empty()).collect();
    let x: Vec<Vec<f64>> = train_idx.iter().map(|&i| fm.rows[i].clone()).collect();
    let y: Vec<BTreeSet<usize>> = train_idx.iter().map(|&i| visible[i].clone()).collect();
    let model = train(&x, &y, &data.label_names, &fm.header()[1..], cfg)?;

    let unseen: BTreeSet<usize> = (0..n_labels).filter(|&l| !model.active[l]).collect();
    for &l in &unseen {
        warn!("label `{}` lost all training examples; excluded from macro-F1", data.label_names[l]);
    }
    let mut truth = Vec::with_capacity(held.len());
    let mut predicted = Vec::with_capacity(held.len());
    for &i in held {
        let k = data.labels[i].len();
        let p = model.predict(&fm.rows[i], k)?;
        truth.push(data.labels[i].clone());
        predicted.push(p.ranked.iter().map(|&(l, _)| l).collect());
    }
    f1_report(&truth, &predicted, &unseen)
}

/// Default sweep grid: `(0.1, 0.9), (0.2, 0.8), ..., (0.9, 0.1)`.
pub fn default_grid() -> Vec<(f64, f64)> {
    (1..=9).map(|i| (i as f64 / 10.0, (10 - i) as f64 / 10.0)).collect()
}

/// Holdout experiment at every `(alpha, beta)` grid point.
pub fn alpha_beta_sweep(
    data: &EvalData,
    rm: &RelevanceMatrix,
    ru: &RelevanceMatrix,
    grid: &[(f64, f64)],
    blocks: FeatureBlocks,
    protocol: &Protocol,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for &(alpha, beta) in grid {
        let r = combine(rm, ru, alpha, beta)?;
        rows.extend(holdout_experiment(data, &r, blocks, protocol, "sweep", alpha, beta)?);
    }
    Ok(rows)
}

/// Mean micro-F1 over all mean rows of `rows` matching `setting`.
pub fn mean_micro(rows: &[ReportRow], setting: &str) -> f64 {
    let m: Vec<f64> = rows
        .iter()
        .filter(|r| r.rep.is_none() && r.setting == setting)
        .map(|r| r.micro_f1)
        .collect();
    m.iter().sum::<f64>() / m.len().max(1) as f64
}

/// CSV `fraction,rep,alpha,beta,micro_f1,macro_f1`, with a leading
/// `setting` column when `with_setting` is set. Mean rows use `rep = mean`.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W, with_setting: bool, config_hash: &str) -> Result<()> {
    let mut out = out;
    let fmt = |e: std::io::Error| Error::Format(e.to_string());
    writeln!(out, "# config={config_hash}").map_err(fmt)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    let mut header = vec!["fraction", "rep", "alpha", "beta", "micro_f1", "macro_f1"];
    if with_setting {
        header.insert(0, "setting");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.fraction.to_string(),
            r.rep.map_or_else(|| "mean".to_string(), |x| x.to_string()),
            r.alpha.to_string(),
            r.beta.to_string(),
            r.micro_f1.to_string(),
            r.macro_f1.to_string(),
        ];
        if with_setting {
            rec.insert(0, r.setting.clone());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(fmt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sets(v: &[&[usize]]) -> Vec<BTreeSet<usize>> {
        v.iter().map(|s| s.iter().copied().collect()).collect()
    }

    #[test]
    fn micro_example() {
        // labels x = 0, y = 1
        let truth = sets(&[&[0, 1], &[0]]);
        let pred = sets(&[&[0], &[0, 1]]);
        assert_abs_diff_eq!(micro_f1(&truth, &pred).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(micro_f1(&truth, &truth).unwrap(), 1.0);
        assert_eq!(micro_f1(&truth, &sets(&[&[], &[]])).unwrap(), 0.0);
        assert!(micro_f1(&[], &[]).is_err());
    }

    #[test]
    fn macro_examples() {
        let truth = sets(&[&[0], &[1]]);
        assert_eq!(macro_f1(&truth, &truth).unwrap(), 1.0);
        let pred = sets(&[&[0], &[]]);
        assert_eq!(macro_f1(&truth, &pred).unwrap(), 0.5);
        let excl: BTreeSet<usize> = [1].into();
        assert_eq!(macro_f1_excluding(&truth, &pred, &excl).unwrap(), 1.0);
    }

    #[test]
    fn three_label_toy() {
        let truth = sets(&[&[0, 1], &[2], &[0]]);
        let pred = sets(&[&[0], &[1, 2], &[2]]);
        // label 0: tp 1 fn 1 -> 2/3; label 1: fp 1 fn 1 -> 0; label 2: tp 1 fp 1 -> 2/3
        assert_abs_diff_eq!(macro_f1(&truth, &pred).unwrap(), 4.0 / 9.0, epsilon = 1e-15);
        let s = per_label_scores(&truth, &pred).unwrap();
        assert_eq!(s[2].precision, 0.5);
        assert_eq!(s[2].recall, 1.0);
    }

    #[test]
    fn split_takes_a_share_of_every_label() {
        let labels: Vec<BTreeSet<usize>> = (0..20).map(|i| [i % 2].into()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let held = holdout_split(&labels, 0.3, &mut rng).unwrap();
        assert_eq!(held.len(), 6);
        assert_eq!(held.iter().filter(|&&i| i % 2 == 0).count(), 3);
        let tiny = holdout_split(&labels, 0.01, &mut rng).unwrap();
        assert_eq!(tiny.len(), 2);
        assert!(holdout_split(&labels, 1.0, &mut rng).is_err());
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            holdout_split(&labels, 0.5, &mut a).unwrap(),
            holdout_split(&labels, 0.5, &mut b).unwrap()
        );
    }

    #[test]
    fn grid_has_nine_points() {
        let g = default_grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], (0.1, 0.9));
        assert_eq!(g[8], (0.9, 0.1));
    }
}
