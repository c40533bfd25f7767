// SPDX-License-Identifier: Apache-2.0

//! Random walk with restart over a context graph.
//!
//! The walker at node `j` moves to `i` with probability proportional to the
//! weight of `j`'s edge to `i`, normalized by `j`'s total out-weight (the
//! row sum of `W`). As a column-stochastic matrix that is `P = W^T D^{-1}`,
//! which equals `W D^{-1}` whenever `W` is symmetric. The stationary vector
//! seeded at `s` solves `pi = (1 - c) P pi + c e_s`.

use std::fmt;
use std::str::FromStr;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph_build::ContextGraph;
use crate::sparse::CsrMatrix;

/// What a node with no out-weight does with its mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DanglingPolicy {
    #[default]
    SelfLoop,
    Uniform,
}

impl FromStr for DanglingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self-loop" | "self_loop" => Ok(DanglingPolicy::SelfLoop),
            "uniform" => Ok(DanglingPolicy::Uniform),
            other => Err(Error::param("dangling", format!("unknown policy `{other}`"))),
        }
    }
}

impl fmt::Display for DanglingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DanglingPolicy::SelfLoop => "self-loop",
            DanglingPolicy::Uniform => "uniform",
        })
    }
}

/// Column-stochastic transition matrix. Row `i` holds `P(i, .)`, the
/// probabilities of arriving at `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: CsrMatrix,
    dangling: Vec<usize>,
    policy: DanglingPolicy,
}

impl TransitionMatrix {
    pub fn size(&self) -> usize {
        self.p.n_rows()
    }

    pub fn policy(&self) -> DanglingPolicy {
        self.policy
    }

    /// Nodes whose out-weight is zero.
    pub fn dangling(&self) -> &[usize] {
        &self.dangling
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let uniform = match self.policy {
            DanglingPolicy::Uniform if self.dangling.binary_search(&j).is_ok() => {
                1.0 / self.size() as f64
            }
            _ => 0.0,
        };
        self.p.get(i, j) + uniform
    }

    /// `out = P x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.p.mul_vec_into(x, out);
        if self.policy == DanglingPolicy::Uniform && !self.dangling.is_empty() {
            let share = self.dangling.iter().map(|&j| x[j]).sum::<f64>() / x.len() as f64;
            out.iter_mut().for_each(|o| *o += share);
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.size();
        let mut sums = self.p.col_sums();
        if self.policy == DanglingPolicy::Uniform {
            for &j in &self.dangling {
                sums[j] += n as f64 * (1.0 / n as f64);
            }
        }
        sums
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = self.p.to_dense();
        if self.policy == DanglingPolicy::Uniform {
            let n = self.size();
            for &j in &self.dangling {
                for i in 0..n {
                    m[(i, j)] += 1.0 / n as f64;
                }
            }
        }
        m
    }
}

/// Normalizes each node's out-weight (row of `W`) into a column of `P`.
pub fn transition_matrix(w: &CsrMatrix, policy: DanglingPolicy) -> Result<TransitionMatrix> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is {}x{}",
            w.n_rows(),
            w.n_cols()
        )));
    }
    if let Some(min) = w.min_value() {
        if min < 0.0 || !min.is_finite() {
            return Err(Error::param("weights", "must be finite and non-negative"));
        }
    }
    if w.nnz() == 0 {
        return Err(Error::ZeroMatrix);
    }
    let out_weight = w.row_sums();
    let dangling: Vec<usize> = (0..w.n_rows()).filter(|&j| out_weight[j] <= 0.0).collect();
    let mut triplets: Vec<(usize, usize, f64)> = w
        .triplets()
        .map(|(j, i, v)| (i, j, v / out_weight[j]))
        .collect();
    if policy == DanglingPolicy::SelfLoop {
        triplets.extend(dangling.iter().map(|&j| (j, j, 1.0)));
    }
    Ok(TransitionMatrix {
        p: CsrMatrix::from_triplets(w.n_rows(), w.n_cols(), triplets),
        dangling,
        policy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwrConfig {
    /// Restart probability, in `(0, 1]`.
    pub c: f64,
    /// L1 convergence tolerance between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    pub dangling: DanglingPolicy,
}

impl Default for RwrConfig {
    fn default() -> Self {
        RwrConfig {
            c: 0.15,
            tol: 1e-9,
            max_iter: 1000,
            dangling: DanglingPolicy::SelfLoop,
        }
    }
}

impl RwrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::param("c", format!("{} not in (0, 1]", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::param("tol", format!("{} must be > 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RwrRun {
    pub pi: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Power iteration for the restart walk seeded at `seed`.
pub fn rwr_steady_state(p: &TransitionMatrix, seed: usize, cfg: &RwrConfig) -> Result<RwrRun> {
    cfg.validate()?;
    let n = p.size();
    if seed >= n {
        return Err(Error::param("seed", format!("node {seed} out of range (n = {n})")));
    }
    let mut pi = vec![0.0; n];
    pi[seed] = 1.0;
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iteration in 1..=cfg.max_iter {
        p.apply(&pi, &mut next);
        for x in next.iter_mut() {
            *x *= 1.0 - cfg.c;
        }
        next[seed] += cfg.c;
        residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < cfg.tol {
            return Ok(RwrRun {
                pi,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual,
    })
}

/// `Q = c (I - (1 - c) P)^{-1}`; column `s` is the stationary vector seeded at `s`.
pub fn closed_form_matrix(p: &TransitionMatrix, c: f64) -> Result<DMatrix<f64>> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::param("c", format!("{c} not in (0, 1]")));
    }
    let n = p.size();
    let a = DMatrix::identity(n, n) - p.to_dense() * (1.0 - c);
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Format("I - (1-c)P is singular".into()))?;
    Ok(inv * c)
}

/// Stationary vector from a dense LU solve of `(I - (1 - c) P) pi = c e_seed`.
pub fn rwr_closed_form(p: &TransitionMatrix, seed: usize, c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::param("c", format!("{c} not in (0, 1]")));
    }
    let n = p.size();
    if seed >= n {
        return Err(Error::param("seed", format!("node {seed} out of range (n = {n})")));
    }
    let a = DMatrix::identity(n, n) - p.to_dense() * (1.0 - c);
    let mut rhs = DVector::zeros(n);
    rhs[seed] = c;
    a.lu()
        .solve(&rhs)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::Format("I - (1-c)P is singular".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelevanceSource {
    SpatioTemporal,
    Social,
    Location,
    Temporal,
    Combined,
}

/// Thing-by-thing relevance. `get(i, j)` is the stationary probability at
/// thing `j` of the walk seeded at thing `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMatrix {
    scores: Vec<Vec<f64>>,
    restart_c: f64,
    source: RelevanceSource,
}

impl RelevanceMatrix {
    pub fn new(scores: Vec<Vec<f64>>, restart_c: f64, source: RelevanceSource) -> Result<Self> {
        let n = scores.len();
        if scores.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("relevance matrix must be square".into()));
        }
        Ok(RelevanceMatrix {
            scores,
            restart_c,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn restart_c(&self) -> f64 {
        self.restart_c
    }

    pub fn source(&self) -> RelevanceSource {
        self.source
    }
}

fn source_of(g: &ContextGraph) -> RelevanceSource {
    use crate::graph_build::GraphKind;
    match g.kind() {
        GraphKind::SpatioTemporal => RelevanceSource::SpatioTemporal,
        GraphKind::Social => RelevanceSource::Social,
        GraphKind::Location => RelevanceSource::Location,
        GraphKind::Temporal => RelevanceSource::Temporal,
    }
}

/// Runs one walk per thing node and keeps the thing-restricted stationary
/// vectors. Seeds run in parallel; rows are assembled in thing order.
pub fn relevance_matrix(g: &ContextGraph, cfg: &RwrConfig) -> Result<RelevanceMatrix> {
    cfg.validate()?;
    let things = g.thing_count();
    if things == 0 {
        return Err(Error::Empty("graph has no thing nodes".into()));
    }
    let p = transition_matrix(g.weights(), cfg.dangling)?;
    let offset = g.thing_offset();
    let rows = (0..things)
        .into_par_iter()
        .map(|i| {
            let run = rwr_steady_state(&p, offset + i, cfg)?;
            debug!(
                "{} walk from thing {i}: {} iterations, residual {:e}",
                g.kind(),
                run.iterations,
                run.residual
            );
            Ok(run.pi[offset..].to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    RelevanceMatrix::new(rows, cfg.c, source_of(g))
}

/// `alpha * rm + beta * ru`
pub fn combine(
    rm: &RelevanceMatrix,
    ru: &RelevanceMatrix,
    alpha: f64,
    beta: f64,
) -> Result<RelevanceMatrix> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(name, format!("{v} not in [0, 1]")));
        }
    }
    if rm.len() != ru.len() {
        return Err(Error::DimensionMismatch(format!(
            "relevance matrices over {} and {} things",
            rm.len(),
            ru.len()
        )));
    }
    let scores = rm
        .scores
        .iter()
        .zip(&ru.scores)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect())
        .collect();
    RelevanceMatrix::new(scores, rm.restart_c, RelevanceSource::Combined)
}

/// Elementwise sum of independently computed relevance matrices.
pub fn sum_relevance(parts: &[&RelevanceMatrix]) -> Result<RelevanceMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Empty("no relevance matrices to sum".into()))?;
    let n = first.len();
    let mut scores = vec![vec![0.0; n]; n];
    for part in parts {
        if part.len() != n {
            return Err(Error::DimensionMismatch("relevance matrices differ in size".into()));
        }
        for (acc, row) in scores.iter_mut().zip(&part.scores) {
            acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
        }
    }
    RelevanceMatrix::new(scores, first.restart_c, RelevanceSource::Combined)
}
