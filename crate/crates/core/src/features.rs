// SPDX-License-Identifier: Apache-2.0

//! Per-thing features for annotation: label posteriors from relevance,
//! modularity eigenvector loadings of the RGT, and tf-idf² content vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rgt::RelationalGraphOfThings;
use crate::rwr::RelevanceMatrix;

/// Label prior from the training assignments: share of all (thing, label)
/// pairs carrying each label.
pub fn label_prior(train: &[BTreeSet<usize>], n_labels: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; n_labels];
    let mut total = 0.0;
    for set in train {
        for &l in set {
            if l >= n_labels {
                return Err(Error::param("label", format!("index {l} outside vocabulary of {n_labels}")));
            }
            counts[l] += 1.0;
            total += 1.0;
        }
    }
    if total == 0.0 {
        return Err(Error::Empty("training labels".into()));
    }
    Ok(counts.into_iter().map(|c| c / total).collect())
}

/// Posterior over labels for `o_star`, given its relevance row.
///
/// The likelihood of label `l` is the mean relevance from `o_star` to the
/// training things carrying `l`, skipping `o_star` itself when `leave_out`
/// is set. Labels without support get zero mass. If every likelihood is
/// zero the prior is returned unchanged.
pub fn label_posterior(
    relevance: &[f64],
    o_star: usize,
    train: &[BTreeSet<usize>],
    prior: &[f64],
    leave_out: bool,
) -> Vec<f64> {
    let n_labels = prior.len();
    let mut sums = vec![0.0; n_labels];
    let mut support = vec![0usize; n_labels];
    for (m, set) in train.iter().enumerate() {
        if leave_out && m == o_star {
            continue;
        }
        for &l in set {
            sums[l] += relevance[m];
            support[l] += 1;
        }
    }
    let mut post: Vec<f64> = (0..n_labels)
        .map(|l| {
            if support[l] == 0 {
                0.0
            } else {
                prior[l] * sums[l] / support[l] as f64
            }
        })
        .collect();
    let z: f64 = post.iter().sum();
    if z > 0.0 && z.is_finite() {
        for p in &mut post {
            *p /= z;
        }
        post
    } else {
        prior.to_vec()
    }
}

/// Label posteriors for every thing in `r`. Training things (non-empty
/// label set) are scored leave-one-out.
pub fn label_posteriors(
    r: &RelevanceMatrix,
    train: &[BTreeSet<usize>],
    n_labels: usize,
) -> Result<Vec<Vec<f64>>> {
    if train.len() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} label sets for {} things",
            train.len(),
            r.len()
        )));
    }
    let prior = label_prior(train, n_labels)?;
    Ok((0..r.len())
        .map(|i| label_posterior(r.row(i), i, train, &prior, !train[i].is_empty()))
        .collect())
}

/// Symmetrized directed, weighted modularity matrix of the RGT.
///
/// With `W[i][j]` the weight of edge `i -> j`, in-strength `w_in`,
/// out-strength `w_out` and total weight `S`, returns `B + Bᵀ` where
/// `B[i][j] = W[i][j] - w_in[i] * w_out[j] / S`. A graph without edges
/// gives the zero matrix.
pub fn modularity_matrix(g: &RelationalGraphOfThings) -> DMatrix<f64> {
    let n = g.node_count();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for e in g.edges() {
        w[(e.src, e.dst)] += e.weight;
    }
    let total = w.sum();
    if total == 0.0 {
        return DMatrix::zeros(n, n);
    }
    let w_out: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let w_in: Vec<f64> = (0..n).map(|j| w.column(j).sum()).collect();
    let b = DMatrix::from_fn(n, n, |i, j| w[(i, j)] - w_in[i] * w_out[j] / total);
    &b + b.transpose()
}

/// Eigenvectors of a symmetric matrix for its `k` largest positive
/// eigenvalues, as per-node rows of length `k`. Missing dimensions are
/// zero. Each eigenvector is signed so its largest-magnitude entry
/// (first one, on ties) is positive.
pub fn leading_eigenvectors(m: DMatrix<f64>, k: usize) -> Result<Vec<Vec<f64>>> {
    let n = m.nrows();
    let mut rows = vec![vec![0.0; k]; n];
    if n == 0 {
        return Ok(rows);
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or(Error::EigenNotConverged)?;
    let scale = eig.eigenvalues.amax();
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * scale.max(1e-300))
        .collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    for (d, &col) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(col);
        let peak = v.amax();
        let pivot = v.iter().position(|x| x.abs() >= peak * (1.0 - 1e-9)).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, row) in rows.iter_mut().enumerate() {
            row[d] = sign * v[i];
        }
    }
    Ok(rows)
}

/// Modularity eigenfeatures, one `k_eig`-vector per RGT node.
pub fn modularity_features(g: &RelationalGraphOfThings, k_eig: usize) -> Result<Vec<Vec<f64>>> {
    if k_eig == 0 {
        return Err(Error::param("k_eig", "must be >= 1"));
    }
    leading_eigenvectors(modularity_matrix(g), k_eig)
}

/// Lowercased alphanumeric runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentFeatures {
    pub terms: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// tf · idf² vectors, L2-normalized. `idf = ln(N / df)` with `N` the number
/// of non-empty documents. Empty documents map to zero vectors.
pub fn tfidf_features(descriptions: &[&str]) -> ContentFeatures {
    let docs: Vec<BTreeMap<String, usize>> = descriptions
        .iter()
        .map(|d| {
            let mut tf = BTreeMap::new();
            for t in tokenize(d) {
                *tf.entry(t).or_insert(0) += 1;
            }
            tf
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &docs {
        for t in doc.keys() {
            *df.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let n_docs = docs.iter().filter(|d| !d.is_empty()).count() as f64;
    let terms: Vec<String> = df.keys().map(|t| t.to_string()).collect();
    let idf2: Vec<f64> = df
        .values()
        .map(|&d| {
            let idf = (n_docs / d as f64).ln();
            idf * idf
        })
        .collect();
    let vectors = docs
        .iter()
        .map(|doc| {
            let mut v: Vec<f64> = terms
                .iter()
                .zip(&idf2)
                .map(|(t, w)| doc.get(t).map_or(0.0, |&tf| tf as f64 * w))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            v
        })
        .collect();
    ContentFeatures { terms, vectors }
}

/// Which feature families to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlocks {
    pub labels: bool,
    pub structural: bool,
    pub content: bool,
}

impl FeatureBlocks {
    pub const ALL: FeatureBlocks = FeatureBlocks {
        labels: true,
        structural: true,
        content: true,
    };
    /// Label posteriors plus modularity features.
    pub const STRUCTURAL: FeatureBlocks = FeatureBlocks {
        labels: true,
        structural: true,
        content: false,
    };
    pub const CONTENT: FeatureBlocks = FeatureBlocks {
        labels: false,
        structural: false,
        content: true,
    };
}

impl Default for FeatureBlocks {
    fn default() -> Self {
        FeatureBlocks::ALL
    }
}

impl FromStr for FeatureBlocks {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureBlocks::ALL),
            "structural" => Ok(FeatureBlocks::STRUCTURAL),
            "content" => Ok(FeatureBlocks::CONTENT),
            _ => {
                let mut b = FeatureBlocks {
                    labels: false,
                    structural: false,
                    content: false,
                };
                for part in s.split('+') {
                    match part.trim().to_ascii_uppercase().as_str() {
                        "FL" | "F_L" => b.labels = true,
                        "FS" | "F_S" => b.structural = true,
                        "FC" | "F_C" => b.content = true,
                        _ => {
                            return Err(Error::param(
                                "features",
                                format!("unknown feature set `{s}`; expected all, structural, content or e.g. FL+FC"),
                            ))
                        }
                    }
                }
                Ok(b)
            }
        }
    }
}

/// Per-thing rows laid out as `[labels | eig_1..eig_k | terms]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub things: Vec<String>,
    pub label_names: Vec<String>,
    pub eig_dim: usize,
    pub terms: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn assemble_features(
    things: &[String],
    label_names: &[String],
    fl: &[Vec<f64>],
    fs: &[Vec<f64>],
    fc: &ContentFeatures,
) -> Result<FeatureMatrix> {
    let n = things.len();
    if fl.len() != n || fs.len() != n || fc.vectors.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} things but {}/{}/{} feature rows",
            fl.len(),
            fs.len(),
            fc.vectors.len()
        )));
    }
    let eig_dim = fs.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if fl[i].len() != label_names.len() || fs[i].len() != eig_dim || fc.vectors[i].len() != fc.terms.len() {
            return Err(Error::DimensionMismatch(format!("ragged feature row for `{}`", things[i])));
        }
        let mut row = Vec::with_capacity(label_names.len() + eig_dim + fc.terms.len());
        row.extend_from_slice(&fl[i]);
        row.extend_from_slice(&fs[i]);
        row.extend_from_slice(&fc.vectors[i]);
        rows.push(row);
    }
    Ok(FeatureMatrix {
        things: things.to_vec(),
        label_names: label_names.to_vec(),
        eig_dim,
        terms: fc.terms.clone(),
        rows,
    })
}

impl FeatureMatrix {
    pub fn dim(&self) -> usize {
        self.label_names.len() + self.eig_dim + self.terms.len()
    }

    pub fn len(&self) -> usize {
        self.things.len()
    }

    pub fn is_empty(&self) -> bool {
        self.things.is_empty()
    }

    pub fn thing_index(&self, thing: &str) -> Option<usize> {
        self.things.iter().position(|t| t == thing)
    }

    pub fn select(&self, blocks: FeatureBlocks) -> FeatureMatrix {
        let nl = self.label_names.len();
        let ne = self.eig_dim;
        let keep = |c: usize| {
            if c < nl {
                blocks.labels
            } else if c < nl + ne {
                blocks.structural
            } else {
                blocks.content
            }
        };
        FeatureMatrix {
            things: self.things.clone(),
            label_names: if blocks.labels { self.label_names.clone() } else { Vec::new() },
            eig_dim: if blocks.structural { ne } else { 0 },
            terms: if blocks.content { self.terms.clone() } else { Vec::new() },
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().enumerate().filter(|(c, _)| keep(*c)).map(|(_, &v)| v).collect())
                .collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["thing".to_string()];
        h.extend(self.label_names.iter().cloned());
        h.extend((1..=self.eig_dim).map(|i| format!("eig_{i}")));
        h.extend(self.terms.iter().cloned());
        h
    }

    /// CSV with a leading `#` line recording block sizes and the config hash.
    pub fn write_csv<W: Write>(&self, mut out: W, config_hash: &str) -> Result<()> {
        let fmt_err = |e: std::io::Error| Error::Format(e.to_string());
        writeln!(
            out,
            "# labels={} eig={} terms={} config={}",
            self.label_names.len(),
            self.eig_dim,
            self.terms.len(),
            config_hash
        )
        .map_err(fmt_err)?;
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(self.header()).map_err(csv_err)?;
        for (t, row) in self.things.iter().zip(&self.rows) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(t.clone());
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(fmt_err)
    }

    /// Reads what `write_csv` wrote; returns the matrix and the config hash.
    pub fn read_csv<R: Read>(input: R) -> Result<(FeatureMatrix, String)> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first).map_err(|e| Error::Format(e.to_string()))?;
        let meta = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Malformed {
                line: 1,
                msg: "missing `# labels=.. eig=.. terms=..` line".into(),
            })?;
        let mut dims = BTreeMap::new();
        for kv in meta.split_whitespace() {
            if let Some((k, v)) = kv.split_once('=') {
                dims.insert(k.to_string(), v.to_string());
            }
        }
        let dim = |k: &str| -> Result<usize> {
            dims.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Malformed {
                line: 1,
                msg: format!("bad or missing `{k}`"),
            })
        };
        let (nl, ne, nt) = (dim("labels")?, dim("eig")?, dim("terms")?);
        let hash = dims.get("config").cloned().unwrap_or_default();
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        if header.len() != 1 + nl + ne + nt {
            return Err(Error::Malformed {
                line: 2,
                msg: format!("header has {} columns, expected {}", header.len(), 1 + nl + ne + nt),
            });
        }
        let label_names = header.iter().skip(1).take(nl).map(str::to_owned).collect();
        let terms = header.iter().skip(1 + nl + ne).map(str::to_owned).collect();
        let mut things = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 3;
            let rec = rec.map_err(|e| Error::Malformed {
                line,
                msg: e.to_string(),
            })?;
            if rec.len() != header.len() {
                return Err(Error::Malformed {
                    line,
                    msg: format!("{} fields, expected {}", rec.len(), header.len()),
                });
            }
            things.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>().map_err(|e| Error::Malformed {
                        line,
                        msg: format!("`{v}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok((
            FeatureMatrix {
                things,
                label_names,
                eig_dim: ne,
                terms,
                rows,
            },
            hash,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rgt::RgtEdge;
    use crate::rwr::RelevanceSource;
    use approx::assert_abs_diff_eq;

    fn set(ls: &[usize]) -> BTreeSet<usize> {
        ls.iter().copied().collect()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i:02}")).collect()
    }

    fn undirected(n: usize, pairs: &[(usize, usize)]) -> RelationalGraphOfThings {
        let mut edges = Vec::new();
        for &(a, b) in pairs {
            edges.push(RgtEdge { src: a, dst: b, weight: 1.0 });
            edges.push(RgtEdge { src: b, dst: a, weight: 1.0 });
        }
        RelationalGraphOfThings::from_edges(names(n), edges, n).unwrap()
    }

    fn clique_pairs(nodes: std::ops::Range<usize>) -> Vec<(usize, usize)> {
        let v: Vec<usize> = nodes.collect();
        let mut out = Vec::new();
        for (i, &a) in v.iter().enumerate() {
            for &b in &v[i + 1..] {
                out.push((a, b));
            }
        }
        out
    }

    #[test]
    fn priors() {
        assert_eq!(label_prior(&[set(&[0])], 1).unwrap(), vec![1.0]);
        assert_eq!(label_prior(&[set(&[0]), set(&[1])], 2).unwrap(), vec![0.5, 0.5]);
        assert!(label_prior(&[set(&[])], 2).is_err());
        // 118 of 397 assignments
        let mut train = vec![set(&[0]); 118];
        train.extend(vec![set(&[1]); 279]);
        assert_abs_diff_eq!(label_prior(&train, 2).unwrap()[0], 118.0 / 397.0, epsilon = 1e-15);
    }

    #[test]
    fn posterior_hand_case() {
        // training: thing 0 -> {A}, thing 1 -> {A, B}, thing 2 -> {B}; o* = 3
        let train = vec![set(&[0]), set(&[0, 1]), set(&[1]), set(&[])];
        let prior = label_prior(&train, 2).unwrap();
        let pi = [0.5, 0.2, 0.1, 0.2];
        let post = label_posterior(&pi, 3, &train, &prior, false);
        let a = 0.5 * (0.5 + 0.2) / 2.0;
        let b = 0.5 * (0.2 + 0.1) / 2.0;
        assert_abs_diff_eq!(post[0], a / (a + b), epsilon = 1e-12);
        assert_abs_diff_eq!(post[1], b / (a + b), epsilon = 1e-12);
    }

    #[test]
    fn posterior_support_and_degenerate_cases() {
        let train = vec![set(&[0]), set(&[0]), set(&[1]), set(&[])];
        let prior = label_prior(&train, 3).unwrap();
        let post = label_posterior(&[0.4, 0.3, 0.0, 0.3], 3, &train, &prior, false);
        assert_eq!(post[0], 1.0);
        assert_eq!(post[2], 0.0);
        let flat = label_posterior(&[0.25; 4], 3, &train, &prior, false);
        for (p, q) in flat.iter().zip(&prior) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-15);
        }
        assert_eq!(label_posterior(&[0.0; 4], 3, &train, &prior, false), prior);
    }

    #[test]
    fn posteriors_leave_training_thing_out() {
        let r = RelevanceMatrix::new(
            vec![vec![0.9, 0.0, 0.1], vec![0.0, 0.9, 0.1], vec![0.1, 0.4, 0.5]],
            0.15,
            RelevanceSource::Combined,
        )
        .unwrap();
        let train = vec![set(&[0]), set(&[1]), set(&[])];
        let fl = label_posteriors(&r, &train, 2).unwrap();
        // thing 0 only sees itself for label 0, which is left out
        assert_eq!(fl[0], vec![0.5, 0.5]);
        assert_abs_diff_eq!(fl[2][1], 0.8, epsilon = 1e-12);
    }

    /// Newman's modularity matrix straight from the adjacency.
    fn newman(n: usize, pairs: &[(usize, usize)]) -> DMatrix<f64> {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for &(i, j) in pairs {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        let two_m: f64 = d.iter().sum();
        DMatrix::from_fn(n, n, |i, j| a[(i, j)] - d[i] * d[j] / two_m)
    }

    #[test]
    fn modularity_reduces_to_classic_case() {
        let pairs = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)];
        let b = modularity_matrix(&undirected(6, &pairs));
        let classic = newman(6, &pairs);
        for i in 0..6 {
            for j in 0..6 {
                assert_abs_diff_eq!(b[(i, j)] / 2.0, classic[(i, j)], epsilon = 1e-12);
            }
            assert_abs_diff_eq!(b.row(i).sum(), 0.0, epsilon = 1e-9);
        }
        let empty = RelationalGraphOfThings::from_edges(names(3), vec![], 1).unwrap();
        assert_eq!(modularity_matrix(&empty), DMatrix::zeros(3, 3));
    }

    #[test]
    fn directed_rows_sum_to_zero() {
        let edges = vec![
            RgtEdge { src: 0, dst: 1, weight: 0.7 },
            RgtEdge { src: 1, dst: 2, weight: 0.2 },
            RgtEdge { src: 2, dst: 0, weight: 1.3 },
            RgtEdge { src: 0, dst: 3, weight: 0.05 },
        ];
        let g = RelationalGraphOfThings::from_edges(names(4), edges, 2).unwrap();
        let b = modularity_matrix(&g);
        for i in 0..4 {
            assert_abs_diff_eq!(b.row(i).sum(), 0.0, epsilon = 1e-9);
        }
        assert_eq!(b, b.transpose());
    }

    #[test]
    fn two_cliques_split_by_leading_sign() {
        let mut pairs = clique_pairs(0..10);
        pairs.extend(clique_pairs(10..20));
        pairs.push((9, 10));
        let fs = modularity_features(&undirected(20, &pairs), 1).unwrap();
        let side = fs[0][0] > 0.0;
        for (i, f) in fs.iter().enumerate() {
            assert_eq!(f[0] > 0.0, if i < 10 { side } else { !side }, "node {i}");
        }
    }

    #[test]
    fn complete_graph_has_flat_features() {
        let fs = modularity_features(&undirected(6, &clique_pairs(0..6)), 3).unwrap();
        for d in 0..3 {
            let col: Vec<f64> = fs.iter().map(|r| r[d]).collect();
            let spread = col.iter().cloned().fold(f64::MIN, f64::max) - col.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-6);
        }
    }

    #[test]
    fn disconnected_components_are_constant_blocks() {
        let mut pairs = clique_pairs(0..4);
        pairs.extend(clique_pairs(4..8));
        let fs = modularity_features(&undirected(8, &pairs), 2).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(fs[i][0].abs(), 1.0 / 8f64.sqrt(), epsilon = 1e-10);
            assert_abs_diff_eq!(fs[i][0], fs[if i < 4 { 0 } else { 4 }][0], epsilon = 1e-10);
            // one positive eigenvalue only; second column padded
            assert_eq!(fs[i][1], 0.0);
        }
        assert!(fs[0][0] * fs[4][0] < 0.0);
        // first largest-magnitude entry positive
        assert!(fs[0][0] > 0.0);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Hot-water KETTLE, 2L x"), vec!["hot", "water", "kettle", "2l"]);
    }

    #[test]
    fn tfidf_scalar_cases() {
        let fc = tfidf_features(&["tea tea tea common", "common coffee", ""]);
        let t = |w: &str| fc.terms.iter().position(|x| x == w).unwrap();
        // `common` is in every non-empty doc
        assert_eq!(fc.vectors[0][t("common")], 0.0);
        // raw weight 3 ln(2)² is the only entry, so it normalizes to 1
        assert_abs_diff_eq!(fc.vectors[0][t("tea")], 1.0, epsilon = 1e-12);
        assert!(fc.vectors[2].iter().all(|&x| x == 0.0));

        let fc = tfidf_features(&["tea tea tea milk", "milk sugar", "sugar bread"]);
        let ln = (3f64 / 1.0).ln();
        let lm = (3f64 / 2.0).ln();
        let raw = [3.0 * ln * ln, lm * lm];
        let norm = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        let t = |w: &str| fc.terms.iter().position(|x| x == w).unwrap();
        assert_abs_diff_eq!(fc.vectors[0][t("tea")], raw[0] / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(fc.vectors[0][t("milk")], raw[1] / norm, epsilon = 1e-12);
        let reordered = tfidf_features(&["milk tea tea tea", "sugar milk", "bread sugar"]);
        assert_eq!(reordered, fc);
    }

    fn toy_matrix() -> FeatureMatrix {
        let things = names(2);
        let labels: Vec<String> = (0..6).map(|i| format!("L{i}")).collect();
        let fl = vec![vec![1.0 / 6.0; 6]; 2];
        let fs = vec![vec![0.1; 8], vec![-0.3; 8]];
        let fc = ContentFeatures {
            terms: (0..100).map(|i| format!("w{i}")).collect(),
            vectors: vec![vec![0.01; 100], vec![1e-300; 100]],
        };
        assemble_features(&things, &labels, &fl, &fs, &fc).unwrap()
    }

    #[test]
    fn assemble_select_and_round_trip() {
        let fm = toy_matrix();
        assert_eq!(fm.dim(), 114);
        assert!(fm.rows.iter().all(|r| r.len() == 114));
        let no_content = fm.select(FeatureBlocks::STRUCTURAL);
        assert_eq!(no_content.dim(), 14);
        assert_eq!(no_content.rows[1][6], -0.3);
        let mut buf = Vec::new();
        fm.write_csv(&mut buf, "cafe").unwrap();
        let (back, hash) = FeatureMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back, fm);
        assert_eq!(hash, "cafe");
        assert!(assemble_features(&names(3), &fm.label_names, &[], &[], &ContentFeatures {
            terms: vec![],
            vectors: vec![]
        })
        .is_err());
    }

    #[test]
    fn feature_block_names() {
        assert_eq!("all".parse::<FeatureBlocks>().unwrap(), FeatureBlocks::ALL);
        assert_eq!("FL+FS".parse::<FeatureBlocks>().unwrap(), FeatureBlocks::STRUCTURAL);
        assert!("xyz".parse::<FeatureBlocks>().is_err());
    }
}
