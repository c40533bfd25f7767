// SPDX-License-Identifier: Apache-2.0

//! The relational graph of things: each thing linked to its `k` most
//! relevant other things.

use std::fmt::Write as _;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rwr::RelevanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgtEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationalGraphOfThings {
    things: Vec<String>,
    edges: Vec<RgtEdge>,
    k: usize,
}

impl RelationalGraphOfThings {
    /// Builds a graph from explicit edges. Edges must join distinct known
    /// nodes and carry positive finite weight.
    pub fn from_edges(things: Vec<String>, edges: Vec<RgtEdge>, k: usize) -> Result<Self> {
        let n = things.len();
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::param("rgt edge", format!("{} -> {} out of range", e.src, e.dst)));
            }
            if e.src == e.dst {
                return Err(Error::param("rgt edge", format!("self-edge on {}", e.src)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::param("rgt edge", format!("weight {} not positive", e.weight)));
            }
        }
        Ok(RelationalGraphOfThings { things, edges, k })
    }

    pub fn things(&self) -> &[String] {
        &self.things
    }

    pub fn edges(&self) -> &[RgtEdge] {
        &self.edges
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.things.len()
    }

    /// Out-neighbors of `i`, most relevant first.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = &RgtEdge> + '_ {
        self.edges.iter().filter(move |e| e.src == i)
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Dense weight matrix, `w[src][dst]`.
    pub fn weight_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.things.len();
        let mut w = vec![vec![0.0; n]; n];
        for e in &self.edges {
            w[e.src][e.dst] += e.weight;
        }
        w
    }
}

/// Links each thing `i` to the (at most) `k` things `j != i` with the largest
/// positive `R(i, j)`; ties go to the lower thing index (identifier order).
pub fn build_rgt(r: &RelevanceMatrix, things: &[String], k: usize) -> Result<RelationalGraphOfThings> {
    if k == 0 {
        return Err(Error::param("k", "must be >= 1"));
    }
    let n = r.len();
    if things.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} thing ids for a {n}-thing relevance matrix",
            things.len()
        )));
    }
    let budget = if k >= n {
        warn!("k = {k} >= number of things ({n}); using {}", n.saturating_sub(1));
        n.saturating_sub(1)
    } else {
        k
    };
    let mut edges = Vec::with_capacity(n * budget);
    for i in 0..n {
        let row = r.row(i);
        let mut candidates: Vec<usize> = (0..n).filter(|&j| j != i && row[j] > 0.0).collect();
        candidates.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        edges.extend(candidates.into_iter().take(budget).map(|j| RgtEdge {
            src: i,
            dst: j,
            weight: row[j],
        }));
    }
    Ok(RelationalGraphOfThings {
        things: things.to_vec(),
        edges,
        k: budget,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgtFormat {
    Json,
    Dot,
    GraphMl,
}

impl FromStr for RgtFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(RgtFormat::Json),
            "dot" => Ok(RgtFormat::Dot),
            "graphml" => Ok(RgtFormat::GraphMl),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonEdge {
    src: String,
    dst: String,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonRgt {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    k: usize,
    nodes: Vec<String>,
    edges: Vec<JsonEdge>,
}

impl RelationalGraphOfThings {
    pub fn to_json(&self, config_hash: Option<&str>) -> String {
        let doc = JsonRgt {
            config_hash: config_hash.map(str::to_owned),
            k: self.k,
            nodes: self.things.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| JsonEdge {
                    src: self.things[e.src].clone(),
                    dst: self.things[e.dst].clone(),
                    weight: e.weight,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("rgt serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: JsonRgt = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        let index = |id: &str| {
            doc.nodes
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::UnknownId {
                    kind: "thing",
                    id: id.to_string(),
                })
        };
        let edges = doc
            .edges
            .iter()
            .map(|e| {
                Ok(RgtEdge {
                    src: index(&e.src)?,
                    dst: index(&e.dst)?,
                    weight: e.weight,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(doc.nodes, edges, doc.k)
    }

    pub fn to_dot(&self, config_hash: Option<&str>) -> String {
        let mut out = String::from("digraph rgt {\n");
        if let Some(h) = config_hash {
            let _ = writeln!(out, "  // config {h}");
        }
        for t in &self.things {
            let _ = writeln!(out, "  {};", dot_id(t));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {} -> {} [weight={}];",
                dot_id(&self.things[e.src]),
                dot_id(&self.things[e.dst]),
                e.weight
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_graphml(&self, config_hash: Option<&str>) -> String {
        let mut out = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
        );
        if let Some(h) = config_hash {
            let _ = writeln!(out, "  <!-- config {} -->", xml_escape(h));
        }
        out.push_str(
            "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n\
             \x20 <graph id=\"rgt\" edgedefault=\"directed\">\n",
        );
        for t in &self.things {
            let _ = writeln!(out, "    <node id=\"{}\"/>", xml_escape(t));
        }
        for (i, e) in self.edges.iter().enumerate() {
            let _ = writeln!(
                out,
                "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data></edge>",
                xml_escape(&self.things[e.src]),
                xml_escape(&self.things[e.dst]),
                e.weight
            );
        }
        out.push_str("  </graph>\n</graphml>\n");
        out
    }

    pub fn render(&self, format: RgtFormat, config_hash: Option<&str>) -> String {
        match format {
            RgtFormat::Json => self.to_json(config_hash),
            RgtFormat::Dot => self.to_dot(config_hash),
            RgtFormat::GraphMl => self.to_graphml(config_hash),
        }
    }
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
