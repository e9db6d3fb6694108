//! Author-Author multi-digraph and Author-Repository bipartite graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Corpus, InteractionKind, Target};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no edges to calibrate")]
    NoEdges,
    #[error("edge label `{0}` has no weight in the calibration")]
    MissingLabel(EdgeLabel),
    #[error("invalid weight {weight} for label `{label}`")]
    InvalidWeight { label: EdgeLabel, weight: f64 },
    #[error("graph is not bipartite: {0}")]
    NotBipartite(String),
}

/// Relationship label of an Author-Author edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    Follower,
    Fork,
    Contribution,
    Comment,
}

impl EdgeLabel {
    pub const ALL: [EdgeLabel; 4] = [
        EdgeLabel::Follower,
        EdgeLabel::Fork,
        EdgeLabel::Contribution,
        EdgeLabel::Comment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeLabel::Follower => "follower",
            EdgeLabel::Fork => "fork",
            EdgeLabel::Contribution => "contribution",
            EdgeLabel::Comment => "comment",
        }
    }

    /// The AA label induced by an interaction kind, if any.
    pub fn from_kind(kind: InteractionKind) -> Option<EdgeLabel> {
        match kind {
            InteractionKind::Follow => Some(EdgeLabel::Follower),
            InteractionKind::Fork => Some(EdgeLabel::Fork),
            InteractionKind::Contribute => Some(EdgeLabel::Contribution),
            InteractionKind::Comment => Some(EdgeLabel::Comment),
            _ => None,
        }
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown edge label `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AaEdge {
    pub src: usize,
    pub dst: usize,
    pub label: EdgeLabel,
    pub weight: f64,
}

/// Weighted labeled multi-digraph over authors.
///
/// Nodes are indexed in the corpus' canonical author order. Edges are sorted
/// by `(src, dst, label)` and unique on that triple. A freshly built graph
/// carries weight 1 on every label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuthorAuthorGraph {
    nodes: Vec<String>,
    edges: Vec<AaEdge>,
    weight_table: BTreeMap<EdgeLabel, f64>,
}

impl AuthorAuthorGraph {
    /// Builds a graph from explicit node ids and labeled edges given as node
    /// indices. Self-loops and repeated `(src, dst, label)` triples are dropped.
    pub fn from_edges(
        nodes: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, EdgeLabel)>,
    ) -> AuthorAuthorGraph {
        let set: BTreeSet<(usize, usize, EdgeLabel)> = edges
            .into_iter()
            .filter(|(s, d, _)| s != d)
            .inspect(|(s, d, _)| assert!(*s < nodes.len() && *d < nodes.len(), "edge endpoint out of range"))
            .collect();
        AuthorAuthorGraph {
            nodes,
            edges: set
                .into_iter()
                .map(|(src, dst, label)| AaEdge {
                    src,
                    dst,
                    label,
                    weight: 1.0,
                })
                .collect(),
            weight_table: EdgeLabel::ALL.iter().map(|&l| (l, 1.0)).collect(),
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[AaEdge] {
        &self.edges
    }

    pub fn weight_table(&self) -> &BTreeMap<EdgeLabel, f64> {
        &self.weight_table
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn label_count(&self, label: EdgeLabel) -> usize {
        self.edges.iter().filter(|e| e.label == label).count()
    }

    /// In- and out-neighbors of `node` across all labels, excluding the node.
    pub fn neighbors(&self, node: usize) -> BTreeSet<usize> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.src == node {
                    Some(e.dst)
                } else if e.dst == node {
                    Some(e.src)
                } else {
                    None
                }
            })
            .filter(|&n| n != node)
            .collect()
    }

    /// Returns a copy with every weight (and the weight table) multiplied by `factor`.
    pub fn scale_weights(&self, factor: f64) -> AuthorAuthorGraph {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.weight *= factor;
        }
        for w in g.weight_table.values_mut() {
            *w *= factor;
        }
        g
    }

    /// Edge list as JSON lines `{"src","dst","label","weight"}` using author ids.
    pub fn edges_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.edges {
            let line = serde_json::json!({
                "src": self.nodes[e.src],
                "dst": self.nodes[e.dst],
                "label": e.label,
                "weight": e.weight,
            });
            out.extend_from_slice(line.to_string().as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn nodes_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for n in &self.nodes {
            out.extend_from_slice(serde_json::json!({ "id": n }).to_string().as_bytes());
            out.push(b'\n');
        }
        out
    }
}

/// Builds the unweighted AA graph: `u -> v` labeled follower/fork/
/// contribution/comment when `u` follows `v` or forks/contributes to/comments
/// on a repository owned by `v`.
pub fn build_aa_graph(corpus: &Corpus) -> AuthorAuthorGraph {
    let nodes = corpus.authors().iter().map(|a| a.author_id.clone()).collect();
    let edges = corpus.interactions().iter().filter_map(|rec| {
        let label = EdgeLabel::from_kind(rec.kind)?;
        let (src, dst) = corpus.author_pair(rec)?;
        Some((src, dst, label))
    });
    AuthorAuthorGraph::from_edges(nodes, edges)
}

/// How per-label average degree is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeBasis {
    /// Labeled edge count divided by node count.
    #[default]
    EdgesPerNode,
    /// In plus out degree summed over nodes, divided by node count (twice the above).
    TotalDegree,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `d_min / d_label`.
    #[default]
    Exact,
    /// Exact ratio rounded to one significant figure, values >= 0.9 set to 1.
    Rounded,
}

impl FromStr for WeightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(WeightMode::Exact),
            "rounded" => Ok(WeightMode::Rounded),
            _ => Err(format!("unknown weight mode `{s}` (expected exact or rounded)")),
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Exact => "exact",
            WeightMode::Rounded => "rounded",
        })
    }
}

/// Rounds to one significant figure; values at or above 0.9 saturate to 1.
pub fn round_weight(w: f64) -> f64 {
    if w >= 0.9 {
        return 1.0;
    }
    if w <= 0.0 {
        return 0.0;
    }
    let exp = w.log10().floor() as i32;
    if exp < 0 {
        let scale = 10f64.powi(-exp);
        (w * scale).round() / scale
    } else {
        let scale = 10f64.powi(exp);
        (w / scale).round() * scale
    }
}

/// Per-label weights inversely proportional to label frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightCalibration {
    pub avg_degree: BTreeMap<EdgeLabel, f64>,
    pub d_min: f64,
    pub weights: BTreeMap<EdgeLabel, f64>,
    /// Labels with no edges; their weight is 0.
    pub absent: Vec<EdgeLabel>,
    pub mode: WeightMode,
}

impl EdgeWeightCalibration {
    /// Computes weights from given per-label average degrees.
    pub fn from_average_degrees(
        avg_degree: BTreeMap<EdgeLabel, f64>,
        mode: WeightMode,
    ) -> Result<Self, GraphError> {
        let d_min = avg_degree
            .values()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !d_min.is_finite() {
            return Err(GraphError::NoEdges);
        }
        let mut weights = BTreeMap::new();
        let mut absent = Vec::new();
        for label in EdgeLabel::ALL {
            let d = avg_degree.get(&label).copied().unwrap_or(0.0);
            let w = if d > 0.0 {
                let exact = d_min / d;
                match mode {
                    WeightMode::Exact => exact,
                    WeightMode::Rounded => round_weight(exact),
                }
            } else {
                absent.push(label);
                0.0
            };
            weights.insert(label, w);
        }
        Ok(EdgeWeightCalibration {
            avg_degree,
            d_min,
            weights,
            absent,
            mode,
        })
    }

    /// Explicit weights, e.g. from a config override.
    pub fn from_weights(weights: BTreeMap<EdgeLabel, f64>) -> Result<Self, GraphError> {
        for (&label, &weight) in &weights {
            if !(weight.is_finite() && weight > 0.0) {
                return Err(GraphError::InvalidWeight { label, weight });
            }
        }
        Ok(EdgeWeightCalibration {
            avg_degree: BTreeMap::new(),
            d_min: f64::NAN,
            absent: EdgeLabel::ALL
                .into_iter()
                .filter(|l| !weights.contains_key(l))
                .collect(),
            weights,
            mode: WeightMode::Exact,
        })
    }
}

pub fn average_degrees(g: &AuthorAuthorGraph, basis: DegreeBasis) -> BTreeMap<EdgeLabel, f64> {
    let n = g.node_count().max(1) as f64;
    let factor = match basis {
        DegreeBasis::EdgesPerNode => 1.0,
        DegreeBasis::TotalDegree => 2.0,
    };
    EdgeLabel::ALL
        .into_iter()
        .map(|l| (l, factor * g.label_count(l) as f64 / n))
        .collect()
}

pub fn calibrate_weights(
    g: &AuthorAuthorGraph,
    basis: DegreeBasis,
    mode: WeightMode,
) -> Result<EdgeWeightCalibration, GraphError> {
    if g.edges().is_empty() {
        return Err(GraphError::NoEdges);
    }
    EdgeWeightCalibration::from_average_degrees(average_degrees(g, basis), mode)
}

pub fn apply_weights(
    g: &AuthorAuthorGraph,
    calib: &EdgeWeightCalibration,
) -> Result<AuthorAuthorGraph, GraphError> {
    let mut out = g.clone();
    for e in &mut out.edges {
        match calib.weights.get(&e.label) {
            Some(&w) if w > 0.0 => e.weight = w,
            Some(&w) => {
                return Err(GraphError::InvalidWeight {
                    label: e.label,
                    weight: w,
                })
            }
            None => return Err(GraphError::MissingLabel(e.label)),
        }
    }
    out.weight_table = calib.weights.clone();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArEdge {
    pub author: usize,
    /// Index into the repository node list.
    pub repo: usize,
    pub kinds: BTreeSet<InteractionKind>,
}

/// Undirected bipartite graph between authors and repositories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuthorRepoGraph {
    authors: Vec<String>,
    repos: Vec<String>,
    edges: Vec<ArEdge>,
}

impl AuthorRepoGraph {
    /// Builds from explicit node lists and `(author, repo, kind)` triples;
    /// triples on the same pair merge into one edge.
    pub fn from_edges(
        authors: Vec<String>,
        repos: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, InteractionKind)>,
    ) -> Result<AuthorRepoGraph, GraphError> {
        let mut merged: BTreeMap<(usize, usize), BTreeSet<InteractionKind>> = BTreeMap::new();
        for (a, r, kind) in edges {
            if a >= authors.len() || r >= repos.len() {
                return Err(GraphError::NotBipartite(format!(
                    "edge ({a}, {r}) does not join an author to a repository"
                )));
            }
            if kind == InteractionKind::Follow {
                return Err(GraphError::NotBipartite("follow is an author-author relation".into()));
            }
            merged.entry((a, r)).or_default().insert(kind);
        }
        let g = AuthorRepoGraph {
            authors,
            repos,
            edges: merged
                .into_iter()
                .map(|((author, repo), kinds)| ArEdge { author, repo, kinds })
                .collect(),
        };
        g.check_bipartite()?;
        Ok(g)
    }

    fn check_bipartite(&self) -> Result<(), GraphError> {
        let authors: BTreeSet<&str> = self.authors.iter().map(String::as_str).collect();
        if let Some(r) = self.repos.iter().find(|r| authors.contains(r.as_str())) {
            return Err(GraphError::NotBipartite(format!("`{r}` is on both sides")));
        }
        if self.edges.len() > self.authors.len() * self.repos.len() {
            return Err(GraphError::NotBipartite("more edges than author-repo pairs".into()));
        }
        Ok(())
    }

    pub fn authors(&self) -> &[String] {
        &self.authors
    }

    pub fn repos(&self) -> &[String] {
        &self.repos
    }

    pub fn edges(&self) -> &[ArEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.authors.len() + self.repos.len()
    }

    pub fn edges_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.edges {
            let line = serde_json::json!({
                "author": self.authors[e.author],
                "repo": self.repos[e.repo],
                "kinds": e.kinds,
            });
            out.extend_from_slice(line.to_string().as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn nodes_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let sides = self
            .authors
            .iter()
            .map(|a| (a, "author"))
            .chain(self.repos.iter().map(|r| (r, "repo")));
        for (id, side) in sides {
            out.extend_from_slice(serde_json::json!({ "id": id, "side": side }).to_string().as_bytes());
            out.push(b'\n');
        }
        out
    }
}

/// AR edges from the six repository-directed kinds; ownership always yields
/// a create edge even without an explicit create record.
pub fn build_ar_graph(corpus: &Corpus) -> Result<AuthorRepoGraph, GraphError> {
    let authors = corpus.authors().iter().map(|a| a.author_id.clone()).collect();
    let repos = corpus.repos().iter().map(|r| r.repo_id.clone()).collect();
    let owned = corpus.repos().iter().enumerate().filter_map(|(ri, r)| {
        corpus
            .author_index(&r.owner_id)
            .map(|ai| (ai, ri, InteractionKind::Create))
    });
    let interacted = corpus.interactions().iter().filter_map(|rec| match &rec.target {
        Target::Repo(id) => Some((corpus.author_index(&rec.actor_id)?, corpus.repo_index(id)?, rec.kind)),
        Target::Author(_) => None,
    });
    AuthorRepoGraph::from_edges(authors, repos, owned.chain(interacted).collect::<Vec<_>>())
}
