//! Producer/Connector scores on the weighted AA graph, knee detection and
//! influence regions.
//!
//! The score iteration is a weighted HITS variant with L1 normalization:
//!
//! ```text
//! phs[u] <- sum over edges v -> u of w(v,u) * chs[v]
//! chs[u] <- sum over edges u -> z of w(u,z) * phs[z]     (uses the fresh phs)
//! normalize both so each sums to 1
//! ```
//!
//! Parallel labeled edges between one pair add their weights. Per-node sums
//! are always reduced in ascending neighbor index order, so the result is
//! bit-identical for any rayon thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::AuthorAuthorGraph;
use crate::ingest::{Corpus, InteractionKind, Target};

#[derive(Debug, Error, PartialEq)]
pub enum InfluenceError {
    #[error("degenerate graph: zero score vector")]
    Degenerate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no knee: {0}")]
    NoKnee(String),
    #[error("unknown author `{0}`")]
    UnknownAuthor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitsParams {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for HitsParams {
    fn default() -> Self {
        HitsParams {
            tolerance: 1e-9,
            max_iter: 10_000,
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    /// Largest per-node change over both vectors.
    pub max_delta: f64,
    pub phs_sum: f64,
    pub chs_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HackerScoreTable {
    pub authors: Vec<String>,
    pub phs: Vec<f64>,
    pub chs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationStats>,
}

impl HackerScoreTable {
    pub fn index_of(&self, author_id: &str) -> Option<usize> {
        self.authors.iter().position(|a| a == author_id)
    }

    pub fn phs_of(&self, author_id: &str) -> Option<f64> {
        self.index_of(author_id).map(|i| self.phs[i])
    }

    pub fn chs_of(&self, author_id: &str) -> Option<f64> {
        self.index_of(author_id).map(|i| self.chs[i])
    }

    /// Node indices ordered by descending score, ties by index.
    pub fn ranking(scores: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        idx
    }
}

/// `(neighbor, summed weight)` lists per node, neighbors ascending.
/// Per-node `(neighbor, summed weight)` lists.
type Adjacency = Vec<Vec<(usize, f64)>>;

fn adjacency(g: &AuthorAuthorGraph) -> (Adjacency, Adjacency) {
    let n = g.node_count();
    let mut pair_weight: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in g.edges() {
        *pair_weight.entry((e.src, e.dst)).or_insert(0.0) += e.weight;
    }
    let mut incoming = vec![Vec::new(); n];
    let mut outgoing = vec![Vec::new(); n];
    for (&(s, d), &w) in &pair_weight {
        outgoing[s].push((d, w));
        incoming[d].push((s, w));
    }
    for list in &mut incoming {
        list.sort_by_key(|&(v, _)| v);
    }
    (incoming, outgoing)
}

/// Below this many nodes the rayon dispatch costs more than the work.
const PARALLEL_MIN_NODES: usize = 2048;

fn propagate(adj: &[Vec<(usize, f64)>], source: &[f64]) -> Vec<f64> {
    let row = |list: &Vec<(usize, f64)>| list.iter().map(|&(v, w)| w * source[v]).sum();
    if adj.len() < PARALLEL_MIN_NODES {
        adj.iter().map(row).collect()
    } else {
        adj.par_iter().map(row).collect()
    }
}

fn normalize(v: &mut [f64]) -> Result<f64, InfluenceError> {
    let total: f64 = v.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(InfluenceError::Degenerate);
    }
    for x in v.iter_mut() {
        *x /= total;
    }
    Ok(v.iter().sum())
}

pub fn hacker_score(g: &AuthorAuthorGraph, params: HitsParams) -> Result<HackerScoreTable, InfluenceError> {
    if !(params.tolerance > 0.0 && params.tolerance.is_finite()) {
        return Err(InfluenceError::InvalidParameter(format!(
            "tolerance must be > 0, got {}",
            params.tolerance
        )));
    }
    if params.max_iter == 0 {
        return Err(InfluenceError::InvalidParameter("max_iter must be >= 1".into()));
    }
    let n = g.node_count();
    let (incoming, outgoing) = adjacency(g);
    let mut phs = vec![1.0; n];
    let mut chs = vec![1.0; n];
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_iter {
        let mut next_phs = propagate(&incoming, &chs);
        let phs_sum = normalize(&mut next_phs)?;
        let mut next_chs = propagate(&outgoing, &next_phs);
        let chs_sum = normalize(&mut next_chs)?;

        let max_delta = phs
            .iter()
            .zip(&next_phs)
            .chain(chs.iter().zip(&next_chs))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trace.push(IterationStats {
            max_delta,
            phs_sum,
            chs_sum,
        });
        phs = next_phs;
        chs = next_chs;
        if max_delta < params.tolerance {
            converged = true;
            break;
        }
    }

    Ok(HackerScoreTable {
        authors: g.nodes().to_vec(),
        phs,
        chs,
        iterations: trace.len(),
        converged,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Knee {
    /// 0-based position on the curve.
    pub index: usize,
    pub value: f64,
    /// Distance from the chord in unit-square coordinates.
    pub distance: f64,
    /// Set when no point lies off the chord (a straight line).
    pub weak: bool,
}

const WEAK_KNEE_DISTANCE: f64 = 1e-9;

/// Locates the point of a descending curve farthest from the chord joining
/// its endpoints. Ties resolve to the earlier (higher-score) point.
pub fn detect_knee(scores: &[f64]) -> Result<Knee, InfluenceError> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(InfluenceError::NoKnee("non-finite score".into()));
    }
    if scores.windows(2).any(|w| w[1] > w[0]) {
        return Err(InfluenceError::NoKnee("curve is not sorted descending".into()));
    }
    let distinct: BTreeSet<u64> = scores.iter().filter(|&&s| s > 0.0).map(|s| s.to_bits()).collect();
    if distinct.len() < 3 {
        return Err(InfluenceError::NoKnee(format!(
            "need at least 3 distinct positive values, found {}",
            distinct.len()
        )));
    }
    let n = scores.len();
    let (top, bottom) = (scores[0], scores[n - 1]);
    let span = top - bottom;
    let mut best = Knee {
        index: 0,
        value: top,
        distance: 0.0,
        weak: true,
    };
    for (i, &s) in scores.iter().enumerate() {
        let x = i as f64 / (n - 1) as f64;
        let y = (s - bottom) / span;
        // chord runs from (0, 1) to (1, 0)
        let d = (x + y - 1.0).abs() / std::f64::consts::SQRT_2;
        if d > best.distance {
            best = Knee {
                index: i,
                value: s,
                distance: d,
                weak: false,
            };
        }
    }
    best.weak = best.distance < WEAK_KNEE_DISTANCE;
    Ok(best)
}

/// Descending copy of the strictly positive scores.
pub fn positive_curve(scores: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = scores.iter().copied().filter(|&s| s > 0.0).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    /// High connector score only.
    A,
    /// Both scores high.
    B,
    /// High producer score only.
    C,
    /// Neither.
    D,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::A, Region::B, Region::C, Region::D];

    pub fn of(phs: f64, chs: f64, phs_knee: f64, chs_knee: f64) -> Region {
        match (phs > phs_knee, chs > chs_knee) {
            (false, true) => Region::A,
            (true, true) => Region::B,
            (true, false) => Region::C,
            (false, false) => Region::D,
        }
    }

    pub fn is_influential(self) -> bool {
        self != Region::D
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionClassification {
    pub phs_knee: f64,
    pub chs_knee: f64,
    /// Aligned with the score table's author order.
    pub regions: Vec<Region>,
}

impl RegionClassification {
    pub fn counts(&self) -> BTreeMap<Region, usize> {
        let mut m: BTreeMap<Region, usize> = Region::ALL.iter().map(|&r| (r, 0)).collect();
        for r in &self.regions {
            *m.get_mut(r).unwrap() += 1;
        }
        m
    }

    pub fn shares(&self) -> BTreeMap<Region, f64> {
        let n = self.regions.len().max(1) as f64;
        self.counts().into_iter().map(|(r, c)| (r, c as f64 / n)).collect()
    }

    /// Indices of the Highly Influential Group (regions A, B, C).
    pub fn hig(&self) -> Vec<usize> {
        (0..self.regions.len())
            .filter(|&i| self.regions[i].is_influential())
            .collect()
    }
}

pub fn classify_regions(
    t: &HackerScoreTable,
    phs_knee: f64,
    chs_knee: f64,
) -> Result<RegionClassification, InfluenceError> {
    if !(phs_knee > 0.0 && chs_knee > 0.0) {
        return Err(InfluenceError::InvalidParameter(format!(
            "knees must be > 0, got phs {phs_knee}, chs {chs_knee}"
        )));
    }
    Ok(RegionClassification {
        phs_knee,
        chs_knee,
        regions: t
            .phs
            .iter()
            .zip(&t.chs)
            .map(|(&p, &c)| Region::of(p, c, phs_knee, chs_knee))
            .collect(),
    })
}

/// One author's influence profile; counts are received on the author's
/// repositories (forks, comments, contributions) or profile (followers).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub author_id: String,
    pub name: String,
    pub phs: f64,
    pub chs: f64,
    pub repos: usize,
    pub followers: usize,
    pub forks: usize,
    pub comments: usize,
    pub contributions: usize,
}

impl ProfileRow {
    pub const HEADER: [&'static str; 8] =
        ["Name", "PHS", "CHS", "Repos", "Followers", "Forks", "Comments", "Contribs"];

    pub fn record(&self) -> [String; 8] {
        [
            self.name.clone(),
            self.phs.to_string(),
            self.chs.to_string(),
            self.repos.to_string(),
            self.followers.to_string(),
            self.forks.to_string(),
            self.comments.to_string(),
            self.contributions.to_string(),
        ]
    }
}

pub fn author_profile(
    author_id: &str,
    corpus: &Corpus,
    t: &HackerScoreTable,
) -> Result<ProfileRow, InfluenceError> {
    let author = corpus
        .author(author_id)
        .ok_or_else(|| InfluenceError::UnknownAuthor(author_id.into()))?;
    let idx = t
        .index_of(author_id)
        .ok_or_else(|| InfluenceError::UnknownAuthor(author_id.into()))?;
    let owned: BTreeSet<&str> = corpus
        .repos()
        .iter()
        .filter(|r| r.owner_id == author_id)
        .map(|r| r.repo_id.as_str())
        .collect();
    let mut followers = BTreeSet::new();
    let (mut forks, mut comments, mut contributions) = (0, 0, 0);
    for rec in corpus.interactions() {
        match (&rec.target, rec.kind) {
            (Target::Author(id), InteractionKind::Follow) if id == author_id => {
                followers.insert(rec.actor_id.as_str());
            }
            (Target::Repo(id), kind) if owned.contains(id.as_str()) => match kind {
                InteractionKind::Fork => forks += 1,
                InteractionKind::Comment => comments += 1,
                InteractionKind::Contribute => contributions += 1,
                _ => {}
            },
            _ => {}
        }
    }
    Ok(ProfileRow {
        author_id: author_id.into(),
        name: author.username.clone(),
        phs: t.phs[idx],
        chs: t.chs[idx],
        repos: owned.len(),
        followers: followers.len(),
        forks,
        comments,
        contributions,
    })
}

/// The two most influential authors of each HIG region: region A ranked by
/// CHS, C by PHS, and B by PHS + CHS.
pub fn top_by_region(t: &HackerScoreTable, rc: &RegionClassification, per_region: usize) -> Vec<(Region, usize)> {
    let mut out = Vec::new();
    for region in [Region::C, Region::A, Region::B] {
        let key = |i: usize| match region {
            Region::A => t.chs[i],
            Region::C => t.phs[i],
            _ => t.phs[i] + t.chs[i],
        };
        let mut members: Vec<usize> = (0..rc.regions.len()).filter(|&i| rc.regions[i] == region).collect();
        members.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
        out.extend(members.into_iter().take(per_region).map(|i| (region, i)));
    }
    out
}
