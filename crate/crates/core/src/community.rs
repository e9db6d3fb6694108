//! Collaboration communities on the Author-Repository graph.
//!
//! Detection is agglomerative greedy maximization of Barber's bipartite
//! modularity
//!
//! ```text
//! Q = (1/m) * sum_{a in authors, r in repos} (A_ar - k_a * d_r / m) * [g(a) == g(r)]
//! ```
//!
//! which at community level is `Q = sum_c (e_c / m - a_c * r_c / m^2)` where
//! `e_c` counts intra edges and `a_c`, `r_c` sum author and repository
//! degrees. Merging `c` and `d` changes `Q * m^2` by the integer
//! `e_cd * m - (a_c * r_d + a_d * r_c)`, so gains are compared exactly.
//!
//! Node numbering for community ids: authors first (in graph order), then
//! repositories.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;
use thiserror::Error;

use crate::graph::AuthorRepoGraph;
use crate::influence::HackerScoreTable;
use crate::ingest::{extract_keyword_set, Corpus, KeywordConfig};

#[derive(Debug, Error, PartialEq)]
pub enum CommunityError {
    #[error("empty graph: no author-repository edges")]
    EmptyGraph,
    #[error("partition length {found} does not match node count {expected}")]
    BadPartition { expected: usize, found: usize },
}

/// One detected community (structure only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Community {
    /// 1-based rank by size.
    pub id: usize,
    /// Indices into the graph's author list, ascending.
    pub authors: Vec<usize>,
    /// Indices into the graph's repository list, ascending.
    pub repos: Vec<usize>,
    /// Intra-community edges.
    pub edge_count: usize,
}

impl Community {
    pub fn size(&self) -> usize {
        self.authors.len() + self.repos.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeStep {
    pub kept: usize,
    pub absorbed: usize,
    /// Modularity gain times `m^2`.
    pub gain_scaled: i128,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub communities: Vec<Community>,
    pub merges: Vec<MergeStep>,
    pub modularity: f64,
    /// Final modularity times `m^2`.
    pub modularity_scaled: i128,
    pub edge_count: usize,
}

/// Barber modularity of `assignment` (community label per node, authors
/// first) times `m^2`.
pub fn barber_modularity_scaled(g: &AuthorRepoGraph, assignment: &[usize]) -> Result<i128, CommunityError> {
    let n_a = g.authors().len();
    if assignment.len() != g.node_count() {
        return Err(CommunityError::BadPartition {
            expected: g.node_count(),
            found: assignment.len(),
        });
    }
    let m = g.edges().len() as i128;
    let mut intra: BTreeMap<usize, i128> = BTreeMap::new();
    let mut a_deg: BTreeMap<usize, i128> = BTreeMap::new();
    let mut r_deg: BTreeMap<usize, i128> = BTreeMap::new();
    for e in g.edges() {
        let (ca, cr) = (assignment[e.author], assignment[n_a + e.repo]);
        *a_deg.entry(ca).or_default() += 1;
        *r_deg.entry(cr).or_default() += 1;
        if ca == cr {
            *intra.entry(ca).or_default() += 1;
        }
    }
    let mut q: i128 = intra.values().map(|e| e * m).sum();
    for (c, a) in &a_deg {
        q -= a * r_deg.get(c).copied().unwrap_or(0);
    }
    Ok(q)
}

pub fn barber_modularity(g: &AuthorRepoGraph, assignment: &[usize]) -> Result<f64, CommunityError> {
    let m = g.edges().len() as f64;
    if m == 0.0 {
        return Err(CommunityError::EmptyGraph);
    }
    Ok(barber_modularity_scaled(g, assignment)? as f64 / (m * m))
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    gain: i128,
    lo: Reverse<usize>,
    hi: Reverse<usize>,
    lo_version: usize,
    hi_version: usize,
}

/// Greedy agglomeration from singletons: always apply the merge with the
/// largest strictly positive gain, ties going to the smallest `(lo, hi)`
/// community-id pair.
pub fn detect_communities(g: &AuthorRepoGraph) -> Result<Detection, CommunityError> {
    let m = g.edges().len();
    if m == 0 {
        return Err(CommunityError::EmptyGraph);
    }
    let n_a = g.authors().len();
    let n = g.node_count();
    let mi = m as i128;

    let mut a_deg = vec![0i128; n];
    let mut r_deg = vec![0i128; n];
    let mut intra = vec![0usize; n];
    let mut links: Vec<BTreeMap<usize, i128>> = vec![BTreeMap::new(); n];
    for e in g.edges() {
        let (u, v) = (e.author, n_a + e.repo);
        a_deg[u] += 1;
        r_deg[v] += 1;
        *links[u].entry(v).or_default() += 1;
        *links[v].entry(u).or_default() += 1;
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut alive = vec![true; n];
    let mut version = vec![0usize; n];

    let gain = |c: usize, d: usize, w: i128, a: &[i128], r: &[i128]| w * mi - (a[c] * r[d] + a[d] * r[c]);

    let mut heap = BinaryHeap::new();
    for (c, row) in links.iter().enumerate() {
        for (&d, &w) in row.range(c + 1..) {
            heap.push(Candidate {
                gain: gain(c, d, w, &a_deg, &r_deg),
                lo: Reverse(c),
                hi: Reverse(d),
                lo_version: 0,
                hi_version: 0,
            });
        }
    }

    let mut q_scaled: i128 = 0;
    let mut merges = Vec::new();
    while let Some(top) = heap.pop() {
        let (c, d) = (top.lo.0, top.hi.0);
        if !alive[c] || !alive[d] || version[c] != top.lo_version || version[d] != top.hi_version {
            continue;
        }
        if top.gain <= 0 {
            break;
        }
        // merge d into c
        let w_cd = links[c].remove(&d).unwrap_or(0);
        let d_links = std::mem::take(&mut links[d]);
        for (x, w) in d_links {
            if x == c {
                continue;
            }
            links[x].remove(&d);
            *links[x].entry(c).or_default() += w;
            *links[c].entry(x).or_default() += w;
        }
        a_deg[c] += a_deg[d];
        r_deg[c] += r_deg[d];
        intra[c] += intra[d] + w_cd as usize;
        let moved = std::mem::take(&mut members[d]);
        members[c].extend(moved);
        alive[d] = false;
        version[c] += 1;
        q_scaled += top.gain;
        merges.push(MergeStep {
            kept: c,
            absorbed: d,
            gain_scaled: top.gain,
            gain: top.gain as f64 / (mi * mi) as f64,
        });
        for (&x, &w) in &links[c] {
            let (lo, hi) = if x < c { (x, c) } else { (c, x) };
            heap.push(Candidate {
                gain: gain(lo, hi, w, &a_deg, &r_deg),
                lo: Reverse(lo),
                hi: Reverse(hi),
                lo_version: version[lo],
                hi_version: version[hi],
            });
        }
    }

    let mut communities: Vec<(usize, Community)> = (0..n)
        .filter(|&c| alive[c])
        .map(|c| {
            let mut nodes = members[c].clone();
            nodes.sort_unstable();
            let first = nodes[0];
            let authors = nodes.iter().copied().filter(|&i| i < n_a).collect();
            let repos = nodes.iter().copied().filter(|&i| i >= n_a).map(|i| i - n_a).collect();
            (
                first,
                Community {
                    id: 0,
                    authors,
                    repos,
                    edge_count: intra[c],
                },
            )
        })
        .collect();
    communities.sort_by(|(fa, a), (fb, b)| b.size().cmp(&a.size()).then(fa.cmp(fb)));
    let communities = communities
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut c))| {
            c.id = i + 1;
            c
        })
        .collect();

    Ok(Detection {
        communities,
        merges,
        modularity: q_scaled as f64 / (mi * mi) as f64,
        modularity_scaled: q_scaled,
        edge_count: m,
    })
}

impl Detection {
    /// Community label per node (authors first), using community ids.
    pub fn assignment(&self, g: &AuthorRepoGraph) -> Vec<usize> {
        let n_a = g.authors().len();
        let mut out = vec![0; g.node_count()];
        for c in &self.communities {
            for &a in &c.authors {
                out[a] = c.id;
            }
            for &r in &c.repos {
                out[n_a + r] = c.id;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModularityScore {
    pub value: f64,
    /// False when one side of the community is empty; `value` is then 0.
    pub defined: bool,
}

/// Intra-edge density relative to a complete bipartite community.
pub fn modularity_score(c: &Community) -> ModularityScore {
    let possible = c.authors.len() * c.repos.len();
    if possible == 0 {
        ModularityScore {
            value: 0.0,
            defined: false,
        }
    } else {
        ModularityScore {
            value: c.edge_count as f64 / possible as f64,
            defined: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CommunityLeaders {
    /// Author ids with the highest PHS, best first.
    pub producers: Vec<String>,
    /// Author ids with the highest CHS, best first.
    pub connectors: Vec<String>,
}

impl CommunityLeaders {
    /// Union of both lists without repeats.
    pub fn distinct(&self) -> Vec<String> {
        let mut out = self.producers.clone();
        for c in &self.connectors {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }
}

pub const DEFAULT_LEADER_MIN_SIZE: usize = 20;
const LEADERS_PER_ROLE: usize = 2;

pub fn community_leaders(
    c: &Community,
    g: &AuthorRepoGraph,
    scores: &HackerScoreTable,
    min_size: usize,
) -> CommunityLeaders {
    if c.authors.len() < min_size {
        return CommunityLeaders::default();
    }
    let by_id: BTreeMap<&str, usize> = scores
        .authors
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let ranked: Vec<(&str, usize)> = c
        .authors
        .iter()
        .filter_map(|&a| {
            let id = g.authors()[a].as_str();
            by_id.get(id).map(|&i| (id, i))
        })
        .collect();
    let top = |score: &[f64]| {
        let mut v = ranked.clone();
        v.sort_by(|x, y| score[y.1].total_cmp(&score[x.1]).then(x.0.cmp(y.0)));
        v.into_iter()
            .take(LEADERS_PER_ROLE)
            .map(|(id, _)| id.to_string())
            .collect()
    };
    CommunityLeaders {
        producers: top(&scores.phs),
        connectors: top(&scores.chs),
    }
}

/// Strength Of Presence within one keyword set.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SopMap {
    /// Repositories mentioning each keyword (keywords with a zero count omitted).
    pub counts: BTreeMap<String, usize>,
    pub sop: BTreeMap<String, f64>,
    /// Highest SOP; ties go to the keyword listed first in the config.
    pub dominant: Option<(String, f64)>,
    /// Set when no keyword of the set occurs in the community.
    pub no_keywords: bool,
}

/// SOP from `(keyword, count)` pairs given in config order.
pub fn sop_from_counts(counts: &[(String, usize)]) -> SopMap {
    let total: usize = counts.iter().map(|(_, k)| k).sum();
    if total == 0 {
        return SopMap {
            no_keywords: true,
            ..SopMap::default()
        };
    }
    let mut out = SopMap::default();
    let mut best: Option<(usize, &str)> = None;
    for (kw, k) in counts {
        if *k == 0 {
            continue;
        }
        out.counts.insert(kw.clone(), *k);
        out.sop.insert(kw.clone(), *k as f64 / total as f64);
        if best.is_none_or(|(b, _)| *k > b) {
            best = Some((*k, kw));
        }
    }
    out.dominant = best.map(|(_, kw)| (kw.to_string(), out.sop[kw]));
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SopProfile {
    pub malware: SopMap,
    pub platform: SopMap,
}

/// Keyword presence over the community's repositories; the malware and
/// platform sets are normalized independently.
pub fn sop_profile(c: &Community, g: &AuthorRepoGraph, corpus: &Corpus, config: &KeywordConfig) -> SopProfile {
    let mut malware: Vec<(String, usize)> = config.malware_types.iter().map(|k| (k.clone(), 0)).collect();
    let mut platform: Vec<(String, usize)> = config.platforms.iter().map(|k| (k.clone(), 0)).collect();
    for &r in &c.repos {
        let Some(repo) = corpus.repo(&g.repos()[r]) else { continue };
        let kws = extract_keyword_set(repo, config);
        for (kw, k) in malware.iter_mut() {
            if kws.malware_types.contains(kw) {
                *k += 1;
            }
        }
        for (kw, k) in platform.iter_mut() {
            if kws.platforms.contains(kw) {
                *k += 1;
            }
        }
    }
    SopProfile {
        malware: sop_from_counts(&malware),
        platform: sop_from_counts(&platform),
    }
}

/// Both SOP maps merged and scaled so the largest entry is 1.
pub fn wordcloud_weights(sop: &SopProfile) -> BTreeMap<String, f64> {
    let merged: BTreeMap<String, f64> = sop
        .malware
        .sop
        .iter()
        .chain(&sop.platform.sop)
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let max = merged.values().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return BTreeMap::new();
    }
    merged.into_iter().map(|(k, v)| (k, v / max)).collect()
}

/// Everything reported about one community.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityProfile {
    pub id: usize,
    pub authors: Vec<String>,
    pub repos: Vec<String>,
    pub edge_count: usize,
    pub modularity_score: ModularityScore,
    pub leaders: CommunityLeaders,
    pub sop: SopProfile,
}

impl CommunityProfile {
    pub const TABLE_HEADER: [&'static str; 8] = [
        "id",
        "n_authors",
        "n_repos",
        "MS",
        "dominant_platform",
        "platform_SOP",
        "dominant_type",
        "type_SOP",
    ];

    pub fn table_record(&self) -> [String; 8] {
        let dom = |m: &SopMap| match &m.dominant {
            Some((k, v)) => (k.clone(), v.to_string()),
            None => (String::new(), String::new()),
        };
        let (plat, plat_sop) = dom(&self.sop.platform);
        let (kind, kind_sop) = dom(&self.sop.malware);
        [
            self.id.to_string(),
            self.authors.len().to_string(),
            self.repos.len().to_string(),
            self.modularity_score.value.to_string(),
            plat,
            plat_sop,
            kind,
            kind_sop,
        ]
    }
}

pub fn profile_communities(
    detection: &Detection,
    g: &AuthorRepoGraph,
    corpus: &Corpus,
    config: &KeywordConfig,
    scores: &HackerScoreTable,
    min_leader_size: usize,
) -> Vec<CommunityProfile> {
    detection
        .communities
        .iter()
        .map(|c| CommunityProfile {
            id: c.id,
            authors: c.authors.iter().map(|&a| g.authors()[a].clone()).collect(),
            repos: c.repos.iter().map(|&r| g.repos()[r].clone()).collect(),
            edge_count: c.edge_count,
            modularity_score: modularity_score(c),
            leaders: community_leaders(c, g, scores, min_leader_size),
            sop: sop_profile(c, g, corpus, config),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::InteractionKind;

    fn bigraph(n_a: usize, n_r: usize, edges: &[(usize, usize)]) -> AuthorRepoGraph {
        AuthorRepoGraph::from_edges(
            (0..n_a).map(|i| format!("a{i}")).collect(),
            (0..n_r).map(|i| format!("r{i}")).collect(),
            edges.iter().map(|&(a, r)| (a, r, InteractionKind::Star)),
        )
        .unwrap()
    }

    fn biclique(authors: std::ops::Range<usize>, repos: std::ops::Range<usize>) -> Vec<(usize, usize)> {
        authors.flat_map(|a| repos.clone().map(move |r| (a, r))).collect()
    }

    #[test]
    fn two_disjoint_bicliques() {
        let mut e = biclique(0..2, 0..2);
        e.extend(biclique(2..4, 2..4));
        let g = bigraph(4, 4, &e);
        let d = detect_communities(&g).unwrap();
        assert_eq!(d.communities.len(), 2);
        assert_eq!(d.communities[0].authors, vec![0, 1]);
        assert_eq!(d.communities[0].repos, vec![0, 1]);
        assert_eq!(d.communities[1].authors, vec![2, 3]);
        for c in &d.communities {
            assert_eq!(modularity_score(c).value, 1.0);
        }
        assert!(d.merges.iter().all(|s| s.gain_scaled > 0));
        assert_eq!(d.modularity_scaled, barber_modularity_scaled(&g, &d.assignment(&g)).unwrap());
    }

    #[test]
    fn lone_biclique_has_no_positive_merge() {
        let g = bigraph(2, 3, &biclique(0..2, 0..3));
        let d = detect_communities(&g).unwrap();
        assert_eq!(d.communities.len(), 5);
        assert!(d.merges.is_empty());
        assert_eq!(d.modularity_scaled, 0);
        assert_eq!(barber_modularity_scaled(&g, &[0; 5]).unwrap(), 0);
    }

    #[test]
    fn empty_graph_errors() {
        let g = bigraph(2, 2, &[]);
        assert_eq!(detect_communities(&g), Err(CommunityError::EmptyGraph));
    }

    #[test]
    fn isolated_nodes_stay_singletons() {
        let mut e = biclique(0..2, 0..2);
        e.extend(biclique(2..4, 2..4));
        let g = bigraph(5, 5, &e);
        let d = detect_communities(&g).unwrap();
        assert_eq!(d.communities.len(), 4);
        let sizes: usize = d.communities.iter().map(Community::size).sum();
        assert_eq!(sizes, 10);
        let lonely: Vec<_> = d.communities.iter().filter(|c| c.size() == 1).collect();
        assert_eq!(lonely.len(), 2);
        assert!(!modularity_score(lonely[0]).defined);
    }

    #[test]
    fn ms_formula() {
        let c = Community {
            id: 1,
            authors: vec![0, 1],
            repos: vec![0, 1, 2],
            edge_count: 4,
        };
        assert!((modularity_score(&c).value - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn sop_counts() {
        let s = sop_from_counts(&[("keylogger".into(), 2), ("virus".into(), 1), ("trojan".into(), 0)]);
        assert!((s.sop["keylogger"] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.sop["virus"] - 1.0 / 3.0).abs() < 1e-12);
        assert!(!s.sop.contains_key("trojan"));
        assert_eq!(s.dominant.as_ref().unwrap().0, "keylogger");
        let single = sop_from_counts(&[("virus".into(), 3)]);
        assert_eq!(single.sop["virus"], 1.0);
        let none = sop_from_counts(&[("virus".into(), 0)]);
        assert!(none.no_keywords && none.sop.is_empty() && none.dominant.is_none());
        let tie = sop_from_counts(&[("b".into(), 2), ("a".into(), 2)]);
        assert_eq!(tie.dominant.unwrap().0, "b");
    }

    #[test]
    fn wordcloud() {
        let mut p = SopProfile::default();
        p.malware.sop.insert("ransomware".into(), 0.44);
        p.platform.sop.insert("windows".into(), 0.65);
        let w = wordcloud_weights(&p);
        assert_eq!(w["windows"], 1.0);
        assert!((w["ransomware"] - 0.676923).abs() < 1e-6);
        assert!(wordcloud_weights(&SopProfile::default()).is_empty());
        let mut one = SopProfile::default();
        one.platform.sop.insert("linux".into(), 1.0);
        assert_eq!(wordcloud_weights(&one)["linux"], 1.0);
    }
}
