//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use hacknet::graph::{AuthorAuthorGraph, AuthorRepoGraph, EdgeLabel};
use hacknet::ingest::{AuthorRef, Corpus, InteractionKind, InteractionRecord, RepositoryRecord, Target};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn synthetic_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic50")
}

pub fn author(id: &str, name: &str) -> AuthorRef {
    AuthorRef {
        author_id: id.into(),
        username: name.into(),
    }
}

pub fn repo(id: &str, owner: &str, created: Option<&str>, text: &str) -> RepositoryRecord {
    RepositoryRecord {
        repo_id: id.into(),
        owner_id: owner.into(),
        created_at: created.map(|s| hacknet::ingest::parse_timestamp(s).unwrap()),
        metadata_text: text.into(),
    }
}

pub fn on_repo(kind: InteractionKind, actor: &str, repo: &str) -> InteractionRecord {
    InteractionRecord {
        kind,
        actor_id: actor.into(),
        target: Target::Repo(repo.into()),
        timestamp: None,
    }
}

pub fn follow(actor: &str, target: &str) -> InteractionRecord {
    InteractionRecord {
        kind: InteractionKind::Follow,
        actor_id: actor.into(),
        target: Target::Author(target.into()),
        timestamp: None,
    }
}

/// Weighted AA graph on `n` nodes. Weights are per label, so every edge of
/// one label must carry the same weight.
pub fn aa_graph(n: usize, edges: &[(usize, usize, EdgeLabel, f64)]) -> AuthorAuthorGraph {
    let g = AuthorAuthorGraph::from_edges(
        (0..n).map(|i| format!("n{i}")).collect(),
        edges.iter().map(|&(s, d, l, _)| (s, d, l)),
    );
    let mut table = std::collections::BTreeMap::new();
    for &(_, _, l, w) in edges {
        assert_eq!(*table.entry(l).or_insert(w), w, "label {l} has two weights");
    }
    let cal = hacknet::graph::EdgeWeightCalibration::from_weights(table).unwrap();
    hacknet::graph::apply_weights(&g, &cal).unwrap()
}

/// Random weighted multigraph with at most `max_n` nodes and at least one edge.
/// Each label carries one random weight, so parallel edges of different labels
/// add up with different weights.
pub fn random_aa_graph(rng: &mut ChaCha8Rng, max_n: usize) -> AuthorAuthorGraph {
    let n = rng.gen_range(2..=max_n);
    let label_weights: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
    let mut edges = Vec::new();
    let p = rng.gen_range(0.15..0.7);
    for s in 0..n {
        for d in 0..n {
            if s == d {
                continue;
            }
            for (li, l) in EdgeLabel::ALL.into_iter().enumerate() {
                if rng.gen_bool(p / 2.0) {
                    edges.push((s, d, l, label_weights[li]));
                }
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1, EdgeLabel::Follower, label_weights[0]));
    }
    aa_graph(n, &edges)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense weighted adjacency, parallel edges summed.
pub fn dense_weights(g: &AuthorAuthorGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut w = vec![vec![0.0; n]; n];
    for e in g.edges() {
        w[e.src][e.dst] += e.weight;
    }
    w
}

fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    assert!(s > 0.0, "oracle hit a zero vector");
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Power iteration on the explicit matrix `M = W^T W`, started from
/// `W^T 1`; connector scores are `W p`. Returns `(phs, chs)`.
pub fn dense_hits_oracle(g: &AuthorAuthorGraph) -> (Vec<f64>, Vec<f64>) {
    let w = dense_weights(g);
    let n = w.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = (0..n).map(|k| w[k][i] * w[k][j]).sum();
        }
    }
    let mut p: Vec<f64> = (0..n).map(|j| (0..n).map(|i| w[i][j]).sum()).collect();
    l1_normalize(&mut p);
    for _ in 0..200_000 {
        let mut next: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * p[j]).sum()).collect();
        l1_normalize(&mut next);
        let delta = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        p = next;
        if delta < 1e-15 {
            break;
        }
    }
    let mut c: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[i][j] * p[j]).sum()).collect();
    l1_normalize(&mut c);
    (p, c)
}

/// All set partitions of `n` items as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur[i] = b;
            rec(i + 1, max.max(b), cur, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    rec(1, 0, &mut cur, &mut out);
    out
}

/// Barber modularity times `m^2`, straight from the node-pair definition
/// `sum_{a,r} (m * A_ar - k_a * d_r) [g(a) == g(r)]`.
pub fn barber_q_pairwise(n_a: usize, n_r: usize, edges: &[(usize, usize)], part: &[usize]) -> i128 {
    let m = edges.len() as i128;
    let mut adj = vec![vec![0i128; n_r]; n_a];
    let mut k = vec![0i128; n_a];
    let mut d = vec![0i128; n_r];
    for &(a, r) in edges {
        adj[a][r] = 1;
        k[a] += 1;
        d[r] += 1;
    }
    let mut q = 0;
    for a in 0..n_a {
        for r in 0..n_r {
            if part[a] == part[n_a + r] {
                q += m * adj[a][r] - k[a] * d[r];
            }
        }
    }
    q
}

/// Maximum scaled modularity over every partition, plus all maximizers.
pub fn exhaustive_modularity(n_a: usize, n_r: usize, edges: &[(usize, usize)]) -> (i128, Vec<Vec<usize>>) {
    let mut best = i128::MIN;
    let mut argmax = Vec::new();
    for p in set_partitions(n_a + n_r) {
        let q = barber_q_pairwise(n_a, n_r, edges, &p);
        if q > best {
            best = q;
            argmax.clear();
        }
        if q == best {
            argmax.push(p);
        }
    }
    (best, argmax)
}

/// Whether two labelings describe the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

pub fn bigraph(n_a: usize, n_r: usize, edges: &[(usize, usize)]) -> AuthorRepoGraph {
    AuthorRepoGraph::from_edges(
        (0..n_a).map(|i| format!("a{i}")).collect(),
        (0..n_r).map(|i| format!("r{i}")).collect(),
        edges.iter().map(|&(a, r)| (a, r, InteractionKind::Star)),
    )
    .unwrap()
}

pub fn biclique(authors: std::ops::Range<usize>, repos: std::ops::Range<usize>) -> Vec<(usize, usize)> {
    authors.flat_map(|a| repos.clone().map(move |r| (a, r))).collect()
}

/// Two K(2,2) bicliques plus one bridge edge (8 nodes).
pub fn bridged_k22() -> (usize, usize, Vec<(usize, usize)>) {
    let mut e = biclique(0..2, 0..2);
    e.extend(biclique(2..4, 2..4));
    e.push((1, 2));
    (4, 4, e)
}

/// Two K(2,3) bicliques plus one bridge edge (10 nodes).
pub fn bridged_k23() -> (usize, usize, Vec<(usize, usize)>) {
    let mut e = biclique(0..2, 0..3);
    e.extend(biclique(2..4, 3..6));
    e.push((1, 3));
    (4, 6, e)
}

/// Arbitrary small corpus, including invalid records that ingest rejects.
pub fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (
        1usize..8,
        prop::collection::vec((0usize..8, prop::option::of(2008i32..2022)), 0..12),
        prop::collection::vec((0usize..7, 0usize..8, 0usize..12), 0..50),
    )
        .prop_map(|(n_a, repos, interactions)| build_corpus(n_a, &repos, &interactions))
}

pub fn build_corpus(n_a: usize, repos: &[(usize, Option<i32>)], interactions: &[(usize, usize, usize)]) -> Corpus {
    let authors = (0..n_a).map(|i| author(&format!("a{i}"), &format!("user{i}"))).collect();
    let repos: Vec<RepositoryRecord> = repos
        .iter()
        .enumerate()
        .map(|(i, &(owner, year))| {
            let date = year.map(|y| format!("{y}-06-01"));
            repo(&format!("r{i}"), &format!("a{}", owner % n_a), date.as_deref(), "")
        })
        .collect();
    let n_r = repos.len();
    let interactions = interactions
        .iter()
        .map(|&(k, actor, target)| {
            let kind = InteractionKind::ALL[k];
            let actor = format!("a{}", actor % n_a);
            if kind == InteractionKind::Follow {
                follow(&actor, &format!("a{}", target % n_a))
            } else if n_r == 0 {
                on_repo(kind, &actor, "missing")
            } else {
                on_repo(kind, &actor, &format!("r{}", target % n_r))
            }
        })
        .collect();
    Corpus::from_records(authors, repos, interactions).0
}
