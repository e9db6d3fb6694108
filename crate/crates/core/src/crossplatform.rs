//! Username linking between the repository platform and forums, and
//! cross-platform egonets.
//!
//! Usernames are compared after trimming and lowercasing; nothing fuzzier.
//! Forum identities are `(forum_id, normalized username)` pairs, so the same
//! name on two forums counts as two neighbors.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::graph::AuthorAuthorGraph;
pub use crate::ingest::normalize_username;
use crate::ingest::{Corpus, ForumCorpus};

#[derive(Debug, Error, PartialEq)]
pub enum CrossPlatformError {
    #[error("username `{0}` is not present on both platforms")]
    Unmatched(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsernameMatch {
    pub username: String,
    pub author_ids: Vec<String>,
    pub forums: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchReport {
    /// Sorted by normalized username.
    pub matches: Vec<UsernameMatch>,
    /// Matched usernames per forum.
    pub per_forum: BTreeMap<String, usize>,
}

impl MatchReport {
    pub fn usernames(&self) -> Vec<&str> {
        self.matches.iter().map(|m| m.username.as_str()).collect()
    }

    pub fn csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["username", "author_ids", "forums"]).unwrap();
        for m in &self.matches {
            w.write_record([m.username.clone(), m.author_ids.join(";"), m.forums.join(";")])
                .unwrap();
        }
        w.into_inner().unwrap()
    }
}

pub fn match_usernames(corpus: &Corpus, forums: &ForumCorpus) -> MatchReport {
    let mut github: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for a in corpus.authors() {
        github
            .entry(normalize_username(&a.username))
            .or_default()
            .push(a.author_id.clone());
    }
    let mut on_forums: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in forums.posts() {
        on_forums
            .entry(normalize_username(&p.username))
            .or_default()
            .insert(p.forum_id.clone());
    }
    let mut report = MatchReport::default();
    for (name, author_ids) in github {
        if let Some(fs) = on_forums.get(&name) {
            for f in fs {
                *report.per_forum.entry(f.clone()).or_default() += 1;
            }
            report.matches.push(UsernameMatch {
                username: name,
                author_ids,
                forums: fs.iter().cloned().collect(),
            });
        }
    }
    report
}

/// Users sharing at least one thread with the ego, per forum.
pub fn forum_egonet(username: &str, forums: &ForumCorpus) -> BTreeSet<(String, String)> {
    let ego = normalize_username(username);
    let mut out = BTreeSet::new();
    for ((forum, _), posts) in forums.threads() {
        let names: BTreeSet<String> = posts.iter().map(|p| normalize_username(&p.username)).collect();
        if names.contains(&ego) {
            out.extend(
                names
                    .into_iter()
                    .filter(|n| *n != ego)
                    .map(|n| (forum.clone(), n)),
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossPlatformEgonet {
    pub username: String,
    /// Author ids adjacent to the ego in the AA graph, either direction, any label.
    pub github_neighbors: BTreeSet<String>,
    pub forum_neighbors: BTreeSet<(String, String)>,
    pub forums_active: BTreeSet<String>,
    pub post_count: usize,
}

impl CrossPlatformEgonet {
    pub fn github_degree(&self) -> usize {
        self.github_neighbors.len()
    }

    pub fn forum_degree(&self) -> usize {
        self.forum_neighbors.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "username": self.username,
            "github_neighbors": self.github_neighbors,
            "forum_neighbors": self
                .forum_neighbors
                .iter()
                .map(|(f, u)| serde_json::json!({"forum_id": f, "username": u}))
                .collect::<Vec<_>>(),
            "forums_active": self.forums_active,
            "post_count": self.post_count,
            "github_degree": self.github_degree(),
            "forum_degree": self.forum_degree(),
        })
    }
}

pub fn cross_egonet(
    username: &str,
    corpus: &Corpus,
    aa: &AuthorAuthorGraph,
    forums: &ForumCorpus,
) -> Result<CrossPlatformEgonet, CrossPlatformError> {
    let ego = normalize_username(username);
    let ego_ids: BTreeSet<&str> = corpus
        .authors()
        .iter()
        .filter(|a| normalize_username(&a.username) == ego)
        .map(|a| a.author_id.as_str())
        .collect();
    let posts: Vec<_> = forums
        .posts()
        .iter()
        .filter(|p| normalize_username(&p.username) == ego)
        .collect();
    if ego_ids.is_empty() || posts.is_empty() {
        return Err(CrossPlatformError::Unmatched(username.to_string()));
    }
    let mut github_neighbors = BTreeSet::new();
    for id in &ego_ids {
        if let Some(i) = aa.node_index(id) {
            github_neighbors.extend(aa.neighbors(i).into_iter().map(|n| aa.nodes()[n].clone()));
        }
    }
    github_neighbors.retain(|n: &String| !ego_ids.contains(n.as_str()));
    Ok(CrossPlatformEgonet {
        username: ego.clone(),
        github_neighbors,
        forum_neighbors: forum_egonet(&ego, forums),
        forums_active: posts.iter().map(|p| p.forum_id.clone()).collect(),
        post_count: posts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScatterPoint {
    pub username: String,
    pub github_degree: usize,
    pub forum_degree: usize,
}

/// Plot-ready `(github degree, forum degree)` per user, sorted by username.
pub fn scatter_series(egonets: &[CrossPlatformEgonet]) -> Vec<ScatterPoint> {
    let mut out: Vec<ScatterPoint> = egonets
        .iter()
        .map(|e| ScatterPoint {
            username: e.username.clone(),
            github_degree: e.github_degree(),
            forum_degree: e.forum_degree(),
        })
        .collect();
    out.sort_by(|a, b| a.username.cmp(&b.username));
    out
}

pub fn scatter_csv(points: &[ScatterPoint]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["username", "github_degree", "forum_degree"]).unwrap();
    for p in points {
        w.write_record([p.username.clone(), p.github_degree.to_string(), p.forum_degree.to_string()])
            .unwrap();
    }
    w.into_inner().unwrap()
}
