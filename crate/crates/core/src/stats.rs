//! Ecosystem statistics: per-author CCDFs, fork summary, yearly cohorts and
//! reciprocity of author-level relationships.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Corpus, InteractionKind, Target};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("corpus has no repositories")]
    NoRepositories,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorMetric {
    ReposCreated,
    Followers,
    TotalForksReceived,
}

impl AuthorMetric {
    pub const ALL: [AuthorMetric; 3] = [
        AuthorMetric::ReposCreated,
        AuthorMetric::Followers,
        AuthorMetric::TotalForksReceived,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuthorMetric::ReposCreated => "repos_created",
            AuthorMetric::Followers => "followers",
            AuthorMetric::TotalForksReceived => "total_forks_received",
        }
    }
}

impl fmt::Display for AuthorMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metric value for every author, in corpus author order.
///
/// Followers count distinct following authors; forks count every fork record
/// on the author's repositories.
pub fn author_metric(metric: AuthorMetric, corpus: &Corpus) -> Vec<u64> {
    let n = corpus.authors().len();
    let mut values = vec![0u64; n];
    match metric {
        AuthorMetric::ReposCreated => {
            for r in corpus.repos() {
                if let Some(i) = corpus.author_index(&r.owner_id) {
                    values[i] += 1;
                }
            }
        }
        AuthorMetric::Followers => {
            let pairs: BTreeSet<(usize, usize)> = corpus
                .interactions()
                .iter()
                .filter(|rec| rec.kind == InteractionKind::Follow)
                .filter_map(|rec| corpus.author_pair(rec))
                .collect();
            for (_, followed) in pairs {
                values[followed] += 1;
            }
        }
        AuthorMetric::TotalForksReceived => {
            for rec in corpus.interactions() {
                if rec.kind == InteractionKind::Fork {
                    if let Target::Repo(id) = &rec.target {
                        if let Some(owner) = corpus.owner_index(id) {
                            values[owner] += 1;
                        }
                    }
                }
            }
        }
    }
    values
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcdfSeries {
    pub metric: String,
    /// `(x, P(X >= x))` for each distinct observed value, ascending in x.
    pub points: Vec<(u64, f64)>,
}

impl CcdfSeries {
    pub fn from_values(metric: &str, values: &[u64]) -> CcdfSeries {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &v in values {
            *counts.entry(v).or_default() += 1;
        }
        let n = values.len();
        let mut at_least = n;
        let mut points = Vec::with_capacity(counts.len());
        for (x, c) in counts {
            points.push((x, at_least as f64 / n as f64));
            at_least -= c;
        }
        CcdfSeries {
            metric: metric.to_string(),
            points,
        }
    }

    /// Fraction of values strictly below `x`.
    pub fn fraction_below(&self, x: u64) -> f64 {
        self.points
            .iter()
            .find(|(v, _)| *v >= x)
            .map(|(_, p)| 1.0 - p)
            .unwrap_or(1.0)
    }

    pub fn csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["value", "ccdf"]).unwrap();
        for (x, p) in &self.points {
            w.write_record([x.to_string(), p.to_string()]).unwrap();
        }
        w.into_inner().unwrap()
    }
}

pub fn ccdf(metric: AuthorMetric, corpus: &Corpus) -> CcdfSeries {
    CcdfSeries::from_values(metric.as_str(), &author_metric(metric, corpus))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForkStats {
    pub repo_count: usize,
    pub total_forks: usize,
    pub forked_repos: usize,
    pub mean_forks_per_repo: f64,
    pub fraction_forked_at_least_once: f64,
}

pub fn fork_stats(corpus: &Corpus) -> Result<ForkStats, StatsError> {
    let n = corpus.repos().len();
    if n == 0 {
        return Err(StatsError::NoRepositories);
    }
    let mut per_repo = vec![0usize; n];
    for rec in corpus.interactions() {
        if let (InteractionKind::Fork, Target::Repo(id)) = (rec.kind, &rec.target) {
            if let Some(i) = corpus.repo_index(id) {
                per_repo[i] += 1;
            }
        }
    }
    let total: usize = per_repo.iter().sum();
    let forked = per_repo.iter().filter(|&&c| c > 0).count();
    Ok(ForkStats {
        repo_count: n,
        total_forks: total,
        forked_repos: forked,
        mean_forks_per_repo: total as f64 / n as f64,
        fraction_forked_at_least_once: forked as f64 / n as f64,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Cohort {
    pub new_authors: usize,
    pub new_repos: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct YearlyCohorts {
    pub years: BTreeMap<i32, Cohort>,
    /// Authors without any dated repository.
    pub undated_authors: usize,
    pub undated_repos: usize,
}

impl YearlyCohorts {
    pub fn csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["year", "new_authors", "new_repos"]).unwrap();
        for (y, c) in &self.years {
            w.write_record([y.to_string(), c.new_authors.to_string(), c.new_repos.to_string()])
                .unwrap();
        }
        w.write_record([
            "undated".to_string(),
            self.undated_authors.to_string(),
            self.undated_repos.to_string(),
        ])
        .unwrap();
        w.into_inner().unwrap()
    }
}

/// An author joins in the UTC year of their first dated repository.
pub fn yearly_cohorts(corpus: &Corpus) -> YearlyCohorts {
    let mut out = YearlyCohorts::default();
    let mut first = vec![None; corpus.authors().len()];
    for r in corpus.repos() {
        match r.created_at {
            Some(t) => {
                out.years.entry(t.year()).or_default().new_repos += 1;
                if let Some(i) = corpus.author_index(&r.owner_id) {
                    let slot: &mut Option<_> = &mut first[i];
                    if slot.is_none_or(|f| t < f) {
                        *slot = Some(t);
                    }
                }
            }
            None => out.undated_repos += 1,
        }
    }
    for f in first {
        match f {
            Some(t) => out.years.entry(t.year()).or_default().new_authors += 1,
            None => out.undated_authors += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relationship {
    Follow,
    Fork,
    Comment,
    Contribute,
    Watch,
    Star,
}

impl Relationship {
    pub const ALL: [Relationship; 6] = [
        Relationship::Follow,
        Relationship::Fork,
        Relationship::Comment,
        Relationship::Contribute,
        Relationship::Watch,
        Relationship::Star,
    ];

    pub fn kind(self) -> InteractionKind {
        match self {
            Relationship::Follow => InteractionKind::Follow,
            Relationship::Fork => InteractionKind::Fork,
            Relationship::Comment => InteractionKind::Comment,
            Relationship::Contribute => InteractionKind::Contribute,
            Relationship::Watch => InteractionKind::Watch,
            Relationship::Star => InteractionKind::Star,
        }
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReciprocityEntry {
    pub relationship: Relationship,
    /// Unordered author pairs related in at least one direction.
    pub pair_count: usize,
    pub mutual_count: usize,
    /// `None` when no pair exists.
    pub index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReciprocityReport {
    pub entries: Vec<ReciprocityEntry>,
}

impl ReciprocityReport {
    pub fn get(&self, rel: Relationship) -> &ReciprocityEntry {
        self.entries
            .iter()
            .find(|e| e.relationship == rel)
            .expect("all relationships present")
    }

    pub fn csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["relationship", "pair_count", "mutual_count", "ri"]).unwrap();
        for e in &self.entries {
            w.write_record([
                e.relationship.to_string(),
                e.pair_count.to_string(),
                e.mutual_count.to_string(),
                e.index.map_or_else(|| "n/a".to_string(), |v| v.to_string()),
            ])
            .unwrap();
        }
        w.into_inner().unwrap()
    }
}

/// Repository-mediated relations count at author level: `u` forks `v` when
/// `u` forked any repository owned by `v`.
pub fn reciprocity(corpus: &Corpus) -> ReciprocityReport {
    let entries = Relationship::ALL
        .into_iter()
        .map(|rel| {
            let directed: BTreeSet<(usize, usize)> = corpus
                .interactions()
                .iter()
                .filter(|rec| rec.kind == rel.kind())
                .filter_map(|rec| corpus.author_pair(rec))
                .filter(|(u, v)| u != v)
                .collect();
            let mut pairs = BTreeSet::new();
            let mut mutual = 0;
            for &(u, v) in &directed {
                pairs.insert((u.min(v), u.max(v)));
                if u < v && directed.contains(&(v, u)) {
                    mutual += 1;
                }
            }
            ReciprocityEntry {
                relationship: rel,
                pair_count: pairs.len(),
                mutual_count: mutual,
                index: (!pairs.is_empty()).then(|| mutual as f64 / pairs.len() as f64),
            }
        })
        .collect();
    ReciprocityReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_timestamp, AuthorRef, InteractionRecord, RepositoryRecord};

    fn authors(ids: &[&str]) -> Vec<AuthorRef> {
        ids.iter()
            .map(|a| AuthorRef {
                author_id: a.to_string(),
                username: a.to_string(),
            })
            .collect()
    }

    fn repo(id: &str, owner: &str, date: Option<&str>) -> RepositoryRecord {
        RepositoryRecord {
            repo_id: id.into(),
            owner_id: owner.into(),
            created_at: date.map(|d| parse_timestamp(d).unwrap()),
            metadata_text: String::new(),
        }
    }

    fn rec(kind: InteractionKind, actor: &str, target: &str) -> InteractionRecord {
        InteractionRecord {
            kind,
            actor_id: actor.into(),
            target: if kind.targets_repo() {
                Target::Repo(target.into())
            } else {
                Target::Author(target.into())
            },
            timestamp: None,
        }
    }

    #[test]
    fn ccdf_hand_values() {
        let s = CcdfSeries::from_values("m", &[1, 1, 2]);
        assert_eq!(s.points.len(), 2);
        assert_eq!(s.points[0], (1, 1.0));
        assert_eq!(s.points[1].0, 2);
        assert!((s.points[1].1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(CcdfSeries::from_values("m", &[7]).points, vec![(7, 1.0)]);
        assert!((s.fraction_below(2) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fork_stats_arithmetic() {
        let mut recs = Vec::new();
        for i in 0..8 {
            recs.push(rec(InteractionKind::Fork, if i % 2 == 0 { "A" } else { "B" }, "R2"));
        }
        let (c, _) = Corpus::from_records(
            authors(&["A", "B"]),
            vec![repo("R1", "A", None), repo("R2", "B", None)],
            recs,
        );
        let f = fork_stats(&c).unwrap();
        assert_eq!(f.mean_forks_per_repo, 4.0);
        assert_eq!(f.fraction_forked_at_least_once, 0.5);

        let (c, _) = Corpus::from_records(authors(&["A"]), vec![repo("R1", "A", None)], vec![]);
        let f = fork_stats(&c).unwrap();
        assert_eq!((f.mean_forks_per_repo, f.fraction_forked_at_least_once), (0.0, 0.0));

        let (c, _) = Corpus::from_records(authors(&["A"]), vec![], vec![]);
        assert_eq!(fork_stats(&c), Err(StatsError::NoRepositories));
    }

    #[test]
    fn cohorts_first_repo_rule() {
        let (c, _) = Corpus::from_records(
            authors(&["A"]),
            vec![repo("R1", "A", Some("2014-05-01")), repo("R2", "A", Some("2016-01-01"))],
            vec![],
        );
        let y = yearly_cohorts(&c);
        assert_eq!(y.years.len(), 2);
        assert_eq!(y.years[&2014], Cohort { new_authors: 1, new_repos: 1 });
        assert_eq!(y.years[&2016], Cohort { new_authors: 0, new_repos: 1 });

        let (empty, _) = Corpus::from_records(vec![], vec![], vec![]);
        assert!(yearly_cohorts(&empty).years.is_empty());
    }

    #[test]
    fn cohorts_undated() {
        let (c, _) = Corpus::from_records(
            authors(&["A", "B", "C"]),
            vec![repo("R1", "A", None), repo("R2", "B", Some("2012-12-31T23:59:59Z"))],
            vec![],
        );
        let y = yearly_cohorts(&c);
        assert_eq!(y.undated_authors, 2);
        assert_eq!(y.undated_repos, 1);
        assert_eq!(y.years[&2012], Cohort { new_authors: 1, new_repos: 1 });
    }

    #[test]
    fn reciprocity_follow() {
        use InteractionKind::Follow;
        let (c, _) = Corpus::from_records(
            authors(&["A", "B", "C"]),
            vec![],
            vec![rec(Follow, "A", "B"), rec(Follow, "B", "A"), rec(Follow, "C", "A")],
        );
        let r = reciprocity(&c);
        let f = r.get(Relationship::Follow);
        assert_eq!((f.pair_count, f.mutual_count), (2, 1));
        assert_eq!(f.index, Some(0.5));
        assert_eq!(r.get(Relationship::Star).index, None);
        assert!(String::from_utf8(r.csv()).unwrap().contains("star,0,0,n/a"));
    }

    #[test]
    fn reciprocity_repo_mediated() {
        use InteractionKind::*;
        let (c, _) = Corpus::from_records(
            authors(&["A", "B"]),
            vec![repo("RA", "A", None), repo("RB", "B", None)],
            vec![rec(Fork, "A", "RB"), rec(Fork, "B", "RA"), rec(Star, "A", "RA"), rec(Watch, "A", "RB")],
        );
        let r = reciprocity(&c);
        assert_eq!(r.get(Relationship::Fork).index, Some(1.0));
        // self-star excluded
        assert_eq!(r.get(Relationship::Star).index, None);
        assert_eq!(r.get(Relationship::Watch).index, Some(0.0));
    }
}
