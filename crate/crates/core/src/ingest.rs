//! Loading and validation of the three input datasets.
//!
//! Every loader is tolerant of dirty rows: a row that fails validation is
//! recorded in a [`Reject`] with its 1-based data row number (the header is
//! not counted) and the load continues. The only fatal conditions are an
//! unreadable file, a wrong header, and an empty author set.
//!
//! The in-memory model is canonical: records are sorted by id, and when an
//! id is duplicated the smallest record wins, so permuting input rows never
//! changes the resulting [`Corpus`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: bad header, expected `{expected}`, found `{found}`")]
    BadHeader {
        file: String,
        expected: String,
        found: String,
    },
    #[error("{file}: {message}")]
    Csv { file: String, message: String },
    #[error("empty author set")]
    EmptyAuthorSet,
    #[error("invalid keyword config: {0}")]
    Keywords(String),
}

/// Relationship kinds carried by an interaction record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Create,
    Star,
    Watch,
    Fork,
    Comment,
    Contribute,
    Follow,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 7] = [
        InteractionKind::Create,
        InteractionKind::Star,
        InteractionKind::Watch,
        InteractionKind::Fork,
        InteractionKind::Comment,
        InteractionKind::Contribute,
        InteractionKind::Follow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Create => "create",
            InteractionKind::Star => "star",
            InteractionKind::Watch => "watch",
            InteractionKind::Fork => "fork",
            InteractionKind::Comment => "comment",
            InteractionKind::Contribute => "contribute",
            InteractionKind::Follow => "follow",
        }
    }

    /// Whether the target of this kind is a repository (every kind but follow).
    pub fn targets_repo(self) -> bool {
        self != InteractionKind::Follow
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InteractionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        InteractionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| format!("unknown interaction kind `{}`", s.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuthorRef {
    pub author_id: String,
    pub username: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepositoryRecord {
    pub repo_id: String,
    pub owner_id: String,
    /// `None` when the source row carried an empty timestamp.
    pub created_at: Option<DateTime<Utc>>,
    /// Title, description and readme joined by newlines.
    pub metadata_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "lowercase")]
pub enum Target {
    Repo(String),
    Author(String),
}

impl Target {
    pub fn id(&self) -> &str {
        match self {
            Target::Repo(id) | Target::Author(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub kind: InteractionKind,
    pub actor_id: String,
    pub target: Target,
    pub timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForumPost {
    pub forum_id: String,
    pub thread_id: String,
    pub post_id: String,
    pub username: String,
    pub content: String,
}

/// One rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reject {
    pub file: String,
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileReport {
    pub file: String,
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub files: Vec<FileReport>,
    pub rejects: Vec<Reject>,
}

impl LoadReport {
    fn push(&mut self, file: &str, total: usize, mut rejects: Vec<Reject>) {
        rejects.sort();
        self.files.push(FileReport {
            file: file.to_string(),
            total,
            accepted: total - rejects.len(),
            rejected: rejects.len(),
        });
        self.rejects.extend(rejects);
    }

    /// Rejects report as CSV `file,row,reason`.
    pub fn rejects_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["file", "row", "reason"]).unwrap();
        for r in &self.rejects {
            w.write_record([r.file.as_str(), &r.row.to_string(), r.reason.as_str()])
                .unwrap();
        }
        w.into_inner().unwrap()
    }
}

/// Validated author/repository/interaction data.
///
/// Construct through [`Corpus::from_records`] or [`load_dataset`]; both
/// produce the same canonical ordering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    authors: Vec<AuthorRef>,
    repos: Vec<RepositoryRecord>,
    interactions: Vec<InteractionRecord>,
    #[serde(skip)]
    author_index: BTreeMap<String, usize>,
    #[serde(skip)]
    repo_index: BTreeMap<String, usize>,
}

impl Corpus {
    /// Validates and canonicalizes raw records, returning the corpus and the
    /// rejected records as `(source, position, reason)` where `source` is one
    /// of `authors`, `repos`, `interactions` and `position` is the 1-based
    /// position in the given vector.
    ///
    /// An empty author set is allowed here; [`load_dataset`] rejects it.
    pub fn from_records(
        authors: Vec<AuthorRef>,
        repos: Vec<RepositoryRecord>,
        interactions: Vec<InteractionRecord>,
    ) -> (Corpus, Vec<Reject>) {
        let mut rejects = Vec::new();

        let mut authors_ok = Vec::new();
        for (i, a) in authors.into_iter().enumerate() {
            match validate_author(&a) {
                Ok(()) => authors_ok.push((i + 1, a)),
                Err(reason) => rejects.push(reject("authors", i + 1, reason)),
            }
        }
        let authors = dedup_by_key(authors_ok, |a| a.author_id.clone(), "authors", "author_id", &mut rejects);
        let author_index: BTreeMap<String, usize> = authors
            .iter()
            .enumerate()
            .map(|(i, a)| (a.author_id.clone(), i))
            .collect();

        let mut repos_ok = Vec::new();
        for (i, r) in repos.into_iter().enumerate() {
            if r.repo_id.trim().is_empty() {
                rejects.push(reject("repos", i + 1, "empty repo_id".into()));
            } else if !author_index.contains_key(&r.owner_id) {
                rejects.push(reject("repos", i + 1, format!("unknown owner `{}`", r.owner_id)));
            } else {
                repos_ok.push((i + 1, r));
            }
        }
        let repos = dedup_by_key(repos_ok, |r| r.repo_id.clone(), "repos", "repo_id", &mut rejects);
        let repo_index: BTreeMap<String, usize> = repos
            .iter()
            .enumerate()
            .map(|(i, r)| (r.repo_id.clone(), i))
            .collect();

        let mut kept = Vec::new();
        for (i, rec) in interactions.into_iter().enumerate() {
            match validate_interaction(&rec, &author_index, &repo_index) {
                Ok(()) => kept.push(rec),
                Err(reason) => rejects.push(reject("interactions", i + 1, reason)),
            }
        }
        kept.sort();
        rejects.sort();

        (
            Corpus {
                authors,
                repos,
                interactions: kept,
                author_index,
                repo_index,
            },
            rejects,
        )
    }

    pub fn authors(&self) -> &[AuthorRef] {
        &self.authors
    }

    pub fn repos(&self) -> &[RepositoryRecord] {
        &self.repos
    }

    pub fn interactions(&self) -> &[InteractionRecord] {
        &self.interactions
    }

    pub fn author_index(&self, author_id: &str) -> Option<usize> {
        self.author_index.get(author_id).copied()
    }

    pub fn repo_index(&self, repo_id: &str) -> Option<usize> {
        self.repo_index.get(repo_id).copied()
    }

    pub fn author(&self, author_id: &str) -> Option<&AuthorRef> {
        self.author_index(author_id).map(|i| &self.authors[i])
    }

    pub fn repo(&self, repo_id: &str) -> Option<&RepositoryRecord> {
        self.repo_index(repo_id).map(|i| &self.repos[i])
    }

    /// Index of the owner of `repo_id`.
    pub fn owner_index(&self, repo_id: &str) -> Option<usize> {
        self.repo(repo_id).and_then(|r| self.author_index(&r.owner_id))
    }

    /// Resolves an interaction to the (actor, target author) pair it induces
    /// at the author level: the followed author for follows, the repository
    /// owner otherwise.
    pub fn author_pair(&self, rec: &InteractionRecord) -> Option<(usize, usize)> {
        let actor = self.author_index(&rec.actor_id)?;
        let target = match &rec.target {
            Target::Author(id) => self.author_index(id)?,
            Target::Repo(id) => self.owner_index(id)?,
        };
        Some((actor, target))
    }
}

fn reject(file: &str, row: usize, reason: String) -> Reject {
    Reject {
        file: file.to_string(),
        row,
        reason,
    }
}

fn validate_author(a: &AuthorRef) -> Result<(), String> {
    if a.author_id.trim().is_empty() {
        return Err("empty author_id".into());
    }
    if a.username.trim().is_empty() {
        return Err("empty username".into());
    }
    Ok(())
}

fn validate_interaction(
    rec: &InteractionRecord,
    authors: &BTreeMap<String, usize>,
    repos: &BTreeMap<String, usize>,
) -> Result<(), String> {
    if !authors.contains_key(&rec.actor_id) {
        return Err(format!("unknown actor `{}`", rec.actor_id));
    }
    match (&rec.target, rec.kind.targets_repo()) {
        (Target::Author(id), false) => {
            if !authors.contains_key(id) {
                Err(format!("unknown target author `{id}`"))
            } else if *id == rec.actor_id {
                Err("self-follow".into())
            } else {
                Ok(())
            }
        }
        (Target::Repo(id), true) => {
            if repos.contains_key(id) {
                Ok(())
            } else {
                Err(format!("unknown target repo `{id}`"))
            }
        }
        _ => Err(format!("target type does not match kind `{}`", rec.kind)),
    }
}

/// Keeps one record per key (the smallest), rejecting the others.
fn dedup_by_key<T: Ord, K: Ord>(
    rows: Vec<(usize, T)>,
    key: impl Fn(&T) -> K,
    file: &str,
    what: &str,
    rejects: &mut Vec<Reject>,
) -> Vec<T> {
    let mut groups: BTreeMap<K, Vec<(usize, T)>> = BTreeMap::new();
    for (row, rec) in rows {
        groups.entry(key(&rec)).or_default().push((row, rec));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (_, mut group) in groups {
        group.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut it = group.into_iter();
        let (_, winner) = it.next().expect("non-empty group");
        for (row, _) in it {
            rejects.push(reject(file, row, format!("duplicate {what}")));
        }
        out.push(winner);
    }
    out
}

/// Parses an ISO-8601 timestamp: RFC 3339, a naive date-time (taken as UTC),
/// or a bare date (midnight UTC).
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(format!("invalid timestamp `{s}`"))
}

fn parse_optional_timestamp(s: &str) -> Result<Option<DateTime<Utc>>, String> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_timestamp(s).map(Some)
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parsed rows tagged with their 1-based row number, the rejects, and the row total.
type Parsed<T> = (Vec<(usize, T)>, Vec<Reject>, usize);

/// Reads a CSV file with a fixed header. Returns the rows (row number, fields)
/// and the rows that could not be split into the expected number of fields.
fn read_csv_rows<R: Read>(
    reader: R,
    file: &str,
    expected: &[&str],
) -> Result<Parsed<Vec<String>>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok((Vec::new(), Vec::new(), 0)),
        Some(h) => h.map_err(|e| IngestError::Csv {
            file: file.into(),
            message: e.to_string(),
        })?,
    };
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(IngestError::BadHeader {
            file: file.into(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0;
    for rec in records {
        total += 1;
        match rec {
            Ok(r) if r.len() == expected.len() => {
                rows.push((total, r.iter().map(|f| f.trim().to_string()).collect()))
            }
            Ok(r) => rejects.push(reject(
                file,
                total,
                format!("expected {} fields, found {}", expected.len(), r.len()),
            )),
            Err(e) => rejects.push(reject(file, total, format!("malformed row: {e}"))),
        }
    }
    Ok((rows, rejects, total))
}

const AUTHORS_HEADER: [&str; 2] = ["author_id", "username"];
const INTERACTIONS_HEADER: [&str; 4] = ["kind", "actor_id", "target_id", "timestamp"];
const FORUMS_HEADER: [&str; 5] = ["forum_id", "thread_id", "post_id", "username", "content"];

#[derive(Deserialize)]
struct RepoLine {
    repo_id: String,
    owner_id: String,
    created_at: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    readme: String,
}

/// A loaded corpus together with its per-file accept/reject accounting.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub corpus: Corpus,
    pub report: LoadReport,
}

/// Loads the authors CSV, repositories JSON-lines and interactions CSV.
pub fn load_dataset(
    authors_path: &Path,
    repos_path: &Path,
    interactions_path: &Path,
) -> Result<LoadedDataset, IngestError> {
    let (author_rows, mut author_rejects, author_total) =
        read_csv_rows(open(authors_path)?, "authors", &AUTHORS_HEADER)?;
    let mut author_rows_by_pos = Vec::new();
    let mut authors = Vec::new();
    for (row, f) in author_rows {
        author_rows_by_pos.push(row);
        authors.push(AuthorRef {
            author_id: f[0].clone(),
            username: f[1].clone(),
        });
    }

    let (repo_rows, mut repo_rejects, repo_total) = read_repo_lines(open(repos_path)?)?;
    let mut repo_rows_by_pos = Vec::new();
    let mut repos = Vec::new();
    for (row, r) in repo_rows {
        repo_rows_by_pos.push(row);
        repos.push(r);
    }

    let (inter_rows, mut inter_rejects, inter_total) =
        read_csv_rows(open(interactions_path)?, "interactions", &INTERACTIONS_HEADER)?;
    let mut inter_rows_by_pos = Vec::new();
    let mut interactions = Vec::new();
    for (row, f) in inter_rows {
        match parse_interaction(&f) {
            Ok(rec) => {
                inter_rows_by_pos.push(row);
                interactions.push(rec);
            }
            Err(reason) => inter_rejects.push(reject("interactions", row, reason)),
        }
    }

    let (corpus, rejects) = Corpus::from_records(authors, repos, interactions);
    if corpus.authors.is_empty() {
        return Err(IngestError::EmptyAuthorSet);
    }
    // Map vector positions back to file rows.
    for r in rejects {
        let (rows, sink) = match r.file.as_str() {
            "authors" => (&author_rows_by_pos, &mut author_rejects),
            "repos" => (&repo_rows_by_pos, &mut repo_rejects),
            _ => (&inter_rows_by_pos, &mut inter_rejects),
        };
        sink.push(Reject {
            row: rows[r.row - 1],
            ..r
        });
    }

    let mut report = LoadReport::default();
    report.push("authors", author_total, author_rejects);
    report.push("repos", repo_total, repo_rejects);
    report.push("interactions", inter_total, inter_rejects);
    Ok(LoadedDataset { corpus, report })
}

fn read_repo_lines<R: Read>(
    reader: R,
) -> Result<Parsed<RepositoryRecord>, IngestError> {
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0;
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|source| IngestError::Io {
            path: "repos".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed: RepoLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                rejects.push(reject("repos", total, format!("malformed row: {e}")));
                continue;
            }
        };
        let created_at = match parse_optional_timestamp(&parsed.created_at) {
            Ok(t) => t,
            Err(reason) => {
                rejects.push(reject("repos", total, reason));
                continue;
            }
        };
        let metadata_text = [parsed.title, parsed.description, parsed.readme].join("\n");
        rows.push((
            total,
            RepositoryRecord {
                repo_id: parsed.repo_id.trim().to_string(),
                owner_id: parsed.owner_id.trim().to_string(),
                created_at,
                metadata_text,
            },
        ));
    }
    Ok((rows, rejects, total))
}

fn parse_interaction(f: &[String]) -> Result<InteractionRecord, String> {
    let kind: InteractionKind = f[0].parse()?;
    if f[1].is_empty() {
        return Err("empty actor_id".into());
    }
    if f[2].is_empty() {
        return Err("empty target_id".into());
    }
    let target = if kind.targets_repo() {
        Target::Repo(f[2].clone())
    } else {
        Target::Author(f[2].clone())
    };
    Ok(InteractionRecord {
        kind,
        actor_id: f[1].clone(),
        target,
        timestamp: parse_optional_timestamp(&f[3])?,
    })
}

/// Forum posts grouped by thread.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ForumCorpus {
    posts: Vec<ForumPost>,
    #[serde(skip)]
    threads: BTreeMap<(String, String), Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForumCounts {
    pub users: usize,
    pub threads: usize,
    pub posts: usize,
}

impl ForumCorpus {
    /// Canonicalizes posts; duplicate `(forum, thread, post)` triples keep the
    /// smallest record and reject the rest.
    pub fn from_posts(posts: Vec<ForumPost>) -> (ForumCorpus, Vec<Reject>) {
        let mut rejects = Vec::new();
        let mut ok = Vec::new();
        for (i, p) in posts.into_iter().enumerate() {
            if p.forum_id.is_empty() || p.thread_id.is_empty() || p.post_id.is_empty() {
                rejects.push(reject("forums", i + 1, "empty forum, thread or post id".into()));
            } else if p.username.trim().is_empty() {
                rejects.push(reject("forums", i + 1, "empty username".into()));
            } else {
                ok.push((i + 1, p));
            }
        }
        let posts = dedup_by_key(
            ok,
            |p| (p.forum_id.clone(), p.thread_id.clone(), p.post_id.clone()),
            "forums",
            "(forum_id, thread_id, post_id)",
            &mut rejects,
        );
        let mut threads: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (i, p) in posts.iter().enumerate() {
            threads
                .entry((p.forum_id.clone(), p.thread_id.clone()))
                .or_default()
                .push(i);
        }
        rejects.sort();
        (ForumCorpus { posts, threads }, rejects)
    }

    pub fn posts(&self) -> &[ForumPost] {
        &self.posts
    }

    /// Threads keyed by `(forum_id, thread_id)`, each listing post indices.
    pub fn threads(&self) -> impl Iterator<Item = (&(String, String), Vec<&ForumPost>)> {
        self.threads
            .iter()
            .map(|(k, idx)| (k, idx.iter().map(|&i| &self.posts[i]).collect()))
    }

    pub fn forum_ids(&self) -> BTreeSet<&str> {
        self.posts.iter().map(|p| p.forum_id.as_str()).collect()
    }

    pub fn counts_for(&self, forum_id: &str) -> ForumCounts {
        let posts: Vec<&ForumPost> = self.posts.iter().filter(|p| p.forum_id == forum_id).collect();
        ForumCounts {
            users: posts.iter().map(|p| normalize_username(&p.username)).collect::<BTreeSet<_>>().len(),
            threads: posts.iter().map(|p| p.thread_id.as_str()).collect::<BTreeSet<_>>().len(),
            posts: posts.len(),
        }
    }

    /// Totals across forums; a user is one `(forum, normalized username)` pair.
    pub fn counts(&self) -> ForumCounts {
        ForumCounts {
            users: self
                .posts
                .iter()
                .map(|p| (p.forum_id.as_str(), normalize_username(&p.username)))
                .collect::<BTreeSet<_>>()
                .len(),
            threads: self.threads.len(),
            posts: self.posts.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedForums {
    pub forums: ForumCorpus,
    pub report: LoadReport,
}

pub fn load_forums(forums_path: &Path) -> Result<LoadedForums, IngestError> {
    let (rows, mut rejects, total) = read_csv_rows(open(forums_path)?, "forums", &FORUMS_HEADER)?;
    let mut by_pos = Vec::new();
    let mut posts = Vec::new();
    for (row, f) in rows {
        by_pos.push(row);
        let mut f = f.into_iter();
        let mut next = || f.next().unwrap_or_default();
        posts.push(ForumPost {
            forum_id: next(),
            thread_id: next(),
            post_id: next(),
            username: next(),
            content: next(),
        });
    }
    let (forums, r) = ForumCorpus::from_posts(posts);
    rejects.extend(r.into_iter().map(|r| Reject {
        row: by_pos[r.row - 1],
        ..r
    }));
    let mut report = LoadReport::default();
    report.push("forums", total, rejects);
    Ok(LoadedForums { forums, report })
}

/// Malware-type (first set) and target-platform (second set) keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordConfig {
    pub malware_types: Vec<String>,
    pub platforms: Vec<String>,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        KeywordConfig {
            malware_types: own(&[
                "keylogger",
                "virus",
                "ransomware",
                "spyware",
                "trojan",
                "botnet",
                "backdoor",
            ]),
            platforms: own(&["linux", "windows", "mac", "android"]),
        }
    }
}

impl KeywordConfig {
    pub fn new(malware_types: Vec<String>, platforms: Vec<String>) -> Result<Self, IngestError> {
        let cfg = KeywordConfig {
            malware_types,
            platforms,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::Keywords(m));
        if self.malware_types.is_empty() {
            return bad("malware_types is empty".into());
        }
        if self.platforms.is_empty() {
            return bad("platforms is empty".into());
        }
        let mut seen = BTreeSet::new();
        for k in self.malware_types.iter().chain(&self.platforms) {
            if k.trim().is_empty() {
                return bad("whitespace-only keyword".into());
            }
            if *k != k.to_lowercase() {
                return bad(format!("keyword `{k}` is not lowercase"));
            }
            if tokenize(k).is_empty() {
                return bad(format!("keyword `{k}` has no alphanumeric token"));
            }
            if !seen.insert(k.as_str()) {
                return bad(format!("keyword `{k}` listed twice"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let cfg: KeywordConfig =
            serde_json::from_str(text).map_err(|e| IngestError::Keywords(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let mut text = String::new();
        open(path)?
            .read_to_string(&mut text)
            .map_err(|source| IngestError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_json(&text)
    }
}

/// Keywords of each set found in one repository's metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoKeywordSet {
    pub malware_types: BTreeSet<String>,
    pub platforms: BTreeSet<String>,
}

impl RepoKeywordSet {
    pub fn is_empty(&self) -> bool {
        self.malware_types.is_empty() && self.platforms.is_empty()
    }

    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.malware_types.iter().chain(&self.platforms)
    }
}

/// Username form used for counting and cross-platform matching.
pub fn normalize_username(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn contains_sequence(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Keywords from `config` whose token sequence occurs in the repository metadata.
pub fn extract_keyword_set(repo: &RepositoryRecord, config: &KeywordConfig) -> RepoKeywordSet {
    let tokens = tokenize(&repo.metadata_text);
    let pick = |set: &[String]| {
        set.iter()
            .filter(|k| contains_sequence(&tokens, &tokenize(k)))
            .cloned()
            .collect()
    };
    RepoKeywordSet {
        malware_types: pick(&config.malware_types),
        platforms: pick(&config.platforms),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn author(id: &str) -> AuthorRef {
        AuthorRef {
            author_id: id.into(),
            username: id.into(),
        }
    }

    fn repo(id: &str, owner: &str, text: &str) -> RepositoryRecord {
        RepositoryRecord {
            repo_id: id.into(),
            owner_id: owner.into(),
            created_at: None,
            metadata_text: text.into(),
        }
    }

    fn follow(a: &str, b: &str) -> InteractionRecord {
        InteractionRecord {
            kind: InteractionKind::Follow,
            actor_id: a.into(),
            target: Target::Author(b.into()),
            timestamp: None,
        }
    }

    #[test]
    fn minimal_corpus() {
        let (c, rejects) = Corpus::from_records(vec![author("A")], vec![repo("R", "A", "")], vec![]);
        assert!(rejects.is_empty());
        assert_eq!((c.authors().len(), c.repos().len(), c.interactions().len()), (1, 1, 0));
    }

    #[test]
    fn self_follow_rejected() {
        let (c, rejects) = Corpus::from_records(vec![author("A")], vec![], vec![follow("A", "A")]);
        assert_eq!(c.interactions().len(), 0);
        assert_eq!(rejects.len(), 1);
        assert_eq!(rejects[0].reason, "self-follow");
    }

    #[test]
    fn unresolved_references_rejected() {
        let recs = vec![
            follow("A", "Z"),
            InteractionRecord {
                kind: InteractionKind::Star,
                actor_id: "A".into(),
                target: Target::Repo("nope".into()),
                timestamp: None,
            },
            follow("Q", "A"),
        ];
        let (c, rejects) =
            Corpus::from_records(vec![author("A")], vec![repo("R", "Z", "")], recs);
        assert_eq!(c.repos().len(), 0);
        assert_eq!(c.interactions().len(), 0);
        assert_eq!(rejects.len(), 4);
    }

    #[test]
    fn duplicate_author_keeps_smallest() {
        let a1 = AuthorRef {
            author_id: "A".into(),
            username: "zed".into(),
        };
        let a2 = AuthorRef {
            author_id: "A".into(),
            username: "amy".into(),
        };
        let (c1, r1) = Corpus::from_records(vec![a1.clone(), a2.clone()], vec![], vec![]);
        let (c2, _) = Corpus::from_records(vec![a2, a1], vec![], vec![]);
        assert_eq!(c1, c2);
        assert_eq!(c1.authors()[0].username, "amy");
        assert_eq!(r1[0].reason, "duplicate author_id");
    }

    #[test]
    fn timestamps() {
        assert!(parse_timestamp("2016-02-16T10:00:00Z").is_ok());
        assert!(parse_timestamp("2016-02-16T10:00:00+02:00").is_ok());
        assert!(parse_timestamp("2016-02-16T10:00:00").is_ok());
        assert_eq!(
            parse_timestamp("2016-02-16").unwrap(),
            parse_timestamp("2016-02-16T00:00:00Z").unwrap()
        );
        assert!(parse_timestamp("2016-13-01").is_err());
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn keyword_extraction() {
        let cfg = KeywordConfig::default();
        let k = extract_keyword_set(&repo("r", "a", "A python keylogger for linux"), &cfg);
        assert_eq!(k.malware_types, BTreeSet::from(["keylogger".to_string()]));
        assert_eq!(k.platforms, BTreeSet::from(["linux".to_string()]));

        let k = extract_keyword_set(&repo("r", "a", "ransomware builder for windows"), &cfg);
        assert_eq!(k.all().cloned().collect::<Vec<_>>(), vec!["ransomware", "windows"]);

        assert!(extract_keyword_set(&repo("r", "a", ""), &cfg).is_empty());
    }

    #[test]
    fn keyword_matching_is_token_bounded() {
        let cfg = KeywordConfig::new(vec!["rat".into(), "remote access".into()], vec!["mac".into()]).unwrap();
        let k = extract_keyword_set(&repo("r", "a", "Generate macOS payloads"), &cfg);
        assert!(k.is_empty());
        let k = extract_keyword_set(&repo("r", "a", "A RAT: Remote-Access tool for Mac"), &cfg);
        assert_eq!(k.malware_types.len(), 2);
        assert_eq!(k.platforms.len(), 1);
        let k = extract_keyword_set(&repo("r", "a", "access remote"), &cfg);
        assert!(k.is_empty());
    }

    #[test]
    fn keyword_config_validation() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(KeywordConfig::new(s(&[]), s(&["linux"])).is_err());
        assert!(KeywordConfig::new(s(&["virus"]), s(&[])).is_err());
        assert!(KeywordConfig::new(s(&["Virus"]), s(&["linux"])).is_err());
        assert!(KeywordConfig::new(s(&["  "]), s(&["linux"])).is_err());
        assert!(KeywordConfig::new(s(&["linux"]), s(&["linux"])).is_err());
        assert!(KeywordConfig::default().validate().is_ok());
        assert!(KeywordConfig::from_json(r#"{"malware_types":["worm"],"platforms":["ios"]}"#).is_ok());
    }

    #[test]
    fn forum_counts() {
        let post = |f: &str, t: &str, p: &str, u: &str| ForumPost {
            forum_id: f.into(),
            thread_id: t.into(),
            post_id: p.into(),
            username: u.into(),
            content: String::new(),
        };
        let (fc, rejects) = ForumCorpus::from_posts(vec![
            post("HTS", "t1", "1", "x"),
            post("HTS", "t1", "2", "y"),
            post("HTS", "t1", "3", "x"),
            post("HTS", "t2", "4", "z"),
            post("HTS", "t2", "5", "y"),
            post("HTS", "t2", "5", "z"),
        ]);
        assert_eq!(rejects.len(), 1);
        assert_eq!(
            fc.counts(),
            ForumCounts {
                users: 3,
                threads: 2,
                posts: 5
            }
        );
        assert_eq!(fc.counts_for("HTS"), fc.counts());
        assert_eq!(ForumCorpus::default().counts(), ForumCounts::default());
    }
}
