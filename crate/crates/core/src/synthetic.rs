//! Seeded generator for synthetic corpora with community structure.
//!
//! Authors are split into themed groups; most interactions stay inside a
//! group and repository metadata mentions the group's malware type and
//! platform. A share of authors also post on forums under their username,
//! sometimes with different letter case.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ingest::{
    parse_timestamp, AuthorRef, Corpus, ForumCorpus, ForumPost, InteractionKind, InteractionRecord,
    KeywordConfig, RepositoryRecord, Target,
};

/// One line of the repositories JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepoRow {
    pub repo_id: String,
    pub owner_id: String,
    pub created_at: String,
    pub title: String,
    pub description: String,
    pub readme: String,
}

impl RepoRow {
    pub fn to_record(&self) -> RepositoryRecord {
        RepositoryRecord {
            repo_id: self.repo_id.clone(),
            owner_id: self.owner_id.clone(),
            created_at: if self.created_at.is_empty() {
                None
            } else {
                Some(parse_timestamp(&self.created_at).expect("generated timestamp"))
            },
            metadata_text: [self.title.as_str(), &self.description, &self.readme].join("\n"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub authors: Vec<AuthorRef>,
    pub repos: Vec<RepoRow>,
    pub interactions: Vec<InteractionRecord>,
    pub posts: Vec<ForumPost>,
}

const FORUMS: [&str; 4] = ["OC", "EH", "HTS", "WS"];
const SYLLABLES: [&str; 12] = ["cy", "ber", "x0r", "n1", "nja", "vil", "p4", "wn", "ghost", "root", "kit", "zer0"];

impl SyntheticData {
    pub fn generate(seed: u64, n_authors: usize) -> SyntheticData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keywords = KeywordConfig::default();
        let groups = (n_authors / 12).clamp(1, 5);

        let mut authors = Vec::with_capacity(n_authors);
        let mut group_of = Vec::with_capacity(n_authors);
        for i in 0..n_authors {
            let name: String = (0..2).map(|_| *SYLLABLES.choose(&mut rng).unwrap()).collect();
            authors.push(AuthorRef {
                author_id: format!("u{i:04}"),
                username: format!("{name}{i}"),
            });
            group_of.push(i % groups);
        }

        let mut repos = Vec::new();
        let mut repo_group = Vec::new();
        let mut repo_owner = Vec::new();
        for (i, a) in authors.iter().enumerate() {
            let count = 1 + usize::from(rng.gen_bool(0.4)) + usize::from(rng.gen_bool(0.15));
            for k in 0..count {
                let g = group_of[i];
                let kind = &keywords.malware_types[(g * 2 + usize::from(rng.gen_bool(0.3))) % keywords.malware_types.len()];
                let platform = &keywords.platforms[(g + usize::from(rng.gen_bool(0.25))) % keywords.platforms.len()];
                let created_at = if rng.gen_bool(0.05) {
                    String::new()
                } else {
                    format!(
                        "{}-{:02}-{:02}T{:02}:00:00Z",
                        rng.gen_range(2010..=2020),
                        rng.gen_range(1..=12),
                        rng.gen_range(1..=28),
                        rng.gen_range(0..24)
                    )
                };
                repos.push(RepoRow {
                    repo_id: format!("r{i:04}_{k}"),
                    owner_id: a.author_id.clone(),
                    created_at,
                    title: format!("{} {kind}", a.username),
                    description: format!("A {kind} for {platform}"),
                    readme: if rng.gen_bool(0.5) {
                        format!("Educational {kind} sample. Targets {platform} hosts.")
                    } else {
                        String::new()
                    },
                });
                repo_group.push(g);
                repo_owner.push(i);
            }
        }

        let mut interactions = Vec::new();
        let repo_kinds = [
            InteractionKind::Star,
            InteractionKind::Watch,
            InteractionKind::Fork,
            InteractionKind::Comment,
            InteractionKind::Contribute,
        ];
        for i in 0..n_authors {
            for (r, repo) in repos.iter().enumerate() {
                if repo_owner[r] == i {
                    continue;
                }
                let p = if repo_group[r] == group_of[i] { 0.35 } else { 0.015 };
                if rng.gen_bool(p) {
                    let kind = *repo_kinds.choose(&mut rng).unwrap();
                    interactions.push(InteractionRecord {
                        kind,
                        actor_id: authors[i].author_id.clone(),
                        target: Target::Repo(repo.repo_id.clone()),
                        timestamp: None,
                    });
                    if kind == InteractionKind::Fork && rng.gen_bool(0.2) {
                        interactions.push(interactions.last().unwrap().clone());
                    }
                }
            }
            for j in 0..n_authors {
                let p = if group_of[i] == group_of[j] { 0.2 } else { 0.02 };
                if i != j && rng.gen_bool(p) {
                    interactions.push(InteractionRecord {
                        kind: InteractionKind::Follow,
                        actor_id: authors[i].author_id.clone(),
                        target: Target::Author(authors[j].author_id.clone()),
                        timestamp: None,
                    });
                }
            }
        }

        let mut posts = Vec::new();
        let mut forum_users: Vec<Vec<String>> = FORUMS
            .iter()
            .enumerate()
            .map(|(f, _)| (0..8).map(|k| format!("lurker{f}{k}")).collect())
            .collect();
        for a in &authors {
            if rng.gen_bool(0.25) {
                let f = rng.gen_range(0..FORUMS.len());
                let name = if rng.gen_bool(0.3) {
                    a.username.to_uppercase()
                } else {
                    a.username.clone()
                };
                forum_users[f].push(name);
            }
        }
        for (f, forum) in FORUMS.iter().enumerate() {
            let users = &forum_users[f];
            for t in 0..6 {
                let n_posts = rng.gen_range(2..8);
                for p in 0..n_posts {
                    posts.push(ForumPost {
                        forum_id: forum.to_string(),
                        thread_id: format!("t{t}"),
                        post_id: format!("p{t}_{p}"),
                        username: users.choose(&mut rng).unwrap().clone(),
                        content: format!("post {p} in thread {t}"),
                    });
                }
            }
        }

        SyntheticData {
            authors,
            repos,
            interactions,
            posts,
        }
    }

    pub fn corpus(&self) -> Corpus {
        let (c, rejects) = Corpus::from_records(
            self.authors.clone(),
            self.repos.iter().map(RepoRow::to_record).collect(),
            self.interactions.clone(),
        );
        debug_assert!(rejects.is_empty(), "{rejects:?}");
        c
    }

    pub fn forums(&self) -> ForumCorpus {
        ForumCorpus::from_posts(self.posts.clone()).0
    }

    /// Writes `authors.csv`, `repos.jsonl`, `interactions.csv`, `forums.csv`
    /// and `keywords.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("authors.csv"))?;
        w.write_record(["author_id", "username"])?;
        for a in &self.authors {
            w.write_record([&a.author_id, &a.username])?;
        }
        w.flush()?;

        let mut lines = String::new();
        for r in &self.repos {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        fs::write(dir.join("repos.jsonl"), lines)?;

        let mut w = csv::Writer::from_path(dir.join("interactions.csv"))?;
        w.write_record(["kind", "actor_id", "target_id", "timestamp"])?;
        for rec in &self.interactions {
            let ts = rec.timestamp.map(|t| t.to_rfc3339()).unwrap_or_default();
            w.write_record([rec.kind.as_str(), &rec.actor_id, rec.target.id(), &ts])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("forums.csv"))?;
        w.write_record(["forum_id", "thread_id", "post_id", "username", "content"])?;
        for p in &self.posts {
            w.write_record([&p.forum_id, &p.thread_id, &p.post_id, &p.username, &p.content])?;
        }
        w.flush()?;

        fs::write(
            dir.join("keywords.json"),
            serde_json::to_string_pretty(&KeywordConfig::default())? + "\n",
        )?;
        Ok(())
    }
}
