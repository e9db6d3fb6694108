//! End-to-end runs, report bundles and the text summary.
//!
//! Stages run in the order ingest, graphs, influence, communities, stats,
//! egonet. Ingest and graphs always run; the others run when selected. Each
//! report is written as `<name>.partial` and renamed once every selected
//! stage has succeeded, so a failed run leaves only `.partial` files behind.
//! `manifest.json` is written last.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::community::{detect_communities, profile_communities, wordcloud_weights, CommunityProfile};
use crate::crossplatform::{cross_egonet, match_usernames, scatter_csv, scatter_series};
use crate::graph::{
    apply_weights, build_aa_graph, build_ar_graph, calibrate_weights, AuthorAuthorGraph, AuthorRepoGraph,
    DegreeBasis, EdgeLabel, EdgeWeightCalibration, GraphError, WeightMode,
};
use crate::influence::{
    author_profile, classify_regions, detect_knee, hacker_score, positive_curve, top_by_region, HackerScoreTable,
    HitsParams, Knee, ProfileRow, RegionClassification,
};
use crate::ingest::{load_dataset, load_forums, Corpus, ForumCorpus, IngestError, KeywordConfig, LoadReport};
use crate::stats::{ccdf, fork_stats, reciprocity, yearly_cohorts, AuthorMetric};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Graphs,
    Influence,
    Communities,
    Stats,
    Egonet,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Graphs,
        Stage::Influence,
        Stage::Communities,
        Stage::Stats,
        Stage::Egonet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Graphs => "graphs",
            Stage::Influence => "influence",
            Stage::Communities => "communities",
            Stage::Stats => "stats",
            Stage::Egonet => "egonet",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(#[from] IngestError),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("summary: {0}")]
    Summary(#[from] SummaryError),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Input(_) | PipelineError::Summary(_) => 3,
            PipelineError::Stage { .. } => 4,
        }
    }

    fn stage(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: message.to_string(),
        }
    }
}

/// Run parameters, loadable from JSON. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub authors: Option<PathBuf>,
    pub repos: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub forums: Option<PathBuf>,
    /// Keyword sets; the built-in defaults apply when absent.
    pub keywords: Option<PathBuf>,
    pub weight_mode: WeightMode,
    pub degree_basis: DegreeBasis,
    /// Explicit per-label weights, bypassing calibration.
    pub weights: Option<BTreeMap<EdgeLabel, f64>>,
    pub tolerance: f64,
    pub max_iter: usize,
    pub phs_knee: Option<f64>,
    pub chs_knee: Option<f64>,
    pub min_leader_size: usize,
    /// Egonet for one user; all matched users when absent.
    pub egonet_username: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hits = HitsParams::default();
        RunConfig {
            authors: None,
            repos: None,
            interactions: None,
            forums: None,
            keywords: None,
            weight_mode: WeightMode::default(),
            degree_basis: DegreeBasis::default(),
            weights: None,
            tolerance: hits.tolerance,
            max_iter: hits.max_iter,
            phs_knee: None,
            chs_knee: None,
            min_leader_size: crate::community::DEFAULT_LEADER_MIN_SIZE,
            egonet_username: None,
            output_dir: None,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self, stages: &[Stage]) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (name, p) in [
            ("authors", &self.authors),
            ("repos", &self.repos),
            ("interactions", &self.interactions),
            ("output_dir", &self.output_dir),
        ] {
            if p.is_none() {
                return bad(format!("missing required path `{name}`"));
            }
        }
        if stages.contains(&Stage::Egonet) && self.forums.is_none() {
            return bad("the egonet stage needs a forums file".into());
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return bad(format!("tolerance must be > 0, got {}", self.tolerance));
        }
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1".into());
        }
        if self.min_leader_size < 1 {
            return bad("min_leader_size must be >= 1".into());
        }
        for (name, k) in [("phs_knee", self.phs_knee), ("chs_knee", self.chs_knee)] {
            if let Some(k) = k {
                if !(k.is_finite() && k > 0.0) {
                    return bad(format!("{name} must be > 0, got {k}"));
                }
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        if let Some(w) = &self.weights {
            EdgeWeightCalibration::from_weights(w.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.egonet_username.as_deref().is_some_and(|u| u.trim().is_empty()) {
            return bad("egonet username is empty".into());
        }
        Ok(())
    }

    fn hits(&self) -> HitsParams {
        HitsParams {
            tolerance: self.tolerance,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub elapsed_ms: f64,
    pub counts: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub generated_at: String,
    /// Config as run; the output directory is omitted.
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub stages: Vec<StageRecord>,
    pub decisions: BTreeMap<String, Value>,
    pub files: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Bundle {
    dir: PathBuf,
    files: BTreeMap<String, FileDigest>,
}

impl Bundle {
    fn put(&mut self, stage: Stage, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(format!("{name}{PARTIAL_SUFFIX}"));
        fs::write(&path, bytes).map_err(|e| PipelineError::stage(stage, format!("writing {name}: {e}")))?;
        self.files.insert(
            name.to_string(),
            FileDigest {
                name: name.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    fn put_json(&mut self, stage: Stage, name: &str, value: &impl Serialize) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::stage(stage, e))?;
        bytes.push(b'\n');
        self.put(stage, name, &bytes)
    }

    fn commit(&self) -> Result<(), PipelineError> {
        for name in self.files.keys() {
            let from = self.dir.join(format!("{name}{PARTIAL_SUFFIX}"));
            fs::rename(&from, self.dir.join(name))
                .map_err(|e| PipelineError::Config(format!("renaming {}: {e}", from.display())))?;
        }
        Ok(())
    }
}

/// Clears reports left by an earlier run. Anything not listed in a previous
/// manifest, other than `.partial` leftovers, is an error.
fn prepare_output_dir(dir: &Path) -> Result<(), PipelineError> {
    let cfg = |e: std::io::Error| PipelineError::Config(format!("output directory {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(cfg)?;
    let mut owned: Vec<String> = Vec::new();
    if let Ok(text) = fs::read_to_string(dir.join(MANIFEST_FILE)) {
        if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
            owned = m.files.into_iter().map(|f| f.name).collect();
            owned.push(MANIFEST_FILE.to_string());
        }
    }
    let mut stray = Vec::new();
    let mut doomed = Vec::new();
    for entry in fs::read_dir(dir).map_err(cfg)? {
        let entry = entry.map_err(cfg)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(PARTIAL_SUFFIX) || owned.contains(&name) {
            doomed.push(entry.path());
        } else {
            stray.push(name);
        }
    }
    if !stray.is_empty() {
        stray.sort();
        return Err(PipelineError::Config(format!(
            "output directory {} holds files from elsewhere: {}",
            dir.display(),
            stray.join(", ")
        )));
    }
    for p in doomed {
        fs::remove_file(&p).map_err(cfg)?;
    }
    Ok(())
}

fn digest_input(role: &str, path: &Path) -> Result<InputDigest, PipelineError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(InputDigest {
        role: role.to_string(),
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Filesystem-safe form of a username for `egonet_<name>.json`.
pub fn file_safe_name(username: &str) -> String {
    username
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn fmt_f64(x: f64) -> String {
    x.to_string()
}

struct KneeChoice {
    value: f64,
    detected: Option<Knee>,
}

fn choose_knee(name: &str, scores: &[f64], forced: Option<f64>, stage: Stage) -> Result<KneeChoice, PipelineError> {
    match forced {
        Some(value) => Ok(KneeChoice { value, detected: None }),
        None => {
            let k = detect_knee(&positive_curve(scores))
                .map_err(|e| PipelineError::stage(stage, format!("{name} knee: {e}; pass an explicit knee")))?;
            Ok(KneeChoice {
                value: k.value,
                detected: Some(k),
            })
        }
    }
}

fn knee_json(k: &KneeChoice) -> Value {
    match &k.detected {
        Some(d) => json!({"value": k.value, "source": "detected", "rank": d.index, "distance": d.distance, "weak": d.weak}),
        None => json!({"value": k.value, "source": "override"}),
    }
}

fn empty_scores() -> HackerScoreTable {
    HackerScoreTable {
        authors: Vec::new(),
        phs: Vec::new(),
        chs: Vec::new(),
        iterations: 0,
        converged: false,
        trace: Vec::new(),
    }
}

struct Run<'a> {
    config: &'a RunConfig,
    bundle: Bundle,
    stages: Vec<StageRecord>,
    decisions: BTreeMap<String, Value>,
    corpus: Option<Corpus>,
    forums: Option<ForumCorpus>,
    keywords: KeywordConfig,
    aa: Option<AuthorAuthorGraph>,
    weighted: Option<AuthorAuthorGraph>,
    ar: Option<AuthorRepoGraph>,
    scores: Option<HackerScoreTable>,
}

impl Run<'_> {
    fn timed(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&mut Self) -> Result<BTreeMap<String, Value>, PipelineError>,
    ) -> Result<(), PipelineError> {
        let start = Instant::now();
        let counts = f(self)?;
        self.stages.push(StageRecord {
            stage,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            counts,
        });
        Ok(())
    }

    fn corpus(&self) -> &Corpus {
        self.corpus.as_ref().expect("ingest runs first")
    }

    fn ingest(&mut self) -> Result<BTreeMap<String, Value>, PipelineError> {
        let c = self.config;
        let mut loaded = load_dataset(
            c.authors.as_deref().unwrap(),
            c.repos.as_deref().unwrap(),
            c.interactions.as_deref().unwrap(),
        )?;
        let mut report: LoadReport = std::mem::take(&mut loaded.report);
        let mut counts = BTreeMap::new();
        if let Some(path) = &c.forums {
            let lf = load_forums(path)?;
            report.files.extend(lf.report.files);
            report.rejects.extend(lf.report.rejects);
            let fc = lf.forums.counts();
            counts.insert("forum_posts".into(), json!(fc.posts));
            counts.insert("forum_threads".into(), json!(fc.threads));
            counts.insert("forum_users".into(), json!(fc.users));
            self.forums = Some(lf.forums);
        }
        if let Some(path) = &c.keywords {
            self.keywords = KeywordConfig::load(path)?;
        }
        let corpus = loaded.corpus;
        counts.insert("authors".into(), json!(corpus.authors().len()));
        counts.insert("repos".into(), json!(corpus.repos().len()));
        counts.insert("interactions".into(), json!(corpus.interactions().len()));
        counts.insert("rejected_rows".into(), json!(report.rejects.len()));
        self.bundle.put(Stage::Ingest, "rejects.csv", &report.rejects_csv())?;
        self.bundle.put_json(Stage::Ingest, "ingest.json", &json!({"files": report.files}))?;
        self.corpus = Some(corpus);
        Ok(counts)
    }

    fn graphs(&mut self) -> Result<BTreeMap<String, Value>, PipelineError> {
        let st = Stage::Graphs;
        let aa = build_aa_graph(self.corpus());
        let ar = build_ar_graph(self.corpus()).map_err(|e| PipelineError::stage(st, e))?;
        let calibration = match &self.config.weights {
            Some(w) => Some(EdgeWeightCalibration::from_weights(w.clone()).map_err(|e| PipelineError::stage(st, e))?),
            None => match calibrate_weights(&aa, self.config.degree_basis, self.config.weight_mode) {
                Ok(c) => Some(c),
                Err(GraphError::NoEdges) => None,
                Err(e) => return Err(PipelineError::stage(st, e)),
            },
        };
        let weighted = match &calibration {
            Some(cal) => Some(apply_weights(&aa, cal).map_err(|e| PipelineError::stage(st, e))?),
            None => None,
        };
        let mut counts = BTreeMap::new();
        counts.insert("aa_nodes".into(), json!(aa.node_count()));
        counts.insert("aa_edges".into(), json!(aa.edges().len()));
        for l in EdgeLabel::ALL {
            counts.insert(format!("aa_edges_{l}"), json!(aa.label_count(l)));
        }
        counts.insert("ar_authors".into(), json!(ar.authors().len()));
        counts.insert("ar_repos".into(), json!(ar.repos().len()));
        counts.insert("ar_edges".into(), json!(ar.edges().len()));

        let exported = weighted.as_ref().unwrap_or(&aa);
        self.bundle.put(st, "aa_nodes.jsonl", &exported.nodes_jsonl())?;
        self.bundle.put(st, "aa_edges.jsonl", &exported.edges_jsonl())?;
        self.bundle.put(st, "ar_nodes.jsonl", &ar.nodes_jsonl())?;
        self.bundle.put(st, "ar_edges.jsonl", &ar.edges_jsonl())?;
        let cal_json = match &calibration {
            Some(c) => json!({
                "source": if self.config.weights.is_some() { "config" } else { "calibrated" },
                "degree_basis": self.config.degree_basis,
                "mode": c.mode,
                "avg_degree": c.avg_degree,
                "d_min": if c.d_min.is_finite() { json!(c.d_min) } else { Value::Null },
                "weights": c.weights,
                "absent": c.absent,
            }),
            None => json!({"source": "none", "reason": GraphError::NoEdges.to_string()}),
        };
        self.bundle.put_json(st, "calibration.json", &cal_json)?;
        if let Some(c) = &calibration {
            self.decisions.insert("edge_weights".into(), json!(c.weights));
        }
        self.aa = Some(aa);
        self.weighted = weighted;
        self.ar = Some(ar);
        Ok(counts)
    }

    fn compute_scores(&self, stage: Stage) -> Result<HackerScoreTable, PipelineError> {
        let g = self
            .weighted
            .as_ref()
            .ok_or_else(|| PipelineError::stage(stage, "author-author graph has no edges"))?;
        hacker_score(g, self.config.hits()).map_err(|e| PipelineError::stage(stage, e))
    }

    fn influence(&mut self) -> Result<BTreeMap<String, Value>, PipelineError> {
        let st = Stage::Influence;
        let t = self.compute_scores(st)?;
        let pk = choose_knee("phs", &t.phs, self.config.phs_knee, st)?;
        let ck = choose_knee("chs", &t.chs, self.config.chs_knee, st)?;
        let rc = classify_regions(&t, pk.value, ck.value).map_err(|e| PipelineError::stage(st, e))?;
        let corpus = self.corpus.as_ref().unwrap();

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["author", "phs", "chs", "region"]).unwrap();
        for i in 0..t.authors.len() {
            w.write_record([t.authors[i].clone(), fmt_f64(t.phs[i]), fmt_f64(t.chs[i]), rc.regions[i].to_string()])
                .unwrap();
        }
        self.bundle.put(st, "scores.csv", &w.into_inner().unwrap())?;
        self.bundle.put(st, "hig.csv", &hig_csv(&t, &rc, corpus))?;

        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["region"];
        header.extend(ProfileRow::HEADER);
        w.write_record(&header).unwrap();
        for (region, i) in top_by_region(&t, &rc, 2) {
            let row = author_profile(&t.authors[i], corpus, &t).map_err(|e| PipelineError::stage(st, e))?;
            let mut rec = vec![region.to_string()];
            rec.extend(row.record());
            w.write_record(&rec).unwrap();
        }
        self.bundle.put(st, "profiles.csv", &w.into_inner().unwrap())?;

        let counts_by_region: BTreeMap<String, usize> =
            rc.counts().into_iter().map(|(r, n)| (r.to_string(), n)).collect();
        let shares: BTreeMap<String, f64> = rc.shares().into_iter().map(|(r, s)| (r.to_string(), s)).collect();
        let summary = json!({
            "iterations": t.iterations,
            "converged": t.converged,
            "final_delta": t.trace.last().map(|s| s.max_delta),
            "phs_knee": knee_json(&pk),
            "chs_knee": knee_json(&ck),
            "regions": counts_by_region,
            "region_shares": shares,
            "hig_size": rc.hig().len(),
        });
        self.bundle.put_json(st, "influence.json", &summary)?;
        self.decisions.insert("phs_knee".into(), knee_json(&pk));
        self.decisions.insert("chs_knee".into(), knee_json(&ck));

        let mut counts = BTreeMap::new();
        counts.insert("iterations".into(), json!(t.iterations));
        counts.insert("converged".into(), json!(t.converged));
        counts.insert("hig_size".into(), json!(rc.hig().len()));
        for (r, n) in counts_by_region {
            counts.insert(format!("region_{r}"), json!(n));
        }
        self.scores = Some(t);
        Ok(counts)
    }

    fn communities(&mut self) -> Result<BTreeMap<String, Value>, PipelineError> {
        let st = Stage::Communities;
        let ar = self.ar.as_ref().unwrap();
        let detection = detect_communities(ar).map_err(|e| PipelineError::stage(st, e))?;
        let scores = match &self.scores {
            Some(t) => t.clone(),
            None => match self.compute_scores(st) {
                Ok(t) => t,
                Err(e) => {
                    self.decisions
                        .insert("community_leaders".into(), json!(format!("unavailable: {e}")));
                    empty_scores()
                }
            },
        };
        let profiles = profile_communities(
            &detection,
            ar,
            self.corpus.as_ref().unwrap(),
            &self.keywords,
            &scores,
            self.config.min_leader_size,
        );

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CommunityProfile::TABLE_HEADER).unwrap();
        for p in &profiles {
            w.write_record(p.table_record()).unwrap();
        }
        self.bundle.put(st, "communities.csv", &w.into_inner().unwrap())?;

        let assignment = detection.assignment(ar);
        let n_a = ar.authors().len();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node", "side", "community_id"]).unwrap();
        for (i, id) in ar.authors().iter().chain(ar.repos()).enumerate() {
            let side = if i < n_a { "author" } else { "repo" };
            w.write_record([id.as_str(), side, &assignment[i].to_string()]).unwrap();
        }
        self.bundle.put(st, "membership.csv", &w.into_inner().unwrap())?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["community_id", "role", "rank", "author"]).unwrap();
        for p in &profiles {
            for (role, list) in [("producer", &p.leaders.producers), ("connector", &p.leaders.connectors)] {
                for (rank, a) in list.iter().enumerate() {
                    w.write_record([p.id.to_string(), role.to_string(), (rank + 1).to_string(), a.clone()])
                        .unwrap();
                }
            }
        }
        self.bundle.put(st, "leaders.csv", &w.into_inner().unwrap())?;

        for p in &profiles {
            self.bundle
                .put_json(st, &format!("wordcloud_{}.json", p.id), &wordcloud_weights(&p.sop))?;
        }

        let sizes: Vec<f64> = detection.communities.iter().map(|c| c.size() as f64).collect();
        let size_knee = detect_knee(&sizes).ok();
        let summary = json!({
            "null_model": "barber",
            "modularity": detection.modularity,
            "merges": detection.merges.len(),
            "communities": detection.communities.len(),
            "size_knee": size_knee.map(|k| json!({"rank": k.index, "size": k.value, "weak": k.weak})),
            "sizes": detection.communities.iter().map(|c| json!({"id": c.id, "authors": c.authors.len(), "repos": c.repos.len(), "edges": c.edge_count})).collect::<Vec<_>>(),
        });
        self.bundle.put_json(st, "communities.json", &summary)?;

        let mut counts = BTreeMap::new();
        counts.insert("communities".into(), json!(detection.communities.len()));
        counts.insert("merges".into(), json!(detection.merges.len()));
        counts.insert("modularity".into(), json!(detection.modularity));
        Ok(counts)
    }

    fn stats(&mut self) -> Result<BTreeMap<String, Value>, PipelineError> {
        let st = Stage::Stats;
        let corpus = self.corpus.as_ref().unwrap();
        for m in AuthorMetric::ALL {
            let series = ccdf(m, corpus);
            self.bundle.put(st, &format!("ccdf_{m}.csv"), &series.csv())?;
        }
        let fs = fork_stats(corpus).map_err(|e| PipelineError::stage(st, e))?;
        self.bundle.put_json(st, "fork_stats.json", &fs)?;
        let cohorts = yearly_cohorts(corpus);
        self.bundle.put(st, "cohorts.csv", &cohorts.csv())?;
        let ri = reciprocity(corpus);
        self.bundle.put(st, "reciprocity.csv", &ri.csv())?;

        let mut counts = BTreeMap::new();
        counts.insert("cohort_years".into(), json!(cohorts.years.len()));
        counts.insert("total_forks".into(), json!(fs.total_forks));
        Ok(counts)
    }

    fn egonet(&mut self) -> Result<BTreeMap<String, Value>, PipelineError> {
        let st = Stage::Egonet;
        let corpus = self.corpus.as_ref().unwrap();
        let forums = self.forums.as_ref().unwrap();
        let aa = self.aa.as_ref().unwrap();
        let report = match_usernames(corpus, forums);
        self.bundle.put(st, "matches.csv", &report.csv())?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["forum_id", "users", "threads", "posts", "matched_users"]).unwrap();
        for f in forums.forum_ids() {
            let c = forums.counts_for(f);
            let matched = report.per_forum.get(f).copied().unwrap_or(0);
            w.write_record([f.to_string(), c.users.to_string(), c.threads.to_string(), c.posts.to_string(), matched.to_string()])
                .unwrap();
        }
        self.bundle.put(st, "forum_counts.csv", &w.into_inner().unwrap())?;

        let names: Vec<String> = match &self.config.egonet_username {
            Some(u) => vec![u.clone()],
            None => report.matches.iter().map(|m| m.username.clone()).collect(),
        };
        let mut egonets = Vec::new();
        for name in &names {
            let e = cross_egonet(name, corpus, aa, forums).map_err(|e| PipelineError::stage(st, e))?;
            let file = format!("egonet_{}.json", file_safe_name(&e.username));
            if self.bundle.files.contains_key(&file) {
                return Err(PipelineError::stage(st, format!("two usernames map to {file}")));
            }
            self.bundle.put_json(st, &file, &e.to_json())?;
            egonets.push(e);
        }
        self.bundle.put(st, "scatter.csv", &scatter_csv(&scatter_series(&egonets)))?;

        let mut counts = BTreeMap::new();
        counts.insert("matched_usernames".into(), json!(report.matches.len()));
        counts.insert("egonets".into(), json!(egonets.len()));
        Ok(counts)
    }
}

fn hig_csv(t: &HackerScoreTable, rc: &RegionClassification, corpus: &Corpus) -> Vec<u8> {
    let mut rows: Vec<usize> = rc.hig();
    rows.sort_by(|&a, &b| {
        (t.phs[b] + t.chs[b])
            .total_cmp(&(t.phs[a] + t.chs[a]))
            .then(t.authors[a].cmp(&t.authors[b]))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["author", "username", "region", "phs", "chs"]).unwrap();
    for i in rows {
        let name = corpus.author(&t.authors[i]).map(|a| a.username.as_str()).unwrap_or("");
        w.write_record([t.authors[i].as_str(), name, &rc.regions[i].to_string(), &fmt_f64(t.phs[i]), &fmt_f64(t.chs[i])])
            .unwrap();
    }
    w.into_inner().unwrap()
}

fn base_decisions(config: &RunConfig) -> BTreeMap<String, Value> {
    let mut d = BTreeMap::new();
    d.insert("weight_mode".into(), json!(config.weight_mode));
    d.insert("degree_basis".into(), json!(config.degree_basis));
    d.insert("hits_update".into(), json!("sequential: connector scores use the current producer scores"));
    d.insert("hits_convergence".into(), json!("max absolute per-author change across both vectors < tolerance"));
    d.insert("knee_curve".into(), json!("positive scores sorted descending, maximum distance from chord"));
    d.insert("region_rule".into(), json!("strictly greater than knee"));
    d.insert("community_null_model".into(), json!("barber bipartite"));
    d.insert("leader_min_size".into(), json!(config.min_leader_size));
    d.insert("table_forks_column".into(), json!("forks received on owned repositories"));
    d.insert("username_matching".into(), json!("trim and lowercase, exact"));
    d.insert("github_egonet".into(), json!("in and out neighbors, all edge labels"));
    d
}

/// Runs every stage.
pub fn run_pipeline(config: &RunConfig) -> Result<RunManifest, PipelineError> {
    run_stages(config, &Stage::ALL)
}

/// Runs ingest, graphs and the selected stages, in dependency order.
pub fn run_stages(config: &RunConfig, stages: &[Stage]) -> Result<RunManifest, PipelineError> {
    config.validate(stages)?;
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?
            .install(|| run_inner(config, stages)),
        None => run_inner(config, stages),
    }
}

fn run_inner(config: &RunConfig, stages: &[Stage]) -> Result<RunManifest, PipelineError> {
    let dir = config.output_dir.clone().unwrap();
    let mut inputs = Vec::new();
    for (role, p) in [
        ("authors", &config.authors),
        ("repos", &config.repos),
        ("interactions", &config.interactions),
        ("forums", &config.forums),
        ("keywords", &config.keywords),
    ] {
        if let Some(p) = p {
            inputs.push(digest_input(role, p)?);
        }
    }
    prepare_output_dir(&dir)?;

    let mut run = Run {
        config,
        bundle: Bundle {
            dir: dir.clone(),
            files: BTreeMap::new(),
        },
        stages: Vec::new(),
        decisions: base_decisions(config),
        corpus: None,
        forums: None,
        keywords: KeywordConfig::default(),
        aa: None,
        weighted: None,
        ar: None,
        scores: None,
    };
    run.timed(Stage::Ingest, Run::ingest)?;
    run.timed(Stage::Graphs, Run::graphs)?;
    for stage in [Stage::Influence, Stage::Communities, Stage::Stats, Stage::Egonet] {
        if !stages.contains(&stage) {
            continue;
        }
        match stage {
            Stage::Influence => run.timed(stage, Run::influence)?,
            Stage::Communities => run.timed(stage, Run::communities)?,
            Stage::Stats => run.timed(stage, Run::stats)?,
            Stage::Egonet => run.timed(stage, Run::egonet)?,
            _ => unreachable!(),
        }
    }
    run.decisions
        .insert("keywords".into(), serde_json::to_value(&run.keywords).unwrap());
    run.bundle.commit()?;

    let mut echo = config.clone();
    echo.output_dir = None;
    let manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        generated_at: chrono::Utc::now().to_rfc3339(),
        config: echo,
        inputs,
        stages: run.stages,
        decisions: run.decisions,
        files: run.bundle.files.into_values().collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).unwrap();
    bytes.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), bytes)
        .map_err(|e| PipelineError::Config(format!("writing manifest: {e}")))?;
    Ok(manifest)
}

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("bundle is missing {0}")]
    MissingFile(String),
    #[error("{file}: {message}")]
    Malformed { file: String, message: String },
}

fn read_table(dir: &Path, file: &str) -> Result<Vec<BTreeMap<String, String>>, SummaryError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(SummaryError::MissingFile(file.to_string()));
    }
    let bad = |e: csv::Error| SummaryError::Malformed {
        file: file.to_string(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(&path).map_err(bad)?;
    let headers = r.headers().map_err(bad)?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(bad)?;
        rows.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(rows)
}

fn field<'a>(row: &'a BTreeMap<String, String>, file: &str, key: &str) -> Result<&'a str, SummaryError> {
    row.get(key).map(String::as_str).ok_or_else(|| SummaryError::Malformed {
        file: file.to_string(),
        message: format!("no column `{key}`"),
    })
}

fn number(row: &BTreeMap<String, String>, file: &str, key: &str) -> Result<f64, SummaryError> {
    let v = field(row, file, key)?;
    v.parse().map_err(|_| SummaryError::Malformed {
        file: file.to_string(),
        message: format!("`{key}` is not a number: {v}"),
    })
}

/// Human-readable digest of a finished bundle.
pub fn summarize(dir: &Path) -> Result<String, SummaryError> {
    use std::fmt::Write;
    let scores = read_table(dir, "scores.csv")?;
    let communities = read_table(dir, "communities.csv")?;
    let ri = read_table(dir, "reciprocity.csv")?;
    let cohorts = read_table(dir, "cohorts.csv")?;
    let matches = read_table(dir, "matches.csv")?;

    let mut out = String::new();
    for (title, col) in [("Top producers (PHS)", "phs"), ("Top connectors (CHS)", "chs")] {
        let mut ranked = Vec::new();
        for row in &scores {
            ranked.push((number(row, "scores.csv", col)?, field(row, "scores.csv", "author")?));
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        writeln!(out, "{title}").unwrap();
        for (i, (s, a)) in ranked.iter().take(10).enumerate() {
            writeln!(out, "{:>3}. {a}  {s:.6}", i + 1).unwrap();
        }
        writeln!(out).unwrap();
    }

    writeln!(out, "Largest communities").unwrap();
    writeln!(out, "ID, Authors, Repos, MS, Dominant Platform, SOP, Dominant type, SOP").unwrap();
    let f = "communities.csv";
    let or_dash = |s: &str| if s.is_empty() { "-".to_string() } else { s.to_string() };
    let sop = |s: &str| s.parse::<f64>().map(|v| format!("{v:.4}")).unwrap_or_else(|_| "-".into());
    for row in communities.iter().take(5) {
        writeln!(
            out,
            "{}, {}, {}, {:.4}, {}, {}, {}, {}",
            field(row, f, "id")?,
            field(row, f, "n_authors")?,
            field(row, f, "n_repos")?,
            number(row, f, "MS")?,
            or_dash(field(row, f, "dominant_platform")?),
            sop(field(row, f, "platform_SOP")?),
            or_dash(field(row, f, "dominant_type")?),
            sop(field(row, f, "type_SOP")?),
        )
        .unwrap();
    }
    writeln!(out).unwrap();

    writeln!(out, "Reciprocity").unwrap();
    writeln!(out, "{:<12} {:>8} {:>8} {:>8}", "relationship", "pairs", "mutual", "RI").unwrap();
    let f = "reciprocity.csv";
    for row in &ri {
        writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>8}",
            field(row, f, "relationship")?,
            field(row, f, "pair_count")?,
            field(row, f, "mutual_count")?,
            sop(field(row, f, "ri")?)
        )
        .unwrap();
    }
    writeln!(out).unwrap();

    writeln!(out, "Yearly cohorts").unwrap();
    writeln!(out, "{:<8} {:>12} {:>10}", "year", "new_authors", "new_repos").unwrap();
    let f = "cohorts.csv";
    for row in &cohorts {
        writeln!(
            out,
            "{:<8} {:>12} {:>10}",
            field(row, f, "year")?,
            field(row, f, "new_authors")?,
            field(row, f, "new_repos")?
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "cross-platform matches: {}", matches.len()).unwrap();
    Ok(out)
}
