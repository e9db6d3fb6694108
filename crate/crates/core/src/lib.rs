//! Analysis toolkit for malware-author ecosystems on code-hosting platforms.
//!
//! The pipeline loads authors, repositories and interactions, builds an
//! author-author multigraph and an author-repository bipartite graph, scores
//! authors as producers and connectors, finds repository communities, computes
//! descriptive statistics and links authors to hacker-forum identities.

pub mod community;
pub mod crossplatform;
pub mod graph;
pub mod influence;
pub mod ingest;
pub mod pipeline;
pub mod stats;
pub mod synthetic;

pub use community::{detect_communities, Detection};
pub use graph::{build_aa_graph, build_ar_graph, AuthorAuthorGraph, AuthorRepoGraph, EdgeLabel, WeightMode};
pub use influence::{classify_regions, detect_knee, hacker_score, HackerScoreTable, HitsParams, Region};
pub use ingest::{load_dataset, Corpus, KeywordConfig};
pub use pipeline::{run_pipeline, RunConfig, Stage};
