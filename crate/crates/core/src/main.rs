use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hacknet::graph::WeightMode;
use hacknet::pipeline::{run_stages, summarize, PipelineError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "hacknet", version, about = "Influence, community and cross-platform analysis of malware-author networks")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "HACKNET_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate inputs, export graphs and the rejects report.
    Ingest(Common),
    /// Producer/connector scores, knees, regions and the influential group.
    Influence(Common),
    /// Author-repository communities with keyword profiles.
    Communities(Common),
    /// Distributions, fork statistics, yearly cohorts and reciprocity.
    Stats(Common),
    /// Username matches and cross-platform egonets.
    Egonet {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "all_matched")]
        username: Option<String>,
        #[arg(long)]
        all_matched: bool,
    },
    /// Every stage.
    Run(Common),
    /// Print a digest of a finished report bundle.
    Summarize { bundle: PathBuf },
}

#[derive(Args)]
struct Common {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    authors: Option<PathBuf>,
    #[arg(long)]
    repos: Option<PathBuf>,
    #[arg(long)]
    interactions: Option<PathBuf>,
    #[arg(long)]
    forums: Option<PathBuf>,
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    phs_knee: Option<f64>,
    #[arg(long)]
    chs_knee: Option<f64>,
    /// exact or rounded
    #[arg(long)]
    weight_mode: Option<WeightMode>,
    #[arg(long)]
    min_leader_size: Option<usize>,
}

impl Common {
    fn into_config(self, threads: Option<usize>) -> Result<RunConfig, PipelineError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag {
                    c.$field = Some(v);
                }
            )*};
        }
        set!(authors => authors, repos => repos, interactions => interactions, forums => forums,
             keywords => keywords, out => output_dir, phs_knee => phs_knee, chs_knee => chs_knee);
        if let Some(v) = self.tolerance {
            c.tolerance = v;
        }
        if let Some(v) = self.max_iter {
            c.max_iter = v;
        }
        if let Some(v) = self.weight_mode {
            c.weight_mode = v;
        }
        if let Some(v) = self.min_leader_size {
            c.min_leader_size = v;
        }
        if threads.is_some() {
            c.threads = threads;
        }
        Ok(c)
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let threads = cli.threads;
    let (common, stages) = match cli.command {
        Command::Summarize { bundle } => {
            let text = summarize(&bundle)?;
            print!("{text}");
            return Ok(());
        }
        Command::Ingest(c) => (c, vec![]),
        Command::Influence(c) => (c, vec![Stage::Influence]),
        Command::Communities(c) => (c, vec![Stage::Communities]),
        Command::Stats(c) => (c, vec![Stage::Stats]),
        Command::Run(c) => (c, Stage::ALL.to_vec()),
        Command::Egonet {
            common,
            username,
            all_matched,
        } => {
            let mut config = common.into_config(threads)?;
            if all_matched {
                config.egonet_username = None;
            } else if username.is_some() {
                config.egonet_username = username;
            }
            let m = run_stages(&config, &[Stage::Egonet])?;
            eprintln!("wrote {} files", m.files.len() + 1);
            return Ok(());
        }
    };
    let config = common.into_config(threads)?;
    let m = run_stages(&config, &stages)?;
    eprintln!("wrote {} files", m.files.len() + 1);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
