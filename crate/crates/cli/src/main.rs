use std::fs::File;
use std::io::BufReader;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use splain_core::explain::{expand_node, flatten, tree_violations};
use splain_core::pipeline::{read_items, run_pipeline, validate_all, Artifacts, Pipeline, PipelineError};
use splain_core::template::TemplateSet;
use splain_core::IdTag;

#[derive(Parser)]
#[command(name = "splain", version, about = "Plain-language explanations for fused threat warnings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline and write artifacts
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Newline-delimited JSON items
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "artifacts")]
        out: PathBuf,
    },
    /// Print a fused warning's explanation down to a depth
    Explain {
        fused_id: String,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
    },
    /// Print the children of an explanation node
    Expand {
        node_id: String,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
    },
    /// Check stored entities, explanations and templates
    Validate {
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
        /// Check the templates and vocabulary named by this config instead of the built-in set
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve artifacts over read-only HTTP
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
    },
}

enum Failure {
    Startup(anyhow::Error),
    Invalid(Vec<String>),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Startup(e.into())
    }
}

fn run(config: &Path, input: &Path, out: &Path) -> Result<(), Failure> {
    let pipeline = Pipeline::load(config)?;
    let file = File::open(input).with_context(|| format!("cannot read input {}", input.display()))?;
    let items = read_items(BufReader::new(file))?;
    let output = match run_pipeline(&pipeline, &items) {
        Ok(output) => output,
        Err(PipelineError::Invalid(violations)) => {
            return Err(Failure::Invalid(violations.iter().map(ToString::to_string).collect()))
        }
        Err(e) => return Err(e.into()),
    };
    let artifacts = Artifacts::build(output.store, &pipeline.templates)?;
    artifacts.write_dir(out)?;
    println!(
        "{} items, {} fused warnings written to {}",
        items.len(),
        artifacts.trees.len(),
        out.display()
    );
    Ok(())
}

fn parse_id(text: &str) -> anyhow::Result<IdTag> {
    text.parse().map_err(|e| anyhow!("bad id {text:?}: {e}"))
}

fn explain(fused_id: &str, depth: Option<usize>, dir: &Path) -> Result<(), Failure> {
    let artifacts = Artifacts::read_dir(dir)?;
    let id = parse_id(fused_id)?;
    let tree = artifacts.trees.get(&id).ok_or_else(|| anyhow!("unknown fused warning {id}"))?;
    print!("{}", flatten(tree, depth.unwrap_or_else(|| tree.height())));
    Ok(())
}

fn expand(node_id: &str, dir: &Path) -> Result<(), Failure> {
    let artifacts = Artifacts::read_dir(dir)?;
    let id = parse_id(node_id)?;
    let (tree, _) = artifacts.node(&id).ok_or_else(|| anyhow!("unknown node {id}"))?;
    for child in expand_node(tree, &id)? {
        println!("{} {} ({} children)", child.id, child.level.as_str(), child.child_ids.len());
        for line in child.text.lines() {
            println!("  {line}");
        }
    }
    Ok(())
}

fn validate(dir: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let artifacts = Artifacts::read_dir(dir)?;
    let (templates, vocabulary) = match config {
        Some(path) => {
            let pipeline = Pipeline::load(path)?;
            (pipeline.templates, pipeline.vocabulary)
        }
        None => (TemplateSet::builtin(), TemplateSet::builtin_vocabulary()),
    };
    let (store, template) = validate_all(&artifacts.store, &templates, &vocabulary);
    let mut problems: Vec<String> = store.iter().map(ToString::to_string).collect();
    problems.extend(template.iter().map(ToString::to_string));
    for (id, tree) in &artifacts.trees {
        problems.extend(tree_violations(tree).into_iter().map(|v| format!("{id}: {v}")));
    }
    if !problems.is_empty() {
        return Err(Failure::Invalid(problems));
    }
    println!(
        "ok: {} entities, {} explanations, {} templates",
        artifacts.store.len(),
        artifacts.trees.len(),
        templates.iter().count()
    );
    Ok(())
}

fn serve(addr: SocketAddr, dir: &Path) -> Result<(), Failure> {
    let artifacts = Arc::new(Artifacts::read_dir(dir)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = splain_cli::bind(addr).await?;
        eprintln!("serving {} on http://{}", dir.display(), listener.local_addr()?);
        axum::serve(listener, splain_cli::router(artifacts)).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, input, out } => run(config, input, out),
        Command::Explain { fused_id, depth, artifacts } => explain(fused_id, *depth, artifacts),
        Command::Expand { node_id, artifacts } => expand(node_id, artifacts),
        Command::Validate { artifacts, config } => validate(artifacts, config.as_deref()),
        Command::Serve { port, bind, artifacts } => serve(SocketAddr::new(*bind, *port), artifacts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Startup(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(problems)) => {
            for p in &problems {
                eprintln!("{p}");
            }
            eprintln!("{} validation failures", problems.len());
            ExitCode::from(2)
        }
    }
}
