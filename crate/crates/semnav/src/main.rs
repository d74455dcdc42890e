use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semnav::bundled;
use semnav::config::{read_source, RunConfig};
use semnav::formats::{self, export_triples, read_trace};
use semnav::harness::{replay, run_batch, run_one, write_episode, write_summary, Policy, Summary};
use semnav::leaderboard::{Entry, Leaderboard, Player};
use semnav::server::{serve, ServerConfig};
use semnav_core::agent::{BaselinePolicy, EpisodeResult};
use semnav_core::geosem::Pose;
use semnav_core::knowledge::ingest_corpus;
use semnav_core::world::{Action, PoseDoc};

#[derive(Parser)]
#[command(name = "semnav", version, about = "Semantic object search on grid floorplans", allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one agent episode and write its result and trace.
    Run(RunArgs),
    /// Run the agent over several seeds and print a summary.
    Batch(RunArgs),
    /// Run a trivial policy over several seeds and print a summary.
    Baseline {
        #[arg(long, value_enum, default_value = "random-walk")]
        policy: BaselineArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Ingest a scene-graph corpus and export the relation triples.
    Ingest {
        #[command(flatten)]
        run: RunArgs,
        /// Destination file; stdout when omitted.
        #[arg(long = "out")]
        out: Option<PathBuf>,
    },
    /// Host live play sessions over WebSocket.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Extra plans as NAME=PATH; bundled plans are always available.
        #[arg(long = "plan", value_parser = parse_plan)]
        plans: Vec<(String, String)>,
        /// Wall-clock seconds per simulated second while an action plays out.
        #[arg(long, default_value_t = 0.0)]
        pace: f64,
        /// Do not run the agent for tasks that lack an agent entry.
        #[arg(long)]
        no_agent_entries: bool,
    },
    /// Re-drive the actions of a recorded trace or result file.
    Replay {
        #[command(flatten)]
        run: RunArgs,
        /// A `.jsonl` step trace or an episode result JSON.
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    RandomWalk,
    GreedyFreeSpace,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Floorplan file or `bundled:<name>`.
    #[arg(long)]
    floorplan: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    corpus: Option<String>,
    /// Exported triples to use instead of the corpus.
    #[arg(long)]
    triples: Option<String>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Shorthand for seeds 0..N.
    #[arg(long, conflicts_with = "seeds")]
    n_seeds: Option<u64>,
    /// Start pose as X,Y,HEADING.
    #[arg(long, value_parser = parse_pose)]
    start: Option<PoseDoc>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    p_miss: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau_lm: Option<f64>,
    #[arg(long)]
    tau_zone: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rotation_deg: Option<u16>,
    /// Append agent results to this leaderboard file.
    #[arg(long)]
    leaderboard: Option<PathBuf>,
}

fn parse_pose(s: &str) -> Result<PoseDoc, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y, h] = parts.as_slice() else { return Err("expected X,Y,HEADING".into()) };
    Ok(PoseDoc {
        x: x.parse().map_err(|_| "bad x")?,
        y: y.parse().map_err(|_| "bad y")?,
        heading_deg: h.parse().map_err(|_| "bad heading")?,
    })
}

fn parse_plan(s: &str) -> Result<(String, String), String> {
    let (n, p) = s.split_once('=').ok_or("expected NAME=PATH")?;
    Ok((n.into(), p.into()))
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $dst = v.into(); })*
            };
        }
        set!(floorplan => c.floorplan, classes => c.classes, corpus => c.corpus, budget => c.landmark.budget,
             p_miss => c.detector.p_miss, alpha => c.landmark.alpha, tau_lm => c.landmark.tau_lm,
             tau_zone => c.agent.tau_zone, lambda => c.knowledge.lambda, rotation_deg => c.action_model.rotation_deg,
             seeds => c.seeds);
        if self.target.is_some() {
            c.target = self.target.clone();
        }
        if self.triples.is_some() {
            c.triples = self.triples.clone();
        }
        if self.start.is_some() {
            c.start = self.start;
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        if let Some(n) = self.n_seeds {
            c.seeds = (0..n).collect();
        }
        Ok(c)
    }
}

enum Outcome {
    Found,
    NotFound,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).with_writer(std::io::stderr).init();
    // Usage errors count as configuration errors; 2 is reserved for not-found.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Found) => ExitCode::SUCCESS,
        Ok(Outcome::NotFound) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn outcome(all_found: bool) -> Outcome {
    if all_found {
        Outcome::Found
    } else {
        Outcome::NotFound
    }
}

fn record_agent(board: &Option<PathBuf>, prepared: &semnav::config::Prepared, seed: u64, r: &EpisodeResult) -> Result<()> {
    let Some(path) = board else { return Ok(()) };
    Leaderboard::new(path)
        .append(&Entry {
            player: Player::Agent,
            plan: prepared.plan.name.clone(),
            target: prepared.target.clone(),
            start: Pose::from(prepared.start),
            seed,
            wall_clock_s: None,
            result: r.clone(),
        })
        .with_context(|| format!("appending to {}", path.display()))
}

fn summarize(config: &RunConfig, prepared: &semnav::config::Prepared, policy: Policy, args: &RunArgs) -> Result<Outcome> {
    if config.seeds.is_empty() {
        bail!("seed list is empty");
    }
    let results = run_batch(prepared, policy, &config.seeds)?;
    if let Some(dir) = &config.output {
        for (s, r) in &results {
            write_episode(dir, *s, r).with_context(|| format!("writing to {}", dir.display()))?;
        }
    }
    if policy == Policy::Agent {
        for (s, r) in &results {
            record_agent(&args.leaderboard, prepared, *s, r)?;
        }
    }
    let summary = Summary::of(results.iter().map(|(_, r)| r)).expect("non-empty batch");
    if let Some(dir) = &config.output {
        write_summary(dir, &summary)?;
    }
    print!("{summary}");
    Ok(outcome(summary.successes == summary.episodes))
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Run(args) => {
            let config = args.config()?;
            let prepared = config.prepare()?;
            let seed = *config.seeds.first().context("seed list is empty")?;
            let r = run_one(&prepared, Policy::Agent, seed)?;
            let dir = config.output.clone().unwrap_or_else(|| PathBuf::from("."));
            write_episode(&dir, seed, &r).with_context(|| format!("writing to {}", dir.display()))?;
            record_agent(&args.leaderboard, &prepared, seed, &r)?;
            println!(
                "success={} termination={:?} steps={} sim_time_s={:.3} final=({}, {}, {})",
                r.success, r.termination, r.steps, r.sim_time_s, r.final_pose.x, r.final_pose.y, r.final_pose.heading_deg
            );
            Ok(outcome(r.success))
        }
        Command::Batch(args) => {
            let config = args.config()?;
            let prepared = config.prepare()?;
            summarize(&config, &prepared, Policy::Agent, &args)
        }
        Command::Baseline { policy, run } => {
            let config = run.config()?;
            let prepared = config.prepare()?;
            let p = match policy {
                BaselineArg::RandomWalk => BaselinePolicy::RandomWalk,
                BaselineArg::GreedyFreeSpace => BaselinePolicy::GreedyFreeSpace,
            };
            summarize(&config, &prepared, Policy::Baseline(p), &run)
        }
        Command::Ingest { run, out } => {
            let config = run.config()?;
            let (name, text) = read_source(&config.classes)?;
            let classes = formats::parse_classes(&name, &text)?;
            let (name, text) = read_source(&config.corpus)?;
            let corpus = formats::parse_corpus(&name, &text)?;
            let store = ingest_corpus(&corpus, config.knowledge, &classes).map_err(formats::FormatError::from)?;
            let doc = export_triples(&store);
            match out {
                Some(p) => fs::write(&p, doc).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{doc}"),
            }
            Ok(Outcome::Found)
        }
        Command::Serve { run, bind, plans, pace, no_agent_entries } => {
            let base = run.config()?;
            base.prepare().context("checking the base configuration")?;
            let leaderboard = run.leaderboard.clone().unwrap_or_else(|| PathBuf::from("leaderboard.jsonl"));
            let mut registry: BTreeMap<String, String> =
                bundled::PLANS.iter().map(|(n, _)| (n.to_string(), format!("{}{n}", bundled::PREFIX))).collect();
            registry.extend(plans);
            let cfg = ServerConfig {
                base,
                plans: registry,
                leaderboard: Leaderboard::new(leaderboard),
                pace,
                agent_entries: !no_agent_entries,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(bind, cfg))?;
            Ok(Outcome::Found)
        }
        Command::Replay { run, input } => {
            let config = run.config()?;
            let prepared = config.prepare()?;
            let actions = load_actions(&input)?;
            let seed = config.seeds.first().copied().unwrap_or(0);
            let r = replay(&prepared, &actions, seed)?;
            if let Some(dir) = &config.output {
                write_episode(dir, seed, &r)?;
            }
            println!(
                "success={} steps={} sim_time_s={:.3} final=({}, {}, {})",
                r.success, r.steps, r.sim_time_s, r.final_pose.x, r.final_pose.y, r.final_pose.heading_deg
            );
            Ok(outcome(r.success))
        }
    }
}

fn load_actions(path: &PathBuf) -> Result<Vec<Action>> {
    let is_trace = path.extension().is_some_and(|e| e == "jsonl");
    if is_trace {
        let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let steps = read_trace(BufReader::new(f))?;
        Ok(steps.into_iter().skip(1).map(|s| s.action_taken).collect())
    } else {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: EpisodeResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(r.actions)
    }
}
