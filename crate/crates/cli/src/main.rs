use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use agentloop_core::bench::{
    eval_grounding, scripted_clients, sweep_k, GroundingEvalReport, JudgeKind, ScriptedModel, SweepConfig, SweepReport,
};
use agentloop_core::dataset::{
    clean_records, load_detections, load_records, write_partition, CleanConfig, DetectionIndex,
};
use agentloop_core::env::Scenario;
use agentloop_core::gateway::prompts::PromptSet;
use agentloop_core::gateway::{ChatEndpoint, Grounder, HttpEndpoint, PolicyGrounder, RemoteGrounder};
use agentloop_core::grpo::trainer::metrics_csv;
use agentloop_core::grpo::{load_training_fixture, moving_average, train, Checkpoint, TrainConfig};
use agentloop_core::orchestrator::{run_task, AgentConfig, Clients};

#[derive(Parser)]
#[command(
    name = "agentloop",
    version,
    about = "GUI agent harness: cleaning, grounding training, evaluation, and K-sweeps"
)]
struct Cli {
    /// Print machine-readable JSON instead of a text summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop records whose annotation overlaps no detection well enough.
    Clean {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        tau: f64,
        /// Directory for kept.jsonl, discarded.jsonl and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the grid grounding policy with click-reward GRPO.
    Train {
        /// Trainer settings as JSON; omitted keys take their defaults.
        #[arg(long)]
        config: PathBuf,
        /// Training examples (JSONL with features, bbox, resolution).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for checkpoint.json and metrics.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grounding accuracy over annotated records.
    EvalGrounding {
        #[arg(long, value_enum)]
        grounder: GrounderKind,
        #[arg(long)]
        records: PathBuf,
        /// Policy checkpoint for the local grounder.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        remote: RemoteArgs,
    },
    /// Run one episode of the agent loop on a scenario.
    RunTask {
        /// Scenario JSON; defaults to a generated wizard of --chain pages.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        chain: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        max_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        bypass_judge: bool,
        /// Write the trajectory log (JSONL) here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        clients: ClientArgs,
    },
    /// Success rate as a function of the number of proposals K.
    SweepK {
        #[arg(long, value_delimiter = ',', default_values_t = SweepConfig::DEFAULT_KS)]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario JSON; defaults to a generated wizard of --chain pages.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        chain: usize,
        #[arg(long, default_value_t = 100)]
        max_steps: usize,
        /// Parallel episodes; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        clients: ClientArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GrounderKind {
    Local,
    Remote,
}

#[derive(clap::Args)]
struct RemoteArgs {
    /// Chat endpoint URL; falls back to AGENTLOOP_ENDPOINT_URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
}

#[derive(clap::Args)]
struct ClientArgs {
    /// Use the scripted stub models (the default without --endpoint).
    #[arg(long, conflicts_with = "endpoint")]
    stub: bool,
    /// Probability that a stub proposal is correct.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Stub judge.
    #[arg(long, value_enum, default_value = "oracle")]
    judge: StubJudge,
    #[command(flatten)]
    remote: RemoteArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum StubJudge {
    Oracle,
    Uniform,
}

impl ClientArgs {
    fn model(&self) -> Option<ScriptedModel> {
        if self.remote.endpoint.is_some() {
            return None;
        }
        let judge = match self.judge {
            StubJudge::Oracle => JudgeKind::Oracle,
            StubJudge::Uniform => JudgeKind::Uniform,
        };
        Some(ScriptedModel { p: self.p, judge })
    }
}

fn http(remote: &RemoteArgs) -> Result<Arc<dyn ChatEndpoint>> {
    let ep = HttpEndpoint::from_env(remote.endpoint.as_deref(), Duration::from_secs(remote.timeout))?;
    Ok(Arc::new(ep))
}

/// One HTTP endpoint serving all three roles.
fn remote_clients(remote: &RemoteArgs) -> Result<Clients> {
    let ep = http(remote)?;
    let prompts = PromptSet::default();
    Ok(Clients {
        planner: ep.clone(),
        judge: ep.clone(),
        grounder: Arc::new(RemoteGrounder::new(ep, prompts.clone())),
        prompts,
    })
}

fn load_scenario(path: Option<&Path>, chain: usize) -> Result<Scenario> {
    match path {
        Some(p) => Scenario::load(p).with_context(|| format!("loading scenario {}", p.display())),
        None if chain == 0 => bail!("--chain must be at least 1"),
        None => Ok(Scenario::linear_chain(chain)),
    }
}

fn emit<T: Serialize>(json_out: bool, value: &T, text: impl FnOnce() -> String) {
    if json_out {
        println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    } else {
        print!("{}", text());
    }
}

fn clean(json_out: bool, records: &Path, detections: &Path, tau: f64, out: Option<&Path>) -> Result<()> {
    let cfg = CleanConfig::new(tau)?;
    let recs = load_records(records)?;
    let dets: DetectionIndex = load_detections(detections)?.into_iter().collect();
    let outcome = clean_records(recs, &dets, cfg);
    let report = match out {
        Some(dir) => write_partition(&outcome, dir)?,
        None => outcome.report(),
    };
    emit(json_out, &report, || {
        format!(
            "input {}  kept {}  discarded {}  discard rate {:.3}  tau {}\n",
            report.input, report.kept, report.discarded, report.discard_rate, report.tau
        )
    });
    Ok(())
}

fn train_cmd(json_out: bool, config: &Path, data: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading config {}", config.display()))?;
    let mut cfg: TrainConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dataset = load_training_fixture(data)?;
    let outcome = train(&cfg, &dataset)?;
    let ma = moving_average(&outcome.metrics, cfg.reward_window);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Checkpoint::new(&outcome.policy, cfg.seed, outcome.metrics.len()).save(&dir.join("checkpoint.json"))?;
        let csv = dir.join("metrics.csv");
        fs::write(&csv, metrics_csv(&outcome.metrics)).with_context(|| format!("writing {}", csv.display()))?;
    }
    let summary = json!({
        "iterations": outcome.metrics.len(),
        "stopped_at": outcome.stopped_at,
        "final_accuracy": outcome.final_accuracy,
        "final_mean_reward_ma": ma.last(),
        "seed": cfg.seed,
    });
    emit(json_out, &summary, || {
        format!(
            "iterations {}  greedy accuracy {:.4}  reward MA {:.4}\n",
            outcome.metrics.len(),
            outcome.final_accuracy,
            ma.last().copied().unwrap_or(0.0)
        )
    });
    Ok(())
}

fn eval_cmd(
    json_out: bool,
    kind: GrounderKind,
    records: &Path,
    checkpoint: Option<&Path>,
    remote: &RemoteArgs,
) -> Result<()> {
    let recs = load_records(records)?;
    let grounder: Box<dyn Grounder> = match kind {
        GrounderKind::Local => {
            let Some(path) = checkpoint else { bail!("--grounder local needs --checkpoint") };
            Box::new(PolicyGrounder::new(Checkpoint::load(path)?.policy()?))
        }
        GrounderKind::Remote => Box::new(RemoteGrounder::new(http(remote)?, PromptSet::default())),
    };
    let report: GroundingEvalReport = eval_grounding(grounder.as_ref(), &recs)?;
    emit(json_out, &report, || {
        let mut s = format!("accuracy {:.4} ({}/{})\n", report.accuracy, report.correct, report.total);
        for (cat, t) in &report.per_category {
            s += &format!("  {cat}: {:.4} ({}/{})\n", t.accuracy, t.correct, t.total);
        }
        if !report.failures.is_empty() {
            s += &format!("  {} grounder failures\n", report.failures.len());
        }
        s
    });
    Ok(())
}

fn sweep_text(report: &SweepReport) -> String {
    let mut s = String::from("K\tepisodes\tsuccesses\trate\t95% CI\tanalytic\n");
    for r in &report.rows {
        let analytic = r.analytic.map_or("-".to_string(), |a| format!("{a:.4}"));
        s += &format!(
            "{}\t{}\t{}\t{:.4}\t[{:.4}, {:.4}]\t{}\n",
            r.k, r.episodes, r.successes, r.success_rate, r.ci_low, r.ci_high, analytic
        );
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    let json_out = cli.json;
    match cli.command {
        Command::Clean { records, detections, tau, out } => clean(json_out, &records, &detections, tau, out.as_deref()),
        Command::Train { config, data, seed, out } => train_cmd(json_out, &config, &data, seed, out.as_deref()),
        Command::EvalGrounding { grounder, records, checkpoint, remote } => {
            eval_cmd(json_out, grounder, &records, checkpoint.as_deref(), &remote)
        }
        Command::RunTask { scenario, chain, k, max_steps, seed, bypass_judge, log, clients } => {
            let scn = load_scenario(scenario.as_deref(), chain)?;
            let agent = AgentConfig { k, max_steps, bypass_judge, ..AgentConfig::default() };
            agent.validate().map_err(anyhow::Error::msg)?;
            let c = match clients.model() {
                Some(m) => scripted_clients(&scn, &m, seed)?,
                None => remote_clients(&clients.remote)?,
            };
            let result = run_task(&scn, &c, &agent);
            if let Some(path) = &log {
                fs::write(path, result.to_log()).with_context(|| format!("writing {}", path.display()))?;
            }
            let summary = json!({
                "success": result.success,
                "termination": result.termination,
                "steps": result.steps.len(),
                "grounded_actions": result.grounded_actions(),
                "step_errors": result.steps.iter().filter(|s| s.error.is_some()).count(),
            });
            emit(json_out, &summary, || {
                format!(
                    "success {}  termination {}  steps {}\n",
                    result.success,
                    summary["termination"].as_str().unwrap_or_default(),
                    result.steps.len()
                )
            });
            Ok(())
        }
        Command::SweepK { ks, episodes, seed, scenario, chain, max_steps, jobs, clients } => {
            let scn = load_scenario(scenario.as_deref(), chain)?;
            let cfg =
                SweepConfig { ks, episodes, seed, jobs, agent: AgentConfig { max_steps, ..AgentConfig::default() } };
            let model = clients.model();
            let report = match model {
                Some(m) => {
                    if let Err(e) = scripted_clients(&scn, &m, seed) {
                        bail!("stub clients: {e}");
                    }
                    sweep_k(
                        std::slice::from_ref(&scn),
                        |s, episode_seed| scripted_clients(s, &m, episode_seed).map_err(|e| e.to_string()),
                        &cfg,
                        Some(m),
                    )?
                }
                None => {
                    let c = remote_clients(&clients.remote)?;
                    sweep_k(std::slice::from_ref(&scn), |_, _| Ok(c.clone()), &cfg, None)?
                }
            };
            emit(json_out, &report, || sweep_text(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_out = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let causes: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            if json_out {
                eprintln!("{}", json!({ "error": causes[0], "causes": &causes[1..] }));
            } else {
                eprintln!("error: {}", causes.join(": "));
            }
            ExitCode::FAILURE
        }
    }
}
