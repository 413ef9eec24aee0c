use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use groundplan::config::Config;
use groundplan::datagen::{generate_to_dir, read_manifest, DatasetKind};
use groundplan::eval::{eval_offline, eval_online, render_report, EvalReport, ReportFormat};
use groundplan::executor::{read_trace_jsonl, run_episode, write_trace_jsonl, ChunkPolicy, PlannerKind};
use groundplan::geometry::DbscanParams;
use groundplan::objectives::check_gradients;
use groundplan::scene::TaskSuite;

#[derive(Parser)]
#[command(name = "groundplan", version, about = "Grounded task planning: data generation, evaluation and tooling")]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a plan, refexp or long-horizon dataset from oracle episodes.
    GenData {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Square resolution of the default four-camera rig.
        #[arg(long)]
        resolution: Option<u32>,
    },
    /// Score a planner on a plan dataset (Act/Obj/Grd per group).
    EvalOffline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        suite: Option<String>,
        #[command(flatten)]
        planner: PlannerArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Closed-loop success rates over runs × episodes per variation.
    RunOnline {
        #[arg(long)]
        suite: Option<String>,
        #[command(flatten)]
        planner: PlannerArgs,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Only run variations carrying this tag.
        #[arg(long)]
        tag: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run one episode and write its trace as JSON lines.
    RunEpisode {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0)]
        variation: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        planner: PlannerArgs,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a results file.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Compare analytic loss gradients against finite differences.
    CheckGrads {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Summarize an episode trace and check its invariants.
    Inspect {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Plan,
    Refexp,
    Long,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerChoice {
    Oracle,
    Corrupted,
}

#[derive(Args)]
struct PlannerArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    planner: PlannerChoice,
    #[arg(long)]
    p_wrong_object: Option<f64>,
    #[arg(long)]
    p_wrong_action: Option<f64>,
    #[arg(long)]
    p_malformed: Option<f64>,
    /// One corruption draw per episode instead of per call.
    #[arg(long)]
    sticky: bool,
    #[arg(long)]
    corruption_seed: Option<u64>,
}

#[derive(Args)]
struct ExecArgs {
    #[arg(long)]
    chunk: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    speckle: Option<f64>,
    #[arg(long)]
    no_dbscan: bool,
    #[arg(long)]
    dbscan_eps: Option<f64>,
    #[arg(long)]
    dbscan_min_pts: Option<usize>,
    #[arg(long)]
    resolution: Option<u32>,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the full results as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    format: String,
}

/// Exits with status 3 so violations are distinguishable from usage (2) and
/// runtime (1) errors.
#[derive(Debug)]
struct Violation(String);

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant violation: {}", self.0)
    }
}

impl std::error::Error for Violation {}

fn violation(msg: impl Into<String>) -> anyhow::Error {
    Violation(msg.into()).into()
}

fn planner_kind(cfg: &Config, a: &PlannerArgs) -> Result<PlannerKind> {
    let kind = match a.planner {
        PlannerChoice::Oracle => PlannerKind::Oracle,
        PlannerChoice::Corrupted => {
            let mut c = cfg.corruption;
            if let Some(p) = a.p_wrong_object {
                c.p_wrong_object = p;
            }
            if let Some(p) = a.p_wrong_action {
                c.p_wrong_action = p;
            }
            if let Some(p) = a.p_malformed {
                c.p_malformed = p;
            }
            if let Some(s) = a.corruption_seed {
                c.seed = s;
            }
            if a.sticky {
                c.transient = false;
            }
            PlannerKind::Corrupted(c)
        }
    };
    kind.validate().map_err(|e| anyhow!(e))?;
    Ok(kind)
}

fn apply_exec(cfg: &mut Config, a: &ExecArgs) -> Result<()> {
    if let Some(c) = a.chunk {
        cfg.exec.chunk = ChunkPolicy::new(c).map_err(|e| anyhow!(e))?;
    }
    if let Some(m) = a.max_steps {
        cfg.exec.max_steps = m;
    }
    if let Some(s) = a.speckle {
        cfg.exec.speckle = s;
    }
    if a.dbscan_eps.is_some() || a.dbscan_min_pts.is_some() {
        let d = cfg.exec.dbscan.unwrap_or_default();
        cfg.exec.dbscan = Some(DbscanParams { eps: a.dbscan_eps.unwrap_or(d.eps), min_pts: a.dbscan_min_pts.unwrap_or(d.min_pts) });
    }
    if a.no_dbscan {
        cfg.exec.dbscan = None;
    }
    if a.resolution.is_some() {
        cfg.resolution = a.resolution;
    }
    Ok(())
}

fn override_opt<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load_suite(cfg: &Config) -> Result<TaskSuite> {
    TaskSuite::resolve(&cfg.suite).with_context(|| format!("loading suite {}", cfg.suite))
}

fn emit(report: &EvalReport, output: &OutputArgs) -> Result<()> {
    if let Err(e) = report.validate() {
        return Err(violation(e));
    }
    let format: ReportFormat = output.format.parse().map_err(|e: String| anyhow!(e))?;
    if let Some(path) = &output.out {
        std::fs::write(path, render_report(report, ReportFormat::Json)).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", render_report(report, format));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| anyhow!(e))?,
        None => Config::default(),
    };
    match cli.command {
        Command::GenData { suite, kind, episodes, seed, out, resolution } => {
            override_opt(&mut cfg.suite, suite);
            override_opt(&mut cfg.episodes, episodes);
            override_opt(&mut cfg.seed, seed);
            if resolution.is_some() {
                cfg.resolution = resolution;
            }
            cfg.validate().map_err(|e| anyhow!(e))?;
            let suite = load_suite(&cfg)?;
            let kind = match kind {
                Kind::Plan => DatasetKind::Plan,
                Kind::Refexp => DatasetKind::Refexp,
                Kind::Long => DatasetKind::Long,
            };
            let m = generate_to_dir(kind, &suite, cfg.episodes, cfg.seed, &cfg.exec_config(), &out)?;
            let back = read_manifest(&out).map_err(|e| violation(e.to_string()))?;
            if back != m {
                return Err(violation("manifest on disk differs from the generated one"));
            }
            println!(
                "wrote {} records for {} episodes to {} (mean {:.2} keysteps per episode)",
                m.files.len(),
                m.episodes,
                out.display(),
                m.mean_keysteps_per_episode
            );
        }
        Command::EvalOffline { data, suite, planner, output } => {
            override_opt(&mut cfg.suite, suite);
            let suite = load_suite(&cfg)?;
            let kind = planner_kind(&cfg, &planner)?;
            let manifest = read_manifest(&data)?;
            if manifest.suite_hash != suite.hash() {
                eprintln!("warning: dataset was generated from a different suite");
            }
            let r = eval_offline(&data, &suite, &kind)?;
            emit(&EvalReport::Offline(r), &output)?;
        }
        Command::RunOnline { suite, planner, exec, episodes, runs, seed, tag, output } => {
            override_opt(&mut cfg.suite, suite);
            override_opt(&mut cfg.episodes, episodes);
            override_opt(&mut cfg.runs, runs);
            override_opt(&mut cfg.seed, seed);
            apply_exec(&mut cfg, &exec)?;
            cfg.validate().map_err(|e| anyhow!(e))?;
            let kind = planner_kind(&cfg, &planner)?;
            let mut suite = load_suite(&cfg)?;
            if let Some(tag) = tag {
                suite = suite.subset(|t| t.has_tag(&tag));
            }
            let r = eval_online(&suite, &kind, &cfg.exec_config(), cfg.episodes, cfg.runs, cfg.seed)?;
            emit(&EvalReport::Online(r), &output)?;
        }
        Command::RunEpisode { suite, task, variation, seed, planner, exec, out } => {
            override_opt(&mut cfg.suite, suite);
            override_opt(&mut cfg.seed, seed);
            apply_exec(&mut cfg, &exec)?;
            cfg.validate().map_err(|e| anyhow!(e))?;
            let kind = planner_kind(&cfg, &planner)?;
            let suite = load_suite(&cfg)?;
            let script = suite.find(&task, variation).ok_or_else(|| anyhow!("no task {task}/v{variation} in the suite"))?;
            let mut p = kind.build(cfg.seed);
            let trace = run_episode(script, cfg.seed, p.as_mut(), &cfg.exec_config())?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            write_trace_jsonl(&trace, &mut w)?;
            w.flush()?;
            print!("{}", trace.describe());
            trace.check_invariants().map_err(violation)?;
        }
        Command::Report { input, format } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let report: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            emit(&report, &OutputArgs { out: None, format })?;
        }
        Command::CheckGrads { instances, seed, tol } => {
            let r = check_gradients(instances, seed);
            println!("instances                 {}", r.instances);
            println!("bce max relative error    {:.3e}", r.bce_max_rel_error);
            println!("dice max relative error   {:.3e}", r.dice_max_rel_error);
            println!("joint max relative error  {:.3e}", r.joint_max_rel_error);
            println!("uniform CE max abs error  {:.3e}", r.ce_uniform_max_abs_error);
            if !r.passes(tol) {
                return Err(violation(format!("gradient check failed at tolerance {tol:e}")));
            }
            println!("ok");
        }
        Command::Inspect { trace } => {
            let f = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let traces = read_trace_jsonl(BufReader::new(f)).map_err(|e| anyhow!("{}: {e}", trace.display()))?;
            if traces.is_empty() {
                bail!("{} holds no episodes", trace.display());
            }
            let mut failed = Vec::new();
            for t in &traces {
                print!("{}", t.describe());
                if let Err(e) = t.check_invariants() {
                    println!("  VIOLATION: {e}");
                    failed.push(format!("{} seed {}: {e}", t.key(), t.seed));
                }
            }
            if !failed.is_empty() {
                return Err(violation(failed.join("; ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Violation>() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
