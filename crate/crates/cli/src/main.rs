use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tourney_core::config::{validate_run_config, BackendKind, ConfigFile, RunConfig};
use tourney_core::llm::RetryPolicy;
use tourney_core::pipeline::{
    self, backend_fingerprint, backend_label, build_backend, default_run_id, open_run, run_stage, run_through, Context, PipelineError,
    Stage, SweepParam,
};
use tourney_core::problem::{load_contest, ProblemPack};
use tourney_core::sandbox::Sandbox;

#[derive(Parser)]
#[command(name = "tourney", version, about = "Generate, cluster, rank and submit candidate programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline (all stages, or up to and including --stage).
    Run(RunArgs),
    /// Re-evaluate a finished run while varying one parameter.
    Sweep(SweepArgs),
    /// Print the report of a finished run.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Live,
    Mock,
}

#[derive(Args)]
struct Common {
    /// Problem directory, or a directory of problem directories.
    #[arg(long)]
    pack: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Selection strategy, e.g. gencluster, random, longest, cluster_size.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    scratch_dir: Option<PathBuf>,
    #[arg(long)]
    stdout_cap_bytes: Option<usize>,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Defaults to a digest of the packs and run configuration.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Stop after this stage.
    #[arg(long)]
    stage: Option<Stage>,
    /// Recompute the last requested stage even if it is done.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// One of k, g_n, num_tests.
    #[arg(long)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<u32>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run: String,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
}

struct Setup {
    packs: Vec<ProblemPack>,
    config: RunConfig,
    file: ConfigFile,
    sandbox: Sandbox,
}

fn setup(c: &Common) -> Result<Setup> {
    let mut file = ConfigFile::load(&c.config)?;
    if let Some(seed) = c.seed {
        file.run.rng_seed = Some(seed);
    }
    if let Some(name) = &c.strategy {
        file.run.strategy = Some(name.clone());
    }
    if let Some(b) = c.backend {
        file.backend.kind = match b {
            BackendArg::Live => BackendKind::Live,
            BackendArg::Mock => BackendKind::Mock,
        };
    }
    if let Some(p) = &c.mock_script {
        file.backend.mock_script = Some(p.clone());
    }
    if let Some(w) = c.workers {
        file.sandbox.workers = w;
    }
    if let Some(d) = &c.scratch_dir {
        file.sandbox.scratch_dir = Some(d.clone());
    }
    if let Some(cap) = c.stdout_cap_bytes {
        file.sandbox.stdout_cap_bytes = cap;
    }
    let config = validate_run_config(file.run.clone())?;
    let packs = load_contest(&c.pack)?;
    let sandbox = Sandbox::new(&file.sandbox)?;
    Ok(Setup {
        packs,
        config,
        file,
        sandbox,
    })
}

fn with_context<T>(
    c: &Common,
    f: impl FnOnce(&Context<'_>, &mut pipeline::RunManifest) -> Result<T, PipelineError>,
) -> Result<T> {
    let s = setup(c)?;
    let backend = build_backend(&s.file.backend)?;
    let run_id = c.run_id.clone().unwrap_or_else(|| default_run_id(&s.packs, &s.config, &backend_fingerprint(&s.file.backend)));
    let (run_dir, mut manifest) = open_run(
        &c.runs_dir,
        &run_id,
        &c.pack.display().to_string(),
        &s.config,
        &backend_label(&s.file.backend),
    )?;
    let ctx = Context {
        run_dir,
        packs: &s.packs,
        backend: backend.as_ref(),
        sandbox: &s.sandbox,
        retry: RetryPolicy {
            max_attempts: s.file.backend.max_attempts,
            ..RetryPolicy::default()
        },
    };
    log::info!("run {run_id} in {}", ctx.run_dir.display());
    Ok(f(&ctx, &mut manifest)?)
}

fn report_path(runs_dir: &Path, run: &str) -> PathBuf {
    runs_dir.join(run).join("report.txt")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<PipelineError>().and_then(|p| p.stage()) {
                Some(stage) => eprintln!("error in stage {stage}: {e:#}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => with_context(&args.common, |ctx, m| {
            match args.stage {
                Some(stage) if args.force => run_stage(ctx, m, stage, true)?,
                Some(stage) => run_through(ctx, m, stage, false)?,
                None => run_through(ctx, m, Stage::Report, args.force)?,
            }
            if m.status(Stage::Report) == pipeline::StageStatus::Done {
                if let Ok(text) = std::fs::read_to_string(ctx.run_dir.join("report.txt")) {
                    print!("{text}");
                }
            }
            println!("run {} in {}", m.run_id, ctx.run_dir.display());
            Ok(())
        }),
        Command::Sweep(args) => with_context(&args.common, |ctx, m| {
            let rows = pipeline::sweep(ctx, m, args.param, &args.values)?;
            println!("{}\ttotal\tscore_at_k\tavg_clusters\tavg_f1", args.param);
            for r in rows {
                println!(
                    "{}\t{:.2}\t{}\t{:.2}\t{:.4}",
                    r.value,
                    r.total,
                    r.score_at_k.map_or("-".into(), |s| format!("{s:.2}")),
                    r.avg_clusters,
                    r.avg_f1
                );
            }
            Ok(())
        }),
        Command::Report(args) => {
            let path = report_path(&args.runs_dir, &args.run);
            if !path.is_file() {
                bail!("run {} has no report yet (run the report stage first)", args.run);
            }
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            print!("{text}");
            Ok(())
        }
    }
}
