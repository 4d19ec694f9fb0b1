//! `framesift` command line: end-to-end runs, dataset evaluation, report
//! export, cost estimates and stage-level debugging over frame manifests.
//!
//! Exit codes: 0 success, 2 configuration error, 3 backend error, 4 data
//! error, 1 anything else (for example an unwritable output path).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use framesift::backends::Backends;
use framesift::config::{BackendConfig, RetrievalFeature, ScoreStrategy};
use framesift::costmodel::{estimate_pipeline, render_table, Baseline, ProfileSet};
use framesift::decompose::decompose_query;
use framesift::error::ErrorClass;
use framesift::eval::{load_dataset, run_eval};
use framesift::manifest::{load_manifest, render_manifest, synthetic_frames, uniform_candidates};
use framesift::pipeline::{run_pipeline, RunReport};
use framesift::report::export;
use framesift::score::{score_frames, ScoreTrace};
use framesift::{Error, PipelineConfig, Query};

#[derive(Parser)]
#[command(name = "framesift", version, about = "Query-aware frame retrieval and video QA over frame manifests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one manifest and write a JSON run report.
    Run(RunArgs),
    /// Run every item of a dataset and summarize accuracy and cost.
    Eval(EvalArgs),
    /// Export plot-ready CSV files from a run report.
    Report(ReportArgs),
    /// Print the analytic compute estimate for a configuration.
    EstimateCost(CostArgs),
    /// Debug: decompose a question into captions.
    Decompose(DecomposeArgs),
    /// Debug: score the frames of a manifest against a question.
    Score(ScoreArgs),
    /// Write a synthetic manifest of `mock:` frames for trying the pipeline.
    Synth(SynthArgs),
}

/// Configuration sources, applied in order: config file, environment, flags.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Backend URL for every model role.
    #[arg(long, env = "FRAMESIFT_BACKEND")]
    backend: Option<String>,
    #[arg(long, env = "FRAMESIFT_TEXT_EMBEDDER")]
    text_embedder: Option<String>,
    #[arg(long, env = "FRAMESIFT_FRAME_EMBEDDER")]
    frame_embedder: Option<String>,
    /// Text generator used for query decomposition.
    #[arg(long, env = "FRAMESIFT_GENERATOR")]
    generator: Option<String>,
    #[arg(long, env = "FRAMESIFT_ANSWERER")]
    answerer: Option<String>,
    #[arg(long, env = "FRAMESIFT_SCORER")]
    scorer: Option<String>,
    /// Reseeds every `mock://` backend.
    #[arg(long)]
    seed: Option<u64>,
    /// Cost-model profile file replacing the shipped profiles.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    n_candidates: Option<usize>,
    #[arg(long)]
    m_prefilter: Option<usize>,
    #[arg(long)]
    m_retrieve: Option<usize>,
    #[arg(long)]
    g_prefilter: Option<usize>,
    #[arg(long)]
    g_retrieve: Option<usize>,
    /// Number of QA views.
    #[arg(long)]
    views: Option<usize>,
    #[arg(long, value_enum)]
    score_strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    retrieval_feature: Option<FeatureArg>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    OneWord,
    TwoWord,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    YesNo,
    TopTokens,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, short)]
    question: String,
    /// Answer option, repeatable; options are lettered A, B, C... in order.
    #[arg(long = "option")]
    options: Vec<String>,
    #[arg(long, default_value = "q")]
    query_id: String,
}

impl QueryArgs {
    fn query(&self) -> Query {
        let q = Query::new(&self.query_id, &self.question);
        if self.options.is_empty() {
            q
        } else {
            q.with_options(&self.options)
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON Lines frame manifest.
    #[arg(long, short)]
    manifest: PathBuf,
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Report path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Leave `generated_at` out of the report.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON Lines dataset of {id, manifest, question, options?, answer}.
    #[arg(long, short)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[command(flatten)]
    config: ConfigArgs,
    /// Summary path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run report written by `framesift run`.
    #[arg(long)]
    run: PathBuf,
    /// Directory receiving frames.csv and cost.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostFormat {
    Table,
    Json,
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: CostFormat,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, short)]
    manifest: PathBuf,
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Score only this many evenly spaced frames.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 256)]
    frames: usize,
    /// Seconds between frames.
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    /// Comma-separated scene descriptions, cycled over the video.
    #[arg(long, value_delimiter = ',')]
    scenes: Vec<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

const DEFAULT_SCENES: &[&str] = &[
    "kitchen table breakfast",
    "dog running park grass",
    "car street traffic",
    "dog catching ball park",
    "sunset beach waves",
    "people talking office",
];

/// An error tagged with the exit code class it maps to.
#[derive(Debug)]
struct Failure {
    class: Option<ErrorClass>,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { class: Some(ErrorClass::Config), message: message.into() }
    }

    fn other(message: impl Into<String>) -> Self {
        Self { class: None, message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        class_code(self.class)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { class: Some(e.class()), message: format!("{}: {e}", e.kind()) }
    }
}

fn class_code(class: Option<ErrorClass>) -> u8 {
    match class {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Backend) => 3,
        Some(ErrorClass::Data) => 4,
        None => 1,
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Rewrites the seed of a `mock://<seed>?<options>` URL, keeping its options.
fn reseed(url: &str, seed: u64) -> String {
    match url.strip_prefix("mock://") {
        Some(rest) => match rest.split_once('?') {
            Some((_, opts)) => format!("mock://{seed}?{opts}"),
            None => format!("mock://{seed}"),
        },
        None => url.to_string(),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::config(format!("reading {}: {e}", path.display())))?;
                PipelineConfig::from_json(&text)
                    .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        self.apply(&mut cfg);
        framesift::config::validate_config(cfg).map_err(|e| Failure::from(Error::from(e)))
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        let b: &mut BackendConfig = &mut cfg.backends;
        if let Some(url) = &self.backend {
            for role in [
                &mut b.text_embedder,
                &mut b.frame_embedder,
                &mut b.generator,
                &mut b.answerer,
                &mut b.scorer,
            ] {
                *role = url.clone();
            }
        }
        for (flag, role) in [
            (&self.text_embedder, &mut b.text_embedder),
            (&self.frame_embedder, &mut b.frame_embedder),
            (&self.generator, &mut b.generator),
            (&self.answerer, &mut b.answerer),
            (&self.scorer, &mut b.scorer),
        ] {
            if let Some(url) = flag {
                *role = url.clone();
            }
        }
        if let Some(seed) = self.seed {
            for role in [
                &mut b.text_embedder,
                &mut b.frame_embedder,
                &mut b.generator,
                &mut b.answerer,
                &mut b.scorer,
            ] {
                *role = reseed(role, seed);
            }
        }
        if let Some(n) = self.max_in_flight {
            b.max_in_flight = n;
        }
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.n_candidates, self.n_candidates);
        set(&mut cfg.m_prefilter, self.m_prefilter);
        set(&mut cfg.m_retrieve, self.m_retrieve);
        set(&mut cfg.g_prefilter, self.g_prefilter);
        set(&mut cfg.g_retrieve, self.g_retrieve);
        set(&mut cfg.n_views, self.views);
        if let Some(s) = self.score_strategy {
            cfg.score_strategy = match s {
                StrategyArg::OneWord => ScoreStrategy::OneWord,
                StrategyArg::TwoWord => ScoreStrategy::TwoWord,
            };
        }
        if let Some(f) = self.retrieval_feature {
            cfg.retrieval_feature = match f {
                FeatureArg::YesNo => RetrievalFeature::YesNo,
                FeatureArg::TopTokens => RetrievalFeature::TopTokens,
            };
        }
    }

    fn profiles(&self) -> CliResult<ProfileSet> {
        match &self.profiles {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::config(format!("reading {}: {e}", path.display())))?;
                ProfileSet::from_json(&text).map_err(Failure::from)
            }
            None => Ok(ProfileSet::builtin()),
        }
    }
}

fn backends(cfg: &PipelineConfig) -> CliResult<Backends> {
    Backends::from_config(&cfg.backends).map_err(|e| Failure::config(format!("backends: {e}")))
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::other(format!("writing {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{}", text.trim_end()) {
                // a closed pipe (`| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Failure::other(format!("writing stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output is serializable")
}

async fn cmd_run(args: RunArgs) -> CliResult {
    let cfg = args.config.resolve()?;
    let profiles = args.config.profiles()?;
    let frames = load_manifest(&args.manifest)?;
    let backends = backends(&cfg)?;
    let mut report = run_pipeline(&backends, frames, &args.query.query(), &cfg, &profiles, &Baseline::default()).await?;
    if !args.no_timestamp {
        report.generated_at = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    write_output(args.out.as_deref(), &report.to_json())?;
    match &report.error {
        None => {
            if let Some(answer) = report.final_answer() {
                log::info!("answer: {answer}");
            }
            Ok(())
        }
        Some(err) => Err(Failure {
            class: Some(err.class),
            message: format!("run incomplete: {:?} stage failed with {}: {}", err.stage, err.kind, err.message),
        }),
    }
}

async fn cmd_eval(args: EvalArgs) -> CliResult {
    let cfg = args.config.resolve()?;
    let profiles = args.config.profiles()?;
    let items = load_dataset(&args.dataset)?;
    let backends = backends(&cfg)?;
    let summary = run_eval(&backends, &items, &cfg, &profiles, &Baseline::default(), args.parallelism).await?;
    log::info!(
        "accuracy {:.4} ({} of {} correct, {} failed)",
        summary.accuracy,
        summary.n_correct,
        summary.n_items,
        summary.n_failed
    );
    write_output(args.out.as_deref(), &to_json(&summary))
}

fn cmd_report(args: ReportArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.run)
        .map_err(|e| Failure::from(Error::Data(format!("reading {}: {e}", args.run.display()))))?;
    let report = RunReport::from_json(&text)?;
    let (frames, cost) = export(&report)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::other(format!("creating {}: {e}", args.out_dir.display())))?;
    write_output(Some(&args.out_dir.join("frames.csv")), &frames)?;
    write_output(Some(&args.out_dir.join("cost.csv")), &cost)
}

fn cmd_estimate_cost(args: CostArgs) -> CliResult {
    let cfg = args.config.resolve()?;
    let profiles = args.config.profiles()?;
    let breakdown = estimate_pipeline(&cfg, &profiles, &Baseline::default())?;
    let text = match args.format {
        CostFormat::Table => render_table(&breakdown),
        CostFormat::Json => to_json(&breakdown),
    };
    write_output(None, &text)
}

async fn cmd_decompose(args: DecomposeArgs) -> CliResult {
    let cfg = args.config.resolve()?;
    let query = args.query.query();
    query.validate()?;
    let backends = backends(&cfg)?;
    let d = decompose_query(backends.generator.as_ref(), &query, cfg.decompose_template.as_deref()).await?;
    write_output(None, &to_json(&d))
}

async fn cmd_score(args: ScoreArgs) -> CliResult {
    let cfg = args.config.resolve()?;
    let query = args.query.query();
    let mut frames = load_manifest(&args.manifest)?;
    if let Some(n) = args.limit {
        frames = uniform_candidates(frames, n.max(1));
    }
    let backends = backends(&cfg)?;
    let template = cfg.score_template.as_deref();
    let scored = score_frames(&backends, &frames, &query, template).await?;
    let template_id = if template.is_some() { "custom" } else { framesift::score::SCORE_TEMPLATE_ID };
    let trace = ScoreTrace::new(&frames, &scored.dists, &scored.errors, cfg.score_strategy, template_id);
    write_output(None, &to_json(&trace))
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    if args.frames == 0 || !(args.spacing.is_finite() && args.spacing > 0.0) {
        return Err(Failure::config("--frames and --spacing must be positive"));
    }
    let scenes: Vec<&str> = if args.scenes.is_empty() {
        DEFAULT_SCENES.to_vec()
    } else {
        args.scenes.iter().map(String::as_str).collect()
    };
    let frames = synthetic_frames(args.frames, &scenes, args.spacing);
    write_output(args.out.as_deref(), &render_manifest(&frames))
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).await,
        Command::Eval(a) => cmd_eval(a).await,
        Command::Report(a) => cmd_report(a),
        Command::EstimateCost(a) => cmd_estimate_cost(a),
        Command::Decompose(a) => cmd_decompose(a).await,
        Command::Score(a) => cmd_score(a).await,
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.exit_code())
        }
    }
}
