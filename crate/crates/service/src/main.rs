use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use clap::{Args, Parser, Subcommand};
use interest_core::evaluation::{
    accuracy_trace, mean_trace, synthesize_dataset, Method, SplitConfig, TraceOptions, CSV_HEADER,
};
use interest_core::features::load_features;
use interest_core::saliency::{load_image, occlusion_map, prepare_image, render_overlay};
use interest_core::{Extractor, FeatureStore, FeatureVector, OcclusionConfig};
use interest_service::extract::{
    stub_router, ExtractRequest, HttpExtractor, PixelGridExtractor, StubBackend,
};
use interest_service::http::{router, ScoreRow};
use interest_service::journal::ComparisonLog;
use interest_service::session::{compute_snapshot, Session, SessionConfig, StoryboardMethod};
use interest_service::ServiceError;

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Parser)]
#[command(
    name = "interest",
    version,
    about = "Learn and use an operator's image-interest scores"
)]
struct Cli {
    /// Directory holding features.jsonl, comparisons.jsonl and skips.jsonl.
    #[arg(long, global = true, env = "INTEREST_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a feature file from an image directory or validate an existing one.
    IngestFeatures(IngestArgs),
    /// Fit EP and the GP smoother on the comparison log and print scores.
    Rank(ModelArgs),
    /// Accuracy-versus-budget traces on synthetic data, as CSV.
    EvalTrace(EvalArgs),
    /// Storyboard manifest as JSON on standard output.
    Storyboard(StoryboardArgs),
    /// Occlusion saliency map and overlay for one image.
    Saliency(SaliencyArgs),
    /// Run the comparison-collection HTTP service.
    Serve(ServeArgs),
    /// Serve /extract with the pixel-grid stand-in extractor.
    StubExtractor(StubArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// Also write the result to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractorArgs {
    /// Base URL of an /extract endpoint.
    #[arg(long, env = "INTEREST_EXTRACTOR_URL")]
    extractor: Option<String>,
    /// Use the built-in pixel-grid extractor instead of an endpoint.
    #[arg(long, conflicts_with = "extractor")]
    stub: bool,
}

impl ExtractorArgs {
    fn build(&self) -> Option<Box<dyn Extractor + Send>> {
        if self.stub {
            Some(Box::new(PixelGridExtractor::default()))
        } else {
            self.extractor
                .as_ref()
                .map(|url| Box::new(HttpExtractor::new(url.clone())) as Box<dyn Extractor + Send>)
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Existing feature file (JSON lines or binary header) to validate and rewrite.
    #[arg(long, conflicts_with = "images")]
    input: Option<PathBuf>,
    /// Directory of images, taken in file-name order as capture order.
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    extractor: ExtractorArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 500)]
    images: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 4000)]
    comparisons: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "100,250,500,1000,2000,3000"
    )]
    budgets: Vec<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON file for the per-seed and mean traces.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct StoryboardArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 24)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    min_sep: usize,
    #[arg(long, default_value = "interest")]
    method: String,
}

#[derive(Args)]
struct SaliencyArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    extractor: ExtractorArgs,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 16)]
    window: u32,
    #[arg(long, default_value_t = 16)]
    stride: u32,
    #[arg(long, default_value = "overlay.png")]
    out: PathBuf,
    #[arg(long)]
    grid_out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "INTEREST_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    skips: Option<PathBuf>,
    #[command(flatten)]
    extractor: ExtractorArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recompute after every this many judgments; 0 disables.
    #[arg(long, default_value_t = 25)]
    auto_every: usize,
}

#[derive(Args)]
struct StubArgs {
    #[arg(long, default_value_t = 8090)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Feature file answering requests that name an id or path.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    grid: u32,
}

struct Paths {
    data_dir: PathBuf,
}

impl Paths {
    fn features(&self, given: &Option<PathBuf>) -> PathBuf {
        given
            .clone()
            .unwrap_or_else(|| self.data_dir.join("features.jsonl"))
    }

    fn log(&self, given: &Option<PathBuf>) -> PathBuf {
        given
            .clone()
            .unwrap_or_else(|| self.data_dir.join("comparisons.jsonl"))
    }

    fn skips(&self, given: &Option<PathBuf>) -> PathBuf {
        given
            .clone()
            .unwrap_or_else(|| self.data_dir.join("skips.jsonl"))
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> CliResult {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn load_model_inputs(
    paths: &Paths,
    args: &InputArgs,
) -> CliResult<(FeatureStore, Vec<interest_core::Comparison>)> {
    let store: FeatureStore = load_features(paths.features(&args.features))?;
    let log = ComparisonLog::open(paths.log(&args.log))?;
    Ok((store, log.entries().to_vec()))
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn ingest(paths: &Paths, args: &IngestArgs) -> CliResult {
    let out = paths.features(&args.out);
    let store: FeatureStore = match (&args.input, &args.images) {
        (Some(input), _) => load_features(input)?,
        (None, Some(dir)) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|p| p.is_file() && is_image(p));
            files.sort();
            if files.is_empty() {
                return Err(format!("no png or jpeg images in {}", dir.display()).into());
            }
            let out_dir = out
                .parent()
                .map(|p| {
                    if p.as_os_str().is_empty() {
                        Path::new(".")
                    } else {
                        p
                    }
                })
                .unwrap_or(Path::new("."));
            std::fs::create_dir_all(out_dir)?;
            let out_dir = out_dir.canonicalize()?;
            let http = args
                .extractor
                .extractor
                .as_ref()
                .map(|url| HttpExtractor::new(url.clone()));
            if http.is_none() && !args.extractor.stub {
                return Err("give --extractor <url> or --stub".into());
            }
            let local = PixelGridExtractor::default();
            let mut records = Vec::with_capacity(files.len());
            for file in &files {
                let id = file
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                let features = match &http {
                    Some(client) => {
                        let request = ExtractRequest {
                            id: id.clone(),
                            image_bytes: Some(STANDARD.encode(std::fs::read(file)?)),
                            image_path: None,
                        };
                        client
                            .request(&request)
                            .map_err(ServiceError::Transport)?
                            .features
                    }
                    None => local
                        .extract(&load_image(file)?.to_rgb8())
                        .map_err(ServiceError::Transport)?,
                };
                let absolute = file.canonicalize()?;
                let image_path = absolute
                    .strip_prefix(&out_dir)
                    .unwrap_or(&absolute)
                    .to_string_lossy()
                    .into_owned();
                records.push(FeatureVector {
                    image_id: id,
                    image_path,
                    features,
                });
            }
            FeatureStore::from_records(records)?
        }
        (None, None) => return Err("give --input <file> or --images <dir>".into()),
    };
    store.write_jsonl(&out)?;
    eprintln!(
        "wrote {} records of dimension {} to {}",
        store.len(),
        store.dim().unwrap_or(0),
        out.display()
    );
    Ok(())
}

fn rank(paths: &Paths, args: &ModelArgs) -> CliResult {
    let (store, comparisons) = load_model_inputs(paths, &args.inputs)?;
    let snapshot = compute_snapshot(&store, &comparisons, &SessionConfig::default())?;
    if !snapshot.ep_converged {
        eprintln!(
            "warning: EP did not converge in {} sweeps",
            snapshot.ep_iterations
        );
    }
    let p = &snapshot.scores;
    let rows: Vec<ScoreRow> = (0..p.len())
        .map(|k| ScoreRow {
            id: p.ids[k].clone(),
            mean: p.means[k],
            variance: p.variances[k],
        })
        .collect();
    if let Some(out) = &args.out {
        write_json(out, &rows)?;
    }
    print_json(&rows)
}

fn eval_trace(args: &EvalArgs) -> CliResult {
    let options = TraceOptions::default();
    let mut traces = Vec::with_capacity(args.seeds.len());
    for &seed in &args.seeds {
        let dataset =
            synthesize_dataset(args.images, args.dim, args.comparisons, args.noise, seed)?;
        let split = SplitConfig {
            train_fraction: args.train_fraction,
            seed,
        };
        traces.push(accuracy_trace(
            &dataset,
            &split,
            &args.budgets,
            &Method::ALL,
            &options,
        )?);
    }
    let mut csv: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(csv, "{CSV_HEADER}")?;
    for trace in &traces {
        trace.write_csv_rows(&mut csv)?;
    }
    csv.flush()?;
    if let Some(path) = &args.summary {
        let mean = mean_trace(&traces)?;
        write_json(
            path,
            &serde_json::json!({
                "images": args.images,
                "dim": args.dim,
                "comparisons": args.comparisons,
                "noise_std": args.noise,
                "train_fraction": args.train_fraction,
                "seeds": args.seeds,
                "budgets": mean.budgets,
                "mean": mean.series,
                "per_seed": traces,
            }),
        )?;
    }
    Ok(())
}

fn storyboard(paths: &Paths, args: &StoryboardArgs) -> CliResult {
    let method: StoryboardMethod = args.method.parse()?;
    let features = paths.features(&args.model.inputs.features);
    let store: FeatureStore = load_features(&features)?;
    let session = Session::open(
        store,
        paths.log(&args.model.inputs.log),
        paths.skips(&None),
        SessionConfig::default(),
    )?;
    if method == StoryboardMethod::Interest || !session.comparisons().is_empty() {
        session.recompute()?;
    }
    let entries = session.storyboard(args.n, args.min_sep, method)?;
    if entries.len() < args.n {
        eprintln!(
            "note: only {} images satisfy the spacing constraint (asked for {})",
            entries.len(),
            args.n
        );
    }
    if let Some(out) = &args.model.out {
        write_json(out, &entries)?;
    }
    print_json(&entries)
}

fn saliency(paths: &Paths, args: &SaliencyArgs) -> CliResult {
    let (store, comparisons) = load_model_inputs(paths, &args.inputs)?;
    let extractor = args
        .extractor
        .build()
        .ok_or("give --extractor <url> or --stub for the occlusion sweep")?;
    let snapshot = compute_snapshot(&store, &comparisons, &SessionConfig::default())?;
    let cfg = OcclusionConfig {
        window_px: args.window,
        stride_px: args.stride,
        ..OcclusionConfig::default()
    };
    let image = load_image(&args.image)?;
    let map = occlusion_map(&image, extractor.as_ref(), &snapshot.model, &cfg)?;
    let overlay = render_overlay(&map, &prepare_image(&image, &cfg))?;
    overlay.save(&args.out)?;
    if let Some(grid_out) = &args.grid_out {
        write_json(grid_out, &map)?;
    }
    eprintln!(
        "{}x{} map, base interest {:.4}, overlay written to {}",
        map.rows,
        map.cols,
        map.base_interest,
        args.out.display()
    );
    Ok(())
}

async fn bind(host: &str, port: u16) -> CliResult<tokio::net::TcpListener> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    let addr: SocketAddr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    Ok(listener)
}

async fn serve(paths: &Paths, args: &ServeArgs) -> CliResult {
    let store: FeatureStore = load_features(paths.features(&args.features))?;
    let config = SessionConfig {
        rng_seed: args.seed,
        auto_recompute_every: (args.auto_every > 0).then_some(args.auto_every),
        ..SessionConfig::default()
    };
    let mut session = Session::open(
        store,
        paths.log(&args.log),
        paths.skips(&args.skips),
        config,
    )?;
    if let Some(extractor) = args.extractor.build() {
        session = session.with_extractor(extractor);
    }
    let session = Arc::new(session);
    if !session.comparisons().is_empty() {
        session.spawn_recompute();
    }
    let listener = bind(&args.host, args.port).await?;
    axum::serve(listener, router(session)).await?;
    Ok(())
}

async fn stub_extractor(args: &StubArgs) -> CliResult {
    let stored = match &args.features {
        Some(path) => Some(load_features(path)?),
        None => None,
    };
    let backend = StubBackend {
        stored,
        extractor: Arc::new(PixelGridExtractor { grid: args.grid }),
    };
    let listener = bind(&args.host, args.port).await?;
    axum::serve(listener, stub_router(backend)).await?;
    Ok(())
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let paths = Paths {
        data_dir: cli.data_dir,
    };
    let outcome = match &cli.command {
        Command::IngestFeatures(args) => ingest(&paths, args),
        Command::Rank(args) => rank(&paths, args),
        Command::EvalTrace(args) => eval_trace(args),
        Command::Storyboard(args) => storyboard(&paths, args),
        Command::Saliency(args) => saliency(&paths, args),
        Command::Serve(args) => serve(&paths, args).await,
        Command::StubExtractor(args) => stub_extractor(args).await,
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
