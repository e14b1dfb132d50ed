use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use gae_cluster::analysis::{self, TheoremReport};
use gae_cluster::clustering::Backend;
use gae_cluster::config::RunConfig;
use gae_cluster::gae::Optimizer;
use gae_cluster::graph_kernel::{build_distribution, pairwise_sq_distances, symmetrize};
use gae_cluster::io::{self, DataFormat};
use gae_cluster::synthetic::{self, Generator, SyntheticSpec};
use gae_cluster::trainer::{self, KMax};
use gae_cluster::{metrics, Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gae-cluster", version, about = "Adaptive graph auto-encoder clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write assignments, metrics and traces.
    Cluster(ClusterArgs),
    /// Write a sparse graph as an `i,j,weight` edge list.
    Graph(GraphArgs),
    /// Run the numerical theorem checks and print JSON reports.
    Verify(VerifyArgs),
    /// Write a synthetic dataset and its labels.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Idx,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DataFormat::CsvDense,
            FormatArg::Idx => DataFormat::IdxImages,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Spectral,
    Kmeans,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Spectral => Backend::Spectral,
            BackendArg::Kmeans => Backend::Kmeans,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Gd,
    Adam,
}

impl From<OptimizerArg> for Optimizer {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Gd => Optimizer::Gd,
            OptimizerArg::Adam => Optimizer::Adam,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// One integer label per line; enables ACC and NMI in metrics.json.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of clusters.
    #[arg(short = 'c', long)]
    clusters: Option<usize>,
    /// Named hyperparameter preset.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    k0: Option<usize>,
    /// `n_over_c`, `n_over_2c` or an integer.
    #[arg(long)]
    k_max: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Encoder widths, e.g. `256,64`.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Keep the first graph for every epoch.
    #[arg(long)]
    freeze_graph: bool,
    /// Rebuild the graph every epoch but keep k = k0.
    #[arg(long)]
    freeze_k: bool,
    /// Drop the smoothness term.
    #[arg(long)]
    lambda_zero: bool,
    #[arg(long)]
    precision: Option<String>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Directory for the result files (created if missing).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Build the graph once from the raw features at this sparsity instead
    /// of running the pipeline.
    #[arg(short, long)]
    k: Option<usize>,
    /// Edge-list destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    #[value(name = "1")]
    Sparsity,
    #[value(name = "2")]
    Degeneration,
    #[value(name = "3")]
    Entropy,
    #[value(name = "4")]
    Spectrum,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    theorem: TheoremArg,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Problem size; each check has its own default.
    #[arg(long)]
    n: Option<usize>,
    /// Sparsity for the degeneration probe.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Premise tolerance for the degeneration probe.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Blobs,
    Moons,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    generator: GeneratorArg,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(short = 'c', long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature CSV destination.
    #[arg(short, long)]
    output: PathBuf,
    /// Label file destination.
    #[arg(long)]
    labels_output: Option<PathBuf>,
}

fn resolve_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_json(&fs::read_to_string(path)?)?,
        None => {
            let input = args
                .input
                .clone()
                .ok_or_else(|| Error::Config("--input is required without --config".into()))?;
            let clusters = args
                .clusters
                .ok_or_else(|| Error::Config("--clusters is required without --config".into()))?;
            RunConfig::from_json(&json!({"input": input, "clusters": clusters}).to_string())?
        }
    };
    if let Some(v) = &args.input {
        cfg.input = v.clone();
    }
    if let Some(v) = args.clusters {
        cfg.clusters = v;
    }
    if let Some(v) = args.format {
        cfg.format = v.into();
    }
    if args.labels.is_some() {
        cfg.labels = args.labels.clone();
    }
    if args.profile.is_some() {
        cfg.profile = args.profile.clone();
    }
    if let Some(v) = &args.k_max {
        cfg.k_max = Some(v.parse::<KMax>()?);
    }
    if let Some(v) = args.optimizer {
        cfg.optimizer = Some(v.into());
    }
    if let Some(v) = args.backend {
        cfg.backend = Some(v.into());
    }
    if args.layers.is_some() {
        cfg.layer_dims = args.layers.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.precision {
        cfg.precision = v.clone();
    }
    cfg.k0 = args.k0.or(cfg.k0);
    cfg.lambda = args.lambda.or(cfg.lambda);
    cfg.lr = args.lr.or(cfg.lr);
    cfg.epochs = args.epochs.or(cfg.epochs);
    cfg.inner_iters = args.inner_iters.or(cfg.inner_iters);
    cfg.tol = args.tol.or(cfg.tol);
    cfg.freeze_graph |= args.freeze_graph;
    cfg.freeze_k |= args.freeze_k;
    cfg.lambda_zero |= args.lambda_zero;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    io::write_atomic(path, contents.as_bytes())
}

fn stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn cluster(args: &ClusterArgs) -> Result<()> {
    let cfg = resolve_config(&args.train)?;
    let train = cfg.train_config()?;
    let x = io::load_dataset(&cfg.input, cfg.format)?;
    let labels = match &cfg.labels {
        Some(path) => Some(io::load_labels(path, x.n_samples())?),
        None => None,
    };
    let out_dir = args
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;
    let run = trainer::run(&x, cfg.clusters, &train)?;

    write(&out_dir.join("assignments.csv"), &io::format_labels(&run.clustering.labels))?;
    write(&out_dir.join("embedding.csv"), &io::format_matrix_csv(run.embedding.view()))?;
    let mut trace = String::from("iteration,epoch,loss\n");
    let mut iteration = 0;
    for record in &run.epochs {
        for loss in &run.loss_trace[iteration..iteration + record.iterations] {
            trace.push_str(&format!("{iteration},{},{loss}\n", record.epoch));
            iteration += 1;
        }
    }
    write(&out_dir.join("loss_trace.csv"), &trace)?;
    write(&out_dir.join("epoch_trace.jsonl"), &io::format_json_lines(&run.epochs)?)?;

    let mut report = json!({
        "backend": train.backend,
        "seed": train.seed,
        "clusters": cfg.clusters,
        "occupied": run.clustering.occupied,
        "config": {"run": cfg, "resolved": train},
    });
    if let Some(truth) = &labels {
        report["acc"] = json!(metrics::accuracy(truth, &run.clustering.labels)?);
        report["nmi"] = json!(metrics::nmi(truth, &run.clustering.labels)?);
    }
    write(&out_dir.join("metrics.json"), &serde_json::to_string_pretty(&report)?)?;
    if let (Some(acc), Some(nmi)) = (report.get("acc"), report.get("nmi")) {
        println!("acc {acc} nmi {nmi}");
    }
    Ok(())
}

fn graph(args: &GraphArgs) -> Result<()> {
    let adjacency = match args.k {
        Some(k) => {
            let input = args
                .train
                .input
                .clone()
                .ok_or_else(|| Error::Config("--input is required with -k".into()))?;
            let format = args.train.format.map_or(DataFormat::CsvDense, Into::into);
            let x = io::load_dataset(&input, format)?;
            let n = x.n_samples();
            if k < 2 || k >= n {
                return Err(Error::Config(format!("k = {k} outside [2, {}]", n - 1)));
            }
            symmetrize(&build_distribution(&pairwise_sq_distances(x.view())?, k)?)?.adjacency
        }
        None => {
            let cfg = resolve_config(&args.train)?;
            let x = io::load_dataset(&cfg.input, cfg.format)?;
            trainer::run(&x, cfg.clusters, &cfg.train_config()?)?.graph.adjacency
        }
    };
    let text = io::format_edge_list(&adjacency);
    match &args.output {
        Some(path) => write(path, &text),
        None => stdout(&text),
    }
}

fn verify(args: &VerifyArgs) -> Result<()> {
    let run = |theorem: TheoremArg| -> Result<TheoremReport> {
        match theorem {
            TheoremArg::Sparsity => {
                let n = args.n.unwrap_or(30);
                let ks: Vec<usize> = [2, 5, 10].into_iter().filter(|&k| k < n).collect();
                analysis::verify_sparsity(args.trials, n, &ks, args.seed)
            }
            TheoremArg::Degeneration => {
                analysis::probe_degeneration(args.n.unwrap_or(30), args.k, args.epsilon, args.seed)
            }
            TheoremArg::Entropy => {
                analysis::verify_entropy_equivalence(args.trials, args.n.unwrap_or(20), args.seed)
            }
            TheoremArg::Spectrum => analysis::verify_spectrum(args.trials, args.n.unwrap_or(20), args.seed),
            TheoremArg::All => unreachable!("expanded by the caller"),
        }
    };
    let theorems = match args.theorem {
        TheoremArg::All => vec![
            TheoremArg::Sparsity,
            TheoremArg::Degeneration,
            TheoremArg::Entropy,
            TheoremArg::Spectrum,
        ],
        one => vec![one],
    };
    let reports = theorems.into_iter().map(run).collect::<Result<Vec<_>>>()?;
    let text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        serde_json::to_string_pretty(&reports)?
    };
    match &args.output {
        Some(path) => write(path, &text),
        None => stdout(&format!("{text}\n")),
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        generator: match args.generator {
            GeneratorArg::Blobs => Generator::GaussianBlobs,
            GeneratorArg::Moons => Generator::TwoMoons,
        },
        n: args.n,
        clusters: args.clusters,
        dim: args.dim,
        noise: args.noise,
        seed: args.seed,
    };
    let data = synthetic::generate(&spec)?;
    write(&args.output, &io::format_matrix_csv(data.features.view()))?;
    if let Some(path) = &args.labels_output {
        write(path, &io::format_labels(&data.labels))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Cluster(args) => cluster(args),
        Command::Graph(args) => graph(args),
        Command::Verify(args) => verify(args),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
