//! difet: bundle management, local and distributed feature extraction, and a
//! scalability benchmark harness.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use difet_core::bundle::{bundle_create, Bundle};
use difet_core::engine::{
    run_job, Algorithm, JobReport, JobSpec, LocalRunner, TaskOutcome,
};
use difet_core::featio;
use difet_core::netproto::{CoordinatorConfig, CoordinatorServer, WorkerConfig, DEFAULT_PORT};
use difet_core::params::{apply_config, apply_override, DescriptorParams, DetectorParams};
use difet_core::synth;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(name = "difet", version, about = "Distributed image feature extraction tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Manage image bundles (FIB files)
    Bundle {
        #[command(subcommand)]
        action: BundleAction,
    },
    /// Extract features from a bundle with the local thread backend
    Extract(ExtractArgs),
    /// Serve a job to remote workers over TCP
    Coordinator(CoordinatorArgs),
    /// Connect to a coordinator and execute tasks until shutdown
    Worker(WorkerArgs),
    /// Run the scalability benchmark matrix and emit bench.csv
    Bench(BenchArgs),
    /// Generate a seeded synthetic image corpus
    Gen(GenArgs),
}

#[derive(Subcommand)]
enum BundleAction {
    /// Pack a directory of PGM/PPM/PNG files into a bundle
    Create {
        /// Directory of source images (packed in filename order)
        dir: PathBuf,
        /// Output bundle path
        #[arg(short, long)]
        out: PathBuf,
    },
    /// List bundle entries
    List { bundle: PathBuf },
    /// Extract one entry's original bytes to a file
    Fetch {
        bundle: PathBuf,
        index: u32,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AlgorithmArgs {
    /// Extraction algorithm
    #[arg(long, value_parser = parse_algorithm)]
    alg: Algorithm,
    /// key=value parameter file
    #[arg(long)]
    params_file: Option<PathBuf>,
    /// Individual parameter overrides, e.g. --set harris_k=0.06
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct ExtractArgs {
    bundle: PathBuf,
    #[command(flatten)]
    alg: AlgorithmArgs,
    /// Output directory for .kp files and report.csv
    #[arg(long)]
    out: PathBuf,
    /// Concurrent local tasks
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Also write <index>.overlay.ppm renderings of the keypoints
    #[arg(long)]
    overlay: bool,
}

#[derive(Args)]
struct CoordinatorArgs {
    bundle: PathBuf,
    #[command(flatten)]
    alg: AlgorithmArgs,
    #[arg(long)]
    out: PathBuf,
    /// Listen address
    #[arg(long, default_value = "0.0.0.0")]
    bind: String,
    /// Listen port (0 picks a free port); DIFET_PORT overrides the default
    #[arg(long)]
    port: Option<u16>,
    /// Wait for this many workers before assigning tasks
    #[arg(long, default_value_t = 1)]
    expected_workers: usize,
    /// Seconds before an in-flight task is requeued
    #[arg(long, default_value_t = 30)]
    task_deadline_secs: u64,
    /// Expected worker heartbeat cadence, seconds
    #[arg(long, default_value_t = 5)]
    heartbeat_secs: u64,
}

#[derive(Args)]
struct WorkerArgs {
    /// Coordinator address, host:port
    #[arg(long)]
    connect: String,
    /// Heartbeat cadence, seconds
    #[arg(long, default_value_t = 5)]
    heartbeat_secs: u64,
}

#[derive(Args)]
struct BenchArgs {
    bundle: PathBuf,
    /// Comma-separated algorithms, e.g. harris,orb
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm, required = true)]
    algs: Vec<Algorithm>,
    /// Comma-separated parallelism levels, e.g. 1,2,4
    #[arg(long, value_delimiter = ',', required = true)]
    workers_list: Vec<usize>,
    /// Runs per (algorithm, workers) cell; wall time is the median
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    /// Output directory for bench.csv and bench.md
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: u32,
    /// Image dimensions as WxH
    #[arg(long, default_value = "1024x1024", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::from_str(s).ok_or_else(|| {
        format!(
            "unknown algorithm {s:?} (expected one of {})",
            Algorithm::ALL.map(|a| a.as_str()).join(", ")
        )
    })
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be >= 1".into());
    }
    Ok((w, h))
}

fn resolve_params(args: &AlgorithmArgs) -> Result<(DetectorParams, DescriptorParams)> {
    let mut det = DetectorParams::defaults_for(args.alg);
    let mut desc = DescriptorParams::default();
    if let Some(path) = &args.params_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading params file {}", path.display()))?;
        apply_config(&text, &mut det, &mut desc)
            .with_context(|| format!("params file {}", path.display()))?;
    }
    for kv in &args.sets {
        let (key, value) =
            kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        apply_override(key.trim(), value.trim(), &mut det, &mut desc)?;
    }
    Ok((det, desc))
}

fn write_outputs(
    bundle: &Bundle,
    spec: &JobSpec,
    outcomes: &[TaskOutcome],
    report: &JobReport,
    out_dir: &Path,
    overlay: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    for outcome in outcomes {
        match &outcome.outcome {
            Ok(result) => {
                featio::write_result(result, spec, out_dir)?;
                if overlay {
                    let img = bundle.fetch(outcome.entry_index)?;
                    let rendered = featio::render_overlay(&img, &result.keypoints);
                    let path = out_dir.join(format!("{:06}.overlay.ppm", outcome.entry_index));
                    std::fs::write(&path, difet_core::codec::encode_ppm(&rendered))
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
            Err(reason) => {
                eprintln!("entry {} failed: {reason}", outcome.entry_index);
            }
        }
    }
    let csv = format!(
        "algorithm,n_images,workers,wall_seconds,total_features\n{},{},{},{:.3},{}\n",
        report.algorithm.as_str(),
        report.per_entry.len(),
        report.worker_count,
        report.wall_seconds,
        report.total_features
    );
    std::fs::write(out_dir.join("report.csv"), csv).context("writing report.csv")?;
    Ok(())
}

fn cmd_bundle(action: BundleAction) -> Result<()> {
    match action {
        BundleAction::Create { dir, out } => {
            let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.is_file()
                        && matches!(
                            p.extension().and_then(|e| e.to_str()),
                            Some("pgm" | "ppm" | "png")
                        )
                })
                .collect();
            names.sort();
            let mut sources = Vec::with_capacity(names.len());
            for path in names {
                let name = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .ok_or_else(|| anyhow!("non-UTF-8 file name under {}", dir.display()))?
                    .to_string();
                let bytes =
                    std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                sources.push((name, bytes));
            }
            bundle_create(&out, &sources)?;
            println!("wrote {} with {} entries", out.display(), sources.len());
        }
        BundleAction::List { bundle } => {
            let bundle = Bundle::open(&bundle)?;
            for e in bundle.entries() {
                println!(
                    "{} {} {}x{} {} {} {}",
                    e.index,
                    e.name,
                    e.width,
                    e.height,
                    e.channels,
                    e.format.name(),
                    e.payload_length
                );
            }
        }
        BundleAction::Fetch { bundle, index, out } => {
            let bundle = Bundle::open(&bundle)?;
            let (_, bytes) = bundle.read_payload(index)?;
            std::fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let bundle = Bundle::open(&args.bundle)?;
    let (det, desc) = resolve_params(&args.alg)?;
    let spec = JobSpec::new(&bundle, args.alg.alg, det, desc, args.out.clone())?;
    let runner = LocalRunner { parallelism: args.parallelism };
    let (outcomes, report) = run_job(&bundle, &spec, &runner)?;
    write_outputs(&bundle, &spec, &outcomes, &report, &args.out, args.overlay)?;
    println!(
        "{}: {} entries, {} features, {:.3}s",
        report.algorithm.as_str(),
        report.per_entry.len(),
        report.total_features,
        report.wall_seconds
    );
    Ok(())
}

fn env_port() -> Option<u16> {
    std::env::var("DIFET_PORT").ok().and_then(|v| v.parse().ok())
}

fn cmd_coordinator(args: CoordinatorArgs) -> Result<()> {
    let bundle = Bundle::open(&args.bundle)?;
    let (det, desc) = resolve_params(&args.alg)?;
    let spec = JobSpec::new(&bundle, args.alg.alg, det, desc, args.out.clone())?;
    let port = args.port.or_else(env_port).unwrap_or(DEFAULT_PORT);
    let cfg = CoordinatorConfig {
        bind: format!("{}:{}", args.bind, port),
        expected_workers: args.expected_workers,
        task_deadline: Duration::from_secs(args.task_deadline_secs),
        heartbeat_interval: Duration::from_secs(args.heartbeat_secs),
        missed_heartbeats: 3,
    };
    let server = CoordinatorServer::bind(cfg)?;
    // parseable by scripts that started us with port 0
    println!("listening on {}", server.local_addr());
    use std::io::Write;
    std::io::stdout().flush().ok();
    let (outcomes, report) = run_job(&bundle, &spec, &server)?;
    write_outputs(&bundle, &spec, &outcomes, &report, &args.out, false)?;
    println!(
        "{}: {} entries, {} features, {:.3}s across {} workers",
        report.algorithm.as_str(),
        report.per_entry.len(),
        report.total_features,
        report.wall_seconds,
        report.worker_count
    );
    Ok(())
}

fn cmd_worker(args: WorkerArgs) -> Result<()> {
    let mut cfg = WorkerConfig::new(args.connect.clone());
    cfg.heartbeat_interval = Duration::from_secs(args.heartbeat_secs);
    let executed = difet_core::netproto::run_worker(&cfg)
        .map_err(|e| anyhow!("worker failed: {e}"))?;
    println!("worker done, {executed} tasks executed");
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.repeat == 0 {
        bail!("--repeat must be >= 1");
    }
    let bundle = Bundle::open(&args.bundle)?;
    let n_images = bundle.entry_count();
    std::fs::create_dir_all(&args.out)?;

    struct Row {
        alg: Algorithm,
        workers: usize,
        wall: f64,
        total: u64,
    }
    let mut rows: Vec<Row> = Vec::new();
    for &alg in &args.algs {
        for &workers in &args.workers_list {
            let det = DetectorParams::defaults_for(alg);
            let desc = DescriptorParams::default();
            let spec = JobSpec::new(&bundle, alg, det, desc, args.out.clone())?;
            let mut walls = Vec::with_capacity(args.repeat);
            let mut total = 0u64;
            for _ in 0..args.repeat {
                let runner = LocalRunner { parallelism: workers };
                let (_, report) = run_job(&bundle, &spec, &runner)?;
                walls.push(report.wall_seconds);
                total = report.total_features;
            }
            let wall = median(walls);
            eprintln!("{} workers={workers}: {:.3}s, {} features", alg.as_str(), wall, total);
            rows.push(Row { alg, workers, wall, total });
        }
    }

    let mut csv = format!("# wall_seconds = median of {} runs\n", args.repeat);
    csv.push_str("algorithm,n_images,workers,wall_seconds,total_features\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.3},{}\n",
            r.alg.as_str(),
            n_images,
            r.workers,
            r.wall,
            r.total
        ));
    }
    std::fs::write(args.out.join("bench.csv"), &csv).context("writing bench.csv")?;

    // markdown mirror: running times and feature counts per algorithm
    let mut md = String::from("# Benchmark results\n\n## Running times (median seconds)\n\n");
    md.push_str("| algorithm |");
    for w in &args.workers_list {
        md.push_str(&format!(" workers={w} |"));
    }
    md.push('\n');
    md.push_str("|---|");
    for _ in &args.workers_list {
        md.push_str("---|");
    }
    md.push('\n');
    for &alg in &args.algs {
        md.push_str(&format!("| {} |", alg.as_str()));
        for &w in &args.workers_list {
            let cell = rows
                .iter()
                .find(|r| r.alg == alg && r.workers == w)
                .map_or(String::from("-"), |r| format!("{:.3}", r.wall));
            md.push_str(&format!(" {cell} |"));
        }
        md.push('\n');
    }
    md.push_str(&format!(
        "\n## Feature counts (N={n_images})\n\n| algorithm | total features |\n|---|---|\n"
    ));
    for &alg in &args.algs {
        if let Some(r) = rows.iter().find(|r| r.alg == alg) {
            md.push_str(&format!("| {} | {} |\n", alg.as_str(), r.total));
        }
    }
    std::fs::write(args.out.join("bench.md"), md).context("writing bench.md")?;
    println!(
        "wrote {} and {}",
        args.out.join("bench.csv").display(),
        args.out.join("bench.md").display()
    );
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let (w, h) = args.size;
    let paths = synth::generate_corpus(&args.out, args.count, w, h, args.seed)
        .with_context(|| format!("writing corpus under {}", args.out.display()))?;
    println!("wrote {} images to {}", paths.len(), args.out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bundle { action } => cmd_bundle(action),
        Command::Extract(args) => cmd_extract(args),
        Command::Coordinator(args) => cmd_coordinator(args),
        Command::Worker(args) => cmd_worker(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gen(args) => cmd_gen(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
