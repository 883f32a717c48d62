//! The `pairsift` command line.
//!
//! Exit codes: 0 success, 1 data or verification failure, 2 usage error.
//! Failures print one line to standard error: `error: <category>: <message>`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::embstore::{load_bundle, read_matrix_with, BundlePaths, DatasetBundle, NormCheck, ReadOptions};
use crate::error::{Error, Result};
use crate::pipeline::{
    ablate, default_workers, refine, write_ablation_csv, write_manifest, PipelineConfig, DEFAULT_K, DEFAULT_K_R,
    DEFAULT_TAU,
};
use crate::scoring::{ScorerConfig, ScorerKind};
use crate::selection::{SelectionKind, SelectionStrategy};
use crate::synthbench::{self, diff_manifests, BenchSpec, ORACLE_SCORE_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pairsift", version, about = "Refine synthetic image-caption datasets")]
struct Cli {
    /// Increase log detail on standard error (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select, score, reassign and prune; writes a manifest and its stats.
    Refine(RefineArgs),
    /// Run a grid of configurations and write a CSV report.
    Ablate(AblateArgs),
    /// Generate a planted benchmark bundle.
    Bench(BenchArgs),
    /// Print a JSON summary of an embedding file.
    Inspect(InspectArgs),
    /// Compare the engine against the brute-force reference on a small bundle.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
struct BundleArgs {
    /// Caption corpus (JSON lines with "id" and "text").
    #[arg(long)]
    captions: PathBuf,
    /// VLM text embeddings (SYNCEMB1).
    #[arg(long)]
    text_vlm: PathBuf,
    /// VLM image embeddings (SYNCEMB1).
    #[arg(long)]
    image_vlm: PathBuf,
    /// Sentence embeddings of the captions (SYNCEMB1).
    #[arg(long)]
    text_sent: PathBuf,
}

impl BundleArgs {
    fn load(&self) -> Result<DatasetBundle> {
        load_bundle(&BundlePaths {
            corpus: self.captions.clone(),
            text_vlm: self.text_vlm.clone(),
            image_vlm: self.image_vlm.clone(),
            text_sent: self.text_sent.clone(),
        })
    }
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Candidate selection strategy: one, t2i, t2t, i2t, i2i.
    #[arg(long, default_value = "t2i", value_parser = parse_strategy)]
    strategy: SelectionKind,
    /// Alignment scorer: cos, ret.
    #[arg(long, default_value = "ret", value_parser = parse_scorer)]
    scorer: ScorerKind,
    /// Candidates per caption.
    #[arg(short = 'K', long = "K", default_value_t = DEFAULT_K, value_parser = parse_positive)]
    k: usize,
    /// Captions retrieved per candidate image by the ret scorer.
    #[arg(long = "kr", default_value_t = DEFAULT_K_R, value_parser = parse_positive)]
    k_r: usize,
    /// Preserving ratio in [0, 1].
    #[arg(long, default_value_t = DEFAULT_TAU, value_parser = parse_tau)]
    tau: f64,
}

impl ConfigArgs {
    fn config(&self, workers: usize) -> PipelineConfig {
        PipelineConfig {
            strategy: SelectionStrategy::new(self.strategy, self.k),
            scorer: ScorerConfig {
                kind: self.scorer,
                k_r: self.k_r,
            },
            tau: self.tau,
            workers,
        }
    }
}

#[derive(Debug, Args)]
struct WorkerArgs {
    /// Worker threads [default: available cores].
    #[arg(long, value_parser = parse_positive)]
    workers: Option<usize>,
}

impl WorkerArgs {
    fn get(&self) -> usize {
        self.workers.unwrap_or_else(default_workers)
    }
}

#[derive(Debug, Args)]
struct RefineArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    workers: WorkerArgs,
    /// Manifest output; statistics go to "<out>.stats.json".
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Strategies (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', default_value = "t2i", value_parser = parse_strategy)]
    strategies: Vec<SelectionKind>,
    /// Scorers (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', default_value = "ret", value_parser = parse_scorer)]
    scorers: Vec<ScorerKind>,
    /// K values (comma-separated or repeated).
    #[arg(long = "K-list", value_delimiter = ',', default_value = "15", value_parser = parse_positive)]
    k_list: Vec<usize>,
    /// K_r values (comma-separated or repeated).
    #[arg(long = "kr-list", value_delimiter = ',', default_value = "2", value_parser = parse_positive)]
    kr_list: Vec<usize>,
    /// Preserving ratios: a comma list, or a range "start..end:step" such as 0.1..1.0:0.1.
    #[arg(long = "tau-list", default_value = "0.9", value_parser = parse_tau_list)]
    tau_list: Vec<TauList>,
    #[command(flatten)]
    workers: WorkerArgs,
    /// CSV report output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone)]
struct TauList(Vec<f64>);

#[derive(Debug, Args)]
struct BenchArgs {
    /// Number of captions and images (at least 2).
    #[arg(long, default_value_t = 500, value_parser = parse_bench_n)]
    n: usize,
    /// VLM embedding dimension.
    #[arg(long, default_value_t = 32, value_parser = parse_positive)]
    d: usize,
    /// Sentence embedding dimension.
    #[arg(long, default_value_t = 16, value_parser = parse_positive)]
    ds: usize,
    /// Text noise scale.
    #[arg(long, default_value_t = 0.05, value_parser = parse_sigma)]
    sigma_text: f64,
    /// Image noise scale.
    #[arg(long, default_value_t = 0.05, value_parser = parse_sigma)]
    sigma_image: f64,
    /// Probability that an image is generated from another caption's latent.
    #[arg(long, default_value_t = 0.2, value_parser = parse_unit)]
    p_corrupt: f64,
    /// Generator seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for the bundle and truth.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// SYNCEMB1 file to summarize.
    path: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    workers: WorkerArgs,
    /// Perturb the engine output before comparing (negative control).
    #[arg(long, hide = true)]
    perturb: bool,
}

fn parse_strategy(s: &str) -> std::result::Result<SelectionKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scorer(s: &str) -> std::result::Result<ScorerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_positive(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_bench_n(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        Ok(v) => Err(format!("{v} is below the minimum of 2")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_unit(s: &str) -> std::result::Result<f64, String> {
    let v = parse_float(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_tau(s: &str) -> std::result::Result<f64, String> {
    parse_unit(s)
}

fn parse_sigma(s: &str) -> std::result::Result<f64, String> {
    let v = parse_float(s)?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and non-negative"))
    }
}

/// Comma list of ratios, or `start..end:step` inclusive of `end`.
fn parse_tau_list(s: &str) -> std::result::Result<TauList, String> {
    let values = match s.split_once("..") {
        Some((start, rest)) => {
            let (end, step) = rest
                .split_once(':')
                .ok_or_else(|| format!("range {s:?} needs a step, as in 0.1..1.0:0.1"))?;
            let (start, end, step) = (parse_unit(start)?, parse_unit(end)?, parse_float(step)?);
            if !(step > 0.0) || end < start {
                return Err(format!("range {s:?} needs a positive step and end >= start"));
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            // round away accumulated binary error, e.g. 0.30000000000000004
            (0..count)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        None => s.split(',').map(parse_tau).collect::<std::result::Result<Vec<_>, _>>()?,
    };
    Ok(TauList(values))
}

fn category(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::BadMagic { .. }
        | Error::VersionMismatch { .. }
        | Error::UnknownFlags { .. }
        | Error::Truncated { .. }
        | Error::TrailingBytes { .. }
        | Error::Parse { .. } => "format",
        Error::NonFinite { .. }
        | Error::NotNormalized { .. }
        | Error::Shape { .. }
        | Error::DuplicateId { .. }
        | Error::LengthMismatch { .. }
        | Error::DimensionMismatch { .. }
        | Error::IdMisalignment { .. }
        | Error::Degenerate(_)
        | Error::IndexOutOfRange { .. }
        | Error::EmptyPool
        | Error::Unpaired { .. }
        | Error::ManifestMismatch(_) => "data",
        Error::Config(_) | Error::OracleGuard { .. } => "config",
        Error::ThreadPool(_) => "runtime",
        Error::Csv(_) => "io",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = e.print();
            } else {
                let msg = e.kind().as_str().unwrap_or("invalid arguments").to_string();
                let detail = e.render().to_string();
                let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
                eprintln!("error: usage: {}", one_line(first));
            }
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let result = match &cli.command {
        Command::Refine(a) => cmd_refine(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}: {}", category(&e), one_line(&e.to_string()));
            EXIT_FAILURE
        }
    }
}

fn cmd_refine(a: &RefineArgs) -> Result<i32> {
    let config = a.config.config(a.workers.get());
    config.validate()?;
    let bundle = a.bundle.load()?;
    let manifest = refine(&bundle, &config)?;
    write_manifest(&manifest, &bundle, &a.out)?;
    Ok(EXIT_OK)
}

fn ablation_grid(a: &AblateArgs) -> Vec<PipelineConfig> {
    let workers = a.workers.get();
    let taus: Vec<f64> = a.tau_list.iter().flat_map(|t| t.0.iter().copied()).collect();
    let mut grid = Vec::new();
    for &strategy in &a.strategies {
        // K only matters for retrieval strategies, K_r only for ret
        let ks: &[usize] = if strategy == SelectionKind::One { &[1] } else { &a.k_list };
        for &scorer in &a.scorers {
            let krs: &[usize] = if scorer == ScorerKind::Ret { &a.kr_list } else { &[1] };
            for &k in ks {
                for &k_r in krs {
                    for &tau in &taus {
                        grid.push(PipelineConfig {
                            strategy: SelectionStrategy::new(strategy, k),
                            scorer: ScorerConfig { kind: scorer, k_r },
                            tau,
                            workers,
                        });
                    }
                }
            }
        }
    }
    grid
}

fn cmd_ablate(a: &AblateArgs) -> Result<i32> {
    let grid = ablation_grid(a);
    if grid.is_empty() {
        return Err(Error::Config("empty ablation grid".into()));
    }
    let bundle = a.bundle.load()?;
    let rows = ablate(&bundle, &grid)?;
    write_ablation_csv(&rows, &a.out)?;
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let spec = BenchSpec {
        n: a.n,
        d: a.d,
        d_s: a.ds,
        sigma_text: a.sigma_text,
        sigma_image: a.sigma_image,
        p_corrupt: a.p_corrupt,
        seed: a.seed,
    };
    spec.validate()?;
    let planted = synthbench::generate(&spec)?;
    synthbench::write_bench(&planted, &a.out_dir)?;
    log::info!(
        "wrote {} pairs ({} corrupted) to {}",
        spec.n,
        planted.corrupted_count(),
        a.out_dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_inspect(a: &InspectArgs) -> Result<i32> {
    let m = read_matrix_with(
        &a.path,
        ReadOptions {
            norm_check: NormCheck::Deferred,
        },
    )?;
    let head: Vec<&str> = m.ids().iter().take(5).map(String::as_str).collect();
    let summary = serde_json::json!({
        "path": a.path.display().to_string(),
        "rows": m.rows(),
        "dim": m.dim(),
        "normalized_flag": m.is_normalized(),
        "max_norm_deviation": m.max_norm_deviation(),
        "normalization_ok": m.check_normalization().is_ok(),
        "first_ids": head,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(EXIT_OK)
}

fn cmd_oracle_check(a: &OracleArgs) -> Result<i32> {
    let config = a.config.config(a.workers.get());
    config.validate()?;
    let bundle = a.bundle.load()?;
    let expected = synthbench::oracle_refine(&bundle, &config)?;
    let mut got = refine(&bundle, &config)?;
    if a.perturb {
        if let Some(first) = got.entries.first_mut() {
            first.score -= 1e-3;
        }
    }
    match diff_manifests(&got, &expected, ORACLE_SCORE_TOL) {
        None => {
            println!("ok: {} kept entries agree with the reference", got.entries.len());
            Ok(EXIT_OK)
        }
        Some(d) => {
            eprintln!("error: verification: first divergence at {d}");
            Ok(EXIT_FAILURE)
        }
    }
}
