use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use burstforge::align::{BlockMatching, FlowProvider, Precomputed, ZeroFlow};
use burstforge::config::RunConfig;
use burstforge::metrics::{self, Extrema, RESOLVED_CONTRAST};
use burstforge::model::{Checkpoint, Model};
use burstforge::{bench, io, selftest, simulate, Error, Tensor};

#[derive(Parser)]
#[command(name = "burstforge", version, about = "Burst super-resolution for raw Bayer frames")]
struct Cli {
    /// Worker threads for intra-op parallelism (1 = reference mode).
    #[arg(long, global = true, env = "BURSTFORGE_THREADS")]
    threads: Option<usize>,
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize burst directories from HR images.
    Generate(GenerateArgs),
    /// Reconstruct an SR image from a burst directory.
    Infer(InferArgs),
    /// PSNR / SSIM report for SR images against ground truth.
    Eval(EvalArgs),
    /// Line-pair contrast along a chart profile.
    Chart(ChartArgs),
    /// Run the kernel oracle, degeneracy and module suites.
    Selftest(SelftestArgs),
    /// Per-kernel throughput table.
    Bench(BenchArgs),
    /// Write a freshly initialized checkpoint.
    InitCheckpoint(InitArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// A PGM/PPM file or a directory of them.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// Generate this many smooth synthetic HR images instead of reading files.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Side of synthetic HR images.
    #[arg(long, default_value_t = 384)]
    size: usize,
    /// Output directory; one `burst_###` subdirectory per HR image.
    #[arg(long)]
    output: PathBuf,
    /// Frames per burst (overrides `[burst] n_frames`).
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlowKind {
    Zero,
    Blockmatch,
    File,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    burst: PathBuf,
    /// `BFCK` checkpoint (falls back to `[paths] checkpoint`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "blockmatch")]
    flow: FlowKind,
    /// Directory of `flow_###.flw` files, one per frame, for `--flow file`.
    #[arg(long)]
    flow_dir: Option<PathBuf>,
    /// Output PPM.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 8)]
    bits: u8,
}

#[derive(Args)]
struct EvalArgs {
    /// SR image (PPM/PGM or BFT1), or a directory of them for batch mode.
    #[arg(long)]
    sr: PathBuf,
    /// Ground truth image, or a directory with files of the same names.
    #[arg(long)]
    gt: PathBuf,
    /// Write the JSON report here and print `image metric value` lines to
    /// stdout instead.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ChartArgs {
    #[arg(long)]
    image: PathBuf,
    /// Profile start `x,y` in pixels.
    #[arg(long, value_parser = parse_point)]
    start: (f64, f64),
    /// Profile end `x,y` in pixels.
    #[arg(long, value_parser = parse_point)]
    end: (f64, f64),
    /// Line-pair period along the profile, in pixels.
    #[arg(long)]
    period: f64,
    /// Plain max/min per period instead of quartile means.
    #[arg(long)]
    raw: bool,
    /// Chart reading (hundreds of LW/PH) at this pattern, for LP/mm conversion.
    #[arg(long)]
    reading: Option<f64>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Test hook: corrupt the named kernel's output to check the harness.
    #[arg(long)]
    perturb: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Feature-map sides to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES.to_vec())]
    sizes: Vec<usize>,
    /// Minimum timing window per kernel and size.
    #[arg(long, default_value_t = 0.5)]
    min_seconds: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitKind {
    Random,
    Identity,
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    kind: InitKind,
    /// Burst length the checkpoint is built for (overrides `[model] n_frames`).
    #[arg(long)]
    frames: Option<usize>,
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(x)?, p(y)?))
}

/// 0 ok, 1 usage, 2 io/format, 3 numeric validation failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Shape { .. } | Error::InvalidArgument { .. } => 1,
        Error::Io { .. } | Error::Format { .. } | Error::Checkpoint { .. } | Error::Json { .. } => 2,
        Error::NonFinite { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> burstforge::Result<u8> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .resolve(cli.seed)?;
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(Error::InvalidArgument {
                op: "--threads",
                detail: "must be >= 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument {
                op: "--threads",
                detail: e.to_string(),
            })?;
    }
    match cli.command {
        Command::Generate(a) => generate(&cfg, a),
        Command::Infer(a) => infer(&cfg, a),
        Command::Eval(a) => eval(a),
        Command::Chart(a) => chart(&cfg, a),
        Command::Selftest(a) => run_selftest(&cfg, a),
        Command::Bench(a) => run_bench(&cfg, a),
        Command::InitCheckpoint(a) => init_checkpoint(&cfg, a),
    }
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("ppm" | "pgm" | "pnm" | "bft")
    )
}

fn list_images(dir: &Path) -> burstforge::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io { path: dir.into(), source: e })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

/// PGM/PPM, or a `BFT1` tensor when the extension is `.bft`.
fn read_any_image(path: &Path) -> burstforge::Result<Tensor> {
    if path.extension().is_some_and(|e| e == "bft") {
        io::read_tensor(path)
    } else {
        io::read_image(path)
    }
}

fn generate(cfg: &RunConfig, a: GenerateArgs) -> burstforge::Result<u8> {
    let mut spec = cfg.burst.clone();
    if let Some(n) = a.frames {
        spec.n_frames = n;
    }
    let images: Vec<(String, Tensor)> = match (a.input, a.synthetic) {
        (Some(input), _) => {
            let files = if input.is_dir() { list_images(&input)? } else { vec![input.clone()] };
            if files.is_empty() {
                return Err(Error::InvalidArgument {
                    op: "generate",
                    detail: format!("no PGM/PPM images in {}", input.display()),
                });
            }
            files
                .iter()
                .map(|f| {
                    let t = read_any_image(f)?;
                    let (c, _, _) = t.dims3()?;
                    let rgb = if c == 1 { Tensor::concat0(&[&t, &t, &t])? } else { t };
                    Ok((f.display().to_string(), rgb))
                })
                .collect::<burstforge::Result<_>>()?
        }
        (None, Some(n)) => (0..n)
            .map(|i| {
                let seed = cfg.seed.wrapping_add(i as u64);
                (format!("synthetic #{i}"), simulate::smooth_image(3, a.size, a.size, 6.0, seed))
            })
            .collect(),
        (None, None) => unreachable!("clap requires one of --input/--synthetic"),
    };
    std::fs::create_dir_all(&a.output).map_err(|e| Error::Io { path: a.output.clone(), source: e })?;
    for (i, (name, hr)) in images.iter().enumerate() {
        let spec = simulate::SyntheticBurstSpec {
            seed: cfg.seed.wrapping_add(i as u64),
            ..spec.clone()
        };
        let burst = simulate::generate_burst(hr, &spec)?;
        let dir = a.output.join(format!("burst_{i:03}"));
        io::write_burst(&dir, &burst, Some(hr))?;
        io::write_image(dir.join("gt.ppm"), hr, 8)?;
        let (n, _, h, w) = burst.frames.dims4()?;
        println!("{name} -> {} ({n} frames of 4x{h}x{w})", dir.display());
    }
    Ok(0)
}

fn infer(cfg: &RunConfig, a: InferArgs) -> burstforge::Result<u8> {
    let ck_path = a.checkpoint.or_else(|| cfg.paths.checkpoint.clone()).ok_or_else(|| Error::InvalidArgument {
        op: "infer",
        detail: "no checkpoint given (--checkpoint or [paths] checkpoint)".into(),
    })?;
    let ck = io::load_checkpoint(&ck_path)?;
    let model = Model::load(&ck)?;
    let (burst, _) = io::read_burst(&a.burst)?;
    let n = burst.frames.shape()[0];
    if n != ck.config.n_frames {
        return Err(Error::InvalidArgument {
            op: "infer",
            detail: format!("burst has {n} frames, checkpoint expects {}", ck.config.n_frames),
        });
    }
    let provider: Box<dyn FlowProvider> = match a.flow {
        FlowKind::Zero => Box::new(ZeroFlow),
        FlowKind::Blockmatch => Box::new(BlockMatching::default()),
        FlowKind::File => {
            let dir = a.flow_dir.ok_or_else(|| Error::InvalidArgument {
                op: "infer",
                detail: "--flow file needs --flow-dir".into(),
            })?;
            let fields = (0..n)
                .map(|i| io::read_flow(dir.join(format!("flow_{i:03}.flw"))))
                .collect::<burstforge::Result<Vec<_>>>()?;
            Box::new(Precomputed { fields })
        }
    };
    let sr = model.forward(&burst.frames, provider.as_ref())?;
    io::write_image(&a.output, &sr, a.bits)?;
    let (_, h, w) = sr.dims3()?;
    println!("wrote {} ({w}x{h}, flow: {})", a.output.display(), provider.name());
    Ok(0)
}

fn eval(a: EvalArgs) -> burstforge::Result<u8> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if a.sr.is_dir() {
        list_images(&a.sr)?
            .into_iter()
            .map(|p| {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                let gt = a.gt.join(&name);
                (name, p, gt)
            })
            .collect()
    } else {
        vec![(a.sr.display().to_string(), a.sr.clone(), a.gt.clone())]
    };
    if pairs.is_empty() {
        return Err(Error::InvalidArgument {
            op: "eval",
            detail: format!("no images in {}", a.sr.display()),
        });
    }
    let mut rows = Vec::new();
    let (mut sum_p, mut sum_s) = (0.0, 0.0);
    for (name, sr, gt) in &pairs {
        let (s, g) = (read_any_image(sr)?, read_any_image(gt)?);
        let p = metrics::psnr(&s, &g, 1.0)?;
        let q = metrics::ssim(&s, &g)?;
        sum_p += p;
        sum_s += q;
        rows.push(json!({ "name": name, "psnr": p, "ssim": q, "lpips": "n/a" }));
    }
    let k = pairs.len() as f64;
    let report = json!({
        "count": pairs.len(),
        "images": &rows,
        "mean": { "psnr": sum_p / k, "ssim": sum_s / k, "lpips": "n/a" },
    });
    emit_json(&report, a.output.as_deref())?;
    if a.output.is_some() {
        for r in &rows {
            for m in ["psnr", "ssim", "lpips"] {
                println!("{} {m} {}", r["name"].as_str().unwrap_or(""), r[m]);
            }
        }
        println!("mean psnr {}\nmean ssim {}", sum_p / k, sum_s / k);
    }
    Ok(0)
}

fn emit_json(v: &serde_json::Value, out: Option<&Path>) -> burstforge::Result<()> {
    let text = serde_json::to_string_pretty(v).expect("report serializes") + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.into(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn chart(cfg: &RunConfig, a: ChartArgs) -> burstforge::Result<u8> {
    let img = read_any_image(&a.image)?;
    let mode = if a.raw { Extrema::Raw } else { Extrema::Robust };
    let contrast = metrics::line_pair_contrast(&img, a.start, a.end, a.period, mode)?;
    let mut report = json!({
        "contrast": contrast,
        "resolved": contrast >= RESOLVED_CONTRAST,
        "threshold": RESOLVED_CONTRAST,
        "mode": mode,
    });
    if let Some(r) = a.reading {
        report["reading"] = json!(r);
        report["lp_per_mm"] = json!(metrics::chart_reading_to_lpmm(r, &cfg.chart)?);
    }
    emit_json(&report, None)?;
    Ok(0)
}

fn run_selftest(cfg: &RunConfig, a: SelftestArgs) -> burstforge::Result<u8> {
    let opts = selftest::SuiteOptions {
        instances: a.instances,
        seed: cfg.seed,
        perturb: a.perturb,
    };
    let checks = selftest::run_all(&opts)?;
    println!("{:<11} {:<34} {:>5} {:>11} {:>9}  result", "group", "check", "n", "max err", "tol");
    for c in &checks {
        println!(
            "{:<11} {:<34} {:>5} {:>11.3e} {:>9.1e}  {}",
            c.group,
            c.name,
            c.instances,
            c.max_err,
            c.tol,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(0)
    } else {
        println!("{} failed: {}", failed.len(), failed.join(", "));
        Ok(3)
    }
}

fn run_bench(cfg: &RunConfig, a: BenchArgs) -> burstforge::Result<u8> {
    if a.sizes.iter().any(|&s| s < 8) {
        return Err(Error::InvalidArgument {
            op: "bench",
            detail: "sizes must be >= 8".into(),
        });
    }
    let rows = bench::run(&a.sizes, a.min_seconds, cfg.seed)?;
    if a.json {
        emit_json(&serde_json::to_value(&rows).expect("rows serialize"), None)?;
        return Ok(0);
    }
    println!("{:<18} {:>6} {:>8} {:>12}", "kernel", "size", "calls", "ops/sec");
    for r in rows {
        println!("{:<18} {:>6} {:>8} {:>12.2}", r.kernel, r.size, r.calls, r.ops_per_sec);
    }
    Ok(0)
}

fn init_checkpoint(cfg: &RunConfig, a: InitArgs) -> burstforge::Result<u8> {
    let mut model = cfg.model.clone();
    if let Some(n) = a.frames {
        model.n_frames = n;
    }
    let ck = match a.kind {
        InitKind::Random => Checkpoint::random(&model, cfg.seed)?,
        InitKind::Identity => Checkpoint::identity(&model)?,
    };
    io::save_checkpoint(&a.output, &ck)?;
    let params: usize = ck.tensors.values().map(Tensor::numel).sum();
    println!("wrote {} ({} tensors, {params} parameters)", a.output.display(), ck.tensors.len());
    Ok(0)
}
