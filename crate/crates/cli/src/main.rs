use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use nedb::constrained::{ChannelMapping, ConstrainedKernelBank, InitScheme, ProjectionMode};
use nedb::data::datagen::{generate_dataset, load_sources, GenConfig};
use nedb::data::{SeShape, StructuringElement};
use nedb::harness::ablate::{ablate, rows_csv, Suite};
use nedb::harness::dataset::write_edge_gt;
use nedb::harness::eval::eval_checkpoint;
use nedb::harness::gradcheck::{parse_op, run_all, table};
use nedb::harness::train::train;
use nedb::harness::RunConfig;
use nedb::tensor::gradcheck::CheckConfig;

#[derive(Parser)]
#[command(name = "nedb", version, about = "Noise-residual manipulation detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Initialize a constrained kernel bank and write it as text.
    InitWeights(InitWeights),
    /// Generate a synthetic copy-move/splice dataset.
    GenForgery(GenForgery),
    /// Derive edge targets for a manifest with a structuring element.
    GenEdgeGt(GenEdgeGt),
    /// Train from a key=value config.
    Train(Train),
    /// Score a checkpoint on a manifest.
    Eval(Eval),
    /// Finite-difference checks of every op and the assembled model.
    Gradcheck(Gradcheck),
    /// Train and score a family of configurations.
    Ablate(Ablate),
}

fn odd_size(s: &str) -> std::result::Result<usize, String> {
    let k: usize = s.parse().map_err(|_| format!("`{s}` is not a size"))?;
    if k % 2 == 0 || k == 0 {
        return Err(format!("size must be odd and positive, got {k}"));
    }
    Ok(k)
}

fn parse_via<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Args)]
struct InitWeights {
    #[arg(long, value_parser = parse_via::<InitScheme>, default_value = "laplace-like-d")]
    scheme: InitScheme,
    #[arg(long, value_parser = odd_size, default_value = "5")]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_via::<ProjectionMode>, default_value = "improved")]
    mode: ProjectionMode,
    #[arg(long, value_parser = parse_via::<ChannelMapping>, default_value = "diagonal")]
    mapping: ChannelMapping,
    /// Apply one projection before writing.
    #[arg(long)]
    project: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenForgery {
    /// Directory holding `images/` (*.ppm) and `objects/` (*.pgm).
    #[arg(long, conflicts_with_all = ["images", "objects", "procedural"])]
    coco_style_dir: Option<PathBuf>,
    #[arg(long, requires = "objects", conflicts_with = "procedural")]
    images: Option<PathBuf>,
    #[arg(long, requires = "images", conflicts_with = "procedural")]
    objects: Option<PathBuf>,
    /// Synthesize source images and objects instead of reading them.
    #[arg(long)]
    procedural: bool,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Canvas size of procedural sources.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, value_parser = parse_via::<SeShape>, default_value = "ellipse")]
    edge_shape: SeShape,
    #[arg(long, value_parser = odd_size, default_value = "5")]
    edge_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenEdgeGt {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_via::<SeShape>, default_value = "ellipse")]
    shape: SeShape,
    #[arg(long, value_parser = odd_size, default_value = "5")]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Pool counts over all images instead of averaging per image.
    #[arg(long)]
    pooled: bool,
    /// Also write prediction overlays.
    #[arg(long)]
    overlays: bool,
}

#[derive(Args)]
struct Gradcheck {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately corrupt the backward pass of one op, e.g. `conv2d`.
    #[arg(long)]
    corrupt: Option<String>,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    DualBranch,
    Init,
    KernelSize,
    EdgeKernel,
    Attention,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::DualBranch => Suite::DualBranch,
            SuiteArg::Init => Suite::Init,
            SuiteArg::KernelSize => Suite::KernelSize,
            SuiteArg::EdgeKernel => Suite::EdgeKernel,
            SuiteArg::Attention => Suite::Attention,
        }
    }
}

#[derive(Args)]
struct Ablate {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long)]
    config: PathBuf,
    /// Seeds to repeat every variant with; defaults to the config's seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn init_weights(a: InitWeights) -> Result<()> {
    let mut bank = ConstrainedKernelBank::uniform(a.size, a.scheme, a.mode, a.mapping, a.seed)?;
    if a.project {
        let r = bank.project();
        info!("projection reinitialized kernels {:?}, skipped {:?}", r.reinitialized, r.skipped);
    }
    ensure_parent(&a.out)?;
    bank.save(&a.out)?;
    print!("{}", bank.to_text());
    Ok(())
}

fn gen_forgery(a: GenForgery) -> Result<()> {
    let sources = match (&a.coco_style_dir, &a.images, &a.objects) {
        (Some(dir), _, _) => load_sources(&dir.join("images"), &dir.join("objects"))?,
        (None, Some(images), Some(objects)) => load_sources(images, objects)?,
        _ if a.procedural => Vec::new(),
        _ => bail!("choose one of --coco-style-dir, --images with --objects, or --procedural"),
    };
    let cfg = GenConfig {
        count: a.count,
        seed: a.seed,
        size: a.size,
        edge_shape: a.edge_shape,
        edge_size: a.edge_size,
        ..GenConfig::default()
    };
    let m = generate_dataset(&sources, &cfg, &a.out)?;
    println!("wrote {} samples to {}", m.len(), a.out.display());
    Ok(())
}

fn gen_edge_gt(a: GenEdgeGt) -> Result<()> {
    let se = StructuringElement::new(a.shape, a.size)?;
    let m = write_edge_gt(&a.manifest, &se, &a.out)?;
    println!("wrote {} edge maps ({} {}x{}) to {}", m.len(), a.shape, a.size, a.size, a.out.display());
    Ok(())
}

fn run_train(a: Train) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let out = train(&cfg, &a.out)?;
    let last = out.log.last().context("no steps were run")?;
    println!("final loss {:.6}; checkpoint {}", last.total, out.checkpoint.display());
    Ok(())
}

fn run_eval(a: Eval) -> Result<()> {
    let r = eval_checkpoint(&a.checkpoint, &a.manifest, &a.out, a.threshold, a.pooled, a.overlays)?;
    println!(
        "{} images: precision {:.6} recall {:.6} f1 {:.6} auc {:.6}",
        r.images.len(),
        r.mean_precision,
        r.mean_recall,
        r.mean_f1,
        r.mean_auc
    );
    Ok(())
}

fn run_gradcheck(a: Gradcheck) -> Result<bool> {
    let corrupt = match &a.corrupt {
        Some(name) => Some(parse_op(name).with_context(|| format!("`{name}` is not a registered op"))?),
        None => None,
    };
    let results = run_all(a.seed, &CheckConfig { corrupt, ..CheckConfig::default() })?;
    let t = table(&results);
    print!("{t}");
    if let Some(path) = &a.out {
        ensure_parent(path)?;
        fs::write(path, &t).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(results.iter().all(|r| r.report.passed))
}

fn run_ablate(a: Ablate) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let seeds = if a.seeds.is_empty() { vec![cfg.model.seed] } else { a.seeds };
    let suite = Suite::from(a.suite);
    let rows = ablate(suite, &cfg, &seeds, &a.out)?;
    print!("{}", rows_csv(suite, &rows));
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::InitWeights(a) => init_weights(a),
        Command::GenForgery(a) => gen_forgery(a),
        Command::GenEdgeGt(a) => gen_edge_gt(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Gradcheck(a) => match run_gradcheck(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: gradient check failed");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Command::Ablate(a) => run_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
