use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asymptote::distance::report;
use asymptote::experiment::{run_cell, run_seed, seed_dir, write_bench_csv, BenchConfig};
use asymptote::{model_by_id, Bounds, DistanceMode, EvalStore, ExperimentConfig, Preset, Surrogate};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Learn surrogates of expensive models until they are asymptotically valid.
#[derive(Parser)]
#[command(name = "asymptote", version)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment; each seed writes evals.jsonl, surrogate.json and
    /// summary.csv under <out>/seed-<n>/.
    Run(RunArgs),
    /// Run every cell of a benchmark table and write the evaluation counts.
    BenchTable(BenchArgs),
    /// Evaluate a stored surrogate at the points of a CSV file.
    Predict(PredictArgs),
    /// Distances from a stored surrogate to the records of an evaluation store.
    Distances(DistanceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Vertical,
    Graphical,
}

impl From<ModeArg> for DistanceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vertical => DistanceMode::Vertical,
            ModeArg::Graphical => DistanceMode::Graphical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Loose,
    Strict,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Loose => Preset::Loose,
            PresetArg::Strict => Preset::Strict,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds to run, replacing the config's list. Repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Distance used by every validity predicate.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Tolerance preset for both test and train, replacing any tolerance
    /// tables in the config.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Continue from artifacts already in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; overrides `out` in the config. Standard output if
    /// neither is given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds for every cell. Repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Run every cell at this preset.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

#[derive(Args)]
struct PredictArgs {
    /// Surrogate document written by `run`.
    #[arg(long)]
    surrogate: PathBuf,
    /// CSV file with one point per row; a header row is skipped.
    #[arg(long)]
    points: PathBuf,
    /// CSV destination (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistanceArgs {
    #[arg(long)]
    surrogate: PathBuf,
    /// Evaluation store (evals.jsonl) written by `run`.
    #[arg(long)]
    evals: PathBuf,
    #[arg(long, value_enum, default_value = "graphical")]
    mode: ModeArg,
    /// Model whose bounds confine the graphical search; the bounding box of
    /// the records is used otherwise.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::BenchTable(a) => cmd_bench(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Distances(a) => cmd_distances(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds;
    }
    if let Some(mode) = a.mode {
        cfg.distance = Some(mode.into());
    }
    if let Some(preset) = a.preset {
        cfg.preset = Some(preset.into());
        cfg.test = None;
        cfg.train = None;
    }
    cfg.validate()?;
    let Some(out) = a.out.or_else(|| cfg.out.clone()) else {
        bail!("no output directory: pass --out or set `out` in {}", a.config.display());
    };
    let mut failed = 0;
    for &seed in &cfg.seeds {
        let dir = seed_dir(&out, seed);
        match run_seed(&cfg, seed, &dir, a.resume) {
            Ok(r) => println!("seed {seed}: {} after {} evaluations ({})", r.termination, r.total_evals, dir.display()),
            Err(e) => {
                eprintln!("seed {seed}: error: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} seeds failed", cfg.seeds.len());
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut bench = BenchConfig::load(&a.config)?;
    if !a.seeds.is_empty() {
        bench.seeds = a.seeds;
        for cell in &mut bench.cells {
            cell.seeds = None;
        }
    }
    if let Some(preset) = a.preset {
        for cell in &mut bench.cells {
            cell.preset = preset.into();
        }
    }
    if let Some(mode) = a.mode {
        bench.distance = Some(mode.into());
    }
    bench.validate()?;
    let rows: Vec<_> = bench
        .cells
        .iter()
        .map(|cell| {
            log::info!("cell {} ({:?}, directed {}, {})", cell.model, cell.strategy, cell.directed, cell.preset);
            run_cell(&bench, cell)
        })
        .collect();
    let out = a.out.or_else(|| bench.out.clone());
    let mut w = output(out.as_deref())?;
    write_bench_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn read_points(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let parsed: std::result::Result<Vec<f64>, _> = row.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(x) if x.len() == dim => points.push(x),
            Ok(x) => bail!("{}: row {} has {} values, the surrogate needs {dim}", path.display(), i + 1, x.len()),
            Err(_) if i == 0 => continue,
            Err(e) => bail!("{}: row {}: {e}", path.display(), i + 1),
        }
    }
    Ok(points)
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let s = Surrogate::load(&a.surrogate).with_context(|| format!("loading {}", a.surrogate.display()))?;
    let points = read_points(&a.points, s.dim())?;
    let mut w = output(a.out.as_deref())?;
    let header: Vec<String> = (0..s.dim()).map(|i| format!("x{i}")).chain(["yhat".to_string()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for x in &points {
        let cols: Vec<String> = x.iter().map(f64::to_string).collect();
        writeln!(w, "{},{}", cols.join(","), s.predict(x)?)?;
    }
    w.flush()?;
    Ok(())
}

/// The box spanned by `xs`, widened where it is flat so it stays valid.
fn bounding_box(xs: &[Vec<f64>]) -> Result<Bounds> {
    let dim = xs[0].len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in xs {
        for i in 0..dim {
            lo[i] = lo[i].min(x[i]);
            hi[i] = hi[i].max(x[i]);
        }
    }
    for i in 0..dim {
        if hi[i] <= lo[i] {
            let pad = 0.5 * (1.0 + lo[i].abs()) * 1e-6;
            lo[i] -= pad;
            hi[i] += pad;
        }
    }
    Ok(Bounds::new(lo, hi)?)
}

fn cmd_distances(a: DistanceArgs) -> Result<()> {
    let s = Surrogate::load(&a.surrogate).with_context(|| format!("loading {}", a.surrogate.display()))?;
    let store = EvalStore::load(&a.evals).with_context(|| format!("loading {}", a.evals.display()))?;
    if store.is_empty() {
        bail!("{} holds no records", a.evals.display());
    }
    let data = store.query_all();
    if store.dim() != s.dim() {
        bail!("records are {}-dimensional but the surrogate is {}-dimensional", store.dim(), s.dim());
    }
    let bounds = match &a.model {
        Some(id) => model_by_id(id, None)?.bounds().clone(),
        None => bounding_box(&data.xs)?,
    };
    let r = report(&s, &data.xs, &data.ys, a.mode.into(), &bounds)?;
    let seqs: Vec<u64> = store.records().iter().map(|rec| rec.seq).collect();
    let mut w = output(a.out.as_deref())?;
    r.write_csv(&seqs, &mut w)?;
    w.flush()?;
    Ok(())
}
