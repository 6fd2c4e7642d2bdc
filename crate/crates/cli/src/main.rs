use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use growing_squares::census::{self, Distribution};
use growing_squares::cluster::{brute_cluster, cluster, Dendrogram};
use growing_squares::engine::{EngineConfig, EngineError, FrameSet};
use growing_squares::geometry::WeightedPoint;
use growing_squares::io::{self as gio, GenConfig, Layout, Mode, RunStats};
use growing_squares::scalar::{Rational, Scalar};

#[derive(Parser)]
#[command(name = "growsq", version, about = "Agglomerative clustering of growing squares")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster glyphs from a CSV or JSON file and write the dendrogram as JSON.
    Cluster(ClusterArgs),
    /// Count range-tree links over a sweep of sizes and print CSV.
    Census(CensusArgs),
    /// Generate a synthetic glyph set as CSV.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Float,
}

#[derive(Args)]
struct ClusterArgs {
    /// Input file (`-` for stdin). Omit when using `--generate`.
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Comparison tolerance in float mode.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Weight-balance parameter of the trees, in (0, 0.25].
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Stop merging after this time.
    #[arg(long)]
    horizon: Option<String>,
    /// Number of reflected copies of the structure.
    #[arg(long, default_value_t = 8, value_parser = parse_instances)]
    instances: u8,
    /// Also run the quadratic reference and compare.
    #[arg(long)]
    oracle: bool,
    /// Write run statistics as JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Cluster a generated uniform instance of this size instead of a file.
    #[arg(long)]
    generate: Option<usize>,
    /// Seed for `--generate`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the dendrogram (stdout when absent).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CensusArgs {
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 256)]
    nmin: usize,
    #[arg(long, default_value_t = 4096)]
    nmax: usize,
    /// uniform, grid or adversarial-diagonal.
    #[arg(long, default_value = "uniform")]
    dist: Distribution,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// uniform or clustered.
    #[arg(long, default_value = "uniform")]
    layout: Layout,
    /// Coordinates are integers in [0, span].
    #[arg(long, default_value_t = 1_000_000)]
    span: i64,
    /// Weights are integers in [1, ratio], log-uniform.
    #[arg(long, default_value_t = 10_000)]
    weight_ratio: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_instances(s: &str) -> Result<u8, String> {
    match s {
        "8" => Ok(8),
        "4" => Ok(4),
        _ => Err("must be 8 or 4".into()),
    }
}

enum Failure {
    Usage(String),
    Input(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Input(format!("stdout: {e}"))),
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Input(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(io_err(path))
}

fn run_cluster<S: Scalar>(args: &ClusterArgs, mode: Mode) -> Result<(), Failure> {
    if !(args.alpha > 0.0 && args.alpha <= 0.25) {
        return Err(Failure::Usage(format!("--alpha {} outside (0, 0.25]", args.alpha)));
    }
    if !(args.epsilon >= 0.0) {
        return Err(Failure::Usage("--epsilon must be non-negative".into()));
    }
    let points: Vec<WeightedPoint<S>> = match (&args.input, args.generate) {
        (Some(path), None) => {
            let text = read_input(path)?;
            gio::read_points(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        (None, Some(n)) => gio::generated_points(&gio::generate(&GenConfig { n, seed: args.seed, ..Default::default() })),
        _ => return Err(Failure::Usage("give exactly one of an input file or --generate".into())),
    };
    let horizon = match &args.horizon {
        Some(h) => Some(S::parse(h).ok_or_else(|| Failure::Usage(format!("--horizon: cannot parse `{h}`")))?),
        None => None,
    };
    let cfg = EngineConfig {
        alpha: args.alpha,
        epsilon: args.epsilon,
        frames: if args.instances == 4 { FrameSet::Four } else { FrameSet::Eight },
    };
    let start = Instant::now();
    let (dendrogram, stats) = cluster(&points, horizon.clone(), cfg)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    dendrogram
        .validate()
        .map_err(|e| Failure::Invariant(format!("dendrogram fails validation: {e}")))?;
    write_output(args.out.as_deref(), &gio::dendrogram_json(&dendrogram))?;
    if let Some(path) = &args.stats {
        let rs = RunStats::new(points.len(), dendrogram.merges.len(), &stats, args.instances as usize, wall, mode);
        let mut text = serde_json::to_string_pretty(&rs).expect("stats serialise");
        text.push('\n');
        fs::write(path, text).map_err(io_err(path))?;
    }
    if args.oracle {
        let reference = brute_cluster(&points, horizon)?;
        report_oracle(&dendrogram, &reference)?;
    }
    Ok(())
}

fn report_oracle<S: Scalar>(got: &Dendrogram<S>, want: &Dendrogram<S>) -> Result<(), Failure> {
    match got.first_divergence(want) {
        None => {
            eprintln!("MATCH");
            Ok(())
        }
        Some(k) => {
            let show = |d: &Dendrogram<S>| {
                d.merges.get(k).map_or("none".to_string(), |m| {
                    format!("t={} {}+{} -> {} at ({}, {}) w={}", m.t.render(), m.left, m.right, m.result, m.x.render(), m.y.render(), m.w.render())
                })
            };
            eprintln!("MISMATCH at merge {k}");
            eprintln!("  engine:    {}", show(got));
            eprintln!("  reference: {}", show(want));
            Err(Failure::Invariant("engine and reference dendrograms differ".into()))
        }
    }
}

fn run_census(args: &CensusArgs) -> Result<(), Failure> {
    if args.nmin == 0 || args.nmin > args.nmax {
        return Err(Failure::Usage(format!("need 1 <= --nmin <= --nmax, got {} and {}", args.nmin, args.nmax)));
    }
    let configs = census::sweep(args.d, args.nmin, args.nmax, args.dist, args.seed, args.alpha);
    for c in &configs {
        c.validate().map_err(Failure::Usage)?;
    }
    let mut buf = Vec::new();
    census::census(&configs, &mut buf).map_err(|e| Failure::Input(e.to_string()))?;
    write_output(args.out.as_deref(), &String::from_utf8(buf).expect("census output is ASCII"))
}

fn run_gen(args: &GenArgs) -> Result<(), Failure> {
    if args.span < 0 {
        return Err(Failure::Usage("--span must be non-negative".into()));
    }
    let cfg = GenConfig {
        n: args.n,
        layout: args.layout,
        span: args.span,
        weight_ratio: args.weight_ratio,
        seed: args.seed,
    };
    write_output(args.out.as_deref(), &gio::generated_csv(&gio::generate(&cfg)))
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
    let result = match &cli.cmd {
        Command::Cluster(a) => match a.mode {
            ModeArg::Exact => run_cluster::<Rational>(a, Mode::Exact),
            ModeArg::Float => run_cluster::<f64>(a, Mode::Float),
        },
        Command::Census(a) => run_census(a),
        Command::Gen(a) => run_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Input(m) => eprintln!("error: {m}"),
                Failure::Invariant(m) => eprintln!("invariant violated: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
