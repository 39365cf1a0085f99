use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use arpredict::asymptotics::{efficiency_surface, linspace, surface_csv};
use arpredict::montecarlo::{table1_with, TABLE1_CS, TABLE1_NS};
use arpredict::prelude::*;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser, Debug, Serialize)]
#[command(name = "arpredict", version, about = "Residual-based prediction for autoregressive time series")]
struct Cli {
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ARPREDICT_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Simulate a series from a model.
    Simulate(SimulateArgs),
    /// Least-squares fit, residual summary and weights.
    Fit(FitArgs),
    /// Estimate a conditional distribution function, quantile or moment.
    Predict(PredictArgs),
    /// Monte Carlo mean squared error table for P(X_{n+2} <= 0 | X_n = 0.5).
    #[command(name = "mc-table1")]
    McTable1(TableArgs),
    /// Asymptotic relative efficiency surface of the lag-two estimator.
    #[command(name = "asymp-efficiency")]
    AsympEfficiency(SurfaceArgs),
}

#[derive(Args, Debug, Serialize, Clone)]
struct FamilyArgs {
    /// ar1, ar, expar or setar.
    #[arg(long, default_value = "ar1")]
    family: String,
    /// Order for `ar`.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Known decay of the expar family.
    #[arg(long)]
    gamma: Option<f64>,
    /// Known threshold of the setar family.
    #[arg(long)]
    threshold: Option<f64>,
}

impl FamilyArgs {
    fn family(&self) -> anyhow::Result<Family> {
        Ok(match self.family.to_ascii_lowercase().as_str() {
            "ar1" => Family::ar1(),
            "ar" => Family::Ar { order: self.order },
            "expar" => Family::Expar { gamma: self.gamma.ok_or_else(|| ArgError("--gamma is required for expar".into()))? },
            "setar" => Family::Setar { threshold: self.threshold.ok_or_else(|| ArgError("--threshold is required for setar".into()))? },
            other => bail!(ArgError(format!("unknown family `{other}`"))),
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: FamilyArgs,
    /// Parameter vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    theta: Vec<f64>,
    #[arg(long, default_value = "normal")]
    dist: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "series.csv")]
    file: String,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    model: FamilyArgs,
    /// Series CSV with one value per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "fit.json")]
    file: String,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[command(flatten)]
    model: FamilyArgs,
    #[arg(long)]
    input: PathBuf,
    /// Use this parameter instead of fitting one.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    /// Conditioning state, oldest value first.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    lag: usize,
    /// cdf:T, joint:T,U (lag 2), quantile:P, moment:G or absmoment:G (lag 1).
    #[arg(long, allow_hyphen_values = true)]
    target: String,
    #[arg(long, value_delimiter = ',', default_value = "U,W,S,SW")]
    variant: Vec<String>,
    #[arg(long, default_value = "triweight")]
    kernel: String,
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, default_value_t = 0.25)]
    beta: f64,
    #[arg(long, default_value_t = 100)]
    riemann_n: usize,
    /// Evaluate lag-two smoothed indicators with the full double midpoint rule.
    #[arg(long)]
    full_quadrature: bool,
    #[arg(long, default_value = "predict.json")]
    file: String,
}

#[derive(Args, Debug, Serialize)]
struct TableArgs {
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    /// Use the full 20,000 repetitions.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "normal,logistic,t5")]
    dists: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    cs: Option<Vec<f64>>,
    #[arg(long, default_value = "table1.csv")]
    file: String,
}

#[derive(Args, Debug, Serialize)]
struct SurfaceArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    u: f64,
    #[arg(long, default_value = "normal")]
    dist: String,
    #[arg(long, default_value_t = 0.05)]
    theta_min: f64,
    #[arg(long, default_value_t = 0.95)]
    theta_max: f64,
    #[arg(long, default_value_t = 19)]
    theta_count: usize,
    #[arg(long, default_value_t = 0.0)]
    x_min: f64,
    #[arg(long, default_value_t = 2.0)]
    x_max: f64,
    #[arg(long, default_value_t = 21)]
    x_count: usize,
    #[arg(long, default_value = "surface.csv")]
    file: String,
}

/// A malformed argument detected after parsing.
#[derive(Debug)]
struct ArgError(String);

impl std::fmt::Display for ArgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ArgError {}

#[derive(Serialize)]
struct OutputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'static str,
    argv: Vec<String>,
    parameters: &'a Cli,
    seed: Option<u64>,
    version: &'static str,
    timestamp: String,
    outputs: Vec<OutputDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Outputs {
    dir: PathBuf,
    written: Vec<OutputDigest>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(OutputDigest { path: name.to_string(), sha256: sha256_hex(contents) });
        Ok(path)
    }
}

fn parse<T: std::str::FromStr<Err = arpredict::Error>>(s: &str) -> anyhow::Result<T> {
    s.parse::<T>().map_err(|e| ArgError(e.to_string()).into())
}

fn read_series(path: &Path, order: usize) -> anyhow::Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = record.get(0).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => bail!(ArgError(format!("{}: line {} is not a number", path.display(), i + 1))),
        }
    }
    Ok(TimeSeries::new(values, order)?)
}

fn series_csv(series: &TimeSeries) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x"])?;
    for v in series.values() {
        w.write_record([format!("{v:.17e}")])?;
    }
    Ok(w.into_inner()?)
}

#[derive(Serialize)]
struct SeriesSidecar {
    n: usize,
    p: usize,
    family: Family,
    theta: Vec<f64>,
    dist: InnovationDist,
    seed: u64,
    burn_in: usize,
}

fn simulate(args: &SimulateArgs, out: &mut Outputs) -> anyhow::Result<Option<u64>> {
    let spec = ModelSpec::new(args.model.family()?, args.theta.clone())?;
    let dist: InnovationDist = parse(&args.dist)?;
    let series = simulate_series(&spec, dist, args.n, args.burn_in, args.seed)?;
    out.write(&args.file, &series_csv(&series)?)?;
    let sidecar = SeriesSidecar {
        n: series.n(),
        p: series.order(),
        family: spec.family().clone(),
        theta: spec.theta().to_vec(),
        dist,
        seed: args.seed,
        burn_in: args.burn_in,
    };
    let stem = Path::new(&args.file).with_extension("json");
    out.write(&stem.display().to_string(), serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    println!("wrote {} values to {}", series.values().len(), args.file);
    Ok(Some(args.seed))
}

#[derive(Serialize)]
struct FitReport {
    family: Family,
    theta: Vec<f64>,
    n: usize,
    residual_mean: f64,
    residual_sd: f64,
    lambda: f64,
    weights_solved: bool,
}

fn fit_cmd(args: &FitArgs, out: &mut Outputs) -> anyhow::Result<Option<u64>> {
    let family = args.model.family()?;
    let series = read_series(&args.input, family.order())?;
    let spec = fit(&series, &family)?;
    let residuals = ResidualSet::new(&series, &spec)?;
    let weights = solve_el_weights(&residuals);
    let eps = residuals.values();
    let n = eps.len() as f64;
    let mean = eps.iter().sum::<f64>() / n;
    let sd = (eps.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt();
    let report = FitReport {
        family,
        theta: spec.theta().to_vec(),
        n: eps.len(),
        residual_mean: mean,
        residual_sd: sd,
        lambda: weights.lambda(),
        weights_solved: weights.solved(),
    };
    out.write(&args.file, serde_json::to_string_pretty(&report)?.as_bytes())?;
    println!("theta = {:?}", report.theta);
    Ok(None)
}

#[derive(Serialize)]
struct PredictReport {
    theta: Vec<f64>,
    x: Vec<f64>,
    target: String,
    result: PredictionResult,
}

fn predict_cmd(args: &PredictArgs, out: &mut Outputs) -> anyhow::Result<Option<u64>> {
    let family = args.model.family()?;
    let series = read_series(&args.input, family.order())?;
    let spec = match &args.theta {
        Some(theta) => ModelSpec::fitted(family, theta.clone())?,
        None => fit(&series, &family)?,
    };
    let target = Target::parse(&args.target, args.lag)?;
    let variants = args.variant.iter().map(|v| parse::<Variant>(v)).collect::<anyhow::Result<Vec<_>>>()?;
    let kernel: Kernel = parse(&args.kernel)?;
    let config = KernelConfig::with_rate(kernel, args.c, args.beta, args.riemann_n).map_err(|e| ArgError(e.to_string()))?;
    let task = PredictionTask::new(args.x.clone(), target).map_err(|e| ArgError(e.to_string()))?;
    if task.x.len() != spec.order() {
        bail!(ArgError(format!("--x has {} values, model order is {}", task.x.len(), spec.order())));
    }

    let residuals = ResidualSet::new(&series, &spec)?;
    let weights = solve_el_weights(&residuals);
    let quadrature = if args.full_quadrature { Lag2Quadrature::Full } else { Lag2Quadrature::Collapsed };
    let predictor = Predictor::new(&spec, &residuals, &weights, config).with_lag2_quadrature(quadrature);
    let result = predictor.predict(&task, &variants)?;
    for (v, value) in &result.values {
        println!("{v}\t{value:.10}");
    }
    let report = PredictReport { theta: spec.theta().to_vec(), x: task.x.clone(), target: task.target.describe(), result };
    out.write(&args.file, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(None)
}

fn table_cmd(args: &TableArgs, out: &mut Outputs) -> anyhow::Result<Option<u64>> {
    let reps = if args.full { 20_000 } else { args.reps };
    let dists = args.dists.iter().map(|d| parse::<InnovationDist>(d)).collect::<anyhow::Result<Vec<_>>>()?;
    let ns = args.ns.clone().unwrap_or_else(|| TABLE1_NS.to_vec());
    let cs = args.cs.clone().unwrap_or_else(|| TABLE1_CS.to_vec());
    if ns.iter().any(|&n| n < 3) {
        bail!(ArgError("sample sizes must be at least 3".into()));
    }
    let table = table1_with(reps, args.seed, &dists, &ns, &cs)?;
    let text = table.to_text();
    print!("{text}");
    out.write(&args.file, table.to_csv().as_bytes())?;
    let stem = Path::new(&args.file).with_extension("");
    out.write(&format!("{}.txt", stem.display()), text.as_bytes())?;
    out.write(&format!("{}.json", stem.display()), serde_json::to_string_pretty(&table)?.as_bytes())?;
    Ok(Some(args.seed))
}

fn surface_cmd(args: &SurfaceArgs, out: &mut Outputs) -> anyhow::Result<Option<u64>> {
    let dist: InnovationDist = parse(&args.dist)?;
    let thetas = linspace(args.theta_min, args.theta_max, args.theta_count);
    let xs = linspace(args.x_min, args.x_max, args.x_count);
    if thetas.is_empty() || xs.is_empty() {
        bail!(ArgError("grids must have at least one point".into()));
    }
    let points = efficiency_surface(args.u, dist, &thetas, &xs).map_err(|e| ArgError(e.to_string()))?;
    out.write(&args.file, surface_csv(&points).as_bytes())?;
    let min = points.iter().min_by(|a, b| a.ratio.total_cmp(&b.ratio)).expect("non-empty grid");
    let max = points.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio)).expect("non-empty grid");
    println!("min ratio {:.6} at theta={}, x={}", min.ratio, min.theta, min.x);
    println!("max ratio {:.6} at theta={}, x={}", max.ratio, max.theta, max.x);
    Ok(None)
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        // Only fails if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut out = Outputs { dir: cli.out.clone(), written: Vec::new() };
    let (name, seed) = match &cli.command {
        Command::Simulate(a) => ("simulate", simulate(a, &mut out)?),
        Command::Fit(a) => ("fit", fit_cmd(a, &mut out)?),
        Command::Predict(a) => ("predict", predict_cmd(a, &mut out)?),
        Command::McTable1(a) => ("mc-table1", table_cmd(a, &mut out)?),
        Command::AsympEfficiency(a) => ("asymp-efficiency", surface_cmd(a, &mut out)?),
    };
    let manifest = RunManifest {
        command: name,
        argv: std::env::args().collect(),
        parameters: cli,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
        outputs: out.written,
    };
    let path = cli.out.join(format!("{name}.manifest.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Argument problems exit with 2, numerical and input failures with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ArgError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<arpredict::Error>() {
        Some(Error::InvalidArgument(_) | Error::InvalidModel(_) | Error::NonStationary(_) | Error::Unsupported(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
