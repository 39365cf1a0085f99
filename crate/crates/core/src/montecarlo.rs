//! Seeded Monte Carlo study of the mean squared error of the estimators.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovation::InnovationDist;
use crate::model::{fit, simulate_series, Family, ModelSpec, TimeSeries, DEFAULT_BURN_IN};
use crate::numeric::left_inverse;
use crate::predict::{Lag2Quadrature, PredictionTask, Predictor, Target, Variant};
use crate::weights_kde::{solve_el_weights, Bandwidth, ElWeights, KernelConfig, ResidualSet};

#[derive(Debug, Clone)]
pub struct MCConfig {
    pub spec: ModelSpec,
    pub dist: InnovationDist,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub task: PredictionTask,
    pub variants: Vec<Variant>,
    /// Constants `c` in `b_n = c n^(-β)` for the smoothed variants. When empty
    /// the bandwidth of `kernel` is used as is.
    pub bandwidth_constants: Vec<f64>,
    pub kernel: KernelConfig,
    pub burn_in: usize,
    pub lag2_quadrature: Lag2Quadrature,
}

impl MCConfig {
    pub fn new(spec: ModelSpec, dist: InnovationDist, n: usize, reps: usize, seed: u64, task: PredictionTask) -> Self {
        Self {
            spec,
            dist,
            n,
            reps,
            seed,
            task,
            variants: Variant::ALL.to_vec(),
            bandwidth_constants: Vec::new(),
            kernel: KernelConfig::default(),
            burn_in: DEFAULT_BURN_IN,
            lag2_quadrature: Lag2Quadrature::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidArgument("no variants requested".into()));
        }
        if self.task.x.len() != self.spec.order() {
            return Err(Error::InvalidArgument(format!(
                "conditioning vector has length {}, model order is {}",
                self.task.x.len(),
                self.spec.order()
            )));
        }
        self.spec.check_stationary()?;
        self.task.target.validate()?;
        self.kernel.validate()?;
        for &c in &self.bandwidth_constants {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!("bandwidth constant must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    /// The `(variant, c)` columns of the study, in output order.
    pub fn columns(&self) -> Vec<(Variant, Option<f64>)> {
        let mut cols = Vec::new();
        for &v in &self.variants {
            if v.smoothed() && !self.bandwidth_constants.is_empty() {
                cols.extend(self.bandwidth_constants.iter().map(|&c| (v, Some(c))));
            } else {
                cols.push((v, None));
            }
        }
        cols
    }

    fn kernel_for(&self, c: Option<f64>) -> KernelConfig {
        let mut cfg = self.kernel;
        if let Some(c) = c {
            let beta = match cfg.bandwidth {
                Bandwidth::Rate { beta, .. } => beta,
                Bandwidth::Fixed { .. } => 0.25,
            };
            cfg.bandwidth = Bandwidth::Rate { c, beta };
        }
        cfg
    }
}

/// Everything one repetition produces before any estimator runs.
pub struct RepData {
    pub series: TimeSeries,
    pub fitted: ModelSpec,
    pub residuals: ResidualSet,
    pub weights: ElWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCCell {
    pub variant: Variant,
    pub c: Option<f64>,
    pub mse: f64,
    pub se_mse: f64,
    pub mean_bias: f64,
}

impl MCCell {
    pub fn label(&self) -> String {
        match self.c {
            Some(c) => format!("{}(c={c})", self.variant),
            None => self.variant.to_string(),
        }
    }
}

/// Configuration echo stored with every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCMeta {
    pub spec: ModelSpec,
    pub dist: InnovationDist,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub x: Vec<f64>,
    pub target: String,
    pub bandwidth_constants: Vec<f64>,
    pub kernel: KernelConfig,
    pub burn_in: usize,
    pub lag2_quadrature: Lag2Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub truth: f64,
    pub cells: Vec<MCCell>,
    /// Repetitions dropped because the fit was degenerate.
    pub excluded: usize,
    /// Repetitions in which the weight equation had no root and unit weights were used.
    pub weight_fallbacks: usize,
    pub meta: MCMeta,
}

impl MCResult {
    pub fn cell(&self, variant: Variant, c: Option<f64>) -> Option<&MCCell> {
        self.cells.iter().find(|cell| cell.variant == variant && cell.c == c)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of repetition `rep`. Both mixing steps are bijections, so distinct
/// repetitions get distinct seeds.
pub fn rep_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master ^ splitmix64(rep as u64))
}

/// Population value of the prediction target.
pub fn true_value(spec: &ModelSpec, dist: InnovationDist, task: &PredictionTask) -> Result<f64> {
    let x = &task.x;
    if x.len() != spec.order() {
        return Err(Error::InvalidArgument(format!(
            "conditioning vector has length {}, model order is {}",
            x.len(),
            spec.order()
        )));
    }
    let tol = 1e-12;
    let r = spec.regression_value(x);
    let kinks = first_step_kinks(spec, r);
    match &task.target {
        Target::Cdf1(t) => Ok(dist.cdf(t - r)),
        Target::Quantile1(p) => Ok(r + dist.quantile(*p)?),
        Target::Cdf2Marginal(u) => {
            if let (Family::Ar { order: 1 }, InnovationDist::StdNormal) = (spec.family(), dist) {
                let th = spec.theta()[0];
                return Ok(dist.cdf((u - th * th * x[0]) / (1.0 + th * th).sqrt()));
            }
            Ok(lag2_cdf(spec, dist, x, f64::INFINITY, *u, tol))
        }
        Target::Cdf2Joint(t, u) => Ok(lag2_cdf(spec, dist, x, *t, *u, tol)),
        Target::Quantile2(p) => {
            let g = |s: f64| lag2_cdf(spec, dist, x, f64::INFINITY, s, tol);
            let (mut lo, mut hi) = (-1.0, 1.0);
            while g(lo) >= *p {
                lo *= 2.0;
            }
            while g(hi) < *p {
                hi *= 2.0;
            }
            Ok(left_inverse(g, *p, lo, hi, 1e-12))
        }
        Target::Moment1 { exponent, absolute } => {
            let (g, abs) = (*exponent, *absolute);
            let mut k = kinks.clone();
            k.push(-r);
            Ok(dist.expect(
                |y| {
                    let v = y + r;
                    if abs {
                        v.abs().powf(g)
                    } else {
                        v.powi(g as i32)
                    }
                },
                &k,
                tol,
            ))
        }
        Target::Custom1(q) => Ok(dist.expect(|y| q(y + r), &kinks, tol)),
        Target::Custom2(_) => Err(Error::Unsupported("true value of a custom lag-two target".into())),
    }
}

/// Innovation values at which the first step crosses a regime boundary.
fn first_step_kinks(spec: &ModelSpec, shift: f64) -> Vec<f64> {
    match spec.family() {
        Family::Setar { threshold } => vec![threshold - shift],
        _ => Vec::new(),
    }
}

/// `∫ 1[y + r(x) <= t] F(u - r(x_{-1}, y + r(x))) f(y) dy`.
fn lag2_cdf(spec: &ModelSpec, dist: InnovationDist, x: &[f64], t: f64, u: f64, tol: f64) -> f64 {
    let r = spec.regression_value(x);
    let p = x.len();
    let mut kinks = first_step_kinks(spec, r);
    if t.is_finite() {
        kinks.push(t - r);
    }
    dist.expect(
        |y| {
            let x1 = y + r;
            if x1 > t {
                return 0.0;
            }
            let mut state = Vec::with_capacity(p);
            state.extend_from_slice(&x[1..]);
            state.push(x1);
            dist.cdf(u - spec.regression_value(&state))
        },
        &kinks,
        tol,
    )
}

/// Simulates, fits and weights one repetition.
pub fn prepare_rep(config: &MCConfig, rep: usize) -> Result<RepData> {
    let series = simulate_series(&config.spec, config.dist, config.n, config.burn_in, rep_seed(config.seed, rep))?;
    let fitted = fit(&series, config.spec.family())?;
    let residuals = ResidualSet::new(&series, &fitted)?;
    let weights = solve_el_weights(&residuals);
    Ok(RepData { series, fitted, residuals, weights })
}

fn default_estimate(config: &MCConfig, rep: &RepData, variant: Variant, c: Option<f64>) -> Result<f64> {
    let predictor = Predictor::new(&rep.fitted, &rep.residuals, &rep.weights, config.kernel_for(c))
        .with_lag2_quadrature(config.lag2_quadrature);
    let result = predictor.predict(&config.task, &[variant])?;
    Ok(result.values[&variant])
}

pub fn run(config: &MCConfig) -> Result<MCResult> {
    run_with_estimator(config, |rep, variant, c| default_estimate(config, rep, variant, c))
}

/// Runs the study with a caller-supplied estimator; `estimator` is called once
/// per repetition and column.
pub fn run_with_estimator<E>(config: &MCConfig, estimator: E) -> Result<MCResult>
where
    E: Fn(&RepData, Variant, Option<f64>) -> Result<f64> + Sync,
{
    config.validate()?;
    let truth = true_value(&config.spec, config.dist, &config.task)?;
    let columns = config.columns();

    // One slot per repetition, merged in index order afterwards.
    let outcomes: Vec<Result<Option<(Vec<f64>, bool)>>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let data = match prepare_rep(config, rep) {
                Ok(d) => d,
                Err(Error::Degenerate(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let errors = columns
                .iter()
                .map(|&(v, c)| estimator(&data, v, c).map(|est| est - truth))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Some((errors, !data.weights.solved())))
        })
        .collect();

    let mut excluded = 0;
    let mut weight_fallbacks = 0;
    let mut errors: Vec<Vec<f64>> = vec![Vec::with_capacity(config.reps); columns.len()];
    for outcome in outcomes {
        match outcome? {
            None => excluded += 1,
            Some((errs, fallback)) => {
                weight_fallbacks += fallback as usize;
                for (col, e) in errors.iter_mut().zip(errs) {
                    col.push(e);
                }
            }
        }
    }
    if excluded == config.reps {
        return Err(Error::Degenerate("every repetition had a degenerate fit".into()));
    }

    let cells = columns
        .iter()
        .zip(&errors)
        .map(|(&(variant, c), errs)| {
            let (mse, se_mse, mean_bias) = summarise(errs);
            MCCell { variant, c, mse, se_mse, mean_bias }
        })
        .collect();

    Ok(MCResult {
        truth,
        cells,
        excluded,
        weight_fallbacks,
        meta: MCMeta {
            spec: config.spec.clone(),
            dist: config.dist,
            n: config.n,
            reps: config.reps,
            seed: config.seed,
            x: config.task.x.clone(),
            target: config.task.target.describe(),
            bandwidth_constants: config.bandwidth_constants.clone(),
            kernel: config.kernel,
            burn_in: config.burn_in,
            lag2_quadrature: config.lag2_quadrature,
        },
    })
}

/// Mean squared error, its standard error and the mean error.
fn summarise(errors: &[f64]) -> (f64, f64, f64) {
    let r = errors.len() as f64;
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let mse = sq.iter().sum::<f64>() / r;
    let se = if errors.len() > 1 {
        let var = sq.iter().map(|s| (s - mse) * (s - mse)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        0.0
    };
    (mse, se, errors.iter().sum::<f64>() / r)
}

pub const TABLE1_NS: [usize; 3] = [50, 100, 200];
pub const TABLE1_CS: [f64; 6] = [1.5, 1.75, 2.0, 2.25, 2.5, 2.75];

/// Published `10⁶ × MSE` values: rows (normal, logistic, t5) × n, columns
/// U, W, then SW at each bandwidth constant.
pub const TABLE1_REFERENCE: [[[f64; 8]; 3]; 3] = [
    [
        [6181.0, 967.0, 512.0, 462.0, 430.0, 414.0, 411.0, 417.0],
        [3153.0, 460.0, 299.0, 279.0, 266.0, 261.0, 264.0, 273.0],
        [1615.0, 227.0, 168.0, 160.0, 156.0, 155.0, 160.0, 168.0],
    ],
    [
        [6184.0, 1218.0, 647.0, 591.0, 558.0, 544.0, 545.0, 558.0],
        [3204.0, 606.0, 390.0, 367.0, 356.0, 355.0, 364.0, 380.0],
        [1620.0, 296.0, 220.0, 213.0, 212.0, 217.0, 227.0, 243.0],
    ],
    [
        [6363.0, 1513.0, 803.0, 738.0, 701.0, 686.0, 690.0, 706.0],
        [3234.0, 756.0, 495.0, 470.0, 459.0, 461.0, 474.0, 495.0],
        [1646.0, 375.0, 281.0, 274.0, 275.0, 283.0, 299.0, 320.0],
    ],
];

/// Published value for a cell, if it is one of the 72 in the table.
pub fn table1_reference(dist: InnovationDist, n: usize, variant: Variant, c: Option<f64>) -> Option<f64> {
    let d = InnovationDist::ALL.iter().position(|&x| x == dist)?;
    let row = TABLE1_NS.iter().position(|&x| x == n)?;
    let col = match (variant, c) {
        (Variant::U, None) => 0,
        (Variant::W, None) => 1,
        (Variant::SW, Some(c)) => 2 + TABLE1_CS.iter().position(|&x| (x - c).abs() < 1e-12)?,
        _ => return None,
    };
    Some(TABLE1_REFERENCE[d][row][col])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub dist: InnovationDist,
    pub n: usize,
    pub result: MCResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<Table1Row>,
}

/// The lag-two design of the table: AR(1) with `θ = 0.5`, estimating
/// `P(X_{n+2} <= 0 | X_n = 0.5)`.
pub fn table1_config(dist: InnovationDist, n: usize, reps: usize, seed: u64, cs: &[f64]) -> Result<MCConfig> {
    let task = PredictionTask::new(vec![0.5], Target::Cdf2Marginal(0.0))?;
    let mut cfg = MCConfig::new(ModelSpec::ar1(0.5)?, dist, n, reps, seed, task);
    cfg.variants = vec![Variant::U, Variant::W, Variant::SW];
    cfg.bandwidth_constants = cs.to_vec();
    Ok(cfg)
}

pub fn table1(reps: usize, seed: u64) -> Result<Table1> {
    table1_with(reps, seed, &InnovationDist::ALL, &TABLE1_NS, &TABLE1_CS)
}

/// Table with a chosen subset of rows and bandwidth constants. Each row uses
/// its own seed stream derived from the master seed.
pub fn table1_with(reps: usize, seed: u64, dists: &[InnovationDist], ns: &[usize], cs: &[f64]) -> Result<Table1> {
    let mut rows = Vec::new();
    for (d_idx, &dist) in dists.iter().enumerate() {
        for (n_idx, &n) in ns.iter().enumerate() {
            let row_seed = rep_seed(seed, 1 + d_idx * 1000 + n_idx);
            let result = run(&table1_config(dist, n, reps, row_seed, cs)?)?;
            rows.push(Table1Row { dist, n, result });
        }
    }
    Ok(Table1 { reps, seed, rows })
}

impl Table1 {
    /// Long-format CSV, one line per cell with the published value when known.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dist,n,variant,c,mse_e6,se_e6,bias,reference_e6,z\n");
        for row in &self.rows {
            for cell in &row.result.cells {
                let reference = table1_reference(row.dist, row.n, cell.variant, cell.c);
                let z = reference
                    .filter(|_| cell.se_mse > 0.0)
                    .map(|r| (cell.mse * 1e6 - r) / (cell.se_mse * 1e6));
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.3},{:.3},{:.6e},{},{}",
                    row.dist.name(),
                    row.n,
                    cell.variant,
                    cell.c.map(|c| c.to_string()).unwrap_or_default(),
                    cell.mse * 1e6,
                    cell.se_mse * 1e6,
                    cell.mean_bias,
                    reference.map(|r| r.to_string()).unwrap_or_default(),
                    z.map(|z| format!("{z:.2}")).unwrap_or_default(),
                );
            }
        }
        out
    }

    /// Aligned table of `10⁶ × MSE` with the published value underneath.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.rows.first() else {
            return out;
        };
        let _ = write!(out, "{:<10}{:>5}", "", "n");
        for cell in &first.result.cells {
            let head = match cell.c {
                Some(c) => format!("{c:.2}"),
                None => cell.variant.to_string(),
            };
            let _ = write!(out, "{head:>9}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<10}{:>5}", row.dist.label(), row.n);
            for cell in &row.result.cells {
                let _ = write!(out, "{:>9.0}", cell.mse * 1e6);
            }
            out.push('\n');
            let _ = write!(out, "{:<10}{:>5}", "  (se)", "");
            for cell in &row.result.cells {
                let _ = write!(out, "{:>9.1}", cell.se_mse * 1e6);
            }
            out.push('\n');
            let _ = write!(out, "{:<10}{:>5}", "  (ref)", "");
            for cell in &row.result.cells {
                match table1_reference(row.dist, row.n, cell.variant, cell.c) {
                    Some(r) => {
                        let _ = write!(out, "{r:>9.0}");
                    }
                    None => {
                        let _ = write!(out, "{:>9}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "entries are 1e6 x MSE over {} repetitions, seed {}", self.reps, self.seed);
        out
    }
}
