//! Command-line front end for GMSDB: generate datasets, fit and apply
//! models, export decision grids and score clusterings.

mod error;
pub mod report;
pub mod table;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gmsdb::datasets::{self, GeneratorSpec};
use gmsdb::{metrics, pipeline, DataMatrix, GmsdbConfig};

pub use error::{CliError, CliResult};
use report::{RunReport, Timings};
use table::{feature_header, fmt_f64, read_column, read_table, write_rows};

#[derive(Debug, Parser)]
#[command(name = "gmsdb", version, about = "Superclustering with Gaussian mixtures and statistical separability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset.
    Gen(GenArgs),
    /// Fit a model and write it with a run report.
    Fit(FitCmd),
    /// Label points with a fitted model.
    Predict(PredictArgs),
    /// Hard labels over a regular 2-D grid.
    Grid(GridArgs),
    /// Score predictions against labels, or repeat gen + fit over seeds.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Preset name, optionally with a `+noise` suffix.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// JSON file holding an explicit generator spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Noise fraction overriding the preset's.
    #[arg(long)]
    pub noise: Option<f64>,
}

impl DatasetArgs {
    fn resolve(&self) -> CliResult<(String, GeneratorSpec)> {
        match (&self.preset, &self.spec) {
            (Some(name), None) => {
                let spec = datasets::preset(name, self.noise).map_err(|e| CliError::Usage(e.to_string()))?;
                Ok((name.clone(), spec))
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)?;
                let mut spec: GeneratorSpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                if let Some(f) = self.noise {
                    spec.set_noise_frac(f);
                }
                Ok((path.display().to_string(), spec))
            }
            _ => Err(CliError::Usage("give exactly one of --preset or --spec".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2)]
    pub n_min: usize,
    #[arg(long, default_value_t = 50)]
    pub n_max: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = gmsdb::distance::DEFAULT_PAIR_CAP)]
    pub pair_cap: usize,
    #[arg(long, default_value_t = gmsdb::numerics::DEFAULT_RIDGE)]
    pub ridge: f64,
    /// Consecutive single-supercluster radii tolerated before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FitArgs {
    pub fn config(&self) -> CliResult<GmsdbConfig> {
        let config = GmsdbConfig {
            alpha: self.alpha,
            n_min: self.n_min,
            n_max: self.n_max,
            restarts: self.restarts,
            pair_cap: self.pair_cap,
            ridge: self.ridge,
            seed: self.seed,
            single_cluster_patience: self.patience,
            ..GmsdbConfig::default()
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Text report path; a JSON copy is written to `<report>.json`.
    /// Printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Emit one probability column per supercluster.
    #[arg(long)]
    pub soft: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `xmin,xmax,ymin,ymax`
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: String,
    /// Cells per axis, `n` or `nx,ny`.
    #[arg(long, default_value = "100")]
    pub resolution: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions CSV with a `label` column.
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    /// CSV whose `label` column holds the reference labels.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Repeat gen + fit over this many consecutive seeds.
    #[arg(long, conflicts_with_all = ["pred", "truth"])]
    pub runs: Option<u64>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub fit: FitArgs,
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Fit(a) => fit(&a),
        Command::Predict(a) => predict(&a),
        Command::Grid(a) => grid(&a),
        Command::Eval(a) => eval(&a),
    }
}

fn gen(a: &GenArgs) -> CliResult<String> {
    let (id, spec) = a.dataset.resolve()?;
    let ds = datasets::generate(&spec, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let comments = vec![
        serde_json::to_string(&spec).expect("spec serializes"),
        format!("dataset={id} seed={}", a.seed),
    ];
    let mut header = feature_header(ds.points.d());
    header.push(table::LABEL_COLUMN.into());
    let rows = ds.points.rows().zip(&ds.labels).map(|(r, l)| {
        r.iter().map(|&v| fmt_f64(v)).chain(std::iter::once(l.to_string())).collect::<Vec<_>>()
    });
    write_rows(&a.out, &comments, &header, rows)?;
    Ok(format!("wrote {} points ({} groups) to {}\n", ds.points.n(), ds.n_groups(), a.out.display()))
}

fn pair_counts_opt(truth: Option<&Vec<String>>, labels: &[usize]) -> CliResult<Option<metrics::PairCounts>> {
    match truth {
        Some(t) if t.len() >= 2 => Ok(Some(metrics::pair_counts(t, labels)?)),
        _ => Ok(None),
    }
}

fn fit(a: &FitCmd) -> CliResult<String> {
    let config = a.fit.config()?;
    let data = read_table(&a.input)?;
    if data.points.n() < 2 {
        return Err(CliError::Data(format!("{}: need at least 2 points to fit", a.input.display())));
    }
    let model = pipeline::fit(&data.points, &config)?;
    pipeline::save_model(&model, &a.model)?;
    let labels = pipeline::predict_hard(&model, &data.points)?;
    let pairs = pair_counts_opt(data.labels.as_ref(), &labels)?;
    let report = RunReport::new(&a.input.display().to_string(), data.points.n(), &model, pairs);
    match &a.report {
        Some(p) => {
            report.write(p)?;
            Ok(format!(
                "N_S={} N_BIC={} model={} report={}\n",
                report.n_superclusters,
                report.n_bic,
                a.model.display(),
                p.display()
            ))
        }
        None => Ok(report.to_text()),
    }
}

fn check_dim(model: &gmsdb::GmsdbModel, x: &DataMatrix) -> CliResult<()> {
    if model.dim() != x.d() {
        return Err(CliError::Data(format!(
            "dimension mismatch: model has {} features, input has {}",
            model.dim(),
            x.d()
        )));
    }
    Ok(())
}

fn predict(a: &PredictArgs) -> CliResult<String> {
    let model = pipeline::load_model(&a.model)?;
    let data = read_table(&a.input)?;
    check_dim(&model, &data.points)?;
    let truth = data.labels.as_ref();
    let with_truth = |mut row: Vec<String>, i: usize| {
        if let Some(t) = truth {
            row.push(t[i].clone());
        }
        row
    };
    let mut header: Vec<String> = if a.soft {
        (0..model.n_superclusters()).map(|k| format!("p{k}")).collect()
    } else {
        vec![table::LABEL_COLUMN.into()]
    };
    if truth.is_some() {
        header.push("truth".into());
    }
    if a.soft {
        let probs = pipeline::predict_soft(&model, &data.points)?;
        let rows = probs
            .rows()
            .enumerate()
            .map(|(i, r)| with_truth(r.iter().map(|&p| fmt_f64(p)).collect(), i));
        write_rows(&a.out, &[], &header, rows)?;
    } else {
        let labels = pipeline::predict_hard(&model, &data.points)?;
        let rows = labels.iter().enumerate().map(|(i, l)| with_truth(vec![l.to_string()], i));
        write_rows(&a.out, &[], &header, rows)?;
    }
    Ok(format!("wrote {} rows to {}\n", data.points.n(), a.out.display()))
}

fn parse_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("{what}: not a number: '{s}'"))))
        .collect()
}

/// Cell centers are not used: the grid includes both bounds on each axis.
pub fn grid_points(bounds: [f64; 4], nx: usize, ny: usize) -> CliResult<DataMatrix> {
    if nx < 2 || ny < 2 {
        return Err(CliError::Usage("resolution must be at least 2 per axis".into()));
    }
    let [x0, x1, y0, y1] = bounds;
    if !(bounds.iter().all(|v| v.is_finite()) && x0 < x1 && y0 < y1) {
        return Err(CliError::Usage(format!("bounds must satisfy xmin < xmax and ymin < ymax, got {bounds:?}")));
    }
    let axis = |lo: f64, hi: f64, n: usize, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut values = Vec::with_capacity(nx * ny * 2);
    for j in 0..ny {
        for i in 0..nx {
            values.push(axis(x0, x1, nx, i));
            values.push(axis(y0, y1, ny, j));
        }
    }
    Ok(DataMatrix::new(nx * ny, 2, values)?)
}

fn grid(a: &GridArgs) -> CliResult<String> {
    let b = parse_list(&a.bounds, "--bounds")?;
    let bounds: [f64; 4] =
        b.try_into().map_err(|_| CliError::Usage("--bounds takes xmin,xmax,ymin,ymax".into()))?;
    let res: Vec<usize> = a
        .resolution
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("--resolution: bad value '{s}'"))))
        .collect::<CliResult<_>>()?;
    let (nx, ny) = match res[..] {
        [n] => (n, n),
        [nx, ny] => (nx, ny),
        _ => return Err(CliError::Usage("--resolution takes n or nx,ny".into())),
    };
    let model = pipeline::load_model(&a.model)?;
    if model.dim() != 2 {
        return Err(CliError::Data(format!("grid export needs a 2-D model, this one has d = {}", model.dim())));
    }
    let pts = grid_points(bounds, nx, ny)?;
    let labels = pipeline::predict_hard(&model, &pts)?;
    let mut header = feature_header(2);
    header.push(table::LABEL_COLUMN.into());
    let rows = pts.rows().zip(&labels).map(|(p, l)| vec![fmt_f64(p[0]), fmt_f64(p[1]), l.to_string()]);
    write_rows(&a.out, &[], &header, rows)?;
    Ok(format!("wrote {}x{} grid to {}\n", nx, ny, a.out.display()))
}

/// Per-seed outcome of a multi-run evaluation.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub n_superclusters: usize,
    pub n_bic: usize,
    pub rand_index: f64,
    pub seconds: Timings,
}

/// Generates the dataset with each seed, fits with the same seed and scores
/// the training labels.
pub fn multi_run(spec: &GeneratorSpec, fit: &FitArgs, runs: u64) -> CliResult<Vec<SeedRun>> {
    (fit.seed..fit.seed + runs)
        .map(|seed| {
            let ds = datasets::generate(spec, seed).map_err(|e| CliError::Usage(e.to_string()))?;
            let config = FitArgs { seed, ..fit.clone() }.config()?;
            let model = pipeline::fit(&ds.points, &config)?;
            let labels = pipeline::predict_hard(&model, &ds.points)?;
            Ok(SeedRun {
                seed,
                n_superclusters: model.n_superclusters(),
                n_bic: model.n_bic(),
                rand_index: metrics::rand_index(&ds.labels, &labels)?,
                seconds: model.stage_timings.into(),
            })
        })
        .collect()
}

fn eval(a: &EvalArgs) -> CliResult<String> {
    if let Some(runs) = a.runs {
        if runs < 2 {
            return Err(CliError::Usage("--runs needs at least 2 seeds".into()));
        }
        let (id, spec) = a.dataset.resolve()?;
        let results = multi_run(&spec, &a.fit, runs)?;
        return Ok(format_runs(&id, &results));
    }
    let (pred, truth) = match (&a.pred, &a.truth) {
        (Some(p), Some(t)) => (p, t),
        _ => return Err(CliError::Usage("give --pred and --truth, or --runs with a dataset".into())),
    };
    let predicted = read_column(pred, table::LABEL_COLUMN)?;
    let reference = read_column(truth, truth_column(truth)?)?;
    if predicted.len() != reference.len() {
        return Err(CliError::Data(format!(
            "length mismatch: {} predictions, {} reference labels",
            predicted.len(),
            reference.len()
        )));
    }
    let c = metrics::pair_counts(&reference, &predicted)?;
    Ok(format!("RI    {:.6}\nPWTP  {:.6}\nPWTN  {:.6}\n", c.rand_index(), c.pwtp(), c.pwtn()))
}

/// Predictions files carry the reference under `truth`; datasets under `label`.
fn truth_column(path: &Path) -> CliResult<&'static str> {
    Ok(if table::has_column(path, "truth")? { "truth" } else { table::LABEL_COLUMN })
}

pub fn format_runs(id: &str, runs: &[SeedRun]) -> String {
    let ri: Vec<f64> = runs.iter().map(|r| r.rand_index).collect();
    let (lo, hi) = metrics::run_interval(&ri, 0.95).expect("at least two runs");
    let median = gmsdb::numerics::percentile(&ri, 50.0).expect("non-empty");
    let mean = |f: fn(&Timings) -> f64| runs.iter().map(|r| f(&r.seconds)).sum::<f64>() / runs.len() as f64;
    let mut s = format!("dataset {id}, {} runs\n", runs.len());
    for r in runs {
        s += &format!(
            "seed {:>4}  N_BIC {:>3}  N_S {:>3}  RI {:.4}  total {:.2}s\n",
            r.seed, r.n_bic, r.n_superclusters, r.rand_index, r.seconds.total
        );
    }
    s += &format!("RI interval (0.95)  [{lo:.4}, {hi:.4}]  median {median:.4}\n");
    s += &format!(
        "mean seconds  stage1 {:.3}  stage2 {:.3}  stage3-4 {:.4}  total {:.3}\n",
        mean(|t| t.stage1),
        mean(|t| t.stage2),
        mean(|t| t.stage34),
        mean(|t| t.total)
    );
    s
}
