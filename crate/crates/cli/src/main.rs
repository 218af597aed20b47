use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use zcp::baselines::{cp_fit_classification, cp_fit_regression, IpmModel, Predictor};
use zcp::calibrate::{CostConfig, CostKind};
use zcp::coverage::{guaranteed_coverage, GuaranteeQuery};
use zcp::data::{self, Dataset, Task};
use zcp::eval::{evaluate, normalized_conservatism, render_svg, write_reports_csv, REPORT_HEADER};
use zcp::lp::MilpOptions;
use zcp::mlp::{train, Mlp, TrainConfig};
use zcp::outliers::{fit_zcp, OutlierMethod};
use zcp::placement::{place, Strategy};
use zcp::sweep::{run_experiment, DataConfig, PredictorKind, SweepConfig};
use zcp::{Error, Matrix, Vector};

#[derive(Parser)]
#[command(name = "zcp", version, about = "Zono-conformal prediction toolkit")]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true, env = "ZCP_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus JSON sidecar).
    Gen(GenArgs),
    /// Split a dataset into train/calibration/test files.
    Split(SplitArgs),
    /// Train a tanh network.
    Train(TrainArgs),
    /// Calibrate a ZCP, IPM or CP predictor.
    Fit(FitArgs),
    /// Coverage and conservatism of a predictor on a dataset.
    Eval(EvalArgs),
    /// Guaranteed coverage for a calibration setup.
    Bound(BoundArgs),
    /// Train once, then sweep the outlier count for every predictor.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    /// sd-r1, sd-r2, sd-c1 or sd-c2.
    name: String,
    /// Points (regression) or points per class (classification).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Min-max normalize every column to [0, 1].
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// train,cal,test fractions.
    #[arg(long, default_value = "0.75,0.1,0.15")]
    fractions: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives train.csv, cal.csv and test.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DataSource {
    #[arg(long)]
    data: PathBuf,
    /// Task of a CSV without sidecar.
    #[arg(long, requires = "n_y")]
    task: Option<String>,
    /// Output column count of a CSV without sidecar.
    #[arg(long)]
    n_y: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: DataSource,
    /// Hidden layer sizes, comma separated.
    #[arg(long, default_value = "64,64")]
    arch: String,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlacementArgs {
    /// orand, orand-star, qr or rand.
    #[arg(long, default_value = "orand")]
    placement: String,
    #[arg(long, default_value_t = 0.1)]
    p_p: f64,
    #[arg(long, default_value_t = 0)]
    placement_seed: u64,
    /// interval, rotated-interval, generator-lengths, score or score-difference.
    #[arg(long)]
    cost: Option<String>,
    #[arg(long, default_value_t = 10)]
    n_r: usize,
    #[arg(long, default_value_t = 0)]
    cost_seed: u64,
    /// search, greedy, milp or rmse.
    #[arg(long, default_value = "greedy")]
    method: String,
    /// Node cap of the mixed-integer search.
    #[arg(long, default_value_t = 20_000)]
    node_cap: usize,
}

impl PlacementArgs {
    fn cost(&self, task: Task) -> Result<CostConfig> {
        let kind = match &self.cost {
            Some(c) => CostKind::from_str(c)?,
            None => match task {
                Task::Regression => CostKind::RotatedInterval,
                Task::Classification => CostKind::Interval,
            },
        };
        let cost = CostConfig {
            kind,
            n_r: if kind == CostKind::RotatedInterval { self.n_r } else { 0 },
            seed: self.cost_seed,
        };
        cost.validate(task)?;
        Ok(cost)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    net: PathBuf,
    #[command(flatten)]
    source: DataSource,
    /// zcp, ipm or cp.
    #[arg(long, default_value = "zcp")]
    predictor: String,
    #[command(flatten)]
    placement: PlacementArgs,
    #[arg(long, default_value_t = 0)]
    n_out: usize,
    /// Re-check containment of every retained calibration point.
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: DataSource,
    /// Report CSV (printed to stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Paired baseline for the normalized conservatism.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// SVG of the first --svg-count prediction sets (2-D outputs only).
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    svg_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    n_m: u64,
    /// Number of optimization variables (n_u for ZCP/IPM).
    #[arg(long)]
    n_theta: u64,
    #[arg(long, default_value_t = 0)]
    n_out: u64,
    #[arg(long, default_value_t = 0.9)]
    confidence: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Synthetic dataset name.
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_cal: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "64,64")]
    arch: String,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[command(flatten)]
    placement: PlacementArgs,
    /// Largest outlier count; the sweep covers 0..=max.
    #[arg(long, default_value_t = 5)]
    max_out: usize,
    /// Comma-separated subset of zcp,ipm,cp.
    #[arg(long, default_value = "zcp,ipm,cp")]
    predictors: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|_| anyhow!(Error::InvalidArgument(format!("bad {what} entry {p:?}")))))
        .collect()
}

fn load_data(src: &DataSource) -> Result<Dataset> {
    if !src.data.exists() {
        bail!(Error::Data(format!("{} does not exist", src.data.display())));
    }
    Ok(match (&src.task, src.n_y) {
        (Some(task), Some(n_y)) => {
            let task = match task.as_str() {
                "regression" => Task::Regression,
                "classification" => Task::Classification,
                other => bail!(Error::InvalidArgument(format!("unknown task {other:?}"))),
            };
            data::load_csv(&src.data, task, n_y)?
        }
        _ => data::load(&src.data)?,
    })
}

fn write_json(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut d = data::generate(&a.name, a.n, a.seed)?;
    if a.normalize {
        d = data::normalize(&d)?;
    }
    data::save(&d, &a.out)?;
    println!("wrote {} rows to {}", d.len(), a.out.display());
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let d = data::load(&a.data)?;
    let f: Vec<f64> = parse_list(&a.fractions, "fraction")?;
    if f.len() != 3 {
        bail!(Error::InvalidArgument("--fractions needs three values".into()));
    }
    let (train_set, cal, test) = data::split(&d, (f[0], f[1], f[2]), a.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    for (name, part) in [("train", &train_set), ("cal", &cal), ("test", &test)] {
        data::save(part, &a.out_dir.join(format!("{name}.csv")))?;
    }
    println!("train {} / cal {} / test {}", train_set.len(), cal.len(), test.len());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let d = load_data(&a.source)?;
    let hidden: Vec<usize> = parse_list(&a.arch, "layer size")?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        momentum: a.momentum,
        seed: a.seed,
    };
    let net = train(&d, &hidden, &cfg)?;
    net.save(&a.out)?;
    println!("trained {:?} network, n_p = {}", net.hidden_sizes(), net.n_p());
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let net = Mlp::load(&a.net)?;
    let d = load_data(&a.source)?;
    let kind = PredictorKind::from_str(&a.predictor)?;
    let start = Instant::now();
    let predictor = match kind {
        PredictorKind::Cp => Predictor::Cp(match d.task {
            Task::Regression => cp_fit_regression(&net, &d, a.n_out)?,
            Task::Classification => cp_fit_classification(&net, &d, a.n_out)?,
        }),
        PredictorKind::Zcp | PredictorKind::Ipm => {
            let p = &a.placement;
            let cost = p.cost(d.task)?;
            let inputs: Vec<Vector> = (0..d.len()).map(|m| d.x(m)).collect();
            let mut placement = place(Strategy::from_str(&p.placement)?, &net, p.p_p, p.placement_seed, &inputs)?;
            if kind == PredictorKind::Ipm && !placement.has_identity_template() {
                placement = placement.with_template(Matrix::identity(placement.n_u(), placement.n_u()))?;
            }
            let milp = MilpOptions {
                node_cap: p.node_cap,
                ..MilpOptions::default()
            };
            let method = OutlierMethod::from_str(&p.method)?;
            let (model, res) = fit_zcp(&net, &placement, &d, &cost, a.n_out, method, &milp)?;
            if !res.proven_optimal {
                log::warn!("node cap reached; the outlier set is the best found, not proven optimal");
            }
            println!(
                "objective {:.6}, removed rows {:?}, n_u = {}",
                res.objective,
                model.removed,
                placement.n_u()
            );
            if a.audit {
                let failed = model.audit(&d, zcp::zonotope::DEFAULT_TOL)?;
                if !failed.is_empty() {
                    bail!(Error::Infeasible { measurements: failed });
                }
                println!("audit: all {} retained points covered", d.len() - model.removed.len());
            }
            match kind {
                PredictorKind::Ipm => Predictor::Ipm(IpmModel::from_zcp(model)?),
                _ => Predictor::Zcp(model),
            }
        }
    };
    write_json(&a.out, serde_json::to_string(&predictor)?)?;
    println!("fitted {} in {:.2}s", predictor.kind(), start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = Predictor::load(&a.model)?;
    let d = load_data(&a.source)?;
    let n_out = match &model {
        Predictor::Zcp(m) => m.removed.len(),
        Predictor::Ipm(m) => m.zcp.removed.len(),
        Predictor::Cp(m) => m.n_out,
    };
    let report = evaluate(&model, &d, n_out, a.seed)?;
    match &a.out {
        Some(path) => write_reports_csv(std::slice::from_ref(&report), path)?,
        None => println!("{REPORT_HEADER}\n{}", zcp::eval::report_row(&report)),
    }
    if let Some(base) = &a.baseline {
        let baseline = evaluate(&Predictor::load(base)?, &d, n_out, a.seed)?;
        let ratio = normalized_conservatism(&report.sizes, &baseline.sizes)?;
        println!("normalized conservatism vs {}: {ratio:.6}", baseline.predictor);
    }
    if let Some(svg) = &a.svg {
        if d.n_y() != 2 || d.task != Task::Regression {
            bail!(Error::InvalidArgument("SVG output needs two-dimensional regression outputs".into()));
        }
        let count = a.svg_count.min(d.len());
        let sets = (0..count).map(|m| model.prediction_set(&d.x(m))).collect::<zcp::Result<Vec<_>>>()?;
        let points: Vec<[f64; 2]> = (0..count).map(|m| [d.y(m)[0], d.y(m)[1]]).collect();
        fs::write(svg, render_svg(&sets, &points)?)?;
    }
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let row = |n_m: u64| -> Result<f64> {
        Ok(guaranteed_coverage(&GuaranteeQuery::new(n_m, a.n_theta, a.n_out)?, a.confidence)?)
    };
    let main = row(a.n_m)?;
    println!("n_m,n_theta,n_out,confidence,guaranteed_coverage");
    println!("{},{},{},{},{main:.6}", a.n_m, a.n_theta, a.n_out, a.confidence);
    for n_m in [a.n_m.saturating_sub(1), a.n_m + 1] {
        if let Ok(c) = row(n_m) {
            println!("# sensitivity n_m = {n_m}: {c:.6}");
        }
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let probe = data::generate(&a.dataset, 1, a.seed)?;
    let p = &a.placement;
    let cfg = SweepConfig {
        strategy: Strategy::from_str(&p.placement)?,
        p_p: p.p_p,
        placement_seed: p.placement_seed,
        cost: p.cost(probe.task)?,
        method: OutlierMethod::from_str(&p.method)?,
        n_outs: (0..=a.max_out).collect(),
        predictors: parse_list(&a.predictors, "predictor")?,
        bootstrap_seed: a.seed,
    };
    let data_cfg = DataConfig {
        name: a.dataset.clone(),
        n_train: a.n_train,
        n_cal: a.n_cal,
        n_test: a.n_test,
        seed: a.seed,
    };
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let hidden: Vec<usize> = parse_list(&a.arch, "layer size")?;
    let (_, result) = run_experiment(&data_cfg, &hidden, &train_cfg, &cfg)?;
    write_reports_csv(&result.reports, &a.out)?;
    for r in &result.reports {
        println!(
            "{:>3} n_out={} coverage={:.4} conservatism={:.6}",
            r.predictor, r.n_out, r.coverage, r.conservatism
        );
    }
    Ok(())
}

/// 2 usage, 3 data, 4 solver.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_)) => 2,
        Some(Error::Lp(_) | Error::Infeasible { .. } | Error::VolumeBudget { .. } | Error::Diverged { .. }) => 4,
        Some(_) => 3,
        None if err.downcast_ref::<std::io::Error>().is_some() => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
