//! Command-line front end: dataset synthesis, training, baselines,
//! evaluation, sweeps, plots and CSV export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chartkit::experiments::{
    build_dt, estimate_positions, evaluate_model, run_baseline, simulate, sweep, train, BaselineKind, Datasets,
    ExperimentConfig, LossRecord, Method, RunResult, ScenarioPreset, SweepAxis,
};
use chartkit::features::FeatureKind;
use chartkit::io::{
    load_checkpoint, load_dataset, load_dt, save_checkpoint, save_dataset, save_dt, ArrayData, Checkpoint, Container,
    PlotSpec, PositionTable, Series,
};
use chartkit::metrics::MetricsReport;
use chartkit::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "chartkit", version, about = "Channel charting anchored to a digital twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment configuration (TOML); built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data seed for `simulate`/`dt-build`, network seed otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_parser = parse_feature)]
    feature: Option<FeatureKind>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long = "lambda-cc")]
    lambda_cc: Option<f64>,
    #[arg(long = "lambda-dt")]
    lambda_dt: Option<f64>,
}

#[derive(Debug, Clone, Args)]
struct Inputs {
    /// Dataset container from `simulate`; simulated afresh when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Twin container from `dt-build`; built afresh when absent.
    #[arg(long)]
    dt: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the walk and write `dataset.ccds`.
    Simulate(#[command(flatten)] Common),
    /// Build the twin grid and its features, written to `dt.ccds`.
    DtBuild(#[command(flatten)] Common),
    /// Train the proposed method for one seed.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Run a baseline over the configured seeds.
    Baseline {
        /// bbb, affine or fingerprint.
        #[arg(value_parser = parse_baseline)]
        kind: BaselineKind,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Metrics of a checkpoint, or of a positions CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, conflicts_with = "positions", required_unless_present = "positions")]
        checkpoint: Option<PathBuf>,
        /// CSV with columns true_x,true_y,est_x,est_y.
        #[arg(long)]
        positions: Option<PathBuf>,
    },
    /// Proposed method over several values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// grid_spacing, ap_shift or ue_height.
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Scatter plot of true and estimated positions over the floor plan.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        positions: PathBuf,
        #[arg(long, default_value = "True and estimated trajectories")]
        title: String,
    },
    /// Write every array of a container as CSV.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_feature(s: &str) -> std::result::Result<FeatureKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_baseline(s: &str) -> std::result::Result<BaselineKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 on a runtime error and 2 on a usage
/// error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(common) => {
            let mut config = load_config(&common)?;
            if let Some(seed) = common.seed {
                config.data_seed = seed;
            }
            let out = prepare_out(&common.out, &config)?;
            let sim = simulate(&config)?;
            save_dataset(&out.join("dataset.ccds"), &sim)?;
            println!(
                "{} training and {} test samples, noise variance {:e}",
                sim.train_idx.len(),
                sim.test_idx.len(),
                sim.noise_variance
            );
            Ok(())
        }
        Command::DtBuild(common) => {
            let mut config = load_config(&common)?;
            if let Some(seed) = common.seed {
                config.data_seed = seed;
            }
            let out = prepare_out(&common.out, &config)?;
            let dt = build_dt(&config)?;
            save_dt(&out.join("dt.ccds"), &dt)?;
            println!("{} grid points, {} feature values each", dt.positions.len(), dt.feature_dim());
            Ok(())
        }
        Command::Train { common, inputs } => {
            let config = load_config(&common)?;
            let seed = common.seed.or(config.seeds.first().copied()).unwrap_or(0);
            let out = prepare_out(&common.out, &config)?;
            let data = load_datasets(&config, &inputs)?;
            let outcome = match train(Method::Proposed, &config, &data, seed) {
                Ok(o) => o,
                Err(Error::Diverged { iteration, loss, checkpoint }) => {
                    let ck = Checkpoint { model: *checkpoint, seed, iterations: iteration };
                    save_checkpoint(&out.join("model.ccds"), &ck)?;
                    return Err(Error::InvalidArgument(format!(
                        "training diverged at iteration {iteration} (loss {loss}); last finite model saved"
                    )));
                }
                Err(e) => return Err(e),
            };
            let ck = Checkpoint { model: outcome.model, seed, iterations: config.iterations };
            save_checkpoint(&out.join("model.ccds"), &ck)?;
            let mut curve = String::from(LossRecord::CSV_HEADER);
            curve.push('\n');
            for r in &outcome.curve {
                curve.push_str(&r.to_csv_row());
                curve.push('\n');
            }
            fs::write(out.join("loss_curve.csv"), curve)?;
            let (tr, te) = evaluate_model(&config, &ck.model, &data)?;
            write_split_metrics(&out.join("metrics.csv"), &tr, &te)?;
            write_positions(&out, &ck, &data)?;
            println!("test: {te}");
            Ok(())
        }
        Command::Baseline { kind, common, inputs } => {
            let config = load_config(&common)?;
            let out = prepare_out(&common.out, &config)?;
            let data = load_datasets(&config, &inputs)?;
            let result = run_baseline(kind, &config, &data)?;
            write_run(&out, &result)
        }
        Command::Evaluate { common, inputs, checkpoint, positions } => {
            let config = load_config(&common)?;
            fs::create_dir_all(&common.out)?;
            let path = common.out.join("metrics.csv");
            if let Some(p) = positions {
                let table = PositionTable::read_csv(&p)?;
                let report = MetricsReport::compute(&table.truth, &table.estimate, None, config.gamma)?;
                let text = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.to_csv_row());
                fs::write(&path, &text)?;
                print!("{text}");
            } else if let Some(c) = checkpoint {
                let ck = load_checkpoint(&c)?;
                let data = load_datasets(&config, &inputs)?;
                let (tr, te) = evaluate_model(&config, &ck.model, &data)?;
                write_split_metrics(&path, &tr, &te)?;
                print!("{}", fs::read_to_string(&path)?);
            }
            Ok(())
        }
        Command::Sweep { common, axis, values } => {
            let config = load_config(&common)?;
            let out = prepare_out(&common.out, &config)?;
            let table = sweep(&config, axis, &values)?;
            let path = out.join(format!("sweep_{}.csv", axis.name()));
            fs::write(&path, table.to_csv())?;
            let mut per_seed = format!("{},method,seed,split,{}\n", axis.name(), MetricsReport::CSV_HEADER);
            for (v, r) in &table.rows {
                for line in r.per_seed_csv().lines().skip(1) {
                    let _ = writeln!(per_seed, "{v},{line}");
                }
            }
            fs::write(out.join(format!("sweep_{}_per_seed.csv", axis.name())), per_seed)?;
            print!("{}", table.to_csv());
            Ok(())
        }
        Command::Plot { common, positions, title } => {
            let config = load_config(&common)?;
            let table = PositionTable::read_csv(&positions)?;
            let preset = ScenarioPreset::from_config(&config)?;
            let spec = PlotSpec {
                title,
                walls: preset.scenario.walls.iter().map(|w| (w.start, w.end)).collect(),
                aps: preset.scenario.ap_positions_2d(),
                series: vec![
                    Series { name: "true".into(), color: "black".into(), points: table.truth },
                    Series { name: "estimated".into(), color: "#1f77b4".into(), points: table.estimate },
                ],
                width_px: 720.0,
            };
            fs::create_dir_all(&common.out)?;
            fs::write(common.out.join("trajectory.svg"), spec.render())?;
            Ok(())
        }
        Command::Export { common, input } => {
            let container = Container::load(&input)?;
            fs::create_dir_all(&common.out)?;
            for array in &container.arrays {
                let file = common.out.join(format!("{}.csv", array.name.replace(['/', '\\'], "_")));
                fs::write(file, array_csv(&array.dims, &array.data))?;
            }
            println!("{} arrays written to {}", container.arrays.len(), common.out.display());
            Ok(())
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = common.feature {
        config.feature = f;
    }
    if let Some(n) = common.iterations {
        config.iterations = n;
    }
    if let Some(v) = common.lambda_cc {
        config.lambda_cc = Some(v);
    }
    if let Some(v) = common.lambda_dt {
        config.lambda_dt = v;
    }
    if let Some(s) = common.seed {
        config.seeds = vec![s];
    }
    config.validate()?;
    Ok(config)
}

/// Creates `out` and records the effective configuration next to the
/// results.
fn prepare_out(out: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), config.to_toml_string())?;
    Ok(out.to_path_buf())
}

fn load_datasets(config: &ExperimentConfig, inputs: &Inputs) -> Result<Datasets> {
    let sim = match &inputs.data {
        Some(p) => load_dataset(p)?,
        None => simulate(config)?,
    };
    let dt = match &inputs.dt {
        Some(p) => load_dt(p)?,
        None => build_dt(config)?,
    };
    if dt.kind != config.feature {
        return Err(Error::InvalidArgument(format!(
            "twin holds {} features but the configuration asks for {}",
            dt.kind.name(),
            config.feature.name()
        )));
    }
    Datasets::assemble(config, &sim, dt)
}

fn write_split_metrics(path: &Path, train: &MetricsReport, test: &MetricsReport) -> Result<()> {
    let text = format!(
        "split,{}\ntrain,{}\ntest,{}\n",
        MetricsReport::CSV_HEADER,
        train.to_csv_row(),
        test.to_csv_row()
    );
    fs::write(path, text)?;
    Ok(())
}

fn write_positions(out: &Path, ck: &Checkpoint, data: &Datasets) -> Result<()> {
    for (name, split) in [("train", &data.train), ("test", &data.test)] {
        let table = PositionTable {
            truth: split.positions.clone(),
            estimate: estimate_positions(&ck.model, &split.inputs, &data.dt)?,
        };
        table.write_csv(&out.join(format!("positions_{name}.csv")))?;
    }
    Ok(())
}

fn write_run(out: &Path, result: &RunResult) -> Result<()> {
    fs::write(out.join(format!("{}_summary.csv", result.label)), result.summary_csv())?;
    fs::write(out.join(format!("{}_per_seed.csv", result.label)), result.per_seed_csv())?;
    print!("{}", result.summary_csv());
    Ok(())
}

/// First dimension as rows, remaining dimensions flattened into columns;
/// complex values take a `re`/`im` column pair.
fn array_csv(dims: &[u64], data: &ArrayData) -> String {
    let cells: Vec<Vec<String>> = match data {
        ArrayData::F64(v) => v.iter().map(|x| vec![x.to_string()]).collect(),
        ArrayData::I64(v) => v.iter().map(|x| vec![x.to_string()]).collect(),
        ArrayData::C64(v) => v.iter().map(|z| vec![z.re.to_string(), z.im.to_string()]).collect(),
    };
    let rows = match dims.first() {
        Some(&d) => d as usize,
        None => 1,
    };
    let cols = cells.len().checked_div(rows).unwrap_or(0);
    let mut out = (0..cols)
        .flat_map(|c| match data {
            ArrayData::C64(_) => vec![format!("re{c}"), format!("im{c}")],
            _ => vec![format!("c{c}")],
        })
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in cells.chunks(cols.max(1)).take(rows) {
        out.push_str(&row.concat().join(","));
        out.push('\n');
    }
    out
}
