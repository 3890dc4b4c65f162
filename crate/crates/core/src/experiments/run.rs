use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Point2;
use rayon::prelude::*;

use super::{build_datasets, estimate_positions, train, Datasets, ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::losses::{affine_fit, AffineMap};
use crate::metrics::MetricsReport;
use crate::model::ChartModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Bbb,
    Affine,
    Fingerprint,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bbb" => Ok(BaselineKind::Bbb),
            "affine" => Ok(BaselineKind::Affine),
            "fingerprint" => Ok(BaselineKind::Fingerprint),
            other => Err(Error::InvalidArgument(format!(
                "unknown baseline {other:?} (expected bbb, affine or fingerprint)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub train: MetricsReport,
    pub test: MetricsReport,
    /// Mean training loss over the first and last 50 iterations.
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub label: String,
    pub seeds: Vec<SeedResult>,
    pub seconds: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RunResult {
    /// Aggregate of one test-split metric picked by `f`.
    pub fn test_stat(&self, f: impl Fn(&MetricsReport) -> f64) -> (f64, f64) {
        mean_std(&self.seeds.iter().map(|s| f(&s.test)).collect::<Vec<_>>())
    }

    pub fn train_stat(&self, f: impl Fn(&MetricsReport) -> f64) -> (f64, f64) {
        mean_std(&self.seeds.iter().map(|s| f(&s.train)).collect::<Vec<_>>())
    }

    pub fn mean_test_mde(&self) -> f64 {
        self.test_stat(|m| m.mde).0
    }

    /// Header plus one `mean±std` row per split.
    pub fn summary_csv(&self) -> String {
        let mut out = format!("method,split,{}\n", MetricsReport::CSV_HEADER.trim_end_matches(",j"));
        for (split, stat) in [("train", true), ("test", false)] {
            let cells: Vec<String> = (0..6)
                .map(|k| {
                    let (m, s) = if stat {
                        self.train_stat(|r| r.values()[k])
                    } else {
                        self.test_stat(|r| r.values()[k])
                    };
                    format!("{m:.4}±{s:.4}")
                })
                .collect();
            let _ = writeln!(out, "{},{split},{}", self.label, cells.join(","));
        }
        out
    }

    /// One row per seed and split with raw values.
    pub fn per_seed_csv(&self) -> String {
        let mut out = format!("method,seed,split,{}\n", MetricsReport::CSV_HEADER);
        for s in &self.seeds {
            let _ = writeln!(out, "{},{},train,{}", self.label, s.seed, s.train.to_csv_row());
            let _ = writeln!(out, "{},{},test,{}", self.label, s.seed, s.test.to_csv_row());
        }
        out
    }
}

fn evaluate_split(
    config: &ExperimentConfig,
    model: &ChartModel,
    data: &Datasets,
    align: Option<&AffineMap>,
) -> Result<(MetricsReport, MetricsReport, Vec<Point2<f64>>)> {
    let mut train_est = estimate_positions(model, &data.train.inputs, &data.dt)?;
    let mut test_est = estimate_positions(model, &data.test.inputs, &data.dt)?;
    if let Some(map) = align {
        train_est = map.apply_all(&train_est);
        test_est = map.apply_all(&test_est);
    }
    let tr = MetricsReport::compute(&data.train.positions, &train_est, None, config.gamma)?;
    let te = MetricsReport::compute(&data.test.positions, &test_est, None, config.gamma)?;
    Ok((tr, te, test_est))
}

/// Metrics of an already trained model.
pub fn evaluate_model(config: &ExperimentConfig, model: &ChartModel, data: &Datasets) -> Result<(MetricsReport, MetricsReport)> {
    let (tr, te, _) = evaluate_split(config, model, data, None)?;
    Ok((tr, te))
}

fn seed_results<F>(config: &ExperimentConfig, f: F) -> Result<Vec<Vec<SeedResult>>>
where
    F: Fn(u64) -> Result<Vec<SeedResult>> + Sync,
{
    config.seeds.par_iter().map(|&s| f(s)).collect()
}

fn one_seed(config: &ExperimentConfig, data: &Datasets, method: Method, seed: u64, align: bool) -> Result<Vec<SeedResult>> {
    let out = train(method, config, data, seed)?;
    let (initial_loss, final_loss) = out.loss_change(50);
    let (train_raw, test_raw, _) = evaluate_split(config, &out.model, data, None)?;
    let mut results = vec![SeedResult {
        seed,
        train: train_raw,
        test: test_raw,
        initial_loss,
        final_loss,
    }];
    if align {
        let chart = estimate_positions(&out.model, &data.train.inputs, &data.dt)?;
        let map = affine_fit(&chart, &data.train.positions)?;
        let (tr, te, _) = evaluate_split(config, &out.model, data, Some(&map))?;
        results.push(SeedResult {
            seed,
            train: tr,
            test: te,
            initial_loss,
            final_loss,
        });
    }
    Ok(results)
}

fn collect(label: &str, per_seed: Vec<Vec<SeedResult>>, pick: usize, seconds: f64) -> RunResult {
    RunResult {
        label: label.into(),
        seeds: per_seed.into_iter().map(|mut v| v.swap_remove(pick)).collect(),
        seconds,
    }
}

/// Trains and evaluates `method` once per configured seed.
pub fn run_method(method: Method, config: &ExperimentConfig, data: &Datasets) -> Result<RunResult> {
    let start = Instant::now();
    let per_seed = seed_results(config, |s| one_seed(config, data, method, s, false))?;
    let label = match method {
        Method::Proposed => config.feature.name(),
        m => m.name(),
    };
    Ok(collect(label, per_seed, 0, start.elapsed().as_secs_f64()))
}

pub fn run_proposed(config: &ExperimentConfig, data: &Datasets) -> Result<RunResult> {
    run_method(Method::Proposed, config, data)
}

/// Triplet-only training evaluated both raw and after the least-squares
/// affine alignment fitted on the training split.
pub fn run_triplet_with_alignment(config: &ExperimentConfig, data: &Datasets) -> Result<(RunResult, RunResult)> {
    let start = Instant::now();
    let per_seed = seed_results(config, |s| one_seed(config, data, Method::TripletOnly, s, true))?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        collect("triplet", per_seed.clone(), 0, secs),
        collect("affine", per_seed, 1, secs),
    ))
}

pub fn run_baseline(kind: BaselineKind, config: &ExperimentConfig, data: &Datasets) -> Result<RunResult> {
    match kind {
        BaselineKind::Bbb => {
            if data.ap_positions.len() != data.boxes.len() || data.ap_positions.is_empty() {
                return Err(Error::MissingSideInfo("AP positions and line-of-sight boxes".into()));
            }
            run_method(Method::Bbb, config, data)
        }
        BaselineKind::Affine => Ok(run_triplet_with_alignment(config, data)?.1),
        BaselineKind::Fingerprint => run_method(Method::Fingerprint, config, data),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    GridSpacing,
    ApShift,
    UeHeight,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid_spacing" | "grid-spacing" => Ok(SweepAxis::GridSpacing),
            "ap_shift" | "ap-shift" => Ok(SweepAxis::ApShift),
            "ue_height" | "ue-height" => Ok(SweepAxis::UeHeight),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep axis {other:?} (expected grid_spacing, ap_shift or ue_height)"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::GridSpacing => "grid_spacing",
            SweepAxis::ApShift => "ap_shift",
            SweepAxis::UeHeight => "ue_height",
        }
    }

    /// Copy of `config` with this axis set to `value`. The AP shift is
    /// applied along the x axis; the height sets the test-time UE height.
    pub fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        match self {
            SweepAxis::GridSpacing => {
                if !(value > 0.0) {
                    return Err(Error::InvalidArgument(format!("grid spacing {value} must be positive")));
                }
                c.grid_spacing = value;
            }
            SweepAxis::ApShift => c.ap_shift = [value, 0.0, 0.0],
            SweepAxis::UeHeight => {
                if !(value > 0.0) {
                    return Err(Error::InvalidArgument(format!("UE height {value} must be positive")));
                }
                c.inference_height = Some(value);
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<(f64, RunResult)>,
}

impl SweepTable {
    /// Rows per feature, one `mde`/`pde95` column pair per axis value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for (v, _) in &self.rows {
            let _ = write!(out, ",mde@{v},pde95@{v}");
        }
        out.push('\n');
        if let Some((_, first)) = self.rows.first() {
            out.push_str(&first.label);
        }
        for (_, r) in &self.rows {
            let (m, s) = r.test_stat(|x| x.mde);
            let (pm, ps) = r.test_stat(|x| x.pde95);
            let _ = write!(out, ",{m:.4}±{s:.4},{pm:.4}±{ps:.4}");
        }
        out.push('\n');
        out
    }
}

/// One full proposed-method run per axis value.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let c = axis.apply(config, v)?;
        log::info!("sweep {} = {v}", axis.name());
        let data = build_datasets(&c)?;
        rows.push((v, run_proposed(&c, &data)?));
    }
    Ok(SweepTable { axis, rows })
}
