use nalgebra::{Point2, Point3, Vector3};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ExperimentConfig, ScenarioPreset};
use crate::error::{Error, Result};
use crate::features::{csi_input_feature, large_scale_feature, CsiTensor, FeatureKind};
use crate::geom::{add_awgn_with_variance, generate_dt_grid, line_of_sight, noise_variance_for_snr, synth_csi_set, Scenario};
use crate::losses::{ap_power_db, BoundingBox};
use crate::model::DtDatabase;

/// Noisy measurements of one walk, already split into train and test.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    /// Sorted trajectory indices.
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train_positions: Vec<Point3<f64>>,
    pub train_csi: Vec<CsiTensor>,
    pub test_positions: Vec<Point3<f64>>,
    pub test_csi: Vec<CsiTensor>,
    pub noise_variance: f64,
}

/// Measurement-side model inputs for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub indices: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub positions: Vec<Point2<f64>>,
    /// `N x D_h` network inputs.
    pub inputs: Array2<f64>,
    /// `N x D_v` large-scale features.
    pub large_scale: Array2<f64>,
    /// `N x A` per-AP powers in dB.
    pub powers_db: Vec<Vec<f64>>,
}

impl Split {
    pub fn from_csi(indices: &[usize], positions: &[Point3<f64>], csi: &[CsiTensor], kind: FeatureKind, taps: usize) -> Result<Self> {
        if indices.len() != csi.len() || positions.len() != csi.len() {
            return Err(Error::Dimension("split indices, positions and CSI differ in length".into()));
        }
        let rows = csi
            .par_iter()
            .map(|t| {
                let input = csi_input_feature(t, taps)?.0;
                let v = large_scale_feature(kind, t, taps)?.values;
                let p: Vec<f64> = t.per_ap.iter().map(ap_power_db).collect();
                Ok((input, v, p))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = rows.len();
        let dh = rows.first().map_or(0, |r| r.0.len());
        let dv = rows.first().map_or(0, |r| r.1.len());
        Ok(Self {
            indices: indices.to_vec(),
            timestamps: csi.iter().map(|t| t.timestamp).collect(),
            positions: positions.iter().map(|p| Point2::new(p.x, p.y)).collect(),
            inputs: Array2::from_shape_fn((n, dh), |(i, j)| rows[i].0[j]),
            large_scale: Array2::from_shape_fn((n, dv), |(i, j)| rows[i].1[j]),
            powers_db: rows.into_iter().map(|r| r.2).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Everything a run needs: the measured splits, the digital twin and the
/// side information used by the baselines.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub scenario: Scenario,
    pub train: Split,
    pub test: Split,
    pub dt: DtDatabase,
    pub ap_positions: Vec<Point2<f64>>,
    /// Line-of-sight bounding box of each AP.
    pub boxes: Vec<BoundingBox>,
    pub noise_variance: f64,
}

/// Seeded random split of `0..n`; both halves sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let cut = ((n as f64) * fraction).round() as usize;
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Synthesize the walk, inject noise at the configured peak SNR and split.
pub fn simulate(config: &ExperimentConfig) -> Result<SimulatedData> {
    let preset = ScenarioPreset::from_config(config)?;
    let scenario = &preset.scenario;
    scenario.validate()?;
    let traj = preset.trajectory(config.ue_height)?;
    let clean = synth_csi_set(scenario, &traj.positions, Some(&traj.timestamps))?;
    let (train_idx, test_idx) = split_indices(traj.len(), config.split, config.data_seed);

    let test_height = config.test_height();
    let shifted_test = test_height != config.ue_height;
    let test_positions: Vec<Point3<f64>> = test_idx
        .iter()
        .map(|&i| {
            let p = traj.positions[i];
            Point3::new(p.x, p.y, test_height)
        })
        .collect();
    let test_clean = if shifted_test {
        let ts: Vec<f64> = test_idx.iter().map(|&i| traj.timestamps[i]).collect();
        Some(synth_csi_set(scenario, &test_positions, Some(&ts))?)
    } else {
        None
    };

    let mut reference: Vec<CsiTensor> = train_idx.iter().map(|&i| clean[i].clone()).collect();
    match &test_clean {
        Some(t) => reference.extend(t.iter().cloned()),
        None => reference.extend(test_idx.iter().map(|&i| clean[i].clone())),
    }
    let sigma2 = noise_variance_for_snr(&reference, config.taps, config.snr_db)?;
    let noisy = add_awgn_with_variance(&clean, sigma2, config.data_seed);
    let test_csi = match test_clean {
        Some(t) => add_awgn_with_variance(&t, sigma2, config.data_seed.wrapping_add(1)),
        None => test_idx.iter().map(|&i| noisy[i].clone()).collect(),
    };
    log::info!(
        "simulated {} samples ({} train / {} test), noise variance {sigma2:.3e}",
        traj.len(),
        train_idx.len(),
        test_idx.len()
    );
    Ok(SimulatedData {
        train_positions: train_idx.iter().map(|&i| traj.positions[i]).collect(),
        train_csi: train_idx.iter().map(|&i| noisy[i].clone()).collect(),
        train_idx,
        test_positions,
        test_csi,
        test_idx,
        noise_variance: sigma2,
    })
}

/// Noise-free digital-twin features on the configured grid, with the AP
/// positions displaced by the configured shift.
pub fn build_dt(config: &ExperimentConfig) -> Result<DtDatabase> {
    let preset = ScenarioPreset::from_config(config)?;
    let [dx, dy, dz] = config.ap_shift;
    let twin = preset.scenario.with_ap_shift(Vector3::new(dx, dy, dz));
    let grid = generate_dt_grid(&twin, config.grid_spacing, config.dt_height)?;
    DtDatabase::build(&twin, &grid, config.feature, config.taps)
}

/// Bounding rectangle of the grid points each AP sees directly.
pub fn line_of_sight_boxes(scenario: &Scenario, grid: &[Point2<f64>], height: f64) -> Vec<BoundingBox> {
    scenario
        .aps
        .iter()
        .map(|ap| {
            let visible: Vec<Point2<f64>> = grid
                .iter()
                .filter(|p| line_of_sight(scenario, &ap.position, &Point3::new(p.x, p.y, height)))
                .copied()
                .collect();
            BoundingBox::enclosing(&visible).unwrap_or(BoundingBox {
                x_min: ap.position.x,
                x_max: ap.position.x,
                y_min: ap.position.y,
                y_max: ap.position.y,
            })
        })
        .collect()
}

impl Datasets {
    pub fn assemble(config: &ExperimentConfig, sim: &SimulatedData, dt: DtDatabase) -> Result<Self> {
        let preset = ScenarioPreset::from_config(config)?;
        let train = Split::from_csi(&sim.train_idx, &sim.train_positions, &sim.train_csi, dt.kind, dt.taps)?;
        let test = Split::from_csi(&sim.test_idx, &sim.test_positions, &sim.test_csi, dt.kind, dt.taps)?;
        if train.large_scale.ncols() != dt.feature_dim() {
            return Err(Error::Dimension(format!(
                "measured feature width {} does not match the twin's {}",
                train.large_scale.ncols(),
                dt.feature_dim()
            )));
        }
        let boxes = line_of_sight_boxes(&preset.scenario, &dt.positions, dt.height);
        Ok(Self {
            ap_positions: preset.scenario.ap_positions_2d(),
            scenario: preset.scenario,
            train,
            test,
            dt,
            boxes,
            noise_variance: sim.noise_variance,
        })
    }
}

pub fn build_datasets(config: &ExperimentConfig) -> Result<Datasets> {
    let sim = simulate(config)?;
    let dt = build_dt(config)?;
    Datasets::assemble(config, &sim, dt)
}
