use nalgebra::{Point2, Vector2};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::features::{large_scale_feature, FeatureKind};
use crate::geom::{synth_csi_set, DtGrid, Scenario};

/// Softmax output: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("empty probability vector".into()));
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("probability entries must be non-negative".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {sum}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// Grid positions and their simulated large-scale features.
#[derive(Debug, Clone, PartialEq)]
pub struct DtDatabase {
    pub positions: Vec<Point2<f64>>,
    pub height: f64,
    /// `D_v x P`, one column per grid point.
    pub features: Array2<f64>,
    pub kind: FeatureKind,
    pub taps: usize,
}

impl DtDatabase {
    /// Noise-free simulation of every grid point.
    pub fn build(scenario: &Scenario, grid: &DtGrid, kind: FeatureKind, taps: usize) -> Result<Self> {
        let csi = synth_csi_set(scenario, &grid.positions_3d(), None)?;
        let columns = csi
            .iter()
            .map(|t| large_scale_feature(kind, t, taps).map(|f| f.values))
            .collect::<Result<Vec<_>>>()?;
        let dim = columns[0].len();
        let features = Array2::from_shape_fn((dim, columns.len()), |(d, p)| columns[p][d]);
        log::debug!("digital twin: {} points, feature {kind} of width {dim}", grid.len());
        Ok(Self {
            positions: grid.points.clone(),
            height: grid.height,
            features,
            kind,
            taps,
        })
    }

    pub fn from_parts(positions: Vec<Point2<f64>>, features: Array2<f64>, kind: FeatureKind, taps: usize) -> Result<Self> {
        if positions.is_empty() || positions.len() != features.ncols() {
            return Err(Error::Dimension(format!(
                "{} grid positions but {} feature columns",
                positions.len(),
                features.ncols()
            )));
        }
        Ok(Self {
            positions,
            height: 0.0,
            features,
            kind,
            taps,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.nrows()
    }

    /// `2 x P` matrix of grid coordinates.
    pub fn position_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((2, self.len()), |(r, p)| self.positions[p][r])
    }

    pub fn feature_column(&self, p: usize) -> Array1<f64> {
        self.features.column(p).to_owned()
    }

    /// Grid points with a zero feature column (no AP reaches them).
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&p| self.features.column(p).iter().all(|&v| v == 0.0))
            .collect()
    }
}

/// `x_hat = X p`.
pub fn expected_position(p: &ProbVector, dt: &DtDatabase) -> Result<Point2<f64>> {
    check_len(p.len(), dt)?;
    let v = p
        .values()
        .iter()
        .zip(&dt.positions)
        .fold(Vector2::zeros(), |acc, (&w, x)| acc + x.coords * w);
    Ok(Point2::from(v))
}

/// `v_tilde = V p`.
pub fn expected_feature(p: &ProbVector, dt: &DtDatabase) -> Result<Vec<f64>> {
    check_len(p.len(), dt)?;
    Ok(dt.features.dot(&Array1::from(p.values().to_vec())).to_vec())
}

/// Row-wise expected positions of a `batch x P` probability matrix.
pub fn expected_positions(probs: ArrayView2<'_, f64>, dt: &DtDatabase) -> Result<Vec<Point2<f64>>> {
    check_len(probs.ncols(), dt)?;
    let xy = probs.dot(&dt.position_matrix().t());
    Ok(xy.rows().into_iter().map(|r| Point2::new(r[0], r[1])).collect())
}

/// Row-wise expected features, `batch x D_v`.
pub fn expected_features(probs: ArrayView2<'_, f64>, dt: &DtDatabase) -> Result<Array2<f64>> {
    check_len(probs.ncols(), dt)?;
    Ok(probs.dot(&dt.features.t()))
}

fn check_len(p: usize, dt: &DtDatabase) -> Result<()> {
    if p != dt.len() {
        return Err(Error::Dimension(format!(
            "probability vector of length {p} for a grid of {} points",
            dt.len()
        )));
    }
    Ok(())
}
