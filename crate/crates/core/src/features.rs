//! CSI feature extraction.
//!
//! Two families of features are computed from the per-AP channel matrices:
//! the normalized truncated-tap vector that feeds the positioning network, and
//! the large-scale features (power, angle/delay power profiles, covariance
//! magnitude, truncated delay profile) matched against the digital twin.
//!
//! Transforms are explicit unitary DFT matrix products. With `K <= 8` and
//! `S <= 64` this is cheap and keeps every value checkable against a naive sum.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = Array2<Complex64>;

/// Channel state at one timestamp: one `K x S` block per AP.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    pub per_ap: Vec<CMatrix>,
    pub timestamp: f64,
}

impl CsiTensor {
    pub fn new(per_ap: Vec<CMatrix>, timestamp: f64) -> Result<Self> {
        let Some(first) = per_ap.first() else {
            return Err(Error::Dimension("CSI tensor needs at least one AP".into()));
        };
        let shape = first.dim();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Dimension(format!("empty CSI block {shape:?}")));
        }
        if let Some((a, m)) = per_ap.iter().enumerate().find(|(_, m)| m.dim() != shape) {
            return Err(Error::Dimension(format!(
                "AP {a} block has shape {:?}, expected {shape:?}",
                m.dim()
            )));
        }
        Ok(Self { per_ap, timestamp })
    }

    pub fn num_aps(&self) -> usize {
        self.per_ap.len()
    }

    pub fn antennas(&self) -> usize {
        self.per_ap[0].nrows()
    }

    pub fn subcarriers(&self) -> usize {
        self.per_ap[0].ncols()
    }

    /// `[H(1); ...; H(A)]`, shape `M x S` with `M = A K`.
    pub fn stacked(&self) -> CMatrix {
        let k = self.antennas();
        let mut out = CMatrix::zeros((self.num_aps() * k, self.subcarriers()));
        for (a, block) in self.per_ap.iter().enumerate() {
            out.slice_mut(s![a * k..(a + 1) * k, ..]).assign(block);
        }
        out
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            per_ap: self.per_ap.iter().map(|b| b.mapv(|x| x * factor)).collect(),
            timestamp: self.timestamp,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.per_ap.iter().all(is_zero_block)
    }
}

pub fn is_zero_block(block: &CMatrix) -> bool {
    block.iter().all(|x| x.re == 0.0 && x.im == 0.0)
}

pub fn frobenius_sq(block: &CMatrix) -> f64 {
    block.iter().map(|x| x.norm_sqr()).sum()
}

/// `N`-point unitary DFT matrix, `F[k, n] = exp(-j 2 pi k n / N) / sqrt(N)`.
pub fn unitary_dft(n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_shape_fn((n, n), |(k, m)| {
        // reduce the exponent modulo n before scaling to keep phases exact-ish
        let e = ((k * m) % n) as f64;
        Complex64::from_polar(scale, -2.0 * PI * e / n as f64)
    })
}

/// First `taps` columns of `H F_S^H` (delay domain).
pub fn delay_taps(h: &CMatrix, taps: usize) -> CMatrix {
    let f = unitary_dft(h.ncols());
    let fh = f.t().mapv(|x| x.conj());
    h.dot(&fh.slice(s![.., ..taps]))
}

fn check_taps(taps: usize, subcarriers: usize) -> Result<()> {
    if taps == 0 || taps > subcarriers {
        return Err(Error::InvalidArgument(format!(
            "number of taps {taps} outside 1..={subcarriers}"
        )));
    }
    Ok(())
}

/// Column-major vectorization of the truncated delay-domain matrix.
fn truncated_tap_vector(h: &CMatrix, taps: usize) -> Vec<Complex64> {
    let t = delay_taps(h, taps);
    t.t().iter().copied().collect()
}

/// Normalized magnitude vector `|h| / ||h||` of a complex vector.
fn normalized_magnitudes(h: &[Complex64]) -> Option<Vec<f64>> {
    let norm = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(h.iter().map(|x| x.norm() / norm).collect())
}

/// Network input feature: unit-norm magnitudes of the first `C` delay taps of
/// the stacked CSI.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFeature(pub Vec<f64>);

impl CsiFeature {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn csi_input_feature(csi: &CsiTensor, taps: usize) -> Result<CsiFeature> {
    check_taps(taps, csi.subcarriers())?;
    let h = truncated_tap_vector(&csi.stacked(), taps);
    normalized_magnitudes(&h)
        .map(CsiFeature)
        .ok_or_else(|| Error::ZeroCsi(format!("CSI at t = {} s is identically zero", csi.timestamp)))
}

/// Energy of the first `taps` delay taps.
pub fn feat_power(block: &CMatrix, taps: usize) -> Result<f64> {
    check_taps(taps, block.ncols())?;
    Ok(delay_taps(block, taps).iter().map(|x| x.norm_sqr()).sum())
}

/// Angle-power profile: row sums of `|F_K H|^2`.
pub fn feat_app(block: &CMatrix) -> Vec<f64> {
    let hf = unitary_dft(block.nrows()).dot(block);
    hf.rows().into_iter().map(|r| r.iter().map(|x| x.norm_sqr()).sum()).collect()
}

/// Delay-power profile over all `S` taps: column sums of `|H F_S^H|^2`.
pub fn feat_dpp(block: &CMatrix) -> Vec<f64> {
    let t = delay_taps(block, block.ncols());
    t.columns().into_iter().map(|c| c.iter().map(|x| x.norm_sqr()).sum()).collect()
}

/// Elementwise magnitude of the angular Gram matrix, column-major, length `K^2`.
pub fn feat_cov(block: &CMatrix) -> Vec<f64> {
    let hf = unitary_dft(block.nrows()).dot(block);
    let gram = hf.dot(&hf.t().mapv(|x| x.conj()));
    gram.t().iter().map(|x| x.norm()).collect()
}

/// Truncated delay profile of a single AP block.
pub fn feat_tdp(block: &CMatrix, taps: usize) -> Result<Vec<f64>> {
    check_taps(taps, block.ncols())?;
    normalized_magnitudes(&truncated_tap_vector(block, taps))
        .ok_or_else(|| Error::ZeroCsi("TDP of an all-zero block".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Power,
    App,
    Dpp,
    Covariance,
    Tdp,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::Power,
        FeatureKind::App,
        FeatureKind::Dpp,
        FeatureKind::Covariance,
        FeatureKind::Tdp,
    ];

    /// Per-AP feature length `D`.
    pub fn dim(self, antennas: usize, subcarriers: usize, taps: usize) -> usize {
        match self {
            FeatureKind::Power => 1,
            FeatureKind::App => antennas,
            FeatureKind::Dpp => subcarriers,
            FeatureKind::Covariance => antennas * antennas,
            FeatureKind::Tdp => antennas * taps,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Power => "power",
            FeatureKind::App => "app",
            FeatureKind::Dpp => "dpp",
            FeatureKind::Covariance => "cov",
            FeatureKind::Tdp => "tdp",
        }
    }

    pub fn tag(self) -> i64 {
        match self {
            FeatureKind::Power => 0,
            FeatureKind::App => 1,
            FeatureKind::Dpp => 2,
            FeatureKind::Covariance => 3,
            FeatureKind::Tdp => 4,
        }
    }

    pub fn from_tag(tag: i64) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Learning rate used with this feature unless configured otherwise.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            FeatureKind::App | FeatureKind::Tdp => 5e-3,
            _ => 1e-3,
        }
    }

    /// Triplet-loss weight used with this feature unless configured otherwise.
    pub fn default_lambda_cc(self) -> f64 {
        match self {
            FeatureKind::Power | FeatureKind::App => 10.0,
            FeatureKind::Dpp | FeatureKind::Covariance => 5.0,
            FeatureKind::Tdp => 1.0,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(FeatureKind::Power),
            "app" => Ok(FeatureKind::App),
            "dpp" => Ok(FeatureKind::Dpp),
            "cov" | "covariance" => Ok(FeatureKind::Covariance),
            "tdp" => Ok(FeatureKind::Tdp),
            other => Err(Error::InvalidArgument(format!("unknown feature kind '{other}'"))),
        }
    }
}

/// Large-scale feature of one AP block. An all-zero block yields a zero
/// vector of the right length for every kind.
pub fn per_ap_feature(kind: FeatureKind, block: &CMatrix, taps: usize) -> Result<Vec<f64>> {
    let (k, s) = block.dim();
    check_taps(taps, s)?;
    if is_zero_block(block) {
        return Ok(vec![0.0; kind.dim(k, s, taps)]);
    }
    match kind {
        FeatureKind::Power => Ok(vec![feat_power(block, taps)?]),
        FeatureKind::App => Ok(feat_app(block)),
        FeatureKind::Dpp => Ok(feat_dpp(block)),
        FeatureKind::Covariance => Ok(feat_cov(block)),
        FeatureKind::Tdp => feat_tdp(block, taps),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleFeature {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
}

impl LargeScaleFeature {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Concatenate per-AP features in AP order.
pub fn stack_large_scale(kind: FeatureKind, per_ap: &[Vec<f64>]) -> Result<LargeScaleFeature> {
    let Some(first) = per_ap.first() else {
        return Err(Error::Dimension("no per-AP features to stack".into()));
    };
    let d = first.len();
    if let Some((a, v)) = per_ap.iter().enumerate().find(|(_, v)| v.len() != d) {
        return Err(Error::Dimension(format!(
            "AP {a} feature has length {}, expected {d}",
            v.len()
        )));
    }
    Ok(LargeScaleFeature {
        values: per_ap.concat(),
        kind,
    })
}

pub fn large_scale_feature(kind: FeatureKind, csi: &CsiTensor, taps: usize) -> Result<LargeScaleFeature> {
    let per_ap = csi
        .per_ap
        .iter()
        .map(|b| per_ap_feature(kind, b, taps))
        .collect::<Result<Vec<_>>>()?;
    stack_large_scale(kind, &per_ap)
}
