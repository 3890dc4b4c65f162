//! Chart-quality and positioning-accuracy metrics.

use std::fmt;

use nalgebra::Point2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Normalization constant used by trustworthiness and continuity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GammaForm {
    /// `2 / (N J (2N - 3J - 1))`.
    #[default]
    Standard,
    /// `2 / (N J (N - 3J - 1))`.
    Literal,
}

impl GammaForm {
    pub fn gamma(self, n: usize, j: usize) -> f64 {
        let (n, j) = (n as f64, j as f64);
        match self {
            GammaForm::Standard => 2.0 / (n * j * (2.0 * n - 3.0 * j - 1.0)),
            GammaForm::Literal => 2.0 / (n * j * (n - 3.0 * j - 1.0)),
        }
    }
}

/// Neighborhood size `0.05 N`, at least one.
pub fn default_neighbors(n: usize) -> usize {
    ((0.05 * n as f64).round() as usize).max(1)
}

fn check_pair(truth: &[Point2<f64>], est: &[Point2<f64>]) -> Result<()> {
    if truth.len() != est.len() {
        return Err(Error::Dimension(format!("{} true vs {} estimated positions", truth.len(), est.len())));
    }
    if truth.iter().chain(est).any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidArgument("positions must be finite".into()));
    }
    Ok(())
}

/// `ranks[n][j]`: 1-based rank of `j` among the neighbours of `n` by
/// distance, ties broken by index; `ranks[n][n] = 0`.
pub fn rank_matrix(pts: &[Point2<f64>]) -> Vec<Vec<usize>> {
    let n = pts.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((pts[i] - pts[j]).norm(), j))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut ranks = vec![0; n];
            for (r, &(_, j)) in order.iter().enumerate() {
                ranks[j] = r + 1;
            }
            ranks
        })
        .collect()
}

fn check_neighbors(n: usize, j: usize) -> Result<()> {
    if j < 1 || 2 * j >= n {
        return Err(Error::InvalidArgument(format!("neighborhood size {j} must satisfy 1 <= J < N/2 for N = {n}")));
    }
    Ok(())
}

/// Sum over `n` of `(rank_a(n,j) - J)` for `j` in the `b`-neighbourhood but
/// not in the `a`-neighbourhood.
fn intrusion_sum(ranks_a: &[Vec<usize>], ranks_b: &[Vec<usize>], j: usize) -> f64 {
    ranks_a
        .iter()
        .zip(ranks_b)
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .filter(|(&a, &b)| b >= 1 && b <= j && a > j)
                .map(|(&a, _)| (a - j) as f64)
                .sum::<f64>()
        })
        .sum()
}

pub fn trustworthiness(truth: &[Point2<f64>], est: &[Point2<f64>], j: usize, form: GammaForm) -> Result<f64> {
    check_pair(truth, est)?;
    check_neighbors(truth.len(), j)?;
    let s = intrusion_sum(&rank_matrix(truth), &rank_matrix(est), j);
    Ok(1.0 - form.gamma(truth.len(), j) * s)
}

pub fn continuity(truth: &[Point2<f64>], est: &[Point2<f64>], j: usize, form: GammaForm) -> Result<f64> {
    check_pair(truth, est)?;
    check_neighbors(truth.len(), j)?;
    let s = intrusion_sum(&rank_matrix(est), &rank_matrix(truth), j);
    Ok(1.0 - form.gamma(truth.len(), j) * s)
}

fn pairwise(pts: &[Point2<f64>]) -> Vec<f64> {
    let n = pts.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for k in i + 1..n {
            out.push((pts[i] - pts[k]).norm());
        }
    }
    out
}

/// Stress with the optimal scale `eta = sum(d_hat d) / sum(d^2)`.
///
/// Equal to 1 when every estimate coincides or every true point coincides.
pub fn kruskal_stress(truth: &[Point2<f64>], est: &[Point2<f64>]) -> Result<f64> {
    check_pair(truth, est)?;
    if truth.len() < 2 {
        return Err(Error::InvalidArgument("stress needs at least two points".into()));
    }
    let d = pairwise(truth);
    let dh = pairwise(est);
    let sdd: f64 = d.iter().zip(&dh).map(|(a, b)| a * b).sum();
    let sd2: f64 = d.iter().map(|a| a * a).sum();
    let sh2: f64 = dh.iter().map(|a| a * a).sum();
    if sh2 == 0.0 || sd2 == 0.0 {
        return Ok(1.0);
    }
    let eta = sdd / sd2;
    let num: f64 = d.iter().zip(&dh).map(|(a, b)| (b - eta * a).powi(2)).sum();
    Ok((num / sh2).sqrt().clamp(0.0, 1.0))
}

fn quantize(values: &[f64], bins: usize) -> Vec<usize> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| {
            if range > 0.0 {
                (((v - lo) / range * bins as f64) as usize).min(bins - 1)
            } else {
                0
            }
        })
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// `1 - I(V, Q) / H(V, Q)` over quantized pairwise distances.
pub fn rajski_distance(truth: &[Point2<f64>], est: &[Point2<f64>], bins: usize) -> Result<f64> {
    check_pair(truth, est)?;
    if truth.len() < 2 || bins == 0 {
        return Err(Error::InvalidArgument("Rajski distance needs two points and at least one bin".into()));
    }
    let v = quantize(&pairwise(truth), bins);
    let q = quantize(&pairwise(est), bins);
    rajski_from_bins(&v, &q, bins)
}

pub(crate) fn rajski_from_bins(v: &[usize], q: &[usize], bins: usize) -> Result<f64> {
    let mut joint = vec![0usize; bins * bins];
    let mut mv = vec![0usize; bins];
    let mut mq = vec![0usize; bins];
    for (&a, &b) in v.iter().zip(q) {
        joint[a * bins + b] += 1;
        mv[a] += 1;
        mq[b] += 1;
    }
    let total = v.len() as f64;
    let h = entropy(joint.into_iter(), total);
    if h <= 0.0 {
        return Err(Error::ZeroJointEntropy);
    }
    let i = entropy(mv.into_iter(), total) + entropy(mq.into_iter(), total) - h;
    Ok((1.0 - i / h).clamp(0.0, 1.0))
}

fn errors(truth: &[Point2<f64>], est: &[Point2<f64>]) -> Result<Vec<f64>> {
    check_pair(truth, est)?;
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no positions".into()));
    }
    Ok(truth.iter().zip(est).map(|(a, b)| (a - b).norm()).collect())
}

/// Mean Euclidean distance error.
pub fn mde(truth: &[Point2<f64>], est: &[Point2<f64>]) -> Result<f64> {
    let e = errors(truth, est)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Sorted error at 1-based position `ceil(0.95 N)`.
pub fn pde95(truth: &[Point2<f64>], est: &[Point2<f64>]) -> Result<f64> {
    let mut e = errors(truth, est)?;
    e.sort_by(f64::total_cmp);
    let idx = (95 * e.len()).div_ceil(100);
    Ok(e[idx - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub tw: f64,
    pub ct: f64,
    pub ks: f64,
    pub rd: f64,
    pub mde: f64,
    pub pde95: f64,
    pub j: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "tw,ct,ks,rd,mde,pde95,j";

    /// All metrics with `J = 0.05 N` unless given.
    pub fn compute(truth: &[Point2<f64>], est: &[Point2<f64>], j: Option<usize>, form: GammaForm) -> Result<Self> {
        check_pair(truth, est)?;
        let j = j.unwrap_or_else(|| default_neighbors(truth.len()));
        check_neighbors(truth.len(), j)?;
        let rt = rank_matrix(truth);
        let re = rank_matrix(est);
        let gamma = form.gamma(truth.len(), j);
        Ok(Self {
            tw: 1.0 - gamma * intrusion_sum(&rt, &re, j),
            ct: 1.0 - gamma * intrusion_sum(&re, &rt, j),
            ks: kruskal_stress(truth, est)?,
            rd: rajski_distance(truth, est, 20)?,
            mde: mde(truth, est)?,
            pde95: pde95(truth, est)?,
            j,
        })
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.tw, self.ct, self.ks, self.rd, self.mde, self.pde95, self.j
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.trim().split(',').collect();
        if f.len() != 7 {
            return Err(Error::InvalidArgument(format!("expected 7 metric columns, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad metric value {s:?}: {e}")));
        Ok(Self {
            tw: num(f[0])?,
            ct: num(f[1])?,
            ks: num(f[2])?,
            rd: num(f[3])?,
            mde: num(f[4])?,
            pde95: num(f[5])?,
            j: f[6].parse().map_err(|e| Error::InvalidArgument(format!("bad J {:?}: {e}", f[6])))?,
        })
    }

    /// Metric values in CSV column order, without `J`.
    pub fn values(&self) -> [f64; 6] {
        [self.tw, self.ct, self.ks, self.rd, self.mde, self.pde95]
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TW {:.3}  CT {:.3}  KS {:.3}  RD {:.3}  MDE {:.3} m  PDE95 {:.3} m",
            self.tw, self.ct, self.ks, self.rd, self.mde, self.pde95
        )
    }
}
