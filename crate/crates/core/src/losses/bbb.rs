use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};
use crate::features::{frobenius_sq, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min <= x_max) || !(y_min <= y_max) {
            return Err(Error::InvalidArgument(format!(
                "invalid box x [{x_min}, {x_max}] y [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    /// Smallest box containing every point; `None` for an empty slice.
    pub fn enclosing(points: &[Point2<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut b = Self {
            x_min: first.x,
            x_max: first.x,
            y_min: first.y,
            y_max: first.y,
        };
        for p in points {
            b.x_min = b.x_min.min(p.x);
            b.x_max = b.x_max.max(p.x);
            b.y_min = b.y_min.min(p.y);
            b.y_max = b.y_max.max(p.y);
        }
        Some(b)
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn closest(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::new(p.x.clamp(self.x_min, self.x_max), p.y.clamp(self.y_min, self.y_max))
    }

    /// Squared distance to the box, zero inside.
    pub fn sq_distance(&self, p: &Point2<f64>) -> f64 {
        (p - self.closest(p)).norm_squared()
    }
}

/// `20 log10 ||H||_F`; minus infinity for a silent AP.
pub fn ap_power_db(block: &CMatrix) -> f64 {
    10.0 * frobenius_sq(block).log10()
}

/// Nearest-rank percentile of all finite per-AP powers.
pub fn power_threshold(powers_db: &[Vec<f64>], percentile: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidArgument(format!("percentile {percentile} outside [0, 100]")));
    }
    let mut all: Vec<f64> = powers_db.iter().flatten().copied().filter(|p| p.is_finite()).collect();
    if all.is_empty() {
        return Err(Error::AllZeroCsi);
    }
    all.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * all.len() as f64).ceil() as usize;
    Ok(all[rank.clamp(1, all.len()) - 1])
}

/// Estimated line-of-sight APs and close/far AP pairs of one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BbbSample {
    pub los: Vec<usize>,
    /// `(close, far)`: the estimate should be nearer to `close`.
    pub pairs: Vec<(usize, usize)>,
}

pub fn bbb_sample(powers_db: &[f64], p_thr: f64, m_p: f64) -> BbbSample {
    let los: Vec<usize> = (0..powers_db.len()).filter(|&a| powers_db[a] > p_thr).collect();
    let mut pairs = Vec::new();
    for &c in &los {
        for &f in &los {
            if powers_db[c] > powers_db[f] + m_p {
                pairs.push((c, f));
            }
        }
    }
    BbbSample { los, pairs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BbbLosses {
    pub bi: f64,
    pub boxed: f64,
    pub grad_bi: Vec<Vector2<f64>>,
    pub grad_box: Vec<Vector2<f64>>,
}

/// Bilateration hinge averaged over all AP pairs of the batch and
/// squared box distance averaged over all estimated line-of-sight APs.
pub fn bbb_losses(
    samples: &[BbbSample],
    ap_positions: &[Point2<f64>],
    boxes: &[BoundingBox],
    m_b: f64,
    positions: &[Point2<f64>],
) -> Result<BbbLosses> {
    if samples.len() != positions.len() {
        return Err(Error::Dimension(format!(
            "{} BBB samples for {} positions",
            samples.len(),
            positions.len()
        )));
    }
    if boxes.len() != ap_positions.len() {
        return Err(Error::Dimension(format!(
            "{} boxes for {} APs",
            boxes.len(),
            ap_positions.len()
        )));
    }
    let n_aps = ap_positions.len();
    if samples
        .iter()
        .any(|s| s.los.iter().any(|&a| a >= n_aps) || s.pairs.iter().any(|&(c, f)| c >= n_aps || f >= n_aps))
    {
        return Err(Error::Dimension("AP index out of range in BBB sets".into()));
    }
    let n_pairs: usize = samples.iter().map(|s| s.pairs.len()).sum();
    let n_los: usize = samples.iter().map(|s| s.los.len()).sum();
    let mut out = BbbLosses {
        bi: 0.0,
        boxed: 0.0,
        grad_bi: vec![Vector2::zeros(); positions.len()],
        grad_box: vec![Vector2::zeros(); positions.len()],
    };
    if n_pairs == 0 && n_los == 0 {
        log::warn!("BBB: no AP pairs and no line-of-sight APs in the batch");
    }
    if n_pairs > 0 {
        let scale = 1.0 / n_pairs as f64;
        for (i, (s, x)) in samples.iter().zip(positions).enumerate() {
            for &(c, f) in &s.pairs {
                let dc = x - ap_positions[c];
                let df = x - ap_positions[f];
                let h = dc.norm() - df.norm() + m_b;
                if h > 0.0 {
                    out.bi += h * scale;
                    let uc = if dc.norm() > 0.0 { dc.normalize() } else { Vector2::zeros() };
                    let uf = if df.norm() > 0.0 { df.normalize() } else { Vector2::zeros() };
                    out.grad_bi[i] += (uc - uf) * scale;
                }
            }
        }
    }
    if n_los > 0 {
        let scale = 1.0 / n_los as f64;
        for (i, (s, x)) in samples.iter().zip(positions).enumerate() {
            for &a in &s.los {
                let d = x - boxes[a].closest(x);
                out.boxed += d.norm_squared() * scale;
                out.grad_box[i] += d * (2.0 * scale);
            }
        }
    }
    Ok(out)
}
