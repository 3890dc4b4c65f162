//! Training objectives and the closed-form affine alignment.

mod affine;
mod bbb;
mod triplets;

pub use affine::{affine_fit, AffineMap};
pub use bbb::{ap_power_db, bbb_losses, bbb_sample, power_threshold, BbbLosses, BbbSample, BoundingBox};
pub use triplets::{build_triplets, Triplet, TripletSampler, TripletSet};

use nalgebra::{Point2, Vector2};
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// A scalar loss with its gradient with respect to each position.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grads: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub cc: f64,
    pub dt: f64,
    pub bi: f64,
    pub boxed: f64,
}

impl LossWeights {
    pub fn new(cc: f64, dt: f64, bi: f64, boxed: f64) -> Result<Self> {
        if [cc, dt, bi, boxed].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("loss weights must be finite and non-negative".into()));
        }
        Ok(Self { cc, dt, bi, boxed })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cc: 1.0,
            dt: 1.0,
            bi: 0.0,
            boxed: 0.0,
        }
    }
}

/// `lambda_cc * cc + lambda_dt * dt`.
pub fn combined_loss(weights: &LossWeights, cc: f64, dt: f64) -> f64 {
    weights.cc * cc + weights.dt * dt
}

fn unit_or_zero(v: Vector2<f64>) -> Vector2<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vector2::zeros()
    }
}

/// Mean hinge `(|x_n - x_c| - |x_n - x_f| + margin)^+` over the triplets.
pub fn triplet_loss(positions: &[Point2<f64>], triplets: &[Triplet], margin: f64) -> Result<LossGrad> {
    if triplets.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    let n = positions.len();
    if let Some(t) = triplets.iter().find(|t| t.anchor >= n || t.close >= n || t.far >= n) {
        return Err(Error::Dimension(format!(
            "triplet ({}, {}, {}) indexes beyond {n} positions",
            t.anchor, t.close, t.far
        )));
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut grads = vec![Vector2::zeros(); n];
    let mut total = 0.0;
    for t in triplets {
        let dc = positions[t.anchor] - positions[t.close];
        let df = positions[t.anchor] - positions[t.far];
        let h = dc.norm() - df.norm() + margin;
        if h > 0.0 {
            total += h;
            let uc = unit_or_zero(dc) * scale;
            let uf = unit_or_zero(df) * scale;
            grads[t.anchor] += uc - uf;
            grads[t.close] -= uc;
            grads[t.far] += uf;
        }
    }
    Ok(LossGrad {
        value: total * scale,
        grads,
    })
}

/// `exp(-cos^2)` between a measured and an expected feature.
pub fn dt_sample_loss(v: &[f64], v_tilde: &[f64]) -> f64 {
    let (a, s, t) = dots(v, v_tilde);
    (-(a * a) / (s * t)).exp()
}

fn dots(v: &[f64], w: &[f64]) -> (f64, f64, f64) {
    v.iter().zip(w).fold((0.0, 0.0, 0.0), |(a, s, t), (&x, &y)| (a + x * y, s + x * x, t + y * y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtLoss {
    pub value: f64,
    /// `dL/dv_tilde`, same shape as the expected features.
    pub grad: Array2<f64>,
    /// Rows skipped because the measured feature is zero.
    pub excluded: Vec<usize>,
}

/// Mean DT loss over rows of `measured` and `expected` (`batch x D_v`).
pub fn dt_loss(measured: ArrayView2<'_, f64>, expected: ArrayView2<'_, f64>) -> Result<DtLoss> {
    if measured.dim() != expected.dim() {
        return Err(Error::Dimension(format!(
            "measured features {:?} vs expected {:?}",
            measured.dim(),
            expected.dim()
        )));
    }
    let mut grad = Array2::zeros(expected.raw_dim());
    let mut excluded = Vec::new();
    let mut included = Vec::new();
    let mut total = 0.0;
    for (i, (v, w)) in measured.rows().into_iter().zip(expected.rows()).enumerate() {
        let (a, s, t) = v.iter().zip(w.iter()).fold((0.0, 0.0, 0.0), |(a, s, t), (&x, &y)| {
            (a + x * y, s + x * x, t + y * y)
        });
        if s == 0.0 {
            excluded.push(i);
            continue;
        }
        if !(t > 0.0) {
            return Err(Error::ZeroExpectedFeature { sample: i });
        }
        let l = (-(a * a) / (s * t)).exp();
        total += l;
        // d(cos^2)/dw = 2a/(s t) (v - (a/t) w)
        let k = -l * 2.0 * a / (s * t);
        let r = a / t;
        for ((g, &x), &y) in grad.row_mut(i).iter_mut().zip(v.iter()).zip(w.iter()) {
            *g = k * (x - r * y);
        }
        included.push(i);
    }
    if !excluded.is_empty() {
        log::debug!("dt loss: {} of {} samples have a zero measured feature", excluded.len(), measured.nrows());
    }
    if included.is_empty() {
        log::warn!("dt loss: every sample has a zero measured feature");
        return Ok(DtLoss {
            value: 0.0,
            grad,
            excluded,
        });
    }
    let m = included.len() as f64;
    grad.mapv_inplace(|g| g / m);
    Ok(DtLoss {
        value: total / m,
        grad,
        excluded,
    })
}

/// Mean squared Euclidean error.
pub fn supervised_loss(estimates: &[Point2<f64>], truth: &[Point2<f64>]) -> Result<LossGrad> {
    if estimates.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} estimates vs {} ground-truth positions",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    let n = estimates.len() as f64;
    let mut value = 0.0;
    let grads = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            let d = e - t;
            value += d.norm_squared();
            d * (2.0 / n)
        })
        .collect();
    Ok(LossGrad { value: value / n, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation2, Vector2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triplet_loss_direct_value() {
        let pos = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.5, 0.0)];
        let l = triplet_loss(&pos, &[Triplet::new(0, 1, 2)], 0.9).unwrap();
        assert!((l.value - 1.4).abs() < 1e-15);
    }

    #[test]
    fn triplet_loss_inactive_hinge() {
        let pos = [Point2::new(0.0, 0.0), Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)];
        let l = triplet_loss(&pos, &[Triplet::new(0, 1, 2)], 0.0).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grads.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn triplet_loss_zero_distance_has_zero_gradient() {
        // anchor on top of the close point while the hinge is active
        let pos = [Point2::new(1.0, 1.0), Point2::new(1.0, 1.0), Point2::new(1.2, 1.0)];
        let l = triplet_loss(&pos, &[Triplet::new(0, 1, 2)], 0.5).unwrap();
        assert!((l.value - 0.3).abs() < 1e-12);
        assert!(l.grads.iter().all(|g| g.iter().all(|v| v.is_finite())));
        assert_eq!(l.grads[1], Vector2::zeros());
    }

    #[test]
    fn triplet_loss_errors() {
        let pos = [Point2::new(0.0, 0.0)];
        assert!(matches!(triplet_loss(&pos, &[], 1.0), Err(Error::EmptyTriplets)));
        assert!(triplet_loss(&pos, &[Triplet::new(0, 1, 0)], 1.0).is_err());
    }

    #[test]
    fn triplet_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos: Vec<Point2<f64>> = (0..6).map(|_| Point2::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0))).collect();
        let trips: Vec<Triplet> = (0..10)
            .map(|_| Triplet::new(rng.gen_range(0..6), rng.gen_range(0..6), rng.gen_range(0..6)))
            .filter(|t| t.anchor != t.close && t.anchor != t.far)
            .collect();
        let base = triplet_loss(&pos, &trips, 1.5).unwrap();
        let h = 1e-6;
        for i in 0..pos.len() {
            for d in 0..2 {
                let mut p = pos.clone();
                p[i][d] += h;
                let mut m = pos.clone();
                m[i][d] -= h;
                let fd = (triplet_loss(&p, &trips, 1.5).unwrap().value - triplet_loss(&m, &trips, 1.5).unwrap().value) / (2.0 * h);
                assert!((fd - base.grads[i][d]).abs() < 1e-6, "{fd} vs {}", base.grads[i][d]);
            }
        }
    }

    #[test]
    fn dt_loss_parallel_and_orthogonal() {
        assert!((dt_sample_loss(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((dt_sample_loss(&[1.0, 2.0, 3.0], &[-0.5, -1.0, -1.5]) - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(dt_sample_loss(&[1.0, 0.0], &[0.0, 3.0]), 1.0);
    }

    #[test]
    fn dt_loss_excludes_and_rejects() {
        let v = Array2::from_shape_vec((2, 2), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let w = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let l = dt_loss(v.view(), w.view()).unwrap();
        assert_eq!(l.excluded, vec![0]);
        assert!((l.value - (-0.5f64).exp()).abs() < 1e-15);
        let w0 = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(dt_loss(v.view(), w0.view()), Err(Error::ZeroExpectedFeature { sample: 1 })));
    }

    #[test]
    fn dt_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = Array2::from_shape_fn((4, 5), |_| rng.gen_range(-1.0..1.0));
        let w = Array2::from_shape_fn((4, 5), |_| rng.gen_range(-1.0..1.0));
        let g = dt_loss(v.view(), w.view()).unwrap().grad;
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..5 {
                let mut p = w.clone();
                p[[i, j]] += h;
                let mut m = w.clone();
                m[[i, j]] -= h;
                let fd = (dt_loss(v.view(), p.view()).unwrap().value - dt_loss(v.view(), m.view()).unwrap().value) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn combined_loss_arithmetic() {
        let w = LossWeights::new(10.0, 1.0, 0.0, 0.0).unwrap();
        assert!((combined_loss(&w, 0.2, 0.4) - 2.4).abs() < 1e-15);
        let pure_cc = LossWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(combined_loss(&pure_cc, 0.7, 123.0), 0.7);
        let pure_dt = LossWeights::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let dt = dt_sample_loss(&[1.0, 2.0], &[3.0, 6.0]);
        assert!((combined_loss(&pure_dt, 5.0, dt) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(LossWeights::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn supervised_examples() {
        let t = [Point2::new(1.0, 1.0), Point2::new(2.0, 0.0)];
        assert_eq!(supervised_loss(&t, &t).unwrap().value, 0.0);
        let l = supervised_loss(&[Point2::new(3.0, 4.0)], &[Point2::origin()]).unwrap();
        assert_eq!(l.value, 25.0);
        assert_eq!(l.grads[0], Vector2::new(6.0, 8.0));
        assert!(supervised_loss(&t, &t[..1]).is_err());
    }

    #[test]
    fn supervised_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Point2<f64>> = (0..17).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
        let b: Vec<Point2<f64>> = (0..17).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
        let mut direct = 0.0;
        for i in 0..17 {
            direct += (a[i].x - b[i].x).powi(2) + (a[i].y - b[i].y).powi(2);
        }
        assert!((supervised_loss(&a, &b).unwrap().value - direct / 17.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn lemma_lower_bound(
            v in prop::collection::vec(-10.0f64..10.0, 1..12),
            w_seed in any::<u64>(),
        ) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let mut rng = ChaCha8Rng::seed_from_u64(w_seed);
            let w: Vec<f64> = v.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
            prop_assume!(w.iter().any(|x| x.abs() > 1e-3));
            prop_assert!(dt_sample_loss(&v, &w) >= (-1.0f64).exp() - 1e-15);
            let scale: f64 = rng.gen_range(-5.0..5.0);
            prop_assume!(scale.abs() > 1e-3);
            let parallel: Vec<f64> = v.iter().map(|x| x * scale).collect();
            prop_assert!((dt_sample_loss(&v, &parallel) - (-1.0f64).exp()).abs() < 1e-12);
        }

        #[test]
        fn triplet_loss_rigid_invariance(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..12),
            angle in 0.0f64..6.3,
            tx in -10.0f64..10.0,
            ty in -10.0f64..10.0,
            seed in any::<u64>(),
        ) {
            let pos: Vec<Point2<f64>> = pts.iter().map(|&(x, y)| Point2::new(x, y)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = pos.len();
            let trips: Vec<Triplet> = (0..20).map(|_| Triplet::new(rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n))).collect();
            let rot = Rotation2::new(angle);
            let moved: Vec<Point2<f64>> = pos.iter().map(|p| rot * p + Vector2::new(tx, ty)).collect();
            let a = triplet_loss(&pos, &trips, 0.9).unwrap().value;
            let b = triplet_loss(&moved, &trips, 0.9).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn dt_loss_scale_invariance(
            v in prop::collection::vec(0.01f64..5.0, 3..10),
            scale in 1e-6f64..1e6,
        ) {
            let w: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + i as f64 * 0.3).collect();
            let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
            prop_assert!((dt_sample_loss(&v, &w) - dt_sample_loss(&scaled, &w)).abs() < 1e-12);
        }
    }
}
