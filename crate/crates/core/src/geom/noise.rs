use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{feat_power, is_zero_block, CsiTensor};

/// `||h(a,n)||^2` of the truncated delay-tap vector for every `(n, a)`.
pub fn snr_per_block(csi: &[CsiTensor], taps: usize) -> Result<Vec<Vec<f64>>> {
    csi.iter()
        .map(|t| t.per_ap.iter().map(|b| feat_power(b, taps)).collect())
        .collect()
}

/// Noise variance that puts the strongest `(a, n)` block at `target_max_snr_db`.
pub fn noise_variance_for_snr(csi: &[CsiTensor], taps: usize, target_max_snr_db: f64) -> Result<f64> {
    let max_power = snr_per_block(csi, taps)?
        .into_iter()
        .flatten()
        .fold(0.0_f64, f64::max);
    if !(max_power > 0.0) {
        return Err(Error::AllZeroCsi);
    }
    Ok(max_power / 10f64.powf(target_max_snr_db / 10.0))
}

/// Add circular complex Gaussian noise so that the largest per-AP SNR
/// `||h(a,n)||^2 / sigma^2` equals `target_max_snr_db`.
///
/// Blocks that are exactly zero stay zero. Returns the noisy set and the
/// chosen `sigma^2`.
pub fn add_awgn(csi: &[CsiTensor], taps: usize, target_max_snr_db: f64, seed: u64) -> Result<(Vec<CsiTensor>, f64)> {
    let sigma2 = noise_variance_for_snr(csi, taps, target_max_snr_db)?;
    Ok((add_awgn_with_variance(csi, sigma2, seed), sigma2))
}

/// Noise injection with a given per-entry variance. Sequential over samples
/// so the draw order is fixed by the seed.
pub fn add_awgn_with_variance(csi: &[CsiTensor], sigma2: f64, seed: u64) -> Vec<CsiTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (sigma2 / 2.0).sqrt()).expect("finite variance");
    csi.iter()
        .map(|t| CsiTensor {
            per_ap: t
                .per_ap
                .iter()
                .map(|b| {
                    if is_zero_block(b) {
                        return b.clone();
                    }
                    b.mapv(|x| x + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
                })
                .collect(),
            timestamp: t.timestamp,
        })
        .collect()
}
