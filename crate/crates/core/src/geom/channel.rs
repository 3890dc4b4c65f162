use std::f64::consts::PI;

use nalgebra::Point3;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{build_image_sources, PropagationPath, Scenario};
use crate::error::{Error, Result};
use crate::features::{frobenius_sq, CMatrix, CsiTensor};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// All valid paths from `ue_pos` to each AP.
pub fn trace_paths(scenario: &Scenario, ue_pos: &Point3<f64>) -> Result<Vec<Vec<PropagationPath>>> {
    for (a, ap) in scenario.aps.iter().enumerate() {
        if (ap.position - ue_pos).norm() < 1e-9 {
            return Err(Error::CoincidentWithAp {
                ap: a,
                x: ue_pos.x,
                y: ue_pos.y,
                z: ue_pos.z,
            });
        }
    }
    let images = build_image_sources(scenario, ue_pos, scenario.max_reflection_order)?;
    Ok(scenario
        .aps
        .iter()
        .map(|ap| {
            images
                .iter()
                .filter(|img| img.coefficient != 0.0)
                .filter_map(|img| img.trace(scenario, &ap.position))
                .collect()
        })
        .collect())
}

/// Per-AP `K x S` frequency responses for a single-antenna UE at `ue_pos`.
///
/// Each valid path contributes
/// `alpha * lambda / (4 pi d) * exp(-j 2 pi f_s d / c) * a_k`, with the
/// half-wavelength ULA response `a_k = exp(j pi (k - (K-1)/2) cos psi)`.
pub fn synth_csi(scenario: &Scenario, ue_pos: &Point3<f64>) -> Result<Vec<CMatrix>> {
    let paths = trace_paths(scenario, ue_pos)?;
    let freqs = scenario.subcarrier_freqs();
    let lambda = scenario.wavelength();
    Ok(scenario
        .aps
        .iter()
        .zip(&paths)
        .map(|(ap, ap_paths)| {
            let k_total = ap.array.elements;
            let centre = (k_total as f64 - 1.0) / 2.0;
            let mut h = CMatrix::zeros((k_total, freqs.len()));
            for path in ap_paths {
                let gain = path.coefficient * lambda / (4.0 * PI * path.length);
                let cos_psi = path.arrival.dot(&ap.array.orientation);
                for k in 0..k_total {
                    let steer = Complex64::from_polar(1.0, PI * (k as f64 - centre) * cos_psi);
                    for (s, f) in freqs.iter().enumerate() {
                        let phase = -2.0 * PI * f * path.length / SPEED_OF_LIGHT;
                        h[[k, s]] += steer * Complex64::from_polar(gain, phase);
                    }
                }
            }
            if scenario.noise_floor > 0.0 && frobenius_sq(&h) < scenario.noise_floor {
                h.fill(Complex64::new(0.0, 0.0));
            }
            h
        })
        .collect())
}

/// Noise-free CSI for a list of positions, evaluated in parallel.
pub fn synth_csi_set(scenario: &Scenario, positions: &[Point3<f64>], timestamps: Option<&[f64]>) -> Result<Vec<CsiTensor>> {
    positions
        .par_iter()
        .enumerate()
        .map(|(n, p)| {
            let t = timestamps.map_or(n as f64, |ts| ts[n]);
            CsiTensor::new(synth_csi(scenario, p)?, t)
        })
        .collect()
}
