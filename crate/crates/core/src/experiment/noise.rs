//! Scale-dependent observation noise.

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::NoiseConfig;
use super::metrics::compute_snr;
use crate::error::Result;
use crate::wavelet::{wavedec, waverec, MultiLevelCoeffs};

/// A clean observation perturbed level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyObservation {
    /// `W⁻¹(W y + ε)` on the physical grid.
    pub physical: Vec<f64>,
    /// Coefficients of the clean observation.
    pub clean_coeffs: MultiLevelCoeffs,
    /// Coefficients after the noise was added.
    pub noisy_coeffs: MultiLevelCoeffs,
}

/// Adds white noise of standard deviation `σ_i` to every coefficient of level
/// `i` and transforms back. Coefficients are drawn coarse block first, in
/// index order, so a seed fixes the realization.
pub fn add_scale_noise<R: Rng + ?Sized>(
    clean: &[f64],
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<NoisyObservation> {
    let filter = noise.filter();
    let clean_coeffs = wavedec(clean, &filter, noise.levels)?;
    let mut noisy_coeffs = clean_coeffs.clone();
    for (block, &sigma) in noisy_coeffs.blocks_mut().iter_mut().zip(&noise.sigmas) {
        for w in block.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *w += sigma * e;
        }
    }
    let physical = waverec(&noisy_coeffs, &filter)?;
    Ok(NoisyObservation {
        physical,
        clean_coeffs,
        noisy_coeffs,
    })
}

/// SNR of every noisy level of `coeffs`, coarse first; `None` where `σ = 0`.
pub fn level_snrs(coeffs: &MultiLevelCoeffs, noise: &NoiseConfig) -> Result<Vec<Option<f64>>> {
    coeffs
        .blocks()
        .iter()
        .zip(&noise.sigmas)
        .map(|(block, &sigma)| {
            if sigma > 0.0 {
                compute_snr(block, sigma).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::Wavelet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_is_a_round_trip() {
        let cfg = NoiseConfig {
            wavelet: Wavelet::DB9,
            levels: 4,
            sigmas: vec![0.0; 5],
        };
        let clean: Vec<f64> = (0..512).map(|j| (j as f64 * 0.05).sin()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = add_scale_noise(&clean, &cfg, &mut rng).unwrap();
        for (a, b) in out.physical.iter().zip(&clean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn level_noise_has_the_requested_spread() {
        let cfg = NoiseConfig {
            wavelet: Wavelet::DB9,
            levels: 2,
            sigmas: vec![0.5, 2.0, 0.0],
        };
        let clean = vec![0.0; 4096];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = add_scale_noise(&clean, &cfg, &mut rng).unwrap();
        let blocks = out.noisy_coeffs.blocks();
        for (block, &sigma) in blocks.iter().zip(&cfg.sigmas) {
            let var = block.iter().map(|w| w * w).sum::<f64>() / block.len() as f64;
            // 1024/2048 samples: 4 standard errors of the sample variance
            let tol = 4.0 * sigma * sigma * (2.0 / block.len() as f64).sqrt() + 1e-15;
            assert!(
                (var - sigma * sigma).abs() <= tol,
                "var {var} vs {}",
                sigma * sigma
            );
        }
        // orthogonality: physical energy equals coefficient energy
        let e_phys: f64 = out.physical.iter().map(|v| v * v).sum();
        assert!((e_phys - out.noisy_coeffs.norm().powi(2)).abs() < 1e-8 * e_phys);
        let snr = level_snrs(&out.clean_coeffs, &cfg).unwrap();
        assert_eq!(snr, vec![Some(0.0), Some(0.0), None]);
    }
}
