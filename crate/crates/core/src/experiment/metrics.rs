//! Verification diagnostics: SNR, rank histograms, L² discrepancy.

use nalgebra::DVector;
use rand::Rng;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};

/// `(max(w) − min(w)) / σ` of a coefficient block.
pub fn compute_snr(block: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: sigma,
            reason: "SNR needs a positive noise level",
        });
    }
    if block.is_empty() {
        return Ok(0.0);
    }
    let (lo, hi) = block
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok((hi - lo) / sigma)
}

/// Discrete L² norm of `mean − truth` on a grid of spacing `dx`:
/// `√(Σ d_j² · dx)`.
pub fn l2_discrepancy(mean: &[f64], truth: &[f64], dx: f64) -> Result<f64> {
    if mean.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "truth vector",
            expected: mean.len(),
            found: truth.len(),
        });
    }
    let sq: f64 = mean.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq * dx).sqrt())
}

/// Rank of `truth` among `members`: the number of members strictly below it,
/// with ties broken uniformly at random. Lies in `0..=members.len()`.
pub fn rank_of<R: Rng + ?Sized>(members: &[f64], truth: f64, rng: &mut R) -> usize {
    let below = members.iter().filter(|&&m| m < truth).count();
    let ties = members.iter().filter(|&&m| m == truth).count();
    if ties == 0 {
        below
    } else {
        below + rng.random_range(0..=ties)
    }
}

/// `sample_points` grid indices spread evenly over `0..n`.
pub fn sample_indices(n: usize, sample_points: usize) -> Vec<usize> {
    (0..sample_points).map(|i| i * n / sample_points).collect()
}

/// Accumulates truth ranks into `M + 1` bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankHistogram {
    counts: Vec<u64>,
}

impl RankHistogram {
    pub fn new(ensemble_size: usize) -> Self {
        RankHistogram {
            counts: vec![0; ensemble_size + 1],
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        RankHistogram { counts }
    }

    pub fn add<R: Rng + ?Sized>(&mut self, members: &[f64], truth: f64, rng: &mut R) {
        let rank = rank_of(members, truth, rng);
        self.counts[rank] += 1;
    }

    /// Ranks the truth at each of `indices` within `ensemble`.
    pub fn add_ensemble<R: Rng + ?Sized>(
        &mut self,
        ensemble: &Ensemble,
        truth: &[f64],
        indices: &[usize],
        rng: &mut R,
    ) {
        let mut values = Vec::with_capacity(ensemble.size());
        for &j in indices {
            values.clear();
            values.extend(ensemble.members().row(j).iter().copied());
            self.add(&values, truth[j], rng);
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn chi_square(&self) -> f64 {
        chi_square_uniformity(&self.counts)
    }
}

/// Pearson statistic `Σ (O − E)² / E` against a uniform histogram.
pub fn chi_square_uniformity(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.is_empty() {
        return 0.0;
    }
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Rank histogram over a sequence of `(ensemble, truth)` records, using every
/// `stride`-th record and `sample_points` equally spaced grid indices.
pub fn rank_histogram<R: Rng + ?Sized>(
    runs: &[(Ensemble, DVector<f64>)],
    sample_points: usize,
    stride: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let Some((first, _)) = runs.first() else {
        return Ok(Vec::new());
    };
    if stride == 0 {
        return Err(Error::InvalidParameter {
            name: "stride",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let indices = sample_indices(first.dim(), sample_points);
    let mut hist = RankHistogram::new(first.size());
    for (ensemble, truth) in runs.iter().step_by(stride) {
        if ensemble.dim() != truth.len() || ensemble.size() != first.size() {
            return Err(Error::LengthMismatch {
                what: "rank histogram record",
                expected: first.dim(),
                found: truth.len(),
            });
        }
        hist.add_ensemble(ensemble, truth.as_slice(), &indices, rng);
    }
    Ok(hist.counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn snr_formula() {
        assert_eq!(compute_snr(&[10.0, -5.0, 3.0], 0.75).unwrap(), 20.0);
        assert_eq!(compute_snr(&[2.0; 8], 1.0).unwrap(), 0.0);
        assert!(compute_snr(&[1.0], 0.0).is_err());
    }

    #[test]
    fn l2_values() {
        let truth = vec![0.3; 16];
        assert_eq!(l2_discrepancy(&truth, &truth, 0.1).unwrap(), 0.0);
        let l = 22.0;
        let n = 512;
        let dx = 2.0 * std::f64::consts::PI * l / n as f64;
        let c = 0.7;
        let shifted: Vec<f64> = vec![c; n];
        let zeros = vec![0.0; n];
        let expected = c * (2.0 * std::f64::consts::PI * l).sqrt();
        assert!((l2_discrepancy(&shifted, &zeros, dx).unwrap() - expected).abs() < 1e-12);
        assert!(l2_discrepancy(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn l2_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut acc = 0.0;
        for j in 0..100 {
            acc += (a[j] - b[j]).powi(2) * 0.3;
        }
        assert!((l2_discrepancy(&a, &b, 0.3).unwrap() - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ranks_by_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rank_of(&[1.0, 3.0, 5.0], 2.0, &mut rng), 1);
        assert_eq!(rank_of(&[1.0, 3.0, 5.0], 0.0, &mut rng), 0);
        assert_eq!(rank_of(&[1.0, 3.0, 5.0], 9.0, &mut rng), 3);
        // one member below, two tied: ranks 1, 2 and 3 are all possible
        let mut seen = [false; 4];
        for _ in 0..200 {
            seen[rank_of(&[1.0, 2.0, 2.0], 2.0, &mut rng)] = true;
        }
        assert_eq!(seen, [false, true, true, true]);
    }

    #[test]
    fn histogram_counts_every_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let runs: Vec<_> = (0..7)
            .map(|_| {
                let e = Ensemble::new(DMatrix::from_fn(64, 5, |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                }))
                .unwrap();
                let t = DVector::from_fn(64, |_, _| rng.sample::<f64, _>(StandardNormal));
                (e, t)
            })
            .collect();
        let counts = rank_histogram(&runs, 50, 2, &mut rng).unwrap();
        assert_eq!(counts.len(), 6);
        assert_eq!(counts.iter().sum::<u64>(), 50 * 4);
        assert_eq!(sample_indices(512, 50).len(), 50);
        assert_eq!(sample_indices(512, 50)[49], 501);
    }

    #[test]
    fn chi_square_of_flat_and_peaked() {
        assert_eq!(chi_square_uniformity(&[5, 5, 5, 5]), 0.0);
        // E = 5: (20-5)²/5 + 3·25/5
        assert_eq!(chi_square_uniformity(&[20, 0, 0, 0]), 60.0);
    }
}
