//! Ensembles of state vectors and their sample statistics.
//!
//! All covariances use the unbiased `1/(M-1)` normalisation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `M` state vectors of dimension `n`, stored one member per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    /// Wraps an `n × M` member matrix. Requires `M ≥ 2` and finite entries.
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::InvalidEnsemble(format!(
                "need at least 2 members, got {}",
                members.ncols()
            )));
        }
        if members.nrows() == 0 {
            return Err(Error::InvalidEnsemble("state dimension is zero".into()));
        }
        if members.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble members"));
        }
        Ok(Ensemble { members })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidEnsemble("no members".into()));
        }
        let dim = columns[0].len();
        if let Some(bad) = columns.iter().find(|c| c.len() != dim) {
            return Err(Error::LengthMismatch {
                what: "ensemble member",
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_columns(columns))
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    /// Member count `M`.
    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn into_members(self) -> DMatrix<f64> {
        self.members
    }

    pub fn member(&self, alpha: usize) -> DVector<f64> {
        self.members.column(alpha).into_owned()
    }

    pub fn sample_mean(&self) -> DVector<f64> {
        self.members.column_mean()
    }

    /// Scaled anomalies `(x^α − x̄)/√(M−1)`, so that `A Aᵀ` is the sample
    /// covariance.
    pub fn anomalies(&self) -> DMatrix<f64> {
        let scale = 1.0 / ((self.size() - 1) as f64).sqrt();
        self.raw_anomalies() * scale
    }

    /// Deviations from the mean without the `1/√(M−1)` scaling.
    pub fn raw_anomalies(&self) -> DMatrix<f64> {
        let mean = self.sample_mean();
        let mut a = self.members.clone();
        for mut col in a.column_iter_mut() {
            col -= &mean;
        }
        a
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let a = self.anomalies();
        &a * a.transpose()
    }

    /// Trace of the sample covariance (total ensemble variance).
    pub fn spread_trace(&self) -> f64 {
        self.anomalies().norm_squared()
    }

    pub fn moments(&self) -> GaussianMoments {
        GaussianMoments {
            mean: self.sample_mean(),
            cov: self.covariance(),
        }
    }

    /// Multiplicative inflation: anomalies scaled by `√ρ`, mean unchanged,
    /// sample covariance scaled by `ρ`.
    pub fn inflate(&self, rho: f64) -> Result<Ensemble> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: rho,
                reason: "inflation must be positive and finite",
            });
        }
        if rho == 1.0 {
            return Ok(self.clone());
        }
        let mean = self.sample_mean();
        let mut members = self.raw_anomalies() * rho.sqrt();
        for mut col in members.column_iter_mut() {
            col += &mean;
        }
        Ensemble::new(members)
    }

    /// Applies `f` to every member, producing a new ensemble (e.g. the
    /// observation-space image `H(x^α)`).
    pub fn map_members<F>(&self, mut f: F) -> Result<DMatrix<f64>>
    where
        F: FnMut(&DVector<f64>) -> DVector<f64>,
    {
        let cols: Vec<DVector<f64>> = self
            .members
            .column_iter()
            .map(|c| f(&c.into_owned()))
            .collect();
        let dim = cols[0].len();
        if cols.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidEnsemble(
                "mapped members disagree in length".into(),
            ));
        }
        Ok(DMatrix::from_columns(&cols))
    }
}

/// Sample cross-covariance `a bᵀ` of two anomaly matrices (scaled as in
/// [`Ensemble::anomalies`]).
pub fn cross_cov(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::LengthMismatch {
            what: "ensemble size of cross-covariance operand",
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    Ok(a * b.transpose())
}

/// Mean and covariance of a Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMoments {
    /// Checks symmetry (relative 1e-10) and that no eigenvalue falls below
    /// `-1e-10 · trace`.
    pub fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if self.cov.shape() != (n, n) {
            return Err(Error::LengthMismatch {
                what: "covariance dimension",
                expected: n,
                found: self.cov.nrows(),
            });
        }
        let scale = self.cov.amax().max(f64::MIN_POSITIVE);
        let asym = (&self.cov - self.cov.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let trace = self.cov.trace();
        let min_eig = self.cov.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * trace.abs() {
            return Err(Error::NotSpd(format!("eigenvalue {min_eig:e}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ensemble(seed: u64, n: usize, m: usize) -> Ensemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ensemble::new(DMatrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0))).unwrap()
    }

    /// Covariance by explicit double loop over members.
    fn brute_force_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = x.shape();
        let mean: Vec<f64> = (0..n)
            .map(|i| (0..m).map(|a| x[(i, a)]).sum::<f64>() / m as f64)
            .collect();
        DMatrix::from_fn(n, n, |i, j| {
            (0..m)
                .map(|a| (x[(i, a)] - mean[i]) * (x[(j, a)] - mean[j]))
                .sum::<f64>()
                / (m - 1) as f64
        })
    }

    #[test]
    fn needs_two_finite_members() {
        assert!(Ensemble::new(DMatrix::zeros(3, 1)).is_err());
        assert!(Ensemble::new(DMatrix::from_element(2, 2, f64::NAN)).is_err());
        assert!(Ensemble::new(DMatrix::zeros(3, 2)).is_ok());
    }

    #[test]
    fn mean_of_identical_members() {
        let v = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let e = Ensemble::from_columns(&[v.clone(), v.clone(), v.clone()]).unwrap();
        assert!((e.sample_mean() - &v).amax() < 1e-15);
        assert!(e.anomalies().amax() < 1e-15);
    }

    #[test]
    fn scalar_pair() {
        let e = Ensemble::new(DMatrix::from_row_slice(1, 2, &[-1.0, 1.0])).unwrap();
        assert_eq!(e.sample_mean()[0], 0.0);
        assert_eq!(e.anomalies(), DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]));
        assert_eq!(e.covariance()[(0, 0)], 2.0);
    }

    #[test]
    fn mean_matches_direct_summation() {
        let e = random_ensemble(1, 4, 50);
        let mean = e.sample_mean();
        for i in 0..4 {
            let direct: f64 = (0..50).map(|a| e.members()[(i, a)]).sum::<f64>() / 50.0;
            assert!((mean[i] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn covariance_matches_brute_force() {
        let e = random_ensemble(2, 6, 20);
        let diff = e.covariance() - brute_force_cov(e.members());
        assert!(diff.amax() < 1e-12);
        let a = e.anomalies() * 19f64.sqrt();
        for i in 0..6 {
            assert!(a.row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn cross_cov_blocks() {
        let e = random_ensemble(3, 5, 30);
        let a = e.anomalies();
        let top = a.rows(0, 2).into_owned();
        let bottom = a.rows(2, 3).into_owned();
        let c = cross_cov(&top, &bottom).unwrap();
        let full = brute_force_cov(e.members());
        assert!((c - full.view((0, 2), (2, 3))).amax() < 1e-12);
        let s = cross_cov(&a, &a).unwrap();
        assert!((&s - s.transpose()).amax() < 1e-15);
        assert!(cross_cov(&top, &DMatrix::zeros(2, 29)).is_err());
    }

    #[test]
    fn cross_cov_of_independent_samples_decays() {
        // entries of the cross-covariance between independent coordinates
        // shrink like 1/sqrt(M)
        let mut errs = Vec::new();
        for m in [100, 10_000] {
            let e = random_ensemble(9, 2, m);
            let a = e.anomalies();
            let c = cross_cov(&a.rows(0, 1).into_owned(), &a.rows(1, 1).into_owned()).unwrap();
            errs.push(c[(0, 0)].abs());
        }
        assert!(errs[0] < 5.0 * (4.0f64 / 3.0) / 10.0);
        assert!(errs[1] < 5.0 * (4.0f64 / 3.0) / 100.0);
    }

    #[test]
    fn inflation_scales_covariance_only() {
        let e = random_ensemble(4, 3, 10);
        assert_eq!(e.inflate(1.0).unwrap(), e);
        let big = e.inflate(4.0).unwrap();
        assert!((big.sample_mean() - e.sample_mean()).amax() < 1e-14);
        let expected = e.covariance() * 4.0;
        assert!((big.covariance() - &expected).amax() < 1e-12 * expected.amax());
        assert!(e.inflate(0.0).is_err());
        assert!(e.inflate(-1.0).is_err());
        assert!(e.inflate(f64::NAN).is_err());
    }

    #[test]
    fn moments_validate() {
        let e = random_ensemble(5, 4, 3);
        e.moments().validate().unwrap();
        let bad = GaussianMoments {
            mean: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]),
        };
        assert!(bad.validate().is_err());
    }
}
