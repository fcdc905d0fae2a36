//! Deterministic ensemble transform Kalman filter.
//!
//! The update is computed in the `M`-dimensional weight space. With raw
//! (unscaled) forecast anomalies `X_b`, observed-space anomalies `Y_b`, and
//! inflation `ρ`:
//!
//! ```text
//! P̃   = [ (M−1) I / ρ + Y_bᵀ R⁻¹ Y_b ]⁻¹
//! w̄   = P̃ Y_bᵀ R⁻¹ (y − ȳ_b)
//! W   = [ (M−1) P̃ ]^{1/2}            (symmetric square root)
//! X_a = x̄_b 1ᵀ + X_b (W + w̄ 1ᵀ)
//! ```
//!
//! This equals inflating the forecast anomalies by `√ρ` and applying the
//! uninflated transform, so the analysis moments are the Kalman update of
//! the `ρ`-inflated sample moments.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};

/// Observed-space image `H(x^α)` of an ensemble, one member per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsSpaceEnsemble {
    values: DMatrix<f64>,
}

impl ObsSpaceEnsemble {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observed-space ensemble"));
        }
        Ok(ObsSpaceEnsemble { values })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn size(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// A dense SPD covariance together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct FullCovariance {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl FullCovariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor `L` with `R = L Lᵀ`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

impl PartialEq for FullCovariance {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

/// Observation-error covariance `R` in one of three representations.
#[derive(Debug, Clone, PartialEq)]
pub enum ObsCovariance {
    Full(FullCovariance),
    Diagonal(DVector<f64>),
    /// `variance · I` of dimension `dim`.
    Scalar {
        variance: f64,
        dim: usize,
    },
}

impl ObsCovariance {
    /// Validates a dense covariance: symmetric and positive definite.
    pub fn full(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSpd(format!(
                "shape {:?} is not square",
                matrix.shape()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation covariance"));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-10 * matrix.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric(asym));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
        Ok(ObsCovariance::Full(FullCovariance { matrix, chol }))
    }

    pub fn diagonal(variances: DVector<f64>) -> Result<Self> {
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::NotSpd("diagonal entries must be positive".into()));
        }
        Ok(ObsCovariance::Diagonal(variances))
    }

    pub fn scalar(variance: f64, dim: usize) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::NotSpd(format!("scalar variance {variance}")));
        }
        Ok(ObsCovariance::Scalar { variance, dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            ObsCovariance::Full(f) => f.matrix.nrows(),
            ObsCovariance::Diagonal(d) => d.len(),
            ObsCovariance::Scalar { dim, .. } => *dim,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            ObsCovariance::Full(f) => f.matrix.clone(),
            ObsCovariance::Diagonal(d) => DMatrix::from_diagonal(d),
            ObsCovariance::Scalar { variance, dim } => DMatrix::identity(*dim, *dim) * *variance,
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            ObsCovariance::Full(f) => f.matrix.trace(),
            ObsCovariance::Diagonal(d) => d.sum(),
            ObsCovariance::Scalar { variance, dim } => variance * *dim as f64,
        }
    }

    /// `R⁻¹ B` without forming `R⁻¹`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.dim() {
            return Err(Error::LengthMismatch {
                what: "observation covariance dimension",
                expected: self.dim(),
                found: b.nrows(),
            });
        }
        Ok(match self {
            ObsCovariance::Full(f) => f.chol.solve(b),
            ObsCovariance::Diagonal(d) => {
                let mut out = b.clone();
                for (mut row, v) in out.row_iter_mut().zip(d.iter()) {
                    row /= *v;
                }
                out
            }
            ObsCovariance::Scalar { variance, .. } => b / *variance,
        })
    }

    /// Largest singular value of `R`. For the diagonal forms this is read off
    /// the entries; dense matrices use power iteration (`R` is SPD, so the
    /// dominant eigenvalue is the largest singular value).
    pub fn max_singular_value(&self) -> f64 {
        match self {
            ObsCovariance::Full(f) => power_iteration(&f.matrix),
            ObsCovariance::Diagonal(d) => d.max(),
            ObsCovariance::Scalar { variance, .. } => *variance,
        }
    }

    /// Draws one realisation of `ε ~ N(0, R)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        match self {
            ObsCovariance::Full(f) => f.chol.l() * z,
            ObsCovariance::Diagonal(d) => z.component_mul(&d.map(f64::sqrt)),
            ObsCovariance::Scalar { variance, .. } => z * variance.sqrt(),
        }
    }
}

fn power_iteration(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    // deterministic start with components along every eigenvector in general
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v.normalize_mut();
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let w = a * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - estimate).abs() <= 1e-15 * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Symmetric PSD square root `S` with `S S = A`, `S = Sᵀ`.
///
/// Eigenvalues in `[-1e-10·trace, 0)` are treated as roundoff and clamped to
/// zero; anything more negative is an error.
pub fn symmetric_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::NotSpd(format!(
            "shape {:?} is not square",
            a.shape()
        )));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let trace = a.trace();
    let eig = a.clone().symmetric_eigen();
    let floor = -1e-10 * trace.abs();
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < floor {
            return Err(Error::NotSpd(format!("eigenvalue {v:e} below {floor:e}")));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Right-multiplying transform `T` (`M × M`) such that the analysis members
/// are `x̄_b 1ᵀ + X_b T` with raw anomalies `X_b`.
pub(crate) fn etkf_transform(
    obs_ens: &ObsSpaceEnsemble,
    y: &DVector<f64>,
    r: &ObsCovariance,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let m = obs_ens.size();
    let q = obs_ens.dim();
    if y.len() != q {
        return Err(Error::LengthMismatch {
            what: "observation vector",
            expected: q,
            found: y.len(),
        });
    }
    if r.dim() != q {
        return Err(Error::LengthMismatch {
            what: "observation covariance",
            expected: q,
            found: r.dim(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation vector"));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "inflation must be positive and finite",
        });
    }
    let values = obs_ens.values();
    let y_mean = values.column_mean();
    let mut yb = values.clone();
    for mut col in yb.column_iter_mut() {
        col -= &y_mean;
    }
    let innovation = y - &y_mean;

    let rinv_yb = r.solve(&yb)?;
    let mut a = yb.transpose() * &rinv_yb;
    let prior = (m - 1) as f64 / rho;
    for i in 0..m {
        a[(i, i)] += prior;
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = a.symmetric_eigen();
    if eig
        .eigenvalues
        .iter()
        .any(|v| v.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::NotSpd("weight-space precision".into()));
    }
    let v = &eig.eigenvectors;
    let inv = eig.eigenvalues.map(|l| 1.0 / l);
    let root = eig.eigenvalues.map(|l| ((m - 1) as f64 / l).sqrt());
    let p_tilde = v * DMatrix::from_diagonal(&inv) * v.transpose();
    let w_mean = &p_tilde * (rinv_yb.transpose() * innovation);
    let mut t = v * DMatrix::from_diagonal(&root) * v.transpose();
    t = (&t + t.transpose()) * 0.5;
    for mut col in t.column_iter_mut() {
        col += &w_mean;
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ETKF transform"));
    }
    Ok(t)
}

/// Applies a weight-space transform to an ensemble.
pub(crate) fn apply_transform(forecast: &Ensemble, t: &DMatrix<f64>) -> Result<Ensemble> {
    let mean = forecast.sample_mean();
    let mut members = forecast.raw_anomalies() * t;
    for mut col in members.column_iter_mut() {
        col += &mean;
    }
    Ensemble::new(members)
}

/// One ETKF analysis step with multiplicative inflation `ρ`.
pub fn etkf_update(
    forecast: &Ensemble,
    obs_ens: &ObsSpaceEnsemble,
    y: &DVector<f64>,
    r: &ObsCovariance,
    rho: f64,
) -> Result<Ensemble> {
    if obs_ens.size() != forecast.size() {
        return Err(Error::LengthMismatch {
            what: "observed-space ensemble size",
            expected: forecast.size(),
            found: obs_ens.size(),
        });
    }
    let t = etkf_transform(obs_ens, y, r, rho)?;
    apply_transform(forecast, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let b = random_matrix(rng, n, n);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn scalar_closed_form() {
        let e = Ensemble::new(DMatrix::from_row_slice(1, 2, &[-1.0, 1.0])).unwrap();
        let obs = ObsSpaceEnsemble::new(e.members().clone()).unwrap();
        let r = ObsCovariance::scalar(2.0, 1).unwrap();
        let a = etkf_update(&e, &obs, &DVector::from_element(1, 1.0), &r, 1.0).unwrap();
        assert!((a.sample_mean()[0] - 0.5).abs() < 1e-10);
        assert!((a.covariance()[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn uninformative_observation_leaves_forecast() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Ensemble::new(random_matrix(&mut rng, 5, 10)).unwrap();
        let obs = ObsSpaceEnsemble::new(e.members().clone()).unwrap();
        let r = ObsCovariance::scalar(1e12, 5).unwrap();
        let y = DVector::from_element(5, 3.0);
        let a = etkf_update(&e, &obs, &y, &r, 1.0).unwrap();
        let dev = (a.members() - e.members()).amax();
        assert!(dev < 1e-4 * e.members().norm(), "{dev}");
    }

    #[test]
    fn innovation_free_update_keeps_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = Ensemble::new(random_matrix(&mut rng, 4, 7)).unwrap();
        let obs = ObsSpaceEnsemble::new(e.members().rows(0, 3).into_owned()).unwrap();
        let y = obs.values().column_mean();
        let r = ObsCovariance::full(random_spd(&mut rng, 3)).unwrap();
        let a = etkf_update(&e, &obs, &y, &r, 1.3).unwrap();
        assert!((a.sample_mean() - e.sample_mean()).amax() < 1e-10);
    }

    #[test]
    fn covariance_representations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = Ensemble::new(random_matrix(&mut rng, 3, 6)).unwrap();
        let obs = ObsSpaceEnsemble::new(e.members().clone()).unwrap();
        let y = DVector::from_vec(vec![0.3, -0.2, 1.0]);
        let d = DVector::from_vec(vec![0.5, 2.0, 1.5]);
        let via_diag = etkf_update(
            &e,
            &obs,
            &y,
            &ObsCovariance::diagonal(d.clone()).unwrap(),
            1.0,
        )
        .unwrap();
        let via_full = etkf_update(
            &e,
            &obs,
            &y,
            &ObsCovariance::full(DMatrix::from_diagonal(&d)).unwrap(),
            1.0,
        )
        .unwrap();
        assert!((via_diag.members() - via_full.members()).amax() < 1e-12);
        let via_scalar =
            etkf_update(&e, &obs, &y, &ObsCovariance::scalar(0.7, 3).unwrap(), 1.0).unwrap();
        let via_diag2 = etkf_update(
            &e,
            &obs,
            &y,
            &ObsCovariance::diagonal(DVector::from_element(3, 0.7)).unwrap(),
            1.0,
        )
        .unwrap();
        assert!((via_scalar.members() - via_diag2.members()).amax() < 1e-12);
    }

    #[test]
    fn spread_never_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for rho in [0.5, 1.0, 2.0] {
            let e = Ensemble::new(random_matrix(&mut rng, 6, 9)).unwrap();
            let obs = ObsSpaceEnsemble::new(e.members().rows(1, 4).into_owned()).unwrap();
            let y = DVector::from_element(4, 0.0);
            let r = ObsCovariance::full(random_spd(&mut rng, 4)).unwrap();
            let a = etkf_update(&e, &obs, &y, &r, rho).unwrap();
            assert!(a.spread_trace() <= rho * e.spread_trace() + 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = Ensemble::new(random_matrix(&mut rng, 8, 12)).unwrap();
        let obs = ObsSpaceEnsemble::new(e.members().clone()).unwrap();
        let y = DVector::from_element(8, 0.4);
        let r = ObsCovariance::scalar(0.3, 8).unwrap();
        let a = etkf_update(&e, &obs, &y, &r, 1.1).unwrap();
        let b = etkf_update(&e, &obs, &y, &r, 1.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = Ensemble::new(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0])).unwrap();
        let obs = ObsSpaceEnsemble::new(e.members().clone()).unwrap();
        let r = ObsCovariance::scalar(1.0, 1).unwrap();
        assert!(etkf_update(&e, &obs, &DVector::from_element(2, 0.0), &r, 1.0).is_err());
        assert!(etkf_update(&e, &obs, &DVector::from_element(1, f64::NAN), &r, 1.0).is_err());
        assert!(etkf_update(&e, &obs, &DVector::from_element(1, 0.0), &r, 0.0).is_err());
        assert!(ObsSpaceEnsemble::new(DMatrix::from_element(1, 2, f64::INFINITY)).is_err());
        assert!(ObsCovariance::full(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(ObsCovariance::full(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
        assert!(ObsCovariance::scalar(0.0, 3).is_err());
        assert!(ObsCovariance::diagonal(DVector::from_vec(vec![1.0, -1.0])).is_err());
    }

    #[test]
    fn sqrt_of_simple_matrices() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((symmetric_sqrt(&id).unwrap() - &id).amax() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = symmetric_sqrt(&d).unwrap();
        assert!((s - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).amax() < 1e-14);
    }

    #[test]
    fn sqrt_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_spd(&mut rng, 10);
        let s = symmetric_sqrt(&a).unwrap();
        assert!((&s - s.transpose()).amax() == 0.0);
        assert!((&s * &s - &a).amax() < 1e-10 * a.amax());
    }

    #[test]
    fn sqrt_clamps_roundoff_but_rejects_indefinite() {
        let v = DVector::from_vec(vec![1.0, 1.0]).normalize();
        let rank_one = &v * v.transpose();
        let s = symmetric_sqrt(&rank_one).unwrap();
        assert!((&s * &s - &rank_one).amax() < 1e-12);
        let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(symmetric_sqrt(&indefinite).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(symmetric_sqrt(&asym), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn largest_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(&mut rng, 12);
        let expected = a.clone().symmetric_eigenvalues().max();
        let r = ObsCovariance::full(a).unwrap();
        assert!((r.max_singular_value() - expected).abs() < 1e-10 * expected);
        assert_eq!(
            ObsCovariance::scalar(4.0, 3).unwrap().max_singular_value(),
            4.0
        );
        let d = ObsCovariance::diagonal(DVector::from_vec(vec![1.0, 5.0, 2.0])).unwrap();
        assert_eq!(d.max_singular_value(), 5.0);
    }

    #[test]
    fn noise_samples_have_requested_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let target = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let r = ObsCovariance::full(target.clone()).unwrap();
        let m = 20_000;
        let draws: Vec<_> = (0..m).map(|_| r.sample(&mut rng)).collect();
        let e = Ensemble::from_columns(&draws).unwrap();
        assert!((e.covariance() - target).amax() < 0.06);
    }
}
