//! Explicit matrix form of the multi-level transform.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{wavedec, FilterPair};

/// Largest signal length [`transform_matrix`] materializes by default.
pub const DEFAULT_MATRIX_CAP: usize = 4096;

/// The orthogonal `n × n` matrix `W_N` with `W_N x = wavedec(x).to_flat()`.
///
/// Rows are grouped like [`MultiLevelCoeffs`](super::MultiLevelCoeffs): the
/// coarsest block first.
pub fn transform_matrix(n: usize, filter: &FilterPair, levels: usize) -> Result<DMatrix<f64>> {
    transform_matrix_capped(n, filter, levels, DEFAULT_MATRIX_CAP)
}

pub fn transform_matrix_capped(
    n: usize,
    filter: &FilterPair,
    levels: usize,
    cap: usize,
) -> Result<DMatrix<f64>> {
    if n > cap {
        return Err(Error::MatrixTooLarge { n, cap });
    }
    super::dwt::check_divisible(n, levels)?;
    let mut w = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let column = wavedec(&unit, filter, levels)?.to_flat();
        unit[j] = 0.0;
        for (i, v) in column.into_iter().enumerate() {
            w[(i, j)] = v;
        }
    }
    Ok(w)
}

/// Row range of level `i` inside [`transform_matrix`].
pub fn level_rows(n: usize, levels: usize, level: usize) -> Result<std::ops::Range<usize>> {
    let lengths = super::MultiLevelCoeffs::block_lengths(n, levels)?;
    let idx = super::dwt::level_to_index(level, levels)?;
    let start: usize = lengths[..idx].iter().sum();
    Ok(start..start + lengths[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::make_filter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn haar_single_level_by_hand() {
        let r = FRAC_1_SQRT_2;
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                r, r, 0.0, 0.0, //
                0.0, 0.0, r, r, //
                r, -r, 0.0, 0.0, //
                0.0, 0.0, r, -r,
            ],
        );
        let w = transform_matrix(4, &make_filter("db1").unwrap(), 1).unwrap();
        assert!((w - expected).amax() < 1e-15);
    }

    #[test]
    fn agrees_with_fast_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for name in ["db1", "db4", "db9"] {
            let f = make_filter(name).unwrap();
            let w = transform_matrix(64, &f, 3).unwrap();
            let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = wavedec(&x, &f, 3).unwrap().to_flat();
            let slow = &w * nalgebra::DVector::from_column_slice(&x);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            let gram = w.transpose() * &w;
            assert!((gram - DMatrix::identity(64, 64)).amax() < 1e-10);
        }
    }

    #[test]
    fn level_rows_partition_the_matrix() {
        assert_eq!(level_rows(512, 4, 5).unwrap(), 0..32);
        assert_eq!(level_rows(512, 4, 4).unwrap(), 32..64);
        assert_eq!(level_rows(512, 4, 1).unwrap(), 256..512);
        assert!(level_rows(512, 4, 6).is_err());
    }

    #[test]
    fn cap_guards_allocation() {
        let f = make_filter("db1").unwrap();
        assert!(matches!(
            transform_matrix(8192, &f, 1),
            Err(Error::MatrixTooLarge { n: 8192, cap: 4096 })
        ));
        assert!(transform_matrix_capped(16, &f, 1, 8).is_err());
    }
}
