//! Separable tensor-product transforms of 2D fields.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::dwt::{check_divisible, dwt_step_periodic, idwt_step_periodic};
use super::FilterPair;

/// Detail sub-bands produced by one 2D analysis step.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    /// Lowpass along rows, highpass along columns.
    pub horizontal: DMatrix<f64>,
    /// Highpass along rows, lowpass along columns.
    pub vertical: DMatrix<f64>,
    pub diagonal: DMatrix<f64>,
}

/// Coefficients of an `N`-level 2D transform.
///
/// `details[0]` belongs to the coarsest level `N` and `details[N-1]` to the
/// finest level 1, mirroring the coarse-first order of
/// [`MultiLevelCoeffs`](super::MultiLevelCoeffs).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLevelCoeffs2D {
    pub levels: usize,
    pub approx: DMatrix<f64>,
    pub details: Vec<DetailBands>,
    pub original_shape: (usize, usize),
}

impl MultiLevelCoeffs2D {
    pub fn coefficient_count(&self) -> usize {
        self.approx.len()
            + self
                .details
                .iter()
                .map(|d| d.horizontal.len() + d.vertical.len() + d.diagonal.len())
                .sum::<usize>()
    }

    pub fn norm(&self) -> f64 {
        let sq = self.approx.norm_squared()
            + self
                .details
                .iter()
                .map(|d| {
                    d.horizontal.norm_squared()
                        + d.vertical.norm_squared()
                        + d.diagonal.norm_squared()
                })
                .sum::<f64>();
        sq.sqrt()
    }
}

fn rows_step(field: &DMatrix<f64>, filter: &FilterPair) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (r, c) = field.shape();
    let mut lo = DMatrix::zeros(r, c / 2);
    let mut hi = DMatrix::zeros(r, c / 2);
    let mut row = vec![0.0; c];
    for i in 0..r {
        for (j, v) in row.iter_mut().enumerate() {
            *v = field[(i, j)];
        }
        let (a, d) = dwt_step_periodic(&row, filter)?;
        for j in 0..c / 2 {
            lo[(i, j)] = a[j];
            hi[(i, j)] = d[j];
        }
    }
    Ok((lo, hi))
}

fn cols_step(field: &DMatrix<f64>, filter: &FilterPair) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (lo, hi) = rows_step(&field.transpose(), filter)?;
    Ok((lo.transpose(), hi.transpose()))
}

fn rows_inverse(lo: &DMatrix<f64>, hi: &DMatrix<f64>, filter: &FilterPair) -> Result<DMatrix<f64>> {
    let (r, half) = lo.shape();
    let mut out = DMatrix::zeros(r, 2 * half);
    for i in 0..r {
        let a: Vec<f64> = lo.row(i).iter().copied().collect();
        let d: Vec<f64> = hi.row(i).iter().copied().collect();
        let x = idwt_step_periodic(&a, &d, filter)?;
        for (j, v) in x.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

fn cols_inverse(lo: &DMatrix<f64>, hi: &DMatrix<f64>, filter: &FilterPair) -> Result<DMatrix<f64>> {
    Ok(rows_inverse(&lo.transpose(), &hi.transpose(), filter)?.transpose())
}

/// `levels`-deep periodized 2D decomposition; each level transforms the rows
/// and then the columns of the current approximation block.
pub fn wavedec2(
    field: &DMatrix<f64>,
    filter: &FilterPair,
    levels: usize,
) -> Result<MultiLevelCoeffs2D> {
    let (rows, cols) = field.shape();
    check_divisible(rows, levels)?;
    check_divisible(cols, levels)?;
    let mut approx = field.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (lo, hi) = rows_step(&approx, filter)?;
        let (ll, lh) = cols_step(&lo, filter)?;
        let (hl, hh) = cols_step(&hi, filter)?;
        details.push(DetailBands {
            horizontal: lh,
            vertical: hl,
            diagonal: hh,
        });
        approx = ll;
    }
    details.reverse();
    Ok(MultiLevelCoeffs2D {
        levels,
        approx,
        details,
        original_shape: (rows, cols),
    })
}

/// Inverse of [`wavedec2`].
pub fn waverec2(coeffs: &MultiLevelCoeffs2D, filter: &FilterPair) -> Result<DMatrix<f64>> {
    if coeffs.details.len() != coeffs.levels {
        return Err(Error::LengthMismatch {
            what: "2D detail levels",
            expected: coeffs.levels,
            found: coeffs.details.len(),
        });
    }
    let mut approx = coeffs.approx.clone();
    for bands in &coeffs.details {
        let shape = approx.shape();
        for band in [&bands.horizontal, &bands.vertical, &bands.diagonal] {
            if band.shape() != shape {
                return Err(Error::Parse(format!(
                    "2D sub-band shape {:?} does not match approximation {:?}",
                    band.shape(),
                    shape
                )));
            }
        }
        let lo = cols_inverse(&approx, &bands.horizontal, filter)?;
        let hi = cols_inverse(&bands.vertical, &bands.diagonal, filter)?;
        approx = rows_inverse(&lo, &hi, filter)?;
    }
    if approx.shape() != coeffs.original_shape {
        return Err(Error::Parse(format!(
            "reconstructed shape {:?} differs from recorded shape {:?}",
            approx.shape(),
            coeffs.original_shape
        )));
    }
    Ok(approx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::make_filter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(seed: u64, r: usize, c: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn round_trip_and_isometry() {
        let f = make_filter("db9").unwrap();
        let field = random_field(5, 64, 64);
        let c = wavedec2(&field, &f, 2).unwrap();
        assert_eq!(c.coefficient_count(), 64 * 64);
        assert!((c.norm() - field.norm()).abs() < 1e-10);
        let back = waverec2(&c, &f).unwrap();
        assert!((back - field).amax() < 1e-10);
    }

    #[test]
    fn rectangular_fields() {
        let f = make_filter("db2").unwrap();
        let field = random_field(8, 16, 40);
        let c = wavedec2(&field, &f, 3).unwrap();
        assert_eq!(c.approx.shape(), (2, 5));
        assert_eq!(c.details[0].diagonal.shape(), (2, 5));
        assert_eq!(c.details[2].diagonal.shape(), (8, 20));
        assert!((waverec2(&c, &f).unwrap() - field).amax() < 1e-12);
    }

    #[test]
    fn constant_field_has_no_detail() {
        let f = make_filter("db9").unwrap();
        let c = wavedec2(&DMatrix::from_element(32, 32, 1.5), &f, 2).unwrap();
        for bands in &c.details {
            for band in [&bands.horizontal, &bands.vertical, &bands.diagonal] {
                assert!(band.amax() < 1e-12);
            }
        }
    }

    #[test]
    fn horizontal_band_sees_variation_down_columns() {
        let f = make_filter("db1").unwrap();
        // varies with the row index only
        let field = DMatrix::from_fn(8, 8, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let c = wavedec2(&field, &f, 1).unwrap();
        assert!(c.details[0].horizontal.amax() > 1.0);
        assert!(c.details[0].vertical.amax() < 1e-14);
        assert!(c.details[0].diagonal.amax() < 1e-14);
    }

    #[test]
    fn non_divisible_shapes_are_rejected() {
        let f = make_filter("db1").unwrap();
        assert!(wavedec2(&DMatrix::zeros(12, 16), &f, 3).is_err());
        assert!(wavedec2(&DMatrix::zeros(16, 12), &f, 3).is_err());
    }
}
