//! Periodized orthonormal Daubechies wavelet transforms.
//!
//! Periodization (circular convolution) makes every transform here an exact
//! orthogonal change of basis, so covariances transform by conjugation
//! `C ↦ W C Wᵀ` and inverse transforms are adjoints.

mod dwt;
mod dwt2;
mod filters;
mod matrix;

pub use dwt::{dwt_step_periodic, idwt_step_periodic, wavedec, waverec, MultiLevelCoeffs};
pub use dwt2::{wavedec2, waverec2, DetailBands, MultiLevelCoeffs2D};
pub use filters::{make_filter, FilterPair, Wavelet};
pub use matrix::{level_rows, transform_matrix, transform_matrix_capped, DEFAULT_MATRIX_CAP};

pub(crate) use dwt::{check_divisible, level_to_index};
