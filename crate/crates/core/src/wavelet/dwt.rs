//! Periodized one-dimensional transforms.

use crate::error::{Error, Result};

use super::FilterPair;

/// One analysis step with circular boundary handling.
///
/// `approx[j] = Σ_k lowpass[k] · signal[(2j + k) mod n]`, and likewise for the
/// detail with the highpass filter. The step is an orthogonal map
/// `R^n → R^{n/2} × R^{n/2}` for every even `n`, including `n` shorter than
/// the filter (the filter simply wraps several times).
pub fn dwt_step_periodic(signal: &[f64], filter: &FilterPair) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = signal.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::OddLength(n));
    }
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    let (lo, hi) = (filter.lowpass(), filter.highpass());
    for j in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for k in 0..lo.len() {
            let x = signal[(2 * j + k) % n];
            a += lo[k] * x;
            d += hi[k] * x;
        }
        approx[j] = a;
        detail[j] = d;
    }
    Ok((approx, detail))
}

/// Adjoint (and inverse) of [`dwt_step_periodic`].
pub fn idwt_step_periodic(approx: &[f64], detail: &[f64], filter: &FilterPair) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::LengthMismatch {
            what: "detail coefficients",
            expected: approx.len(),
            found: detail.len(),
        });
    }
    let n = 2 * approx.len();
    let mut signal = vec![0.0; n];
    if n == 0 {
        return Ok(signal);
    }
    let (lo, hi) = (filter.lowpass(), filter.highpass());
    for j in 0..approx.len() {
        let (a, d) = (approx[j], detail[j]);
        for k in 0..lo.len() {
            signal[(2 * j + k) % n] += lo[k] * a + hi[k] * d;
        }
    }
    Ok(signal)
}

/// Ensures `len` can be halved `levels` times.
pub(crate) fn check_divisible(len: usize, levels: usize) -> Result<()> {
    let required = if levels < usize::BITS as usize {
        1usize << levels
    } else {
        usize::MAX
    };
    if len == 0 || !len.is_multiple_of(required) {
        return Err(Error::NotDivisible {
            len,
            levels,
            required,
        });
    }
    Ok(())
}

/// Wavelet coefficients of an `N`-level transform, grouped by level.
///
/// Blocks are stored coarse to fine: `[w_{N+1}, w_N, …, w_1]`, where
/// `w_{N+1}` is the final approximation and `w_i` (`i ≤ N`) is the detail
/// produced by the `i`-th analysis step. Level labels always follow this
/// numbering, so level `N+1` is the coarsest and level 1 the finest.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLevelCoeffs {
    levels: usize,
    blocks: Vec<Vec<f64>>,
    original_length: usize,
}

impl MultiLevelCoeffs {
    /// Block lengths for a length-`n`, `levels`-deep decomposition, coarse first.
    pub fn block_lengths(n: usize, levels: usize) -> Result<Vec<usize>> {
        check_divisible(n, levels)?;
        let coarsest = n >> levels;
        let mut lengths = vec![coarsest];
        lengths.extend((1..=levels).rev().map(|i| n >> i));
        Ok(lengths)
    }

    /// Wraps coefficient blocks (coarse first), validating their lengths.
    pub fn from_blocks(levels: usize, blocks: Vec<Vec<f64>>) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let expected = Self::block_lengths(n, levels)?;
        if blocks.len() != expected.len() {
            return Err(Error::LengthMismatch {
                what: "number of coefficient blocks",
                expected: expected.len(),
                found: blocks.len(),
            });
        }
        for (block, &len) in blocks.iter().zip(&expected) {
            if block.len() != len {
                return Err(Error::LengthMismatch {
                    what: "coefficient block",
                    expected: len,
                    found: block.len(),
                });
            }
        }
        Ok(MultiLevelCoeffs {
            levels,
            blocks,
            original_length: n,
        })
    }

    /// Splits a flat coefficient vector (coarse first) into level blocks.
    pub fn from_flat(flat: &[f64], levels: usize) -> Result<Self> {
        let lengths = Self::block_lengths(flat.len(), levels)?;
        let mut offset = 0;
        let blocks = lengths
            .into_iter()
            .map(|len| {
                let block = flat[offset..offset + len].to_vec();
                offset += len;
                block
            })
            .collect();
        Ok(MultiLevelCoeffs {
            levels,
            blocks,
            original_length: flat.len(),
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    /// Blocks in storage order, coarse first.
    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.blocks
    }

    /// Storage index of level `i` (`N+1` maps to 0, `1` maps to `N`).
    pub fn block_index(&self, level: usize) -> Result<usize> {
        level_to_index(level, self.levels)
    }

    /// The projection `P_i w`: coefficients of level `i ∈ {N+1, …, 1}`.
    pub fn project_level(&self, level: usize) -> Result<&[f64]> {
        Ok(&self.blocks[self.block_index(level)?])
    }

    pub fn level_mut(&mut self, level: usize) -> Result<&mut Vec<f64>> {
        let idx = self.block_index(level)?;
        Ok(&mut self.blocks[idx])
    }

    /// Level labels in storage order, `N+1` down to `1`.
    pub fn level_labels(&self) -> impl Iterator<Item = usize> {
        (1..=self.levels + 1).rev()
    }

    /// Concatenation of all blocks, coarse first.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn level_to_index(level: usize, levels: usize) -> Result<usize> {
    if level == 0 || level > levels + 1 {
        return Err(Error::LevelOutOfRange {
            level,
            max: levels + 1,
        });
    }
    Ok(levels + 1 - level)
}

/// `N`-level periodized decomposition.
pub fn wavedec(signal: &[f64], filter: &FilterPair, levels: usize) -> Result<MultiLevelCoeffs> {
    check_divisible(signal.len(), levels)?;
    let mut details = Vec::with_capacity(levels);
    let mut approx = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step_periodic(&approx, filter)?;
        details.push(d);
        approx = a;
    }
    let mut blocks = Vec::with_capacity(levels + 1);
    blocks.push(approx);
    blocks.extend(details.into_iter().rev());
    Ok(MultiLevelCoeffs {
        levels,
        blocks,
        original_length: signal.len(),
    })
}

/// Inverse of [`wavedec`].
pub fn waverec(coeffs: &MultiLevelCoeffs, filter: &FilterPair) -> Result<Vec<f64>> {
    let expected = MultiLevelCoeffs::block_lengths(coeffs.original_length, coeffs.levels)?;
    if coeffs.blocks.len() != expected.len()
        || coeffs
            .blocks
            .iter()
            .zip(&expected)
            .any(|(b, &l)| b.len() != l)
    {
        return Err(Error::Parse(format!(
            "malformed coefficient blocks: expected lengths {expected:?}"
        )));
    }
    let mut approx = coeffs.blocks[0].clone();
    for detail in &coeffs.blocks[1..] {
        approx = idwt_step_periodic(&approx, detail, filter)?;
    }
    Ok(approx)
}
