//! Per-worker encoding `S_i A` driven by one coefficient row of a null basis.
//!
//! Source rows are cut into contiguous blocks of `q` (the last block holds
//! `l ≤ q` rows). Worker `i` stores one row per block: the combination of the
//! block's rows weighted by its coefficients `b_{1i}, …, b_{qi}`. Dense `S_i`
//! is never formed, so RREF workers with a single nonzero coefficient encode
//! at the cost of a copy.

use crate::codec::NullBasis;
use crate::error::{Error, Result};
use crate::linalg::{axpy, Flops, Matrix};
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGeometry {
    /// Block width, `m − k`.
    pub q: usize,
    /// Block count, `⌈rows / q⌉`.
    pub p: usize,
    /// Width of the last block.
    pub l: usize,
    /// Length of the encoded dimension.
    pub rows: usize,
}

impl BlockGeometry {
    pub fn new(rows: usize, q: usize) -> Result<Self> {
        if rows == 0 || q == 0 {
            return Err(Error::InvalidParameter(format!("block geometry needs rows ≥ 1 and q ≥ 1, got rows={rows}, q={q}")));
        }
        let p = rows.div_ceil(q);
        Ok(BlockGeometry { q, p, l: rows - (p - 1) * q, rows })
    }

    pub fn width(&self, block: usize) -> usize {
        if block + 1 == self.p {
            self.l
        } else {
            self.q
        }
    }

    /// Source rows held in `block` (the coordinate map `f`).
    pub fn range(&self, block: usize) -> Range<usize> {
        let start = block * self.q;
        start..start + self.width(block)
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..self.p).map(|j| self.width(j)).collect()
    }

    /// Block holding source row `r`, and the row's offset inside it.
    pub fn locate(&self, r: usize) -> (usize, usize) {
        (r / self.q, r % self.q)
    }

    fn grow(&mut self) {
        if self.l < self.q {
            self.l += 1;
        } else {
            self.p += 1;
            self.l = 1;
        }
        self.rows += 1;
    }
}

/// Worker `i`'s implicit `S_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerEncoder {
    pub worker: usize,
    pub coeffs: Vec<f64>,
    pub geometry: BlockGeometry,
}

impl WorkerEncoder {
    pub fn new(basis: &NullBasis, worker: usize, geometry: BlockGeometry) -> Self {
        assert_eq!(basis.q(), geometry.q, "basis width and block width differ");
        WorkerEncoder { worker, coeffs: basis.coeffs(worker).to_vec(), geometry }
    }

    /// Dense `p × rows` reference assembly of `S_i`.
    pub fn dense(&self) -> Matrix {
        let g = &self.geometry;
        let mut s = Matrix::zeros(g.p, g.rows);
        for j in 0..g.p {
            for (c, r) in g.range(j).enumerate() {
                s[(j, r)] = self.coeffs[c];
            }
        }
        s
    }

    /// `S_i x` for a vector over the encoded dimension.
    pub fn apply(&self, x: &[f64], flops: &mut Flops) -> Vec<f64> {
        assert_eq!(x.len(), self.geometry.rows);
        let g = &self.geometry;
        (0..g.p)
            .map(|j| {
                let mut acc = 0.0;
                for (c, r) in g.range(j).enumerate() {
                    let b = self.coeffs[c];
                    if b != 0.0 {
                        acc += b * x[r];
                        flops.add(2);
                    }
                }
                acc
            })
            .collect()
    }

    /// Rows of `S_i` restricted to the blocks in `blocks`, applied to `x`
    /// (which holds only the coordinates of those blocks, concatenated).
    pub fn apply_blocks(&self, blocks: &[usize], x: &[f64], flops: &mut Flops) -> Vec<f64> {
        let mut offset = 0;
        let mut out = Vec::with_capacity(blocks.len());
        for &j in blocks {
            let w = self.geometry.width(j);
            let mut acc = 0.0;
            for c in 0..w {
                let b = self.coeffs[c];
                if b != 0.0 {
                    acc += b * x[offset + c];
                    flops.add(2);
                }
            }
            offset += w;
            out.push(acc);
        }
        assert_eq!(offset, x.len(), "block coordinates do not match vector length");
        out
    }
}

/// What matrix a share encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// `S⁽¹⁾X`: blocks over samples.
    Data,
    /// `S⁽²⁾Xᵀ`: blocks over features. Also the SGD and CD parameter-side store.
    Transposed,
    /// An identity-encoded side vector (e.g. labels).
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedShare {
    pub encoder: WorkerEncoder,
    /// `p × cols` matrix `S_i A`.
    pub matrix: Matrix,
    pub provenance: Provenance,
}

impl EncodedShare {
    pub fn worker(&self) -> usize {
        self.encoder.worker
    }

    pub fn geometry(&self) -> BlockGeometry {
        self.encoder.geometry
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

/// Encodes `a` for every worker of `basis`.
pub fn encode(basis: &NullBasis, a: &Matrix, provenance: Provenance, flops: &mut Flops) -> Result<Vec<EncodedShare>> {
    let geometry = BlockGeometry::new(a.rows(), basis.q())?;
    let cols = a.cols();
    let shares = (0..basis.workers())
        .map(|i| {
            let encoder = WorkerEncoder::new(basis, i, geometry);
            let mut matrix = Matrix::zeros(geometry.p, cols);
            for j in 0..geometry.p {
                let dst = matrix.row_mut(j);
                for (c, r) in geometry.range(j).enumerate() {
                    let b = encoder.coeffs[c];
                    if b != 0.0 {
                        axpy(b, a.row(r), dst);
                        flops.add(2 * cols);
                    }
                }
            }
            EncodedShare { encoder, matrix, provenance }
        })
        .collect();
    Ok(shares)
}

/// Streams a new source row into every share. When the last block has room
/// the row is folded into each worker's last stored row; otherwise each
/// worker stores a fresh row.
pub fn append_row(shares: &mut [EncodedShare], x: &[f64], flops: &mut Flops) -> Result<()> {
    for share in shares.iter_mut() {
        if x.len() != share.cols() {
            return Err(Error::DimensionMismatch(format!("row has length {}, shares have {} columns", x.len(), share.cols())));
        }
        let g = share.encoder.geometry;
        let (coeff, fresh) = if g.l < g.q { (share.encoder.coeffs[g.l], false) } else { (share.encoder.coeffs[0], true) };
        if fresh {
            share.matrix.push_row(&vec![0.0; x.len()]);
        }
        if coeff != 0.0 {
            let last = share.matrix.rows() - 1;
            axpy(coeff, x, share.matrix.row_mut(last));
            flops.add(2 * x.len());
        }
        share.encoder.geometry.grow();
    }
    Ok(())
}

/// Appends the column `S_i · column` to every share.
pub fn append_column(shares: &mut [EncodedShare], column: &[f64], flops: &mut Flops) -> Result<()> {
    for share in shares.iter_mut() {
        if column.len() != share.encoder.geometry.rows {
            return Err(Error::DimensionMismatch(format!(
                "column has length {}, source has {} rows",
                column.len(),
                share.encoder.geometry.rows
            )));
        }
        let encoded = share.encoder.apply(column, flops);
        share.matrix.push_column(&encoded);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageReport {
    pub total_reals: usize,
    /// Stored reals divided by `rows × cols` of the first share set's source.
    pub redundancy: f64,
}

/// Storage over any number of share sets (typically `S⁽¹⁾X` and `S⁽²⁾Xᵀ`).
/// Labels kept at the master are not counted.
pub fn storage_report(sets: &[&[EncodedShare]]) -> StorageReport {
    let total_reals: usize = sets.iter().flat_map(|s| s.iter()).map(|sh| sh.matrix.rows() * sh.matrix.cols()).sum();
    let source = sets
        .first()
        .and_then(|s| s.first())
        .map(|sh| sh.encoder.geometry.rows * sh.cols())
        .unwrap_or(0);
    let redundancy = if source == 0 { 0.0 } else { total_reals as f64 / source as f64 };
    StorageReport { total_reals, redundancy }
}
