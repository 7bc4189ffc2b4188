//! Measurement matrices and mosaic capture simulation.
//!
//! A filter-array tile with N pixels and L bands induces a block-diagonal
//! N x LN measurement matrix: row n carries the n-th sensitivity row on
//! columns [nL, (n+1)L). The nine-block variant repeats that matrix along
//! the diagonal, matching the 3x3 neighborhood vector layout.
//!
//! All application paths (single block, nine blocks, whole image) go
//! through one ascending-band dot product, so mosaicking an image and
//! multiplying by the dense matrix give bitwise-identical values.

use nalgebra::DMatrix;

use crate::cube::{
    gather_neighborhood, BlockGrid, BlockMode, BlockVector, MosaicImage, MsfaBlock, SpectralCube,
};
use crate::error::{Error, Result};
use crate::parallel;

/// Plain ascending-index dot product. Every mosaicking path uses this
/// helper so alternative routes to the same value agree exactly.
#[inline]
pub(crate) fn dot_ascending(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Dense measurement matrix together with the tile that generated it.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    msfa: MsfaBlock,
    mode: BlockMode,
    dense: DMatrix<f64>,
}

impl MeasurementMatrix {
    pub fn msfa(&self) -> &MsfaBlock {
        &self.msfa
    }

    pub fn mode(&self) -> BlockMode {
        self.mode
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn nrows(&self) -> usize {
        self.dense.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.dense.ncols()
    }

    /// Applies the matrix using its block-diagonal structure: output b*N+n
    /// is the dot of sensitivity row n with the matching pixel spectrum.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {}, matrix expects {}",
                u.len(),
                self.ncols()
            )));
        }
        let n = self.msfa.filters();
        let l = self.msfa.bands();
        let mut out = Vec::with_capacity(self.nrows());
        for b in 0..self.mode.repeats() {
            let base = b * n * l;
            for pixel in 0..n {
                let seg = &u[base + pixel * l..base + (pixel + 1) * l];
                out.push(dot_ascending(self.msfa.row(pixel), seg));
            }
        }
        Ok(out)
    }
}

/// Builds the single-block measurement matrix of a tile.
pub fn build_phi(msfa: &MsfaBlock) -> MeasurementMatrix {
    let n = msfa.filters();
    let l = msfa.bands();
    let mut dense = DMatrix::zeros(n, n * l);
    for pixel in 0..n {
        for band in 0..l {
            dense[(pixel, pixel * l + band)] = msfa.row(pixel)[band];
        }
    }
    MeasurementMatrix {
        msfa: msfa.clone(),
        mode: BlockMode::One,
        dense,
    }
}

/// Repeats a single-block matrix nine times along the diagonal, covering a
/// 3x3 block neighborhood.
pub fn expand_nine(phi: &MeasurementMatrix) -> MeasurementMatrix {
    assert!(
        matches!(phi.mode, BlockMode::One),
        "expand_nine takes a single-block matrix"
    );
    let (r, c) = (phi.nrows(), phi.ncols());
    let mut dense = DMatrix::zeros(9 * r, 9 * c);
    for b in 0..9 {
        dense.view_mut((b * r, b * c), (r, c)).copy_from(&phi.dense);
    }
    MeasurementMatrix {
        msfa: phi.msfa.clone(),
        mode: BlockMode::Nine,
        dense,
    }
}

/// Mosaics one vectorized block: output n is the dot of sensitivity row n
/// with pixel n's spectrum.
pub fn mosaic_block(phi: &MeasurementMatrix, u: &BlockVector) -> Result<BlockVector> {
    Ok(BlockVector::from_vec(phi.apply(u.as_slice())?))
}

/// Mosaics a whole cube by tiling the filter array. The cube must already
/// be block-aligned (see `pad_to_blocks`).
pub fn mosaic_image(msfa: &MsfaBlock, cube: &SpectralCube) -> Result<MosaicImage> {
    if msfa.bands() != cube.bands() {
        return Err(Error::BandMismatch {
            cube: cube.bands(),
            msfa: msfa.bands(),
        });
    }
    let shape = msfa.shape();
    if !cube.is_block_aligned(shape) {
        return Err(Error::ShapeMismatch(format!(
            "cube {}x{} not aligned to {}x{} blocks; pad first",
            cube.width(),
            cube.height(),
            shape.w,
            shape.h
        )));
    }
    let nbx = cube.blocks_x(shape);
    let nby = cube.blocks_y(shape);
    let l = msfa.bands();
    let per_block: Vec<Vec<f64>> = parallel::map_indexed(nbx * nby, |bi| {
        let (bx, by) = (bi % nbx, bi / nbx);
        let mut u = vec![0.0; shape.pixels() * l];
        cube.write_block(shape, bx, by, &mut u);
        let mut v = Vec::with_capacity(shape.pixels());
        for pixel in 0..shape.pixels() {
            v.push(dot_ascending(
                msfa.row(pixel),
                &u[pixel * l..(pixel + 1) * l],
            ));
        }
        v
    });
    let mut values = vec![0.0; cube.width() * cube.height()];
    for (bi, block) in per_block.iter().enumerate() {
        let (bx, by) = (bi % nbx, bi / nbx);
        for (pixel, v) in block.iter().enumerate() {
            let x = bx * shape.w + pixel % shape.w;
            let y = by * shape.h + pixel / shape.w;
            values[y * cube.width() + x] = *v;
        }
    }
    MosaicImage::from_parts(cube.width(), cube.height(), values, msfa.content_id())
}

/// Nine-block consistency helper used by tests and the demosaicking path:
/// gathering a mosaic neighborhood must equal applying the nine-block
/// matrix to the gathered cube neighborhood.
pub fn gathered_mosaic_matches(
    phi9: &MeasurementMatrix,
    cube: &SpectralCube,
    mosaic: &MosaicImage,
    bx: usize,
    by: usize,
) -> Result<bool> {
    let shape = phi9.msfa.shape();
    let from_mosaic = gather_neighborhood(mosaic, shape, bx, by)?;
    let u9 = gather_neighborhood(cube, shape, bx, by)?;
    let from_cube = phi9.apply(u9.as_slice())?;
    Ok(from_mosaic.as_slice() == from_cube.as_slice())
}
