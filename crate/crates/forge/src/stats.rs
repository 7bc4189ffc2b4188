//! Second-order statistics of vectorized blocks.
//!
//! The Wiener demosaicker needs the uncentered second-moment matrix
//! R = E[u u^T] of block vectors (or of 3x3 neighborhood vectors). Two
//! sources are supported: an empirical average over training cubes, and a
//! separable first-order Markov model for baselines that have no training
//! data.
//!
//! Block positions are iterated on the filter-array-aligned grid (stride =
//! block size), matching how capture tiles the array; statistics are
//! uncentered because the estimator uses plain second moments with no mean
//! term.

use nalgebra::DMatrix;

use crate::cube::{
    gather_neighborhood, pad_to_blocks, vectorize_block, BlockMode, BlockShape, Fnv1a, SpectralCube,
};
use crate::error::{Error, Result};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Empirical,
    Markov,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Empirical => "empirical",
            Provenance::Markov => "markov",
        }
    }
}

/// Dense symmetric second-moment matrix, LN x LN (one block) or
/// 9LN x 9LN (3x3 neighborhood).
#[derive(Debug, Clone)]
pub struct AutocorrMatrix {
    matrix: DMatrix<f64>,
    mode: BlockMode,
    provenance: Provenance,
}

impl AutocorrMatrix {
    /// Wraps an externally supplied second-moment matrix; it must be
    /// square, finite, and symmetric to within 1e-12 relative.
    pub fn from_dense(
        matrix: DMatrix<f64>,
        mode: BlockMode,
        provenance: Provenance,
    ) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidDimensions(format!(
                "{}x{} second-moment matrix",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite second moment".into()));
        }
        let scale = matrix.norm().max(f64::MIN_POSITIVE);
        for i in 0..matrix.nrows() {
            for j in i + 1..matrix.ncols() {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidValue(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            matrix,
            mode,
            provenance,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mode(&self) -> BlockMode {
        self.mode
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Stable content hash for artifact sidecars.
    pub fn content_id(&self) -> String {
        let mut h = Fnv1a::new();
        h.write_u64(self.matrix.nrows() as u64);
        h.write_u64(self.mode.repeats() as u64);
        for v in self.matrix.iter() {
            h.write_u64(v.to_bits());
        }
        format!("{:016x}", h.finish())
    }
}

pub(crate) fn check_training(training: &[SpectralCube]) -> Result<()> {
    let first = training.first().ok_or(Error::EmptyTrainingSet)?;
    for cube in &training[1..] {
        if cube.bands() != first.bands() || cube.wavelengths() != first.wavelengths() {
            return Err(Error::BandMismatch {
                cube: cube.bands(),
                msfa: first.bands(),
            });
        }
    }
    Ok(())
}

fn block_or_neighborhood(
    cube: &SpectralCube,
    shape: BlockShape,
    mode: BlockMode,
    bx: usize,
    by: usize,
) -> Vec<f64> {
    match mode {
        BlockMode::One => vectorize_block(cube, shape, bx, by),
        BlockMode::Nine => gather_neighborhood(cube, shape, bx, by),
    }
    .expect("block index is on the aligned grid")
    .into_vec()
}

/// Averaged outer product (1/M) sum of u u^T over all aligned block
/// positions of all training cubes. Cubes are padded to block multiples
/// first; neighborhood gathering replicates edge blocks.
pub fn empirical_autocorr(
    training: &[SpectralCube],
    shape: BlockShape,
    mode: BlockMode,
) -> Result<AutocorrMatrix> {
    check_training(training)?;
    let l = training[0].bands();
    let dim = mode.repeats() * shape.pixels() * l;

    // Per-cube partial sums in parallel, then a fixed-order reduction so the
    // result does not depend on scheduling.
    let partials: Vec<(DMatrix<f64>, usize)> = parallel::map_indexed(training.len(), |ci| {
        let cube = pad_to_blocks(&training[ci], shape);
        let nbx = cube.blocks_x(shape);
        let nby = cube.blocks_y(shape);
        let m = nbx * nby;
        let mut columns = DMatrix::zeros(dim, m);
        for by in 0..nby {
            for bx in 0..nbx {
                let u = block_or_neighborhood(&cube, shape, mode, bx, by);
                columns.column_mut(by * nbx + bx).copy_from_slice(&u);
            }
        }
        let mut partial = DMatrix::zeros(dim, dim);
        partial.gemm(1.0, &columns, &columns.transpose(), 0.0);
        (partial, m)
    });

    let mut sum = DMatrix::zeros(dim, dim);
    let mut total = 0usize;
    for (partial, m) in &partials {
        sum += partial;
        total += m;
    }
    let matrix = sum / total as f64;
    Ok(AutocorrMatrix {
        matrix,
        mode,
        provenance: Provenance::Empirical,
    })
}

/// Pixel coordinates of vector index p under the given mode. In
/// nine-block mode the neighborhood blocks are offset by one block pitch
/// in the row-major 3x3 scan.
fn position(shape: BlockShape, mode: BlockMode, p: usize) -> (f64, f64) {
    let n = shape.pixels();
    let (block, pixel) = match mode {
        BlockMode::One => (4, p),
        BlockMode::Nine => (p / n, p % n),
    };
    let (dx, dy) = ((block % 3) as f64 - 1.0, (block / 3) as f64 - 1.0);
    let x = (pixel % shape.w) as f64 + dx * shape.w as f64;
    let y = (pixel / shape.w) as f64 + dy * shape.h as f64;
    (x, y)
}

/// Separable first-order Markov model:
/// R[(p,l),(q,k)] = rho_s^d(p,q) * rho_lambda^|l-k| with d the Euclidean
/// pixel distance. Both factors are valid correlation kernels, so the
/// product is positive semidefinite.
pub fn markov_autocorr(
    shape: BlockShape,
    bands: usize,
    mode: BlockMode,
    rho_s: f64,
    rho_lambda: f64,
) -> Result<AutocorrMatrix> {
    for (name, rho) in [("rho_s", rho_s), ("rho_lambda", rho_lambda)] {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::ParamRange(format!("{name} = {rho}, need [0, 1)")));
        }
    }
    if bands == 0 || shape.pixels() == 0 {
        return Err(Error::InvalidDimensions("empty block or zero bands".into()));
    }
    let pixels = mode.repeats() * shape.pixels();
    let dim = pixels * bands;

    let mut spectral = DMatrix::zeros(bands, bands);
    for l in 0..bands {
        for k in 0..bands {
            spectral[(l, k)] = if l == k {
                1.0
            } else {
                rho_lambda.powi((l as i32 - k as i32).abs())
            };
        }
    }

    let mut matrix = DMatrix::zeros(dim, dim);
    for p in 0..pixels {
        let (px, py) = position(shape, mode, p);
        for q in 0..pixels {
            let (qx, qy) = position(shape, mode, q);
            let d = (px - qx).hypot(py - qy);
            let spatial = if p == q { 1.0 } else { rho_s.powf(d) };
            for l in 0..bands {
                for k in 0..bands {
                    matrix[(p * bands + l, q * bands + k)] = spatial * spectral[(l, k)];
                }
            }
        }
    }
    Ok(AutocorrMatrix {
        matrix,
        mode,
        provenance: Provenance::Markov,
    })
}
