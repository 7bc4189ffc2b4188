//! Wiener demosaicking: build the linear minimum-mean-square-error
//! reconstruction operator from second-order statistics and apply it to
//! mosaics.
//!
//! For a measurement matrix Phi and autocorrelation R the operator is
//! W = R Phi^T (Phi R Phi^T + eps I)^{-1}, obtained by a symmetric
//! positive-definite solve, never an explicit inverse. In nine-block mode
//! the operator reconstructs a full 3x3 neighborhood; only the center
//! block is kept.

use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cube::{
    gather_neighborhood, vectorize_block, BlockGrid, BlockMode, BlockVector, MosaicImage,
    MsfaBlock, SpectralCube,
};
use crate::error::{Error, Result};
use crate::io;
use crate::mosaic::MeasurementMatrix;
use crate::parallel;
use crate::stats::AutocorrMatrix;

/// Selector keeping the center block of a nine-block reconstruction:
/// entries [4*ln, 5*ln) of a vector of length 9*ln.
#[derive(Debug, Clone, Copy)]
pub struct ExtractionMatrix {
    ln: usize,
}

impl ExtractionMatrix {
    pub fn new(ln: usize) -> Self {
        Self { ln }
    }

    pub fn center_len(&self) -> usize {
        self.ln
    }

    pub fn apply<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[4 * self.ln..5 * self.ln]
    }

    /// Rows [4*ln, 5*ln) of a nine-block operator.
    pub fn select_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.rows(4 * self.ln, self.ln).clone_owned()
    }
}

/// Linear demosaicking operator plus the provenance needed to validate it
/// against a mosaic at apply time.
#[derive(Debug, Clone)]
pub struct DemosaicMatrix {
    matrix: DMatrix<f64>,
    mode: BlockMode,
    epsilon: f64,
    msfa_id: String,
    r_id: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    mode: String,
    epsilon: f64,
    msfa_id: String,
    r_id: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

impl DemosaicMatrix {
    /// Assembles an operator from an externally produced matrix and its
    /// provenance fields; the training path goes through
    /// [`wiener_matrix`] instead.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        mode: BlockMode,
        epsilon: f64,
        msfa_id: String,
        r_id: String,
    ) -> Self {
        Self {
            matrix,
            mode,
            epsilon,
            msfa_id,
            r_id,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mode(&self) -> BlockMode {
        self.mode
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn msfa_id(&self) -> &str {
        &self.msfa_id
    }

    pub fn r_id(&self) -> &str {
        &self.r_id
    }

    /// Center-block rows of a nine-block operator (ln x 9n).
    pub fn center_rows(&self) -> DMatrix<f64> {
        assert!(matches!(self.mode, BlockMode::Nine));
        ExtractionMatrix::new(self.matrix.nrows() / 9).select_rows(&self.matrix)
    }

    /// Writes the operator and a JSON sidecar `<path>.json` recording mode,
    /// ridge, and the ids of the filter array and statistics it came from.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_mat32(path, &self.matrix)?;
        let sidecar = Sidecar {
            mode: self.mode.label().into(),
            epsilon: self.epsilon,
            msfa_id: self.msfa_id.clone(),
            r_id: self.r_id.clone(),
        };
        let mut text = serde_json::to_string_pretty(&sidecar)?;
        text.push('\n');
        std::fs::write(sidecar_path(path), text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DemosaicMatrix> {
        let matrix = io::read_mat32(path)?;
        let bytes = std::fs::read(sidecar_path(path))?;
        let sidecar: Sidecar =
            serde_json::from_slice(&bytes).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let mode = match sidecar.mode.as_str() {
            "one-block" => BlockMode::One,
            "nine-block" => BlockMode::Nine,
            other => return Err(Error::MalformedHeader(format!("mode {other}"))),
        };
        if matches!(mode, BlockMode::Nine) && matrix.nrows() % 9 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "nine-block operator with {} rows",
                matrix.nrows()
            )));
        }
        Ok(DemosaicMatrix {
            matrix,
            mode,
            epsilon: sidecar.epsilon,
            msfa_id: sidecar.msfa_id,
            r_id: sidecar.r_id,
        })
    }
}

/// R Phi^T without materializing Phi: output column (b, n) is the
/// sensitivity-weighted sum of R's columns for pixel n of block b.
fn r_phi_t(r: &DMatrix<f64>, msfa: &MsfaBlock, reps: usize) -> DMatrix<f64> {
    let n = msfa.filters();
    let l = msfa.bands();
    let mut b = DMatrix::zeros(r.nrows(), reps * n);
    for blk in 0..reps {
        for pixel in 0..n {
            let mut out = b.column_mut(blk * n + pixel);
            for band in 0..l {
                let w = msfa.row(pixel)[band];
                if w != 0.0 {
                    out.axpy(w, &r.column(blk * n * l + pixel * l + band), 1.0);
                }
            }
        }
    }
    b
}

struct NormalSystem {
    b: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    eps: f64,
}

/// Forms B = R Phi^T and the factorization of A = Phi B + eps I shared by
/// the full and center-rows solves.
fn normal_system(
    r: &AutocorrMatrix,
    phi: &MeasurementMatrix,
    epsilon: Option<f64>,
) -> Result<NormalSystem> {
    if r.mode() != phi.mode() {
        return Err(Error::ShapeMismatch(format!(
            "{} statistics with {} measurement matrix",
            r.mode().label(),
            phi.mode().label()
        )));
    }
    if r.dim() != phi.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "statistics dim {} vs measurement cols {}",
            r.dim(),
            phi.ncols()
        )));
    }
    if let Some(e) = epsilon {
        if !e.is_finite() || e < 0.0 {
            return Err(Error::ParamRange(format!("ridge epsilon = {e}")));
        }
    }
    let reps = phi.mode().repeats();
    let rows = phi.nrows();
    let b = r_phi_t(r.matrix(), phi.msfa(), reps);

    // A = Phi B, one structured product per column.
    let mut a = DMatrix::zeros(rows, rows);
    for c in 0..rows {
        let col = phi.apply(b.column(c).as_slice())?;
        a.column_mut(c).copy_from_slice(&col);
    }
    let eps = match epsilon {
        Some(e) => e,
        None => 1e-8 * a.trace() / rows as f64,
    };
    for i in 0..rows {
        a[(i, i)] += eps;
    }
    let chol = Cholesky::new(a).ok_or(Error::SingularSystem)?;
    Ok(NormalSystem { b, chol, eps })
}

/// Center-block rows of the nine-block Wiener operator, solved without
/// materializing the other eight row blocks. Bitwise identical to the
/// matching rows of [`wiener_matrix`]'s result because each right-hand
/// column is solved independently.
pub(crate) fn center_wiener_rows(
    r: &AutocorrMatrix,
    phi: &MeasurementMatrix,
    epsilon: Option<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    assert!(matches!(phi.mode(), BlockMode::Nine));
    let sys = normal_system(r, phi, epsilon)?;
    let ln = sys.b.nrows() / 9;
    let b_center = sys.b.rows(4 * ln, ln).transpose();
    let x = sys.chol.solve(&b_center);
    Ok((x.transpose(), sys.eps))
}

/// Builds the Wiener operator W = R Phi^T (Phi R Phi^T + eps I)^{-1}.
///
/// `epsilon = None` applies the default relative ridge
/// 1e-8 * trace(Phi R Phi^T) / rows; `Some(0.0)` demands an exactly
/// nonsingular system.
pub fn wiener_matrix(
    r: &AutocorrMatrix,
    phi: &MeasurementMatrix,
    epsilon: Option<f64>,
) -> Result<DemosaicMatrix> {
    let sys = normal_system(r, phi, epsilon)?;
    let x = sys.chol.solve(&sys.b.transpose());
    Ok(DemosaicMatrix {
        matrix: x.transpose(),
        mode: phi.mode(),
        epsilon: sys.eps,
        msfa_id: phi.msfa().content_id(),
        r_id: r.content_id(),
    })
}

/// Applies the operator to one measurement vector.
pub fn demosaic_block(w: &DemosaicMatrix, v: &BlockVector) -> Result<BlockVector> {
    if v.len() != w.matrix.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "measurement length {}, operator expects {}",
            v.len(),
            w.matrix.ncols()
        )));
    }
    let out = &w.matrix * DVector::from_column_slice(v.as_slice());
    Ok(BlockVector::from_vec(out.data.into()))
}

fn check_mosaic(msfa: &MsfaBlock, mosaic: &MosaicImage) -> Result<()> {
    if mosaic.msfa_id() != msfa.content_id() {
        return Err(Error::MsfaMismatch(format!(
            "mosaic came from filter array {}, not {}",
            mosaic.msfa_id(),
            msfa.content_id()
        )));
    }
    let shape = msfa.shape();
    if !mosaic.width().is_multiple_of(shape.w) || !mosaic.height().is_multiple_of(shape.h) {
        return Err(Error::ShapeMismatch(format!(
            "mosaic {}x{} not aligned to {}x{} blocks",
            mosaic.width(),
            mosaic.height(),
            shape.w,
            shape.h
        )));
    }
    Ok(())
}

fn reconstruct(
    msfa: &MsfaBlock,
    mosaic: &MosaicImage,
    per_block: impl Fn(usize, usize) -> Vec<f64> + Sync,
) -> Result<SpectralCube> {
    let shape = msfa.shape();
    let nbx = mosaic.blocks_x(shape);
    let nby = mosaic.blocks_y(shape);
    let blocks: Vec<Vec<f64>> =
        parallel::map_indexed(nbx * nby, |bi| per_block(bi % nbx, bi / nbx));
    let mut cube = SpectralCube::from_raw(
        mosaic.width(),
        mosaic.height(),
        msfa.wavelengths().to_vec(),
        vec![0.0; mosaic.width() * mosaic.height() * msfa.bands()],
    )?;
    for (bi, data) in blocks.iter().enumerate() {
        crate::cube::devectorize_block(&mut cube, shape, bi % nbx, bi / nbx, data)?;
    }
    Ok(cube)
}

/// Reconstructs a cube from a mosaic with a nine-block operator: each
/// block's 3x3 mosaic neighborhood is gathered, reconstructed, and only
/// the center block kept. Output values are the raw linear estimates;
/// clamp to [0, 1] only when exporting.
pub fn demosaic_image(
    w9: &DemosaicMatrix,
    msfa: &MsfaBlock,
    mosaic: &MosaicImage,
) -> Result<SpectralCube> {
    if !matches!(w9.mode, BlockMode::Nine) {
        return Err(Error::ShapeMismatch("need a nine-block operator".into()));
    }
    if w9.msfa_id != msfa.content_id() {
        return Err(Error::MsfaMismatch(format!(
            "operator built for filter array {}, not {}",
            w9.msfa_id,
            msfa.content_id()
        )));
    }
    check_mosaic(msfa, mosaic)?;
    let shape = msfa.shape();
    let ln = msfa.filters() * msfa.bands();
    if w9.matrix.nrows() != 9 * ln || w9.matrix.ncols() != 9 * msfa.filters() {
        return Err(Error::ShapeMismatch(format!(
            "operator {}x{} does not fit a {}-pixel {}-band tile",
            w9.matrix.nrows(),
            w9.matrix.ncols(),
            msfa.filters(),
            msfa.bands()
        )));
    }
    let center = w9.center_rows();
    reconstruct(msfa, mosaic, |bx, by| {
        let v9 = gather_neighborhood(mosaic, shape, bx, by).expect("aligned block index");
        let u = &center * DVector::from_column_slice(v9.as_slice());
        u.data.into()
    })
}

/// Reconstructs a cube block by block with a single-block operator; no
/// neighborhood information is used.
pub fn demosaic_image_1block(
    w: &DemosaicMatrix,
    msfa: &MsfaBlock,
    mosaic: &MosaicImage,
) -> Result<SpectralCube> {
    if !matches!(w.mode, BlockMode::One) {
        return Err(Error::ShapeMismatch("need a single-block operator".into()));
    }
    if w.msfa_id != msfa.content_id() {
        return Err(Error::MsfaMismatch(format!(
            "operator built for filter array {}, not {}",
            w.msfa_id,
            msfa.content_id()
        )));
    }
    check_mosaic(msfa, mosaic)?;
    let shape = msfa.shape();
    let ln = msfa.filters() * msfa.bands();
    if w.matrix.nrows() != ln || w.matrix.ncols() != msfa.filters() {
        return Err(Error::ShapeMismatch(format!(
            "operator {}x{} does not fit a {}-pixel {}-band tile",
            w.matrix.nrows(),
            w.matrix.ncols(),
            msfa.filters(),
            msfa.bands()
        )));
    }
    let matrix = w.matrix.clone();
    reconstruct(msfa, mosaic, |bx, by| {
        let v = vectorize_block(mosaic, shape, bx, by).expect("aligned block index");
        let u = &matrix * DVector::from_column_slice(v.as_slice());
        u.data.into()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::BlockShape;
    use crate::mosaic::{build_phi, expand_nine, mosaic_image};
    use crate::stats::{empirical_autocorr, markov_autocorr, AutocorrMatrix, Provenance};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn wl(n: usize) -> Vec<f64> {
        (0..n).map(|i| 400.0 + 10.0 * i as f64).collect()
    }

    fn random_msfa(rng: &mut StdRng, w: usize, h: usize, l: usize) -> MsfaBlock {
        let sens: Vec<f64> = (0..w * h * l).map(|_| rng.random::<f64>()).collect();
        MsfaBlock::new(w, h, wl(l), sens).unwrap()
    }

    fn random_cube(rng: &mut StdRng, w: usize, h: usize, l: usize) -> SpectralCube {
        let values: Vec<f64> = (0..w * h * l).map(|_| rng.random::<f64>()).collect();
        SpectralCube::new(w, h, wl(l), values).unwrap()
    }

    #[test]
    fn scalar_band_positive_filters_invert_exactly() {
        // L=1: Phi is square diagonal, R=I, so W is its inverse
        let phis = [0.2, 0.5, 0.8, 1.0];
        let msfa = MsfaBlock::new(2, 2, wl(1), phis.to_vec()).unwrap();
        let phi = build_phi(&msfa);
        let r = markov_autocorr(msfa.shape(), 1, BlockMode::One, 0.0, 0.0).unwrap();
        let w = wiener_matrix(&r, &phi, Some(0.0)).unwrap();
        for (i, phi_i) in phis.iter().enumerate() {
            for j in 0..4 {
                let expect = if i == j { 1.0 / phi_i } else { 0.0 };
                assert_relative_eq!(w.matrix()[(i, j)], expect, max_relative = 1e-12);
            }
        }
        let v = BlockVector::from_vec(vec![0.1, 0.25, 0.4, 0.9]);
        let u = demosaic_block(&w, &v).unwrap();
        for ((u_i, v_i), phi_i) in u.as_slice().iter().zip(v.as_slice()).zip(&phis) {
            assert_relative_eq!(*u_i, v_i / phi_i, max_relative = 1e-12);
        }
    }

    #[test]
    fn orthonormal_rows_give_transpose() {
        // unit-norm sensitivity rows have orthonormal measurement rows
        // (disjoint column support), so with R=I the operator is Phi^T
        let sens = vec![0.6, 0.8, 0.0, 0.28, 0.96, 0.0];
        let msfa = MsfaBlock::new(2, 1, wl(3), sens).unwrap();
        let phi = build_phi(&msfa);
        let r = markov_autocorr(msfa.shape(), 3, BlockMode::One, 0.0, 0.0).unwrap();
        let w = wiener_matrix(&r, &phi, Some(0.0)).unwrap();
        let expect = phi.dense().transpose();
        for (a, b) in w.matrix().iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_identity_holds() {
        // W (Phi R Phi^T + eps I) must equal R Phi^T
        let mut rng = StdRng::seed_from_u64(21);
        let msfa = random_msfa(&mut rng, 2, 2, 3);
        let phi = build_phi(&msfa);
        let raw = DMatrix::from_fn(12, 12, |_, _| rng.random::<f64>() - 0.5);
        let psd = &raw * raw.transpose() / 12.0 + DMatrix::identity(12, 12) * 0.01;
        let r =
            AutocorrMatrix::from_dense(psd.clone(), BlockMode::One, Provenance::Empirical).unwrap();
        let eps = 1e-6;
        let w = wiener_matrix(&r, &phi, Some(eps)).unwrap();
        let a = phi.dense() * &psd * phi.dense().transpose() + DMatrix::identity(4, 4) * eps;
        let lhs = w.matrix() * a;
        let rhs = &psd * phi.dense().transpose();
        let denom = rhs.norm();
        assert!((lhs - rhs).norm() / denom < 1e-8);
    }

    #[test]
    fn identity_system_reproduces_mosaic() {
        // L=1 with unit sensitivities: mosaicking is the identity, and so
        // is the nine-block Wiener operator with identity statistics
        let msfa = MsfaBlock::new(2, 2, wl(1), vec![1.0; 4]).unwrap();
        let phi9 = expand_nine(&build_phi(&msfa));
        let r9 = markov_autocorr(msfa.shape(), 1, BlockMode::Nine, 0.0, 0.0).unwrap();
        let w9 = wiener_matrix(&r9, &phi9, Some(0.0)).unwrap();
        let mut rng = StdRng::seed_from_u64(22);
        let cube = random_cube(&mut rng, 6, 6, 1);
        let mosaic = mosaic_image(&msfa, &cube).unwrap();
        let back = demosaic_image(&w9, &msfa, &mosaic).unwrap();
        let err = back
            .values()
            .iter()
            .zip(cube.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 1e-10, "max abs error {err}");
    }

    #[test]
    fn rank_one_training_reconstructs_training() {
        // one distinct block tiled everywhere: statistics are rank one and
        // the defaulted ridge still reproduces the training cube
        let mut rng = StdRng::seed_from_u64(23);
        let tile = random_cube(&mut rng, 2, 2, 3);
        let mut cube = SpectralCube::constant(6, 6, wl(3), 0.0).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                for b in 0..3 {
                    cube.set_value(x, y, b, tile.value(x % 2, y % 2, b));
                }
            }
        }
        let msfa = random_msfa(&mut rng, 2, 2, 3);
        let shape = msfa.shape();
        let r9 = empirical_autocorr(&[cube.clone()], shape, BlockMode::Nine).unwrap();
        let phi9 = expand_nine(&build_phi(&msfa));
        let w9 = wiener_matrix(&r9, &phi9, None).unwrap();
        let mosaic = mosaic_image(&msfa, &cube).unwrap();
        let back = demosaic_image(&w9, &msfa, &mosaic).unwrap();
        let err = back
            .values()
            .iter()
            .zip(cube.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 1e-6, "max abs error {err}");
    }

    #[test]
    fn center_extraction_matches_full_product() {
        let mut rng = StdRng::seed_from_u64(24);
        let msfa = random_msfa(&mut rng, 2, 2, 2);
        let cubes = [
            random_cube(&mut rng, 10, 10, 2),
            random_cube(&mut rng, 10, 10, 2),
        ];
        let r9 = empirical_autocorr(&cubes, msfa.shape(), BlockMode::Nine).unwrap();
        let phi9 = expand_nine(&build_phi(&msfa));
        let w9 = wiener_matrix(&r9, &phi9, Some(0.0)).unwrap();
        let mosaic = mosaic_image(&msfa, &cubes[0]).unwrap();
        let back = demosaic_image(&w9, &msfa, &mosaic).unwrap();
        let shape = msfa.shape();
        let ln = 8;
        for (bx, by) in [(0, 0), (2, 3), (4, 4)] {
            let v9 = gather_neighborhood(&mosaic, shape, bx, by).unwrap();
            let full = w9.matrix() * DVector::from_column_slice(v9.as_slice());
            let s = ExtractionMatrix::new(ln);
            let center = s.apply(full.as_slice());
            let got = vectorize_block(&back, shape, bx, by).unwrap();
            assert_eq!(got.as_slice(), center);
        }
    }

    #[test]
    fn extraction_ignores_other_slots() {
        let s = ExtractionMatrix::new(2);
        let mut x: Vec<f64> = (0..18).map(|i| i as f64).collect();
        let kept = s.apply(&x).to_vec();
        for (i, v) in x.iter_mut().enumerate() {
            if !(8..10).contains(&i) {
                *v = -99.0;
            }
        }
        assert_eq!(s.apply(&x), kept.as_slice());
    }

    #[test]
    fn nine_block_training_error_never_worse() {
        let mut rng = StdRng::seed_from_u64(25);
        let msfa = random_msfa(&mut rng, 2, 2, 2);
        let cubes = [
            random_cube(&mut rng, 10, 10, 2),
            random_cube(&mut rng, 10, 10, 2),
        ];
        let shape = msfa.shape();
        let r1 = empirical_autocorr(&cubes, shape, BlockMode::One).unwrap();
        let r9 = empirical_autocorr(&cubes, shape, BlockMode::Nine).unwrap();
        let phi = build_phi(&msfa);
        let phi9 = expand_nine(&phi);
        let w1 = wiener_matrix(&r1, &phi, Some(0.0)).unwrap();
        let w9 = wiener_matrix(&r9, &phi9, Some(0.0)).unwrap();
        let mut mse1 = 0.0;
        let mut mse9 = 0.0;
        let mut count = 0usize;
        for cube in &cubes {
            let mosaic = mosaic_image(&msfa, cube).unwrap();
            let b1 = demosaic_image_1block(&w1, &msfa, &mosaic).unwrap();
            let b9 = demosaic_image(&w9, &msfa, &mosaic).unwrap();
            for (a, b) in b1.values().iter().zip(cube.values()) {
                mse1 += (a - b) * (a - b);
            }
            for (a, b) in b9.values().iter().zip(cube.values()) {
                mse9 += (a - b) * (a - b);
            }
            count += cube.values().len();
        }
        mse1 /= count as f64;
        mse9 /= count as f64;
        assert!(
            mse9 <= mse1 + 1e-12,
            "nine-block {mse9} vs one-block {mse1}"
        );
    }

    #[test]
    fn perturbing_the_operator_never_helps_on_training() {
        let mut rng = StdRng::seed_from_u64(26);
        let msfa = random_msfa(&mut rng, 2, 2, 2);
        let cubes = [
            random_cube(&mut rng, 10, 10, 2),
            random_cube(&mut rng, 10, 10, 2),
        ];
        let shape = msfa.shape();
        let r1 = empirical_autocorr(&cubes, shape, BlockMode::One).unwrap();
        let phi = build_phi(&msfa);
        let w = wiener_matrix(&r1, &phi, Some(0.0)).unwrap();

        // gather training pairs (u, v)
        let mut pairs = Vec::new();
        for cube in &cubes {
            for by in 0..cube.blocks_y(shape) {
                for bx in 0..cube.blocks_x(shape) {
                    let u = vectorize_block(cube, shape, bx, by).unwrap();
                    let v = phi.apply(u.as_slice()).unwrap();
                    pairs.push((u.into_vec(), v));
                }
            }
        }
        let sse = |m: &DMatrix<f64>| -> f64 {
            let mut total = 0.0;
            for (u, v) in &pairs {
                let est = m * DVector::from_column_slice(v);
                for (a, b) in est.iter().zip(u.iter()) {
                    total += (a - b) * (a - b);
                }
            }
            total
        };
        let base = sse(w.matrix());
        for _ in 0..100 {
            let mut delta = DMatrix::from_fn(8, 4, |_, _| rng.random::<f64>() - 0.5);
            let norm = delta.norm();
            delta *= 1e-2 * rng.random::<f64>() / norm;
            let perturbed = w.matrix() + delta;
            assert!(sse(&perturbed) >= base - 1e-12);
        }
    }

    #[test]
    fn singular_system_without_ridge_is_reported() {
        let mut rng = StdRng::seed_from_u64(27);
        // rank-one statistics cannot support a 4x4 solve with zero ridge
        let cube = SpectralCube::constant(4, 4, wl(2), 0.5).unwrap();
        let r = empirical_autocorr(&[cube], BlockShape::new(2, 2), BlockMode::One).unwrap();
        let msfa = random_msfa(&mut rng, 2, 2, 2);
        let phi = build_phi(&msfa);
        assert!(matches!(
            wiener_matrix(&r, &phi, Some(0.0)),
            Err(Error::SingularSystem)
        ));
        // the default relative ridge rescues the same system
        assert!(wiener_matrix(&r, &phi, None).is_ok());
    }

    #[test]
    fn shape_and_mode_mismatches_rejected() {
        let mut rng = StdRng::seed_from_u64(28);
        let msfa = random_msfa(&mut rng, 2, 2, 2);
        let phi = build_phi(&msfa);
        let phi9 = expand_nine(&phi);
        let r1 = markov_autocorr(msfa.shape(), 2, BlockMode::One, 0.5, 0.5).unwrap();
        assert!(matches!(
            wiener_matrix(&r1, &phi9, None),
            Err(Error::ShapeMismatch(_))
        ));
        let r_wrong = markov_autocorr(msfa.shape(), 3, BlockMode::One, 0.5, 0.5).unwrap();
        assert!(matches!(
            wiener_matrix(&r_wrong, &phi, None),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            wiener_matrix(&r1, &phi, Some(-1.0)),
            Err(Error::ParamRange(_))
        ));
    }

    #[test]
    fn mosaic_from_other_msfa_rejected() {
        let mut rng = StdRng::seed_from_u64(29);
        let msfa_a = random_msfa(&mut rng, 2, 2, 2);
        let msfa_b = random_msfa(&mut rng, 2, 2, 2);
        let cube = random_cube(&mut rng, 6, 6, 2);
        let mosaic_b = mosaic_image(&msfa_b, &cube).unwrap();
        let r9 = markov_autocorr(msfa_a.shape(), 2, BlockMode::Nine, 0.5, 0.5).unwrap();
        let phi9 = expand_nine(&build_phi(&msfa_a));
        let w9 = wiener_matrix(&r9, &phi9, None).unwrap();
        assert!(matches!(
            demosaic_image(&w9, &msfa_a, &mosaic_b),
            Err(Error::MsfaMismatch(_))
        ));
    }

    #[test]
    fn center_rows_solve_matches_full_solve_bitwise() {
        let mut rng = StdRng::seed_from_u64(31);
        let msfa = random_msfa(&mut rng, 2, 2, 2);
        let cubes = [
            random_cube(&mut rng, 10, 10, 2),
            random_cube(&mut rng, 10, 10, 2),
        ];
        let r9 = empirical_autocorr(&cubes, msfa.shape(), BlockMode::Nine).unwrap();
        let phi9 = expand_nine(&build_phi(&msfa));
        let w9 = wiener_matrix(&r9, &phi9, Some(0.0)).unwrap();
        let (center, eps) = center_wiener_rows(&r9, &phi9, Some(0.0)).unwrap();
        assert_eq!(eps, 0.0);
        assert_eq!(center, w9.center_rows());
    }

    #[test]
    fn save_load_roundtrip_with_sidecar() {
        let mut rng = StdRng::seed_from_u64(30);
        let msfa = random_msfa(&mut rng, 2, 2, 2);
        let r = markov_autocorr(msfa.shape(), 2, BlockMode::One, 0.5, 0.5).unwrap();
        let phi = build_phi(&msfa);
        let w = wiener_matrix(&r, &phi, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mat32");
        w.save(&path).unwrap();
        assert!(dir.path().join("w.mat32.json").exists());
        let back = DemosaicMatrix::load(&path).unwrap();
        assert_eq!(back.mode(), w.mode());
        assert_eq!(back.epsilon(), w.epsilon());
        assert_eq!(back.msfa_id(), w.msfa_id());
        assert_eq!(back.r_id(), w.r_id());
        for (a, b) in back.matrix().iter().zip(w.matrix().iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
    }
}
