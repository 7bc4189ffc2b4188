//! Core image types and block vectorization.
//!
//! A [`SpectralCube`] stores an L-band image band-sequentially. A
//! [`MsfaBlock`] is one tile of a periodic multispectral filter array: N
//! spectral sensitivity rows, one per pixel of the tile. Blocks are
//! vectorized pixel-major then band: for a block with pixels n = 0..N in
//! row-major raster order, the vector is
//! `[u_(0,0) .. u_(0,L-1), u_(1,0) .. u_(1,L-1), ...]`.
//!
//! Neighborhood gathering concatenates the 3x3 ring of blocks around a
//! center block in row-major scan order; off-image neighbors are replaced by
//! the nearest valid block (block-level replication).

use crate::error::{Error, Result};

/// Width and height of one filter-array tile, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub w: usize,
    pub h: usize,
}

impl BlockShape {
    pub fn new(w: usize, h: usize) -> Self {
        Self { w, h }
    }

    /// Pixels per block (N).
    pub fn pixels(&self) -> usize {
        self.w * self.h
    }
}

/// Whether an operation concerns a single block or the 3x3 block
/// neighborhood around it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    One,
    Nine,
}

impl BlockMode {
    /// Number of blocks involved (1 or 9).
    pub fn repeats(&self) -> usize {
        match self {
            BlockMode::One => 1,
            BlockMode::Nine => 9,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BlockMode::One => "one-block",
            BlockMode::Nine => "nine-block",
        }
    }
}

fn check_wavelengths(wavelengths: &[f64]) -> Result<()> {
    if wavelengths.is_empty() {
        return Err(Error::InvalidDimensions("no bands".into()));
    }
    for w in wavelengths {
        if !w.is_finite() {
            return Err(Error::InvalidValue(format!("wavelength {w}")));
        }
    }
    if wavelengths.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::WavelengthOrder);
    }
    Ok(())
}

/// Full-resolution L-band image with values stored band-sequentially:
/// all of band 0 row-major, then band 1, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    width: usize,
    height: usize,
    wavelengths: Vec<f64>,
    values: Vec<f64>,
}

impl SpectralCube {
    /// Builds a cube and enforces the full invariants, including that every
    /// value lies in [0, 1].
    pub fn new(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let cube = Self::from_raw(width, height, wavelengths, values)?;
        cube.validate_unit_range()?;
        Ok(cube)
    }

    /// Builds a cube without the [0, 1] range check. Linear reconstructions
    /// may legitimately overshoot the unit range until they are clamped for
    /// export, so this is the constructor used by the demosaicking path.
    pub fn from_raw(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!("{width}x{height}")));
        }
        check_wavelengths(&wavelengths)?;
        let expected = width * height * wavelengths.len();
        if values.len() != expected {
            return Err(Error::InvalidDimensions(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self {
            width,
            height,
            wavelengths,
            values,
        })
    }

    /// Constant-valued cube, mostly useful in tests and as a neutral target.
    pub fn constant(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        value: f64,
    ) -> Result<Self> {
        let n = width * height * wavelengths.len();
        Self::new(width, height, wavelengths, vec![value; n])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn idx(&self, x: usize, y: usize, band: usize) -> usize {
        band * self.width * self.height + y * self.width + x
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, band: usize) -> f64 {
        self.values[self.idx(x, y, band)]
    }

    #[inline]
    pub fn set_value(&mut self, x: usize, y: usize, band: usize, v: f64) {
        let i = self.idx(x, y, band);
        self.values[i] = v;
    }

    /// Errors unless every value lies in [0, 1].
    pub fn validate_unit_range(&self) -> Result<()> {
        if let Some(v) = self.values.iter().find(|v| **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidValue(format!(
                "cube value {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Copy with every value clamped into [0, 1]; used at export time.
    pub fn clamped(&self) -> SpectralCube {
        let values = self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        SpectralCube {
            width: self.width,
            height: self.height,
            wavelengths: self.wavelengths.clone(),
            values,
        }
    }

    pub fn blocks_x(&self, shape: BlockShape) -> usize {
        self.width / shape.w
    }

    pub fn blocks_y(&self, shape: BlockShape) -> usize {
        self.height / shape.h
    }

    pub fn is_block_aligned(&self, shape: BlockShape) -> bool {
        self.width.is_multiple_of(shape.w) && self.height.is_multiple_of(shape.h)
    }

    /// Top-left crop, used to restore pre-padding dimensions.
    pub fn cropped(&self, width: usize, height: usize) -> Result<SpectralCube> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::InvalidDimensions(format!(
                "crop {width}x{height} from {}x{}",
                self.width, self.height
            )));
        }
        let bands = self.bands();
        let mut values = Vec::with_capacity(width * height * bands);
        for band in 0..bands {
            for y in 0..height {
                for x in 0..width {
                    values.push(self.value(x, y, band));
                }
            }
        }
        SpectralCube::from_raw(width, height, self.wavelengths.clone(), values)
    }
}

/// Vectorized pixel values of one block (length L*N) or of a 3x3 block
/// neighborhood (length 9*L*N). Layout is pixel-major then band.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    data: Vec<f64>,
}

impl BlockVector {
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Center slot of a nine-block vector: entries `[4*len, 5*len)`.
    pub fn center_slot(&self, per_block_len: usize) -> &[f64] {
        &self.data[4 * per_block_len..5 * per_block_len]
    }
}

/// Anything laid out on a block grid from which per-block vectors can be
/// gathered: spectral cubes (per-block length L*N) and mosaics (length N).
pub trait BlockGrid {
    fn grid_width(&self) -> usize;
    fn grid_height(&self) -> usize;
    fn per_block_len(&self, shape: BlockShape) -> usize;
    /// Writes the vectorized block `(bx, by)` into `out`.
    fn write_block(&self, shape: BlockShape, bx: usize, by: usize, out: &mut [f64]);

    fn blocks_x(&self, shape: BlockShape) -> usize {
        self.grid_width() / shape.w
    }

    fn blocks_y(&self, shape: BlockShape) -> usize {
        self.grid_height() / shape.h
    }
}

impl BlockGrid for SpectralCube {
    fn grid_width(&self) -> usize {
        self.width
    }

    fn grid_height(&self) -> usize {
        self.height
    }

    fn per_block_len(&self, shape: BlockShape) -> usize {
        shape.pixels() * self.bands()
    }

    fn write_block(&self, shape: BlockShape, bx: usize, by: usize, out: &mut [f64]) {
        let bands = self.bands();
        let x0 = bx * shape.w;
        let y0 = by * shape.h;
        let mut i = 0;
        for py in 0..shape.h {
            for px in 0..shape.w {
                for band in 0..bands {
                    out[i] = self.value(x0 + px, y0 + py, band);
                    i += 1;
                }
            }
        }
    }
}

fn check_block_index<G: BlockGrid>(src: &G, shape: BlockShape, bx: usize, by: usize) -> Result<()> {
    let nx = src.blocks_x(shape);
    let ny = src.blocks_y(shape);
    if bx >= nx || by >= ny {
        return Err(Error::BlockIndex { bx, by, nx, ny });
    }
    Ok(())
}

/// Vectorizes block `(bx, by)` of `src` in the pixel-major-then-band layout.
pub fn vectorize_block<G: BlockGrid>(
    src: &G,
    shape: BlockShape,
    bx: usize,
    by: usize,
) -> Result<BlockVector> {
    check_block_index(src, shape, bx, by)?;
    let mut data = vec![0.0; src.per_block_len(shape)];
    src.write_block(shape, bx, by, &mut data);
    Ok(BlockVector::from_vec(data))
}

/// Concatenates the 3x3 block neighborhood around `(bx, by)` in row-major
/// scan order; the center block lands in slot 4. Off-image neighbors are
/// replicated from the nearest valid block.
pub fn gather_neighborhood<G: BlockGrid>(
    src: &G,
    shape: BlockShape,
    bx: usize,
    by: usize,
) -> Result<BlockVector> {
    check_block_index(src, shape, bx, by)?;
    let nx = src.blocks_x(shape);
    let ny = src.blocks_y(shape);
    let len = src.per_block_len(shape);
    let mut data = vec![0.0; 9 * len];
    let mut slot = 0;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let nbx = (bx as i64 + dx).clamp(0, nx as i64 - 1) as usize;
            let nby = (by as i64 + dy).clamp(0, ny as i64 - 1) as usize;
            src.write_block(shape, nbx, nby, &mut data[slot * len..(slot + 1) * len]);
            slot += 1;
        }
    }
    Ok(BlockVector::from_vec(data))
}

/// Writes a vectorized block back into the cube at `(bx, by)`.
pub fn devectorize_block(
    cube: &mut SpectralCube,
    shape: BlockShape,
    bx: usize,
    by: usize,
    data: &[f64],
) -> Result<()> {
    check_block_index(cube, shape, bx, by)?;
    let bands = cube.bands();
    if data.len() != shape.pixels() * bands {
        return Err(Error::ShapeMismatch(format!(
            "block vector of length {}, expected {}",
            data.len(),
            shape.pixels() * bands
        )));
    }
    let x0 = bx * shape.w;
    let y0 = by * shape.h;
    let mut i = 0;
    for py in 0..shape.h {
        for px in 0..shape.w {
            for band in 0..bands {
                cube.set_value(x0 + px, y0 + py, band, data[i]);
                i += 1;
            }
        }
    }
    Ok(())
}

/// Grows a cube to the smallest block-aligned dimensions by replicating the
/// nearest edge pixel.
pub fn pad_to_blocks(cube: &SpectralCube, shape: BlockShape) -> SpectralCube {
    let new_w = cube.width().div_ceil(shape.w) * shape.w;
    let new_h = cube.height().div_ceil(shape.h) * shape.h;
    if new_w == cube.width() && new_h == cube.height() {
        return cube.clone();
    }
    let bands = cube.bands();
    let mut values = Vec::with_capacity(new_w * new_h * bands);
    for band in 0..bands {
        for y in 0..new_h {
            let sy = y.min(cube.height() - 1);
            for x in 0..new_w {
                let sx = x.min(cube.width() - 1);
                values.push(cube.value(sx, sy, band));
            }
        }
    }
    SpectralCube::from_raw(new_w, new_h, cube.wavelengths().to_vec(), values)
        .expect("padded cube is well-formed")
}

/// One tile of a multispectral filter array: a spectral sensitivity row in
/// [0, 1]^L for each of the N pixels of the tile, in row-major raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct MsfaBlock {
    block_w: usize,
    block_h: usize,
    wavelengths: Vec<f64>,
    /// Row-major N x L.
    sensitivities: Vec<f64>,
}

impl MsfaBlock {
    pub fn new(
        block_w: usize,
        block_h: usize,
        wavelengths: Vec<f64>,
        sensitivities: Vec<f64>,
    ) -> Result<Self> {
        if block_w == 0 || block_h == 0 {
            return Err(Error::InvalidDimensions(format!(
                "block {block_w}x{block_h}"
            )));
        }
        check_wavelengths(&wavelengths)?;
        let n = block_w * block_h;
        let l = wavelengths.len();
        if sensitivities.len() != n * l {
            return Err(Error::InvalidDimensions(format!(
                "expected {} sensitivity entries, found {}",
                n * l,
                sensitivities.len()
            )));
        }
        if let Some(v) = sensitivities
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidValue(format!(
                "sensitivity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            block_w,
            block_h,
            wavelengths,
            sensitivities,
        })
    }

    /// Constructor without the [0, 1] box check, for evaluating candidate
    /// sensitivities slightly outside the feasible set (finite-difference
    /// probes). Shape and finiteness are still enforced.
    pub fn new_unchecked(
        block_w: usize,
        block_h: usize,
        wavelengths: Vec<f64>,
        sensitivities: Vec<f64>,
    ) -> Self {
        assert!(block_w > 0 && block_h > 0);
        assert_eq!(sensitivities.len(), block_w * block_h * wavelengths.len());
        assert!(sensitivities.iter().all(|v| v.is_finite()));
        Self {
            block_w,
            block_h,
            wavelengths,
            sensitivities,
        }
    }

    pub fn block_w(&self) -> usize {
        self.block_w
    }

    pub fn block_h(&self) -> usize {
        self.block_h
    }

    pub fn shape(&self) -> BlockShape {
        BlockShape::new(self.block_w, self.block_h)
    }

    /// Number of filters (pixels per tile).
    pub fn filters(&self) -> usize {
        self.block_w * self.block_h
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    /// Sensitivity row of the n-th pixel (raster order).
    pub fn row(&self, n: usize) -> &[f64] {
        let l = self.bands();
        &self.sensitivities[n * l..(n + 1) * l]
    }

    pub fn sensitivities(&self) -> &[f64] {
        &self.sensitivities
    }

    /// Stable content hash; ties mosaics and demosaic matrices to the filter
    /// array that produced them.
    pub fn content_id(&self) -> String {
        let mut h = Fnv1a::new();
        h.write_u64(self.block_w as u64);
        h.write_u64(self.block_h as u64);
        h.write_u64(self.bands() as u64);
        for w in &self.wavelengths {
            h.write_u64(w.to_bits());
        }
        for s in &self.sensitivities {
            h.write_u64(s.to_bits());
        }
        format!("{:016x}", h.finish())
    }
}

/// Single-channel image produced by tiling an MSFA over a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
    msfa_id: String,
}

impl MosaicImage {
    pub fn from_parts(
        width: usize,
        height: usize,
        values: Vec<f64>,
        msfa_id: String,
    ) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "mosaic {width}x{height} with {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePayload(i));
        }
        Ok(Self {
            width,
            height,
            values,
            msfa_id,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn msfa_id(&self) -> &str {
        &self.msfa_id
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

impl BlockGrid for MosaicImage {
    fn grid_width(&self) -> usize {
        self.width
    }

    fn grid_height(&self) -> usize {
        self.height
    }

    fn per_block_len(&self, shape: BlockShape) -> usize {
        shape.pixels()
    }

    fn write_block(&self, shape: BlockShape, bx: usize, by: usize, out: &mut [f64]) {
        let x0 = bx * shape.w;
        let y0 = by * shape.h;
        let mut i = 0;
        for py in 0..shape.h {
            for px in 0..shape.w {
                out[i] = self.value(x0 + px, y0 + py);
                i += 1;
            }
        }
    }
}

/// FNV-1a, 64-bit. Content ids only need to be stable and cheap.
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub(crate) fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x1_0000_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}
