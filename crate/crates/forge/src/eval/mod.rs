//! Quality metrics, color rendering, baseline filter arrays, and design
//! comparison.

mod cie;
mod synth;

pub use synth::{absorption_a, absorption_b, hne_transmittance, synth_hne};

use std::time::Instant;

use serde::{Serialize, Serializer};

use crate::cube::{BlockMode, MsfaBlock, SpectralCube};
use crate::error::{Error, Result};
use crate::mosaic::mosaic_image;
use crate::parallel;
use crate::wiener::{demosaic_image, demosaic_image_1block, DemosaicMatrix};

/// Display-referred color image; interleaved RGB with every channel in
/// [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!("{width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidDimensions(format!(
                "expected {} channel values, found {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidValue(format!("channel value {v}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// 8-bit quantization for PPM export.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|b| *b as f64 / 255.0).collect();
        Self::new(width, height, data)
    }
}

/// Pixel selection for region statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    selected: Vec<bool>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, selected: Vec<bool>) -> Result<Self> {
        if selected.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "mask of {} entries for {width}x{height}",
                selected.len()
            )));
        }
        Ok(Self {
            width,
            height,
            selected,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            selected: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_selected(&self, x: usize, y: usize) -> bool {
        self.selected[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.selected[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }
}

fn psnr_of_slices(reference: &[f64], test: &[f64], peak: f64) -> Result<f64> {
    if !peak.is_finite() || peak <= 0.0 {
        return Err(Error::ParamRange(format!("peak = {peak}")));
    }
    let sq: f64 = reference
        .iter()
        .zip(test)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    let mse = sq / reference.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (peak * peak / mse).log10())
    }
}

/// Peak signal-to-noise ratio in decibels over all pixels and bands.
/// Identical inputs give positive infinity.
pub fn psnr_cube(reference: &SpectralCube, test: &SpectralCube, peak: f64) -> Result<f64> {
    if reference.width() != test.width()
        || reference.height() != test.height()
        || reference.bands() != test.bands()
    {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            reference.width(),
            reference.height(),
            reference.bands(),
            test.width(),
            test.height(),
            test.bands()
        )));
    }
    psnr_of_slices(reference.values(), test.values(), peak)
}

/// PSNR over encoded RGB channels.
pub fn psnr_rgb(reference: &RgbImage, test: &RgbImage, peak: f64) -> Result<f64> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        )));
    }
    psnr_of_slices(reference.channels(), test.channels(), peak)
}

/// Renders a transmittance cube to display RGB: per pixel the spectrum is
/// weighted by the embedded daylight illuminant and observer curves,
/// white-balanced so a unit-transmittance spectrum encodes to pure white,
/// converted to linear sRGB, transfer-encoded, and clamped. Errors when
/// any cube wavelength falls outside the tabulated 380..780 nm range.
pub fn render_srgb(cube: &SpectralCube) -> Result<RgbImage> {
    let factors = cie::xyz_band_factors(cube.wavelengths())?;
    let mut white = [0.0; 3];
    for f in &factors {
        for c in 0..3 {
            white[c] += f[c];
        }
    }
    let white_rgb = cie::xyz_to_linear_srgb(white);
    if white_rgb.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidValue(
            "illuminant maps outside the positive RGB octant".into(),
        ));
    }
    let (w, h, bands) = (cube.width(), cube.height(), cube.bands());
    let plane = w * h;
    let values = cube.values();
    let rows = parallel::map_chunks(plane, |range| {
        let mut out = Vec::with_capacity(range.len() * 3);
        for p in range {
            let mut xyz = [0.0; 3];
            for (band, f) in factors.iter().enumerate().take(bands) {
                let t = values[band * plane + p];
                for c in 0..3 {
                    xyz[c] += t * f[c];
                }
            }
            let rgb = cie::xyz_to_linear_srgb(xyz);
            for c in 0..3 {
                let balanced = (rgb[c] / white_rgb[c]).max(0.0);
                out.push(cie::srgb_encode(balanced).clamp(0.0, 1.0));
            }
        }
        out
    });
    RgbImage::new(w, h, rows.concat())
}

/// Per-band mean over the pixels selected by `mask`.
pub fn mean_spectrum(cube: &SpectralCube, mask: &RegionMask) -> Result<Vec<f64>> {
    if mask.width() != cube.width() || mask.height() != cube.height() {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs cube {}x{}",
            mask.width(),
            mask.height(),
            cube.width(),
            cube.height()
        )));
    }
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mut spectrum = vec![0.0; cube.bands()];
    for (band, slot) in spectrum.iter_mut().enumerate() {
        let mut acc = 0.0;
        for y in 0..cube.height() {
            for x in 0..cube.width() {
                if mask.is_selected(x, y) {
                    acc += cube.value(x, y, band);
                }
            }
        }
        *slot = acc / n as f64;
    }
    Ok(spectrum)
}

fn nearest_band(wavelengths: &[f64], center: f64) -> usize {
    let mut best = 0;
    for (i, w) in wavelengths.iter().enumerate() {
        if (w - center).abs() < (wavelengths[best] - center).abs() {
            best = i;
        }
    }
    best
}

/// Non-trained 4x4 baseline: sixteen one-hot filters centered 420, 440,
/// ..., 720 nm in raster order, each sampling the band nearest its
/// center.
pub fn bandpass_msfa(wavelengths: &[f64]) -> Result<MsfaBlock> {
    let l = wavelengths.len();
    let mut sens = vec![0.0; 16 * l];
    for k in 0..16 {
        let center = 420.0 + 20.0 * k as f64;
        sens[k * l + nearest_band(wavelengths, center)] = 1.0;
    }
    MsfaBlock::new(4, 4, wavelengths.to_vec(), sens)
}

/// Non-trained 2x2 baseline modeled on a color camera: raster order
/// red, green / green, blue, each filter a unit-peak Gaussian over
/// wavelength (centers 610, 540, 465 nm, sigma 35 nm).
pub fn bayer_cfa(wavelengths: &[f64]) -> Result<MsfaBlock> {
    let l = wavelengths.len();
    let curve = |center: f64| -> Vec<f64> {
        wavelengths
            .iter()
            .map(|w| {
                let d = (w - center) / 35.0;
                (-0.5 * d * d).exp()
            })
            .collect()
    };
    let mut sens = Vec::with_capacity(4 * l);
    sens.extend(curve(610.0));
    sens.extend(curve(540.0));
    sens.extend(curve(540.0));
    sens.extend(curve(465.0));
    MsfaBlock::new(2, 2, wavelengths.to_vec(), sens)
}

/// One candidate sensing pipeline: a filter array plus the matching
/// demosaicking operator.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub id: String,
    pub msfa: MsfaBlock,
    pub demosaic: DemosaicMatrix,
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

/// One row of a design comparison. PSNR fields serialize as numbers, or
/// the string "inf" for a perfect reconstruction.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub design_id: String,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_msi_db: f64,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_rgb_db: f64,
    pub runtime_s: f64,
}

/// Runs mosaic, demosaic, and both quality metrics for each design
/// against the same reference cube. Spectral PSNR is measured on the raw
/// linear reconstruction; color PSNR on the encoded rendering of the
/// clamped reconstruction.
pub fn compare_designs(
    reference: &SpectralCube,
    designs: &[DesignSpec],
) -> Result<Vec<DesignReport>> {
    let rgb_reference = render_srgb(reference)?;
    let mut rows = Vec::with_capacity(designs.len());
    for design in designs {
        let tick = Instant::now();
        let padded = crate::cube::pad_to_blocks(reference, design.msfa.shape());
        let mosaic = mosaic_image(&design.msfa, &padded)?;
        let recon = match design.demosaic.mode() {
            BlockMode::One => demosaic_image_1block(&design.demosaic, &design.msfa, &mosaic)?,
            BlockMode::Nine => demosaic_image(&design.demosaic, &design.msfa, &mosaic)?,
        };
        let recon = recon.cropped(reference.width(), reference.height())?;
        let psnr_msi_db = psnr_cube(reference, &recon, 1.0)?;
        let rgb_test = render_srgb(&recon.clamped())?;
        let psnr_rgb_db = psnr_rgb(&rgb_reference, &rgb_test, 1.0)?;
        rows.push(DesignReport {
            design_id: design.id.clone(),
            psnr_msi_db,
            psnr_rgb_db,
            runtime_s: tick.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}
