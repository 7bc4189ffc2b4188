//! Joint design of multispectral filter arrays and linear demosaicking.
//!
//! The crate models a single-sensor multispectral camera: a periodic filter
//! array samples one weighted band combination per pixel, and a linear
//! (Wiener) operator reconstructs the full cube from each pixel's 3x3 block
//! neighborhood. Filter sensitivities and the reconstruction operator are
//! optimized jointly against training cubes by alternating exact Wiener
//! updates with projected-gradient steps on the sensitivities.
//!
//! Modules:
//! - [`cube`]: spectral cubes, filter-array tiles, mosaics, block vectorization
//! - [`io`]: file formats for cubes, filter arrays, matrices, PPM export
//! - [`mosaic`]: measurement matrices and mosaic simulation
//! - [`stats`]: empirical and separable-Markov block autocorrelation
//! - [`wiener`]: Wiener demosaicking operators and reconstruction
//! - [`optimizer`]: alternating joint optimization of filters and demosaicker
//! - [`eval`]: PSNR, sRGB rendering, baselines, design comparison, synthesis

pub mod cube;
pub mod error;
pub mod eval;
pub mod io;
pub mod mosaic;
pub mod optimizer;
pub mod parallel;
pub mod stats;
pub mod wiener;

pub use cube::{
    gather_neighborhood, pad_to_blocks, vectorize_block, BlockMode, BlockShape, BlockVector,
    MosaicImage, MsfaBlock, SpectralCube,
};
pub use error::{Error, Result};
pub use eval::{
    bandpass_msfa, bayer_cfa, compare_designs, mean_spectrum, psnr_cube, psnr_rgb, render_srgb,
    synth_hne, DesignReport, DesignSpec, RegionMask, RgbImage,
};
pub use mosaic::{build_phi, expand_nine, mosaic_block, mosaic_image, MeasurementMatrix};
pub use optimizer::{
    init_random_msfa, objective, objective_gradient, optimize, solve_inner, OptimConfig,
    OptimOutcome, OptimTrace, TrainingSet,
};
pub use stats::{empirical_autocorr, markov_autocorr, AutocorrMatrix};
pub use wiener::{
    demosaic_block, demosaic_image, demosaic_image_1block, wiener_matrix, DemosaicMatrix,
    ExtractionMatrix,
};
