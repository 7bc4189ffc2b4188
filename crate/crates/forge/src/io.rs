//! File formats for cubes, filter arrays, matrices, and RGB export.
//!
//! - `.mscube`: one JSON header line, then raw little-endian f32 samples,
//!   band-sequential (all of band 0 row-major, then band 1, ...).
//! - `.msfa`: a single JSON document describing one filter-array tile.
//! - `.mat32`: one JSON header line `{"rows","cols","dtype"}`, then raw
//!   little-endian f32 entries in row-major order.
//! - `.ppm`: binary P6, 8-bit, for rendered RGB.
//!
//! Payloads are f32 on disk. Writing rounds f64 to nearest f32; reading
//! widens exactly, so write -> read -> write reproduces files byte for byte.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cube::{MsfaBlock, SpectralCube};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct CubeHeader {
    width: usize,
    height: usize,
    bands: usize,
    wavelengths_nm: Vec<f64>,
    dtype: String,
    layout: String,
}

#[derive(Serialize, Deserialize)]
struct MsfaDoc {
    block_w: usize,
    block_h: usize,
    bands: usize,
    wavelengths_nm: Vec<f64>,
    sensitivities: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatHeader {
    rows: usize,
    cols: usize,
    dtype: String,
}

fn split_header_line(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let pos = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing newline after header".into()))?;
    Ok((&bytes[..pos], &bytes[pos + 1..]))
}

fn decode_f32_payload(payload: &[u8], expected: usize) -> Result<Vec<f64>> {
    if payload.len() != expected * 4 {
        return Err(Error::PayloadSize {
            expected: expected * 4,
            found: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(expected);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::NonFinitePayload(i));
        }
        values.push(v as f64);
    }
    Ok(values)
}

fn encode_f32_payload(values: &[f64], out: &mut Vec<u8>) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

/// Writes a cube as a `.mscube` file.
pub fn write_cube(path: &Path, cube: &SpectralCube) -> Result<()> {
    let header = CubeHeader {
        width: cube.width(),
        height: cube.height(),
        bands: cube.bands(),
        wavelengths_nm: cube.wavelengths().to_vec(),
        dtype: "f32le".into(),
        layout: "band-sequential".into(),
    };
    let mut bytes = serde_json::to_string(&header)?.into_bytes();
    bytes.push(b'\n');
    encode_f32_payload(cube.values(), &mut bytes);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a `.mscube` file. Values are widened f32, so cube range checks
/// beyond finiteness are left to the caller (mosaics stored as one-band
/// cubes may exceed 1).
pub fn read_cube(path: &Path) -> Result<SpectralCube> {
    let bytes = fs::read(path)?;
    let (head, payload) = split_header_line(&bytes)?;
    let header: CubeHeader =
        serde_json::from_slice(head).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.dtype != "f32le" {
        return Err(Error::MalformedHeader(format!("dtype {}", header.dtype)));
    }
    if header.layout != "band-sequential" {
        return Err(Error::MalformedHeader(format!("layout {}", header.layout)));
    }
    if header.wavelengths_nm.len() != header.bands {
        return Err(Error::MalformedHeader(format!(
            "bands {} but {} wavelengths",
            header.bands,
            header.wavelengths_nm.len()
        )));
    }
    let expected = header.width * header.height * header.bands;
    let values = decode_f32_payload(payload, expected)?;
    SpectralCube::from_raw(header.width, header.height, header.wavelengths_nm, values)
}

/// Writes a filter-array tile as a `.msfa` JSON document.
pub fn write_msfa(path: &Path, msfa: &MsfaBlock) -> Result<()> {
    let doc = MsfaDoc {
        block_w: msfa.block_w(),
        block_h: msfa.block_h(),
        bands: msfa.bands(),
        wavelengths_nm: msfa.wavelengths().to_vec(),
        sensitivities: msfa.sensitivities().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a `.msfa` file; sensitivity entries outside [0, 1] are rejected.
pub fn read_msfa(path: &Path) -> Result<MsfaBlock> {
    let bytes = fs::read(path)?;
    let doc: MsfaDoc =
        serde_json::from_slice(&bytes).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if doc.wavelengths_nm.len() != doc.bands {
        return Err(Error::MalformedHeader(format!(
            "bands {} but {} wavelengths",
            doc.bands,
            doc.wavelengths_nm.len()
        )));
    }
    MsfaBlock::new(
        doc.block_w,
        doc.block_h,
        doc.wavelengths_nm,
        doc.sensitivities,
    )
}

/// Writes a dense matrix as a `.mat32` file (row-major f32 payload).
pub fn write_mat32(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let header = MatHeader {
        rows: m.nrows(),
        cols: m.ncols(),
        dtype: "f32le".into(),
    };
    let mut bytes = serde_json::to_string(&header)?.into_bytes();
    bytes.push(b'\n');
    // nalgebra stores column-major; the file is row-major.
    let mut row_major = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            row_major.push(m[(r, c)]);
        }
    }
    encode_f32_payload(&row_major, &mut bytes);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a `.mat32` file into a dense matrix.
pub fn read_mat32(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    let (head, payload) = split_header_line(&bytes)?;
    let header: MatHeader =
        serde_json::from_slice(head).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.dtype != "f32le" {
        return Err(Error::MalformedHeader(format!("dtype {}", header.dtype)));
    }
    if header.rows == 0 || header.cols == 0 {
        return Err(Error::MalformedHeader(format!(
            "degenerate shape {}x{}",
            header.rows, header.cols
        )));
    }
    let values = decode_f32_payload(payload, header.rows * header.cols)?;
    Ok(DMatrix::from_row_slice(header.rows, header.cols, &values))
}

/// Writes an 8-bit binary PPM (P6). `rgb8` is row-major, three bytes per
/// pixel.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb8: &[u8]) -> Result<()> {
    if rgb8.len() != width * height * 3 {
        return Err(Error::PayloadSize {
            expected: width * height * 3,
            found: rgb8.len(),
        });
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb8);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary PPM written by [`write_ppm`]; returns (width, height,
/// rgb8). Supports only the exact header layout this crate emits.
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let mut parts = bytes.splitn(4, |b| *b == b'\n');
    let magic = parts.next().unwrap_or_default();
    if magic != b"P6" {
        return Err(Error::MalformedHeader("not a P6 ppm".into()));
    }
    let dims = parts
        .next()
        .ok_or_else(|| Error::MalformedHeader("missing ppm dimensions".into()))?;
    let dims = std::str::from_utf8(dims).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let mut it = dims.split_whitespace();
    let width: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader("bad ppm width".into()))?;
    let height: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader("bad ppm height".into()))?;
    let maxval = parts
        .next()
        .ok_or_else(|| Error::MalformedHeader("missing ppm maxval".into()))?;
    if maxval != b"255" {
        return Err(Error::MalformedHeader("ppm maxval must be 255".into()));
    }
    let payload = parts
        .next()
        .ok_or_else(|| Error::MalformedHeader("missing ppm payload".into()))?;
    if payload.len() != width * height * 3 {
        return Err(Error::PayloadSize {
            expected: width * height * 3,
            found: payload.len(),
        });
    }
    Ok((width, height, payload.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn wl(n: usize) -> Vec<f64> {
        (0..n).map(|i| 420.0 + 10.0 * i as f64).collect()
    }

    /// Values that are exact f32s, so disk round-trips preserve f64 bits.
    fn f32_exact_cube(w: usize, h: usize, bands: usize) -> SpectralCube {
        let values: Vec<f64> = (0..w * h * bands)
            .map(|i| ((i * 37 % 101) as f32 / 101.0) as f64)
            .collect();
        SpectralCube::new(w, h, wl(bands), values).unwrap()
    }

    #[test]
    fn cube_roundtrip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mscube");
        let cube = f32_exact_cube(5, 4, 3);
        write_cube(&path, &cube).unwrap();
        let back = read_cube(&path).unwrap();
        assert_eq!(back, cube);
        // second write reproduces the file byte for byte
        let path2 = dir.path().join("t2.mscube");
        write_cube(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn cube_payload_length_checked() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mscube");
        let cube = f32_exact_cube(3, 3, 2);
        write_cube(&path, &cube).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::PayloadSize { .. })));
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::PayloadSize { .. })));
    }

    #[test]
    fn cube_header_wavelength_order_checked() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mscube");
        let header = r#"{"width":1,"height":1,"bands":2,"wavelengths_nm":[500.0,450.0],"dtype":"f32le","layout":"band-sequential"}"#;
        let mut bytes = header.as_bytes().to_vec();
        bytes.push(b'\n');
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::WavelengthOrder)));
    }

    #[test]
    fn cube_malformed_header_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mscube");
        fs::write(&path, b"not json\n\0\0\0\0").unwrap();
        assert!(matches!(read_cube(&path), Err(Error::MalformedHeader(_))));
        fs::write(&path, b"no newline at all").unwrap();
        assert!(matches!(read_cube(&path), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn cube_wrong_dtype_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mscube");
        let header = r#"{"width":1,"height":1,"bands":1,"wavelengths_nm":[500.0],"dtype":"f64le","layout":"band-sequential"}"#;
        let mut bytes = header.as_bytes().to_vec();
        bytes.push(b'\n');
        bytes.extend_from_slice(&[0u8; 4]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn cube_nonfinite_payload_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mscube");
        let header = r#"{"width":2,"height":1,"bands":1,"wavelengths_nm":[500.0],"dtype":"f32le","layout":"band-sequential"}"#;
        let mut bytes = header.as_bytes().to_vec();
        bytes.push(b'\n');
        bytes.extend_from_slice(&0.5f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::NonFinitePayload(1))));
    }

    #[test]
    fn msfa_roundtrip_and_range_check() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.msfa");
        let sens: Vec<f64> = (0..12).map(|i| (i as f32 / 11.0) as f64).collect();
        let msfa = MsfaBlock::new(2, 2, wl(3), sens).unwrap();
        write_msfa(&path, &msfa).unwrap();
        let back = read_msfa(&path).unwrap();
        assert_eq!(back, msfa);

        let bad =
            r#"{"block_w":1,"block_h":1,"bands":1,"wavelengths_nm":[500.0],"sensitivities":[1.5]}"#;
        fs::write(&path, bad).unwrap();
        assert!(matches!(read_msfa(&path), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn msfa_paper_scale_roundtrip() {
        // 4x4 tile over a 31-band 420..720 nm grid
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.msfa");
        let sens: Vec<f64> = (0..16 * 31)
            .map(|i| ((i % 7) as f32 / 7.0) as f64)
            .collect();
        let msfa = MsfaBlock::new(4, 4, wl(31), sens).unwrap();
        write_msfa(&path, &msfa).unwrap();
        let back = read_msfa(&path).unwrap();
        assert_eq!(back, msfa);
        assert_eq!(back.filters(), 16);
        assert_eq!(back.bands(), 31);
        assert_eq!(back.wavelengths()[30], 720.0);
    }

    #[test]
    fn mat32_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mat32");
        let m = DMatrix::from_fn(5, 7, |r, c| ((r * 7 + c) as f32 * 0.125) as f64);
        write_mat32(&path, &m).unwrap();
        let back = read_mat32(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn mat32_shape_and_payload_checked() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.mat32");
        let header = r#"{"rows":2,"cols":2,"dtype":"f32le"}"#;
        let mut bytes = header.as_bytes().to_vec();
        bytes.push(b'\n');
        bytes.extend_from_slice(&[0u8; 12]); // 3 floats, need 4
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_mat32(&path), Err(Error::PayloadSize { .. })));
    }

    #[test]
    fn ppm_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let rgb: Vec<u8> = (0..2 * 3 * 3).map(|i| (i * 13 % 256) as u8).collect();
        write_ppm(&path, 2, 3, &rgb).unwrap();
        let (w, h, back) = read_ppm(&path).unwrap();
        assert_eq!((w, h), (2, 3));
        assert_eq!(back, rgb);
    }
}
