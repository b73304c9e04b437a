//! Ideal binary mask, local SNR and mask thresholding.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Zip};

use crate::dsp::PowerSpectrum;
use crate::error::{Error, Result};

/// Additive guard on both sides of the local SNR ratio.
pub const SNR_EPS: f64 = 1e-12;

const MASK_MAGIC: &[u8; 4] = b"TFMK";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskCriterion {
    pub lc_db: f64,
}

impl MaskCriterion {
    pub fn new(lc_db: f64) -> Result<Self> {
        if !lc_db.is_finite() {
            return Err(Error::Config(format!(
                "local criterion must be finite, got {lc_db}"
            )));
        }
        Ok(MaskCriterion { lc_db })
    }
}

impl Default for MaskCriterion {
    fn default() -> Self {
        MaskCriterion { lc_db: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask(Array2<bool>);

impl BinaryMask {
    pub fn new(data: Array2<bool>) -> Self {
        BinaryMask(data)
    }

    pub fn data(&self) -> &Array2<bool> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask(self.0.mapv(|b| !b))
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn to_soft(&self) -> SoftMask {
        SoftMask(self.0.mapv(|b| if b { 1.0 } else { 0.0 }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask(Array2<f64>);

impl SoftMask {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("soft mask entries must lie in [0, 1]".into()));
        }
        Ok(SoftMask(data))
    }

    pub fn ones(frames: usize, bins: usize) -> Self {
        SoftMask(Array2::ones((frames, bins)))
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn data_mut(&mut self) -> ndarray::ArrayViewMut2<'_, f64> {
        self.0.view_mut()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

fn check_same(a: &PowerSpectrum, b: &PowerSpectrum) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "speech {:?} vs noise {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Per-unit `10 log10((S + eps) / (N + eps))`.
pub fn local_snr_db(speech: &PowerSpectrum, noise: &PowerSpectrum) -> Result<Array2<f64>> {
    check_same(speech, noise)?;
    Ok(Zip::from(speech.data())
        .and(noise.data())
        .map_collect(|&s, &n| 10.0 * ((s + SNR_EPS) / (n + SNR_EPS)).log10()))
}

/// 1 where the local SNR strictly exceeds the criterion.
pub fn ideal_binary_mask(
    speech: &PowerSpectrum,
    noise: &PowerSpectrum,
    c: &MaskCriterion,
) -> Result<BinaryMask> {
    check_same(speech, noise)?;
    // Compared in the linear domain so no log rounding sits on the boundary.
    let gain = 10f64.powf(c.lc_db / 10.0);
    Ok(BinaryMask(
        Zip::from(speech.data())
            .and(noise.data())
            .map_collect(|&s, &n| s + SNR_EPS > (n + SNR_EPS) * gain),
    ))
}

pub fn threshold_mask(m: &SoftMask, theta: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::BadThreshold(theta));
    }
    Ok(BinaryMask(m.0.mapv(|v| v > theta)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskDump {
    Binary(BinaryMask),
    Soft(SoftMask),
}

/// Writes `TFMK | u32 T | u32 F | u8 kind | T*F f32`, little-endian, row-major.
pub fn save_mask(path: impl AsRef<Path>, mask: &MaskDump) -> Result<()> {
    let path = path.as_ref();
    let (kind, values): (u8, Array2<f32>) = match mask {
        MaskDump::Binary(m) => (0, m.0.mapv(|b| if b { 1.0 } else { 0.0 })),
        MaskDump::Soft(m) => (1, m.0.mapv(|v| v as f32)),
    };
    let (t, f) = values.dim();
    let mut buf = Vec::with_capacity(13 + 4 * t * f);
    buf.extend_from_slice(MASK_MAGIC);
    buf.extend_from_slice(&(t as u32).to_le_bytes());
    buf.extend_from_slice(&(f as u32).to_le_bytes());
    buf.push(kind);
    for v in values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskDump> {
    let path = path.as_ref();
    let bad = |reason: String| Error::BadMaskFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 13 || &bytes[..4] != MASK_MAGIC {
        return Err(bad("missing TFMK header".into()));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let kind = bytes[12];
    let payload = &bytes[13..];
    if payload.len() != 4 * t * f {
        return Err(bad(format!(
            "header says {t}x{f} but payload holds {} bytes",
            payload.len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array2::from_shape_vec((t, f), values).expect("payload length checked");
    match kind {
        0 => {
            if data.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(bad("binary mask holds values other than 0/1".into()));
            }
            Ok(MaskDump::Binary(BinaryMask(data.mapv(|v| v == 1.0))))
        }
        1 => SoftMask::new(data.mapv(f64::from))
            .map(MaskDump::Soft)
            .map_err(|e| bad(e.to_string())),
        k => Err(bad(format!("unknown mask kind {k}"))),
    }
}
