//! Mixing speech and noise at a requested SNR.

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTriple {
    pub clean: Waveform,
    pub noise_scaled: Waveform,
    pub mixture: Waveform,
    pub snr_db: f64,
    /// Some mixture sample exceeds unit magnitude.
    pub clipped: bool,
}

impl MixtureTriple {
    /// Builds a triple from parallel parts, summing them into the mixture.
    pub fn from_parts(clean: Waveform, noise_scaled: Waveform, snr_db: f64) -> Result<Self> {
        if clean.sample_rate() != noise_scaled.sample_rate() {
            return Err(Error::Config(format!(
                "sample rates differ: clean {} Hz, noise {} Hz",
                clean.sample_rate(),
                noise_scaled.sample_rate()
            )));
        }
        if clean.len() != noise_scaled.len() {
            return Err(Error::shape(format!(
                "clean has {} samples, noise {}",
                clean.len(),
                noise_scaled.len()
            )));
        }
        let samples: Vec<f64> = clean
            .samples()
            .iter()
            .zip(noise_scaled.samples())
            .map(|(c, n)| c + n)
            .collect();
        let clipped = samples.iter().any(|s| s.abs() > 1.0);
        let mixture = Waveform::new(samples, clean.sample_rate())?;
        Ok(MixtureTriple {
            clean,
            noise_scaled,
            mixture,
            snr_db,
            clipped,
        })
    }

    /// `10 log10(P_clean / P_noise)` as realized.
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * (self.clean.power() / self.noise_scaled.power()).log10()
    }
}

/// Gain that brings noise of power `p_noise` to `snr_db` below speech of power `p_clean`.
pub fn snr_gain(p_clean: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Crops `noise` at a random offset to the length of `clean`, scales it to
/// the requested SNR over the whole utterance, and adds it. The mixture is
/// not renormalized.
pub fn mix_at_snr(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    rng: &mut Rng,
) -> Result<MixtureTriple> {
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr must be finite, got {snr_db}")));
    }
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::Config(format!(
            "sample rates differ: clean {} Hz, noise {} Hz",
            clean.sample_rate(),
            noise.sample_rate()
        )));
    }
    if noise.len() < clean.len() {
        return Err(Error::shape(format!(
            "noise has {} samples, clean needs {}",
            noise.len(),
            clean.len()
        )));
    }
    let p_clean = clean.power();
    if p_clean <= 0.0 {
        return Err(Error::DegenerateSignal(
            "clean speech has zero power".into(),
        ));
    }
    let offset = rng.below(noise.len() - clean.len() + 1);
    let crop = &noise.samples()[offset..offset + clean.len()];
    let p_noise = crop.iter().map(|s| s * s).sum::<f64>() / crop.len() as f64;
    if p_noise <= 0.0 {
        return Err(Error::DegenerateSignal(
            "noise segment has zero power".into(),
        ));
    }
    let g = snr_gain(p_clean, p_noise, snr_db);
    let scaled = Waveform::new(crop.iter().map(|s| g * s).collect(), clean.sample_rate())?;
    MixtureTriple::from_parts(clean.clone(), scaled, snr_db)
}
