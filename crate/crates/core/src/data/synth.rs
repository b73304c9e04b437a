//! Synthetic audio-visual corpus for desk-scale experiments.
//!
//! Speech is two to four harmonics of a slowly drifting pitch, gated by a
//! 4-8 Hz syllable envelope, plus a little envelope-shaped breath noise.
//! Noise is high-frequency-tilted Gaussian noise plus resonant noise on a
//! second harmonic series (a pitch at least `MIN_PITCH_GAP` away, with its
//! own syllabic bursts), all under slow random amplitude modulation. The
//! video is a mouth ellipse whose vertical opening follows the speech RMS
//! in each video frame, so only the visual stream tells which harmonic
//! series belongs to the target.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use super::manifest::{Manifest, ManifestEntry};
use super::mix::mix_at_snr;
use super::video::{save_video_tensor, VideoSequence};
use super::wav::save_wav;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Target RMS of generated speech.
const SPEECH_RMS: f64 = 0.05;
/// Extra noise, in seconds, to leave room for random crops.
const NOISE_MARGIN_S: f64 = 0.5;
/// Fundamental frequency range of the target, in Hz.
const F0_RANGE: (f64, f64) = (250.0, 400.0);
/// Base-frequency range of the harmonic noise component, kept at least
/// `MIN_PITCH_GAP` Hz away from the target's fundamental.
const INTERFERER_F0: (f64, f64) = (250.0, 400.0);
const MIN_PITCH_GAP: f64 = 60.0;
const SKIN: f64 = 0.65;
const MOUTH: f64 = 0.12;
const PIXEL_NOISE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_utts: usize,
    pub utt_seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
    pub snr_grid: Vec<f64>,
    pub video_h: usize,
    pub video_w: usize,
    pub video_fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_utts: 50,
            utt_seconds: 1.0,
            sample_rate: 8000,
            seed: 0,
            snr_grid: vec![-12.0, -6.0, 0.0, 6.0],
            video_h: 16,
            video_w: 24,
            video_fps: 25.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_utts == 0 {
            return Err(Error::Config("n_utts must be at least 1".into()));
        }
        if !(self.utt_seconds.is_finite() && self.utt_seconds > 0.0) || self.sample_rate == 0 {
            return Err(Error::Config(
                "utterance length and sample rate must be positive".into(),
            ));
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config(
                "snr grid must hold at least one finite value".into(),
            ));
        }
        if self.video_h < 3
            || self.video_w < 3
            || !(self.video_fps.is_finite() && self.video_fps > 0.0)
        {
            return Err(Error::Config(
                "video must be at least 3x3 with positive fps".into(),
            ));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        (self.utt_seconds * self.sample_rate as f64).round() as usize
    }

    fn video_frames(&self) -> usize {
        (self.utt_seconds * self.video_fps - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub clean: Waveform,
    /// Unscaled noise, longer than the speech.
    pub noise: Waveform,
    pub video: VideoSequence,
    /// Mouth opening per video frame, in [0, 1].
    pub aperture: Vec<f64>,
}

/// One-pole low-pass filtered Gaussian noise.
fn lowpass_noise(rng: &mut Rng, len: usize, alpha: f64) -> Vec<f64> {
    let mut y = 0.0;
    (0..len)
        .map(|_| {
            y = alpha * y + (1.0 - alpha) * rng.normal();
            y
        })
        .collect()
}

/// Smooth random modulation in [-1, 1] from three slow sinusoids.
fn slow_wobble(rng: &mut Rng, len: usize, sr: f64, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.range(lo_hz, hi_hz),
                rng.range(0.0, 2.0 * PI),
                rng.range(0.5, 1.0),
            )
        })
        .collect();
    let norm: f64 = parts.iter().map(|p| p.2).sum();
    (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            parts
                .iter()
                .map(|(f, ph, a)| a * (2.0 * PI * f * t + ph).sin())
                .sum::<f64>()
                / norm
        })
        .collect()
}

/// Syllabic on/off envelope with raised-cosine syllables.
fn syllable_envelope(rng: &mut Rng, len: usize, sr: f64) -> Vec<f64> {
    let rate = rng.range(4.0, 8.0);
    let period = sr / rate;
    let slots = (len as f64 / period).ceil() as usize;
    let mut on: Vec<bool> = (0..slots).map(|_| rng.bernoulli(0.65)).collect();
    if !on.iter().any(|&b| b) {
        let i = rng.below(slots);
        on[i] = true;
    }
    let mut env = vec![0.0; len];
    for (s, &active) in on.iter().enumerate() {
        let duty = rng.range(0.5, 0.9);
        let amp = rng.range(0.6, 1.0);
        if !active {
            continue;
        }
        let start = s as f64 * period;
        let dur = duty * period;
        let first = start.ceil() as usize;
        let last = ((start + dur).floor() as usize).min(len.saturating_sub(1));
        for (n, e) in env.iter_mut().enumerate().take(last + 1).skip(first) {
            // Raised-cosine ramps over the outer quarters, flat in between.
            let x = (n as f64 - start) / dur;
            let edge = x.min(1.0 - x).min(0.25) / 0.25;
            *e = amp * (0.5 - 0.5 * (PI * edge).cos());
        }
    }
    env
}

/// Amplitudes of 2 to 4 harmonics, falling off as 1/k^2.
fn harmonic_amps(rng: &mut Rng) -> Vec<f64> {
    let harmonics = 2 + rng.below(3);
    (1..=harmonics)
        .map(|k| rng.range(0.5, 1.0) / (k * k) as f64)
        .collect()
}

fn speech(rng: &mut Rng, len: usize, sr: f64, f0: f64) -> Vec<f64> {
    let env = syllable_envelope(rng, len, sr);
    let amps = harmonic_amps(rng);
    let drift = slow_wobble(rng, len, sr, 0.3, 1.5);
    let breath = lowpass_noise(rng, len, 0.7);
    let mut phase = vec![0.0; amps.len()];
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let f = f0 * (1.0 + 0.06 * drift[n]);
        let mut v = 0.0;
        for (k, (ph, a)) in phase.iter_mut().zip(&amps).enumerate() {
            *ph += 2.0 * PI * f * (k + 1) as f64 / sr;
            v += a * ph.sin();
        }
        out.push(env[n] * (v + 0.15 * breath[n]));
    }
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
    out.iter().map(|x| x * SPEECH_RMS / rms).collect()
}

/// Gaussian noise through a two-pole resonator at `fc`.
fn resonance(rng: &mut Rng, len: usize, sr: f64, fc: f64) -> Vec<f64> {
    let (r, theta) = (0.995, 2.0 * PI * fc / sr);
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let (mut y1, mut y2) = (0.0, 0.0);
    (0..len)
        .map(|_| {
            let y = a1 * y1 + a2 * y2 + (1.0 - r) * rng.normal();
            (y2, y1) = (y1, y);
            y
        })
        .collect()
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn noise(rng: &mut Rng, len: usize, sr: f64, target_f0: f64) -> Vec<f64> {
    let alpha = rng.range(-0.95, -0.7);
    let broadband = lowpass_noise(rng, len, alpha);
    // Resonances on a harmonic series in the speech pitch range, switched
    // on and off at a syllabic rate.
    let base = loop {
        let b = rng.range(INTERFERER_F0.0, INTERFERER_F0.1);
        if (b - target_f0).abs() >= MIN_PITCH_GAP {
            break b;
        }
    };
    let mut band = vec![0.0; len];
    for (k, a) in harmonic_amps(rng).into_iter().enumerate() {
        let r = resonance(rng, len, sr, base * (k + 1) as f64);
        let scale = a / rms(&r).max(1e-12);
        for (b, x) in band.iter_mut().zip(r) {
            *b += scale * x;
        }
    }
    let bursts = syllable_envelope(rng, len, sr);
    for (b, e) in band.iter_mut().zip(&bursts) {
        *b *= e;
    }
    let gain = rng.range(0.2, 0.35) * rms(&broadband) / rms(&band).max(1e-12);
    let depth = rng.range(0.5, 0.9);
    let am = slow_wobble(rng, len, sr, 0.5, 4.0);
    (0..len)
        .map(|n| (broadband[n] + gain * band[n]) * (1.0 + depth * am[n]))
        .collect()
}

fn render_mouth(rng: &mut Rng, cfg: &SynthConfig, aperture: f64, out: &mut Vec<f64>) {
    let (h, w) = (cfg.video_h as f64, cfg.video_w as f64);
    let cy = (h - 1.0) / 2.0 + rng.range(-0.3, 0.3);
    let cx = (w - 1.0) / 2.0 + rng.range(-0.3, 0.3);
    let semi_x = 0.35 * w;
    let semi_y = 0.04 * h + aperture * 0.36 * h;
    for r in 0..cfg.video_h {
        for c in 0..cfg.video_w {
            let dy = (r as f64 - cy) / semi_y;
            let dx = (c as f64 - cx) / semi_x;
            let radius = (dx * dx + dy * dy).sqrt();
            // Soft edge about a fifth of the ellipse radius wide.
            let inside = 1.0 / (1.0 + ((radius - 1.0) / 0.1).exp());
            let v = SKIN - (SKIN - MOUTH) * inside + PIXEL_NOISE * rng.normal();
            out.push(v.clamp(0.0, 1.0));
        }
    }
}

/// Generates utterance `index` of the corpus defined by `cfg`.
pub fn synth_utterance(cfg: &SynthConfig, index: usize) -> Result<SynthUtterance> {
    cfg.validate()?;
    let sr = cfg.sample_rate as f64;
    let len = cfg.samples();
    let root = Rng::new(cfg.seed).split(index as u64);
    let f0 = root.split(4).range(F0_RANGE.0, F0_RANGE.1);
    let clean = speech(&mut root.split(0), len, sr, f0);
    let noise_len = len + (NOISE_MARGIN_S * sr).round() as usize;
    let noise = noise(&mut root.split(1), noise_len, sr, f0);

    let frames = cfg.video_frames();
    let rms: Vec<f64> = (0..frames)
        .map(|j| {
            let a = ((j as f64 * sr / cfg.video_fps).round() as usize).min(len);
            let b = (((j + 1) as f64 * sr / cfg.video_fps).round() as usize).min(len);
            if b > a {
                (clean[a..b].iter().map(|x| x * x).sum::<f64>() / (b - a) as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let peak = rms.iter().cloned().fold(0.0, f64::max);
    let aperture: Vec<f64> = rms
        .iter()
        .map(|r| if peak > 0.0 { r / peak } else { 0.0 })
        .collect();
    let mut pixels = Vec::with_capacity(frames * cfg.video_h * cfg.video_w);
    let mut pix_rng = root.split(2);
    for &a in &aperture {
        render_mouth(&mut pix_rng, cfg, a, &mut pixels);
    }
    Ok(SynthUtterance {
        clean: Waveform::new(clean, cfg.sample_rate)?,
        noise: Waveform::new(noise, cfg.sample_rate)?,
        video: VideoSequence::new(pixels, frames, cfg.video_h, cfg.video_w, cfg.video_fps)?,
        aperture,
    })
}

pub fn snr_dir_name(snr: f64) -> String {
    if snr >= 0.0 {
        format!("snr+{snr}")
    } else {
        format!("snr{snr}")
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes the corpus under `out_dir` and returns its manifest, which is
/// also saved as `manifest.tsv` there.
pub fn synth_toy_dataset(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    create_dir(out_dir)?;
    let mut entries = Vec::with_capacity(cfg.n_utts * cfg.snr_grid.len());
    for i in 0..cfg.n_utts {
        let utt = synth_utterance(cfg, i)?;
        let id = format!("utt{i:04}");
        let dir = out_dir.join(&id);
        create_dir(&dir)?;
        let clean_path = dir.join("clean.wav");
        let video_path = dir.join("video.lipv");
        save_wav(&clean_path, &utt.clean)?;
        save_video_tensor(&video_path, &utt.video)?;
        let mix_root = Rng::new(cfg.seed).split(index_key(i)).split(3);
        for (s, &snr) in cfg.snr_grid.iter().enumerate() {
            let mix = mix_at_snr(&utt.clean, &utt.noise, snr, &mut mix_root.split(s as u64))?;
            let sub = dir.join(snr_dir_name(snr));
            create_dir(&sub)?;
            let noise_path = sub.join("noise.wav");
            let mix_path = sub.join("mix.wav");
            save_wav(&noise_path, &mix.noise_scaled)?;
            save_wav(&mix_path, &mix.mixture)?;
            entries.push(ManifestEntry {
                utt_id: id.clone(),
                clean: clean_path.clone(),
                noise: noise_path,
                mixture: mix_path,
                video: video_path.clone(),
                snr_db: snr,
                split: "all".into(),
            });
        }
    }
    let manifest = Manifest::new(entries);
    manifest.save(out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

fn index_key(i: usize) -> u64 {
    i as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_utts: 2,
            utt_seconds: 0.5,
            snr_grid: vec![-6.0, 0.0],
            seed: 11,
            ..SynthConfig::default()
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn mouth_opening_tracks_speech_energy() {
        let cfg = SynthConfig::default();
        for i in 0..10 {
            let u = synth_utterance(&cfg, i).unwrap();
            let hop = cfg.sample_rate as f64 / cfg.video_fps;
            let mut energy = Vec::new();
            let mut dark = Vec::new();
            for j in 0..u.video.frames() {
                let a = (j as f64 * hop).round() as usize;
                let b = (((j + 1) as f64 * hop).round() as usize).min(u.clean.len());
                energy.push(u.clean.samples()[a..b].iter().map(|x| x * x).sum::<f64>());
                // Mouth area measured from the pixels themselves.
                dark.push(
                    u.video
                        .frame(j)
                        .iter()
                        .filter(|&&p| p < (SKIN + MOUTH) / 2.0)
                        .count() as f64,
                );
            }
            let r = pearson(&dark, &energy);
            assert!(r > 0.8, "utterance {i}: correlation {r}");
        }
    }

    #[test]
    fn speech_has_silences_and_target_level() {
        let u = synth_utterance(&SynthConfig::default(), 3).unwrap();
        assert!((u.clean.power().sqrt() - SPEECH_RMS).abs() < 1e-12);
        assert!(u.aperture.iter().any(|&a| a < 0.05));
        assert!(u.aperture.contains(&1.0));
        assert_eq!(u.video.frames(), 25);
        assert_eq!(u.noise.len(), 8000 + 4000);
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = small();
        let m = synth_toy_dataset(&cfg, a.path()).unwrap();
        assert_eq!(m.len(), 4);
        synth_toy_dataset(&cfg, b.path()).unwrap();
        for rel in [
            "manifest.tsv",
            "utt0001/clean.wav",
            "utt0001/video.lipv",
            "utt0001/snr-6/mix.wav",
            "utt0000/snr+0/noise.wav",
        ] {
            assert_eq!(
                fs::read(a.path().join(rel)).unwrap(),
                fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
        let loaded = Manifest::load(a.path().join("manifest.tsv")).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn grid_product_count() {
        let cfg = SynthConfig {
            n_utts: 50,
            utt_seconds: 0.1,
            video_fps: 25.0,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(synth_toy_dataset(&cfg, dir.path()).unwrap().len(), 200);
    }

    #[test]
    fn zero_utterances_rejected() {
        let cfg = SynthConfig {
            n_utts: 0,
            ..SynthConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
