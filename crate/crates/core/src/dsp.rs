//! Short-time spectral analysis and synthesis.
//!
//! Frames are taken without padding (a trailing partial frame is dropped),
//! windowed, zero-padded to `fft_size` and transformed; only the
//! `fft_size / 2 + 1` non-redundant bins are kept. Resynthesis inverts each
//! frame, applies the analysis window again and normalizes the overlap-add
//! by the summed squared window, which reconstructs exactly for any hop at
//! which the squared-window envelope is non-zero.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::maskcore::SoftMask;

/// Envelope entries below this are left undivided in `istft`.
pub const ENVELOPE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Waveform::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
    Hann,
    Rect,
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::Hamming => "hamming",
            WindowKind::Hann => "hann",
            WindowKind::Rect => "rect",
        })
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(WindowKind::Hamming),
            "hann" => Ok(WindowKind::Hann),
            "rect" => Ok(WindowKind::Rect),
            other => Err(Error::Config(format!("unknown window `{other}`"))),
        }
    }
}

/// Symmetric window of length `n`.
pub fn window_coeffs(kind: WindowKind, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyWindow);
    }
    if n == 1 || kind == WindowKind::Rect {
        return Ok(vec![1.0; n]);
    }
    let denom = (n - 1) as f64;
    let (a, b) = match kind {
        WindowKind::Hamming => (0.54, 0.46),
        WindowKind::Hann => (0.5, 0.5),
        WindowKind::Rect => unreachable!(),
    };
    Ok((0..n)
        .map(|k| a - b * (2.0 * std::f64::consts::PI * k as f64 / denom).cos())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub frame_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub fft_size: usize,
}

impl FrameSpec {
    pub fn new(frame_len: usize, hop: usize, window: WindowKind, fft_size: usize) -> Result<Self> {
        let spec = FrameSpec {
            frame_len,
            hop,
            window,
            fft_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 1200-sample frames, 300-sample hop, Hamming, 1242-point FFT (622 bins).
    pub fn paper() -> Self {
        FrameSpec {
            frame_len: 1200,
            hop: 300,
            window: WindowKind::Hamming,
            fft_size: 1242,
        }
    }

    /// 64-sample frames, 16-sample hop, Hamming, 64-point FFT (33 bins).
    pub fn desk() -> Self {
        FrameSpec {
            frame_len: 64,
            hop: 16,
            window: WindowKind::Hamming,
            fft_size: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_len || self.frame_len > self.fft_size {
            return Err(Error::Config(format!(
                "frame spec requires 0 < hop <= frame_len <= fft_size, got hop={} frame_len={} fft_size={}",
                self.hop, self.frame_len, self.fft_size
            )));
        }
        if !self.fft_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "fft_size must be even, got {}",
                self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of whole frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    /// Samples covered by `frames` frames.
    pub fn output_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }

    /// Frames per second at `sample_rate`.
    pub fn frame_rate(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.hop as f64
    }
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec::paper()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Array2<Complex64>,
    spec: FrameSpec,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(data: Array2<Complex64>, spec: FrameSpec, sample_rate: u32) -> Result<Self> {
        if data.ncols() != spec.bin_count() {
            return Err(Error::shape(format!(
                "spectrogram has {} bins, frame spec implies {}",
                data.ncols(),
                spec.bin_count()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram"));
        }
        Ok(Spectrogram {
            data,
            spec,
            sample_rate,
        })
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bins(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    data: Array2<f64>,
    spec: FrameSpec,
}

impl PowerSpectrum {
    pub fn new(data: Array2<f64>, spec: FrameSpec) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite(
                "power spectrum (entries must be finite and >= 0)",
            ));
        }
        Ok(PowerSpectrum { data, spec })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// Splits a signal into overlapping frames, one per row.
pub fn frame_signal(w: &Waveform, spec: &FrameSpec) -> Result<Array2<f64>> {
    let len = w.len();
    if len < spec.frame_len {
        return Err(Error::InputTooShort {
            len,
            needed: spec.frame_len,
        });
    }
    let frames = spec.frame_count(len);
    let s = w.samples();
    Ok(Array2::from_shape_fn((frames, spec.frame_len), |(t, k)| {
        s[t * spec.hop + k]
    }))
}

pub fn stft(w: &Waveform, spec: &FrameSpec) -> Result<Spectrogram> {
    spec.validate()?;
    let frames = frame_signal(w, spec)?;
    let window = window_coeffs(spec.window, spec.frame_len)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(spec.fft_size);
    let bins = spec.bin_count();

    let mut out = Array2::<Complex64>::zeros((frames.nrows(), bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); spec.fft_size];
    for (frame, mut row) in frames.outer_iter().zip(out.outer_iter_mut()) {
        buf.fill(Complex64::new(0.0, 0.0));
        for ((b, x), wk) in buf.iter_mut().zip(frame.iter()).zip(&window) {
            b.re = x * wk;
        }
        fft.process(&mut buf);
        for (o, b) in row.iter_mut().zip(&buf[..bins]) {
            *o = *b;
        }
    }
    Spectrogram::new(out, *spec, w.sample_rate())
}

pub fn power_spectrum(s: &Spectrogram) -> PowerSpectrum {
    PowerSpectrum {
        data: s.data.mapv(|z| z.norm_sqr()),
        spec: s.spec,
    }
}

/// Scales every T-F unit by the mask, keeping the noisy phase.
pub fn apply_mask(s: &Spectrogram, m: &SoftMask) -> Result<Spectrogram> {
    if s.data.dim() != m.data().dim() {
        return Err(Error::shape(format!(
            "mask {:?} vs spectrogram {:?}",
            m.data().dim(),
            s.data.dim()
        )));
    }
    let mut data = s.data.clone();
    Zip::from(&mut data).and(m.data()).for_each(|z, &g| *z *= g);
    Ok(Spectrogram {
        data,
        spec: s.spec,
        sample_rate: s.sample_rate,
    })
}

pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    let spec = s.spec;
    spec.validate()?;
    let n = spec.fft_size;
    let bins = spec.bin_count();
    let window = window_coeffs(spec.window, spec.frame_len)?;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);

    let len = spec.output_len(s.frames());
    let mut out = vec![0.0; len];
    let mut envelope = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;

    for (t, row) in s.data.outer_iter().enumerate() {
        for (k, z) in row.iter().enumerate() {
            buf[k] = *z;
        }
        // Hermitian completion; DC and Nyquist are real for a real frame.
        buf[0].im = 0.0;
        buf[bins - 1].im = 0.0;
        for k in bins..n {
            buf[k] = buf[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * spec.hop;
        for (k, wk) in window.iter().enumerate() {
            out[start + k] += buf[k].re * scale * wk;
            envelope[start + k] += wk * wk;
        }
    }
    for (o, e) in out.iter_mut().zip(&envelope) {
        if *e >= ENVELOPE_FLOOR {
            *o /= e;
        }
    }
    Waveform::new(out, s.sample_rate)
}

/// Summed squared analysis window over a signal of `frames` frames.
pub fn window_envelope(spec: &FrameSpec, frames: usize) -> Result<Vec<f64>> {
    let window = window_coeffs(spec.window, spec.frame_len)?;
    let mut env = vec![0.0; spec.output_len(frames)];
    for t in 0..frames {
        for (k, wk) in window.iter().enumerate() {
            env[t * spec.hop + k] += wk * wk;
        }
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_wave(rng: &mut Rng, len: usize, sr: u32) -> Waveform {
        Waveform::new((0..len).map(|_| rng.range(-1.0, 1.0)).collect(), sr).unwrap()
    }

    fn spec(frame_len: usize, hop: usize, window: WindowKind, fft: usize) -> FrameSpec {
        FrameSpec::new(frame_len, hop, window, fft).unwrap()
    }

    #[test]
    fn framing_tiles_exactly() {
        let w = Waveform::new((0..12).map(|i| i as f64).collect(), 8000).unwrap();
        let f = frame_signal(&w, &spec(4, 4, WindowKind::Rect, 4)).unwrap();
        assert_eq!(f.nrows(), 3);
        assert_eq!(f.row(0).to_vec(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.row(2).to_vec(), vec![8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn one_second_at_paper_hop_gives_fifty_frames() {
        let w = Waveform::silence(16000, 16000).unwrap();
        let f = frame_signal(&w, &FrameSpec::paper()).unwrap();
        assert_eq!(f.dim(), (50, 1200));
    }

    #[test]
    fn short_signal_is_rejected() {
        let w = Waveform::silence(5, 8000).unwrap();
        let err = frame_signal(&w, &spec(8, 2, WindowKind::Rect, 8)).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { len: 5, needed: 8 }));
    }

    #[test]
    fn window_values() {
        let h = window_coeffs(WindowKind::Hamming, 3).unwrap();
        assert_close!(h[0], 0.08, 1e-15);
        assert_close!(h[1], 1.0, 1e-15);
        assert_close!(h[2], 0.08, 1e-15);
        assert_eq!(window_coeffs(WindowKind::Rect, 4).unwrap(), vec![1.0; 4]);
        let hann = window_coeffs(WindowKind::Hann, 5).unwrap();
        for (a, b) in hann.iter().zip([0.0, 0.5, 1.0, 0.5, 0.0]) {
            assert_close!(*a, b, 1e-15);
        }
        assert!(matches!(
            window_coeffs(WindowKind::Hann, 0),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn frame_spec_validation() {
        assert!(FrameSpec::new(8, 0, WindowKind::Hann, 8).is_err());
        assert!(FrameSpec::new(8, 9, WindowKind::Hann, 16).is_err());
        assert!(FrameSpec::new(16, 4, WindowKind::Hann, 8).is_err());
        assert!(FrameSpec::new(8, 4, WindowKind::Hann, 9).is_err());
        assert_eq!(FrameSpec::paper().bin_count(), 622);
        assert_eq!(FrameSpec::desk().bin_count(), 33);
    }

    #[test]
    fn dc_only_spectrum() {
        let w = Waveform::new(vec![1.0; 8], 8000).unwrap();
        let s = stft(&w, &spec(8, 8, WindowKind::Rect, 8)).unwrap();
        assert_eq!(s.frames(), 1);
        assert_close!(s.data()[[0, 0]].re, 8.0, 1e-12);
        assert_close!(s.data()[[0, 0]].im, 0.0, 1e-12);
        for k in 1..5 {
            assert_close!(s.data()[[0, k]].norm(), 0.0, 1e-12);
        }
    }

    #[test]
    fn cosine_lands_in_its_bin() {
        // cos(2*pi*2k/8) has DFT value N/2 = 4 at bin 2.
        let x: Vec<f64> = (0..8)
            .map(|k| (2.0 * std::f64::consts::PI * 2.0 * k as f64 / 8.0).cos())
            .collect();
        let s = stft(
            &Waveform::new(x, 8000).unwrap(),
            &spec(8, 8, WindowKind::Rect, 8),
        )
        .unwrap();
        for k in 0..5 {
            let expect = if k == 2 { 4.0 } else { 0.0 };
            assert_close!(s.data()[[0, k]].norm(), expect, 1e-12);
        }
    }

    #[test]
    fn silence_gives_zero_spectrum() {
        let s = stft(&Waveform::silence(64, 8000).unwrap(), &FrameSpec::desk()).unwrap();
        assert!(s.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn power_matches_elementwise_loop() {
        let mut rng = Rng::new(3);
        let data = Array2::from_shape_fn((7, 5), |_| {
            Complex64::new(rng.range(-3.0, 3.0), rng.range(-3.0, 3.0))
        });
        let s = Spectrogram::new(data.clone(), spec(8, 4, WindowKind::Hann, 8), 8000).unwrap();
        let p = power_spectrum(&s);
        for t in 0..7 {
            for f in 0..5 {
                let z = data[[t, f]];
                assert_eq!(p.data()[[t, f]], z.re * z.re + z.im * z.im);
            }
        }
        let one = Array2::from_elem((1, 5), Complex64::new(3.0, 4.0));
        let p =
            power_spectrum(&Spectrogram::new(one, spec(8, 4, WindowKind::Hann, 8), 8000).unwrap());
        assert_close!(p.data()[[0, 0]], 25.0, 1e-12);
    }

    #[test]
    fn mask_application() {
        let data = Array2::from_elem((2, 5), Complex64::new(2.0, 2.0));
        let s = Spectrogram::new(data, spec(8, 4, WindowKind::Hann, 8), 8000).unwrap();
        let ones = SoftMask::new(Array2::ones((2, 5))).unwrap();
        assert_eq!(apply_mask(&s, &ones).unwrap(), s);
        let zeros = SoftMask::new(Array2::zeros((2, 5))).unwrap();
        assert!(apply_mask(&s, &zeros)
            .unwrap()
            .data()
            .iter()
            .all(|z| z.norm() == 0.0));
        let half = SoftMask::new(Array2::from_elem((2, 5), 0.5)).unwrap();
        assert_eq!(
            apply_mask(&s, &half).unwrap().data()[[1, 3]],
            Complex64::new(1.0, 1.0)
        );
        let wrong = SoftMask::new(Array2::ones((3, 5))).unwrap();
        assert!(matches!(apply_mask(&s, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn single_rect_frame_inverts_exactly() {
        let mut rng = Rng::new(11);
        let w = random_wave(&mut rng, 16, 8000);
        let sp = spec(16, 16, WindowKind::Rect, 16);
        let y = istft(&stft(&w, &sp).unwrap()).unwrap();
        assert_eq!(y.len(), 16);
        for (a, b) in y.samples().iter().zip(w.samples()) {
            assert_close!(*a, *b, 1e-14);
        }
    }

    #[test]
    fn round_trip_interior_is_exact() {
        let mut rng = Rng::new(5);
        for window in [WindowKind::Hann, WindowKind::Hamming] {
            let sp = spec(64, 16, window, 64);
            let w = random_wave(&mut rng, 1000, 8000);
            let y = istft(&stft(&w, &sp).unwrap()).unwrap();
            assert_eq!(y.len(), sp.output_len(sp.frame_count(1000)));
            let env = window_envelope(&sp, sp.frame_count(1000)).unwrap();
            for (i, (a, b)) in y.samples().iter().zip(w.samples()).enumerate() {
                if env[i] >= 1e-3 {
                    assert_close!(*a, *b, 1e-8);
                }
            }
        }
    }

    #[test]
    fn identity_mask_round_trip() {
        let mut rng = Rng::new(6);
        let w = random_wave(&mut rng, 500, 8000);
        let s = stft(&w, &FrameSpec::desk()).unwrap();
        let ones = SoftMask::new(Array2::ones((s.frames(), s.bins()))).unwrap();
        assert_eq!(
            istft(&apply_mask(&s, &ones).unwrap()).unwrap(),
            istft(&s).unwrap()
        );
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = Rng::new(8);
        let sp = spec(48, 12, WindowKind::Hamming, 64);
        let w = random_wave(&mut rng, 400, 8000);
        let p = power_spectrum(&stft(&w, &sp).unwrap());
        let frames = frame_signal(&w, &sp).unwrap();
        let win = window_coeffs(sp.window, sp.frame_len).unwrap();
        let bins = sp.bin_count();
        for (t, frame) in frames.outer_iter().enumerate() {
            let energy: f64 = frame.iter().zip(&win).map(|(x, w)| (x * w).powi(2)).sum();
            let row = p.data().row(t);
            let mut total = row[0] + row[bins - 1];
            for f in 1..bins - 1 {
                total += 2.0 * row[f];
            }
            let parseval = total / sp.fft_size as f64;
            assert!((parseval - energy).abs() <= 1e-6 * energy);
        }
    }
}
