//! Per-utterance features and context-window training records.
//!
//! A record for frame `k` holds mixture power-spectrum rows `k - depth ..= k`,
//! the aligned video frames at the same indices, and IBM row `k`. Records
//! are built on demand from [`UtteranceFeatures`] rather than stored, since
//! neighbouring records share all but one frame.

use std::ops::Range;

use ndarray::Array2;

use super::mix::MixtureTriple;
use super::video::{align_video, VideoSequence};
use crate::dsp::{power_spectrum, stft, FrameSpec, PowerSpectrum, Spectrogram, Waveform};
use crate::error::{Error, Result};
use crate::maskcore::{ideal_binary_mask, BinaryMask, MaskCriterion};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub utt_id: String,
    pub frame: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// `[depth + 1, F]`
    pub audio_ctx: Tensor,
    /// `[depth + 1, 1, H, W]`
    pub video_ctx: Option<Tensor>,
    /// One row of `F` cells.
    pub target: BinaryMask,
    pub meta: RecordMeta,
}

#[derive(Debug, Clone)]
pub struct UtteranceFeatures {
    pub utt_id: String,
    pub snr_db: f64,
    pub mixture: Spectrogram,
    pub mix_power: PowerSpectrum,
    /// Present when clean speech and scaled noise were supplied.
    pub ibm: Option<BinaryMask>,
    /// Aligned to the audio frame rate, at least as long as the audio.
    pub video: Option<VideoSequence>,
    pub depth: usize,
}

impl UtteranceFeatures {
    /// `parts` are the premix clean speech and scaled noise, used for the IBM.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        utt_id: impl Into<String>,
        snr_db: f64,
        mixture: &Waveform,
        parts: Option<(&Waveform, &Waveform)>,
        video: Option<&VideoSequence>,
        fspec: &FrameSpec,
        criterion: &MaskCriterion,
        depth: usize,
    ) -> Result<Self> {
        let spec = stft(mixture, fspec)?;
        let mix_power = power_spectrum(&spec);
        let ibm = match parts {
            Some((clean, noise)) => {
                if clean.len() != mixture.len() || noise.len() != mixture.len() {
                    return Err(Error::shape(format!(
                        "mixture has {} samples, clean {}, noise {}",
                        mixture.len(),
                        clean.len(),
                        noise.len()
                    )));
                }
                let s = power_spectrum(&stft(clean, fspec)?);
                let n = power_spectrum(&stft(noise, fspec)?);
                Some(ideal_binary_mask(&s, &n, criterion)?)
            }
            None => None,
        };
        let video = match video {
            Some(v) => {
                let rate = fspec.frame_rate(mixture.sample_rate());
                let aligned = if (v.fps() - rate).abs() <= 1e-9 * rate {
                    v.clone()
                } else {
                    align_video(v, rate)?
                };
                if aligned.frames() < spec.frames() {
                    return Err(Error::Alignment(format!(
                        "video covers {} frames after alignment, audio has {}",
                        aligned.frames(),
                        spec.frames()
                    )));
                }
                Some(aligned)
            }
            None => None,
        };
        Ok(UtteranceFeatures {
            utt_id: utt_id.into(),
            snr_db,
            mixture: spec,
            mix_power,
            ibm,
            video,
            depth,
        })
    }

    pub fn from_triple(
        utt_id: impl Into<String>,
        mix: &MixtureTriple,
        video: Option<&VideoSequence>,
        fspec: &FrameSpec,
        criterion: &MaskCriterion,
        depth: usize,
    ) -> Result<Self> {
        UtteranceFeatures::new(
            utt_id,
            mix.snr_db,
            &mix.mixture,
            Some((&mix.clean, &mix.noise_scaled)),
            video,
            fspec,
            criterion,
            depth,
        )
    }

    pub fn frames(&self) -> usize {
        self.mix_power.dim().0
    }

    pub fn bins(&self) -> usize {
        self.mix_power.dim().1
    }

    /// Frames that have a full context window.
    pub fn record_frames(&self) -> Range<usize> {
        self.depth.min(self.frames())..self.frames()
    }

    pub fn video_dims(&self) -> Option<(usize, usize)> {
        self.video.as_ref().map(|v| (v.height(), v.width()))
    }

    fn check_frame(&self, k: usize) {
        assert!(
            self.record_frames().contains(&k),
            "frame {k} has no full context"
        );
    }

    /// Appends mixture power rows `k - depth ..= k`.
    pub fn push_audio_ctx(&self, k: usize, out: &mut Vec<f64>) {
        self.check_frame(k);
        let p = self.mix_power.data();
        for t in k - self.depth..=k {
            out.extend(p.row(t).iter());
        }
    }

    /// Appends aligned video frames `k - depth ..= k`.
    pub fn push_video_ctx(&self, k: usize, out: &mut Vec<f64>) -> Result<()> {
        self.check_frame(k);
        let v = self
            .video
            .as_ref()
            .ok_or_else(|| Error::Modality(format!("utterance {} has no video", self.utt_id)))?;
        for t in k - self.depth..=k {
            out.extend_from_slice(v.frame(t));
        }
        Ok(())
    }

    /// Appends IBM row `k` as 0/1 values.
    pub fn push_target(&self, k: usize, out: &mut Vec<f64>) -> Result<()> {
        let ibm = self
            .ibm
            .as_ref()
            .ok_or_else(|| Error::Config(format!("utterance {} has no IBM", self.utt_id)))?;
        out.extend(ibm.data().row(k).iter().map(|&b| if b { 1.0 } else { 0.0 }));
        Ok(())
    }

    pub fn record(&self, k: usize) -> Result<SampleRecord> {
        let steps = self.depth + 1;
        let mut audio = Vec::with_capacity(steps * self.bins());
        self.push_audio_ctx(k, &mut audio);
        let video_ctx = match &self.video {
            Some(v) => {
                let mut px = Vec::with_capacity(steps * v.height() * v.width());
                self.push_video_ctx(k, &mut px)?;
                Some(Tensor::from_vec(&[steps, 1, v.height(), v.width()], px)?)
            }
            None => None,
        };
        let ibm = self
            .ibm
            .as_ref()
            .ok_or_else(|| Error::Config(format!("utterance {} has no IBM", self.utt_id)))?;
        let row = ibm
            .data()
            .row(k)
            .to_owned()
            .into_shape_with_order((1, self.bins()))
            .expect("row");
        Ok(SampleRecord {
            audio_ctx: Tensor::from_vec(&[steps, self.bins()], audio)?,
            video_ctx,
            target: BinaryMask::new(row),
            meta: RecordMeta {
                utt_id: self.utt_id.clone(),
                frame: k,
                snr_db: self.snr_db,
            },
        })
    }
}

/// One record per frame `k` in `depth..T`.
pub fn assemble_records(
    mix: &MixtureTriple,
    video: &VideoSequence,
    fspec: &FrameSpec,
    criterion: &MaskCriterion,
    depth: usize,
    utt_id: &str,
) -> Result<Vec<SampleRecord>> {
    let feats = UtteranceFeatures::from_triple(utt_id, mix, Some(video), fspec, criterion, depth)?;
    feats.record_frames().map(|k| feats.record(k)).collect()
}

/// Network inputs and targets for a list of `(utterance, frame)` items.
#[derive(Debug, Clone)]
pub struct Batch {
    pub audio: Tensor,
    pub video: Option<Tensor>,
    pub targets: Option<Tensor>,
}

pub fn make_batch(
    utts: &[UtteranceFeatures],
    items: &[(usize, usize)],
    with_video: bool,
    with_targets: bool,
) -> Result<Batch> {
    let first = utts
        .get(items.first().ok_or(Error::EmptyDataset)?.0)
        .ok_or_else(|| Error::shape("batch item refers to a missing utterance"))?;
    let (steps, bins) = (first.depth + 1, first.bins());
    let mut audio = Vec::with_capacity(items.len() * steps * bins);
    let mut video = Vec::new();
    let mut targets = Vec::with_capacity(items.len() * bins);
    let mut dims = None;
    for &(u, k) in items {
        let f = &utts[u];
        if f.depth + 1 != steps || f.bins() != bins {
            return Err(Error::shape(
                "utterances in one batch disagree on depth or bins",
            ));
        }
        f.push_audio_ctx(k, &mut audio);
        if with_video {
            let d = f.video_dims();
            if dims.is_some() && dims != d {
                return Err(Error::shape(
                    "utterances in one batch disagree on video size",
                ));
            }
            dims = d;
            f.push_video_ctx(k, &mut video)?;
        }
        if with_targets {
            f.push_target(k, &mut targets)?;
        }
    }
    let b = items.len();
    let video = match dims {
        Some((h, w)) => Some(Tensor::from_vec(&[b, steps, 1, h, w], video)?),
        None => None,
    };
    Ok(Batch {
        audio: Tensor::from_vec(&[b, steps, bins], audio)?,
        video,
        targets: if with_targets {
            Some(Tensor::from_vec(&[b, bins], targets)?)
        } else {
            None
        },
    })
}

/// Stacks mask rows `[n, F]` below `depth` rows of ones into a `T x F` mask.
pub fn mask_with_warmup(rows: &Tensor, depth: usize, frames: usize) -> Result<Array2<f64>> {
    let [n, bins] = rows.dims::<2>("mask rows")?;
    if depth.min(frames) + n != frames {
        return Err(Error::shape(format!(
            "{n} predicted rows plus {depth} warm-up rows for {frames} frames"
        )));
    }
    let mut out = Array2::ones((frames, bins));
    for (i, v) in rows.data().iter().enumerate() {
        out[[depth + i / bins, i % bins]] = *v;
    }
    Ok(out)
}
