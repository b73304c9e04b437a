//! Mask classification metrics, waveform quality metrics and the
//! per-condition report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::maskcore::BinaryMask;

/// Upper (and, symmetrically, lower) bound on reported SI-SDR.
pub const SI_SDR_CAP_DB: f64 = 100.0;
/// Reference frames below this energy are ignored by [`seg_snr`].
pub const SEG_SILENCE: f64 = 1e-10;

pub const REPORT_COLUMNS: [&str; 10] = [
    "snr_db", "variant", "tf_acc", "hit", "fa", "hit_fa", "si_sdr", "seg_snr", "n_frames", "n_utts",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn hit(&self) -> Result<f64> {
        match self.tp + self.fn_ {
            0 => Err(Error::UndefinedRate {
                rate: "hit",
                class: 1,
            }),
            pos => Ok(self.tp as f64 / pos as f64),
        }
    }

    pub fn fa(&self) -> Result<f64> {
        match self.fp + self.tn {
            0 => Err(Error::UndefinedRate {
                rate: "false alarm",
                class: 0,
            }),
            neg => Ok(self.fp as f64 / neg as f64),
        }
    }
}

pub fn confusion(est: &BinaryMask, ibm: &BinaryMask) -> Result<Confusion> {
    if est.dim() != ibm.dim() {
        return Err(Error::shape(format!(
            "estimate {:?} vs ibm {:?}",
            est.dim(),
            ibm.dim()
        )));
    }
    let mut c = Confusion::default();
    for (&e, &t) in est.data().iter().zip(ibm.data()) {
        match (e, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn tf_accuracy(est: &BinaryMask, ibm: &BinaryMask) -> Result<f64> {
    let c = confusion(est, ibm)?;
    if c.total() == 0 {
        return Err(Error::shape("empty masks"));
    }
    Ok(c.accuracy())
}

pub fn hit_fa(est: &BinaryMask, ibm: &BinaryMask) -> Result<(f64, f64)> {
    let c = confusion(est, ibm)?;
    Ok((c.hit()?, c.fa()?))
}

fn check_rates(a: &Waveform, b: &Waveform) -> Result<usize> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::Config(format!(
            "sample rates differ: {} vs {}",
            a.sample_rate(),
            b.sample_rate()
        )));
    }
    Ok(a.len().min(b.len()))
}

/// Scale-invariant SDR in dB, clamped to `±SI_SDR_CAP_DB`.
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    let n = check_rates(est, reference)?;
    let (e, r) = (&est.samples()[..n], &reference.samples()[..n]);
    let rr: f64 = r.iter().map(|x| x * x).sum();
    if rr == 0.0 {
        return Err(Error::DegenerateSignal("reference is silent".into()));
    }
    let alpha = e.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let (mut target, mut resid) = (0.0, 0.0);
    for (&a, &b) in e.iter().zip(r) {
        let t = alpha * b;
        target += t * t;
        resid += (a - t) * (a - t);
    }
    let db = 10.0 * (target / resid).log10();
    Ok(if db.is_nan() {
        -SI_SDR_CAP_DB
    } else {
        db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB)
    })
}

/// Mean per-frame SNR over non-overlapping frames of `frame_ms`; the
/// partial tail frame is dropped.
pub fn seg_snr_with(
    est: &Waveform,
    reference: &Waveform,
    frame_ms: f64,
    floor: f64,
    ceil: f64,
) -> Result<f64> {
    let n = check_rates(est, reference)?;
    let len = (frame_ms * reference.sample_rate() as f64 / 1000.0).round() as usize;
    if len == 0 {
        return Err(Error::Config(format!(
            "segment of {frame_ms} ms holds no samples"
        )));
    }
    let (e, r) = (&est.samples()[..n], &reference.samples()[..n]);
    let (mut sum, mut count) = (0.0, 0usize);
    for (fe, fr) in e.chunks_exact(len).zip(r.chunks_exact(len)) {
        let sig: f64 = fr.iter().map(|x| x * x).sum();
        if sig < SEG_SILENCE {
            continue;
        }
        let err: f64 = fe.iter().zip(fr).map(|(a, b)| (b - a) * (b - a)).sum();
        sum += (10.0 * (sig / err).log10()).clamp(floor, ceil);
        count += 1;
    }
    if count == 0 {
        return Err(Error::DegenerateSignal(
            "every reference segment is silent".into(),
        ));
    }
    Ok(sum / count as f64)
}

pub fn seg_snr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    seg_snr_with(est, reference, 32.0, -10.0, 35.0)
}

/// Metrics of one utterance under one system.
#[derive(Debug, Clone, PartialEq)]
pub struct UttMetrics {
    pub utt_id: String,
    pub snr_db: f64,
    pub variant: String,
    /// Mask confusion over the scored frames, if a mask was produced.
    pub confusion: Option<Confusion>,
    pub n_frames: usize,
    pub si_sdr: Option<f64>,
    pub seg_snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub snr_db: f64,
    pub variant: String,
    pub tf_acc: f64,
    pub hit: f64,
    pub fa: f64,
    pub hit_fa: f64,
    pub si_sdr: f64,
    pub seg_snr: f64,
    pub n_frames: usize,
    pub n_utts: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub skipped: usize,
}

#[derive(Default)]
struct Acc {
    frames: usize,
    acc: (f64, f64),
    hit: (f64, f64),
    fa: (f64, f64),
    si: (f64, f64),
    seg: (f64, f64),
    utts: usize,
}

fn add(slot: &mut (f64, f64), v: f64, w: f64) {
    slot.0 += v * w;
    slot.1 += w;
}

fn mean(slot: (f64, f64)) -> f64 {
    if slot.1 > 0.0 {
        slot.0 / slot.1
    } else {
        f64::NAN
    }
}

/// Groups by `(snr, variant)`: mask metrics are frame-weighted means over
/// utterances (utterances whose IBM lacks a class drop out of that rate),
/// waveform metrics are plain utterance means. Rows are ordered by SNR,
/// then variant name.
pub fn aggregate(metrics: &[UttMetrics]) -> EvalReport {
    let mut groups: Vec<((f64, String), Acc)> = Vec::new();
    for m in metrics {
        let key = (m.snr_db, m.variant.clone());
        let idx = match groups
            .iter()
            .position(|(k, _)| k.0 == key.0 && k.1 == key.1)
        {
            Some(i) => i,
            None => {
                groups.push((key, Acc::default()));
                groups.len() - 1
            }
        };
        let g = &mut groups[idx].1;
        g.utts += 1;
        g.frames += m.n_frames;
        let w = m.n_frames as f64;
        if let Some(c) = &m.confusion {
            add(&mut g.acc, c.accuracy(), w);
            if let Ok(h) = c.hit() {
                add(&mut g.hit, h, w);
            }
            if let Ok(f) = c.fa() {
                add(&mut g.fa, f, w);
            }
        }
        if let Some(v) = m.si_sdr {
            add(&mut g.si, v, 1.0);
        }
        if let Some(v) = m.seg_snr {
            add(&mut g.seg, v, 1.0);
        }
    }
    groups.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then_with(|| a.0 .1.cmp(&b.0 .1)));
    let rows = groups
        .into_iter()
        .map(|((snr_db, variant), g)| {
            let (hit, fa) = (mean(g.hit), mean(g.fa));
            ReportRow {
                snr_db,
                variant,
                tf_acc: mean(g.acc),
                hit,
                fa,
                hit_fa: hit - fa,
                si_sdr: mean(g.si),
                seg_snr: mean(g.seg),
                n_frames: g.frames,
                n_utts: g.utts,
            }
        })
        .collect();
    EvalReport { rows, skipped: 0 }
}

impl EvalReport {
    pub fn row(&self, snr_db: f64, variant: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.variant == variant)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = REPORT_COLUMNS.join("\t");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{}\t{}",
                r.snr_db,
                r.variant,
                r.tf_acc,
                r.hit,
                r.fa,
                r.hit_fa,
                r.si_sdr,
                r.seg_snr,
                r.n_frames,
                r.n_utts
            );
        }
        let _ = writeln!(s, "# skipped\t{}", self.skipped);
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
