use std::fmt::Write as _;

use ndarray::s;

use super::{enhance, load_features, predict_mask, RunConfig};
use crate::data::{load_wav, Manifest, UtteranceFeatures};
use crate::dsp::Waveform;
use crate::error::Result;
use crate::eval::{aggregate, confusion, seg_snr, si_sdr, EvalReport, UttMetrics};
use crate::maskcore::{threshold_mask, BinaryMask, SoftMask};
use crate::models::MaskModel;

/// Soft masks are binarized at this level for the mask metrics.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub per_utt: Vec<UttMetrics>,
}

fn scored(mask: &BinaryMask, depth: usize) -> BinaryMask {
    let t = mask.dim().0;
    BinaryMask::new(mask.data().slice(s![depth.min(t).., ..]).to_owned())
}

fn waveform_metrics(est: &Waveform, clean: &Waveform) -> Result<(f64, f64)> {
    Ok((si_sdr(est, clean)?, seg_snr(est, clean)?))
}

fn metrics_for(
    feats: &UtteranceFeatures,
    clean: &Waveform,
    variant: &str,
    mask: &SoftMask,
) -> Result<UttMetrics> {
    let ibm = feats.ibm.as_ref().expect("features loaded with parts");
    let depth = feats.depth;
    let est = threshold_mask(mask, DECISION_THRESHOLD)?;
    let conf = confusion(&scored(&est, depth), &scored(ibm, depth))?;
    let (si, seg) = waveform_metrics(&enhance(feats, mask)?, clean)?;
    Ok(UttMetrics {
        utt_id: feats.utt_id.clone(),
        snr_db: feats.snr_db,
        variant: variant.to_string(),
        confusion: Some(conf),
        n_frames: feats.frames() - depth.min(feats.frames()),
        si_sdr: Some(si),
        seg_snr: Some(seg),
    })
}

/// Scores every manifest row under the IBM oracle, the unprocessed
/// mixture and each labelled model. Rows whose files cannot be read are
/// skipped with a warning and counted in the report.
pub fn evaluate(
    models: &[(String, MaskModel)],
    run: &RunConfig,
    manifest: &Manifest,
) -> Result<Evaluation> {
    let with_video = models.iter().any(|(_, m)| m.config().variant.uses_video());
    let mut per_utt = Vec::new();
    let mut skipped = 0;
    for entry in &manifest.entries {
        let loaded = load_features(entry, run, true, with_video)
            .and_then(|f| Ok((f, load_wav(&entry.clean)?, load_wav(&entry.mixture)?)));
        let (feats, clean, mixture) = match loaded {
            Ok(x) => x,
            Err(e) => {
                eprintln!(
                    "warning: skipping {} at {} dB: {e}",
                    entry.utt_id, entry.snr_db
                );
                skipped += 1;
                continue;
            }
        };
        let ibm = feats
            .ibm
            .as_ref()
            .expect("features loaded with parts")
            .to_soft();
        per_utt.push(metrics_for(&feats, &clean, "ibm", &ibm)?);
        let (si, seg) = waveform_metrics(&mixture, &clean)?;
        per_utt.push(UttMetrics {
            utt_id: feats.utt_id.clone(),
            snr_db: feats.snr_db,
            variant: "noisy".into(),
            confusion: None,
            n_frames: feats.frames() - feats.depth.min(feats.frames()),
            si_sdr: Some(si),
            seg_snr: Some(seg),
        });
        for (label, model) in models {
            let mask = predict_mask(model, &feats)?;
            per_utt.push(metrics_for(&feats, &clean, label, &mask)?);
        }
    }
    let mut report = aggregate(&per_utt);
    report.skipped = skipped;
    Ok(Evaluation { report, per_utt })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| x.to_string())
}

/// One line per (utterance, snr, system) with full-precision values.
pub fn per_utt_tsv(metrics: &[UttMetrics]) -> String {
    let mut s =
        String::from("utt_id\tsnr_db\tvariant\ttf_acc\thit\tfa\tsi_sdr\tseg_snr\tn_frames\n");
    for m in metrics {
        let (acc, hit, fa) = match &m.confusion {
            Some(c) => (Some(c.accuracy()), c.hit().ok(), c.fa().ok()),
            None => (None, None, None),
        };
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.utt_id,
            m.snr_db,
            m.variant,
            opt(acc),
            opt(hit),
            opt(fa),
            opt(m.si_sdr),
            opt(m.seg_snr),
            m.n_frames
        );
    }
    s
}
