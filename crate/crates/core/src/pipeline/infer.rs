use std::fs;
use std::path::{Path, PathBuf};

use super::RunConfig;
use crate::data::records::mask_with_warmup;
use crate::data::{make_batch, UtteranceFeatures};
use crate::dsp::{apply_mask, istft, Waveform};
use crate::error::{Error, Result};
use crate::maskcore::SoftMask;
use crate::models::MaskModel;
use crate::nn::{load_checkpoint, save_checkpoint, Tensor};
use crate::rng::Rng;

/// Frames per forward pass at inference time.
const CHUNK: usize = 256;

/// The configuration that travels next to a checkpoint file.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

pub fn save_model(path: impl AsRef<Path>, model: &MaskModel, run: &RunConfig) -> Result<()> {
    let path = path.as_ref();
    let mut run = run.clone();
    run.model = model.config().clone();
    save_checkpoint(path, model.params())?;
    run.save(sidecar_path(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(RunConfig, MaskModel)> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let mut run = RunConfig::default();
    run.apply_kv(&text)?;
    run.validate()?;
    let params = load_checkpoint(path)?;
    let model =
        MaskModel::from_parts(run.model.clone(), params).map_err(|e| Error::BadCheckpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    Ok((run, model))
}

/// Soft mask over every frame; frames without a full context pass through
/// with ones.
pub fn predict_mask(model: &MaskModel, feats: &UtteranceFeatures) -> Result<SoftMask> {
    let cfg = model.config();
    if feats.depth != cfg.context_depth || feats.bins() != cfg.audio_bins {
        return Err(Error::shape(format!(
            "features have depth {} and {} bins, model expects {} and {}",
            feats.depth,
            feats.bins(),
            cfg.context_depth,
            cfg.audio_bins
        )));
    }
    let frames: Vec<usize> = feats.record_frames().collect();
    let utts = std::slice::from_ref(feats);
    let mut rows = Vec::with_capacity(frames.len() * feats.bins());
    let mut rng = Rng::new(0);
    for chunk in frames.chunks(CHUNK) {
        let items: Vec<(usize, usize)> = chunk.iter().map(|&k| (0, k)).collect();
        let batch = make_batch(utts, &items, cfg.variant.uses_video(), false)?;
        let audio = cfg.variant.uses_audio().then_some(&batch.audio);
        let out = model.forward(audio, batch.video.as_ref(), false, &mut rng)?;
        rows.extend_from_slice(out.data());
    }
    let rows = Tensor::from_vec(&[frames.len(), feats.bins()], rows)?;
    let mask = mask_with_warmup(&rows, feats.depth, feats.frames())?;
    SoftMask::new(mask)
}

pub fn enhance(feats: &UtteranceFeatures, mask: &SoftMask) -> Result<Waveform> {
    istft(&apply_mask(&feats.mixture, mask)?)
}
