//! End-to-end workflows behind the command-line tool: loading manifest
//! rows into features, training, mask inference, enhancement and
//! evaluation.

mod config;
mod evaluate;
mod infer;
mod train;

pub use config::{RunConfig, TrainConfig};
pub use evaluate::{evaluate, per_utt_tsv, Evaluation};
pub use infer::{enhance, load_model, predict_mask, save_model, sidecar_path};
pub use train::{train, EpochLog, TrainOutcome, LOG_HEADER};

use crate::data::{load_video_tensor, load_wav, ManifestEntry, UtteranceFeatures};
use crate::error::Result;

/// Loads one manifest row. Clean and noise are read only when `with_parts`
/// (for the IBM), the video only when `with_video`.
pub fn load_features(
    entry: &ManifestEntry,
    run: &RunConfig,
    with_parts: bool,
    with_video: bool,
) -> Result<UtteranceFeatures> {
    let mixture = load_wav(&entry.mixture)?;
    let parts = if with_parts {
        Some((load_wav(&entry.clean)?, load_wav(&entry.noise)?))
    } else {
        None
    };
    let video = if with_video {
        Some(load_video_tensor(&entry.video)?)
    } else {
        None
    };
    UtteranceFeatures::new(
        entry.utt_id.clone(),
        entry.snr_db,
        &mixture,
        parts.as_ref().map(|(c, n)| (c, n)),
        video.as_ref(),
        &run.frame,
        &run.criterion,
        run.model.context_depth,
    )
}
