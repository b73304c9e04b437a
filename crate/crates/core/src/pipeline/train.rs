use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{load_features, save_model, RunConfig};
use crate::data::{make_batch, split, Manifest, UtteranceFeatures};
use crate::error::{Error, Result};
use crate::models::{build, MaskModel};
use crate::nn::{loss, Adam};
use crate::rng::Rng;

pub const LOG_HEADER: &str = "epoch\ttrain_loss\tval_loss\tval_tf_acc\tbest_val_loss";
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_tf_acc: f64,
    pub best_val_loss: f64,
}

impl EpochLog {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.8}\t{:.8}\t{:.6}\t{:.8}",
            self.epoch, self.train_loss, self.val_loss, self.val_tf_acc, self.best_val_loss
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: MaskModel,
    pub log: Vec<EpochLog>,
    /// The input manifest with split tags filled in.
    pub split: Manifest,
}

fn load_all(manifest: &Manifest, run: &RunConfig) -> Result<Vec<UtteranceFeatures>> {
    let video = run.model.variant.uses_video();
    manifest
        .entries
        .iter()
        .map(|e| load_features(e, run, true, video))
        .collect()
}

/// Mean loss and thresholded accuracy over every `stride`-th frame.
fn validate(model: &MaskModel, utts: &[UtteranceFeatures], stride: usize) -> Result<(f64, f64)> {
    let items: Vec<(usize, usize)> = utts
        .iter()
        .enumerate()
        .flat_map(|(u, f)| f.record_frames().step_by(stride).map(move |k| (u, k)))
        .collect();
    if items.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let cfg = model.config();
    let mut rng = Rng::new(0);
    let (mut loss_sum, mut correct, mut cells) = (0.0, 0usize, 0usize);
    for chunk in items.chunks(EVAL_CHUNK) {
        let batch = make_batch(utts, chunk, cfg.variant.uses_video(), true)?;
        let targets = batch.targets.as_ref().expect("targets requested");
        let audio = cfg.variant.uses_audio().then_some(&batch.audio);
        let out = model.forward(audio, batch.video.as_ref(), false, &mut rng)?;
        let (l, _) = loss::bce(&out, targets)?;
        loss_sum += l * chunk.len() as f64;
        for (p, t) in out.data().iter().zip(targets.data()) {
            correct += ((*p > 0.5) == (*t > 0.5)) as usize;
        }
        cells += out.len();
    }
    Ok((loss_sum / items.len() as f64, correct as f64 / cells as f64))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits `manifest` at utterance level, trains on the train part and
/// keeps the parameters with the best validation loss. With `out_dir`,
/// writes `model.ckpt` (+ `.cfg`), `train_log.tsv`, `split.tsv` and
/// `effective.cfg` there.
pub fn train(run: &RunConfig, manifest: &Manifest, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    run.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts = split(manifest, &run.split_spec()?)?;
    let tagged = Manifest::new(
        parts
            .iter()
            .flat_map(|m| m.entries.iter().cloned())
            .collect(),
    );
    let train_set = load_all(&parts[0], run)?;
    let val_set = load_all(&parts[1], run)?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        run.save(dir.join("effective.cfg"))?;
        tagged.save(dir.join("split.tsv"))?;
    }

    let root = Rng::new(run.seed);
    let mut model = build(run.model.clone(), &mut root.split(1))?;
    let adam = Adam::with_lr(run.train.lr);
    let tc = &run.train;
    let cfg = run.model.clone();
    let mut best: Option<(f64, MaskModel)> = None;
    let mut log = Vec::with_capacity(tc.epochs);
    let mut log_text = format!("{LOG_HEADER}\n");

    for epoch in 1..=tc.epochs {
        let mut rng = root.split(2).split(epoch as u64);
        let mut items = Vec::new();
        for (u, f) in train_set.iter().enumerate() {
            let range = f.record_frames();
            let phase = rng.below(tc.frame_stride);
            items.extend(
                (range.start + phase..range.end)
                    .step_by(tc.frame_stride)
                    .map(|k| (u, k)),
            );
        }
        rng.shuffle(&mut items);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for chunk in items.chunks(tc.batch_size) {
            let batch = make_batch(&train_set, chunk, cfg.variant.uses_video(), true)?;
            let audio = cfg.variant.uses_audio().then_some(&batch.audio);
            let targets = batch.targets.as_ref().expect("targets requested");
            let l = model.train_step(audio, batch.video.as_ref(), targets, &adam, &mut rng)?;
            if !l.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            loss_sum += l * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen.max(1) as f64;
        let (mut val_loss, val_tf_acc) = validate(&model, &val_set, tc.val_stride)?;
        if val_set.is_empty() {
            val_loss = train_loss;
        }
        if !val_loss.is_finite() {
            return Err(Error::NonFinite("validation loss"));
        }
        let improved = best.as_ref().is_none_or(|(b, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, model.clone()));
            if let Some(dir) = out_dir {
                save_model(dir.join("model.ckpt"), &model, run)?;
            }
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_tf_acc,
            best_val_loss: best.as_ref().map(|b| b.0).expect("set above"),
        };
        let _ = writeln!(log_text, "{}", entry.to_tsv());
        if let Some(dir) = out_dir {
            write(&dir.join("train_log.tsv"), &log_text)?;
        }
        log.push(entry);
    }
    if let (Some(dir), None) = (out_dir, &best) {
        // Zero epochs: keep the initial parameters.
        save_model(dir.join("model.ckpt"), &model, run)?;
        write(&dir.join("train_log.tsv"), &log_text)?;
    }
    Ok(TrainOutcome {
        model: best.map(|b| b.1).unwrap_or(model),
        log,
        split: tagged,
    })
}
