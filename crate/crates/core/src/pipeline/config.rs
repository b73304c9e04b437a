//! Merged run configuration read from `key = value` files.

use std::fs;
use std::path::Path;

use crate::data::{SplitSpec, SynthConfig};
use crate::dsp::FrameSpec;
use crate::error::{Error, Result};
use crate::kvfile;
use crate::maskcore::MaskCriterion;
use crate::models::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Train on every `frame_stride`-th frame of each utterance, with a
    /// fresh random phase per utterance and epoch.
    pub frame_stride: usize,
    /// Validation uses every `val_stride`-th frame.
    pub val_stride: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            frame_stride: 16,
            val_stride: 8,
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frame: FrameSpec,
    pub criterion: MaskCriterion,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub n_utts: usize,
    pub utt_seconds: f64,
    pub sample_rate: u32,
    pub snr_grid: Vec<f64>,
    pub video_fps: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        RunConfig {
            frame: FrameSpec::desk(),
            criterion: MaskCriterion::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            seed: 0,
            n_utts: synth.n_utts,
            utt_seconds: synth.utt_seconds,
            sample_rate: synth.sample_rate,
            snr_grid: synth.snr_grid,
            video_fps: synth.video_fps,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    kvfile::parse_value(key, value)
}

impl RunConfig {
    /// Applies one setting; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? {
            return Ok(());
        }
        let t = &mut self.train;
        match key {
            "frame_len" => self.frame.frame_len = parse(key, value)?,
            "hop" => self.frame.hop = parse(key, value)?,
            "window" => self.frame.window = value.parse()?,
            "fft_size" => self.frame.fft_size = parse(key, value)?,
            "lc_db" => self.criterion = MaskCriterion::new(parse(key, value)?)?,
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "frame_stride" => t.frame_stride = parse(key, value)?,
            "val_stride" => t.val_stride = parse(key, value)?,
            "train_frac" => t.train_frac = parse(key, value)?,
            "val_frac" => t.val_frac = parse(key, value)?,
            "test_frac" => t.test_frac = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "utts" => self.n_utts = parse(key, value)?,
            "utt_seconds" => self.utt_seconds = parse(key, value)?,
            "sample_rate" => self.sample_rate = parse(key, value)?,
            "snr_grid" => self.snr_grid = kvfile::parse_list(key, value)?,
            "video_fps" => self.video_fps = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (k, v) in kvfile::parse(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Defaults overlaid with the file at `path`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_kv(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.model.validate()?;
        if self.model.audio_bins != self.frame.bin_count() {
            return Err(Error::Config(format!(
                "audio_bins = {} but the frame spec yields {} bins",
                self.model.audio_bins,
                self.frame.bin_count()
            )));
        }
        let t = &self.train;
        if t.batch_size == 0 || t.frame_stride == 0 || t.val_stride == 0 {
            return Err(Error::Config(
                "batch_size, frame_stride and val_stride must be >= 1".into(),
            ));
        }
        if !(t.lr.is_finite() && t.lr >= 0.0) {
            return Err(Error::Config(format!(
                "lr must be finite and >= 0, got {}",
                t.lr
            )));
        }
        self.split_spec()?;
        self.synth_config().validate()
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let t = &self.train;
        SplitSpec::new(t.train_frac, t.val_frac, t.test_frac, self.seed)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_utts: self.n_utts,
            utt_seconds: self.utt_seconds,
            sample_rate: self.sample_rate,
            seed: self.seed,
            snr_grid: self.snr_grid.clone(),
            video_h: self.model.video_h,
            video_w: self.model.video_w,
            video_fps: self.video_fps,
        }
    }

    pub fn to_kv(&self) -> String {
        let f = &self.frame;
        let t = &self.train;
        let grid: Vec<String> = self.snr_grid.iter().map(|s| s.to_string()).collect();
        format!(
            "frame_len = {}\nhop = {}\nwindow = {}\nfft_size = {}\nlc_db = {}\n{}\
             epochs = {}\nbatch_size = {}\nlr = {}\nframe_stride = {}\nval_stride = {}\n\
             train_frac = {}\nval_frac = {}\ntest_frac = {}\nseed = {}\nutts = {}\n\
             utt_seconds = {}\nsample_rate = {}\nsnr_grid = {}\nvideo_fps = {}\n",
            f.frame_len,
            f.hop,
            f.window,
            f.fft_size,
            self.criterion.lc_db,
            self.model.to_kv(),
            t.epochs,
            t.batch_size,
            t.lr,
            t.frame_stride,
            t.val_stride,
            t.train_frac,
            t.val_frac,
            t.test_frac,
            self.seed,
            self.n_utts,
            self.utt_seconds,
            self.sample_rate,
            grid.join(","),
            self.video_fps
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_kv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Variant;

    #[test]
    fn defaults_are_consistent() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_kv(
            "variant = visual_only\nlr = 0.01\nsnr_grid = -3, 3\nseed = 9\nwindow = hann\n",
        )
        .unwrap();
        assert_eq!(cfg.model.variant, Variant::VisualOnly);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.snr_grid, vec![-3.0, 3.0]);
        let mut again = RunConfig::default();
        again.apply_kv(&cfg.to_kv()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_and_inconsistent() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("colour", "red"), Err(Error::Config(_))));
        cfg.set("fft_size", "128").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.set("audio_bins", "65").unwrap();
        cfg.validate().unwrap();
        cfg.set("train_frac", "0.9").unwrap();
        assert!(cfg.validate().is_err());
    }
}
