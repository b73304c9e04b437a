//! The three mask-estimation networks.
//!
//! ```text
//! audio  [B, T, F] --log--> LSTM --dropout--> LSTM --dropout--> last step ─┐
//!                                                                           ├─ concat ─> dense+ReLU ─> dense+sigmoid ─> [B, F]
//! video  [B, T, 1, H, W] --(conv3x3 -> maxpool2x2) x4--> flatten -> LSTM --dropout--> last step ─┘
//! ```
//!
//! `T` is `context_depth + 1` frames ending at the frame whose mask row is
//! predicted. The audio-only and visual-only variants keep just their
//! branch in front of the same fusion head.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kvfile;
use crate::nn::{activation, conv, dense, dropout, loss, lstm, pool, Adam, ParamStore, Tensor};
use crate::rng::Rng;

/// Floor added to power before taking the log of audio inputs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    AudioOnly,
    VisualOnly,
    AudioVisual,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::AudioOnly,
        Variant::VisualOnly,
        Variant::AudioVisual,
    ];

    pub fn uses_audio(self) -> bool {
        self != Variant::VisualOnly
    }

    pub fn uses_video(self) -> bool {
        self != Variant::AudioOnly
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::AudioOnly => "audio_only",
            Variant::VisualOnly => "visual_only",
            Variant::AudioVisual => "audio_visual",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Frames of history before the predicted frame.
    pub context_depth: usize,
    pub audio_bins: usize,
    pub lstm_cells: usize,
    pub conv_maps: [usize; 4],
    pub fusion_hidden: usize,
    pub dropout_p: f64,
    pub video_h: usize,
    pub video_w: usize,
    /// Feed raw power instead of `log(power + 1e-12)` to the audio branch.
    pub raw_power: bool,
}

impl ModelConfig {
    /// Full-size network: 622 bins, 1024-cell LSTMs, 32/64/64/128 maps, 50x92 lips.
    pub fn paper() -> Self {
        ModelConfig {
            variant: Variant::AudioVisual,
            context_depth: 5,
            audio_bins: 622,
            lstm_cells: 1024,
            conv_maps: [32, 64, 64, 128],
            fusion_hidden: 1024,
            dropout_p: 0.2,
            video_h: 50,
            video_w: 92,
            raw_power: false,
        }
    }

    /// CPU-sized network matching the desk frame spec (33 bins) and 16x24 lips.
    pub fn desk() -> Self {
        ModelConfig {
            variant: Variant::AudioVisual,
            context_depth: 5,
            audio_bins: 33,
            lstm_cells: 32,
            conv_maps: [4, 8, 8, 16],
            fusion_hidden: 64,
            dropout_p: 0.2,
            video_h: 16,
            video_w: 24,
            raw_power: false,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn steps(&self) -> usize {
        self.context_depth + 1
    }

    /// Spatial size after the four pooling stages.
    pub fn visual_map_dims(&self) -> (usize, usize) {
        (0..4).fold((self.video_h, self.video_w), |(h, w), _| {
            pool::output_dims(h, w)
        })
    }

    /// Per-frame width of the flattened CNN output.
    pub fn visual_flat(&self) -> usize {
        let (h, w) = self.visual_map_dims();
        self.conv_maps[3] * h * w
    }

    pub fn fusion_input(&self) -> usize {
        let branches = self.variant.uses_audio() as usize + self.variant.uses_video() as usize;
        branches * self.lstm_cells
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.audio_bins == 0 || self.lstm_cells == 0 || self.fusion_hidden == 0 {
            return bad("audio_bins, lstm_cells and fusion_hidden must be >= 1".into());
        }
        if self.conv_maps.contains(&0) {
            return bad(format!("conv_maps must be >= 1, got {:?}", self.conv_maps));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            ));
        }
        if self.variant.uses_video() {
            let (mut h, mut w) = (self.video_h, self.video_w);
            for _ in 0..4 {
                if h < 2 || w < 2 {
                    return bad(format!(
                        "video {}x{} too small for four 2x2 pooling stages",
                        self.video_h, self.video_w
                    ));
                }
                (h, w) = pool::output_dims(h, w);
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Returns `false` for keys that are
    /// not model settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "variant" => self.variant = value.parse()?,
            "context_depth" => self.context_depth = kvfile::parse_value(key, value)?,
            "audio_bins" => self.audio_bins = kvfile::parse_value(key, value)?,
            "lstm_cells" => self.lstm_cells = kvfile::parse_value(key, value)?,
            "conv_maps" => {
                let maps: Vec<usize> = kvfile::parse_list(key, value)?;
                self.conv_maps = maps.try_into().map_err(|m: Vec<usize>| {
                    Error::Config(format!("conv_maps needs 4 entries, got {}", m.len()))
                })?;
            }
            "fusion_hidden" => self.fusion_hidden = kvfile::parse_value(key, value)?,
            "dropout_p" => self.dropout_p = kvfile::parse_value(key, value)?,
            "video_h" => self.video_h = kvfile::parse_value(key, value)?,
            "video_w" => self.video_w = kvfile::parse_value(key, value)?,
            "raw_power" => self.raw_power = kvfile::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses a model config file on top of the desk defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::desk();
        for (k, v) in kvfile::parse(text)? {
            if !cfg.set(&k, &v)? {
                return Err(Error::Config(format!("unknown model key `{k}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let m = self.conv_maps;
        format!(
            "variant = {}\ncontext_depth = {}\naudio_bins = {}\nlstm_cells = {}\nconv_maps = {},{},{},{}\n\
             fusion_hidden = {}\ndropout_p = {}\nvideo_h = {}\nvideo_w = {}\nraw_power = {}\n",
            self.variant,
            self.context_depth,
            self.audio_bins,
            self.lstm_cells,
            m[0],
            m[1],
            m[2],
            m[3],
            self.fusion_hidden,
            self.dropout_p,
            self.video_h,
            self.video_w,
            self.raw_power
        )
    }
}

const AUDIO_LSTM: [&str; 2] = ["audio.lstm1", "audio.lstm2"];
const VISUAL_LSTM: &str = "visual.lstm";
const HIDDEN: &str = "fusion.hidden";
const OUTPUT: &str = "fusion.out";

fn conv_name(i: usize) -> String {
    format!("visual.conv{}", i + 1)
}

fn uniform(rng: &mut Rng, shape: &[usize], limit: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.range(-limit, limit)).collect())
        .expect("shape product matches")
}

fn add_lstm(store: &mut ParamStore, rng: &mut Rng, name: &str, input: usize, hidden: usize) {
    let limit = 1.0 / (hidden as f64).sqrt();
    store.insert(
        format!("{name}.wx"),
        uniform(rng, &[input, 4 * hidden], limit),
    );
    store.insert(
        format!("{name}.wh"),
        uniform(rng, &[hidden, 4 * hidden], limit),
    );
    let mut b = Tensor::zeros(&[4 * hidden]);
    b.data_mut()[hidden..2 * hidden].fill(1.0);
    store.insert(format!("{name}.b"), b);
}

fn add_dense(store: &mut ParamStore, rng: &mut Rng, name: &str, fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    store.insert(format!("{name}.w"), uniform(rng, &[fan_in, fan_out], limit));
    store.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskModel {
    config: ModelConfig,
    params: ParamStore,
}

/// Builds a freshly initialized model.
pub fn build(config: ModelConfig, rng: &mut Rng) -> Result<MaskModel> {
    config.validate()?;
    let mut store = ParamStore::new();
    let cells = config.lstm_cells;
    if config.variant.uses_audio() {
        add_lstm(&mut store, rng, AUDIO_LSTM[0], config.audio_bins, cells);
        add_lstm(&mut store, rng, AUDIO_LSTM[1], cells, cells);
    }
    if config.variant.uses_video() {
        let mut c_in = 1;
        for (i, &c_out) in config.conv_maps.iter().enumerate() {
            let name = conv_name(i);
            let limit = (6.0 / (9 * (c_in + c_out)) as f64).sqrt();
            store.insert(
                format!("{name}.kernel"),
                uniform(rng, &[c_out, c_in, 3, 3], limit),
            );
            store.insert(format!("{name}.bias"), Tensor::zeros(&[c_out]));
            c_in = c_out;
        }
        add_lstm(&mut store, rng, VISUAL_LSTM, config.visual_flat(), cells);
    }
    add_dense(
        &mut store,
        rng,
        HIDDEN,
        config.fusion_input(),
        config.fusion_hidden,
    );
    add_dense(
        &mut store,
        rng,
        OUTPUT,
        config.fusion_hidden,
        config.audio_bins,
    );
    Ok(MaskModel {
        config,
        params: store,
    })
}

struct AudioTrace {
    lstm1: lstm::Cache,
    drop1: dropout::Cache,
    lstm2: lstm::Cache,
    drop2: dropout::Cache,
}

struct VisualTrace {
    batch: usize,
    steps: usize,
    /// Unique-image index for every (sample, step).
    unique_of: Vec<usize>,
    unique: usize,
    convs: Vec<conv::Cache>,
    pools: Vec<pool::Cache>,
    pooled_shape: Vec<usize>,
    lstm: lstm::Cache,
    drop: dropout::Cache,
}

struct Trace {
    audio: Option<AudioTrace>,
    visual: Option<VisualTrace>,
    hidden: dense::Cache,
    hidden_act: Tensor,
    out: dense::Cache,
    output: Tensor,
}

fn last_step_grad(g_last: &Tensor, steps: usize) -> Tensor {
    let [batch, hidden] = [g_last.shape()[0], g_last.shape()[1]];
    let mut g = Tensor::zeros(&[batch, steps, hidden]);
    for b in 0..batch {
        g.data_mut()[(b * steps + steps - 1) * hidden..][..hidden]
            .copy_from_slice(&g_last.data()[b * hidden..(b + 1) * hidden]);
    }
    g
}

fn concat_cols(parts: &[Tensor]) -> Tensor {
    let batch = parts[0].shape()[0];
    let width: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut data = Vec::with_capacity(batch * width);
    for b in 0..batch {
        for p in parts {
            let w = p.shape()[1];
            data.extend_from_slice(&p.data()[b * w..(b + 1) * w]);
        }
    }
    Tensor::from_vec(&[batch, width], data).expect("widths add up")
}

fn split_cols(t: &Tensor, widths: &[usize]) -> Vec<Tensor> {
    let batch = t.shape()[0];
    let total = t.shape()[1];
    let mut out = Vec::with_capacity(widths.len());
    let mut offset = 0;
    for &w in widths {
        let mut data = Vec::with_capacity(batch * w);
        for b in 0..batch {
            data.extend_from_slice(&t.data()[b * total + offset..][..w]);
        }
        out.push(Tensor::from_vec(&[batch, w], data).expect("widths add up"));
        offset += w;
    }
    out
}

type NamedGrads = Vec<(String, Tensor)>;

impl MaskModel {
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut reference = build(config.clone(), &mut Rng::new(0))?;
        if reference.params.len() != params.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, config implies {}",
                params.len(),
                reference.params.len()
            )));
        }
        for (name, p) in reference.params.iter_mut() {
            let given = params
                .get(name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
            if given.value.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, config implies {:?}",
                    given.value.shape(),
                    p.value.shape()
                )));
            }
        }
        Ok(MaskModel { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    fn batch_size(&self, audio: Option<&Tensor>, video: Option<&Tensor>) -> Result<usize> {
        let cfg = &self.config;
        let steps = cfg.steps();
        let mut batch = None;
        if cfg.variant.uses_audio() {
            let a = audio
                .ok_or_else(|| Error::Modality(format!("{} model needs audio", cfg.variant)))?;
            let [b, t, f] = a.dims::<3>("audio batch")?;
            if t != steps || f != cfg.audio_bins {
                return Err(Error::shape(format!(
                    "audio batch {:?}, expected [B, {steps}, {}]",
                    a.shape(),
                    cfg.audio_bins
                )));
            }
            batch = Some(b);
        }
        if cfg.variant.uses_video() {
            let v = video
                .ok_or_else(|| Error::Modality(format!("{} model needs video", cfg.variant)))?;
            let [b, t, c, h, w] = v.dims::<5>("video batch")?;
            if t != steps || c != 1 || h != cfg.video_h || w != cfg.video_w {
                return Err(Error::shape(format!(
                    "video batch {:?}, expected [B, {steps}, 1, {}, {}]",
                    v.shape(),
                    cfg.video_h,
                    cfg.video_w
                )));
            }
            if batch.is_some_and(|a| a != b) {
                return Err(Error::shape(format!(
                    "audio batch {batch:?} vs video batch {b}"
                )));
            }
            batch = Some(b);
        }
        Ok(batch.expect("every variant uses a modality"))
    }

    fn lstm_params(&self, name: &str) -> (&Tensor, &Tensor, &Tensor) {
        let p = &self.params;
        (
            p.value(&format!("{name}.wx")),
            p.value(&format!("{name}.wh")),
            p.value(&format!("{name}.b")),
        )
    }

    fn run_audio(
        &self,
        audio: &Tensor,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Tensor, AudioTrace)> {
        let x = if self.config.raw_power {
            audio.clone()
        } else {
            audio.map(|p| (p + LOG_FLOOR).ln())
        };
        let p = self.config.dropout_p;
        let (wx, wh, b) = self.lstm_params(AUDIO_LSTM[0]);
        let (out1, lstm1) = lstm::forward(&x, wx, wh, b)?;
        let (seq1, drop1) = dropout::forward(&out1.sequence, p, rng, training)?;
        let (wx, wh, b) = self.lstm_params(AUDIO_LSTM[1]);
        let (out2, lstm2) = lstm::forward(&seq1, wx, wh, b)?;
        let (feat, drop2) = dropout::forward(&out2.last, p, rng, training)?;
        Ok((
            feat,
            AudioTrace {
                lstm1,
                drop1,
                lstm2,
                drop2,
            },
        ))
    }

    fn run_visual(
        &self,
        video: &Tensor,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Tensor, VisualTrace)> {
        let cfg = &self.config;
        let [batch, steps, _, h, w] = video.dims::<5>("video batch")?;
        let plane = h * w;
        let frames = video.data();

        // Neighbouring context frames are often the same upsampled video
        // frame; run the CNN once per distinct image.
        let mut unique_of = Vec::with_capacity(batch * steps);
        let mut images: Vec<f64> = Vec::new();
        let mut unique = 0;
        for i in 0..batch * steps {
            let frame = &frames[i * plane..(i + 1) * plane];
            let repeat = i % steps > 0 && frame == &frames[(i - 1) * plane..i * plane];
            if repeat {
                unique_of.push(unique - 1);
            } else {
                images.extend_from_slice(frame);
                unique_of.push(unique);
                unique += 1;
            }
        }

        let mut x = Tensor::from_vec(&[unique, 1, h, w], images)?;
        let mut convs = Vec::with_capacity(4);
        let mut pools = Vec::with_capacity(4);
        for i in 0..4 {
            let name = conv_name(i);
            let (y, cc) = conv::forward(
                &x,
                self.params.value(&format!("{name}.kernel")),
                self.params.value(&format!("{name}.bias")),
            )?;
            let (pooled, pc) = pool::forward(&y)?;
            convs.push(cc);
            pools.push(pc);
            x = pooled;
        }
        let pooled_shape = x.shape().to_vec();
        let flat = cfg.visual_flat();
        let mut seq = Vec::with_capacity(batch * steps * flat);
        for &u in &unique_of {
            seq.extend_from_slice(&x.data()[u * flat..(u + 1) * flat]);
        }
        let seq = Tensor::from_vec(&[batch, steps, flat], seq)?;
        let (wx, wh, b) = self.lstm_params(VISUAL_LSTM);
        let (out, lstm) = lstm::forward(&seq, wx, wh, b)?;
        let (feat, drop) = dropout::forward(&out.last, cfg.dropout_p, rng, training)?;
        Ok((
            feat,
            VisualTrace {
                batch,
                steps,
                unique_of,
                unique,
                convs,
                pools,
                pooled_shape,
                lstm,
                drop,
            },
        ))
    }

    fn run(
        &self,
        audio: Option<&Tensor>,
        video: Option<&Tensor>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Trace> {
        self.batch_size(audio, video)?;
        let mut feats = Vec::with_capacity(2);
        let audio_trace = if self.config.variant.uses_audio() {
            let (f, t) = self.run_audio(audio.expect("checked"), training, rng)?;
            feats.push(f);
            Some(t)
        } else {
            None
        };
        let visual_trace = if self.config.variant.uses_video() {
            let (f, t) = self.run_visual(video.expect("checked"), training, rng)?;
            feats.push(f);
            Some(t)
        } else {
            None
        };
        let fused = concat_cols(&feats);
        let p = &self.params;
        let (z1, hidden) = dense::forward(
            &fused,
            p.value(&format!("{HIDDEN}.w")),
            p.value(&format!("{HIDDEN}.b")),
        )?;
        let hidden_act = activation::relu_forward(&z1);
        let (z2, out) = dense::forward(
            &hidden_act,
            p.value(&format!("{OUTPUT}.w")),
            p.value(&format!("{OUTPUT}.b")),
        )?;
        let output = activation::sigmoid_forward(&z2);
        Ok(Trace {
            audio: audio_trace,
            visual: visual_trace,
            hidden,
            hidden_act,
            out,
            output,
        })
    }

    fn push_lstm(grads: &mut NamedGrads, name: &str, g: lstm::Grads) {
        grads.push((format!("{name}.wx"), g.wx));
        grads.push((format!("{name}.wh"), g.wh));
        grads.push((format!("{name}.b"), g.b));
    }

    fn backprop(&self, trace: &Trace, g_output: &Tensor) -> Result<NamedGrads> {
        let p = &self.params;
        let mut grads = NamedGrads::new();

        let gz2 = activation::sigmoid_backward(&trace.output, g_output)?;
        let g = dense::backward(&trace.out, p.value(&format!("{OUTPUT}.w")), &gz2)?;
        grads.push((format!("{OUTPUT}.w"), g.w));
        grads.push((format!("{OUTPUT}.b"), g.b));
        let gz1 = activation::relu_backward(&trace.hidden_act, &g.x)?;
        let g = dense::backward(&trace.hidden, p.value(&format!("{HIDDEN}.w")), &gz1)?;
        grads.push((format!("{HIDDEN}.w"), g.w));
        grads.push((format!("{HIDDEN}.b"), g.b));

        let cells = self.config.lstm_cells;
        let widths: Vec<usize> = [trace.audio.is_some(), trace.visual.is_some()]
            .iter()
            .filter(|&&on| on)
            .map(|_| cells)
            .collect();
        let mut branch_grads = split_cols(&g.x, &widths).into_iter();
        let steps = self.config.steps();

        if let Some(at) = &trace.audio {
            let g_feat = dropout::backward(&at.drop2, &branch_grads.next().expect("audio slot"));
            let (wx, wh, _) = self.lstm_params(AUDIO_LSTM[1]);
            let g2 = lstm::backward(&at.lstm2, wx, wh, &last_step_grad(&g_feat, steps), true)?;
            let g_seq = dropout::backward(&at.drop1, g2.x.as_ref().expect("requested"));
            Self::push_lstm(&mut grads, AUDIO_LSTM[1], g2);
            let (wx, wh, _) = self.lstm_params(AUDIO_LSTM[0]);
            let g1 = lstm::backward(&at.lstm1, wx, wh, &g_seq, false)?;
            Self::push_lstm(&mut grads, AUDIO_LSTM[0], g1);
        }

        if let Some(vt) = &trace.visual {
            let g_feat = dropout::backward(&vt.drop, &branch_grads.next().expect("visual slot"));
            let (wx, wh, _) = self.lstm_params(VISUAL_LSTM);
            let gl = lstm::backward(&vt.lstm, wx, wh, &last_step_grad(&g_feat, vt.steps), true)?;
            let g_seq = gl.x.as_ref().expect("requested");
            Self::push_lstm(&mut grads, VISUAL_LSTM, gl.clone());

            let flat = self.config.visual_flat();
            let mut g_maps = Tensor::zeros(&vt.pooled_shape);
            for (i, &u) in vt.unique_of.iter().enumerate() {
                let src = &g_seq.data()[i * flat..(i + 1) * flat];
                for (d, s) in g_maps.data_mut()[u * flat..(u + 1) * flat]
                    .iter_mut()
                    .zip(src)
                {
                    *d += s;
                }
            }
            debug_assert_eq!(vt.unique_of.len(), vt.batch * vt.steps);
            debug_assert_eq!(vt.pooled_shape[0], vt.unique);
            let mut g = g_maps;
            for i in (0..4).rev() {
                let name = conv_name(i);
                let g_conv = pool::backward(&vt.pools[i], &g)?;
                let gc = conv::backward(
                    &vt.convs[i],
                    p.value(&format!("{name}.kernel")),
                    &g_conv,
                    i > 0,
                )?;
                grads.push((format!("{name}.kernel"), gc.k));
                grads.push((format!("{name}.bias"), gc.b));
                if let Some(gx) = gc.x {
                    g = gx;
                }
            }
        }
        Ok(grads)
    }

    /// Mask rows `[B, audio_bins]` in (0, 1) for the last frame of each context.
    pub fn forward(
        &self,
        audio: Option<&Tensor>,
        video: Option<&Tensor>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        Ok(self.run(audio, video, training, rng)?.output)
    }

    /// Which branch every non-smooth operation took: the winning input of
    /// each max-pool window and the on/off state of each hidden ReLU unit.
    /// Two parameter points with equal patterns lie on the same smooth piece.
    pub fn switch_pattern(
        &self,
        audio: Option<&Tensor>,
        video: Option<&Tensor>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Vec<usize>> {
        let trace = self.run(audio, video, training, rng)?;
        let mut pattern = Vec::new();
        if let Some(vt) = &trace.visual {
            for p in &vt.pools {
                pattern.extend_from_slice(p.argmax());
            }
        }
        pattern.extend(trace.hidden_act.data().iter().map(|&h| (h > 0.0) as usize));
        Ok(pattern)
    }

    /// Mean BCE against `targets`, with gradients accumulated into the
    /// parameter store (after zeroing it).
    pub fn loss_and_grads(
        &mut self,
        audio: Option<&Tensor>,
        video: Option<&Tensor>,
        targets: &Tensor,
        training: bool,
        rng: &mut Rng,
    ) -> Result<f64> {
        let trace = self.run(audio, video, training, rng)?;
        let (l, g) = loss::bce(&trace.output, targets)?;
        let grads = self.backprop(&trace, &g)?;
        self.params.zero_grad();
        for (name, g) in grads {
            self.params.accumulate_grad(&name, &g)?;
        }
        Ok(l)
    }

    /// One forward/backward pass and one Adam update. Returns the loss
    /// measured before the update.
    pub fn train_step(
        &mut self,
        audio: Option<&Tensor>,
        video: Option<&Tensor>,
        targets: &Tensor,
        adam: &Adam,
        rng: &mut Rng,
    ) -> Result<f64> {
        let l = self.loss_and_grads(audio, video, targets, true, rng)?;
        adam.step(&mut self.params);
        Ok(l)
    }
}
