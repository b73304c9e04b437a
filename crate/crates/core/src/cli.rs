//! Command-line front end. Exit codes: 0 success, 1 failed check,
//! 2 usage or input error, 3 numerical divergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    load_video_tensor, load_wav, mix_at_snr, save_wav, synth_toy_dataset, Manifest,
    UtteranceFeatures,
};
use crate::dsp::{power_spectrum, stft};
use crate::error::{Error, Result};
use crate::eval::si_sdr;
use crate::gradsuite::{run_suite, Component, Scale};
use crate::maskcore::{ideal_binary_mask, save_mask, MaskCriterion, MaskDump};
use crate::models::{MaskModel, Variant};
use crate::pipeline::{enhance, evaluate, load_model, per_utt_tsv, predict_mask, train, RunConfig};
use crate::rng::Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "avmask",
    version,
    about = "Audio-visual time-frequency mask estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    /// `key = value` config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Shared {
    fn run_config(&self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            run.seed = s;
        }
        Ok(run)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic audio-visual corpus and its manifest.
    Synth {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        utts: Option<u64>,
        /// Comma-separated SNR grid in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mix clean speech with a random crop of noise at a given SNR.
    Mix {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
        /// Directory for `mix.wav` and the scaled `noise.wav`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the ideal binary mask of parallel speech and noise.
    Ibm {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        /// Local criterion in dB.
        #[arg(long, allow_hyphen_values = true)]
        lc: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a mask estimator on a manifest.
    Train {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        frame_stride: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an estimated (or oracle) mask to a mixture.
    Enhance {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, required_unless_present = "oracle_ibm")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long)]
        video: Option<PathBuf>,
        /// Use the IBM of these clean and scaled-noise files instead of a model.
        #[arg(long, num_args = 2, value_names = ["CLEAN", "NOISE"])]
        oracle_ibm: Option<Vec<PathBuf>>,
        /// Print SI-SDR of the enhanced signal against this file.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score checkpoints plus IBM and noisy baselines on a manifest.
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Only rows with this split tag.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        per_utt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Deliberately break this component's backward pass.
        #[arg(long)]
        corrupt: Vec<Component>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// `<file>.cfg` next to a file output.
fn echo_beside(file: &Path, run: &RunConfig) -> Result<()> {
    let mut s = file.as_os_str().to_owned();
    s.push(".cfg");
    run.save(PathBuf::from(s))
}

fn cmd_synth(shared: &Shared, utts: Option<u64>, snr: Option<Vec<f64>>, out: &Path) -> Result<i32> {
    let mut run = shared.run_config()?;
    if let Some(n) = utts {
        run.n_utts = n as usize;
    }
    if let Some(grid) = snr {
        run.snr_grid = grid;
    }
    run.validate()?;
    let manifest = synth_toy_dataset(&run.synth_config(), out)?;
    run.save(out.join("effective.cfg"))?;
    println!("wrote {} mixtures to {}", manifest.len(), out.display());
    Ok(EXIT_OK)
}

fn cmd_mix(shared: &Shared, clean: &Path, noise: &Path, snr: f64, out: &Path) -> Result<i32> {
    let mut run = shared.run_config()?;
    run.snr_grid = vec![snr];
    let clean = load_wav(clean)?;
    let noise = load_wav(noise)?;
    let mix = mix_at_snr(&clean, &noise, snr, &mut Rng::new(run.seed))?;
    make_dir(out)?;
    save_wav(out.join("mix.wav"), &mix.mixture)?;
    save_wav(out.join("noise.wav"), &mix.noise_scaled)?;
    run.save(out.join("effective.cfg"))?;
    println!("snr_db\t{}", mix.measured_snr_db());
    if mix.clipped {
        eprintln!("warning: mixture clipped when written as 16-bit PCM");
    }
    Ok(EXIT_OK)
}

fn cmd_ibm(
    shared: &Shared,
    clean: &Path,
    noise: &Path,
    lc: Option<f64>,
    out: &Path,
) -> Result<i32> {
    let mut run = shared.run_config()?;
    if let Some(lc) = lc {
        run.criterion = MaskCriterion::new(lc)?;
    }
    run.frame.validate()?;
    let clean = load_wav(clean)?;
    let noise = load_wav(noise)?;
    if clean.len() != noise.len() || clean.sample_rate() != noise.sample_rate() {
        return Err(Error::shape(format!(
            "clean has {} samples at {} Hz, noise {} at {} Hz",
            clean.len(),
            clean.sample_rate(),
            noise.len(),
            noise.sample_rate()
        )));
    }
    let s = power_spectrum(&stft(&clean, &run.frame)?);
    let n = power_spectrum(&stft(&noise, &run.frame)?);
    let mask = ideal_binary_mask(&s, &n, &run.criterion)?;
    save_mask(out, &MaskDump::Binary(mask.clone()))?;
    echo_beside(out, &run)?;
    let (t, f) = mask.dim();
    println!("{t} frames x {f} bins, {} ones", mask.count_ones());
    Ok(EXIT_OK)
}

struct TrainFlags {
    variant: Option<Variant>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    frame_stride: Option<usize>,
}

fn cmd_train(shared: &Shared, manifest: &Path, flags: TrainFlags, out: &Path) -> Result<i32> {
    let mut run = shared.run_config()?;
    if let Some(v) = flags.variant {
        run.model.variant = v;
    }
    let t = &mut run.train;
    t.epochs = flags.epochs.unwrap_or(t.epochs);
    t.lr = flags.lr.unwrap_or(t.lr);
    t.batch_size = flags.batch_size.unwrap_or(t.batch_size);
    t.frame_stride = flags.frame_stride.unwrap_or(t.frame_stride);
    let manifest = Manifest::load(manifest)?;
    let outcome = train(&run, &manifest, Some(out))?;
    println!("{}", crate::pipeline::LOG_HEADER);
    for e in &outcome.log {
        println!("{}", e.to_tsv());
    }
    Ok(EXIT_OK)
}

fn cmd_enhance(
    shared: &Shared,
    checkpoint: Option<&Path>,
    mixture: &Path,
    video: Option<&Path>,
    oracle: Option<&[PathBuf]>,
    reference: Option<&Path>,
    out: &Path,
) -> Result<i32> {
    let mix = load_wav(mixture)?;
    let (run, enhanced) = match oracle {
        Some([clean, noise]) => {
            let run = shared.run_config()?;
            run.frame.validate()?;
            let (clean, noise) = (load_wav(clean)?, load_wav(noise)?);
            let feats = UtteranceFeatures::new(
                "oracle",
                f64::NAN,
                &mix,
                Some((&clean, &noise)),
                None,
                &run.frame,
                &run.criterion,
                run.model.context_depth,
            )?;
            let mask = feats.ibm.as_ref().expect("parts supplied").to_soft();
            (run, enhance(&feats, &mask)?)
        }
        Some(_) => {
            return Err(Error::Config(
                "--oracle-ibm takes a clean and a noise file".into(),
            ))
        }
        None => {
            let path =
                checkpoint.ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
            let (run, model) = load_model(path)?;
            let needs_video = model.config().variant.uses_video();
            let video = match (needs_video, video) {
                (true, Some(p)) => Some(load_video_tensor(p)?),
                (true, None) => {
                    return Err(Error::Modality(format!(
                        "{} checkpoint needs --video",
                        model.config().variant
                    )))
                }
                (false, _) => None,
            };
            let feats = UtteranceFeatures::new(
                "input",
                f64::NAN,
                &mix,
                None,
                video.as_ref(),
                &run.frame,
                &run.criterion,
                run.model.context_depth,
            )?;
            let mask = predict_mask(&model, &feats)?;
            (run, enhance(&feats, &mask)?)
        }
    };
    save_wav(out, &enhanced)?;
    echo_beside(out, &run)?;
    if let Some(r) = reference {
        println!("si_sdr\t{}", si_sdr(&enhanced, &load_wav(r)?)?);
    }
    Ok(EXIT_OK)
}

fn cmd_eval(
    shared: &Shared,
    checkpoints: &[PathBuf],
    manifest: &Path,
    split: Option<&str>,
    per_utt: Option<&Path>,
    out: Option<&Path>,
) -> Result<i32> {
    let mut run = None;
    let mut models: Vec<(String, MaskModel)> = Vec::new();
    for path in checkpoints {
        let (r, m) = load_model(path)?;
        match &run {
            None => run = Some(r),
            Some(prev) => {
                let p: &RunConfig = prev;
                if p.frame != r.frame
                    || p.criterion != r.criterion
                    || p.model.context_depth != r.model.context_depth
                {
                    return Err(Error::Config(format!(
                        "{} disagrees with the first checkpoint on framing, criterion or context",
                        path.display()
                    )));
                }
            }
        }
        let mut label = m.config().variant.name().to_string();
        if models.iter().any(|(l, _)| *l == label) {
            label = path
                .file_stem()
                .map_or(label, |s| s.to_string_lossy().into_owned());
        }
        models.push((label, m));
    }
    let run = match run {
        Some(r) => r,
        None => shared.run_config()?,
    };
    let mut manifest = Manifest::load(manifest)?;
    if let Some(tag) = split {
        manifest = manifest.with_split(tag);
    }
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ev = evaluate(&models, &run, &manifest)?;
    let tsv = ev.report.to_tsv();
    print!("{tsv}");
    if let Some(p) = out {
        write(p, &tsv)?;
        echo_beside(p, &run)?;
    }
    if let Some(p) = per_utt {
        write(p, &per_utt_tsv(&ev.per_utt))?;
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(scale: Scale, corrupt: &[Component], seed: u64) -> Result<i32> {
    let results = run_suite(scale, corrupt, seed)?;
    println!("component\tmax_rel_err\tthreshold\tchecked\tskipped\tstatus");
    let mut ok = true;
    for r in &results {
        ok &= r.passed();
        println!(
            "{}\t{:.3e}\t{:.0e}\t{}\t{}\t{}",
            r.component,
            r.max_rel_err,
            r.threshold,
            r.checked,
            r.skipped,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth {
            shared,
            utts,
            snr,
            out,
        } => cmd_synth(&shared, utts, snr, &out),
        Command::Mix {
            shared,
            clean,
            noise,
            snr,
            out,
        } => cmd_mix(&shared, &clean, &noise, snr, &out),
        Command::Ibm {
            shared,
            clean,
            noise,
            lc,
            out,
        } => cmd_ibm(&shared, &clean, &noise, lc, &out),
        Command::Train {
            shared,
            manifest,
            variant,
            epochs,
            lr,
            batch_size,
            frame_stride,
            out,
        } => cmd_train(
            &shared,
            &manifest,
            TrainFlags {
                variant,
                epochs,
                lr,
                batch_size,
                frame_stride,
            },
            &out,
        ),
        Command::Enhance {
            shared,
            checkpoint,
            mixture,
            video,
            oracle_ibm,
            reference,
            out,
        } => cmd_enhance(
            &shared,
            checkpoint.as_deref(),
            &mixture,
            video.as_deref(),
            oracle_ibm.as_deref(),
            reference.as_deref(),
            &out,
        ),
        Command::Eval {
            shared,
            checkpoint,
            manifest,
            split,
            per_utt,
            out,
        } => cmd_eval(
            &shared,
            &checkpoint,
            &manifest,
            split.as_deref(),
            per_utt.as_deref(),
            out.as_deref(),
        ),
        Command::Gradcheck {
            scale,
            corrupt,
            seed,
        } => cmd_gradcheck(scale, &corrupt, seed),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                Error::NonFinite(_) => eprintln!("error: diverged: {e}"),
                _ => eprintln!("error: {e}"),
            }
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_utterances_is_a_usage_error() {
        assert_eq!(
            main_with_args(["avmask", "synth", "--utts", "0", "--out", "/nonexistent/x"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn parses_negative_snr_lists() {
        let cli =
            Cli::try_parse_from(["avmask", "synth", "--snr", "-12,-6,0,6", "--out", "d"]).unwrap();
        match cli.command {
            Command::Synth { snr, .. } => assert_eq!(snr.unwrap(), vec![-12.0, -6.0, 0.0, 6.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn divergence_maps_to_three() {
        assert_eq!(exit_code(&Error::NonFinite("training loss")), EXIT_DIVERGED);
        assert_eq!(exit_code(&Error::EmptyDataset), EXIT_USAGE);
    }

    #[test]
    fn missing_input_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("m.tfmk");
        let code = main_with_args([
            "avmask",
            "ibm",
            "--clean",
            "/nonexistent/clean.wav",
            "--noise",
            "/nonexistent/noise.wav",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_USAGE);
    }
}
