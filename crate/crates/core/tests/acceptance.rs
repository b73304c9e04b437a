//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its verdict line even when all of them pass:
//!
//!     cargo test --release --test acceptance

use std::error::Error as StdError;
use std::fs;
use std::path::Path;
use std::time::Instant;

use avmask::data::{make_batch, mix_at_snr, synth_toy_dataset, Manifest};
use avmask::dsp::{istft, stft, FrameSpec, PowerSpectrum, Waveform, WindowKind};
use avmask::eval::{hit_fa, seg_snr, si_sdr, tf_accuracy};
use avmask::gradsuite::{run_suite, Component, Scale};
use avmask::maskcore::{ideal_binary_mask, BinaryMask, MaskCriterion};
use avmask::models::{build, ModelConfig, Variant};
use avmask::nn::Adam;
use avmask::pipeline::{evaluate, load_features, per_utt_tsv, train, RunConfig};
use avmask::rng::Rng;
use ndarray::Array2;

type Res<T> = Result<T, Box<dyn StdError>>;

const DATA_SEED: u64 = 7;
const DATA_UTTS: usize = 200;

struct Verdict {
    ok: bool,
    detail: String,
}

/// Text outputs of a run, compared byte for byte on repetition.
type Artifacts = Vec<(String, String)>;

fn random_wave(rng: &mut Rng, len: usize, sr: u32) -> Waveform {
    Waveform::new((0..len).map(|_| rng.range(-1.0, 1.0)).collect(), sr).unwrap()
}

fn criterion_1() -> Res<Verdict> {
    let t = Instant::now();
    let mut specs = Vec::new();
    for w in [WindowKind::Hann, WindowKind::Hamming] {
        specs.push(FrameSpec::new(64, 16, w, 64)?);
        specs.push(FrameSpec::new(1200, 300, w, 1242)?);
    }
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let x = random_wave(&mut Rng::new(1000 + seed), 16000, 16000);
        for sp in &specs {
            let y = istft(&stft(&x, sp)?)?;
            // Samples covered by a full stack of overlapping frames.
            for i in sp.frame_len..y.len().saturating_sub(sp.frame_len) {
                worst = worst.max((y.samples()[i] - x.samples()[i]).abs());
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(Verdict {
        ok: worst < 1e-8 && secs < 10.0,
        detail: format!("max interior error {worst:.2e}, {secs:.1} s"),
    })
}

fn criterion_2() -> Res<Verdict> {
    let t = Instant::now();
    let results = run_suite(Scale::Desk, &[], 42)?;
    let stated = |c: Component| match c.to_string().as_str() {
        "lstm" | "maxpool" => 1e-5,
        "end_to_end" => 1e-4,
        _ => 1e-6,
    };
    let mut ok = results.len() == 8;
    let mut parts = Vec::new();
    for r in &results {
        let pass = r.max_rel_err < stated(r.component) && r.checked > 0;
        ok &= pass;
        parts.push(format!("{} {:.1e}", r.component, r.max_rel_err));
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    Ok(Verdict {
        ok,
        detail: format!("{}, {secs:.1} s", parts.join(", ")),
    })
}

fn criterion_3() -> Res<Verdict> {
    let t = Instant::now();
    let mut rng = Rng::new(3);
    let (mut cells, mut disagree) = (0usize, 0usize);
    for _ in 0..100 {
        let (frames, bins) = (1 + rng.below(40), 1 + rng.below(65));
        // Speech may hold exactly silent cells; noise power is positive.
        let s = Array2::from_shape_fn((frames, bins), |_| match rng.below(20) {
            0 => 0.0,
            _ => 10f64.powf(rng.range(-3.0, 3.0)),
        });
        let mut n = Array2::from_shape_fn((frames, bins), |_| 10f64.powf(rng.range(-3.0, 3.0)));
        // Exact ties exercise the strict inequality.
        for (i, (v, &sv)) in n.iter_mut().zip(s.iter()).enumerate() {
            if i % 7 == 0 && sv > 0.0 {
                *v = sv;
            }
        }
        let sp = PowerSpectrum::new(s.clone(), FrameSpec::desk())?;
        let np = PowerSpectrum::new(n.clone(), FrameSpec::desk())?;
        for lc in [-5.0, 0.0, 5.0] {
            let m = ideal_binary_mask(&sp, &np, &MaskCriterion::new(lc)?)?;
            for f in 0..frames {
                for b in 0..bins {
                    let brute = s[[f, b]] > n[[f, b]] * 10f64.powf(lc / 10.0);
                    cells += 1;
                    disagree += (m.data()[[f, b]] != brute) as usize;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(Verdict {
        ok: disagree == 0 && secs < 5.0,
        detail: format!("{disagree} of {cells} cells disagree, {secs:.2} s"),
    })
}

fn criterion_4() -> Res<Verdict> {
    let mut rng = Rng::new(4);
    let mut worst = 0.0f64;
    let mut sums_ok = true;
    for case in 0..10 {
        let clean = random_wave(&mut rng, 8000, 8000);
        let noise = random_wave(&mut rng, 8000 + 4000 * (case % 3), 8000);
        for snr in [-12.0, -6.0, 0.0, 6.0] {
            let m = mix_at_snr(&clean, &noise, snr, &mut rng.split(case as u64))?;
            let pc: f64 = m.clean.samples().iter().map(|x| x * x).sum();
            let pn: f64 = m.noise_scaled.samples().iter().map(|x| x * x).sum();
            worst = worst.max((10.0 * (pc / pn).log10() - snr).abs());
            for i in 0..m.mixture.len() {
                sums_ok &=
                    m.mixture.samples()[i] == m.clean.samples()[i] + m.noise_scaled.samples()[i];
            }
        }
    }
    Ok(Verdict {
        ok: worst < 1e-9 && sums_ok,
        detail: format!("max |achieved - requested| {worst:.2e} dB"),
    })
}

fn dataset(dir: &Path) -> Res<(RunConfig, Manifest)> {
    let run = RunConfig {
        seed: DATA_SEED,
        n_utts: DATA_UTTS,
        ..RunConfig::default()
    };
    let manifest = synth_toy_dataset(&run.synth_config(), dir)?;
    Ok((run, manifest))
}

fn at_snr(m: &Manifest, snr: f64) -> Manifest {
    Manifest::new(
        m.entries
            .iter()
            .filter(|e| e.snr_db == snr)
            .cloned()
            .collect(),
    )
}

fn criterion_5(run: &RunConfig, manifest: &Manifest) -> Res<(Verdict, Artifacts)> {
    let t = Instant::now();
    let ev = evaluate(&[], run, &at_snr(manifest, -6.0))?;
    let si = |variant: &str| -> Vec<(String, f64)> {
        ev.per_utt
            .iter()
            .filter(|m| m.variant == variant)
            .map(|m| (m.utt_id.clone(), m.si_sdr.unwrap()))
            .collect()
    };
    let (ibm, noisy) = (si("ibm"), si("noisy"));
    let mut worst = f64::INFINITY;
    for ((u1, a), (u2, b)) in ibm.iter().zip(&noisy) {
        assert_eq!(u1, u2);
        worst = worst.min(a - b);
    }
    let secs = t.elapsed().as_secs_f64();
    let n = ibm.len();
    Ok((
        Verdict {
            ok: n == DATA_UTTS && ev.report.skipped == 0 && worst >= 5.0 && secs < 120.0,
            detail: format!("worst gain {worst:.2} dB over {n} utterances, {secs:.1} s"),
        },
        vec![
            ("c5 report".into(), ev.report.to_tsv()),
            ("c5 per-utterance".into(), per_utt_tsv(&ev.per_utt)),
        ],
    ))
}

fn criterion_6(run: &RunConfig, manifest: &Manifest, work: &Path) -> Res<(Verdict, Artifacts)> {
    let t = Instant::now();
    let mut models = Vec::new();
    let mut artifacts = Vec::new();
    let mut split = None;
    for v in Variant::ALL {
        let mut r = run.clone();
        r.model.variant = v;
        let dir = work.join(v.name());
        let out = train(&r, manifest, Some(&dir))?;
        artifacts.push((
            format!("c6 {v} train log"),
            fs::read_to_string(dir.join("train_log.tsv"))?,
        ));
        split = Some(out.split);
        models.push((v.name().to_string(), out.model));
    }
    let test = at_snr(&split.unwrap().with_split("test"), -12.0);
    let ev = evaluate(&models, run, &test)?;
    let acc = |v: Variant| {
        ev.report
            .row(-12.0, v.name())
            .map(|r| r.tf_acc)
            .unwrap_or(f64::NAN)
    };
    let (a, vo, av) = (
        acc(Variant::AudioOnly),
        acc(Variant::VisualOnly),
        acc(Variant::AudioVisual),
    );
    // The majority class of the reference mask over the scored frames.
    let (mut ones, mut cells) = (0usize, 0usize);
    for m in ev.per_utt.iter().filter(|m| m.variant == "ibm") {
        let c = m.confusion.unwrap();
        ones += c.tp + c.fn_;
        cells += c.total();
    }
    let p1 = ones as f64 / cells as f64;
    let majority = p1.max(1.0 - p1);
    let secs = t.elapsed().as_secs_f64();
    let ok = av - a >= 0.01
        && av - vo >= 0.01
        && a > majority
        && vo > majority
        && av > majority
        && secs < 900.0;
    artifacts.push(("c6 report".into(), ev.report.to_tsv()));
    artifacts.push(("c6 per-utterance".into(), per_utt_tsv(&ev.per_utt)));
    Ok((
        Verdict {
            ok,
            detail: format!(
                "at -12 dB: AV {av:.4}, A {a:.4}, V {vo:.4}, majority {majority:.4}; {} test utterances, {secs:.0} s",
                test.utterances().len()
            ),
        },
        artifacts,
    ))
}

fn criterion_7(run: &RunConfig, manifest: &Manifest) -> Res<(Verdict, Artifacts)> {
    let t = Instant::now();
    let entries: Vec<_> = at_snr(manifest, -6.0).entries.into_iter().take(4).collect();
    let feats = entries
        .iter()
        .map(|e| load_features(e, run, true, true))
        .collect::<avmask::Result<Vec<_>>>()?;
    let mut items = Vec::new();
    for (u, f) in feats.iter().enumerate() {
        let span = f.record_frames();
        for j in 0..5 {
            items.push((u, span.start + j * span.len() / 5));
        }
    }
    let batch = make_batch(&feats, &items, true, true)?;
    let targets = batch.targets.as_ref().unwrap();
    let mut cfg = ModelConfig::desk();
    cfg.variant = Variant::AudioVisual;
    let root = Rng::new(DATA_SEED);
    let mut model = build(cfg, &mut root.split(1))?;
    let adam = Adam::default();
    let mut log = String::from("step\tloss\ttf_acc\n");
    let mut reached = None;
    for step in 0..500 {
        let loss = model.train_step(
            Some(&batch.audio),
            batch.video.as_ref(),
            targets,
            &adam,
            &mut root.split(2).split(step as u64),
        )?;
        let out = model.forward(
            Some(&batch.audio),
            batch.video.as_ref(),
            false,
            &mut Rng::new(0),
        )?;
        let hits = out
            .data()
            .iter()
            .zip(targets.data())
            .filter(|(p, y)| (**p > 0.5) == (**y > 0.5))
            .count();
        let acc = hits as f64 / targets.len() as f64;
        log.push_str(&format!("{}\t{loss:.10}\t{acc:.6}\n", step + 1));
        if acc > 0.95 {
            reached = Some((step + 1, acc));
            break;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let detail = match reached {
        Some((s, acc)) => format!(
            "tf_accuracy {acc:.4} after {s} steps on {} samples, {secs:.1} s",
            items.len()
        ),
        None => format!("tf_accuracy stayed at or below 0.95 for 500 steps, {secs:.1} s"),
    };
    Ok((
        Verdict {
            ok: reached.is_some() && items.len() == 20 && secs < 120.0,
            detail,
        },
        vec![("c7 log".into(), log)],
    ))
}

fn runs_5_to_7(work: &Path) -> Res<(Vec<Verdict>, Artifacts)> {
    let (run, manifest) = dataset(&work.join("data"))?;
    let (v5, mut art) = criterion_5(&run, &manifest)?;
    let (v6, a6) = criterion_6(&run, &manifest, &work.join("runs"))?;
    let (v7, a7) = criterion_7(&run, &manifest)?;
    art.extend(a6);
    art.extend(a7);
    Ok((vec![v5, v6, v7], art))
}

fn criterion_8(first: &Artifacts, work: &Path) -> Res<Verdict> {
    let (_, second) = runs_5_to_7(work)?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let ok = first.len() == second.len() && differing.is_empty();
    Ok(Verdict {
        ok,
        detail: if ok {
            format!("{} logs and reports byte-identical", first.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    })
}

fn random_mask(rng: &mut Rng, t: usize, f: usize, p: f64) -> BinaryMask {
    BinaryMask::new(Array2::from_shape_fn((t, f), |_| rng.bernoulli(p)))
}

fn loop_accuracy(e: &Array2<bool>, r: &Array2<bool>) -> f64 {
    let (t, f) = r.dim();
    let mut same = 0;
    for i in 0..t {
        for j in 0..f {
            if e[[i, j]] == r[[i, j]] {
                same += 1;
            }
        }
    }
    same as f64 / (t * f) as f64
}

fn loop_hit_fa(e: &Array2<bool>, r: &Array2<bool>) -> (f64, f64) {
    let (t, f) = r.dim();
    let (mut hits, mut pos, mut fas, mut neg) = (0, 0, 0, 0);
    for i in 0..t {
        for j in 0..f {
            if r[[i, j]] {
                pos += 1;
                if e[[i, j]] {
                    hits += 1;
                }
            } else {
                neg += 1;
                if e[[i, j]] {
                    fas += 1;
                }
            }
        }
    }
    (hits as f64 / pos as f64, fas as f64 / neg as f64)
}

fn loop_si_sdr(e: &[f64], r: &[f64]) -> f64 {
    let n = e.len().min(r.len());
    let (mut dot, mut rr) = (0.0, 0.0);
    for i in 0..n {
        dot += e[i] * r[i];
        rr += r[i] * r[i];
    }
    let a = dot / rr;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        num += (a * r[i]) * (a * r[i]);
        den += (e[i] - a * r[i]) * (e[i] - a * r[i]);
    }
    10.0 * (num / den).log10()
}

fn loop_seg_snr(e: &[f64], r: &[f64], sr: u32) -> f64 {
    let len = (0.032 * sr as f64).round() as usize;
    let n = e.len().min(r.len());
    let (mut total, mut count) = (0.0, 0);
    let mut start = 0;
    while start + len <= n {
        let (mut sig, mut err) = (0.0, 0.0);
        for i in start..start + len {
            sig += r[i] * r[i];
            err += (r[i] - e[i]) * (r[i] - e[i]);
        }
        if sig >= 1e-10 {
            let v = 10.0 * (sig / err).log10();
            total += v.max(-10.0).min(35.0);
            count += 1;
        }
        start += len;
    }
    total / count as f64
}

fn criterion_9() -> Res<Verdict> {
    let mut rng = Rng::new(9);
    let mut worst = [0.0f64; 4];
    for _ in 0..50 {
        let (t, f) = (2 + rng.below(60), 2 + rng.below(40));
        let (p_ref, p_est) = (rng.range(0.2, 0.8), rng.range(0.2, 0.8));
        let reference = random_mask(&mut rng, t, f, p_ref);
        let est = random_mask(&mut rng, t, f, p_est);
        worst[0] = worst[0].max(
            (tf_accuracy(&est, &reference)? - loop_accuracy(est.data(), reference.data())).abs(),
        );
        let (h, fa) = hit_fa(&est, &reference)?;
        let (lh, lfa) = loop_hit_fa(est.data(), reference.data());
        worst[1] = worst[1].max(((h - fa) - (lh - lfa)).abs());

        let sr = [8000, 16000][rng.below(2)];
        let len = 2000 + rng.below(6000);
        let mut r: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        // A silent stretch, skipped by the segmental measure.
        let gap = rng.below(len / 2);
        r[gap..gap + len / 4].iter_mut().for_each(|x| *x = 0.0);
        let level = 10f64.powf(rng.range(-3.0, 0.5));
        let e: Vec<f64> = r
            .iter()
            .map(|x| rng.range(0.5, 1.5) * x + level * rng.normal())
            .collect();
        let (we, wr) = (Waveform::new(e.clone(), sr)?, Waveform::new(r.clone(), sr)?);
        worst[2] = worst[2].max((si_sdr(&we, &wr)? - loop_si_sdr(&e, &r)).abs());
        worst[3] = worst[3].max((seg_snr(&we, &wr)? - loop_seg_snr(&e, &r, sr)).abs());
    }
    Ok(Verdict {
        ok: worst.iter().all(|w| *w <= 1e-12),
        detail: format!(
            "max deviation tf_accuracy {:.1e}, hit_fa {:.1e}, si_sdr {:.1e}, seg_snr {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    })
}

fn line(id: usize, title: &str, v: &Res<Verdict>) -> bool {
    match v {
        Ok(v) => {
            println!(
                "criterion {id} ({title}): {} [{}]",
                if v.ok { "PASS" } else { "FAIL" },
                v.detail
            );
            v.ok
        }
        Err(e) => {
            println!("criterion {id} ({title}): FAIL [error: {e}]");
            false
        }
    }
}

fn main() {
    let mut all = true;
    all &= line(1, "perfect reconstruction", &criterion_1());
    all &= line(2, "gradient suite", &criterion_2());
    all &= line(3, "IBM oracle equivalence", &criterion_3());
    all &= line(4, "mixer self-consistency", &criterion_4());

    let first = tempfile::tempdir().expect("temp dir");
    let second = tempfile::tempdir().expect("temp dir");
    let titles = ["oracle enhancement", "trend reproduction", "overfit smoke"];
    let artifacts = match runs_5_to_7(first.path()) {
        Ok((verdicts, art)) => {
            for (i, v) in verdicts.into_iter().enumerate() {
                all &= line(5 + i, titles[i], &Ok(v));
            }
            Some(art)
        }
        Err(e) => {
            for (i, t) in titles.iter().enumerate() {
                all &= line(5 + i, t, &Err(e.to_string().into()));
            }
            None
        }
    };
    all &= match &artifacts {
        Some(a) => line(8, "determinism", &criterion_8(a, second.path())),
        None => line(8, "determinism", &Err("first run did not complete".into())),
    };
    all &= line(9, "metric oracles", &criterion_9());

    if !all {
        std::process::exit(1);
    }
}
