//! Tab-separated dataset manifests and utterance-level splitting.
//!
//! One line per mixture: utterance id, clean path, scaled-noise path,
//! mixture path, video path, SNR in dB, split tag. Relative paths are
//! resolved against the manifest's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub clean: PathBuf,
    pub noise: PathBuf,
    pub mixture: PathBuf,
    pub video: PathBuf,
    pub snr_db: f64,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn format_snr(snr: f64) -> String {
    format!("{snr}")
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Manifest { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct utterance ids in sorted order.
    pub fn utterances(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.entries.iter().map(|e| e.utt_id.as_str()).collect();
        ids.into_iter().map(str::to_string).collect()
    }

    pub fn with_split(&self, tag: &str) -> Manifest {
        Manifest::new(
            self.entries
                .iter()
                .filter(|e| e.split == tag)
                .cloned()
                .collect(),
        )
    }

    /// Reads a manifest, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let bad = |line: usize, reason: String| Error::BadManifest {
            path: path.to_path_buf(),
            reason: format!("line {line}: {reason}"),
        };
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(bad(
                    i + 1,
                    format!("expected 7 tab-separated fields, found {}", cols.len()),
                ));
            }
            let snr_db: f64 = cols[5]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad snr `{}`", cols[5])))?;
            let resolve = |p: &str| {
                let p = PathBuf::from(p);
                if p.is_absolute() {
                    p
                } else {
                    root.join(p)
                }
            };
            entries.push(ManifestEntry {
                utt_id: cols[0].to_string(),
                clean: resolve(cols[1]),
                noise: resolve(cols[2]),
                mixture: resolve(cols[3]),
                video: resolve(cols[4]),
                snr_db,
                split: cols[6].to_string(),
            });
        }
        Ok(Manifest { entries })
    }

    /// Writes the manifest; paths under the manifest's directory are stored
    /// relative to it, other relative paths are made absolute so they still
    /// resolve when the file is loaded.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let root = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| -> String {
            if !root.as_os_str().is_empty() {
                if let Ok(r) = p.strip_prefix(root) {
                    return r.to_string_lossy().into_owned();
                }
            }
            let moved = p.is_relative() && !root.as_os_str().is_empty();
            let p = if moved {
                std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
            } else {
                p.to_path_buf()
            };
            p.to_string_lossy().into_owned()
        };
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.utt_id,
                rel(&e.clean),
                rel(&e.noise),
                rel(&e.mixture),
                rel(&e.video),
                format_snr(e.snr_db),
                e.split
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        let fracs = [train_frac, val_frac, test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!(
                "split fractions must lie in [0, 1], got {fracs:?}"
            )));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {fracs:?}"
            )));
        }
        Ok(SplitSpec {
            train_frac,
            val_frac,
            test_frac,
            seed,
        })
    }
}

pub const SPLIT_TAGS: [&str; 3] = ["train", "val", "test"];

/// Shuffles utterance ids with the split seed and cuts them into train,
/// validation and test groups; every mixture of an utterance lands in the
/// same group and is retagged accordingly.
pub fn split(manifest: &Manifest, s: &SplitSpec) -> Result<[Manifest; 3]> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ids = manifest.utterances();
    Rng::new(s.seed).shuffle(&mut ids);
    let n = ids.len();
    let n_train = ((n as f64 * s.train_frac).round() as usize).min(n);
    let n_val = ((n as f64 * s.val_frac).round() as usize).min(n - n_train);
    let group_of = |id: &str| {
        let pos = ids.iter().position(|x| x == id).expect("id from manifest");
        if pos < n_train {
            0
        } else if pos < n_train + n_val {
            1
        } else {
            2
        }
    };
    let mut out: [Manifest; 3] = Default::default();
    for e in &manifest.entries {
        let g = group_of(&e.utt_id);
        let mut e = e.clone();
        e.split = SPLIT_TAGS[g].to_string();
        out[g].entries.push(e);
    }
    Ok(out)
}
