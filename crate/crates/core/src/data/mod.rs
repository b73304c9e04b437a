//! Dataset plumbing: file formats, mixing, alignment, records and the
//! synthetic corpus.

pub mod manifest;
pub mod mix;
pub mod records;
pub mod synth;
pub mod video;
pub mod wav;

pub use manifest::{split, Manifest, ManifestEntry, SplitSpec};
pub use mix::{mix_at_snr, MixtureTriple};
pub use records::{
    assemble_records, make_batch, Batch, RecordMeta, SampleRecord, UtteranceFeatures,
};
pub use synth::{synth_toy_dataset, synth_utterance, SynthConfig};
pub use video::{align_video, load_video_tensor, save_video_tensor, VideoSequence};
pub use wav::{load_wav, save_wav};
