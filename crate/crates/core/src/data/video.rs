//! Lip-region frame sequences, frame-rate alignment and the LIPV file format.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LIPV";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Grayscale frames in [0, 1], stored frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pixels: Vec<f64>,
    frames: usize,
    height: usize,
    width: usize,
    fps: f64,
}

impl VideoSequence {
    pub fn new(
        pixels: Vec<f64>,
        frames: usize,
        height: usize,
        width: usize,
        fps: f64,
    ) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Config(format!(
                "video fps must be positive, got {fps}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::shape(format!(
                "video frames must be non-empty, got {height}x{width}"
            )));
        }
        if pixels.len() != frames * height * width {
            return Err(Error::shape(format!(
                "{} pixels for {frames} frames of {height}x{width}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("video pixels must lie in [0, 1]".into()));
        }
        Ok(VideoSequence {
            pixels,
            frames,
            height,
            width,
            fps,
        })
    }

    /// 8-bit pixels, normalized by 255.
    pub fn from_bytes(
        bytes: &[u8],
        frames: usize,
        height: usize,
        width: usize,
        fps: f64,
    ) -> Result<Self> {
        VideoSequence::new(
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
            frames,
            height,
            width,
            fps,
        )
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Source frame shown at output frame `j`: the latest input frame whose
/// start time does not exceed `j / target_fps`.
pub fn source_index(j: usize, fps: f64, target_fps: f64) -> usize {
    // The epsilon absorbs ratios such as 25/75 that are not exact in binary.
    (j as f64 * fps / target_fps + 1e-9).floor() as usize
}

/// Repeats frames so the sequence runs at `target_fps`, covering the same
/// duration as the input.
pub fn align_video(v: &VideoSequence, target_fps: f64) -> Result<VideoSequence> {
    if !(target_fps.is_finite() && target_fps > 0.0) {
        return Err(Error::Config(format!(
            "target fps must be positive, got {target_fps}"
        )));
    }
    if target_fps < v.fps {
        return Err(Error::DownsampleUnsupported {
            from: v.fps,
            to: target_fps,
        });
    }
    let out_frames = (v.frames as f64 * target_fps / v.fps - 1e-9)
        .ceil()
        .max(0.0) as usize;
    let mut pixels = Vec::with_capacity(out_frames * v.height * v.width);
    for j in 0..out_frames {
        let src = source_index(j, v.fps, target_fps).min(v.frames - 1);
        pixels.extend_from_slice(v.frame(src));
    }
    Ok(VideoSequence {
        pixels,
        frames: out_frames,
        height: v.height,
        width: v.width,
        fps: target_fps,
    })
}

/// Writes `LIPV | u32 version | u32 T | u32 H | u32 W | f32 fps | T*H*W f32`.
pub fn save_video_tensor(path: impl AsRef<Path>, v: &VideoSequence) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * v.pixels.len());
    buf.extend_from_slice(MAGIC);
    for n in [VERSION, v.frames as u32, v.height as u32, v.width as u32] {
        buf.extend_from_slice(&n.to_le_bytes());
    }
    buf.extend_from_slice(&(v.fps as f32).to_le_bytes());
    for &p in &v.pixels {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_video_tensor(path: impl AsRef<Path>) -> Result<VideoSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::BadVideoFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing LIPV header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let version = word(1);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (t, h, w) = (word(2) as usize, word(3) as usize, word(4) as usize);
    let fps = f32::from_le_bytes(bytes[20..24].try_into().unwrap()) as f64;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * t * h * w {
        return Err(bad(format!(
            "header says {t}x{h}x{w} but payload holds {} bytes",
            payload.len()
        )));
    }
    let pixels = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    VideoSequence::new(pixels, t, h, w, fps).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn numbered(frames: usize, fps: f64) -> VideoSequence {
        // Each 1x1 frame holds its own index, scaled into [0, 1].
        let px = (0..frames).map(|i| i as f64 / frames as f64).collect();
        VideoSequence::new(px, frames, 1, 1, fps).unwrap()
    }

    fn indices(v: &VideoSequence, of: usize) -> Vec<usize> {
        v.pixels()
            .iter()
            .map(|p| (p * of as f64).round() as usize)
            .collect()
    }

    #[test]
    fn triples_25_to_75() {
        let a = align_video(&numbered(4, 25.0), 75.0).unwrap();
        assert_eq!(indices(&a, 4), vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert_eq!(a.fps(), 75.0);
    }

    #[test]
    fn same_rate_is_identity() {
        let v = numbered(7, 30.0);
        assert_eq!(align_video(&v, 30.0).unwrap(), v);
    }

    #[test]
    fn downsampling_is_rejected() {
        assert!(matches!(
            align_video(&numbered(3, 25.0), 20.0),
            Err(Error::DownsampleUnsupported { .. })
        ));
    }

    #[test]
    fn audio_frame_rate_matches_timestamp_oracle() {
        let target = 16000.0 / 300.0;
        let a = align_video(&numbered(25, 25.0), target).unwrap();
        let got = indices(&a, 25);
        assert_eq!(got.len(), 54);
        for (j, &src) in got.iter().enumerate() {
            // Latest source frame starting no later than output frame j.
            let t = j as f64 / target;
            let expect = (0..25)
                .filter(|&i| i as f64 / 25.0 <= t + 1e-12)
                .max()
                .unwrap();
            assert_eq!(src, expect, "frame {j}");
        }
    }

    #[test]
    fn source_indices_are_monotone_and_cover() {
        let mut rng = Rng::new(2);
        for _ in 0..50 {
            let frames = 1 + rng.below(40);
            let fps = rng.range(5.0, 40.0);
            let target = fps * rng.range(1.0, 7.0);
            let got = indices(
                &align_video(&numbered(frames, fps), target).unwrap(),
                frames,
            );
            assert!(got.windows(2).all(|w| w[0] <= w[1] && w[1] - w[0] <= 1));
            assert_eq!(got[0], 0);
            assert_eq!(*got.last().unwrap(), frames - 1);
        }
    }

    #[test]
    fn file_round_trip_and_header_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.lipv");
        let mut rng = Rng::new(3);
        let px: Vec<f64> = (0..3 * 50 * 92)
            .map(|_| rng.uniform() as f32 as f64)
            .collect();
        let v = VideoSequence::new(px, 3, 50, 92, 25.0).unwrap();
        save_video_tensor(&path, &v).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"LIPV");
        assert_eq!(bytes.len(), 24 + 4 * 3 * 50 * 92);
        assert_eq!(load_video_tensor(&path).unwrap(), v);

        let mut broken = bytes.clone();
        broken[8] = 4;
        fs::write(&path, &broken).unwrap();
        assert!(matches!(
            load_video_tensor(&path),
            Err(Error::BadVideoFile { .. })
        ));
        broken = bytes.clone();
        broken[0] = b'X';
        fs::write(&path, &broken).unwrap();
        assert!(matches!(
            load_video_tensor(&path),
            Err(Error::BadVideoFile { .. })
        ));
    }

    #[test]
    fn byte_pixels_are_normalized() {
        let v = VideoSequence::from_bytes(&[0, 255, 51, 102], 1, 2, 2, 25.0).unwrap();
        assert_eq!(v.pixels(), &[0.0, 1.0, 0.2, 0.4]);
        assert!(VideoSequence::new(vec![1.5], 1, 1, 1, 25.0).is_err());
        assert!(VideoSequence::new(vec![0.5], 1, 1, 1, 0.0).is_err());
    }
}
