//! In-memory recordings and the on-disk recording archive.
//!
//! The archive exists so downstream stages never re-parse EDF. It is a
//! small columnar binary format:
//!
//! ```text
//! magic        b"PSGA"
//! version      u8 (currently 1)
//! subject_id   u16 length + UTF-8 bytes
//! epoch_s      u32        scoring epoch length in seconds
//! n_stages     u64        one u8 stage code per epoch (0..=4 scored, 255 unscored)
//! n_channels   u16
//! per channel: name (u16 length + UTF-8), fs (f64 LE), n (u64), samples (n × f64 LE)
//! ```
//!
//! All integers and floats are little-endian.

use crate::hypnogram::StageLabel;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// One physiological channel: a named amplitude series at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub samples: Vec<f64>,
    pub fs: f64,
}

impl Channel {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// A multichannel PSG recording with its stage annotation track.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub channels: Vec<Channel>,
    /// Per-epoch stage labels; may be empty before annotations are attached.
    pub stages: Vec<StageLabel>,
    pub epoch_seconds: u32,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("not a recording archive (bad magic)")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    BadVersion(u8),
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

const MAGIC: &[u8; 4] = b"PSGA";
const VERSION: u8 = 1;
const UNSCORED_CODE: u8 = 255;

impl Recording {
    /// Attach a hypnogram parsed separately (see [`crate::hypnogram`]).
    pub fn with_stages(mut self, stages: Vec<StageLabel>, epoch_seconds: u32) -> Self {
        self.stages = stages;
        self.epoch_seconds = epoch_seconds;
        self
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Stage of the epoch containing second `t`, `Unscored` past the end of
    /// the annotation track.
    pub fn stage_at(&self, t_seconds: usize) -> StageLabel {
        let epoch = t_seconds / self.epoch_seconds as usize;
        self.stages.get(epoch).copied().unwrap_or(StageLabel::Unscored)
    }

    /// Whole seconds covered by every channel.
    pub fn common_seconds(&self) -> usize {
        self.channels
            .iter()
            .map(|c| (c.samples.len() as f64 / c.fs).floor() as usize)
            .min()
            .unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        write_str(&mut out, &self.subject_id);
        out.extend_from_slice(&self.epoch_seconds.to_le_bytes());
        out.extend_from_slice(&(self.stages.len() as u64).to_le_bytes());
        for &stage in &self.stages {
            out.push(stage.index().map(|i| i as u8).unwrap_or(UNSCORED_CODE));
        }
        out.extend_from_slice(&(self.channels.len() as u16).to_le_bytes());
        for ch in &self.channels {
            write_str(&mut out, &ch.name);
            out.extend_from_slice(&ch.fs.to_le_bytes());
            out.extend_from_slice(&(ch.samples.len() as u64).to_le_bytes());
            for &s in &ch.samples {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&out)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Recording, ArchiveError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Cursor { bytes: &bytes, pos: 0 };
        if r.take(4)? != MAGIC.as_slice() {
            return Err(ArchiveError::BadMagic);
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(ArchiveError::BadVersion(version));
        }
        let subject_id = r.string()?;
        let epoch_seconds = r.u32()?;
        let n_stages = r.u64()? as usize;
        let mut stages = Vec::with_capacity(n_stages);
        for _ in 0..n_stages {
            let code = r.u8()?;
            stages.push(match code {
                UNSCORED_CODE => StageLabel::Unscored,
                i => StageLabel::from_index(i as usize)
                    .ok_or_else(|| ArchiveError::Corrupt(format!("stage code {i}")))?,
            });
        }
        let n_channels = r.u16()? as usize;
        let mut channels = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            let name = r.string()?;
            let fs = r.f64()?;
            let n = r.u64()? as usize;
            let mut samples = Vec::with_capacity(n);
            for _ in 0..n {
                samples.push(r.f64()?);
            }
            channels.push(Channel { name, samples, fs });
        }
        Ok(Recording { subject_id, channels, stages, epoch_seconds })
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        if self.pos + n > self.bytes.len() {
            return Err(ArchiveError::Corrupt("unexpected end of file".to_string()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
    fn u8(&mut self) -> Result<u8, ArchiveError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ArchiveError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ArchiveError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ArchiveError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String, ArchiveError> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| ArchiveError::Corrupt("invalid UTF-8".to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_recording() -> Recording {
        Recording {
            subject_id: "subj-007".to_string(),
            channels: vec![
                Channel { name: "EEG".into(), samples: vec![0.5, -1.25, 3.0], fs: 64.0 },
                Channel { name: "EMG".into(), samples: vec![7.0; 10], fs: 64.0 },
            ],
            stages: vec![StageLabel::Wake, StageLabel::Sws, StageLabel::Unscored],
            epoch_seconds: 30,
        }
    }

    #[test]
    fn archive_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rec.psga");
        let rec = sample_recording();
        rec.save(&path).unwrap();
        let loaded = Recording::load(&path).unwrap();
        assert_eq!(loaded, rec);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.psga");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(Recording::load(&path), Err(ArchiveError::BadMagic)));
    }

    #[test]
    fn stage_at_maps_seconds_to_epochs() {
        let rec = sample_recording();
        assert_eq!(rec.stage_at(0), StageLabel::Wake);
        assert_eq!(rec.stage_at(29), StageLabel::Wake);
        assert_eq!(rec.stage_at(30), StageLabel::Sws);
        assert_eq!(rec.stage_at(65), StageLabel::Unscored);
        assert_eq!(rec.stage_at(1000), StageLabel::Unscored);
    }
}
