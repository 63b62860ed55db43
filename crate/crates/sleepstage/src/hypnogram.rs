//! Sleep stage labels and plain-text hypnogram parsing.
//!
//! Hypnograms arrive as text files with one stage code per scoring epoch
//! (30 s by convention). Codes follow the St. Vincent's / UCD convention by
//! default: `0` wake, `1` REM, `2` stage 1, `3` stage 2, `4` stage 3,
//! `5` stage 4. Stages 3 and 4 are merged into slow-wave sleep, so the
//! working label set is five classes plus `Unscored`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Five-class sleep stage, plus a marker for epochs the scorer left
/// undecided. Unscorable epochs are kept through ingestion and excluded
/// later by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageLabel {
    Wake,
    S1,
    S2,
    /// Slow-wave sleep: the merge of source stages 3 and 4.
    Sws,
    Rem,
    Unscored,
}

impl StageLabel {
    /// Class index used throughout training and scoring. `None` for
    /// [`StageLabel::Unscored`].
    pub fn index(self) -> Option<usize> {
        match self {
            StageLabel::Wake => Some(0),
            StageLabel::S1 => Some(1),
            StageLabel::S2 => Some(2),
            StageLabel::Sws => Some(3),
            StageLabel::Rem => Some(4),
            StageLabel::Unscored => None,
        }
    }

    pub fn from_index(idx: usize) -> Option<StageLabel> {
        match idx {
            0 => Some(StageLabel::Wake),
            1 => Some(StageLabel::S1),
            2 => Some(StageLabel::S2),
            3 => Some(StageLabel::Sws),
            4 => Some(StageLabel::Rem),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StageLabel::Wake => "W",
            StageLabel::S1 => "S1",
            StageLabel::S2 => "S2",
            StageLabel::Sws => "SWS",
            StageLabel::Rem => "REM",
            StageLabel::Unscored => "?",
        }
    }
}

impl std::fmt::Display for StageLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Names of the five scored stages, indexed by [`StageLabel::index`].
pub const STAGE_NAMES: [&str; 5] = ["W", "S1", "S2", "SWS", "REM"];

#[derive(Debug, Error)]
pub enum HypnogramError {
    #[error("annotation file contains no stage codes")]
    EmptyAnnotation,
    #[error("unknown stage code {code:?} on line {line}")]
    UnknownCode { code: String, line: usize },
}

/// Mapping from source stage codes to labels.
#[derive(Debug, Clone)]
pub struct StageCodeMap {
    codes: BTreeMap<String, StageLabel>,
}

impl Default for StageCodeMap {
    /// St. Vincent's / UCD sleep-disordered-breathing database convention.
    fn default() -> Self {
        let mut codes = BTreeMap::new();
        codes.insert("0".to_string(), StageLabel::Wake);
        codes.insert("1".to_string(), StageLabel::Rem);
        codes.insert("2".to_string(), StageLabel::S1);
        codes.insert("3".to_string(), StageLabel::S2);
        // Source stages 3 and 4 both map to slow-wave sleep.
        codes.insert("4".to_string(), StageLabel::Sws);
        codes.insert("5".to_string(), StageLabel::Sws);
        StageCodeMap { codes }
    }
}

impl StageCodeMap {
    pub fn new(codes: BTreeMap<String, StageLabel>) -> Self {
        StageCodeMap { codes }
    }

    pub fn lookup(&self, code: &str) -> Option<StageLabel> {
        self.codes.get(code).copied()
    }
}

/// Parse a hypnogram text file: one stage code per epoch line.
///
/// Unknown codes map to [`StageLabel::Unscored`] unless `strict` is set, in
/// which case they are an error. Blank lines are skipped. The epoch length
/// is carried by the caller (the file has no timing information).
pub fn parse_hypnogram(
    text: &str,
    map: &StageCodeMap,
    strict: bool,
) -> Result<Vec<StageLabel>, HypnogramError> {
    let mut stages = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let code = line.trim();
        if code.is_empty() {
            continue;
        }
        match map.lookup(code) {
            Some(label) => stages.push(label),
            None if strict => {
                return Err(HypnogramError::UnknownCode {
                    code: code.to_string(),
                    line: line_no + 1,
                })
            }
            None => stages.push(StageLabel::Unscored),
        }
    }
    if stages.is_empty() {
        return Err(HypnogramError::EmptyAnnotation);
    }
    Ok(stages)
}
