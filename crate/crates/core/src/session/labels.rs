use serde::{Deserialize, Serialize};

use super::{AnalysisFrame, LabelEntry, LabelTrack};
use crate::error::{validation_err, Result};

/// Three-level trust bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrustLevel {
    Low,
    Medium,
    High,
}

impl TrustLevel {
    /// Class id used by the three-way classifier head.
    pub fn class_id(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLabel {
    /// Step of the questionnaire entry this label came from.
    pub step_index: u32,
    pub muir_mean: f64,
    /// 1..=7.
    pub label7: u8,
    pub label3: TrustLevel,
}

impl FrameLabel {
    /// Zero-based class id for a head with `n_classes` outputs (3 or 7).
    pub fn class_id(&self, n_classes: usize) -> usize {
        if n_classes == 3 {
            self.label3.class_id()
        } else {
            self.label7 as usize - 1
        }
    }

    fn from_entry(e: &LabelEntry) -> Self {
        // Entries are validated at load time, so the mean is on the scale.
        let (label7, label3) = label_from_muir(e.muir_mean).expect("muir_mean validated");
        FrameLabel {
            step_index: e.step_index,
            muir_mean: e.muir_mean,
            label7,
            label3,
        }
    }
}

/// Maps a Muir questionnaire mean onto the seven- and three-level labels.
///
/// Both labels are derived from the raw mean independently: the seven-level
/// label rounds half up, the three-level label bins at 3 and 5.
pub fn label_from_muir(muir_mean: f64) -> Result<(u8, TrustLevel)> {
    if !(1.0..=7.0).contains(&muir_mean) {
        return Err(validation_err!("muir_mean {muir_mean} outside [1, 7]"));
    }
    let label7 = (muir_mean + 0.5).floor().clamp(1.0, 7.0) as u8;
    let label3 = if muir_mean < 3.0 {
        TrustLevel::Low
    } else if muir_mean < 5.0 {
        TrustLevel::Medium
    } else {
        TrustLevel::High
    };
    Ok((label7, label3))
}

/// Label in force at `t_ms`: the latest entry at or before it, or the first
/// entry for times before any questionnaire.
pub(crate) fn label_at(track: &LabelTrack, t_ms: i64) -> Option<FrameLabel> {
    let idx = track.entries.partition_point(|e| e.timestamp_ms <= t_ms);
    let entry = track.entries.get(idx.saturating_sub(1))?;
    Some(FrameLabel::from_entry(entry))
}

/// Assigns each frame the labels of the questionnaire entry in force at its
/// end time.
pub fn attach_labels(frames: &mut [AnalysisFrame<'_>], track: &LabelTrack) {
    for frame in frames {
        if let Some(label) = label_at(track, frame.end_ms) {
            frame.label = label;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn muir_mapping_examples() {
        assert_eq!(label_from_muir(4.2).unwrap(), (4, TrustLevel::Medium));
        assert_eq!(label_from_muir(1.0).unwrap(), (1, TrustLevel::Low));
        assert_eq!(label_from_muir(4.99).unwrap(), (5, TrustLevel::Medium));
        assert_eq!(label_from_muir(4.5).unwrap(), (5, TrustLevel::Medium));
        assert_eq!(label_from_muir(5.0).unwrap(), (5, TrustLevel::High));
        assert_eq!(label_from_muir(2.99).unwrap(), (3, TrustLevel::Low));
        assert_eq!(label_from_muir(7.0).unwrap(), (7, TrustLevel::High));
    }

    #[test]
    fn muir_out_of_range() {
        assert!(label_from_muir(0.99).is_err());
        assert!(label_from_muir(7.01).is_err());
        assert!(label_from_muir(f64::NAN).is_err());
    }

    fn track() -> LabelTrack {
        LabelTrack {
            entries: vec![
                LabelEntry {
                    step_index: 1,
                    timestamp_ms: 10_000,
                    muir_mean: 3.0,
                    nasa_tlx_mean: None,
                },
                LabelEntry {
                    step_index: 2,
                    timestamp_ms: 20_000,
                    muir_mean: 6.0,
                    nasa_tlx_mean: Some(4.0),
                },
            ],
        }
    }

    #[test]
    fn step_function_rule() {
        let t = track();
        assert_eq!(label_at(&t, 15_000).unwrap().muir_mean, 3.0);
        assert_eq!(label_at(&t, 5_000).unwrap().muir_mean, 3.0);
        assert_eq!(label_at(&t, 20_000).unwrap().muir_mean, 6.0);
        assert_eq!(label_at(&t, 19_999).unwrap().step_index, 1);
        assert!(label_at(&LabelTrack::default(), 0).is_none());
    }
}
