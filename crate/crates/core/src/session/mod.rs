//! Session data model: one subject × task recording.
//!
//! A session holds the four physiological channels, the block placement
//! log and the per-step questionnaire track. [`load_session`] and
//! [`save_session`] read and write the on-disk directory layout;
//! [`frame_stream`] cuts the recording into end-aligned analysis frames.

mod io;
mod labels;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};

pub use io::{load_session, load_sessions, save_session};
pub use labels::{attach_labels, label_from_muir, FrameLabel, TrustLevel};
pub use window::{frame_end_times, frame_stream, window_len, window_slice, AnalysisFrame, WindowingConfig};

/// Number of blocks in a task; also the length of the failure-risk vector.
pub const MAX_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Ecg,
    Gsr,
    EmgLeft,
    EmgRight,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 4] = [
        ChannelKind::Ecg,
        ChannelKind::Gsr,
        ChannelKind::EmgLeft,
        ChannelKind::EmgRight,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            ChannelKind::Ecg => "ecg.csv",
            ChannelKind::Gsr => "gsr.csv",
            ChannelKind::EmgLeft => "emg_left.csv",
            ChannelKind::EmgRight => "emg_right.csv",
        }
    }

    /// Nominal acquisition rate in Hz.
    pub fn nominal_rate_hz(self) -> f64 {
        match self {
            ChannelKind::Ecg | ChannelKind::Gsr => 125.0,
            ChannelKind::EmgLeft | ChannelKind::EmgRight => 1260.0,
        }
    }

    pub fn is_emg(self) -> bool {
        matches!(self, ChannelKind::EmgLeft | ChannelKind::EmgRight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    LD,
    MD,
    HD,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::LD, Difficulty::MD, Difficulty::HD];
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Difficulty::LD => "LD",
            Difficulty::MD => "MD",
            Difficulty::HD => "HD",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalChannel {
    pub kind: ChannelKind,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub t0_ms: i64,
}

impl SignalChannel {
    /// Timestamp just past the last sample.
    pub fn end_ms(&self) -> f64 {
        self.t0_ms as f64 + self.samples.len() as f64 * 1000.0 / self.sample_rate_hz
    }
}

/// One block placed during the task. Coordinates are in block widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlacement {
    pub step_index: u32,
    pub layer: u32,
    pub x_center: f64,
    #[serde(default)]
    pub support_centers: Vec<f64>,
    pub timestamp_ms: i64,
    #[serde(default)]
    pub collapsed_after: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub step_index: u32,
    pub timestamp_ms: i64,
    pub muir_mean: f64,
    #[serde(default)]
    pub nasa_tlx_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelTrack {
    pub entries: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRates {
    pub ecg: f64,
    pub gsr: f64,
    pub emg_left: f64,
    pub emg_right: f64,
}

impl ChannelRates {
    pub fn nominal() -> Self {
        ChannelRates {
            ecg: ChannelKind::Ecg.nominal_rate_hz(),
            gsr: ChannelKind::Gsr.nominal_rate_hz(),
            emg_left: ChannelKind::EmgLeft.nominal_rate_hz(),
            emg_right: ChannelKind::EmgRight.nominal_rate_hz(),
        }
    }

    pub fn get(&self, kind: ChannelKind) -> f64 {
        match kind {
            ChannelKind::Ecg => self.ecg,
            ChannelKind::Gsr => self.gsr,
            ChannelKind::EmgLeft => self.emg_left,
            ChannelKind::EmgRight => self.emg_right,
        }
    }
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub subject_id: String,
    pub difficulty: Difficulty,
    pub rates: ChannelRates,
    pub t0_ms: i64,
    /// Trigger marking the end of the stacking phase; data after it is the
    /// post-task rest period.
    #[serde(default)]
    pub task_end_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub meta: SessionMeta,
    /// Indexed in [`ChannelKind::ALL`] order.
    pub channels: [SignalChannel; 4],
    pub placements: Vec<BlockPlacement>,
    pub labels: LabelTrack,
}

impl Session {
    pub fn channel(&self, kind: ChannelKind) -> &SignalChannel {
        &self.channels[kind as usize]
    }

    /// Time range covered by all four channels.
    pub fn span_ms(&self) -> (f64, f64) {
        let start = self.channels.iter().map(|c| c.t0_ms as f64).fold(f64::MIN, f64::max);
        let end = self.channels.iter().map(|c| c.end_ms()).fold(f64::MAX, f64::min);
        (start, end)
    }

    /// Checks every structural invariant of a session.
    pub fn validate(&self) -> Result<()> {
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.kind != ChannelKind::ALL[i] {
                return Err(validation_err!("channel slot {i} holds {:?}", ch.kind));
            }
            if !(ch.sample_rate_hz > 0.0) || !ch.sample_rate_hz.is_finite() {
                return Err(validation_err!("{:?}: sample rate must be positive", ch.kind));
            }
            if ch.samples.is_empty() {
                return Err(validation_err!("{:?}: no samples", ch.kind));
            }
            if let Some(bad) = ch.samples.iter().position(|v| !v.is_finite()) {
                return Err(validation_err!("{:?}: non-finite sample at {bad}", ch.kind));
            }
        }
        validate_placements(&self.placements)?;
        validate_labels(&self.labels, &self.placements)
    }
}

fn validate_placements(placements: &[BlockPlacement]) -> Result<()> {
    if placements.len() > MAX_STEPS {
        return Err(validation_err!("{} placements exceed {MAX_STEPS}", placements.len()));
    }
    let mut prev_ts = i64::MIN;
    for (i, p) in placements.iter().enumerate() {
        let expected = i as u32 + 1;
        if p.step_index != expected {
            return Err(validation_err!(
                "placement step_index {} where {expected} expected",
                p.step_index
            ));
        }
        if p.timestamp_ms < prev_ts {
            return Err(validation_err!("placement timestamps decrease at step {}", p.step_index));
        }
        prev_ts = p.timestamp_ms;
        if p.layer == 0 {
            return Err(validation_err!("step {}: layer must be >= 1", p.step_index));
        }
        if p.support_centers.len() > 2 {
            return Err(validation_err!("step {}: more than two supports", p.step_index));
        }
        if p.layer > 1 && p.support_centers.is_empty() {
            return Err(validation_err!("step {}: layer {} without supports", p.step_index, p.layer));
        }
        if p.collapsed_after && i + 1 != placements.len() {
            return Err(validation_err!("collapse at step {} is not the last placement", p.step_index));
        }
    }
    Ok(())
}

fn validate_labels(track: &LabelTrack, placements: &[BlockPlacement]) -> Result<()> {
    if track.entries.is_empty() {
        return Err(Error::Validation("label track is empty".into()));
    }
    let mut prev_step = 0;
    let mut prev_ts = i64::MIN;
    for e in &track.entries {
        if e.step_index <= prev_step {
            return Err(validation_err!("label step_index {} not increasing", e.step_index));
        }
        if !placements.iter().any(|p| p.step_index == e.step_index) {
            return Err(validation_err!("label for step {} without a placement", e.step_index));
        }
        if e.timestamp_ms < prev_ts {
            return Err(validation_err!("label timestamps decrease at step {}", e.step_index));
        }
        if !(1.0..=7.0).contains(&e.muir_mean) {
            return Err(validation_err!("muir_mean {} outside [1, 7]", e.muir_mean));
        }
        prev_step = e.step_index;
        prev_ts = e.timestamp_ms;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Small hand-built session: constant signals, three placements.
    pub(crate) fn tiny_session(duration_ms: i64) -> Session {
        let channels = ChannelKind::ALL.map(|kind| {
            let rate = kind.nominal_rate_hz();
            let n = (duration_ms as f64 * rate / 1000.0).floor() as usize;
            SignalChannel {
                kind,
                sample_rate_hz: rate,
                samples: (0..n).map(|i| (i % 7) as f64 * 0.1).collect(),
                t0_ms: 0,
            }
        });
        let placements = vec![
            BlockPlacement {
                step_index: 1,
                layer: 1,
                x_center: 0.0,
                support_centers: vec![],
                timestamp_ms: 1000,
                collapsed_after: false,
            },
            BlockPlacement {
                step_index: 2,
                layer: 2,
                x_center: 0.1,
                support_centers: vec![0.0],
                timestamp_ms: 2000,
                collapsed_after: false,
            },
            BlockPlacement {
                step_index: 3,
                layer: 3,
                x_center: 0.3,
                support_centers: vec![0.1],
                timestamp_ms: 3000,
                collapsed_after: false,
            },
        ];
        let labels = LabelTrack {
            entries: placements
                .iter()
                .map(|p| LabelEntry {
                    step_index: p.step_index,
                    timestamp_ms: p.timestamp_ms + 200,
                    muir_mean: 2.0 + p.step_index as f64,
                    nasa_tlx_mean: None,
                })
                .collect(),
        };
        Session {
            meta: SessionMeta {
                subject_id: "s0".into(),
                difficulty: Difficulty::MD,
                rates: ChannelRates::nominal(),
                t0_ms: 0,
                task_end_ms: Some(3500),
            },
            channels,
            placements,
            labels,
        }
    }

    #[test]
    fn tiny_session_is_valid() {
        tiny_session(10_000).validate().unwrap();
    }

    #[test]
    fn step_gap_is_rejected() {
        let mut s = tiny_session(10_000);
        s.placements.remove(1);
        s.labels.entries.remove(1);
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn collapse_must_be_last() {
        let mut s = tiny_session(10_000);
        s.placements[1].collapsed_after = true;
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
        s.placements[1].collapsed_after = false;
        s.placements[2].collapsed_after = true;
        s.validate().unwrap();
    }

    #[test]
    fn unsupported_upper_block_is_rejected() {
        let mut s = tiny_session(10_000);
        s.placements[2].support_centers.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn label_out_of_scale_is_rejected() {
        let mut s = tiny_session(10_000);
        s.labels.entries[0].muir_mean = 7.5;
        assert!(s.validate().is_err());
    }
}
