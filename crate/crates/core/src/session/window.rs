use serde::{Deserialize, Serialize};

use super::labels::{label_at, FrameLabel};
use super::{ChannelKind, Session, SignalChannel};
use crate::cp::{failure_risk_vector, FailureRiskVector, DEFAULT_GAMMA};
use crate::error::{Error, Result};

/// Differential window settings. All modalities share one hop grid so their
/// windows end at the same timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowingConfig {
    pub ecg_gsr_window_ms: i64,
    pub emg_window_ms: i64,
    pub hop_ms: i64,
    /// Discount used for the failure-risk vector attached to each frame.
    pub cp_gamma: f64,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        WindowingConfig {
            ecg_gsr_window_ms: 3000,
            emg_window_ms: 216,
            hop_ms: 108,
            cp_gamma: DEFAULT_GAMMA,
        }
    }
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_ms <= 0 || self.emg_window_ms <= 0 || self.ecg_gsr_window_ms <= 0 {
            return Err(Error::Config("window and hop lengths must be positive".into()));
        }
        if self.emg_window_ms > self.ecg_gsr_window_ms {
            return Err(Error::Config("EMG window longer than ECG/GSR window".into()));
        }
        if !(self.cp_gamma > 0.0 && self.cp_gamma < 1.0) {
            return Err(Error::Config(format!("cp_gamma {} outside (0, 1)", self.cp_gamma)));
        }
        Ok(())
    }

    /// Number of EMG windows a frame holds once the history is full.
    pub fn emg_windows_per_frame(&self) -> usize {
        (self.ecg_gsr_window_ms / self.hop_ms) as usize
    }
}

/// One end-aligned multimodal window bundle. Signal slices borrow from the
/// session.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisFrame<'a> {
    pub end_ms: i64,
    pub ecg: &'a [f64],
    pub gsr: &'a [f64],
    /// EMG windows on the hop grid, oldest first, the newest ending at `end_ms`.
    pub emg_left: Vec<&'a [f64]>,
    pub emg_right: Vec<&'a [f64]>,
    pub cp: FailureRiskVector,
    pub label: FrameLabel,
}

/// Samples in a window of `window_ms` at `rate_hz`.
pub fn window_len(rate_hz: f64, window_ms: i64) -> usize {
    (window_ms as f64 * rate_hz / 1000.0).round() as usize
}

/// Last `window_len` samples before the sample index that `end_ms` maps to.
///
/// The end index is `floor((end_ms - t0_ms) * rate / 1000)` and is exclusive,
/// so a 3000 ms ECG window ending 3000 ms after `t0` is samples `0..375`.
pub fn window_slice(channel: &SignalChannel, end_ms: i64, window_ms: i64) -> Result<&[f64]> {
    let w = window_len(channel.sample_rate_hz, window_ms);
    let rel = end_ms - channel.t0_ms;
    if rel < window_ms {
        return Err(Error::NotEnoughSamples {
            needed: w,
            available: (rel.max(0) as f64 * channel.sample_rate_hz / 1000.0).floor() as usize,
        });
    }
    let end = (rel as f64 * channel.sample_rate_hz / 1000.0).floor() as usize;
    if end < w || end > channel.samples.len() {
        return Err(Error::NotEnoughSamples {
            needed: end.max(w),
            available: channel.samples.len().min(end),
        });
    }
    Ok(&channel.samples[end - w..end])
}

/// End timestamps of every frame in the session: the first full ECG/GSR
/// window, then every hop while the data lasts.
pub fn frame_end_times(session: &Session, cfg: &WindowingConfig) -> Vec<i64> {
    let (start, end) = session.span_ms();
    let first = start.ceil() as i64 + cfg.ecg_gsr_window_ms;
    (0..)
        .map(|j| first + j * cfg.hop_ms)
        .take_while(|&t| t as f64 <= end)
        .collect()
}

/// Cuts a session into labeled analysis frames. Sessions shorter than one
/// ECG/GSR window yield no frames.
pub fn frame_stream<'a>(session: &'a Session, cfg: &WindowingConfig) -> Result<Vec<AnalysisFrame<'a>>> {
    cfg.validate()?;
    let ecg = session.channel(ChannelKind::Ecg);
    let gsr = session.channel(ChannelKind::Gsr);
    let emg_l = session.channel(ChannelKind::EmgLeft);
    let emg_r = session.channel(ChannelKind::EmgRight);
    let k0 = cfg.emg_windows_per_frame();

    frame_end_times(session, cfg)
        .into_iter()
        .map(|end_ms| {
            let emg_windows = |ch: &'a SignalChannel| -> Vec<&'a [f64]> {
                (0..k0)
                    .rev()
                    .map(|k| end_ms - k as i64 * cfg.hop_ms)
                    .filter_map(|t| window_slice(ch, t, cfg.emg_window_ms).ok())
                    .collect()
            };
            let label = label_at(&session.labels, end_ms)
                .ok_or_else(|| Error::Validation("session has no labels".into()))?;
            Ok(AnalysisFrame {
                end_ms,
                ecg: window_slice(ecg, end_ms, cfg.ecg_gsr_window_ms)?,
                gsr: window_slice(gsr, end_ms, cfg.ecg_gsr_window_ms)?,
                emg_left: emg_windows(emg_l),
                emg_right: emg_windows(emg_r),
                cp: failure_risk_vector(&session.placements, end_ms, cfg.cp_gamma)?,
                label,
            })
        })
        .collect()
}
