use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window length the ECG/GSR slices and the EMG pseudo-channels share.
pub const SIGNAL_LEN: usize = 375;
/// Grid count of EMG windows per frame (3000 ms / 108 ms).
pub const EMG_WINDOWS: usize = 27;
pub const EMG_WINDOW_LEN: usize = 272;
pub const N_CHANNELS: usize = 4;
pub const CP_TOKENS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Plain blocks interleaved with cross-attention fusion blocks.
    Fusion,
    /// CP tokens appended to the physiological tokens; plain blocks only.
    ConcatBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub ffn_mult: usize,
    pub patch_len: usize,
    /// Plain blocks per group before its fusion block.
    pub plain_per_group: usize,
    pub groups: usize,
    pub rel_pos_max_dist: usize,
    pub n_classes: usize,
    pub cp_guidance: bool,
    pub dropout: f64,
    /// Per-window hidden width of the EMG length-matching network.
    pub emg_hidden: usize,
    pub architecture: Architecture,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            ffn_mult: 4,
            patch_len: 25,
            plain_per_group: 3,
            groups: 2,
            rel_pos_max_dist: 16,
            n_classes: 3,
            cp_guidance: true,
            dropout: 0.0,
            emg_hidden: 4,
            architecture: Architecture::Fusion,
        }
    }
}

impl ModelConfig {
    /// Full depth: six groups of three plain blocks and one fusion block.
    pub fn full() -> Self {
        ModelConfig {
            groups: 6,
            plain_per_group: 3,
            ..Default::default()
        }
    }

    /// One plain and one fusion block at width 16; trains a five-subject
    /// cohort in minutes on one core.
    pub fn compact() -> Self {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            ffn_mult: 2,
            plain_per_group: 1,
            groups: 1,
            rel_pos_max_dist: 8,
            emg_hidden: 8,
            ..Default::default()
        }
    }

    /// Two groups of one plain and one fusion block at width 64.
    pub fn desk() -> Self {
        ModelConfig {
            groups: 2,
            plain_per_group: 1,
            ..Default::default()
        }
    }

    /// Total block count `(L + 1) × G`.
    pub fn depth(&self) -> usize {
        (self.plain_per_group + 1) * self.groups
    }

    pub fn patches_per_channel(&self) -> usize {
        SIGNAL_LEN / self.patch_len
    }

    pub fn physio_tokens(&self) -> usize {
        N_CHANNELS * self.patches_per_channel()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Whether block `i` (0-based) is the fusion block closing its group.
    pub fn is_fusion_block(&self, i: usize) -> bool {
        self.architecture == Architecture::Fusion && (i + 1).is_multiple_of(self.plain_per_group + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.patch_len == 0 || !SIGNAL_LEN.is_multiple_of(self.patch_len) {
            return bad(format!("patch_len {} does not divide {SIGNAL_LEN}", self.patch_len));
        }
        if self.n_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.groups == 0 || self.ffn_mult == 0 || self.emg_hidden == 0 {
            return bad("groups, ffn_mult and emg_hidden must be positive".into());
        }
        if !(self.n_classes == 3 || self.n_classes == 7) {
            return bad(format!("n_classes must be 3 or 7, got {}", self.n_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
