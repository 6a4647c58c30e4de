//! Collaboration-performance scoring.
//!
//! Each placed block gets a skew score: its horizontal offset from the
//! support center, weighted by layer (base-layer blocks score zero). The
//! failure-risk vector holds, for each stacked step `n`, the discounted sum
//! `S_n + γ S_{n-1} + … + γ^{n-1} S_1`. Unstacked slots hold `-1`; after a
//! collapse at step `n`, slots `n..=10` hold `-2`.

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};
use crate::session::{BlockPlacement, MAX_STEPS};

pub const DEFAULT_GAMMA: f64 = 0.8;
pub const UNSTACKED: f64 = -1.0;
pub const COLLAPSED: f64 = -2.0;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SkewScore(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRiskVector {
    pub f: [f64; MAX_STEPS],
    pub gamma: f64,
    pub n_stacked: usize,
    pub collapsed: bool,
}

impl FailureRiskVector {
    pub fn empty(gamma: f64) -> Self {
        FailureRiskVector {
            f: [UNSTACKED; MAX_STEPS],
            gamma,
            n_stacked: 0,
            collapsed: false,
        }
    }

    /// Risk of the most recent stacked step, if any step holds a risk value.
    pub fn latest(&self) -> Option<f64> {
        self.f[..self.n_stacked].iter().rev().copied().find(|v| *v >= 0.0)
    }
}

/// Horizontal support center: the single support, or the mean of two.
pub fn support_center(support_centers: &[f64]) -> Result<f64> {
    match support_centers {
        [x] => Ok(*x),
        [a, b] => Ok((a + b) / 2.0),
        other => Err(validation_err!(
            "a block rests on one or two supports, got {}",
            other.len()
        )),
    }
}

pub fn block_skew(p: &BlockPlacement) -> Result<SkewScore> {
    match p.layer {
        0 => Err(validation_err!("step {}: layer must be >= 1", p.step_index)),
        1 => Ok(SkewScore(0.0)),
        layer => {
            let xs = support_center(&p.support_centers)?;
            Ok(SkewScore((p.x_center - xs).abs() * layer as f64))
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("discount factor {gamma} outside (0, 1)")))
    }
}

/// One step of the discounted recursion: `F_n = S_n + γ F_{n-1}`.
pub fn failure_risk_step(prev: f64, s_n: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(s_n + gamma * prev)
}

/// Failure-risk vector using placements with `timestamp_ms <= upto_ms`.
pub fn failure_risk_vector(
    placements: &[BlockPlacement],
    upto_ms: i64,
    gamma: f64,
) -> Result<FailureRiskVector> {
    check_gamma(gamma)?;
    let mut out = FailureRiskVector::empty(gamma);
    let mut prev = 0.0;
    for (slot, p) in placements
        .iter()
        .take_while(|p| p.timestamp_ms <= upto_ms)
        .take(MAX_STEPS)
        .enumerate()
    {
        prev = failure_risk_step(prev, block_skew(p)?.0, gamma)?;
        out.f[slot] = prev;
        out.n_stacked = slot + 1;
        if p.collapsed_after {
            out.f[slot..].fill(COLLAPSED);
            out.collapsed = true;
            break;
        }
    }
    Ok(out)
}

/// Per-step skew and running risk, before any collapse overwrite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step_index: u32,
    pub timestamp_ms: i64,
    pub skew: f64,
    pub risk: f64,
    pub collapsed_after: bool,
}

pub fn failure_risk_trace(placements: &[BlockPlacement], gamma: f64) -> Result<Vec<TraceRow>> {
    check_gamma(gamma)?;
    let mut prev = 0.0;
    placements
        .iter()
        .map(|p| {
            let skew = block_skew(p)?.0;
            prev = failure_risk_step(prev, skew, gamma)?;
            Ok(TraceRow {
                step_index: p.step_index,
                timestamp_ms: p.timestamp_ms,
                skew,
                risk: prev,
                collapsed_after: p.collapsed_after,
            })
        })
        .collect()
}
