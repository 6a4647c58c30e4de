use serde::{Deserialize, Serialize};

use super::{run_split, Dataset, MetricsReport, TrainConfig};
use crate::error::{validation_err, Result};
use crate::model::{ModelConfig, SignalMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub signal_mask: SignalMask,
    pub cp_guidance: bool,
    pub n_classes: usize,
}

impl GridCell {
    pub fn label(&self) -> String {
        format!(
            "{} cp={} classes={}",
            self.signal_mask.label(),
            if self.cp_guidance { "on" } else { "off" },
            self.n_classes
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: GridCell,
    pub report: MetricsReport,
}

/// Every single signal and the full set, each with and without CP, plus
/// CP alone, at three levels; then the full set with CP at seven levels.
pub fn full_grid() -> Vec<GridCell> {
    let single = |ecg, gsr, emg| SignalMask { ecg, gsr, emg };
    let masks = [
        single(true, false, false),
        single(false, true, false),
        single(false, false, true),
        SignalMask::ALL,
    ];
    let mut grid = Vec::new();
    for m in masks {
        for cp in [false, true] {
            grid.push(GridCell {
                signal_mask: m,
                cp_guidance: cp,
                n_classes: 3,
            });
        }
    }
    grid.push(GridCell {
        signal_mask: SignalMask::NONE,
        cp_guidance: true,
        n_classes: 3,
    });
    grid.push(GridCell {
        signal_mask: SignalMask::ALL,
        cp_guidance: true,
        n_classes: 7,
    });
    grid
}

/// Trains one model per subject per cell (or one pooled model per cell)
/// and merges the held-out metrics. Rows follow grid order; subjects
/// within a row follow dataset order.
pub fn ablate(
    data: &Dataset,
    grid: &[GridCell],
    model_cfg: &ModelConfig,
    base: &TrainConfig,
    pooled: bool,
) -> Result<Vec<AblationRow>> {
    let subjects = data.subjects();
    if subjects.len() < 2 {
        return Err(validation_err!("ablation needs at least two subjects, got {}", subjects.len()));
    }
    let groups: Vec<Vec<&super::Sample>> = if pooled {
        vec![data.all()]
    } else {
        subjects.iter().map(|s| data.of_subject(s)).collect()
    };
    grid.iter()
        .map(|&cell| {
            let cfg = TrainConfig {
                signal_mask: cell.signal_mask,
                cp_guidance: cell.cp_guidance,
                n_classes: cell.n_classes,
                ..base.clone()
            };
            let reports = groups
                .iter()
                .map(|g| run_split(g, model_cfg, &cfg).map(|r| r.report))
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow {
                cell,
                report: MetricsReport::merge(&reports)?,
            })
        })
        .collect()
}
