//! Synthetic subjects and sessions with a known latent trust.
//!
//! The generative model is deliberately plain so that every dependency is
//! documented:
//!
//! * Trust moves once per placement: `trust ← inertia·trust +
//!   (1 − inertia)·(base(difficulty) − α·max(F_n, 0) − β·[collapse])`,
//!   clamped to `[1, 7]`, starting from a neutral 4. Bases rise from LD to
//!   HD; `α = 2`, `β = 3`.
//! * ECG is a train of unit Gaussian pulses with
//!   `RR = 60000 / (base_hr + hr_trust_gain·(4 − trust))` ms.
//! * GSR is tonic level plus a slow upward drift plus phasic bumps arriving
//!   as a Poisson process at `scr_rate_gain·(8 − trust)` per minute.
//! * EMG is zero-mean Gaussian noise with standard deviation
//!   `emg_amp·(1 + 0.2·(7 − trust))`.
//!
//! Every channel also gets independent Gaussian sensor noise.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::cp::{failure_risk_vector, DEFAULT_GAMMA};
use crate::error::Result;
use crate::session::{
    save_session, BlockPlacement, ChannelKind, ChannelRates, Difficulty, LabelEntry, LabelTrack, Session,
    SessionMeta, SignalChannel, MAX_STEPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub ecg: f64,
    pub gsr: f64,
    pub emg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    /// Drawn from `[55, 80)`.
    pub base_hr_bpm: f64,
    /// bpm per trust unit, `[8, 14)`.
    pub hr_trust_gain: f64,
    /// µS, `[2, 8)`.
    pub gsr_tonic: f64,
    /// Events per minute per trust unit, `[2, 4)`.
    pub scr_rate_gain: f64,
    /// `[0.05, 0.2)`.
    pub emg_amp: f64,
    /// ECG `[0.05, 0.15)`, GSR `[0.01, 0.05)`, EMG `[0.002, 0.01)`.
    pub noise_sd: NoiseLevels,
    /// `[0.3, 0.7)`.
    pub trust_inertia: f64,
    pub seed: u64,
}

/// Deterministic subject draw.
pub fn sample_subject(seed: u64) -> SubjectParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SubjectParams {
        base_hr_bpm: rng.gen_range(55.0..80.0),
        hr_trust_gain: rng.gen_range(8.0..14.0),
        gsr_tonic: rng.gen_range(2.0..8.0),
        scr_rate_gain: rng.gen_range(2.0..4.0),
        emg_amp: rng.gen_range(0.05..0.2),
        noise_sd: NoiseLevels {
            ecg: rng.gen_range(0.05..0.15),
            gsr: rng.gen_range(0.01..0.05),
            emg: rng.gen_range(0.002..0.01),
        },
        trust_inertia: rng.gen_range(0.3..0.7),
        seed,
    }
}

/// Knobs of the task simulator. Defaults are the documented constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Trust fixed point per difficulty, indexed LD, MD, HD.
    pub base_trust: [f64; 3],
    pub initial_trust: f64,
    pub risk_weight: f64,
    pub collapse_penalty: f64,
    pub gamma: f64,
    /// A placement whose risk exceeds this collapses the construction.
    pub collapse_threshold: f64,
    /// Standard deviation of placement error in block widths, per difficulty.
    pub placement_sd: [f64; 3],
    /// Mean time per step in ms, per difficulty; each step varies ±1 s.
    pub step_ms: [i64; 3],
    /// Signal before the first placement.
    pub lead_in_ms: i64,
    /// Recording kept after the last placement.
    pub post_task_ms: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            base_trust: [2.0, 4.0, 6.0],
            initial_trust: 4.0,
            risk_weight: 2.0,
            collapse_penalty: 3.0,
            gamma: DEFAULT_GAMMA,
            collapse_threshold: 1.5,
            placement_sd: [0.03, 0.05, 0.08],
            step_ms: [5000, 6000, 7000],
            lead_in_ms: 3000,
            post_task_ms: 5_000,
        }
    }
}

impl SynthConfig {
    fn index(d: Difficulty) -> usize {
        d as usize
    }

    pub fn base(&self, d: Difficulty) -> f64 {
        self.base_trust[Self::index(d)]
    }
}

/// Blocks per layer of the target construction (ten blocks each).
pub fn target_layers(d: Difficulty) -> &'static [usize] {
    match d {
        Difficulty::LD => &[4, 3, 2, 1],
        Difficulty::MD => &[3, 3, 2, 2],
        Difficulty::HD => &[2, 2, 2, 2, 2],
    }
}

/// Risk state after one placement, as fed to the trust model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpStep {
    pub timestamp_ms: i64,
    /// `F_n` of the newest block (the sentinel after a collapse).
    pub risk: f64,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentTrustTrajectory {
    /// `(timestamp_ms, trust)`; the first sample is the starting level.
    pub samples: Vec<(i64, f64)>,
}

impl LatentTrustTrajectory {
    /// Piecewise-constant trust at `t_ms`.
    pub fn trust_at(&self, t_ms: f64) -> f64 {
        let idx = self.samples.partition_point(|(t, _)| *t as f64 <= t_ms);
        self.samples[idx.saturating_sub(1)].1
    }
}

pub fn trust_dynamics(
    cp_history: &[CpStep],
    difficulty: Difficulty,
    params: &SubjectParams,
    cfg: &SynthConfig,
) -> LatentTrustTrajectory {
    let inertia = params.trust_inertia;
    let base = cfg.base(difficulty);
    let mut trust = cfg.initial_trust;
    let mut samples = vec![(cp_history.first().map_or(0, |s| s.timestamp_ms.min(0)), trust)];
    for step in cp_history {
        let penalty = cfg.risk_weight * step.risk.max(0.0) + if step.collapsed { cfg.collapse_penalty } else { 0.0 };
        trust = (inertia * trust + (1.0 - inertia) * (base - penalty)).clamp(1.0, 7.0);
        samples.push((step.timestamp_ms, trust));
    }
    LatentTrustTrajectory { samples }
}

/// Adds `amp · exp(-(t - center)² / 2σ²)` to samples within ±4σ.
fn add_gaussian_pulse(samples: &mut [f64], rate_hz: f64, center_ms: f64, sigma_ms: f64, amp: f64) {
    let to_idx = |t: f64| t * rate_hz / 1000.0;
    let lo = to_idx(center_ms - 4.0 * sigma_ms).floor().max(0.0) as usize;
    let hi = (to_idx(center_ms + 4.0 * sigma_ms).ceil() as usize).min(samples.len());
    for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
        let t = i as f64 * 1000.0 / rate_hz;
        let z = (t - center_ms) / sigma_ms;
        *s += amp * (-0.5 * z * z).exp();
    }
}

const ECG_PULSE_SIGMA_MS: f64 = 60.0;
const SCR_RISE_MS: f64 = 700.0;
const SCR_DECAY_MS: f64 = 2500.0;

fn rr_ms(params: &SubjectParams, trust: f64) -> f64 {
    let hr = (params.base_hr_bpm + params.hr_trust_gain * (4.0 - trust)).max(20.0);
    60_000.0 / hr
}

fn n_samples(kind: ChannelKind, duration_ms: i64) -> usize {
    (duration_ms as f64 * kind.nominal_rate_hz() / 1000.0).floor() as usize
}

/// Renders the four channels for a trajectory, starting at `t = 0`.
pub fn synth_signals(
    trajectory: &LatentTrustTrajectory,
    params: &SubjectParams,
    duration_ms: i64,
    rng: &mut impl Rng,
) -> [SignalChannel; 4] {
    let channel = |kind: ChannelKind, samples: Vec<f64>| SignalChannel {
        kind,
        sample_rate_hz: kind.nominal_rate_hz(),
        samples,
        t0_ms: 0,
    };
    let add_noise = |samples: &mut [f64], sd: f64, rng: &mut dyn rand::RngCore| {
        if sd > 0.0 {
            let n = Normal::new(0.0, sd).expect("positive sd");
            samples.iter_mut().for_each(|s| *s += n.sample(rng));
        }
    };

    let ecg_rate = ChannelKind::Ecg.nominal_rate_hz();
    let mut ecg = vec![0.0; n_samples(ChannelKind::Ecg, duration_ms)];
    let mut t = rng.gen_range(0.0..rr_ms(params, trajectory.trust_at(0.0)));
    while t < duration_ms as f64 + 4.0 * ECG_PULSE_SIGMA_MS {
        add_gaussian_pulse(&mut ecg, ecg_rate, t, ECG_PULSE_SIGMA_MS, 1.0);
        t += rr_ms(params, trajectory.trust_at(t));
    }
    add_noise(&mut ecg, params.noise_sd.ecg, rng);

    let gsr_rate = ChannelKind::Gsr.nominal_rate_hz();
    let n_gsr = n_samples(ChannelKind::Gsr, duration_ms);
    let drift_total = rng.gen_range(0.0..0.5);
    let mut gsr: Vec<f64> = (0..n_gsr)
        .map(|i| params.gsr_tonic + drift_total * i as f64 / n_gsr.max(1) as f64)
        .collect();
    let peak_at = SCR_RISE_MS * SCR_DECAY_MS / (SCR_DECAY_MS - SCR_RISE_MS) * (SCR_DECAY_MS / SCR_RISE_MS).ln();
    let peak = (-peak_at / SCR_DECAY_MS).exp() - (-peak_at / SCR_RISE_MS).exp();
    let mut t = 0.0;
    loop {
        let per_min = (params.scr_rate_gain * (8.0 - trajectory.trust_at(t))).max(1e-3);
        t += Exp::new(per_min / 60_000.0).expect("positive rate").sample(rng);
        if t >= duration_ms as f64 {
            break;
        }
        let amp = rng.gen_range(0.3..0.8) / peak;
        let start = (t * gsr_rate / 1000.0).ceil() as usize;
        let end = (((t + 6.0 * SCR_DECAY_MS) * gsr_rate / 1000.0) as usize).min(n_gsr);
        for (i, s) in gsr.iter_mut().enumerate().take(end).skip(start) {
            let tau = i as f64 * 1000.0 / gsr_rate - t;
            *s += amp * ((-tau / SCR_DECAY_MS).exp() - (-tau / SCR_RISE_MS).exp());
        }
    }
    add_noise(&mut gsr, params.noise_sd.gsr, rng);

    let emg_channel = |kind: ChannelKind, rng: &mut dyn rand::RngCore| {
        let rate = kind.nominal_rate_hz();
        let mut samples: Vec<f64> = (0..n_samples(kind, duration_ms))
            .map(|i| {
                let trust = trajectory.trust_at(i as f64 * 1000.0 / rate);
                let sd = params.emg_amp * (1.0 + 0.2 * (7.0 - trust));
                sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
            })
            .collect();
        add_noise(&mut samples, params.noise_sd.emg, rng);
        channel(kind, samples)
    };
    let emg_left = emg_channel(ChannelKind::EmgLeft, rng);
    let emg_right = emg_channel(ChannelKind::EmgRight, rng);

    [channel(ChannelKind::Ecg, ecg), channel(ChannelKind::Gsr, gsr), emg_left, emg_right]
}

/// Lays out blocks following the target construction with Gaussian
/// placement error, stopping early when the running risk crosses the
/// collapse threshold.
fn simulate_placements(difficulty: Difficulty, cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<BlockPlacement> {
    let sd = cfg.placement_sd[SynthConfig::index(difficulty)];
    let step_ms = cfg.step_ms[SynthConfig::index(difficulty)];
    let err = Normal::new(0.0, sd).expect("positive sd");
    let mut placements: Vec<BlockPlacement> = Vec::with_capacity(MAX_STEPS);
    let mut below: Vec<f64> = Vec::new();
    let mut t = cfg.lead_in_ms;
    let mut risk = 0.0;
    'layers: for (li, &width) in target_layers(difficulty).iter().enumerate() {
        let layer = li as u32 + 1;
        let mut this_layer = Vec::with_capacity(width);
        for j in 0..width {
            let supports: Vec<f64> = if layer == 1 {
                vec![]
            } else if width < below.len() {
                vec![below[j], below[j + 1]]
            } else {
                vec![below[j]]
            };
            let nominal = if supports.is_empty() {
                j as f64 - (width as f64 - 1.0) / 2.0
            } else {
                supports.iter().sum::<f64>() / supports.len() as f64
            };
            let x = nominal + err.sample(rng);
            t += step_ms + rng.gen_range(-1000..=1000);
            let mut p = BlockPlacement {
                step_index: placements.len() as u32 + 1,
                layer,
                x_center: x,
                support_centers: supports,
                timestamp_ms: t,
                collapsed_after: false,
            };
            let skew = crate::cp::block_skew(&p).expect("well-formed placement").0;
            risk = skew + cfg.gamma * risk;
            if risk > cfg.collapse_threshold {
                p.collapsed_after = true;
                placements.push(p);
                break 'layers;
            }
            placements.push(p);
            this_layer.push(x);
        }
        below = this_layer;
    }
    placements
}

/// Simulates one task end to end. Labels are the latent trust right after
/// each placement.
pub fn simulate_task(
    params: &SubjectParams,
    difficulty: Difficulty,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<(Session, LatentTrustTrajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placements = simulate_placements(difficulty, cfg, &mut rng);
    let history = placements
        .iter()
        .map(|p| {
            let f = failure_risk_vector(&placements, p.timestamp_ms, cfg.gamma)?;
            let slot = p.step_index as usize - 1;
            Ok(CpStep {
                timestamp_ms: p.timestamp_ms,
                risk: f.f[slot],
                collapsed: p.collapsed_after,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let trajectory = trust_dynamics(&history, difficulty, params, cfg);
    let task_end = placements.last().map_or(cfg.lead_in_ms, |p| p.timestamp_ms) + 1000;
    let duration = task_end + cfg.post_task_ms;
    let channels = synth_signals(&trajectory, params, duration, &mut rng);
    let labels = LabelTrack {
        entries: placements
            .iter()
            .zip(&trajectory.samples[1..])
            .map(|(p, &(_, trust))| LabelEntry {
                step_index: p.step_index,
                timestamp_ms: p.timestamp_ms,
                muir_mean: trust,
                nasa_tlx_mean: None,
            })
            .collect(),
    };
    let session = Session {
        meta: SessionMeta {
            subject_id: format!("subject-{}", params.seed),
            difficulty,
            rates: ChannelRates::nominal(),
            t0_ms: 0,
            task_end_ms: Some(task_end),
        },
        channels,
        placements,
        labels,
    };
    session.validate()?;
    Ok((session, trajectory))
}

/// SplitMix64 step; derives independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Subject `k` of a cohort generated from `seed`.
pub fn cohort_subject(seed: u64, k: usize) -> SubjectParams {
    sample_subject(mix_seed(seed, k as u64 + 1))
}

/// All sessions of one subject, one per difficulty in LD, MD, HD order.
pub fn subject_sessions(seed: u64, k: usize, tasks: usize, cfg: &SynthConfig) -> Result<Vec<Session>> {
    let params = cohort_subject(seed, k);
    Difficulty::ALL
        .iter()
        .take(tasks)
        .map(|&d| {
            let task_seed = mix_seed(params.seed, 100 + d as u64);
            simulate_task(&params, d, task_seed, cfg).map(|(s, _)| s)
        })
        .collect()
}

/// Writes `subjects × tasks` session directories named `s<k>_<difficulty>`
/// under `out`; returns their paths in subject, difficulty order.
pub fn generate_cohort(
    subjects: usize,
    tasks_per_subject: usize,
    seed: u64,
    cfg: &SynthConfig,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for k in 0..subjects {
        for session in subject_sessions(seed, k, tasks_per_subject, cfg)? {
            let dir = out.join(format!("s{k:03}_{}", session.meta.difficulty));
            save_session(&session, &dir)?;
            dirs.push(dir);
        }
    }
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::load_session;

    #[test]
    fn subject_draw_is_deterministic() {
        assert_eq!(sample_subject(1), sample_subject(1));
        assert_ne!(sample_subject(1).base_hr_bpm, sample_subject(2).base_hr_bpm);
    }

    #[test]
    fn subject_ranges_hold() {
        for seed in 0..1000 {
            let p = sample_subject(seed);
            assert!((55.0..80.0).contains(&p.base_hr_bpm));
            assert!(p.trust_inertia > 0.0 && p.trust_inertia < 1.0);
            assert!(p.gsr_tonic > 0.0 && p.emg_amp > 0.0);
        }
    }

    fn flat_history(n: usize) -> Vec<CpStep> {
        (0..n)
            .map(|i| CpStep {
                timestamp_ms: 1000 * (i as i64 + 1),
                risk: 0.0,
                collapsed: false,
            })
            .collect()
    }

    #[test]
    fn zero_risk_converges_to_base() {
        let p = sample_subject(3);
        let cfg = SynthConfig::default();
        let traj = trust_dynamics(&flat_history(60), Difficulty::LD, &p, &cfg);
        let last = traj.samples.last().unwrap().1;
        assert!((last - cfg.base(Difficulty::LD)).abs() < 1e-6);
    }

    #[test]
    fn collapse_drops_trust() {
        let p = sample_subject(4);
        let cfg = SynthConfig {
            initial_trust: 4.0,
            ..Default::default()
        };
        let mut h = flat_history(3);
        h[2].collapsed = true;
        h[2].risk = -2.0;
        // Start at the MD fixed point so the only movement is the collapse.
        let traj = trust_dynamics(&h, Difficulty::MD, &p, &cfg);
        let before = traj.samples[2].1;
        let after = traj.samples[3].1;
        assert!(before - after >= (1.0 - p.trust_inertia) * cfg.collapse_penalty - 1e-12);
    }

    #[test]
    fn higher_base_dominates_pointwise() {
        let p = sample_subject(5);
        let cfg = SynthConfig::default();
        let mut h = flat_history(8);
        for (i, s) in h.iter_mut().enumerate() {
            s.risk = 0.1 * i as f64;
        }
        let lo = trust_dynamics(&h, Difficulty::LD, &p, &cfg);
        let hi = trust_dynamics(&h, Difficulty::HD, &p, &cfg);
        for (a, b) in lo.samples.iter().zip(&hi.samples) {
            assert!(b.1 >= a.1);
        }
    }

    #[test]
    fn noiseless_ecg_is_periodic() {
        let mut p = sample_subject(6);
        p.noise_sd = NoiseLevels {
            ecg: 0.0,
            gsr: 0.0,
            emg: 0.0,
        };
        let traj = LatentTrustTrajectory {
            samples: vec![(0, 7.0)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let [ecg, ..] = synth_signals(&traj, &p, 20_000, &mut rng);
        let rr = rr_ms(&p, 7.0);
        let peaks: Vec<usize> = (1..ecg.samples.len() - 1)
            .filter(|&i| ecg.samples[i] > 0.5 && ecg.samples[i] >= ecg.samples[i - 1] && ecg.samples[i] > ecg.samples[i + 1])
            .collect();
        assert!(peaks.len() >= 10);
        for w in peaks.windows(2) {
            let gap_ms = (w[1] - w[0]) as f64 * 8.0;
            assert!((gap_ms - rr).abs() <= 8.0, "gap {gap_ms} vs rr {rr}");
        }
    }

    #[test]
    fn emg_variance_tracks_trust() {
        let mut p = sample_subject(7);
        p.noise_sd.emg = 0.0;
        let var = |trust: f64| {
            let traj = LatentTrustTrajectory {
                samples: vec![(0, trust)],
            };
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let [_, _, l, _] = synth_signals(&traj, &p, 10_000, &mut rng);
            l.samples.iter().map(|v| v * v).sum::<f64>() / l.samples.len() as f64
        };
        let ratio = var(1.0) / var(7.0);
        let expected = 2.2f64.powi(2);
        assert!((ratio / expected - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn gsr_sits_above_tonic() {
        let p = sample_subject(8);
        let traj = LatentTrustTrajectory {
            samples: vec![(0, 4.0)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let [_, gsr, ..] = synth_signals(&traj, &p, 60_000, &mut rng);
        let mean = gsr.samples.iter().sum::<f64>() / gsr.samples.len() as f64;
        assert!(mean >= p.gsr_tonic);
    }

    #[test]
    fn labels_equal_latent_trust_at_placements() {
        let p = sample_subject(9);
        let (s, traj) = simulate_task(&p, Difficulty::MD, 1, &SynthConfig::default()).unwrap();
        assert_eq!(s.labels.entries.len(), s.placements.len());
        for e in &s.labels.entries {
            assert_eq!(e.muir_mean, traj.trust_at(e.timestamp_ms as f64));
        }
    }

    #[test]
    fn same_seed_same_directory_bytes() {
        let cfg = SynthConfig {
            post_task_ms: 2000,
            ..Default::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let da = generate_cohort(1, 1, 42, &cfg, a.path()).unwrap();
        let db = generate_cohort(1, 1, 42, &cfg, b.path()).unwrap();
        for f in ["meta.json", "ecg.csv", "gsr.csv", "emg_left.csv", "placements.jsonl", "labels.jsonl"] {
            assert_eq!(std::fs::read(da[0].join(f)).unwrap(), std::fs::read(db[0].join(f)).unwrap(), "{f}");
        }
        load_session(&da[0]).unwrap();
    }

    #[test]
    fn hard_tasks_are_sloppier() {
        let cfg = SynthConfig {
            post_task_ms: 0,
            ..Default::default()
        };
        let mean_offset = |d: Difficulty| {
            let mut total = 0.0;
            let mut n = 0;
            for seed in 0..100 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for p in simulate_placements(d, &cfg, &mut rng) {
                    if p.layer > 1 {
                        total += (p.x_center - crate::cp::support_center(&p.support_centers).unwrap()).abs();
                        n += 1;
                    }
                }
            }
            total / n as f64
        };
        assert!(mean_offset(Difficulty::HD) > mean_offset(Difficulty::LD));
    }
}
