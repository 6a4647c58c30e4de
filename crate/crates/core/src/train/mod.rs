//! Datasets, the leakage-free split, the training loop and evaluation.

mod ablate;
mod adam;
mod anova;
mod metrics;

use std::borrow::Cow;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{validation_err, Error, Result};
use crate::model::{ModelConfig, ModelInput, PptpModel, SignalMask, EMG_WINDOW_LEN};
use crate::session::{frame_stream, FrameLabel, Session, WindowingConfig};

pub use ablate::{ablate, full_grid, AblationRow, GridCell};
pub use adam::Adam;
pub use anova::{f_survival, ln_gamma, one_way_anova, regularized_incomplete_beta, AnovaResult};
pub use metrics::{accuracy, confusion_matrix, macro_f1, mean_std, MetricsReport, SubjectMetrics};

/// A per-sample cross-entropy above this counts as divergence even while
/// still finite; layer norms and Adam's bounded steps can keep an exploding
/// run away from NaN.
pub const DIVERGENCE_LOSS: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of step intervals used for training.
    pub train_fraction: f64,
    pub signal_mask: SignalMask,
    pub cp_guidance: bool,
    pub n_classes: usize,
    /// Keep every `frame_stride`-th frame of each session.
    pub frame_stride: usize,
    /// Permute training labels (null control).
    pub shuffle_labels: bool,
    /// Rotate every EMG window by a fresh random offset each time a sample
    /// is trained on.
    pub emg_shift: bool,
    /// Log-scale standard deviation of multiplicative noise applied to the
    /// non-sentinel CP entries of training samples.
    pub cp_jitter: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            train_fraction: 0.8,
            signal_mask: SignalMask::ALL,
            cp_guidance: true,
            n_classes: 3,
            frame_stride: 2,
            shuffle_labels: false,
            emg_shift: true,
            cp_jitter: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.signal_mask.is_empty() && !self.cp_guidance {
            return Err(Error::Config("no signals and no CP guidance leaves nothing to learn from".into()));
        }
        if self.n_classes != 3 && self.n_classes != 7 {
            return Err(Error::Config(format!("n_classes must be 3 or 7, got {}", self.n_classes)));
        }
        if self.batch_size == 0 || self.frame_stride == 0 {
            return Err(Error::Config("batch_size and frame_stride must be positive".into()));
        }
        if !(self.cp_jitter >= 0.0 && self.cp_jitter.is_finite()) {
            return Err(Error::Config(format!("cp_jitter {} must be a finite non-negative sd", self.cp_jitter)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// The model config with this run's head size and CP switch applied.
    pub fn apply_to(&self, model: &ModelConfig) -> ModelConfig {
        ModelConfig {
            n_classes: self.n_classes,
            cp_guidance: self.cp_guidance,
            ..model.clone()
        }
    }
}

/// One frame turned into model input, with where it came from.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: ModelInput,
    pub label: FrameLabel,
    pub subject: String,
    /// Index of the originating session within its dataset.
    pub session: usize,
    /// Frame span `(start_ms, end_ms]`.
    pub start_ms: i64,
    pub end_ms: i64,
}

impl Sample {
    pub fn class(&self, n_classes: usize) -> usize {
        self.label.class_id(n_classes)
    }

    fn overlaps(&self, other: &Sample) -> bool {
        self.session == other.session && self.start_ms < other.end_ms && other.start_ms < self.end_ms
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Unmasked samples from every `stride`-th frame of each session.
    pub fn from_sessions(sessions: &[Session], windowing: &WindowingConfig, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("frame stride must be positive".into()));
        }
        let mut samples = Vec::new();
        for (si, session) in sessions.iter().enumerate() {
            for frame in frame_stream(session, windowing)?.iter().step_by(stride) {
                samples.push(Sample {
                    input: ModelInput::from_frame(frame, SignalMask::ALL)?,
                    label: frame.label,
                    subject: session.meta.subject_id.clone(),
                    session: si,
                    start_ms: frame.end_ms - windowing.ecg_gsr_window_ms,
                    end_ms: frame.end_ms,
                });
            }
        }
        Ok(Dataset { samples })
    }

    /// Subject ids in first-seen order.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.subject) {
                out.push(s.subject.clone());
            }
        }
        out
    }

    pub fn of_subject(&self, subject: &str) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.subject == subject).collect()
    }

    pub fn all(&self) -> Vec<&Sample> {
        self.samples.iter().collect()
    }
}

/// Indices into the split input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Train frames dropped for overlapping a test frame.
    pub purged: usize,
    pub train_intervals: usize,
    pub test_intervals: usize,
}

/// Assigns whole step intervals (session, step) to train or test, then
/// drops train frames whose span overlaps any test frame.
pub fn split_by_step(samples: &[&Sample], train_fraction: f64, seed: u64) -> Result<Split> {
    let intervals: BTreeSet<(usize, u32)> = samples.iter().map(|s| (s.session, s.label.step_index)).collect();
    if intervals.len() < 2 {
        return Err(Error::Split(format!("{} step interval(s); need at least 2", intervals.len())));
    }
    let mut order: Vec<(usize, u32)> = intervals.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let train_set: BTreeSet<(usize, u32)> = order[..n_train].iter().copied().collect();

    let (mut train, test): (Vec<usize>, Vec<usize>) =
        (0..samples.len()).partition(|&i| train_set.contains(&(samples[i].session, samples[i].label.step_index)));
    let before = train.len();
    train.retain(|&i| !test.iter().any(|&j| samples[i].overlaps(samples[j])));
    Ok(Split {
        purged: before - train.len(),
        train,
        test,
        train_intervals: n_train,
        test_intervals: n - n_train,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PptpModel,
    pub history: Vec<EpochRecord>,
}

pub fn masked(input: &ModelInput, mask: SignalMask) -> Cow<'_, ModelInput> {
    if mask == SignalMask::ALL {
        return Cow::Borrowed(input);
    }
    let mut m = input.clone();
    let zero = |v: &mut Vec<f64>, keep: bool| {
        if !keep {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    };
    zero(&mut m.ecg, mask.ecg);
    zero(&mut m.gsr, mask.gsr);
    zero(&mut m.emg_left, mask.emg);
    zero(&mut m.emg_right, mask.emg);
    Cow::Owned(m)
}

/// Copy of `input` with each EMG window circularly rotated by its own
/// uniform offset. Zero-padded windows stay zero.
fn shift_emg(input: &ModelInput, rng: &mut ChaCha8Rng) -> ModelInput {
    let mut out = input.clone();
    for side in [&mut out.emg_left, &mut out.emg_right] {
        for w in side.chunks_mut(EMG_WINDOW_LEN) {
            w.rotate_left(rng.gen_range(0..EMG_WINDOW_LEN));
        }
    }
    out
}

/// Training-time copy of `input`, or `None` when no augmentation is on.
fn augment(input: &ModelInput, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Option<ModelInput> {
    if !cfg.emg_shift && cfg.cp_jitter == 0.0 {
        return None;
    }
    let mut out = if cfg.emg_shift { shift_emg(input, rng) } else { input.clone() };
    if cfg.cp_jitter > 0.0 {
        let noise = rand_distr::Normal::new(0.0, cfg.cp_jitter).expect("finite sd");
        for v in out.cp.iter_mut().filter(|v| **v >= 0.0) {
            *v *= rng.sample(noise).exp();
        }
    }
    Some(out)
}

/// Mean cross-entropy minimized with Adam on per-sample tapes. Batches are
/// reshuffled every epoch from `cfg.seed`.
pub fn train(
    train_set: &[&Sample],
    test_set: &[&Sample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(validation_err!("empty training set"));
    }
    let mc = cfg.apply_to(model_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut classes: Vec<usize> = train_set.iter().map(|s| s.class(mc.n_classes)).collect();
    if classes.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(validation_err!("training set holds a single class"));
    }
    if cfg.shuffle_labels {
        classes.shuffle(&mut rng);
    }
    let inputs: Vec<Cow<'_, ModelInput>> = train_set.iter().map(|s| masked(&s.input, cfg.signal_mask)).collect();

    let mut model = PptpModel::new(mc, cfg.seed)?;
    let mut adam = Adam::new(cfg.lr, model.params().arrays());
    let mut grads: Vec<Vec<f64>> = model.params().arrays().iter().map(|a| vec![0.0; a.len()]).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let dropout = model.config().dropout > 0.0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x = 0.0));
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut tape = Tape::new();
                let vars = model.bind(&mut tape);
                let augmented = augment(&inputs[i], cfg, &mut rng);
                let input = augmented.as_ref().unwrap_or(&inputs[i]);
                let logits = model.forward(&mut tape, &vars, input, dropout.then_some(&mut rng))?;
                let loss = tape.cross_entropy(logits, classes[i])?;
                let l = tape.scalar(loss);
                if !l.is_finite() || l > DIVERGENCE_LOSS {
                    return Err(Error::Training {
                        epoch,
                        msg: format!("loss diverged to {l}"),
                    });
                }
                loss_sum += l;
                tape.backward(loss)?;
                for (acc, v) in grads.iter_mut().zip(&vars) {
                    if let Some(g) = tape.grad(*v) {
                        acc.iter_mut().zip(g).for_each(|(a, g)| *a += w * g);
                    }
                }
            }
            adam.step(model.params_mut().arrays_mut(), &grads);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let test_accuracy = if test_set.is_empty() {
            None
        } else {
            Some(evaluate(&model, test_set, cfg.signal_mask)?.accuracy)
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            test_accuracy,
        });
    }
    Ok(TrainOutcome { model, history })
}

/// Predictions of `model` on `samples` with signals masked as in training.
pub fn predictions(model: &PptpModel, samples: &[&Sample], mask: SignalMask) -> Result<Vec<usize>> {
    samples.iter().map(|s| model.predict(&masked(&s.input, mask))).collect()
}

pub fn evaluate(model: &PptpModel, samples: &[&Sample], mask: SignalMask) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(validation_err!("cannot evaluate an empty dataset"));
    }
    let n = model.config().n_classes;
    let truth: Vec<usize> = samples.iter().map(|s| s.class(n)).collect();
    let pred = predictions(model, samples, mask)?;
    let subjects: Vec<&str> = samples.iter().map(|s| s.subject.as_str()).collect();
    MetricsReport::from_predictions(&truth, &pred, &subjects, n)
}

/// Result of one split-train-evaluate run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: MetricsReport,
    pub history: Vec<EpochRecord>,
    pub split: Split,
    pub model: PptpModel,
}

/// Splits `samples` by step interval, trains, and evaluates on the held-out
/// intervals.
pub fn run_split(samples: &[&Sample], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<RunResult> {
    cfg.validate()?;
    let split = split_by_step(samples, cfg.train_fraction, cfg.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    let (train_set, test_set) = (pick(&split.train), pick(&split.test));
    let outcome = train(&train_set, &test_set, model_cfg, cfg)?;
    let report = evaluate(&outcome.model, &test_set, cfg.signal_mask)?;
    Ok(RunResult {
        report,
        history: outcome.history,
        split,
        model: outcome.model,
    })
}
