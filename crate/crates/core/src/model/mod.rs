//! The trust classifier.
//!
//! Per frame: each EMG side's padded window stack is mapped to a 375-sample
//! pseudo-channel by a small feed-forward net; the four channels pass
//! through reversible instance normalization, are cut into disjoint
//! per-channel patches and linearly projected to tokens (plus a learned
//! channel embedding). The failure-risk vector becomes ten tokens through a
//! shared scalar map plus learned position embeddings.
//!
//! The encoder is a pre-norm transformer with bias-free layer norms and a
//! learned relative-position bias on self-attention logits. Blocks come in
//! groups of `L` plain blocks followed by one fusion block, which adds a
//! cross-attention stage (queries from the signal tokens, keys and values
//! from the CP tokens) between self-attention and the feed-forward stage.

mod attention;
mod config;
mod params;
mod revin;

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, Along, GradCheckOptions, GradCheckReport, NumericArray, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::session::AnalysisFrame;

pub use attention::{multi_head_attention, relative_position_ids, AttentionOutput};
pub use config::{
    Architecture, ModelConfig, CP_TOKENS, EMG_WINDOWS, EMG_WINDOW_LEN, N_CHANNELS, SIGNAL_LEN,
};
pub use params::{write_checkpoint, ParamStore};
pub use revin::{revin_denormalize, revin_normalize, RevinState, REVIN_EPS};

use params::{init_embedding, init_linear, init_uniform};

/// Signal samples produced per EMG window: `ceil(375 / 27)`.
pub const EMG_SLOT: usize = SIGNAL_LEN.div_ceil(EMG_WINDOWS);

/// Which physiological signals reach the model. Masked signals are fed as
/// zero windows so the token layout never changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalMask {
    pub ecg: bool,
    pub gsr: bool,
    pub emg: bool,
}

impl SignalMask {
    pub const ALL: SignalMask = SignalMask {
        ecg: true,
        gsr: true,
        emg: true,
    };
    pub const NONE: SignalMask = SignalMask {
        ecg: false,
        gsr: false,
        emg: false,
    };

    pub fn is_empty(&self) -> bool {
        !(self.ecg || self.gsr || self.emg)
    }

    /// Short label such as `ECG+GSR`, or `CP-only` style `none`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.ecg {
            parts.push("ECG");
        }
        if self.gsr {
            parts.push("GSR");
        }
        if self.emg {
            parts.push("EMG");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

impl std::str::FromStr for SignalMask {
    type Err = Error;

    /// Parses `ecg+gsr+emg`, `all` or `none` (case-insensitive, `+` or `,`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "all" => return Ok(SignalMask::ALL),
            "none" | "cp" | "cp-only" => return Ok(SignalMask::NONE),
            _ => {}
        }
        let mut m = SignalMask::NONE;
        for part in s.split(['+', ',']) {
            match part.trim() {
                "ecg" => m.ecg = true,
                "gsr" => m.gsr = true,
                "emg" => m.emg = true,
                other => return Err(Error::Config(format!("unknown signal {other:?}"))),
            }
        }
        Ok(m)
    }
}

/// Numeric model input for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub ecg: Vec<f64>,
    pub gsr: Vec<f64>,
    /// `EMG_WINDOWS × EMG_WINDOW_LEN`, row-major, windows oldest first and
    /// zero rows after the last available window.
    pub emg_left: Vec<f64>,
    pub emg_right: Vec<f64>,
    pub cp: [f64; CP_TOKENS],
}

impl ModelInput {
    pub fn from_frame(frame: &AnalysisFrame<'_>, mask: SignalMask) -> Result<Self> {
        let signal = |x: &[f64], keep: bool| -> Result<Vec<f64>> {
            if x.len() != SIGNAL_LEN {
                return Err(shape_err!("signal window of {} samples, want {SIGNAL_LEN}", x.len()));
            }
            Ok(if keep { x.to_vec() } else { vec![0.0; SIGNAL_LEN] })
        };
        Ok(ModelInput {
            ecg: signal(frame.ecg, mask.ecg)?,
            gsr: signal(frame.gsr, mask.gsr)?,
            emg_left: pad_emg(&frame.emg_left, mask.emg)?,
            emg_right: pad_emg(&frame.emg_right, mask.emg)?,
            cp: frame.cp.f,
        })
    }
}

/// Stacks up to `EMG_WINDOWS` windows and zero-pads the remaining rows.
pub fn pad_emg(windows: &[&[f64]], keep: bool) -> Result<Vec<f64>> {
    if windows.len() > EMG_WINDOWS {
        return Err(shape_err!("{} EMG windows exceed the grid of {EMG_WINDOWS}", windows.len()));
    }
    let mut out = vec![0.0; EMG_WINDOWS * EMG_WINDOW_LEN];
    for (row, w) in windows.iter().enumerate() {
        if w.len() != EMG_WINDOW_LEN {
            return Err(shape_err!("EMG window of {} samples, want {EMG_WINDOW_LEN}", w.len()));
        }
        if keep {
            out[row * EMG_WINDOW_LEN..(row + 1) * EMG_WINDOW_LEN].copy_from_slice(w);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct CrossLayout {
    ln: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct BlockLayout {
    ln1: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    rel_bias: usize,
    cross: Option<CrossLayout>,
    ln2: usize,
    ffn_in: usize,
    ffn_out: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    emg: [(usize, usize); 2],
    revin_gain: usize,
    revin_shift: usize,
    patch_proj: usize,
    channel_emb: usize,
    cp_value: usize,
    cp_pos: usize,
    blocks: Vec<BlockLayout>,
    final_ln: usize,
    head_w: usize,
    head_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmgSide {
    Left,
    Right,
}

/// Parameters plus architecture.
#[derive(Debug, Clone)]
pub struct PptpModel {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl PptpModel {
    /// Fresh weights drawn deterministically from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::default();
        let d = config.d_model;
        let ones = |n: usize| NumericArray::filled([n], 1.0);

        let emg_pair = |side: &str, ps: &mut ParamStore, rng: &mut ChaCha8Rng| {
            // Unit-scale weights; the input carries the 1/√fan_in factor.
            let w1 = ps.push(format!("emg_{side}.w_in"), init_uniform(rng, EMG_WINDOW_LEN, config.emg_hidden, 1.0));
            let w2 = ps.push(format!("emg_{side}.w_out"), init_linear(rng, config.emg_hidden, EMG_SLOT));
            (w1, w2)
        };
        let emg = [emg_pair("left", &mut ps, &mut rng), emg_pair("right", &mut ps, &mut rng)];
        let revin_gain = ps.push("revin.gain", ones(N_CHANNELS));
        let revin_shift = ps.push("revin.shift", NumericArray::zeros([N_CHANNELS]));
        let patch_proj = ps.push("patch.proj", init_linear(&mut rng, config.patch_len, d));
        let channel_emb = ps.push("patch.channel_emb", init_embedding(&mut rng, &[N_CHANNELS, d]));
        let cp_value = ps.push("cp.value", init_linear(&mut rng, 1, d));
        let cp_pos = ps.push("cp.pos_emb", init_embedding(&mut rng, &[CP_TOKENS, d]));

        let rel_rows = 2 * config.rel_pos_max_dist + 1;
        let hidden = d * config.ffn_mult;
        let blocks = (0..config.depth())
            .map(|i| {
                let name = |s: &str| format!("block{i}.{s}");
                let ln1 = ps.push(name("ln1.gain"), ones(d));
                let wq = ps.push(name("attn.wq"), init_linear(&mut rng, d, d));
                let wk = ps.push(name("attn.wk"), init_linear(&mut rng, d, d));
                let wv = ps.push(name("attn.wv"), init_linear(&mut rng, d, d));
                let wo = ps.push(name("attn.wo"), init_linear(&mut rng, d, d));
                let rel_bias = ps.push(name("attn.rel_bias"), init_embedding(&mut rng, &[rel_rows, config.n_heads]));
                let cross = config.is_fusion_block(i).then(|| CrossLayout {
                    ln: ps.push(name("cross.ln.gain"), ones(d)),
                    wq: ps.push(name("cross.wq"), init_linear(&mut rng, d, d)),
                    wk: ps.push(name("cross.wk"), init_linear(&mut rng, d, d)),
                    wv: ps.push(name("cross.wv"), init_linear(&mut rng, d, d)),
                    wo: ps.push(name("cross.wo"), init_linear(&mut rng, d, d)),
                });
                let ln2 = ps.push(name("ln2.gain"), ones(d));
                let ffn_in = ps.push(name("ffn.w_in"), init_linear(&mut rng, d, hidden));
                let ffn_out = ps.push(name("ffn.w_out"), init_linear(&mut rng, hidden, d));
                BlockLayout {
                    ln1,
                    wq,
                    wk,
                    wv,
                    wo,
                    rel_bias,
                    cross,
                    ln2,
                    ffn_in,
                    ffn_out,
                }
            })
            .collect();
        let final_ln = ps.push("final_ln.gain", ones(d));
        let head_w = ps.push("head.w", init_linear(&mut rng, d, config.n_classes));
        let head_b = ps.push("head.b", NumericArray::zeros([config.n_classes]));

        Ok(PptpModel {
            config,
            params: ps,
            layout: Layout {
                emg,
                revin_gain,
                revin_shift,
                patch_proj,
                channel_emb,
                cp_value,
                cp_pos,
                blocks,
                final_ln,
                head_w,
                head_b,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Switches CP guidance without touching the weights.
    pub fn set_cp_guidance(&mut self, on: bool) {
        self.config.cp_guidance = on;
    }

    /// Registers every parameter on the tape, in store order.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Vec<Var> {
        self.params.arrays().iter().map(|a| tape.param(a)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path.as_ref(), &self.config, &self.params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let raw = params::read_checkpoint(path.as_ref())?;
        let mut model = PptpModel::new(raw.config, 0)?;
        if raw.tensors.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, config needs {}",
                raw.tensors.len(),
                model.params.len()
            )));
        }
        for (i, (name, array)) in raw.tensors.into_iter().enumerate() {
            let expected = model.params.names()[i].clone();
            let slot = &mut model.params.arrays_mut()[i];
            if name != expected || array.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {i}: found {name} {:?}, expected {expected} {:?}",
                    array.shape(),
                    slot.shape()
                )));
            }
            *slot = array;
        }
        Ok(model)
    }

    fn linear(&self, tape: &mut Tape<'_>, x: Var, w: Var) -> Result<Var> {
        tape.matmul(x, w)
    }

    fn dropout(&self, tape: &mut Tape<'_>, x: Var, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var> {
        let p = self.config.dropout;
        let Some(rng) = rng.as_deref_mut() else { return Ok(x) };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..tape.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let m = tape.constant(NumericArray::new(tape.shape(x).to_vec(), mask)?);
        tape.mul(x, m)
    }

    /// Maps one side's padded EMG window stack to a `[1, 375]` pseudo-channel.
    ///
    /// A two-layer feed-forward map over the flattened `[27·272]` stack with
    /// block-diagonal weights shared across windows: each window goes through
    /// `272 → h`, GELU, `h → 14`, so its output fills the 14 signal samples
    /// of its own hop slot. The 27 slots are concatenated oldest first and
    /// the oldest 3 samples dropped to leave 375. No additive terms, so zero
    /// (padded) windows map to zero.
    ///
    /// The window is multiplied by `1/√272` ahead of unit-scale weights: the
    /// map at init matches a fan-in init, while an Adam step (fixed size per
    /// weight) moves the features about √272 times less.
    pub fn emg_length_match(&self, tape: &mut Tape<'_>, vars: &[Var], side: EmgSide, windows: &[f64]) -> Result<Var> {
        let n = EMG_WINDOWS * EMG_WINDOW_LEN;
        if windows.len() != n {
            return Err(shape_err!("EMG stack of {} values, want {n}", windows.len()));
        }
        let (w1, w2) = self.layout.emg[side as usize];
        let scale = 1.0 / (EMG_WINDOW_LEN as f64).sqrt();
        let x = tape.constant(NumericArray::matrix(
            EMG_WINDOWS,
            EMG_WINDOW_LEN,
            windows.iter().map(|v| v * scale).collect(),
        )?);
        let h = self.linear(tape, x, vars[w1])?;
        let h = tape.gelu(h);
        let slots = self.linear(tape, h, vars[w2])?;
        let flat = tape.reshape(slots, &[1, EMG_WINDOWS * EMG_SLOT])?;
        tape.slice(flat, 1, EMG_WINDOWS * EMG_SLOT - SIGNAL_LEN, EMG_WINDOWS * EMG_SLOT)
    }

    /// Per-channel instance normalization of `[4, 375]` followed by the
    /// learned per-channel affine.
    pub fn revin(&self, tape: &mut Tape<'_>, vars: &[Var], channels: Var) -> Result<Var> {
        let unit = tape.constant(NumericArray::filled([SIGNAL_LEN], 1.0));
        let z = tape.layernorm_nobias(channels, unit)?;
        let z = tape.mul_broadcast(z, vars[self.layout.revin_gain], Along::Cols)?;
        tape.add_broadcast(z, vars[self.layout.revin_shift], Along::Cols)
    }

    /// `[4, 375]` normalized channels to `[4·P, d]` tokens, channel-major.
    pub fn patch_embed(&self, tape: &mut Tape<'_>, vars: &[Var], channels: Var) -> Result<Var> {
        self.config.validate()?;
        if tape.shape(channels) != [N_CHANNELS, SIGNAL_LEN] {
            return Err(shape_err!("patch_embed input {:?}", tape.shape(channels)));
        }
        let pl = self.config.patch_len;
        let p = self.config.patches_per_channel();
        let patches = tape.reshape(channels, &[N_CHANNELS * p, pl])?;
        let tokens = self.linear(tape, patches, vars[self.layout.patch_proj])?;
        let ids: Vec<usize> = (0..N_CHANNELS).flat_map(|c| std::iter::repeat_n(c, p)).collect();
        let chan = tape.embedding(vars[self.layout.channel_emb], &ids)?;
        tape.add(tokens, chan)
    }

    /// Ten CP tokens: `f[k] · w + pos[k]`.
    pub fn cp_embed(&self, tape: &mut Tape<'_>, vars: &[Var], f: &[f64; CP_TOKENS]) -> Result<Var> {
        let col = tape.constant(NumericArray::matrix(CP_TOKENS, 1, f.to_vec())?);
        let values = self.linear(tape, col, vars[self.layout.cp_value])?;
        tape.add(values, vars[self.layout.cp_pos])
    }

    /// Temporal position of each physiological token: its patch index
    /// within its channel, so tokens of different channels covering the same
    /// time span sit at distance zero.
    fn physio_positions(&self) -> Vec<usize> {
        let p = self.config.patches_per_channel();
        (0..N_CHANNELS).flat_map(|_| 0..p).collect()
    }

    fn block(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        bl: &BlockLayout,
        x: Var,
        rel_ids: &[usize],
        cp: Option<Var>,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let heads = self.config.n_heads;

        let h = tape.layernorm_nobias(x, vars[bl.ln1])?;
        let q = self.linear(tape, h, vars[bl.wq])?;
        let k = self.linear(tape, h, vars[bl.wk])?;
        let v = self.linear(tape, h, vars[bl.wv])?;
        let bias = tape.embedding(vars[bl.rel_bias], rel_ids)?;
        let att = multi_head_attention(tape, q, k, v, heads, Some(bias))?;
        let o = self.linear(tape, att.out, vars[bl.wo])?;
        let o = self.dropout(tape, o, rng)?;
        let mut x = tape.add(x, o)?;

        if let (Some(cl), Some(cp), true) = (&bl.cross, cp, self.config.cp_guidance) {
            let h = tape.layernorm_nobias(x, vars[cl.ln])?;
            let q = self.linear(tape, h, vars[cl.wq])?;
            let k = self.linear(tape, cp, vars[cl.wk])?;
            let v = self.linear(tape, cp, vars[cl.wv])?;
            let att = multi_head_attention(tape, q, k, v, heads, None)?;
            let o = self.linear(tape, att.out, vars[cl.wo])?;
            let o = self.dropout(tape, o, rng)?;
            x = tape.add(x, o)?;
        }

        let h = tape.layernorm_nobias(x, vars[bl.ln2])?;
        let f = self.linear(tape, h, vars[bl.ffn_in])?;
        let f = tape.gelu(f);
        let f = self.linear(tape, f, vars[bl.ffn_out])?;
        let f = self.dropout(tape, f, rng)?;
        tape.add(x, f)
    }

    fn check_tokens(&self, tape: &Tape<'_>, physio: Var, cp: Var) -> Result<()> {
        let d = self.config.d_model;
        if tape.shape(physio) != [self.config.physio_tokens(), d] || tape.shape(cp) != [CP_TOKENS, d] {
            return Err(shape_err!(
                "encoder tokens {:?} / {:?}, want [{}, {d}] / [{CP_TOKENS}, {d}]",
                tape.shape(physio),
                tape.shape(cp),
                self.config.physio_tokens()
            ));
        }
        Ok(())
    }

    /// Fusion encoder over `physio [T, d]` guided by `cp [10, d]`; returns the
    /// mean of the final normalized physiological tokens, shape `[d]`.
    pub fn encoder_forward(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        physio: Var,
        cp: Var,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        self.check_tokens(tape, physio, cp)?;
        let pos = self.physio_positions();
        let rel_ids = relative_position_ids(&pos, &pos, self.config.rel_pos_max_dist);
        let mut x = physio;
        for bl in &self.layout.blocks {
            x = self.block(tape, vars, bl, x, &rel_ids, Some(cp), &mut rng)?;
        }
        let x = tape.layernorm_nobias(x, vars[self.layout.final_ln])?;
        tape.mean_pool(x, 0)
    }

    /// Baseline: CP tokens appended to the signal tokens and run through
    /// plain blocks only; pooled over all tokens.
    pub fn concat_baseline_forward(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        physio: Var,
        cp: Var,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        self.check_tokens(tape, physio, cp)?;
        // CP tokens sit at their own step index on the same relative axis.
        let mut pos = self.physio_positions();
        pos.extend(0..CP_TOKENS);
        let rel_ids = relative_position_ids(&pos, &pos, self.config.rel_pos_max_dist);
        let mut x = tape.concat(&[physio, cp], 0)?;
        for bl in &self.layout.blocks {
            x = self.block(tape, vars, bl, x, &rel_ids, None, &mut rng)?;
        }
        let x = tape.layernorm_nobias(x, vars[self.layout.final_ln])?;
        tape.mean_pool(x, 0)
    }

    /// Linear head: pooled `[d]` to logits `[n_classes]`.
    pub fn classify(&self, tape: &mut Tape<'_>, vars: &[Var], pooled: Var) -> Result<Var> {
        let d = self.config.d_model;
        let row = tape.reshape(pooled, &[1, d])?;
        let z = self.linear(tape, row, vars[self.layout.head_w])?;
        let z = tape.add_broadcast(z, vars[self.layout.head_b], Along::Rows)?;
        tape.reshape(z, &[self.config.n_classes])
    }

    /// Signal tokens for one input: EMG length matching, RevIN, patches.
    pub fn physio_tokens(&self, tape: &mut Tape<'_>, vars: &[Var], input: &ModelInput) -> Result<Var> {
        let ecg = tape.constant(NumericArray::matrix(1, SIGNAL_LEN, input.ecg.clone())?);
        let gsr = tape.constant(NumericArray::matrix(1, SIGNAL_LEN, input.gsr.clone())?);
        let emg_l = self.emg_length_match(tape, vars, EmgSide::Left, &input.emg_left)?;
        let emg_r = self.emg_length_match(tape, vars, EmgSide::Right, &input.emg_right)?;
        let stacked = tape.concat(&[ecg, gsr, emg_l, emg_r], 0)?;
        let normalized = self.revin(tape, vars, stacked)?;
        self.patch_embed(tape, vars, normalized)
    }

    /// Full forward pass to logits. Pass an RNG only when training with
    /// dropout.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        input: &ModelInput,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let physio = self.physio_tokens(tape, vars, input)?;
        let cp = self.cp_embed(tape, vars, &input.cp)?;
        let pooled = match self.config.architecture {
            Architecture::Fusion => self.encoder_forward(tape, vars, physio, cp, rng)?,
            Architecture::ConcatBaseline => self.concat_baseline_forward(tape, vars, physio, cp, rng)?,
        };
        self.classify(tape, vars, pooled)
    }

    /// Mean cross-entropy over a batch of `(input, class)` pairs.
    pub fn batch_loss(&self, tape: &mut Tape<'_>, vars: &[Var], batch: &[(&ModelInput, usize)]) -> Result<Var> {
        if batch.is_empty() {
            return Err(shape_err!("empty batch"));
        }
        let mut total: Option<Var> = None;
        for (input, class) in batch {
            let logits = self.forward(tape, vars, input, None)?;
            let l = tape.cross_entropy(logits, *class)?;
            total = Some(match total {
                Some(t) => tape.add(t, l)?,
                None => l,
            });
        }
        Ok(tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64))
    }

    /// Inference-mode logits.
    pub fn logits(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let z = self.forward(&mut tape, &vars, input, None)?;
        Ok(tape.value(z).to_vec())
    }

    pub fn predict(&self, input: &ModelInput) -> Result<usize> {
        Ok(predict(&self.logits(input)?))
    }
}

impl ModelInput {
    /// Uniform random signals and a partly stacked CP vector; for checks
    /// that need inputs but no data.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let (ecg, gsr) = (v(SIGNAL_LEN), v(SIGNAL_LEN));
        let (emg_left, emg_right) = (v(EMG_WINDOWS * EMG_WINDOW_LEN), v(EMG_WINDOWS * EMG_WINDOW_LEN));
        let mut cp = [-1.0; CP_TOKENS];
        for (k, slot) in cp.iter_mut().take(4).enumerate() {
            *slot = if k < 2 { 0.0 } else { rng.gen_range(0.0..1.0) };
        }
        ModelInput {
            ecg,
            gsr,
            emg_left,
            emg_right,
            cp,
        }
    }
}

/// Gradient check of the batch cross-entropy of a freshly initialized model
/// on `batch` random inputs with cycling class targets.
pub fn model_grad_check(config: &ModelConfig, batch: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let model = PptpModel::new(config.clone(), opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6772_6164);
    let inputs: Vec<ModelInput> = (0..batch).map(|_| ModelInput::random(&mut rng)).collect();
    let pairs: Vec<(&ModelInput, usize)> = inputs.iter().enumerate().map(|(i, x)| (x, i % config.n_classes)).collect();
    grad_check(|t, vars| model.batch_loss(t, vars, &pairs), model.params().arrays(), opts)
}

/// Arg-max with ties going to the lowest class id.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
