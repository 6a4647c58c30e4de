use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{grad_check, GradCheckOptions};

fn random_input(seed: u64) -> ModelInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let (ecg, gsr) = (v(SIGNAL_LEN), v(SIGNAL_LEN));
    let (emg_left, emg_right) = (v(EMG_WINDOWS * EMG_WINDOW_LEN), v(EMG_WINDOWS * EMG_WINDOW_LEN));
    ModelInput {
        ecg,
        gsr,
        emg_left,
        emg_right,
        cp: [0.0, 0.1, 0.38, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0],
    }
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        ffn_mult: 2,
        patch_len: 75,
        plain_per_group: 1,
        groups: 1,
        rel_pos_max_dist: 3,
        emg_hidden: 3,
        ..Default::default()
    }
}

fn pooled(model: &PptpModel, input: &ModelInput) -> Vec<f64> {
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let physio = model.physio_tokens(&mut t, &vars, input).unwrap();
    let cp = model.cp_embed(&mut t, &vars, &input.cp).unwrap();
    let out = model.encoder_forward(&mut t, &vars, physio, cp, None).unwrap();
    t.value(out).to_vec()
}

#[test]
fn emg_match_outputs_375_and_maps_zero_to_zero() {
    let model = PptpModel::new(ModelConfig::desk(), 1).unwrap();
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let input = random_input(2);
    let y = model.emg_length_match(&mut t, &vars, EmgSide::Left, &input.emg_left).unwrap();
    assert_eq!(t.shape(y), &[1, SIGNAL_LEN]);
    let zeros = vec![0.0; EMG_WINDOWS * EMG_WINDOW_LEN];
    let z = model.emg_length_match(&mut t, &vars, EmgSide::Right, &zeros).unwrap();
    assert!(t.value(z).iter().all(|&v| v == 0.0));
    assert!(model.emg_length_match(&mut t, &vars, EmgSide::Left, &zeros[1..]).is_err());
}

#[test]
fn emg_padding_rule() {
    let w: Vec<f64> = vec![1.5; EMG_WINDOW_LEN];
    let windows: Vec<&[f64]> = vec![&w; 20];
    let padded = pad_emg(&windows, true).unwrap();
    assert!(padded[..20 * EMG_WINDOW_LEN].iter().all(|&v| v == 1.5));
    assert!(padded[20 * EMG_WINDOW_LEN..].iter().all(|&v| v == 0.0));
    let masked = pad_emg(&windows, false).unwrap();
    assert!(masked.iter().all(|&v| v == 0.0));
    let too_many: Vec<&[f64]> = vec![&w; 28];
    assert!(matches!(pad_emg(&too_many, true), Err(Error::Shape(_))));
}

#[test]
fn revin_layer_matches_plain_function() {
    let mut model = PptpModel::new(ModelConfig::desk(), 3).unwrap();
    model.params_mut().get_mut("revin.gain").unwrap().data_mut()[1] = 1.7;
    model.params_mut().get_mut("revin.shift").unwrap().data_mut()[1] = -0.3;
    let input = random_input(4);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let mut stacked = input.ecg.clone();
    stacked.extend(&input.gsr);
    stacked.extend(&input.ecg);
    stacked.extend(&input.gsr);
    let x = t.constant(NumericArray::matrix(4, SIGNAL_LEN, stacked).unwrap());
    let y = model.revin(&mut t, &vars, x).unwrap();
    let (expected, _) = revin_normalize(&input.gsr, 1.7, -0.3);
    for (a, b) in t.value(y)[SIGNAL_LEN..2 * SIGNAL_LEN].iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn patch_embedding_shapes() {
    let model = PptpModel::new(ModelConfig::desk(), 1).unwrap();
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let x = t.constant(NumericArray::zeros([4, SIGNAL_LEN]));
    let tokens = model.patch_embed(&mut t, &vars, x).unwrap();
    assert_eq!(t.shape(tokens), &[60, 64]);

    let one_patch = PptpModel::new(
        ModelConfig {
            patch_len: 375,
            ..ModelConfig::desk()
        },
        1,
    )
    .unwrap();
    let mut t = Tape::new();
    let vars = one_patch.bind(&mut t);
    let x = t.constant(NumericArray::zeros([4, SIGNAL_LEN]));
    let v = one_patch.patch_embed(&mut t, &vars, x).unwrap();
    assert_eq!(t.shape(v), &[4, 64]);

    let bad = ModelConfig {
        patch_len: 40,
        ..ModelConfig::desk()
    };
    assert!(matches!(PptpModel::new(bad, 1), Err(Error::Config(_))));
}

#[test]
fn cp_tokens_share_the_value_map() {
    let model = PptpModel::new(ModelConfig::desk(), 1).unwrap();
    let d = 64;
    let pos = model.params().get("cp.pos_emb").unwrap().data().to_vec();
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let tokens = model.cp_embed(&mut t, &vars, &[-1.0; 10]).unwrap();
    let v = t.value(tokens).to_vec();
    for k in 1..10 {
        for j in 0..d {
            let a = v[k * d + j] - pos[k * d + j];
            let b = v[j] - pos[j];
            assert!((a - b).abs() < 1e-12);
        }
    }
    let again = model.cp_embed(&mut t, &vars, &[-1.0; 10]).unwrap();
    assert_eq!(t.value(again), &v[..]);

    let mut f = [-1.0; 10];
    f[3] = 0.7;
    let changed = model.cp_embed(&mut t, &vars, &f).unwrap();
    let w = t.value(changed);
    for k in 0..10 {
        let same = (0..d).all(|j| w[k * d + j] == v[k * d + j]);
        assert_eq!(same, k != 3, "token {k}");
    }
}

#[test]
fn desk_encoder_output_shape_and_determinism() {
    let model = PptpModel::new(ModelConfig::desk(), 11).unwrap();
    let input = random_input(12);
    let a = pooled(&model, &input);
    assert_eq!(a.len(), 64);
    assert_eq!(a, pooled(&model, &input));
    assert_eq!(model.logits(&input).unwrap().len(), 3);
}

#[test]
fn cp_guidance_acts_only_through_fusion_stages() {
    let mut model = PptpModel::new(ModelConfig::desk(), 5).unwrap();
    let input = random_input(6);
    let with = pooled(&model, &input);
    model.set_cp_guidance(false);
    let without = pooled(&model, &input);
    assert!(with.iter().zip(&without).any(|(a, b)| (a - b).abs() > 1e-9));

    // Silencing the cross-attention output projections removes the only
    // path by which guidance enters.
    let names: Vec<String> = model.params().names().iter().filter(|n| n.ends_with("cross.wo")).cloned().collect();
    assert_eq!(names.len(), 2);
    for n in names {
        model.params_mut().get_mut(&n).unwrap().data_mut().fill(0.0);
    }
    let without = pooled(&model, &input);
    model.set_cp_guidance(true);
    let with = pooled(&model, &input);
    for (a, b) in with.iter().zip(&without) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn cp_token_order_does_not_matter_once_positions_follow() {
    let mut model = PptpModel::new(ModelConfig::desk(), 21).unwrap();
    let mut input = random_input(22);
    input.cp = [0.0, 0.0, 0.3, 0.55, 1.1, -1.0, -1.0, -1.0, -1.0, -1.0];
    let base = pooled(&model, &input);

    let perm = [3, 7, 0, 9, 1, 4, 8, 2, 6, 5];
    let d = 64;
    let pos = model.params().get("cp.pos_emb").unwrap().data().to_vec();
    let permuted_pos = model.params_mut().get_mut("cp.pos_emb").unwrap();
    for (new_k, &old_k) in perm.iter().enumerate() {
        permuted_pos.data_mut()[new_k * d..(new_k + 1) * d].copy_from_slice(&pos[old_k * d..(old_k + 1) * d]);
    }
    let mut permuted = input.clone();
    for (new_k, &old_k) in perm.iter().enumerate() {
        permuted.cp[new_k] = input.cp[old_k];
    }
    let out = pooled(&model, &permuted);
    for (a, b) in base.iter().zip(&out) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn zero_head_gives_uniform_logits_and_lowest_class() {
    let mut model = PptpModel::new(ModelConfig::desk(), 1).unwrap();
    model.params_mut().get_mut("head.w").unwrap().data_mut().fill(0.0);
    let logits = model.logits(&random_input(1)).unwrap();
    assert!(logits.iter().all(|&v| v == logits[0]));
    assert_eq!(predict(&logits), 0);
    assert_eq!(predict(&[0.1, 2.0, 0.3]), 1);
    assert_eq!(predict(&[1.0, 3.0, 3.0]), 1);
}

#[test]
fn softmax_of_logits_sums_to_one() {
    let model = PptpModel::new(ModelConfig::desk(), 8).unwrap();
    let logits = model.logits(&random_input(9)).unwrap();
    let lse = crate::autodiff::kernels::log_sum_exp(&logits);
    let s: f64 = logits.iter().map(|v| (v - lse).exp()).sum();
    assert!((s - 1.0).abs() < 1e-6);
}

#[test]
fn concat_baseline_sees_seventy_tokens() {
    let cfg = ModelConfig {
        architecture: Architecture::ConcatBaseline,
        ..ModelConfig::desk()
    };
    let model = PptpModel::new(cfg.clone(), 4).unwrap();
    assert!(model.params().names().iter().all(|n| !n.contains("cross")));
    let input = random_input(3);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let physio = model.physio_tokens(&mut t, &vars, &input).unwrap();
    let cp = model.cp_embed(&mut t, &vars, &input.cp).unwrap();
    let all = t.concat(&[physio, cp], 0).unwrap();
    assert_eq!(t.shape(all)[0], 70);
    let out = model.concat_baseline_forward(&mut t, &vars, physio, cp, None).unwrap();
    assert_eq!(t.shape(out), &[64]);
    for n_classes in [3, 7] {
        let m = PptpModel::new(
            ModelConfig {
                n_classes,
                ..cfg.clone()
            },
            4,
        )
        .unwrap();
        assert_eq!(m.logits(&input).unwrap().len(), n_classes);
    }
}

#[test]
fn zero_cp_tokens_only_rescale_the_pool() {
    // Mean over 60 signal tokens plus 10 zero tokens is 60/70 of the signal mean.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f64> = (0..60 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut t = Tape::new();
    let physio = t.constant(NumericArray::matrix(60, 8, data).unwrap());
    let zeros = t.constant(NumericArray::zeros([10, 8]));
    let joined = t.concat(&[physio, zeros], 0).unwrap();
    let a = t.mean_pool(joined, 0).unwrap();
    let b = t.mean_pool(physio, 0).unwrap();
    for (x, y) in t.value(a).iter().zip(t.value(b)) {
        assert!((x * 70.0 / 60.0 - y).abs() < 1e-12);
    }
}

#[test]
fn encoder_rejects_wrong_token_shapes() {
    let model = PptpModel::new(ModelConfig::desk(), 1).unwrap();
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let physio = t.constant(NumericArray::zeros([59, 64]));
    let cp = t.constant(NumericArray::zeros([10, 64]));
    assert!(matches!(
        model.encoder_forward(&mut t, &vars, physio, cp, None),
        Err(Error::Shape(_))
    ));
}

#[test]
fn tiny_model_gradients_match_differences() {
    let model = PptpModel::new(tiny_config(), 31).unwrap();
    let (a, b) = (random_input(32), random_input(33));
    let batch = [(&a, 0usize), (&b, 2usize)];
    let report = grad_check(
        |t, vars| model.batch_loss(t, vars, &batch),
        model.params().arrays(),
        &GradCheckOptions {
            max_coords_per_array: 20,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn checkpoint_round_trip() {
    let model = PptpModel::new(tiny_config(), 41).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let loaded = PptpModel::load(&path).unwrap();
    assert_eq!(loaded.config(), model.config());
    assert_eq!(loaded.params().names(), model.params().names());
    for (x, y) in loaded.params().arrays().iter().zip(model.params().arrays()) {
        assert_eq!(x.shape(), y.shape());
        for (p, q) in x.data().iter().zip(y.data()) {
            assert_eq!(*p, *q as f32 as f64);
        }
    }
    let input = random_input(42);
    let (l1, l2) = (loaded.logits(&input).unwrap(), model.logits(&input).unwrap());
    for (p, q) in l1.iter().zip(&l2) {
        assert!((p - q).abs() < 1e-4);
    }

    let text = std::fs::read(&path).unwrap();
    assert!(text.starts_with(b"pptp-checkpoint v1\nconfig {"));
    std::fs::write(&path, &text[..text.len() - 3]).unwrap();
    assert!(matches!(PptpModel::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn signal_mask_parsing() {
    assert_eq!("ecg+gsr+emg".parse::<SignalMask>().unwrap(), SignalMask::ALL);
    assert_eq!("all".parse::<SignalMask>().unwrap(), SignalMask::ALL);
    let m: SignalMask = "GSR".parse().unwrap();
    assert!(m.gsr && !m.ecg && !m.emg);
    assert!("none".parse::<SignalMask>().unwrap().is_empty());
    assert!("eeg".parse::<SignalMask>().is_err());
    assert_eq!(SignalMask::ALL.label(), "ECG+GSR+EMG");
}
