use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Result};

pub struct AttentionOutput {
    /// `[Tq, d]`, heads joined along columns.
    pub out: Var,
    /// Per-head `[Tq, Tk]` attention probabilities.
    pub probs: Vec<Var>,
}

/// Index into a relative-position bias table of `2 · max_dist + 1` rows for
/// every (query, key) pair, row-major: `clip(pos_q[i] - pos_k[j]) + max_dist`.
pub fn relative_position_ids(pos_q: &[usize], pos_k: &[usize], max_dist: usize) -> Vec<usize> {
    let r = max_dist as i64;
    pos_q
        .iter()
        .flat_map(|&i| pos_k.iter().map(move |&j| ((i as i64 - j as i64).clamp(-r, r) + r) as usize))
        .collect()
}

/// Scaled dot-product attention over already projected `q [Tq,d]`,
/// `k [Tk,d]`, `v [Tk,d]`, split into `n_heads` column groups.
///
/// `bias`, when given, is `[Tq·Tk, n_heads]` and is added to each head's
/// logits before the softmax.
pub fn multi_head_attention(
    tape: &mut Tape<'_>,
    q: Var,
    k: Var,
    v: Var,
    n_heads: usize,
    bias: Option<Var>,
) -> Result<AttentionOutput> {
    let (tq, d) = match tape.shape(q) {
        [a, b] => (*a, *b),
        s => return Err(shape_err!("attention query must be a matrix, got {s:?}")),
    };
    let tk = tape.shape(k)[0];
    if tape.shape(k) != [tk, d] || tape.shape(v) != [tk, d] {
        return Err(shape_err!(
            "attention q {:?}, k {:?}, v {:?}",
            tape.shape(q),
            tape.shape(k),
            tape.shape(v)
        ));
    }
    if n_heads == 0 || d % n_heads != 0 {
        return Err(shape_err!("width {d} not divisible into {n_heads} heads"));
    }
    if let Some(b) = bias {
        if tape.shape(b) != [tq * tk, n_heads] {
            return Err(shape_err!("attention bias {:?}, want [{}, {n_heads}]", tape.shape(b), tq * tk));
        }
    }
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (tape.slice(q, 1, lo, hi)?, tape.slice(k, 1, lo, hi)?, tape.slice(v, 1, lo, hi)?)
        };
        let kt = tape.transpose(kh)?;
        let raw = tape.matmul(qh, kt)?;
        let mut logits = tape.scale(raw, scale);
        if let Some(b) = bias {
            let col = tape.slice(b, 1, h, h + 1)?;
            let bh = tape.reshape(col, &[tq, tk])?;
            logits = tape.add(logits, bh)?;
        }
        let p = tape.softmax(logits, 1)?;
        heads.push(tape.matmul(p, vh)?);
        probs.push(p);
    }
    let out = if n_heads == 1 { heads[0] } else { tape.concat(&heads, 1)? };
    Ok(AttentionOutput { out, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::NumericArray;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> NumericArray {
        NumericArray::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = Tape::new();
        let q = t.constant(random(&mut rng, 7, 8));
        let k = t.constant(random(&mut rng, 5, 8));
        let v = t.constant(random(&mut rng, 5, 8));
        let b = t.constant(random(&mut rng, 35, 2));
        let out = multi_head_attention(&mut t, q, k, v, 2, Some(b)).unwrap();
        assert_eq!(t.shape(out.out), &[7, 8]);
        for p in out.probs {
            for row in t.value(p).chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|x| *x >= 0.0));
            }
        }
    }

    #[test]
    fn uniform_logits_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::new();
        let q = t.constant(NumericArray::zeros([3, 4]));
        let k = t.constant(random(&mut rng, 6, 4));
        let va = random(&mut rng, 6, 4);
        let v = t.constant(va.clone());
        let out = multi_head_attention(&mut t, q, k, v, 1, None).unwrap();
        for row in t.value(out.out).chunks(4) {
            for c in 0..4 {
                let mean: f64 = (0..6).map(|r| va.data()[r * 4 + c]).sum::<f64>() / 6.0;
                assert!((row[c] - mean).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn relative_ids_are_shift_invariant() {
        let a = relative_position_ids(&[0, 1, 2, 30], &[0, 1, 2, 30], 16);
        let b = relative_position_ids(&[5, 6, 7, 35], &[5, 6, 7, 35], 16);
        assert_eq!(a, b);
        assert_eq!(a[0], 16);
        assert_eq!(a[3], 0); // 0 - 30 clipped to -16
        assert_eq!(a[12], 32); // 30 - 0 clipped to +16
    }
}
