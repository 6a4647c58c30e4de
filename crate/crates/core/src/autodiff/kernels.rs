//! Plain slice kernels shared by the forward and backward passes.

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c[m,n] += a[m,k] · b[k,n]`
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip != 0.0 {
                axpy(aip, &b[p * n..(p + 1) * n], crow);
            }
        }
    }
}

/// `c[m,k] += g[m,n] · b[k,n]ᵀ`
pub fn matmul_bt_acc(g: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] += dot(grow, &b[p * n..(p + 1) * n]);
        }
    }
}

/// `c[k,n] += a[m,k]ᵀ · g[m,n]`
pub fn matmul_at_acc(a: &[f64], g: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                axpy(aip, grow, &mut c[p * n..(p + 1) * n]);
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// In-place stable softmax of a strided lane.
pub fn softmax_lane(src: &[f64], dst: &mut [f64], base: usize, len: usize, stride: usize) {
    let mut max = f64::NEG_INFINITY;
    for j in 0..len {
        max = max.max(src[base + j * stride]);
    }
    let mut sum = 0.0;
    for j in 0..len {
        let e = (src[base + j * stride] - max).exp();
        dst[base + j * stride] = e;
        sum += e;
    }
    let inv = 1.0 / sum;
    for j in 0..len {
        dst[base + j * stride] *= inv;
    }
}

/// `ln Σ exp(x)` computed stably.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..7).map(|i| i as f64).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }

    #[test]
    fn matmul_kernels_agree_with_naive() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        matmul_acc(&a, &b, &mut c, m, k, n);
        for i in 0..m {
            for j in 0..n {
                let naive: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c[i * n + j] - naive).abs() < 1e-12);
            }
        }
        // g·bᵀ with g = c recovers a shape [m,k]
        let mut gbt = vec![0.0; m * k];
        matmul_bt_acc(&c, &b, &mut gbt, m, k, n);
        let mut atg = vec![0.0; k * n];
        matmul_at_acc(&a, &c, &mut atg, m, k, n);
        for i in 0..m {
            for p in 0..k {
                let naive: f64 = (0..n).map(|j| c[i * n + j] * b[p * n + j]).sum();
                assert!((gbt[i * k + p] - naive).abs() < 1e-12);
            }
        }
        for p in 0..k {
            for j in 0..n {
                let naive: f64 = (0..m).map(|i| a[i * k + p] * c[i * n + j]).sum();
                assert!((atg[p * n + j] - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-5.0, -1.3, -0.2, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
