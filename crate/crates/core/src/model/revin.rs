//! Reversible instance normalization for a single channel window.
//!
//! The differentiable version used inside the network lives in
//! [`super::PptpModel::revin`]; these plain functions carry the saved
//! statistics so a window can be mapped back to sensor units.

pub const REVIN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevinState {
    pub mean: f64,
    /// `sqrt(var + eps)`, so never below `sqrt(eps)`.
    pub std: f64,
    pub gain: f64,
    pub shift: f64,
}

/// Standardizes `x` to zero mean and unit variance, then applies the affine
/// `gain · x̂ + shift`.
pub fn revin_normalize(x: &[f64], gain: f64, shift: f64) -> (Vec<f64>, RevinState) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = (var + REVIN_EPS).sqrt();
    let y = x.iter().map(|v| (v - mean) / std * gain + shift).collect();
    (
        y,
        RevinState {
            mean,
            std,
            gain,
            shift,
        },
    )
}

pub fn revin_denormalize(state: &RevinState, y: &[f64]) -> Vec<f64> {
    y.iter()
        .map(|v| (v - state.shift) / state.gain * state.std + state.mean)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_window() {
        let x = vec![4.25; 375];
        let (y, st) = revin_normalize(&x, 1.0, 0.0);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        let back = revin_denormalize(&st, &y);
        assert!(back.iter().all(|v| (v - 4.25).abs() < 1e-6));
    }

    proptest! {
        #[test]
        fn round_trip(x in prop::collection::vec(-100.0f64..100.0, 2..400),
                      gain in 0.5f64..2.0, shift in -1.0f64..1.0) {
            let (y, st) = revin_normalize(&x, gain, shift);
            let back = revin_denormalize(&st, &y);
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn standardized(x in prop::collection::vec(-10.0f64..10.0, 375)) {
            let (y, st) = revin_normalize(&x, 1.0, 0.0);
            prop_assume!(st.std > 0.1);
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - 1.0).abs() < 1e-3);
        }
    }
}
