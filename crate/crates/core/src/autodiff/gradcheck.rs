use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NumericArray, Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Arrays larger than this are checked on a random sample of coordinates.
    pub max_coords_per_array: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords_per_array: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Largest error per parameter array, in input order.
    pub per_array: Vec<f64>,
    /// `(array, coordinate)` where the largest error occurred.
    pub worst: (usize, usize),
    pub coords_checked: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` builds a scalar on the tape from the parameter leaves it is handed.
/// It must be deterministic.
pub fn grad_check<F>(f: F, params: &[NumericArray], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>,
{
    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
        let loss = f(&mut tape, &vars)?;
        tape.backward(loss)?;
        vars.iter()
            .zip(params)
            .map(|(v, p)| tape.grad(*v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
            .collect()
    };

    let eval = |params: &[NumericArray]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<NumericArray> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_array: vec![0.0; params.len()],
        worst: (0, 0),
        coords_checked: 0,
    };
    for (ai, p) in params.iter().enumerate() {
        let coords: Vec<usize> = if p.len() <= opts.max_coords_per_array {
            (0..p.len()).collect()
        } else {
            let mut c = rand::seq::index::sample(&mut rng, p.len(), opts.max_coords_per_array).into_vec();
            c.sort_unstable();
            c
        };
        for c in coords {
            let orig = p.data()[c];
            work[ai].data_mut()[c] = orig + opts.eps;
            let plus = eval(&work)?;
            work[ai].data_mut()[c] = orig - opts.eps;
            let minus = eval(&work)?;
            work[ai].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = relative_error(analytic[ai][c], numeric);
            report.coords_checked += 1;
            if err > report.per_array[ai] {
                report.per_array[ai] = err;
            }
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (ai, c);
            }
        }
    }
    Ok(report)
}

/// Reduces `y` to a scalar through fixed, irregular weights so every output
/// coordinate reaches the loss with a distinct nonzero weight.
fn project(t: &mut Tape<'_>, y: Var) -> Result<Var> {
    let shape = t.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let w = (0..n).map(|i| (0.7 * i as f64 + 0.3).sin() + 0.1).collect();
    let w = t.constant(NumericArray::new(shape, w)?);
    let prod = t.mul(y, w)?;
    Ok(t.sum(prod))
}

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize]) -> NumericArray {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    NumericArray::new(shape.to_vec(), data).expect("shape matches data")
}

type PrimitiveFn = fn(&mut Tape<'_>, &[Var]) -> Result<Var>;

/// Checks every tape primitive in isolation on random inputs; returns one
/// `(name, report)` per primitive.
pub fn primitive_checks(opts: &GradCheckOptions) -> Result<Vec<(&'static str, GradCheckReport)>> {
    use super::Along;
    let cases: Vec<(&'static str, Vec<Vec<usize>>, PrimitiveFn)> = vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| t.matmul(v[0], v[1])),
        ("add", vec![vec![2, 3], vec![2, 3]], |t, v| t.add(v[0], v[1])),
        ("sub", vec![vec![2, 3], vec![2, 3]], |t, v| t.sub(v[0], v[1])),
        ("mul", vec![vec![2, 3], vec![2, 3]], |t, v| t.mul(v[0], v[1])),
        ("scale", vec![vec![5]], |t, v| Ok(t.scale(v[0], -1.7))),
        ("add_broadcast_rows", vec![vec![3, 4], vec![4]], |t, v| t.add_broadcast(v[0], v[1], Along::Rows)),
        ("add_broadcast_cols", vec![vec![3, 4], vec![3]], |t, v| t.add_broadcast(v[0], v[1], Along::Cols)),
        ("mul_broadcast_rows", vec![vec![3, 4], vec![4]], |t, v| t.mul_broadcast(v[0], v[1], Along::Rows)),
        ("mul_broadcast_cols", vec![vec![3, 4], vec![3]], |t, v| t.mul_broadcast(v[0], v[1], Along::Cols)),
        ("concat_rows", vec![vec![2, 3], vec![1, 3]], |t, v| t.concat(&[v[0], v[1]], 0)),
        ("concat_cols", vec![vec![2, 3], vec![2, 2]], |t, v| t.concat(&[v[0], v[1]], 1)),
        ("slice", vec![vec![3, 5]], |t, v| t.slice(v[0], 1, 1, 4)),
        ("transpose", vec![vec![3, 2]], |t, v| t.transpose(v[0])),
        ("reshape", vec![vec![2, 6]], |t, v| t.reshape(v[0], &[3, 4])),
        ("gelu", vec![vec![7]], |t, v| Ok(t.gelu(v[0]))),
        ("softmax_rows", vec![vec![3, 4]], |t, v| t.softmax(v[0], 1)),
        ("softmax_cols", vec![vec![3, 4]], |t, v| t.softmax(v[0], 0)),
        ("layernorm_nobias", vec![vec![3, 6], vec![6]], |t, v| t.layernorm_nobias(v[0], v[1])),
        ("embedding", vec![vec![4, 3]], |t, v| t.embedding(v[0], &[2, 0, 2, 3])),
        ("mean_pool", vec![vec![4, 3]], |t, v| t.mean_pool(v[0], 0)),
        ("cross_entropy", vec![vec![5]], |t, v| t.cross_entropy(v[0], 2)),
        ("sum", vec![vec![2, 2]], |t, v| Ok(t.sum(v[0]))),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    cases
        .into_iter()
        .map(|(name, shapes, op)| {
            let params: Vec<NumericArray> = shapes.iter().map(|s| random_array(&mut rng, s)).collect();
            let report = grad_check(
                |t, v| {
                    let y = op(t, v)?;
                    project(t, y)
                },
                &params,
                opts,
            )?;
            Ok((name, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = [NumericArray::vector(vec![3.0])];
        let r = grad_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum(sq))
            },
            &p,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.coords_checked, 1);
    }

    #[test]
    fn broken_gradient_is_detected() {
        // Detaching hides the dependence from the analytic pass only.
        let p = [NumericArray::vector(vec![1.5, -0.5])];
        let r = grad_check(
            |t, v| {
                let d = t.detach(v[0]);
                let y = t.mul(d, v[0])?;
                Ok(t.sum(y))
            },
            &p,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn every_primitive_passes() {
        for (name, r) in primitive_checks(&GradCheckOptions::default()).unwrap() {
            assert!(r.max_rel_error <= 1e-6, "{name}: {r:?}");
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
        assert!((relative_error(1.0, 3.0) - 0.5).abs() < 1e-15);
    }
}
