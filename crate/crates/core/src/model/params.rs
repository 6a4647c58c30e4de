use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::autodiff::NumericArray;
use crate::error::{Error, Result};

const CHECKPOINT_TAG: &str = "pptp-checkpoint v1";

/// Named parameter arrays in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    arrays: Vec<NumericArray>,
}

impl ParamStore {
    pub(crate) fn push(&mut self, name: impl Into<String>, a: NumericArray) -> usize {
        self.names.push(name.into());
        self.arrays.push(a);
        self.arrays.len() - 1
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arrays(&self) -> &[NumericArray] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [NumericArray] {
        &mut self.arrays
    }

    pub fn get(&self, name: &str) -> Option<&NumericArray> {
        self.names.iter().position(|n| n == name).map(|i| &self.arrays[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NumericArray> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.arrays[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(NumericArray::len).sum()
    }
}

/// `uniform(±1/√fan_in)` for a `[fan_in, fan_out]` weight.
pub(crate) fn init_linear(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> NumericArray {
    init_uniform(rng, fan_in, fan_out, 1.0 / (fan_in as f64).sqrt())
}

/// `uniform(±bound)` for a `[fan_in, fan_out]` weight.
pub(crate) fn init_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize, bound: f64) -> NumericArray {
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
    NumericArray::new([fan_in, fan_out], data).expect("linear shape")
}

/// `normal(0, 0.02)` embedding table.
pub(crate) fn init_embedding(rng: &mut impl Rng, shape: &[usize]) -> NumericArray {
    let normal = Normal::new(0.0, 0.02).expect("valid normal");
    let n = shape.iter().product();
    NumericArray::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).expect("embedding shape")
}

/// Writes the checkpoint: a text manifest (version tag, config, one
/// `tensor <name> <d0>x<d1>…` line per array, `end`) followed by the arrays
/// as little-endian `f32` in manifest order.
pub fn write_checkpoint(path: &Path, config: &ModelConfig, params: &ParamStore) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{CHECKPOINT_TAG}")?;
    writeln!(w, "config {}", serde_json::to_string(config)?)?;
    for (name, a) in params.names.iter().zip(&params.arrays) {
        let dims: Vec<String> = a.shape().iter().map(usize::to_string).collect();
        writeln!(w, "tensor {name} {}", dims.join("x"))?;
    }
    writeln!(w, "end")?;
    for a in &params.arrays {
        for &v in a.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) struct RawCheckpoint {
    pub config: ModelConfig,
    pub tensors: Vec<(String, NumericArray)>,
}

pub(crate) fn read_checkpoint(path: &Path) -> Result<RawCheckpoint> {
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<std::fs::File>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("unexpected end of manifest".into()));
        }
        Ok(line.trim_end_matches('\n').to_string())
    };

    let tag = next_line(&mut r)?;
    if tag != CHECKPOINT_TAG {
        return Err(bad(format!("unsupported version tag {tag:?}")));
    }
    let cfg_line = next_line(&mut r)?;
    let config: ModelConfig = serde_json::from_str(
        cfg_line
            .strip_prefix("config ")
            .ok_or_else(|| bad("missing config line".into()))?,
    )?;
    let mut manifest = Vec::new();
    loop {
        let l = next_line(&mut r)?;
        if l == "end" {
            break;
        }
        let mut parts = l.split(' ');
        let (Some("tensor"), Some(name), Some(dims), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad(format!("bad manifest line {l:?}")));
        };
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|e| bad(format!("bad dim in {l:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        manifest.push((name.to_string(), shape));
    }
    let mut tensors = Vec::with_capacity(manifest.len());
    let mut buf = [0u8; 4];
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|_| bad(format!("truncated data for {name}")))?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        tensors.push((name, NumericArray::new(shape, data)?));
    }
    if r.read(&mut buf)? != 0 {
        return Err(bad("trailing bytes after last tensor".into()));
    }
    Ok(RawCheckpoint { config, tensors })
}
