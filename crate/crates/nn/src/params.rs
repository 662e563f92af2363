use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::spec::{LayerSpec, ModelSpec};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"AMGP";
const FORMAT_VERSION: u32 = 1;

/// Trainable tensors, one list per layer in spec order. Layout per layer:
///
/// - Dense: `[w: in x units, b: units]`
/// - Conv1D: `[w: kernel x in_channels x filters, b: filters]`
/// - GRU: `[input: in x 3H, recurrent: H x 3H, bias: 3H]`
/// - everything else: no tensors
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub layers: Vec<Vec<Tensor>>,
}

impl Params {
    /// Glorot-uniform weights and zero biases, drawn from a seeded stream.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |shape: &[usize], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
            Tensor::new(shape.to_vec(), data).unwrap()
        };
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match *layer {
                LayerSpec::Dense { units } => {
                    let fan_in = input.size();
                    vec![
                        glorot(&[fan_in, units], fan_in, units),
                        Tensor::zeros(&[units]),
                    ]
                }
                LayerSpec::Conv1d { filters, kernel_size } => {
                    let ch = input.width();
                    vec![
                        glorot(&[kernel_size, ch, filters], kernel_size * ch, kernel_size * filters),
                        Tensor::zeros(&[filters]),
                    ]
                }
                LayerSpec::Gru { units } => {
                    let inputs = input.width();
                    vec![
                        glorot(&[inputs, 3 * units], inputs, 3 * units),
                        glorot(&[units, 3 * units], units, 3 * units),
                        Tensor::zeros(&[3 * units]),
                    ]
                }
                _ => Vec::new(),
            })
            .collect();
        Ok(Self { layers })
    }

    /// Params with every tensor replaced by zeros of the same shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|ts| ts.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flatten()
    }

    pub fn count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Checks tensor shapes against `spec`.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let reference = Self::init(spec, 0)?;
        let ok = reference.layers.len() == self.layers.len()
            && reference
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape()));
        if ok {
            Ok(())
        } else {
            Err(NnError::Format("parameter shapes do not match the model spec".into()))
        }
    }

    /// Binary layout: magic `AMGP`, u32 version, u64 spec fingerprint, u32
    /// tensor count, then per tensor a u32 rank, u32 dims and f64 data, all
    /// little-endian, in layer order.
    pub fn write_to<W: Write>(&self, spec: &ModelSpec, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&spec.fingerprint().to_le_bytes())?;
        let tensors: Vec<&Tensor> = self.tensors().collect();
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for t in tensors {
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(spec: &ModelSpec, mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let mut fp = [0u8; 8];
        r.read_exact(&mut fp)?;
        if u64::from_le_bytes(fp) != spec.fingerprint() {
            return Err(NnError::Format("params were saved for a different model spec".into()));
        }
        let mut out = Self::init(spec, 0)?;
        let expected = out.tensors().count();
        let count = read_u32(&mut r)? as usize;
        if count != expected {
            return Err(NnError::Format(format!("expected {expected} tensors, found {count}")));
        }
        for t in out.tensors_mut() {
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if shape != t.shape() {
                return Err(NnError::Format(format!(
                    "tensor shape {shape:?} does not match expected {:?}",
                    t.shape()
                )));
            }
            let mut buf = [0u8; 8];
            for v in t.data_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        Ok(out)
    }

    pub fn save(&self, spec: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(spec, &mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(spec, bytes.as_slice())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
