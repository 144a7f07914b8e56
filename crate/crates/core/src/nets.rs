//! Feed-forward teacher/student networks with a unit-norm embedding head.
//!
//! `layer_dims = [input, hidden.., embed_dim, classes]`. Hidden layers use ReLU.
//! The layer producing `embed_dim` values is the embedding layer: its raw
//! output is L2-normalized to give the embedding, and the final linear layer
//! maps the same raw output to class logits, so the classifier and the
//! embedding share one trunk.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndgrad::{Graph, Tensor, Var};
use crate::synthdata::Dataset;

const CHECKPOINT_MAGIC: &[u8; 4] = b"MKDC";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `[fan_in, fan_out]`
    pub weight: Tensor,
    /// `[fan_out]`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    embed_layer_index: usize,
    layers: Vec<Layer>,
}

/// Graph-side view of a model's parameters.
pub struct BoundMlp<'g> {
    params: Vec<(Var<'g>, Var<'g>)>,
    embed_layer_index: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct MlpOutput<'g> {
    /// Raw embedding-layer output, before normalization.
    pub features: Var<'g>,
    pub logits: Var<'g>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 3 {
            return Err(Error::contract(format!(
                "need at least [input, embed, classes], got {layer_dims:?}"
            )));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!("layer sizes must be positive: {layer_dims:?}")));
        }
        let classes = layer_dims[layer_dims.len() - 1];
        let embed = layer_dims[layer_dims.len() - 2];
        if embed <= classes {
            return Err(Error::contract(format!(
                "embedding width {embed} must exceed the class count {classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("sized"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect::<Vec<_>>();
        Ok(MlpModel {
            layer_dims: layer_dims.to_vec(),
            embed_layer_index: layers.len() - 2,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn embed_layer_index(&self) -> usize {
        self.embed_layer_index
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }

    pub fn classes(&self) -> usize {
        *self.layer_dims.last().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.numel() + l.bias.numel()).sum()
    }

    /// Registers the parameters on `g`; `trainable` decides whether they collect gradients.
    pub fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> BoundMlp<'g> {
        BoundMlp {
            params: self
                .layers
                .iter()
                .map(|l| (g.leaf(l.weight.clone(), trainable), g.leaf(l.bias.clone(), trainable)))
                .collect(),
            embed_layer_index: self.embed_layer_index,
        }
    }

    /// `θ ← θ - lr ∇θ` using gradients left on `bound` by a backward pass.
    pub fn sgd_step(&mut self, bound: &BoundMlp<'_>, lr: f64) {
        for (layer, (w, b)) in self.layers.iter_mut().zip(&bound.params) {
            for (param, var) in [(&mut layer.weight, w), (&mut layer.bias, b)] {
                if let Some(g) = var.grad() {
                    for (p, d) in param.data_mut().iter_mut().zip(g.data()) {
                        *p -= lr * d;
                    }
                }
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::dim(
                "mlp forward",
                format!("input {:?}, model expects [_, {}]", x.shape(), self.input_dim()),
            ));
        }
        Ok(())
    }

    pub fn forward_logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let g = Graph::new();
        let out = self.bind(&g, false).forward(g.constant(x.clone()))?;
        Ok(out.logits.value())
    }

    /// Row-wise softmax of the logits.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let g = Graph::new();
        let out = self.bind(&g, false).forward(g.constant(x.clone()))?;
        Ok(out.logits.softmax_rows().value())
    }

    /// L2-normalized embedding rows; a zero row is a [`Error::DegenerateEmbedding`].
    pub fn embed_normalized(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let g = Graph::new();
        let out = self.bind(&g, false).forward(g.constant(x.clone()))?;
        Ok(out.features.l2_normalize_rows()?.value())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.forward_logits(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    /// Fraction of `ds` classified correctly.
    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::contract("accuracy on an empty dataset"));
        }
        let pred = self.predict(&ds.all_features())?;
        let hits = pred.iter().zip(&ds.samples).filter(|(p, s)| **p == s.y).count();
        Ok(hits as f64 / ds.len() as f64)
    }

    /// Versioned binary checkpoint: magic, version, layer dims, embedding
    /// layer index, then per layer the weights and biases as little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layer_dims.len() as u32).to_le_bytes())?;
        for &d in &self.layer_dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&(self.embed_layer_index as u64).to_le_bytes())?;
        for l in &self.layers {
            for v in l.weight.data().iter().chain(l.bias.data()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "checkpoint",
            detail,
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if !(3..=64).contains(&n) {
            return Err(bad(format!("implausible layer count {n}")));
        }
        let dims = (0..n)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let embed_layer_index = read_u64(&mut r)? as usize;
        if embed_layer_index != n - 3 {
            return Err(bad(format!("embedding layer index {embed_layer_index} for {n} dims")));
        }
        let mut layers = Vec::with_capacity(n - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = read_f64s(&mut r, fan_in * fan_out)?;
            let bias = read_f64s(&mut r, fan_out)?;
            layers.push(Layer {
                weight: Tensor::matrix(fan_in, fan_out, weight)?,
                bias: Tensor::vector(bias),
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        Ok(MlpModel {
            layer_dims: dims,
            embed_layer_index,
            layers,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        MlpModel::read_checkpoint(&bytes[..])
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

impl<'g> BoundMlp<'g> {
    pub fn forward(&self, x: Var<'g>) -> Result<MlpOutput<'g>> {
        let mut h = x;
        for (i, (w, b)) in self.params[..=self.embed_layer_index].iter().enumerate() {
            h = h.matmul(*w)?.add(*b)?;
            if i < self.embed_layer_index {
                h = h.relu();
            }
        }
        let (w, b) = self.params[self.embed_layer_index + 1];
        let logits = h.matmul(w)?.add(b)?;
        Ok(MlpOutput { features: h, logits })
    }

    pub fn params(&self) -> &[(Var<'g>, Var<'g>)] {
        &self.params
    }
}
