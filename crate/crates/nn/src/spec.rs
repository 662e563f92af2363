use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::ActivationKind;
use crate::error::{NnError, Result};
use crate::loss::LossKind;

/// One layer of a sequential model. Convolutions use stride 1 and valid padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize },
    Conv1d { filters: usize, kernel_size: usize },
    MaxPool1d { pool_size: usize },
    /// Consumes a sequence and emits the final hidden state.
    Gru { units: usize },
    Activation { kind: ActivationKind },
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Conv1d { .. } => "Conv1D",
            LayerSpec::MaxPool1d { .. } => "MaxPool1D",
            LayerSpec::Gru { .. } => "GRU",
            LayerSpec::Activation { .. } => "Activation",
            LayerSpec::Flatten => "Flatten",
        }
    }

    pub fn activation(kind: ActivationKind) -> Self {
        LayerSpec::Activation { kind }
    }
}

/// Per-sample activation shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Seq { len: usize, channels: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(self) -> usize {
        match self {
            Shape::Seq { len, channels } => len * channels,
            Shape::Flat(n) => n,
        }
    }

    /// Width of the innermost axis (the softmax group).
    pub fn width(self) -> usize {
        match self {
            Shape::Seq { channels, .. } => channels,
            Shape::Flat(n) => n,
        }
    }

    pub(crate) fn batch_dims(self, batch: usize) -> Vec<usize> {
        match self {
            Shape::Seq { len, channels } => vec![batch, len, channels],
            Shape::Flat(n) => vec![batch, n],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_length: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub output_classes: usize,
}

impl ModelSpec {
    pub fn input_shape(&self) -> Shape {
        Shape::Seq {
            len: self.input_length,
            channels: self.input_channels,
        }
    }

    /// Shape-checks the whole stack. Returns the input shape of every layer
    /// followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input_length == 0 || self.input_channels == 0 {
            return Err(NnError::InvalidSpec("input dimensions must be positive".into()));
        }
        let mut shapes = vec![self.input_shape()];
        let mut cur = self.input_shape();
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| NnError::Shape {
                layer: i,
                kind: layer.kind(),
                msg,
            };
            cur = match (*layer, cur) {
                (LayerSpec::Dense { units }, Shape::Flat(_)) => {
                    positive(units, "units").map_err(err)?;
                    Shape::Flat(units)
                }
                (LayerSpec::Dense { .. }, s) => {
                    return Err(err(format!("expects a flat input, got {s:?}")))
                }
                (LayerSpec::Conv1d { filters, kernel_size }, Shape::Seq { len, .. }) => {
                    positive(filters, "filters").map_err(err)?;
                    positive(kernel_size, "kernel_size").map_err(err)?;
                    if kernel_size > len {
                        return Err(err(format!("kernel {kernel_size} longer than input {len}")));
                    }
                    Shape::Seq {
                        len: len - kernel_size + 1,
                        channels: filters,
                    }
                }
                (LayerSpec::MaxPool1d { pool_size }, Shape::Seq { len, channels }) => {
                    positive(pool_size, "pool_size").map_err(err)?;
                    if pool_size > len {
                        return Err(err(format!("pool {pool_size} longer than input {len}")));
                    }
                    Shape::Seq {
                        len: len / pool_size,
                        channels,
                    }
                }
                (LayerSpec::Gru { units }, Shape::Seq { .. }) => {
                    positive(units, "units").map_err(err)?;
                    Shape::Flat(units)
                }
                (LayerSpec::Conv1d { .. } | LayerSpec::MaxPool1d { .. } | LayerSpec::Gru { .. }, s) => {
                    return Err(err(format!("expects a sequence input, got {s:?}")))
                }
                (LayerSpec::Activation { .. }, s) => s,
                (LayerSpec::Flatten, s) => Shape::Flat(s.size()),
            };
            shapes.push(cur);
        }
        match cur {
            Shape::Flat(n) if n == self.output_classes => Ok(shapes),
            s => Err(NnError::InvalidSpec(format!(
                "final shape {s:?} does not match {} output classes",
                self.output_classes
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn final_activation(&self) -> Option<ActivationKind> {
        match self.layers.last() {
            Some(LayerSpec::Activation { kind }) => Some(*kind),
            _ => None,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.final_activation() {
            Some(ActivationKind::Sigmoid) => LossKind::BinaryPerUnit,
            _ => LossKind::Categorical,
        }
    }

    /// Stable 64-bit fingerprint of the architecture, stored in params files.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn param_count(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match *layer {
                LayerSpec::Dense { units } => input.size() * units + units,
                LayerSpec::Conv1d { filters, kernel_size } => {
                    kernel_size * input.width() * filters + filters
                }
                LayerSpec::Gru { units } => 3 * units * (input.width() + units + 1),
                _ => 0,
            })
            .sum())
    }
}

fn positive(v: usize, what: &str) -> std::result::Result<(), String> {
    if v == 0 {
        Err(format!("{what} must be positive"))
    } else {
        Ok(())
    }
}
