//! JSON checkpoint format for [`Network`].
//!
//! ```json
//! {"version":1,"input_dim":8,"output_dim":4,
//!  "layers":[{"rows":32,"cols":8,"weights":[...],"bias":[...],"activation":"tanh"}, ...]}
//! ```
//!
//! Floats are written with 17 significant digits so that reading a checkpoint back yields
//! bit-identical parameters.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use super::matrix::Matrix;
use super::network::{Activation, Layer, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    version: u32,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

/// Compact JSON with every float printed as `d.dddddddddddddddde±x`.
struct Sig17Formatter;

impl Formatter for Sig17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub fn to_json(net: &Network) -> Result<Vec<u8>> {
    let doc = CheckpointDoc {
        version: CHECKPOINT_VERSION,
        input_dim: net.input_dim(),
        output_dim: net.output_dim(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerDoc {
                rows: l.weights.rows(),
                cols: l.weights.cols(),
                weights: l.weights.as_slice().to_vec(),
                bias: l.bias.clone(),
                activation: l.activation,
            })
            .collect(),
    };
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter);
    doc.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn from_json(bytes: &[u8]) -> Result<Network> {
    let doc: CheckpointDoc = serde_json::from_slice(bytes)?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {}",
            doc.version
        )));
    }
    let layers = doc
        .layers
        .into_iter()
        .map(|l| Layer::new(Matrix::from_vec(l.rows, l.cols, l.weights)?, l.bias, l.activation))
        .collect::<Result<Vec<_>>>()?;
    let net = Network::new(layers)?;
    if net.input_dim() != doc.input_dim || net.output_dim() != doc.output_dim {
        return Err(Error::Checkpoint(format!(
            "declared dims {}→{} disagree with layers {}→{}",
            doc.input_dim,
            doc.output_dim,
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(net)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(net)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    from_json(&std::fs::read(path)?)
}
