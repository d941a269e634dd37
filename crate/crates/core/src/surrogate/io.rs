//! Model file: magic, header length, JSON header, then raw weights.
//!
//! ```text
//! 0      8 bytes   b"NOMADNN1"
//! 8      4 bytes   header length N, u32 little-endian
//! 12     N bytes   UTF-8 JSON header (Header below)
//! 12+N   per layer: weights row-major (outputs x inputs), then bias,
//!        every value an f64 little-endian
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::net::{Layer, Network, Normalization};
use super::{SurrogateModel, TrainConfig};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"NOMADNN1";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    q: usize,
    l_max: usize,
    sizes: Vec<usize>,
    normalization: Normalization,
    config: TrainConfig,
}

pub fn write_model<W: Write>(model: &SurrogateModel, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        format_version: 1,
        q: model.q,
        l_max: model.l_max,
        sizes: model.net.sizes(),
        normalization: model.norm.clone(),
        config: model.config.clone(),
    })?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Internal("model header too large".into()))?;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&header)?;
    for layer in &model.net.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Config(format!("truncated model weights: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn read_model<R: Read>(mut r: R) -> Result<SurrogateModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Config(format!("not a model file: {e}")))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Config("not a model file: bad magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    if header.format_version != 1 {
        return Err(Error::Config(format!("unsupported model format {}", header.format_version)));
    }
    let width = (header.q + 1) * header.l_max;
    if header.sizes.len() < 2 || header.sizes[0] != width || header.sizes[header.sizes.len() - 1] != width {
        return Err(Error::Config(format!(
            "layer sizes {:?} do not match layout width {width}",
            header.sizes
        )));
    }
    let mut layers = Vec::with_capacity(header.sizes.len() - 1);
    for w in header.sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weights = Array2::from_shape_vec((outputs, inputs), read_f64s(&mut r, inputs * outputs)?)
            .map_err(|e| Error::Internal(e.to_string()))?;
        let bias = Array1::from(read_f64s(&mut r, outputs)?);
        layers.push(Layer { weights, bias });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Config(format!("{} trailing bytes after model weights", rest.len())));
    }
    Ok(SurrogateModel {
        q: header.q,
        l_max: header.l_max,
        net: Network { layers },
        norm: header.normalization,
        config: header.config,
    })
}

pub fn save_model(model: &SurrogateModel, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<SurrogateModel> {
    read_model(BufReader::new(File::open(path)?))
}
