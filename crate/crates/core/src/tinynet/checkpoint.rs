//! `VCG-MLP-1` checkpoint container.
//!
//! ```text
//! offset  contents
//! 0       ASCII "VCG-MLP-1\n" (10 bytes)
//! 10      u32 LE: number of layer dims K (= layers + 1)
//! 14      K × u32 LE: layer dims d0 .. d{K-1}
//! ...     per layer l: d{l+1}·d{l} f64 LE weights, row-major with one row
//!         per output unit, then d{l+1} f64 LE biases
//! ```
//!
//! Nothing follows the last bias. Optimizer state is not stored.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, Mlp, NetError};

pub const MAGIC: &[u8; 10] = b"VCG-MLP-1\n";

pub fn to_bytes(net: &Mlp) -> Vec<u8> {
    let dims = net.layer_dims();
    let mut out = Vec::with_capacity(MAGIC.len() + 4 * (dims.len() + 1) + 8 * net.n_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for layer in net.layers() {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NetError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NetError> {
        let len = n.checked_mul(8).ok_or_else(|| NetError::Checkpoint("parameter count overflows".into()))?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Mlp, NetError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(NetError::Checkpoint("missing VCG-MLP-1 header".into()));
    }
    let k = cur.u32()?;
    if !(2..=64).contains(&k) {
        return Err(NetError::Checkpoint(format!("implausible layer count {k}")));
    }
    let dims = (0..k).map(|_| cur.u32()).collect::<Result<Vec<_>, _>>()?;
    let mut layers = Vec::with_capacity(k - 1);
    for w in dims.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let n_weights =
            inputs.checked_mul(outputs).ok_or_else(|| NetError::Checkpoint("layer size overflows".into()))?;
        let weight = Array2::from_shape_vec((outputs, inputs), cur.f64s(n_weights)?)
            .map_err(|e| NetError::Checkpoint(e.to_string()))?;
        let bias = Array1::from(cur.f64s(outputs)?);
        layers.push(Layer { weight, bias });
    }
    if cur.pos != bytes.len() {
        return Err(NetError::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Mlp::from_layers(layers)
}

pub fn save(net: &Mlp, path: impl AsRef<Path>) -> Result<(), NetError> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Mlp, NetError> {
    from_bytes(&fs::read(path)?)
}
