//! Checkpoint file format (binary, little-endian):
//!
//! ```text
//! magic "NWC1"
//! u32 topology_len, then topology_len bytes of UTF-8 text:
//!     input,H,W,C
//!     one layer per line: kind,kernel_size,stride,depth,activation,padding,dropout_rate
//! per parameter tensor, in flat parameter order:
//!     u32 name_len, name bytes,
//!     u32 rank, u32 dims[rank],
//!     raw f32 little-endian data
//! ```
//!
//! Round-trips are bit-exact: loading a saved network reproduces every
//! parameter byte and therefore every forward output.

use crate::error::{Error, Result};
use crate::nn::network::{LayerParams, Network};
use crate::nn::{Activation, LayerKind, LayerShape, LayerSpec, NetworkTopology};
use crate::tensor::Tensor;
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"NWC1";

fn topology_to_text(topology: &NetworkTopology) -> String {
    let (h, w, c) = topology.input_shape;
    let mut out = format!("input,{h},{w},{c}\n");
    for l in &topology.layers {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            l.kind.as_str(),
            l.kernel_size,
            l.stride,
            l.depth,
            l.activation.as_str(),
            l.padding,
            l.dropout_rate
        ));
    }
    out
}

fn topology_from_text(text: &str) -> Result<NetworkTopology> {
    let bad = |msg: String| Error::Data(format!("checkpoint topology: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty".into()))?;
    let parts: Vec<&str> = header.split(',').collect();
    if parts.len() != 4 || parts[0] != "input" {
        return Err(bad(format!("bad input line {header:?}")));
    }
    let dim = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad(format!("bad number {s:?}"))) };
    let input_shape = (dim(parts[1])?, dim(parts[2])?, dim(parts[3])?);

    let mut layers = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields in {line:?}")));
        }
        layers.push(LayerSpec {
            kind: LayerKind::parse(f[0])?,
            kernel_size: dim(f[1])?,
            stride: dim(f[2])?,
            depth: dim(f[3])?,
            activation: Activation::parse(f[4])?,
            padding: dim(f[5])?,
            dropout_rate: f[6]
                .parse()
                .map_err(|_| bad(format!("bad dropout rate {:?}", f[6])))?,
        });
    }
    NetworkTopology::new(input_shape, layers)
}

pub fn save(path: &Path, net: &Network<f32>) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating checkpoint {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(format!("writing checkpoint {}", path.display()), e);

    w.write_all(MAGIC).map_err(io_err)?;
    let topo_text = topology_to_text(&net.topology);
    w.write_all(&(topo_text.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(topo_text.as_bytes()).map_err(io_err)?;

    for (name, tensor) in net.param_names().iter().zip(net.param_vec()) {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

struct Reader<R> {
    inner: R,
    path: String,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Data(format!("{}: truncated checkpoint", self.path)))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// None at clean EOF, error on partial records.
    fn u32_or_eof(&mut self) -> Result<Option<u32>> {
        let mut buf = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(Error::Data(format!("{}: truncated checkpoint", self.path))),
                Ok(n) => filled += n,
                Err(e) => return Err(Error::io(format!("reading {}", self.path), e)),
            }
        }
        Ok(Some(u32::from_le_bytes(buf)))
    }
}

pub fn load(path: &Path) -> Result<Network<f32>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening checkpoint {}", path.display()), e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
        path: path.display().to_string(),
    };

    let magic = r.bytes(4)?;
    if magic != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a checkpoint (bad magic {:?}, expected {:?})",
            path.display(),
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let topo_len = r.u32()? as usize;
    let topo_text = String::from_utf8(r.bytes(topo_len)?)
        .map_err(|_| Error::Data(format!("{}: topology block is not UTF-8", path.display())))?;
    let topology = topology_from_text(&topo_text)?;

    let mut tensors: HashMap<String, Tensor> = HashMap::new();
    while let Some(name_len) = r.u32_or_eof()? {
        let name = String::from_utf8(r.bytes(name_len as usize)?)
            .map_err(|_| Error::Data(format!("{}: parameter name is not UTF-8", path.display())))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.bytes(4 * n)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.insert(name, Tensor::new(shape, data)?);
    }

    // Rebuild the parameter list by walking the topology the same way
    // initialization does, pulling tensors by name.
    let chain = topology.shape_chain()?;
    let mut prev = LayerShape::Volume {
        h: topology.input_shape.0,
        w: topology.input_shape.1,
        c: topology.input_shape.2,
    };
    let mut params = Vec::with_capacity(topology.layers.len());
    let (mut conv_n, mut dense_n) = (0usize, 0usize);
    let mut take = |name: String, shape: &[usize]| -> Result<Tensor> {
        let t = tensors
            .remove(&name)
            .ok_or_else(|| Error::Data(format!("{}: missing parameter {name}", path.display())))?;
        if t.shape() != shape {
            return Err(Error::Data(format!(
                "{}: parameter {name} has shape {:?}, expected {shape:?}",
                path.display(),
                t.shape()
            )));
        }
        Ok(t)
    };
    for (layer, out) in topology.layers.iter().zip(chain.iter()) {
        let p = match (layer.kind, &prev, out) {
            (LayerKind::Conv, LayerShape::Volume { c, .. }, LayerShape::Volume { c: d, .. }) => {
                conv_n += 1;
                let k = layer.kernel_size;
                LayerParams::Conv {
                    weights: take(format!("conv{conv_n}.weight"), &[k, k, *c, *d])?,
                    bias: take(format!("conv{conv_n}.bias"), &[*d])?,
                }
            }
            (LayerKind::Dense, LayerShape::Vector(fan_in), LayerShape::Vector(fan_out)) => {
                dense_n += 1;
                LayerParams::Dense {
                    weights: take(format!("dense{dense_n}.weight"), &[*fan_in, *fan_out])?,
                    bias: take(format!("dense{dense_n}.bias"), &[*fan_out])?,
                }
            }
            _ => LayerParams::None,
        };
        params.push(p);
        prev = out.clone();
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Data(format!(
            "{}: unexpected parameter {extra}",
            path.display()
        )));
    }
    Network::new(topology, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mini_topology, TopologyOptions};
    use crate::tensor::TensorOf;

    fn mini_net() -> Network<f32> {
        Network::init(mini_topology(TopologyOptions::default()), 17).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let net = mini_net();
        save(&path, &net).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.topology, net.topology);
        for (a, b) in net.param_vec().iter().zip(loaded.param_vec()) {
            assert_eq!(a.shape(), b.shape());
            // compare raw bits
            let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn forward_outputs_survive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let net = mini_net();
        save(&path, &net).unwrap();
        let loaded = load(&path).unwrap();
        let input = TensorOf::filled(&[100, 100, 3], 0.25f32);
        assert_eq!(
            net.infer(&input).unwrap().data(),
            loaded.infer(&input).unwrap().data()
        );
    }

    #[test]
    fn bad_magic_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        std::fs::write(&path, b"XXXX rest of file").unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_file_is_clean_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let full = dir.path().join("full.ckpt");
        save(&full, &mini_net()).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }
}
