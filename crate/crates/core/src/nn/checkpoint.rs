//! Binary parameter files.
//!
//! Layout: the 8-byte magic `MSKSTRM1`, a little-endian `u64` manifest
//! length, a UTF-8 manifest with one `name\tdims\toffset` line per tensor
//! (`dims` comma-separated, `offset` in bytes from the start of the data
//! block), then the tensors as little-endian `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::network::Network;
use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSKSTRM1";

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParameterSet<f32>) -> std::io::Result<()> {
    let mut manifest = String::new();
    let mut offset = 0usize;
    for (name, t) in params.iter() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("{name}\t{}\t{offset}\n", dims.join(",")));
        offset += 4 * t.len();
    }
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(manifest.as_bytes())?;
    for (_, t) in params.iter() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParameterSet<f32>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("file too short for magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("unknown magic"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| bad("truncated manifest length"))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(bad("manifest length out of range"));
    }
    let mut manifest = vec![0u8; len as usize];
    r.read_exact(&mut manifest).map_err(|_| bad("truncated manifest"))?;
    let manifest = String::from_utf8(manifest).map_err(|_| bad("manifest is not UTF-8"))?;
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| bad(e.to_string()))?;

    let mut entries = Vec::new();
    for line in manifest.lines().filter(|l| !l.is_empty()) {
        let parts: Vec<&str> = line.split('\t').collect();
        let [name, dims, offset] = parts[..] else {
            return Err(bad(format!("malformed manifest line {line:?}")));
        };
        let shape = dims
            .split(',')
            .filter(|d| !d.is_empty())
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(format!("bad dims for {name}")))?;
        let offset: usize = offset.parse().map_err(|_| bad(format!("bad offset for {name}")))?;
        let n: usize = shape.iter().product();
        let end = offset + 4 * n;
        if end > data.len() {
            return Err(bad(format!("tensor {name} runs past end of file")));
        }
        let values = data[offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        entries.push((name.to_string(), Tensor::from_vec(&shape, values)?));
    }
    ParameterSet::new(entries, None)
}

pub fn save_checkpoint(path: &Path, params: &ParameterSet<f32>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(f), params).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint and checks it against `network`'s parameter layout.
pub fn load_checkpoint(path: &Path, network: &Network) -> Result<ParameterSet<f32>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let params = read_checkpoint(BufReader::new(f))?;
    network
        .check_params(&params)
        .map_err(|e| bad(format!("{}: does not match the model: {e}", path.display())))?;
    Ok(params)
}
