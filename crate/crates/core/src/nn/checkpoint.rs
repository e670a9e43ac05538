//! Checkpoint files.
//!
//! Layout:
//!
//! ```text
//! SWITOKD-CKPT\n
//! {"version":1,"layers":[...]}\n      architecture header, one JSON line
//! f64 little-endian payload           per layer: weights, then biases
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, NetworkParams};
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"SWITOKD-CKPT\n";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    layers: Vec<LayerSpec>,
}

pub fn write_checkpoint<W: Write>(net: &NetworkParams, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    let header = Header { version: VERSION, layers: net.layers().to_vec() };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for i in 0..net.layers().len() {
        for v in net.weights(i).iter().chain(net.biases(i)) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<NetworkParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::format(0, "missing checkpoint magic"));
    }
    let header_start = MAGIC.len();
    let header_end = bytes[header_start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| header_start + p)
        .ok_or_else(|| Error::format(header_start as u64, "unterminated architecture header"))?;
    let header: Header = serde_json::from_slice(&bytes[header_start..header_end])
        .map_err(|e| Error::format(header_start as u64, format!("bad architecture header: {e}")))?;
    if header.version != VERSION {
        return Err(Error::format(
            header_start as u64,
            format!("unsupported checkpoint version {}", header.version),
        ));
    }
    let mut offset = header_end + 1;
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let need = n * 8;
        if bytes.len() < offset + need {
            return Err(Error::format(offset as u64, "truncated parameter payload"));
        }
        let vals = bytes[offset..offset + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        offset += need;
        Ok(vals)
    };
    let mut weights = Vec::with_capacity(header.layers.len());
    let mut biases = Vec::with_capacity(header.layers.len());
    for l in &header.layers {
        weights.push(take(l.weight_len())?);
        biases.push(take(l.bias_len())?);
    }
    if offset != bytes.len() {
        return Err(Error::format(offset as u64, "trailing bytes after parameters"));
    }
    NetworkParams::from_parts(header.layers, weights, biases)
}

pub fn save_checkpoint(net: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
