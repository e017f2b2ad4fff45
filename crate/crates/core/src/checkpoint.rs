//! Network checkpoint file.
//!
//! One UTF-8 header line holding a JSON object
//! `{"magic":"NFR1","L":..,"d":..,"K":..,"widths":[..],"activation":"..","seed":..}`,
//! a newline, then the parameters as little-endian `f64`: `W^(1)` row-major,
//! ..., `W^(L)` row-major, then `U` row-major.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::io::create_file;
use crate::matrix::Matrix;
use crate::net::Network;

pub const MAGIC: &str = "NFR1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    magic: String,
    #[serde(rename = "L")]
    depth: usize,
    d: usize,
    #[serde(rename = "K")]
    output_dim: usize,
    widths: Vec<usize>,
    activation: Activation,
    seed: u64,
}

pub fn encode(net: &Network) -> Vec<u8> {
    let header = Header {
        magic: MAGIC.to_owned(),
        depth: net.depth(),
        d: net.input_dim(),
        output_dim: net.output_dim(),
        widths: net.widths().to_vec(),
        activation: net.activation(),
        seed: net.seed(),
    };
    let mut buf = serde_json::to_vec(&header).expect("header serializes");
    buf.push(b'\n');
    buf.reserve(net.parameter_count() * 8);
    for w in net.weights().iter().chain(std::iter::once(net.top())) {
        for v in w.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode(mut reader: impl BufRead) -> Result<Network> {
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::Checkpoint(format!("reading header: {e}")))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Checkpoint("missing header line".into()));
    }
    line.pop();
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| Error::Checkpoint(format!("corrupt header: {e}")))?;
    if header.magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic `{}`", header.magic)));
    }
    if header.depth == 0 || header.widths.len() != header.depth {
        return Err(Error::Checkpoint(format!(
            "header lists {} widths for L = {}",
            header.widths.len(),
            header.depth
        )));
    }
    if header.d == 0 || header.output_dim == 0 || header.widths.contains(&0) {
        return Err(Error::Checkpoint("zero dimension in header".into()));
    }

    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::Checkpoint(format!("reading payload: {e}")))?;
    let mut shapes = Vec::with_capacity(header.depth + 1);
    let mut prev = header.d;
    for &m in &header.widths {
        shapes.push((m, prev));
        prev = m;
    }
    shapes.push((prev, header.output_dim));
    let expected: usize = shapes.iter().map(|(r, c)| r * c * 8).sum();
    if payload.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload length mismatch: expected {expected} bytes, found {}",
            payload.len()
        )));
    }

    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let mut mats: Vec<Matrix> = shapes
        .iter()
        .map(|&(r, c)| Matrix::from_vec(r, c, values.by_ref().take(r * c).collect()))
        .collect();
    let top = mats.pop().expect("top matrix");
    let net = Network::from_parts(header.d, header.activation, mats, top)
        .map_err(|e| Error::Checkpoint(format!("invalid network: {e}")))?;
    Ok(net.with_seed(header.seed))
}

pub fn save(net: &Network, path: &Path, force: bool) -> Result<()> {
    let mut f = create_file(path, force)?;
    f.write_all(&encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(BufReader::new(f))
}
