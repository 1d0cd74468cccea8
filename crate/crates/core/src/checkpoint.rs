//! Versioned binary checkpoints.
//!
//! Layout: an 8-byte magic, a format version, the JSON-encoded network spec,
//! then every store entry (trainable parameters and running statistics) as
//! `(name, dtype, shape, payload)` with 32-bit IEEE-754 little-endian
//! payloads, in store order. A round trip restores every value bitwise.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::arch::{Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ECTNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> io::Result<()> {
    write_u64(w, b.len() as u64)?;
    w.write_all(b)
}

pub(crate) fn read_exact_or_corrupt<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::checkpoint("truncated file")
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_corrupt(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or_corrupt(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_bytes<R: Read>(r: &mut R, cap: u64) -> Result<Vec<u8>> {
    let n = read_u64(r)?;
    if n > cap {
        return Err(Error::checkpoint(format!("implausible section length {}", n)));
    }
    let mut buf = vec![0u8; n as usize];
    read_exact_or_corrupt(r, &mut buf)?;
    Ok(buf)
}

/// One `(name, shape, f32 payload)` record.
pub(crate) fn write_array<W: Write>(w: &mut W, name: &str, t: &Tensor<f32>) -> Result<()> {
    write_bytes(w, name.as_bytes())?;
    w.write_all(&[DTYPE_F32])?;
    write_u64(w, t.shape().len() as u64)?;
    for &d in t.shape() {
        write_u64(w, d as u64)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_array<R: Read>(r: &mut R) -> Result<(String, Tensor<f32>)> {
    let name = String::from_utf8(read_bytes(r, 1 << 16)?)
        .map_err(|_| Error::checkpoint("array name is not utf-8"))?;
    let mut dtype = [0u8; 1];
    read_exact_or_corrupt(r, &mut dtype)?;
    if dtype[0] != DTYPE_F32 {
        return Err(Error::checkpoint(format!("unsupported dtype tag {}", dtype[0])));
    }
    let ndim = read_u64(r)? as usize;
    if ndim > 8 {
        return Err(Error::checkpoint(format!("implausible rank {}", ndim)));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape.iter().product();
    if n > (1 << 28) {
        return Err(Error::checkpoint(format!("implausible array size {}", n)));
    }
    let mut data = Vec::with_capacity(n);
    let mut b = [0u8; 4];
    for _ in 0..n {
        read_exact_or_corrupt(r, &mut b)?;
        data.push(f32::from_le_bytes(b));
    }
    Tensor::from_vec(&shape, data).map(|t| (name, t)).map_err(|e| Error::checkpoint(e.to_string()))
}

pub fn write_checkpoint<W: Write>(w: &mut W, net: &Network<f32>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(w, CHECKPOINT_VERSION)?;
    let spec_json =
        serde_json::to_vec(&net.spec).map_err(|e| Error::checkpoint(e.to_string()))?;
    write_bytes(w, &spec_json)?;
    write_u64(w, net.store.len() as u64)?;
    for id in net.store.ids() {
        write_array(w, net.store.name(id), net.store.value(id))?;
    }
    Ok(())
}

/// Atomic save: write to a temporary sibling, then rename into place.
pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_checkpoint(&mut w, net)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<NetworkSpec> {
    let mut magic = [0u8; 8];
    read_exact_or_corrupt(r, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::checkpoint("bad magic; not a checkpoint file"));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::checkpoint(format!(
            "format version {} unsupported (this build reads {})",
            version, CHECKPOINT_VERSION
        )));
    }
    let spec_json = read_bytes(r, 1 << 20)?;
    serde_json::from_slice(&spec_json)
        .map_err(|e| Error::checkpoint(format!("bad spec descriptor: {}", e)))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Network<f32>> {
    let spec = read_header(r)?;
    let mut rng = Rng::new(0);
    let mut net = Network::build(spec, &mut rng)?;
    fill_from_arrays(&mut net, r)?;
    Ok(net)
}

fn fill_from_arrays<R: Read>(net: &mut Network<f32>, r: &mut R) -> Result<()> {
    let count = read_u64(r)? as usize;
    if count != net.store.len() {
        return Err(Error::checkpoint(format!(
            "checkpoint has {} arrays, network wants {}",
            count,
            net.store.len()
        )));
    }
    let mut remaining = count;
    let mut seen = std::collections::HashSet::new();
    while remaining > 0 {
        let (name, value) = read_array(r)?;
        let id = net
            .store
            .find(&name)
            .ok_or_else(|| Error::checkpoint(format!("unknown parameter {:?}", name)))?;
        if net.store.value(id).shape() != value.shape() {
            return Err(Error::checkpoint(format!(
                "shape mismatch for {:?}: checkpoint {:?}, network {:?}",
                name,
                value.shape(),
                net.store.value(id).shape()
            )));
        }
        if !seen.insert(name) {
            return Err(Error::checkpoint("duplicate parameter in checkpoint"));
        }
        *net.store.value_mut(id) = value;
        remaining -= 1;
    }
    Ok(())
}

/// Rebuild the network recorded in the file.
pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

/// Load weights into an existing network; the file's arrays must match the
/// network's parameter names and shapes exactly.
pub fn load_weights_into(net: &mut Network<f32>, path: &Path) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r)?;
    fill_from_arrays(net, &mut r)
}
