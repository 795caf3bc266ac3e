//! Versioned binary containers for trained networks: a full checkpoint with
//! shadow weights and a packed inference export. Both end with a SHA-256 of
//! everything before it.

use std::path::Path;

use benn_core::bitcore::PackedBitTensor;
use benn_core::nn::{ExportEntry, NamedArray, Network, NetworkConfig};
use sha2::{Digest, Sha256};

use crate::error::{read, write, BennError, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"BENNCKPT";
const EXPORT_MAGIC: &[u8; 8] = b"BENNPKD1";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }

    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn f32s(&mut self, v: &[f32]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.0.extend_from_slice(&x.to_le_bytes()));
    }

    fn array(&mut self, a: &NamedArray) {
        self.str(&a.name);
        self.u32(a.shape.len() as u32);
        a.shape.iter().for_each(|&d| self.u64(d as u64));
        self.f32s(&a.values);
    }

    fn seal(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.0);
        self.0.extend_from_slice(&digest);
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated() -> BennError {
    BennError::Format("container truncated".into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(truncated)?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = usize::try_from(self.u64()?).map_err(|_| truncated())?;
        if n.checked_mul(unit).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(truncated());
        }
        Ok(n)
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    fn str(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| BennError::Format("invalid UTF-8 string".into()))
    }

    fn f32s(&mut self) -> Result<Vec<f32>> {
        let n = self.len(4)?;
        Ok(self.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn array(&mut self) -> Result<NamedArray> {
        let name = self.str()?;
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(BennError::Format(format!("array `{name}` has implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| Ok(self.u64()? as usize)).collect::<Result<Vec<_>>>()?;
        let values = self.f32s()?;
        if shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)) != Some(values.len()) {
            return Err(BennError::Format(format!("array `{name}` shape disagrees with its length")));
        }
        Ok(NamedArray { name, shape, values })
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(BennError::Format("trailing bytes in container".into()))
        }
    }
}

/// Checks magic, digest and version; returns a reader over the body.
fn open<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Result<Reader<'a>> {
    if bytes.len() < magic.len() + 4 + DIGEST_LEN || &bytes[..8] != magic {
        return Err(BennError::Format("not a recognised container (bad magic or too short)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(BennError::Format("container checksum mismatch (file is corrupt)".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(BennError::Format(format!("unsupported container version {version}")));
    }
    Ok(r)
}

fn header(magic: &[u8; 8], config: &NetworkConfig) -> Writer {
    let mut w = Writer::default();
    w.0.extend_from_slice(magic);
    w.u32(FORMAT_VERSION);
    w.str(&config.to_text());
    w
}

/// Config text, shadow weights, biases, batchnorm parameters and running
/// statistics, and binary scales.
pub fn checkpoint_bytes(net: &Network) -> Vec<u8> {
    let mut w = header(CHECKPOINT_MAGIC, net.config());
    let state = net.state();
    w.u32(state.len() as u32);
    state.iter().for_each(|a| w.array(a));
    w.seal()
}

pub fn network_from_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut r = open(bytes, CHECKPOINT_MAGIC)?;
    let config = NetworkConfig::parse(&r.str()?)?;
    let count = r.u32()? as usize;
    let state = (0..count).map(|_| r.array()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let mut net = Network::new(&config, 0)?;
    net.load_state(&state)?;
    Ok(net)
}

/// Packed signs and scales for binary layers, float arrays for the rest.
pub fn export_bytes(net: &Network) -> Vec<u8> {
    let mut w = header(EXPORT_MAGIC, net.config());
    let entries = net.export_packed();
    w.u32(entries.len() as u32);
    for e in &entries {
        match e {
            ExportEntry::Float(a) => {
                w.u8(0);
                w.array(a);
            }
            ExportEntry::Packed { name, bits, scales } => {
                w.u8(1);
                w.str(name);
                w.bytes(&bits.to_bytes());
                w.f32s(scales);
            }
        }
    }
    w.seal()
}

pub fn network_from_export(bytes: &[u8]) -> Result<Network> {
    let mut r = open(bytes, EXPORT_MAGIC)?;
    let config = NetworkConfig::parse(&r.str()?)?;
    let count = r.u32()? as usize;
    let mut entries = Vec::new();
    for _ in 0..count {
        entries.push(match r.u8()? {
            0 => ExportEntry::Float(r.array()?),
            1 => {
                let name = r.str()?;
                let bits = PackedBitTensor::from_bytes(r.bytes()?)?;
                ExportEntry::Packed { name, bits, scales: r.f32s()? }
            }
            tag => return Err(BennError::Format(format!("unknown export entry tag {tag}"))),
        });
    }
    r.finish()?;
    Ok(Network::from_export(&config, &entries)?)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<Vec<u8>> {
    let bytes = checkpoint_bytes(net);
    write(path, &bytes)?;
    Ok(bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    network_from_checkpoint(&read(path)?)
}

pub fn load_export(path: &Path) -> Result<Network> {
    network_from_export(&read(path)?)
}

/// Loads either container kind, chosen by its magic.
pub fn load_network(path: &Path) -> Result<Network> {
    let bytes = read(path)?;
    if bytes.starts_with(EXPORT_MAGIC) {
        network_from_export(&bytes)
    } else {
        network_from_checkpoint(&bytes)
    }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
