//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "HOOKGAN\0"
//! version      u32       FORMAT_VERSION
//! header_len   u64       byte length of the JSON header
//! header       JSON      hyper, codec, ledger, step, dropped rows, layout,
//!                        and per network: layer kinds, parameter shapes,
//!                        optimizer config and step
//! payload      f64 LE    for each network (generator, discriminator,
//!                        auxiliary if present): every layer parameter in
//!                        order, then Adam first moments, then second moments
//! checksum     32 bytes  SHA-256 of everything above
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Checkpoint, Hyper, Models};
use crate::codec::{CodecState, EncodedLayout};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::nn::{Layer, LayerKind, Span};
use crate::optim::{AdamConfig, OptimState};
use crate::privacy::PrivacyLedger;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HOOKGAN\0";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    hyper: Hyper,
    codec: CodecState,
    ledger: PrivacyLedger,
    step: u64,
    dropped_rows: usize,
    layout: EncodedLayout,
    target: Option<Span>,
    z_dim: usize,
    generator: NetworkHeader,
    discriminator: NetworkHeader,
    auxiliary: Option<NetworkHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkHeader {
    layers: Vec<LayerHeader>,
    adam: AdamConfig,
    adam_step: u64,
}

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    #[serde(flatten)]
    kind: LayerKind,
    shapes: Vec<(usize, usize)>,
}

fn network_header(net: &Network) -> NetworkHeader {
    NetworkHeader {
        layers: net
            .layers
            .iter()
            .map(|l| LayerHeader {
                kind: l.kind.clone(),
                shapes: l.params().iter().map(Tensor::shape).collect(),
            })
            .collect(),
        adam: net.optim.config,
        adam_step: net.optim.step,
    }
}

fn write_network(net: &Network, out: &mut Vec<u8>) {
    let tensors = net
        .params()
        .chain(net.optim.first_moments())
        .chain(net.optim.second_moments());
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let m = &ckpt.models;
    let header = Header {
        hyper: ckpt.hyper.clone(),
        codec: ckpt.codec.clone(),
        ledger: ckpt.ledger.clone(),
        step: ckpt.step,
        dropped_rows: ckpt.dropped_rows,
        layout: m.layout.clone(),
        target: m.target,
        z_dim: m.z_dim,
        generator: network_header(&m.generator),
        discriminator: network_header(&m.discriminator),
        auxiliary: m.auxiliary.as_ref().map(network_header),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 8 * (m.generator.param_count() * 3 + 64));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    write_network(&m.generator, &mut out);
    write_network(&m.discriminator, &mut out);
    if let Some(aux) = &m.auxiliary {
        write_network(aux, &mut out);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Integrity("checkpoint is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Integrity("parameter count overflows".into())
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn tensor(&mut self, (rows, cols): (usize, usize)) -> Result<Tensor> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Integrity("tensor shape overflows".into()))?;
        Tensor::from_vec(rows, cols, self.f64s(n)?)
    }
}

fn read_network(h: NetworkHeader, r: &mut Reader) -> Result<Network> {
    let mut layers = Vec::with_capacity(h.layers.len());
    let mut shapes = Vec::new();
    for lh in h.layers {
        let params = lh
            .shapes
            .iter()
            .map(|&s| r.tensor(s))
            .collect::<Result<Vec<_>>>()?;
        shapes.extend(lh.shapes);
        let layer = Layer::from_params(lh.kind, params)
            .map_err(|e| Error::Integrity(format!("bad layer in checkpoint: {e}")))?;
        layers.push(layer);
    }
    let mut net = Network::new(layers, h.adam);
    let first = shapes.iter().map(|&s| r.tensor(s)).collect::<Result<Vec<_>>>()?;
    let second = shapes.iter().map(|&s| r.tensor(s)).collect::<Result<Vec<_>>>()?;
    net.optim = OptimState::from_parts(h.adam, h.adam_step, first, second);
    Ok(net)
}

/// Parses and verifies checkpoint bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Integrity("not a checkpoint (bad magic)".into()));
    }
    if bytes.len() < MAGIC.len() + 12 + CHECKSUM_LEN {
        return Err(Error::Integrity("checkpoint is truncated".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Integrity(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Integrity("checksum mismatch (truncated or corrupt)".into()));
    }
    let header_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len)
        .map_err(|_| Error::Integrity("header length overflows".into()))?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Integrity(format!("bad header: {e}")))?;
    let generator = read_network(header.generator, &mut r)?;
    let discriminator = read_network(header.discriminator, &mut r)?;
    let auxiliary = header
        .auxiliary
        .map(|h| read_network(h, &mut r))
        .transpose()?;
    if r.pos != body.len() {
        return Err(Error::Integrity("trailing bytes after payload".into()));
    }
    Ok(Checkpoint {
        hyper: header.hyper,
        codec: header.codec,
        models: Models {
            generator,
            discriminator,
            auxiliary,
            layout: header.layout,
            target: header.target,
            z_dim: header.z_dim,
        },
        ledger: header.ledger,
        step: header.step,
        dropped_rows: header.dropped_rows,
    })
}

/// Writes atomically: a temporary sibling file is renamed over `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = to_bytes(ckpt)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("checkpoint path {} has no file name", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}
