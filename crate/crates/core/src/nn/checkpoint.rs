//! Network persistence.
//!
//! File layout: a little-endian u64 manifest length, the JSON manifest, the
//! parameter payload as little-endian f64 blocks in manifest-declared order
//! (dense weights and biases per layer, batch-norm scale/shift per site,
//! then running means and variances per site), and a trailing little-endian
//! u64 holding the number of f64 values as a length check.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::Network;
use crate::math::RandomStream;

/// Descriptor of parametric model inputs appended to the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtraInputs {
    /// Per-asset volatilities appended (d extra inputs).
    pub sigma: bool,
    /// Risk-free rate appended (1 extra input).
    pub rate: bool,
}

impl ExtraInputs {
    pub fn width(&self, dim: usize) -> usize {
        (if self.sigma { dim } else { 0 }) + usize::from(self.rate)
    }

    pub fn none() -> Self {
        ExtraInputs::default()
    }
}

/// Training metadata carried in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epsilon: f64,
    pub iterations: u64,
}

/// Checkpoint manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    pub batchnorm: bool,
    pub extra_inputs: ExtraInputs,
    pub training: Option<TrainingMeta>,
    pub value_count: u64,
}

const FORMAT: u32 = 1;

fn payload_values(net: &Network) -> u64 {
    let stats = net
        .bn_stats
        .as_ref()
        .map(|s| s.mean.iter().map(|v| v.len()).sum::<usize>() * 2)
        .unwrap_or(0);
    (net.param_count() + stats) as u64
}

/// Write `net` to `path`.
pub fn save_checkpoint(
    net: &Network,
    path: &Path,
    extra_inputs: ExtraInputs,
    training: Option<TrainingMeta>,
) -> Result<()> {
    let meta = CheckpointMeta {
        format: FORMAT,
        layer_sizes: net.layer_sizes().to_vec(),
        activation: "relu".into(),
        batchnorm: net.has_batchnorm(),
        extra_inputs,
        training,
        value_count: payload_values(net),
    };
    let manifest =
        serde_json::to_vec(&meta).map_err(|e| Error::Io(format!("manifest encode: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(&manifest)?;
    let mut written = 0u64;
    for slice in net.params().slices() {
        for v in slice {
            w.write_all(&v.to_le_bytes())?;
            written += 1;
        }
    }
    if let Some(stats) = &net.bn_stats {
        for site in 0..stats.mean.len() {
            for v in stats.mean[site].iter().chain(stats.var[site].iter()) {
                w.write_all(&v.to_le_bytes())?;
                written += 1;
            }
        }
    }
    debug_assert_eq!(written, meta.value_count);
    w.write_all(&written.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::CorruptCheckpoint("truncated length field".into()))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut buf)
            .map_err(|_| Error::CorruptCheckpoint("truncated parameter payload".into()))?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

/// Read a network and its manifest back from `path`.
pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    let manifest_len = read_u64(&mut r)? as usize;
    if manifest_len > 1 << 20 {
        return Err(Error::CorruptCheckpoint(format!(
            "implausible manifest length {manifest_len}"
        )));
    }
    let mut manifest = vec![0u8; manifest_len];
    r.read_exact(&mut manifest)
        .map_err(|_| Error::CorruptCheckpoint("truncated manifest".into()))?;
    let meta: CheckpointMeta = serde_json::from_slice(&manifest)
        .map_err(|e| Error::CorruptCheckpoint(format!("manifest decode: {e}")))?;
    if meta.format != FORMAT {
        return Err(Error::CorruptCheckpoint(format!("unknown format {}", meta.format)));
    }
    let mut net = Network::init(&meta.layer_sizes, meta.batchnorm, RandomStream::new(0))?;
    let expected = payload_values(&net);
    if expected != meta.value_count {
        return Err(Error::CorruptCheckpoint(format!(
            "manifest declares {} values, architecture needs {expected}",
            meta.value_count
        )));
    }
    for slice in net.params_mut().slices_mut() {
        read_f64s(&mut r, slice)?;
    }
    if let Some(stats) = net.bn_stats.as_mut() {
        for site in 0..stats.mean.len() {
            read_f64s(&mut r, &mut stats.mean[site])?;
            read_f64s(&mut r, &mut stats.var[site])?;
        }
    }
    let trailer = read_u64(&mut r)?;
    if trailer != meta.value_count {
        return Err(Error::CorruptCheckpoint(format!(
            "length check failed: trailer {trailer}, expected {}",
            meta.value_count
        )));
    }
    Ok((net, meta))
}
