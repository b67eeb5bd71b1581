//! Versioned binary checkpoints with a JSON sidecar.
//!
//! Layout: 8 magic bytes, `u32` version, `u32` channel count, `u32` block
//! count, then per block its name (`u32` length + UTF-8) and shape (`u32`
//! rank + `u64` dims), then every block's values as little-endian `f64` in
//! table order. The batch-norm running statistics follow the parameters as
//! two extra blocks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::{ApprenticeNet, CONV_LAYERS};
use crate::error::{HedgeError, Result};

const MAGIC: &[u8; 8] = b"HEDGENET";
const VERSION: u32 = 1;
const RUNNING_MEAN: &str = "bn.running_mean";
const RUNNING_VAR: &str = "bn.running_var";

/// Sidecar contents: free-form hyperparameters plus the evaluation reward
/// that got the net accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iteration: usize,
    pub evaluation_reward: f64,
    pub hyperparameters: serde_json::Value,
}

fn table(net: &ApprenticeNet) -> Vec<(String, Vec<usize>)> {
    let mut t: Vec<(String, Vec<usize>)> = net.blocks().iter().map(|b| (b.name.clone(), b.shape.clone())).collect();
    t.push((RUNNING_MEAN.into(), vec![CONV_LAYERS, net.channels()]));
    t.push((RUNNING_VAR.into(), vec![CONV_LAYERS, net.channels()]));
    t
}

pub fn write_checkpoint<W: Write>(net: &ApprenticeNet, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(net.channels() as u32).to_le_bytes())?;
    let t = table(net);
    out.write_all(&(t.len() as u32).to_le_bytes())?;
    for (name, shape) in &t {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in shape {
            out.write_all(&(*d as u64).to_le_bytes())?;
        }
    }
    let (mean, var) = net.running_stats();
    for x in net.params().iter().chain(mean).chain(var) {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> HedgeError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        HedgeError::Checkpoint("file is truncated".into())
    } else {
        HedgeError::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ApprenticeNet> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(HedgeError::Checkpoint("not a network checkpoint (bad magic bytes)".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(HedgeError::Checkpoint(format!(
            "unsupported layout version {version}, expected {VERSION}"
        )));
    }
    let channels = read_u32(&mut input)? as usize;
    let expected = table(&ApprenticeNet::new(channels.max(1), 0)?);
    let count = read_u32(&mut input)? as usize;
    if count > 1024 {
        return Err(HedgeError::Checkpoint(format!("implausible block count {count}")));
    }
    let mut found = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        if len > 256 {
            return Err(HedgeError::Checkpoint(format!("implausible block name length {len}")));
        }
        let mut name = vec![0u8; len];
        input.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| HedgeError::Checkpoint("block name is not UTF-8".into()))?;
        let rank = read_u32(&mut input)? as usize;
        if rank > 8 {
            return Err(HedgeError::Checkpoint(format!("implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u64(&mut input).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        found.push((name, shape));
    }
    if channels == 0 || found != expected {
        let describe = |t: &[(String, Vec<usize>)]| {
            t.iter().map(|(n, s)| format!("{n}{s:?}")).collect::<Vec<_>>().join(", ")
        };
        return Err(HedgeError::ShapeMismatch {
            expected: describe(&expected),
            got: describe(&found),
        });
    }
    let total: usize = found.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(f64::from_bits(read_u64(&mut input)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(HedgeError::Checkpoint("trailing bytes after the parameter data".into()));
    }
    let stats = CONV_LAYERS * channels;
    let var = values.split_off(total - stats);
    let mean = values.split_off(total - 2 * stats);
    ApprenticeNet::from_parts(channels, values, mean, var)
}

/// `<checkpoint>.json` next to the binary file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint(path: &Path, net: &ApprenticeNet, meta: &CheckpointMeta) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| HedgeError::Checkpoint(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Loads the net and, when present, its sidecar.
pub fn load_checkpoint(path: &Path) -> Result<(ApprenticeNet, Option<CheckpointMeta>)> {
    let net = read_checkpoint(BufReader::new(File::open(path)?))?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let text = std::fs::read_to_string(&side)?;
        Some(serde_json::from_str(&text).map_err(|e| HedgeError::Checkpoint(format!("{}: {e}", side.display())))?)
    } else {
        None
    };
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = ApprenticeNet::new(3, 5).unwrap();
        net.perturb_heads(0.7, 6);
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = ApprenticeNet::new(2, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(HedgeError::Checkpoint(_))));

        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(HedgeError::Checkpoint(_))));

        assert!(matches!(
            read_checkpoint(&buf[..buf.len() - 3]),
            Err(HedgeError::Checkpoint(_))
        ));

        // channel count says 3 but the table describes 2
        let mut bad = buf.clone();
        bad[12] = 3;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(HedgeError::ShapeMismatch { .. })));

        let mut bad = buf;
        bad.push(0);
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(HedgeError::Checkpoint(_))));
    }

    #[test]
    fn files_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("champion.bin");
        let net = ApprenticeNet::new(2, 9).unwrap();
        let meta = CheckpointMeta {
            iteration: 3,
            evaluation_reward: -0.25,
            hyperparameters: serde_json::json!({"lr": 0.001}),
        };
        save_checkpoint(&path, &net, &meta).unwrap();
        let (back, m) = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(m, Some(meta));
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().1, None);
    }
}
