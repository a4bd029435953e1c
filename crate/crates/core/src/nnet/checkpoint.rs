//! Checkpoint persistence: one JSON header line describing the model,
//! then the raw little-endian 64-bit parameter blob in serialization
//! order (blocks in topology order; within a block the branch convs top
//! to bottom, then the bottleneck; weights before bias; head last).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::block::{WeatherNet, WeatherNetSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: WeatherNetSpec,
    pub epoch: usize,
    pub seed: u64,
}

pub fn save<T: Real>(path: &Path, net: &WeatherNet<T>, epoch: usize, seed: u64) -> Result<()> {
    let header = CheckpointHeader {
        spec: net.spec.clone(),
        epoch,
        seed,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for value in net.flatten_params() {
        out.write_all(&value.to_f64_lossy().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load<T: Real>(path: &Path) -> Result<(WeatherNet<T>, CheckpointHeader)> {
    let mut input = BufReader::new(File::open(path)?);
    let mut header_line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        let n = input.read(&mut byte)?;
        if n == 0 {
            return Err(Error::Decode {
                offset: header_line.len(),
                reason: "missing header terminator".into(),
            });
        }
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: CheckpointHeader = serde_json::from_slice(&header_line)?;
    let mut net = WeatherNet::<T>::init(header.spec.clone(), header.seed);
    let count = net.param_count();
    let mut blob = vec![0u8; count * 8];
    input.read_exact(&mut blob).map_err(|e| Error::Decode {
        offset: header_line.len() + 1,
        reason: format!("parameter blob: {e}"),
    })?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Decode {
            offset: header_line.len() + 1 + blob.len(),
            reason: "trailing bytes after parameter blob".into(),
        });
    }
    let params: Vec<T> = blob
        .chunks_exact(8)
        .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    net.load_flat_params(&params)?;
    Ok((net, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_preserves_parameters_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = WeatherNet::<f64>::init(WeatherNetSpec::reduced(&[2, 3, 4, 4, 3]), 17);
        save(&path, &net, 5, 17).unwrap();
        let (loaded, header) = load::<f64>(&path).unwrap();
        assert_eq!(header.epoch, 5);
        assert_eq!(header.seed, 17);
        assert_eq!(header.spec, net.spec);
        assert_eq!(loaded.flatten_params(), net.flatten_params());
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = WeatherNet::<f64>::init(WeatherNetSpec::reduced(&[2, 2, 2, 2, 2]), 1);
        save(&path, &net, 0, 1).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load::<f64>(&path).is_err());
    }

    #[test]
    fn missing_header_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not json at all").unwrap();
        assert!(load::<f64>(&path).is_err());
    }

    #[test]
    fn f32_net_saves_as_f64_blob() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net32.ckpt");
        let net = WeatherNet::<f32>::init(WeatherNetSpec::reduced(&[2, 2, 2, 2, 2]), 9);
        save(&path, &net, 0, 9).unwrap();
        let (loaded, _) = load::<f32>(&path).unwrap();
        assert_eq!(loaded.flatten_params(), net.flatten_params());
        let size = std::fs::metadata(&path).unwrap().len() as usize;
        let header_len = std::fs::read(&path)
            .unwrap()
            .iter()
            .position(|b| *b == b'\n')
            .unwrap()
            + 1;
        assert_eq!(size - header_len, net.param_count() * 8);
    }
}
