//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | content                                             |
//! |-------|-----------------------------------------------------|
//! | 8     | magic `b"DAECKPT\0"`                                |
//! | 4     | format version (`u32`, currently 1)                 |
//! | 16    | `input`, `feature`, `hidden`, `window` as `u32`     |
//! | 8·N   | every tensor as `f64`, in [`ModelParams::tensors`] order, row-major |
//!
//! LSTM weights are stored per gate (i, f, o, c), each `hidden × (hidden + feature)`,
//! followed by the four gate biases.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{Dims, ModelParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"DAECKPT\0";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(params: &ModelParams<T>, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let d = params.dims;
    for v in [d.input, d.feature, d.hidden, d.window] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for t in params.tensors() {
        for v in t {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<ModelParams<T>> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    let mut next_u32 = |input: &mut R| -> Result<u32> {
        input
            .read_exact(&mut word)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        Ok(u32::from_le_bytes(word))
    };
    let version = next_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dims = Dims {
        input: next_u32(&mut input)? as usize,
        feature: next_u32(&mut input)? as usize,
        hidden: next_u32(&mut input)? as usize,
        window: next_u32(&mut input)? as usize,
    };
    if dims.input == 0 || dims.feature == 0 || dims.hidden == 0 || dims.window == 0 {
        return Err(Error::Checkpoint(format!("degenerate dims {dims:?}")));
    }
    let mut params = ModelParams::<T>::zeros(dims);
    let mut buf = [0u8; 8];
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            input
                .read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint("truncated tensor data".into()))?;
            *v = T::of(f64::from_le_bytes(buf));
        }
    }
    if input.read(&mut buf)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if params.param_count() != dims.param_count() {
        return Err(Error::Checkpoint("parameter count mismatch".into()));
    }
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint and requires it to match `expected` dims when given.
pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    expected: Option<Dims>,
) -> Result<ModelParams<T>> {
    let params: ModelParams<T> = read_checkpoint(BufReader::new(File::open(path)?))?;
    if let Some(d) = expected {
        if d != params.dims {
            return Err(Error::Checkpoint(format!(
                "dimension mismatch: expected {d:?}, found {:?}",
                params.dims
            )));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::<f64>::glorot(Dims::MICRO, &mut ChaCha8Rng::seed_from_u64(1));
        let mut bytes = Vec::new();
        write_checkpoint(&p, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 4 + 16 + 8 * Dims::MICRO.param_count());
        let q: ModelParams<f64> = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_corruption() {
        let p = ModelParams::<f64>::zeros(Dims::MICRO);
        let mut bytes = Vec::new();
        write_checkpoint(&p, &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f64, _>(bad.as_slice()).is_err());

        let truncated = &bytes[..bytes.len() - 3];
        assert!(read_checkpoint::<f64, _>(truncated).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(read_checkpoint::<f64, _>(trailing.as_slice()).is_err());
    }

    #[test]
    fn load_checks_expected_dims() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&ModelParams::<f64>::zeros(Dims::MICRO), &path).unwrap();
        assert!(load_checkpoint::<f64>(&path, Some(Dims::MICRO)).is_ok());
        assert!(load_checkpoint::<f64>(&path, Some(Dims::FULL)).is_err());
    }
}
