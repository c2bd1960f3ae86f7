//! Flat little-endian parameter snapshot.
//!
//! ```text
//! offset  size   field
//! 0       8      magic "AMTOPV01"
//! 8       8      u64 structure hash of the NetworkSpec
//! 16      8      u64 parameter count n
//! 24      8n     f64 parameter values
//! 24+8n   8n     f64 momentum buffer
//! ```

use std::io::{Read, Write};

use super::{NetworkSpec, ParamVector};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AMTOPV01";

pub fn write_checkpoint<W: Write>(mut out: W, spec: &NetworkSpec, params: &ParamVector) -> Result<()> {
    params.check_compatible(spec)?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&spec.structure_hash().to_le_bytes())?;
    out.write_all(&(params.len() as u64).to_le_bytes())?;
    for v in params.values.iter().chain(&params.momentum) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R, spec: &NetworkSpec) -> Result<ParamVector> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    if &word != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    input.read_exact(&mut word)?;
    let hash = u64::from_le_bytes(word);
    if hash != spec.structure_hash() {
        return Err(Error::Checkpoint(format!(
            "structure hash {hash:#018x} does not match spec {:#018x}",
            spec.structure_hash()
        )));
    }
    input.read_exact(&mut word)?;
    let len = u64::from_le_bytes(word) as usize;
    if len != spec.param_count() {
        return Err(Error::DimensionMismatch {
            what: "checkpoint parameter count",
            expected: spec.param_count(),
            actual: len,
        });
    }
    let mut read_block = |input: &mut R| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            input.read_exact(&mut word)?;
            out.push(f64::from_le_bytes(word));
        }
        Ok(out)
    };
    let values = read_block(&mut input)?;
    let momentum = read_block(&mut input)?;
    Ok(ParamVector { values, momentum })
}
