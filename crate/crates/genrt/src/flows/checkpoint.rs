//! Flow parameter checkpoints.
//!
//! Layout: magic `GNRTFLW1`, then little-endian u32 feature dim and u32 block
//! count, then every parameter array in declaration order as raw f64
//! little-endian. Architecture hyperparameters (bins, hidden width, tail)
//! come from the config of whoever loads the file; the byte length is
//! validated against it.

use std::io::{self, Read, Write};

use super::model::FlowModel;

pub const FLOW_MAGIC: &[u8; 8] = b"GNRTFLW1";

pub fn save_flow<W: Write>(model: &FlowModel, w: &mut W) -> io::Result<()> {
    w.write_all(FLOW_MAGIC)?;
    w.write_all(&(model.spec.feature_dim as u32).to_le_bytes())?;
    w.write_all(&(model.spec.blocks as u32).to_le_bytes())?;
    for (_, t) in model.params() {
        for v in t.values().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Fill `model`'s parameters from a checkpoint. The model must be constructed
/// with the same architecture.
pub fn load_flow<R: Read>(model: &mut FlowModel, r: &mut R) -> io::Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FLOW_MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad flow checkpoint magic {magic:?}"),
        ));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let d = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let blocks = u32::from_le_bytes(u32buf) as usize;
    if d != model.spec.feature_dim || blocks != model.spec.blocks {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!(
                "checkpoint is d={d}, blocks={blocks}; model is d={}, blocks={}",
                model.spec.feature_dim, model.spec.blocks
            ),
        ));
    }
    let mut f64buf = [0u8; 8];
    for (name, t) in model.params() {
        let mut vals = vec![0.0; t.len()];
        for v in vals.iter_mut() {
            r.read_exact(&mut f64buf).map_err(|e| {
                io::Error::new(e.kind(), format!("truncated checkpoint at {name}: {e}"))
            })?;
            *v = f64::from_le_bytes(f64buf);
        }
        t.set_values(&vals);
    }
    for b in &mut model.blocks {
        b.actnorm.mark_initialized();
    }
    Ok(())
}
