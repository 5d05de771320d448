//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SMCK" | u32 version | u32 preset-name len + bytes
//! u32 input_width | u64 rng_seed | u64 next_epoch
//! u32 param count
//!   per param: u32 name len + bytes | u32 rows | u32 cols | f64 values…
//! u8 optimizer flag
//!   if 1: u64 step | f64 beta1 | f64 beta2 | f64 epsilon
//!         per param: f64 first moments… | f64 second moments…
//! ```
//!
//! Every scalar is written explicitly, so identical state produces
//! byte-identical files on any platform.

use crate::error::{Error, Result};
use crate::neural::{preset, PresetConfig, SteeringModel};
use crate::training::OptimizerState;
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"SMCK";
const VERSION: u32 = 1;

/// Everything needed to resume: the model, its preset, and optionally the
/// optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SteeringModel,
    pub preset: PresetConfig,
    pub input_width: usize,
    pub rng_seed: u64,
    pub next_epoch: u64,
    pub optimizer: Option<OptimizerState>,
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(
    model: &SteeringModel,
    rng_seed: u64,
    next_epoch: u64,
    optimizer: Option<&OptimizerState>,
) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    write_str(&mut out, &model.preset_name);
    out.extend_from_slice(&(model.input_width() as u32).to_le_bytes());
    out.extend_from_slice(&rng_seed.to_le_bytes());
    out.extend_from_slice(&next_epoch.to_le_bytes());
    out.extend_from_slice(&(model.param_count() as u32).to_le_bytes());
    model.visit_params(&mut |p| {
        write_str(&mut out, &p.name);
        out.extend_from_slice(&(p.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols() as u32).to_le_bytes());
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    match optimizer {
        Some(opt) => {
            out.push(1);
            out.extend_from_slice(&opt.step_count().to_le_bytes());
            out.extend_from_slice(&opt.beta1.to_le_bytes());
            out.extend_from_slice(&opt.beta2.to_le_bytes());
            out.extend_from_slice(&opt.epsilon.to_le_bytes());
            for buf in opt.m.iter().chain(opt.v.iter()) {
                for v in buf {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        None => out.push(0),
    }
    out
}

/// Writes a checkpoint file.
pub fn save(
    path: &Path,
    model: &SteeringModel,
    rng_seed: u64,
    next_epoch: u64,
    optimizer: Option<&OptimizerState>,
) -> Result<()> {
    std::fs::write(path, to_bytes(model, rng_seed, next_epoch, optimizer))?;
    Ok(())
}

/// Parses checkpoint bytes, rebuilding the model from its stored preset.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::InvalidCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::InvalidCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let preset_name = r.string()?;
    let input_width = r.u32()? as usize;
    let rng_seed = r.u64()?;
    let next_epoch = r.u64()?;
    let preset_cfg = preset(&preset_name)?;
    let mut model = SteeringModel::from_preset(&preset_cfg, input_width, rng_seed)?;

    let n_params = r.u32()? as usize;
    if n_params != model.param_count() {
        return Err(Error::InvalidCheckpoint(format!(
            "stored {} parameters but preset '{}' defines {}",
            n_params,
            preset_name,
            model.param_count()
        )));
    }
    let mut err = None;
    let r_cell = std::cell::RefCell::new(&mut r);
    model.visit_params_mut(&mut |p| {
        if err.is_some() {
            return;
        }
        let mut r = r_cell.borrow_mut();
        let read = (|| -> Result<()> {
            let name = r.string()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if name != p.name || rows != p.rows() || cols != p.cols() {
                return Err(Error::InvalidCheckpoint(format!(
                    "parameter mismatch: stored '{name}' {rows}x{cols}, expected '{}' {}x{}",
                    p.name,
                    p.rows(),
                    p.cols()
                )));
            }
            for v in p.values.iter_mut() {
                *v = r.f64()?;
            }
            Ok(())
        })();
        if let Err(e) = read {
            err = Some(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let mut opt = OptimizerState::new(&model);
            opt.step = r.u64()?;
            opt.beta1 = r.f64()?;
            opt.beta2 = r.f64()?;
            opt.epsilon = r.f64()?;
            for buf in opt.m.iter_mut() {
                for v in buf.iter_mut() {
                    *v = r.f64()?;
                }
            }
            for buf in opt.v.iter_mut() {
                for v in buf.iter_mut() {
                    *v = r.f64()?;
                }
            }
            Some(opt)
        }
        other => {
            return Err(Error::InvalidCheckpoint(format!(
                "bad optimizer flag {other}"
            )))
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::InvalidCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        model,
        preset: preset_cfg,
        input_width,
        rng_seed,
        next_epoch,
        optimizer,
    })
}

/// Reads a checkpoint file.
pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::InvalidCheckpoint(format!(
                "truncated at byte {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::InvalidCheckpoint("non-UTF8 string".into()))
    }
}
