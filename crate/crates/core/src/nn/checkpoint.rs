//! Binary checkpoint of a parameter set, optional optimizer state and a JSON
//! metadata blob (the model configuration).
//!
//! Layout, little endian:
//!
//! ```text
//! b"DGSSMCKP"  u32 version
//! u64 meta_len, meta_len bytes of UTF-8 JSON
//! u32 count
//! name table:  count x (u32 len, bytes)
//! shape table: count x (u32 rank, rank x u64)
//! payload:     values as f64, parameters in table order
//! u8 has_optimizer
//!   u64 step, f64 lr, beta1, beta2, eps, weight_decay
//!   first moments as f64, second moments as f64
//! ```
//!
//! Values are always stored as `f64`, whatever [`Real`] is.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::{AdamW, AdamWConfig, ParameterSet, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"DGSSMCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: String,
    pub params: ParameterSet,
    pub optimizer: Option<AdamW>,
}

fn write_values<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    for &x in t.data() {
        w.write_f64::<LE>(x as f64)?;
    }
    Ok(())
}

fn read_values<R: Read>(r: &mut R, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.read_f64::<LE>()? as Real);
    }
    Tensor::new(shape.to_vec(), data)
}

pub fn write_checkpoint<W: Write>(w: &mut W, meta: &str, params: &ParameterSet, opt: Option<&AdamW>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(meta.len() as u64)?;
    w.write_all(meta.as_bytes())?;
    w.write_u32::<LE>(params.len() as u32)?;
    for p in params.iter() {
        w.write_u32::<LE>(p.name.len() as u32)?;
        w.write_all(p.name.as_bytes())?;
    }
    for p in params.iter() {
        w.write_u32::<LE>(p.value.rank() as u32)?;
        for &d in p.value.shape() {
            w.write_u64::<LE>(d as u64)?;
        }
    }
    for p in params.iter() {
        write_values(w, &p.value)?;
    }
    match opt {
        None => w.write_u8(0)?,
        Some(o) => {
            w.write_u8(1)?;
            w.write_u64::<LE>(o.steps_taken())?;
            let c = o.config;
            for x in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
                w.write_f64::<LE>(x)?;
            }
            for t in o.first_moments().iter().chain(o.second_moments()) {
                write_values(w, t)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = r.read_u64::<LE>()? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta = String::from_utf8(meta).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
    let count = r.read_u32::<LE>()? as usize;
    let mut names = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.read_u32::<LE>()? as usize;
        let mut b = vec![0u8; len];
        r.read_exact(&mut b)?;
        names.push(String::from_utf8(b).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?);
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.read_u32::<LE>()? as usize;
        let shape = (0..rank)
            .map(|_| r.read_u64::<LE>().map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        shapes.push(shape);
    }
    let mut params = ParameterSet::new();
    for (name, shape) in names.into_iter().zip(&shapes) {
        params.insert(name, read_values(r, shape)?)?;
    }
    let optimizer = match r.read_u8()? {
        0 => None,
        1 => {
            let step = r.read_u64::<LE>()?;
            let mut h = [0.0; 5];
            for x in &mut h {
                *x = r.read_f64::<LE>()?;
            }
            let config = AdamWConfig {
                lr: h[0],
                beta1: h[1],
                beta2: h[2],
                eps: h[3],
                weight_decay: h[4],
            };
            let m = shapes.iter().map(|s| read_values(r, s)).collect::<Result<Vec<_>>>()?;
            let v = shapes.iter().map(|s| read_values(r, s)).collect::<Result<Vec<_>>>()?;
            Some(AdamW::from_state(config, step, m, v)?)
        }
        f => return Err(Error::Format(format!("bad optimizer flag {f}"))),
    };
    Ok(Checkpoint {
        meta,
        params,
        optimizer,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, meta: &str, params: &ParameterSet, opt: Option<&AdamW>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, meta, params, opt)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
