use std::fs;
use std::path::Path;

use super::config::FieldConfig;
use super::params::EdgeFieldParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NEFFIELD";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Little-endian byte sink.
#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Little-endian byte source; errors carry a short description.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }
    pub fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    pub fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f32s_into(&mut self, out: &mut [f32]) -> std::result::Result<(), String> {
        let raw = self.take(4 * out.len())?;
        for (o, c) in out.iter_mut().zip(raw.chunks_exact(4)) {
            *o = f32::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }
    pub fn finish(&self) -> std::result::Result<(), String> {
        if self.pos != self.bytes.len() {
            return Err(format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

fn write_config(w: &mut Writer, c: &FieldConfig) {
    for v in [
        c.backbone_depth,
        c.backbone_width,
        c.skip_layer,
        c.gray_head_depth,
        c.gray_head_width,
        c.pe_position_l,
        c.pe_direction_l,
    ] {
        w.u32(v as u32);
    }
    w.f64(c.beta);
    w.f64(c.g);
    w.f64(c.alpha_init);
}

fn read_config(r: &mut Reader) -> std::result::Result<FieldConfig, String> {
    let mut ints = [0usize; 7];
    for v in ints.iter_mut() {
        *v = r.u32()? as usize;
    }
    let c = FieldConfig {
        backbone_depth: ints[0],
        backbone_width: ints[1],
        skip_layer: ints[2],
        gray_head_depth: ints[3],
        gray_head_width: ints[4],
        pe_position_l: ints[5],
        pe_direction_l: ints[6],
        beta: r.f64()?,
        g: r.f64()?,
        alpha_init: r.f64()?,
    };
    c.validate().map_err(|e| format!("bad field config: {e}"))?;
    Ok(c)
}

pub fn checkpoint_bytes(params: &EdgeFieldParams<f32>) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    write_config(&mut w, &params.config);
    for t in params.tensors() {
        w.f32s(t);
    }
    w.f64(params.log_alpha);
    w.buf
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> std::result::Result<EdgeFieldParams<f32>, String> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err("bad magic: not a field checkpoint".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let config = read_config(&mut r)?;
    let mut params = EdgeFieldParams::<f32>::zeros(&config);
    for t in params.tensors_mut() {
        r.f32s_into(t)?;
    }
    params.log_alpha = r.f64()?;
    r.finish()?;
    if !params.is_finite() {
        return Err("checkpoint contains non-finite values".into());
    }
    Ok(params)
}

/// Header (magic, version, config), every weight and bias as little-endian
/// `f32` in declaration order, then `log_alpha` as `f64`.
pub fn save_checkpoint(params: &EdgeFieldParams<f32>, path: &Path) -> Result<()> {
    crate::synth::write_file(path, &checkpoint_bytes(params))
}

pub fn load_checkpoint(path: &Path) -> Result<EdgeFieldParams<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes).map_err(|m| Error::parse(path, m))
}
