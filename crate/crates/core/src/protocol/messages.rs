//! Canonical byte layout for protocol messages. All integers and floats are
//! little-endian; every float run is preceded by its `u32` length.
//!
//! ```text
//! GradientReport := worker:u32 round:u64 count:u32 { region:u32 len:u32 f64*len }*count
//! HessianReport  := worker:u32 dim:u32 f64*dim (gradient) f64*(dim*dim) (Hessian, row-major)
//! ModelBroadcast := round:u64 len:u32 f64*len
//! ```

use super::{GradientReport, HessianReport, ProtocolError};
use crate::linalg::SymMatrix;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("length fits in u32").to_le_bytes());
}

fn put_floats(buf: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ProtocolError::Decode(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, ProtocolError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| ProtocolError::Decode("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn finish(self) -> Result<(), ProtocolError> {
        if self.pos != self.bytes.len() {
            return Err(ProtocolError::Decode(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_gradient_report(r: &GradientReport) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, r.worker);
    buf.extend_from_slice(&(r.round as u64).to_le_bytes());
    put_u32(&mut buf, r.fragments.len());
    for (q, values) in &r.fragments {
        put_u32(&mut buf, *q);
        put_u32(&mut buf, values.len());
        put_floats(&mut buf, values);
    }
    buf
}

pub fn decode_gradient_report(bytes: &[u8]) -> Result<GradientReport, ProtocolError> {
    let mut rd = Reader { bytes, pos: 0 };
    let worker = rd.u32()?;
    let round = rd.u64()? as usize;
    let count = rd.u32()?;
    let mut fragments = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let q = rd.u32()?;
        let len = rd.u32()?;
        fragments.push((q, rd.floats(len)?));
    }
    rd.finish()?;
    Ok(GradientReport { worker, round, fragments })
}

pub fn encode_hessian_report(r: &HessianReport) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, r.worker);
    put_u32(&mut buf, r.grad.len());
    put_floats(&mut buf, &r.grad);
    put_floats(&mut buf, r.hessian.as_slice());
    buf
}

pub fn decode_hessian_report(bytes: &[u8]) -> Result<HessianReport, ProtocolError> {
    let mut rd = Reader { bytes, pos: 0 };
    let worker = rd.u32()?;
    let dim = rd.u32()?;
    let grad = rd.floats(dim)?;
    let entries = rd.floats(dim.checked_mul(dim).ok_or_else(|| ProtocolError::Decode("dim overflow".into()))?)?;
    rd.finish()?;
    let hessian = SymMatrix::from_row_major(dim, entries)?;
    Ok(HessianReport { worker, grad, hessian })
}

pub fn encode_model(round: usize, model: &[f64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * model.len());
    buf.extend_from_slice(&(round as u64).to_le_bytes());
    put_u32(&mut buf, model.len());
    put_floats(&mut buf, model);
    buf
}

pub fn decode_model(bytes: &[u8]) -> Result<(usize, Vec<f64>), ProtocolError> {
    let mut rd = Reader { bytes, pos: 0 };
    let round = rd.u64()? as usize;
    let len = rd.u32()?;
    let model = rd.floats(len)?;
    rd.finish()?;
    Ok((round, model))
}
