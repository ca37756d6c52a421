//! Binary checkpoint of a trained head plus optional optimizer state.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic   8 bytes  "LIHEAD01"
//! version u32      1
//! kind    u8       0 = ff, 1 = li
//! d       u64
//! V       u64
//! k       f64      surrogate steepness (0 for ff)
//! [li]    W: d*d f64 row-major, b: d f64
//! dense   P: d*V f64 row-major, c: V f64
//! optim   u8       0 = absent, 1 = present
//! [optim] t: u64, then m and v for every tensor in the order W, b, P, c
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::head::{AcousticHead, DenseParams, HeadKind};
use crate::li::LiParams;
use crate::linalg::{Matrix, Vector};
use crate::optim::{AdamState, GradSet};

const MAGIC: &[u8; 8] = b"LIHEAD01";
pub const VERSION: u32 = 1;

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(head: &AcousticHead, optim: Option<&AdamState>) -> Result<Vec<u8>> {
    let d = head.input_dim();
    let v = head.output_dim();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match head.kind {
        HeadKind::FeedForward => 0,
        HeadKind::LateralInhibition => 1,
    });
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    buf.extend_from_slice(&(v as u64).to_le_bytes());
    buf.extend_from_slice(&head.li.as_ref().map_or(0.0, |l| l.k).to_le_bytes());
    if let Some(li) = &head.li {
        put_f64s(&mut buf, li.w.as_slice());
        put_f64s(&mut buf, &li.b);
    }
    put_f64s(&mut buf, head.dense.p.as_slice());
    put_f64s(&mut buf, &head.dense.c);
    match optim {
        None => buf.push(0),
        Some(state) => {
            if state.m.shapes() != head.param_shapes() || state.v.shapes() != head.param_shapes() {
                return Err(Error::Checkpoint("optimizer state does not match head shapes".into()));
            }
            buf.push(1);
            buf.extend_from_slice(&state.t.to_le_bytes());
            for (m, v) in state.m.parts.iter().zip(&state.v.parts) {
                put_f64s(&mut buf, m);
                put_f64s(&mut buf, v);
            }
        }
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<(AcousticHead, Option<AdamState>)> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = match r.u8()? {
        0 => HeadKind::FeedForward,
        1 => HeadKind::LateralInhibition,
        other => return Err(Error::Checkpoint(format!("unknown head kind {other}"))),
    };
    let d = r.u64()? as usize;
    let v = r.u64()? as usize;
    let k = r.f64()?;
    let li = match kind {
        HeadKind::FeedForward => None,
        HeadKind::LateralInhibition => {
            let w = Matrix::from_vec(d, d, r.f64s(d * d)?)?;
            let b = Vector(r.f64s(d)?);
            Some(LiParams::new(w, b, k)?)
        }
    };
    let p = Matrix::from_vec(d, v, r.f64s(d * v)?)?;
    let c = Vector(r.f64s(v)?);
    let head = AcousticHead::new(kind, li, DenseParams::new(p, c)?)?;
    let optim = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let mut m = Vec::new();
            let mut vv = Vec::new();
            for n in head.param_shapes() {
                m.push(r.f64s(n)?);
                vv.push(r.f64s(n)?);
            }
            Some(AdamState {
                m: GradSet::new(m),
                v: GradSet::new(vv),
                t,
            })
        }
        other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
    };
    r.finish()?;
    Ok((head, optim))
}

pub fn save(path: &Path, head: &AcousticHead, optim: Option<&AdamState>) -> Result<()> {
    std::fs::write(path, encode(head, optim)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(AcousticHead, Option<AdamState>)> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    #[test]
    fn round_trip_both_kinds() {
        for kind in [HeadKind::FeedForward, HeadKind::LateralInhibition] {
            let mut r1 = DetRng::new(1);
            let mut r2 = DetRng::new(2);
            let head = AcousticHead::init(kind, 5, 7, 10.0, &mut r1, &mut r2).unwrap();
            let mut state = AdamState::new(&head.param_shapes());
            state.t = 42;
            state.m.parts[0][1] = -0.125;
            state.v.parts.last_mut().unwrap()[0] = f64::MIN_POSITIVE;
            let bytes = encode(&head, Some(&state)).unwrap();
            let (h2, s2) = decode(&bytes).unwrap();
            assert_eq!(h2, head);
            assert_eq!(s2.as_ref(), Some(&state));
            assert_eq!(encode(&h2, s2.as_ref()).unwrap(), bytes);

            let bare = encode(&head, None).unwrap();
            assert_eq!(decode(&bare).unwrap(), (head, None));
        }
    }

    #[test]
    fn rejects_corruption() {
        let mut r = DetRng::new(1);
        let head = AcousticHead::init(HeadKind::LateralInhibition, 3, 4, 10.0, &mut r.clone(), &mut r).unwrap();
        let bytes = encode(&head, None).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }
}
