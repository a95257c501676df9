//! "RLXN" checkpoint files. All integers are little-endian `u32`, reals
//! little-endian `f64`:
//!
//! ```text
//! "RLXN" | version=1 | X | H | Y | l_w | l_t | V (0 without embedding)
//! flags: u8   bit0 oscillator, bit1 embedding, bit2 input-only drive,
//!             bit3 vocabulary section, bit4 explicit slot pattern
//! if oscillator: dt: f64 | eta: u32
//! every trainable tensor in `ModelParams::tensors` order, as f64
//! if vocabulary: count | count × code point (placeholder excluded)
//! if pattern:    length | length × slot index
//! ```

use std::fs;
use std::path::Path;

use crate::data::text::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Activation, LayerSchedule, ModelDims, ModelParams};
use crate::oscillator::{DriveMode, OscParams};

pub const MAGIC: &[u8; 4] = b"RLXN";
pub const VERSION: u32 = 1;

const FLAG_OSC: u8 = 1;
const FLAG_EMBEDDING: u8 = 1 << 1;
const FLAG_INPUT_ONLY: u8 = 1 << 2;
const FLAG_VOCAB: u8 = 1 << 3;
const FLAG_PATTERN: u8 = 1 << 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub schedule: LayerSchedule,
    pub vocab: Option<Vocabulary>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let p = &ckpt.params;
    p.validate()?;
    let dims = p.dims();
    if dims.l_w != ckpt.schedule.l_w() {
        return Err(Error::config("schedule slot count differs from the network's"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    for v in [dims.input, dims.hidden, dims.output, dims.l_w, ckpt.schedule.l_t(), dims.vocab.unwrap_or(0)] {
        put_u32(&mut out, v);
    }
    let mut flags = 0u8;
    if let Some(o) = &p.osc {
        flags |= FLAG_OSC;
        if o.drive == DriveMode::InputOnly {
            flags |= FLAG_INPUT_ONLY;
        }
    }
    if p.embedding.is_some() {
        flags |= FLAG_EMBEDDING;
    }
    if ckpt.vocab.is_some() {
        flags |= FLAG_VOCAB;
    }
    if ckpt.schedule.pattern().is_some() {
        flags |= FLAG_PATTERN;
    }
    out.push(flags);
    if let Some(o) = &p.osc {
        out.extend_from_slice(&o.dt.to_le_bytes());
        put_u32(&mut out, o.eta);
    }
    for t in p.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(v) = &ckpt.vocab {
        put_u32(&mut out, v.chars().len());
        for &c in v.chars() {
            put_u32(&mut out, c as usize);
        }
    }
    if let Some(pat) = ckpt.schedule.pattern() {
        put_u32(&mut out, pat.len());
        for &s in pat {
            put_u32(&mut out, s);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::data(format!("checkpoint truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::data("bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::data(format!("unsupported checkpoint version {version}")));
    }
    let (x, h, y, l_w, l_t, v) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let flags = r.u8()?;
    if flags & !(FLAG_OSC | FLAG_EMBEDDING | FLAG_INPUT_ONLY | FLAG_VOCAB | FLAG_PATTERN) != 0 {
        return Err(Error::data(format!("unknown checkpoint flags 0x{flags:02x}")));
    }
    let has_embedding = flags & FLAG_EMBEDDING != 0;
    if has_embedding != (v > 0) {
        return Err(Error::data("embedding flag disagrees with vocabulary size"));
    }
    // Guard against absurd headers before allocating.
    let approx = x
        .checked_mul(h)
        .and_then(|a| a.checked_add(l_w.checked_mul(h.checked_mul(h)?)?))
        .and_then(|a| a.checked_add(y.checked_mul(h)?))
        .and_then(|a| a.checked_add(v.checked_mul(x)?))
        .ok_or_else(|| Error::data("checkpoint dimensions overflow"))?;
    if approx.saturating_mul(8) > bytes.len() {
        return Err(Error::data("checkpoint truncated: dimensions exceed file size"));
    }
    let activation = if flags & FLAG_OSC != 0 {
        let dt = r.f64()?;
        let eta = r.u32()?;
        let drive = if flags & FLAG_INPUT_ONLY != 0 {
            DriveMode::InputOnly
        } else {
            DriveMode::Recurrent
        };
        Activation::Oscillator(OscParams {
            dt,
            eta,
            drive,
            ..OscParams::default()
        })
    } else {
        Activation::Relu
    };
    let dims = ModelDims {
        input: x,
        hidden: h,
        output: y,
        l_w,
        vocab: if has_embedding { Some(v) } else { None },
    };
    let mut params = ModelParams::zeros(&dims, &activation);
    for t in params.tensors_mut() {
        for slot in t.iter_mut() {
            *slot = r.f64()?;
        }
    }
    params.validate()?;

    let vocab = if flags & FLAG_VOCAB != 0 {
        let n = r.u32()?;
        let mut chars = Vec::with_capacity(n.min(bytes.len()));
        for _ in 0..n {
            let code = r.u32()? as u32;
            chars.push(char::from_u32(code).ok_or_else(|| Error::data(format!("invalid code point {code}")))?);
        }
        Some(Vocabulary::from_tokens(chars)?)
    } else {
        None
    };
    let schedule = if flags & FLAG_PATTERN != 0 {
        let n = r.u32()?;
        let mut pat = Vec::with_capacity(n.min(bytes.len()));
        for _ in 0..n {
            pat.push(r.u32()?);
        }
        let s = LayerSchedule::with_pattern(l_w, pat).map_err(|e| Error::data(e.to_string()))?;
        if s.l_t() != l_t {
            return Err(Error::data("pattern length differs from l_t"));
        }
        s
    } else {
        LayerSchedule::new(l_w, l_t).map_err(|e| Error::data(e.to_string()))?
    };
    if r.pos != bytes.len() {
        return Err(Error::data("trailing bytes after checkpoint"));
    }
    Ok(Checkpoint {
        params,
        schedule,
        vocab,
    })
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::text::build_vocab;
    use crate::linalg::Rng;
    use crate::train::init_params;

    fn sample(activation: Activation, vocab: bool, pattern: bool) -> Checkpoint {
        let v = build_vocab("the quick brown fox", 1, 0.0).unwrap();
        let dims = ModelDims {
            input: 3,
            hidden: 4,
            output: if vocab { v.len() } else { 2 },
            l_w: 2,
            vocab: vocab.then(|| v.len()),
        };
        let mut rng = Rng::new(3);
        let mut params = init_params(&dims, &activation, &mut rng).unwrap();
        params.alpha = 0.75;
        params.b_y[1] = -1.5e-300;
        let schedule = if pattern {
            LayerSchedule::with_pattern(2, vec![1, 0, 0, 1, 1]).unwrap()
        } else {
            LayerSchedule::new(2, 5).unwrap()
        };
        Checkpoint {
            params,
            schedule,
            vocab: vocab.then_some(v),
        }
    }

    #[test]
    fn round_trips() {
        let osc = OscParams {
            gamma_p: 0.8,
            gamma_nl: 0.1,
            dt: 0.05,
            eta: 4,
            drive: DriveMode::InputOnly,
        };
        for c in [
            sample(Activation::Relu, false, false),
            sample(Activation::Relu, true, true),
            sample(Activation::Oscillator(osc), true, false),
            sample(Activation::Oscillator(OscParams::default()), false, true),
        ] {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.rlxn");
            save(&c, &p).unwrap();
            assert_eq!(load(&p).unwrap(), c);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&sample(Activation::Relu, true, false)).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes;
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&bad).is_err());
    }
}
