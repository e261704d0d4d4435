//! Binary parameter container.
//!
//! Layout: the magic `PSIFT1`, then per parameter in ascending name order:
//! `u32` name length, UTF-8 name bytes, `u32` rank, one `u64` per extent,
//! and the row-major values as `f64`. All integers and floats little-endian.

use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"PSIFT1";

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut params: Vec<_> = store.iter().collect();
    params.sort_by(|a, b| a.name.cmp(&b.name));
    let mut buf = MAGIC.to_vec();
    for p in params {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &e in p.value.shape() {
            buf.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Decodes `(name, tensor)` pairs in file order.
pub fn decode(buf: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if buf.len() < MAGIC.len() {
        return if MAGIC.starts_with(buf) {
            Err(Error::Truncated("magic".into()))
        } else {
            Err(Error::BadMagic)
        };
    }
    if &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader {
        buf,
        pos: MAGIC.len(),
    };
    let mut out = Vec::new();
    while r.pos < buf.len() {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32(&format!("rank of `{name}`"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64(&format!("extents of `{name}`"))? as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = r.take(
            n.checked_mul(8).ok_or_else(|| Error::Format("extent overflow".into()))?,
            &format!("values of `{name}`"),
        )?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode(store)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

/// Overwrites every value of `store` from decoded entries.
///
/// Names and shapes must match exactly; the offending parameter is named
/// in the error.
pub fn restore_into(store: &mut ParamStore, entries: Vec<(String, Tensor)>) -> Result<()> {
    if entries.len() != store.len() {
        let known: std::collections::HashSet<&str> = entries.iter().map(|e| e.0.as_str()).collect();
        let missing = store.iter().find(|p| !known.contains(p.name.as_str()));
        let name = match missing {
            Some(p) => p.name.clone(),
            None => entries
                .iter()
                .find(|e| store.id_of(&e.0).is_none())
                .map(|e| e.0.clone())
                .unwrap_or_default(),
        };
        return Err(Error::ShapeMismatch {
            name,
            message: format!("checkpoint holds {} parameters, model expects {}", entries.len(), store.len()),
        });
    }
    for (name, t) in entries {
        let id = store.id_of(&name).ok_or_else(|| Error::ShapeMismatch {
            name: name.clone(),
            message: "parameter not present in the model".into(),
        })?;
        let p = store.get_mut(id);
        if p.value.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                message: format!("checkpoint has {:?}, model expects {:?}", t.shape(), p.value.shape()),
                name,
            });
        }
        p.value = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("b", Tensor::new(vec![2], vec![1.5, -2.0]).unwrap()).unwrap();
        s.add("a", Tensor::new(vec![1, 3], vec![0.1, 0.2, f64::MIN_POSITIVE]).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn layout_is_sorted_and_little_endian() {
        let buf = encode(&store());
        assert_eq!(&buf[..6], b"PSIFT1");
        assert_eq!(&buf[6..10], &1u32.to_le_bytes());
        assert_eq!(buf[10], b'a');
        assert_eq!(&buf[11..15], &2u32.to_le_bytes());
        assert_eq!(&buf[15..23], &1u64.to_le_bytes());
        // 6 + (4+1+4+16+24) + (4+1+4+8+16)
        assert_eq!(buf.len(), 6 + 49 + 33);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let buf = encode(&store());
        for cut in [3, 10, 20, buf.len() - 1] {
            assert!(matches!(decode(&buf[..cut]), Err(Error::Truncated(_))), "cut {cut}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic)));
    }

    #[test]
    fn restore_detects_shape_mismatch() {
        let src = store();
        let mut dst = ParamStore::new();
        dst.add_zeros("a", &[3, 1]).unwrap();
        dst.add_zeros("b", &[2]).unwrap();
        match restore_into(&mut dst, decode(&encode(&src)).unwrap()) {
            Err(Error::ShapeMismatch { name, .. }) => assert_eq!(name, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
