//! Versioned binary parameter blobs.
//!
//! Layout, little-endian: magic `CFNN`, format version `u32`, head `u8`
//! (0 linear, 1 softmax), layer count `u32`, each layer size `u32`,
//! parameter count `u64`, then the parameters as `f64` in the flat order of
//! [`Mlp::params`].

use std::path::Path;

use crate::error::{NnError, Result};
use crate::mlp::{Head, Mlp};

const MAGIC: &[u8; 4] = b"CFNN";
const VERSION: u32 = 1;

pub fn to_bytes(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match net.head() {
        Head::Linear => 0,
        Head::Softmax => 1,
    });
    out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for &s in net.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.num_params() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Mlp> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let head = match r.take(1)?[0] {
        0 => Head::Linear,
        1 => Head::Softmax,
        h => return Err(NnError::Checkpoint(format!("unknown head {h}"))),
    };
    let nl = r.u32()? as usize;
    if !(2..=64).contains(&nl) {
        return Err(NnError::Checkpoint(format!("implausible layer count {nl}")));
    }
    let sizes: Vec<usize> = (0..nl).map(|_| r.u32().map(|s| s as usize)).collect::<Result<_>>()?;
    let np = r.u64()? as usize;
    let bytes = r.take(np.checked_mul(8).ok_or_else(|| NnError::Checkpoint("size overflow".into()))?)?;
    let params: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if r.pos != buf.len() {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let net = Mlp::from_params(&sizes, head, params).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if !net.all_finite() {
        return Err(NnError::NonFinite("checkpoint parameters".into()));
    }
    Ok(net)
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Mlp> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::orthogonal(&[5, 7, 3], Head::Softmax, 1.3, 0.01, &mut rng).unwrap();
        let back = from_bytes(&to_bytes(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn header_layout() {
        let net = Mlp::zeros(&[2, 1], Head::Linear).unwrap();
        let b = to_bytes(&net);
        assert_eq!(&b[..4], b"CFNN");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(b[8], 0);
        assert_eq!(b.len(), 4 + 4 + 1 + 4 + 8 + 8 + 8 * 3);
    }

    #[test]
    fn corrupt_blobs_are_rejected() {
        let net = Mlp::zeros(&[2, 3, 1], Head::Linear).unwrap();
        let good = to_bytes(&net);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        assert!(from_bytes(&good[..good.len() - 1]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(from_bytes(&long).is_err());
        let mut nan = good.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(from_bytes(&nan).is_err());
    }
}
