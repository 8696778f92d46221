//! Binary table format, little-endian:
//! `"TDFA"`, version u32, state count u32, token count u32, the row-major
//! u32 transition table, the u32 accept table, then each token name as a
//! u16 length followed by its bytes.

use thiserror::Error;

use super::DfaTable;

const MAGIC: &[u8; 4] = b"TDFA";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DumpError {
    #[error("not a DFA table")]
    BadMagic,
    #[error("unsupported table version {0}")]
    UnsupportedVersion(u32),
    #[error("table data is truncated")]
    Truncated,
    #[error("corrupt table: {0}")]
    Corrupt(&'static str),
}

pub(super) fn to_bytes(t: &DfaTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * (t.trans.len() + t.accept.len()));
    out.extend_from_slice(MAGIC);
    for v in [VERSION, t.n_states() as u32, t.n_tokens() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in t.trans.iter().chain(&t.accept) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for name in &t.token_names {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DumpError> {
        if self.0.len() < n {
            return Err(DumpError::Truncated);
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, DumpError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, DumpError> {
        let bytes = self.take(n.checked_mul(4).ok_or(DumpError::Truncated)?)?;
        Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub(super) fn from_bytes(b: &[u8]) -> Result<DfaTable, DumpError> {
    let mut r = Reader(b);
    if r.take(4).map_err(|_| DumpError::BadMagic)? != MAGIC {
        return Err(DumpError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DumpError::UnsupportedVersion(version));
    }
    let n_states = r.u32()? as usize;
    let n_tokens = r.u32()? as usize;
    // bound allocations by the bytes actually present
    if n_states.saturating_mul(257 * 4) > b.len() || n_tokens.saturating_mul(2) > b.len() {
        return Err(DumpError::Truncated);
    }
    let trans = r.u32s(n_states * 256)?;
    let accept = r.u32s(n_states)?;
    let mut names = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| DumpError::Corrupt("token name is not UTF-8"))?;
        names.push(name.to_string());
    }
    if !r.0.is_empty() {
        return Err(DumpError::Corrupt("trailing bytes"));
    }
    DfaTable::from_parts(trans, accept, names).map_err(DumpError::Corrupt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfa::{bundled, SQLI_PROFILE};

    #[test]
    fn round_trip() {
        let t = bundled(SQLI_PROFILE);
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"TDFA");
        assert_eq!(DfaTable::from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn rejects_damage() {
        let b = bundled(SQLI_PROFILE).to_bytes();
        assert_eq!(DfaTable::from_bytes(b"TDF"), Err(DumpError::BadMagic));
        assert_eq!(DfaTable::from_bytes(b"XDFA1234"), Err(DumpError::BadMagic));
        let mut v = b.clone();
        v[4] = 9;
        assert_eq!(DfaTable::from_bytes(&v), Err(DumpError::UnsupportedVersion(9)));
        assert_eq!(DfaTable::from_bytes(&b[..b.len() - 1]), Err(DumpError::Truncated));
        let mut v = b.clone();
        v[16..20].copy_from_slice(&1u32.to_le_bytes());
        assert_eq!(DfaTable::from_bytes(&v), Err(DumpError::Corrupt("dead state must self-loop")));
        let mut v = b.clone();
        let far = 16 + 4 * 300;
        v[far..far + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert_eq!(DfaTable::from_bytes(&v), Err(DumpError::Corrupt("transition out of range")));
        for cut in 0..b.len().min(2000) {
            let _ = DfaTable::from_bytes(&b[..cut]);
        }
    }
}
