//! Model file, little-endian:
//!
//! ```text
//! "TRFM" | format u32 | schema str | n_features u32 | n_classes u32 | class str*
//! | kept_len u32 | kept u32* | seed u64 | n_trees u32 | max_depth u32
//! | min_leaf u32 | mtry u32 | bootstrap u8 | oob f64 | tree_count u32
//! | per tree: node_count u32, then per node:
//!     feature u32 | threshold f64 | left u32 | right u32 | counts u32 * n_classes
//! ```
//!
//! Strings are a u16 byte length followed by UTF-8 bytes.

use std::io::{Read, Write};
use std::path::Path;

use super::{DecisionTree, ForestError, ForestModel, Node, TrainMeta, LEAF};

const MAGIC: &[u8; 4] = b"TRFM";
const FORMAT: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl ForestModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut o = Vec::new();
        o.extend_from_slice(MAGIC);
        o.extend_from_slice(&FORMAT.to_le_bytes());
        put_str(&mut o, &self.schema);
        o.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        o.extend_from_slice(&(self.classes.len() as u32).to_le_bytes());
        for c in &self.classes {
            put_str(&mut o, c);
        }
        o.extend_from_slice(&(self.kept.len() as u32).to_le_bytes());
        for k in &self.kept {
            o.extend_from_slice(&k.to_le_bytes());
        }
        let m = &self.meta;
        o.extend_from_slice(&m.seed.to_le_bytes());
        for v in [m.n_trees, m.max_depth, m.min_leaf, m.mtry] {
            o.extend_from_slice(&v.to_le_bytes());
        }
        o.push(m.bootstrap as u8);
        o.extend_from_slice(&m.oob_accuracy.to_bits().to_le_bytes());
        o.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for t in &self.trees {
            o.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
            for n in &t.nodes {
                o.extend_from_slice(&n.feature.to_le_bytes());
                o.extend_from_slice(&n.threshold.to_bits().to_le_bytes());
                o.extend_from_slice(&n.left.to_le_bytes());
                o.extend_from_slice(&n.right.to_le_bytes());
                for c in &n.counts {
                    o.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        o
    }

    pub fn from_bytes(b: &[u8]) -> Result<ForestModel, ForestError> {
        let mut r = Reader(b);
        if b.len() < 4 || &b[..4] != MAGIC {
            return Err(ForestError::BadMagic);
        }
        r.take(4)?;
        let format = r.u32()?;
        if format != FORMAT {
            return Err(ForestError::VersionMismatch {
                found: format!("model format {format}"),
                expected: format!("model format {FORMAT}"),
            });
        }
        let schema = r.string()?;
        let n_features = r.u32()? as usize;
        let n_classes = r.count(2)?;
        let classes = (0..n_classes).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
        let n_kept = r.count(4)?;
        let kept = (0..n_kept).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let meta = TrainMeta {
            seed: r.u64()?,
            n_trees: r.u32()?,
            max_depth: r.u32()?,
            min_leaf: r.u32()?,
            mtry: r.u32()?,
            bootstrap: r.take(1)?[0] != 0,
            oob_accuracy: f64::from_bits(r.u64()?),
        };
        let n_trees = r.count(4)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = r.count(20 + 4 * n_classes)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(Node {
                    feature: r.u32()?,
                    threshold: f64::from_bits(r.u64()?),
                    left: r.u32()?,
                    right: r.u32()?,
                    counts: (0..n_classes).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?,
                });
            }
            trees.push(DecisionTree { nodes });
        }
        if !r.0.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        let m = ForestModel {
            schema,
            n_features,
            classes,
            kept,
            trees,
            meta,
        };
        m.validate()?;
        Ok(m)
    }

    /// Structural invariants: at least one tree, children after their
    /// parent, features within the kept set, non-empty leaves.
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.classes.len() < 2 {
            return Err(corrupt("fewer than two classes"));
        }
        if self.kept.is_empty() || self.kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(corrupt("feature mask is empty or unsorted"));
        }
        if self.kept.last().is_some_and(|&k| k as usize >= self.n_features) {
            return Err(corrupt("feature mask out of range"));
        }
        if self.trees.is_empty() {
            return Err(corrupt("no trees"));
        }
        for (ti, t) in self.trees.iter().enumerate() {
            if t.nodes.is_empty() {
                return Err(corrupt(format!("tree {ti} is empty")));
            }
            let mut referenced = vec![false; t.nodes.len()];
            for (i, n) in t.nodes.iter().enumerate() {
                if n.counts.len() != self.classes.len() || n.counts.iter().all(|&c| c == 0) {
                    return Err(corrupt(format!("tree {ti} node {i} has no samples")));
                }
                if n.is_leaf() {
                    if n.right != LEAF {
                        return Err(corrupt(format!("tree {ti} node {i} has one child")));
                    }
                    continue;
                }
                for c in [n.left, n.right] {
                    let c = c as usize;
                    if c <= i || c >= t.nodes.len() || std::mem::replace(&mut referenced[c], true) {
                        return Err(corrupt(format!("tree {ti} node {i} has an invalid child")));
                    }
                }
                if self.kept.binary_search(&n.feature).is_err() {
                    return Err(corrupt(format!("tree {ti} node {i} uses a dropped feature")));
                }
                if !n.threshold.is_finite() {
                    return Err(corrupt(format!("tree {ti} node {i} has a non-finite threshold")));
                }
            }
            if referenced.iter().skip(1).any(|r| !r) {
                return Err(corrupt(format!("tree {ti} has unreachable nodes")));
            }
        }
        Ok(())
    }

    pub fn check_schema(&self, expected: &str, n_features: usize) -> Result<(), ForestError> {
        if self.schema != expected || self.n_features != n_features {
            return Err(ForestError::VersionMismatch {
                found: format!("{} ({} features)", self.schema, self.n_features),
                expected: format!("{expected} ({n_features} features)"),
            });
        }
        Ok(())
    }
}

fn corrupt(msg: impl Into<String>) -> ForestError {
    ForestError::CorruptTree(msg.into())
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ForestError> {
        if self.0.len() < n {
            return Err(corrupt("file is truncated"));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, ForestError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ForestError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A count whose items need at least `min_item` bytes each.
    fn count(&mut self, min_item: usize) -> Result<usize, ForestError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.0.len() {
            return Err(corrupt("file is truncated"));
        }
        Ok(n)
    }

    fn string(&mut self) -> Result<String, ForestError> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<(), ForestError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&model.to_bytes())?;
    f.sync_all()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ForestModel, ForestError> {
    let mut b = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut b)?;
    ForestModel::from_bytes(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::tests::{blobs, stub};
    use crate::forest::{train, TrainParams};

    #[test]
    fn round_trip_preserves_value() {
        let d = blobs(200, 4, false);
        let m = train(&d, &TrainParams { n_trees: 10, ..Default::default() }).unwrap();
        let b = m.to_bytes();
        assert_eq!(ForestModel::from_bytes(&b).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.trfm");
        save_model(&m, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let b = stub().to_bytes();
        assert!(matches!(ForestModel::from_bytes(b"TRF"), Err(ForestError::BadMagic)));
        assert!(matches!(ForestModel::from_bytes(b"NOPE...."), Err(ForestError::BadMagic)));
        for cut in 4..b.len() {
            assert!(matches!(ForestModel::from_bytes(&b[..cut]), Err(ForestError::CorruptTree(_))), "{cut}");
        }
        let mut v = b.clone();
        v[4] = 2;
        assert!(matches!(ForestModel::from_bytes(&v), Err(ForestError::VersionMismatch { .. })));
    }

    #[test]
    fn invariant_violations_are_corrupt() {
        let mut m = stub();
        m.trees[0].nodes[0].left = 0;
        assert!(matches!(ForestModel::from_bytes(&m.to_bytes()), Err(ForestError::CorruptTree(_))));
        let mut m = stub();
        m.kept = vec![0];
        assert!(matches!(ForestModel::from_bytes(&m.to_bytes()), Err(ForestError::CorruptTree(_))));
        let mut m = stub();
        m.trees[0].nodes[2].counts = vec![0, 0];
        assert!(matches!(ForestModel::from_bytes(&m.to_bytes()), Err(ForestError::CorruptTree(_))));
    }

    #[test]
    fn schema_check() {
        let m = stub();
        assert!(m.check_schema("test", 2).is_ok());
        assert!(matches!(m.check_schema("flowlens-fx-1", 2), Err(ForestError::VersionMismatch { .. })));
    }
}
