//! Binary tree file layout, all integers and floats little-endian:
//!
//! ```text
//! "PLTO"  u16 version
//! u32 id_len, id bytes (UTF-8)
//! u64 n
//! u8 kind, f64 tau, u64 kappa, u8 stop_rule
//! nodes in pre-order:
//!   u64 start, u64 end, descriptor, f64 L, f64 d*, f64 f*, u8 has_children
//! ```
//!
//! The node count is implied by the structure; bytes after the last node are
//! rejected.

use std::path::Path;

use crate::compression::{FunctionDescriptor, FunctionKind};
use crate::scalar::Scalar;
use crate::series::{ErrorMeasures, IndexRange};

use super::{BuildConfig, NodeId, PlatoTree, StopRule, TreeError, TreeNode};

pub const MAGIC: &[u8; 4] = b"PLTO";
pub const FORMAT_VERSION: u16 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt<T>(&self, reason: impl Into<String>) -> Result<T, TreeError> {
        Err(TreeError::CorruptFile { offset: self.pos, reason: reason.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TreeError> {
        if self.bytes.len() - self.pos < n {
            return self.corrupt("unexpected end of file");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TreeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TreeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TreeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TreeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TreeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl<S: Scalar> PlatoTree<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.series_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.series_id.as_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.push(self.config.kind.tag());
        out.extend_from_slice(&self.config.tau.as_f64().to_le_bytes());
        out.extend_from_slice(&self.config.kappa.to_le_bytes());
        out.push(self.config.stop_rule.tag());
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let node = self.node(id);
            out.extend_from_slice(&node.range.start().to_le_bytes());
            out.extend_from_slice(&node.range.end().to_le_bytes());
            node.f.encode(&mut out);
            for m in [node.measures.l1, node.measures.d_star, node.measures.f_star] {
                out.extend_from_slice(&m.as_f64().to_le_bytes());
            }
            match node.children {
                Some((l, r)) => {
                    out.push(1);
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(0),
            }
        }
        out
    }

    /// Exact size of [`to_bytes`](Self::to_bytes) output.
    pub fn serialized_len(&self) -> usize {
        let header = 4 + 2 + 4 + self.series_id.len() + 8 + 1 + 8 + 8 + 1;
        header + self.nodes.iter().map(|n| 16 + n.f.encoded_len() + 24 + 1).sum::<usize>()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TreeError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(|_| TreeError::VersionMismatch { found: "truncated header".into() })?;
        if magic != MAGIC {
            return Err(TreeError::VersionMismatch { found: format!("magic {:?}", String::from_utf8_lossy(magic)) });
        }
        let version = r.u16().map_err(|_| TreeError::VersionMismatch { found: "truncated header".into() })?;
        if version != FORMAT_VERSION {
            return Err(TreeError::VersionMismatch { found: format!("version {version}") });
        }
        let id_len = r.u32()? as usize;
        let id_at = r.pos;
        let series_id = match std::str::from_utf8(r.take(id_len)?) {
            Ok(s) => s.to_string(),
            Err(_) => return Err(TreeError::CorruptFile { offset: id_at, reason: "series id is not UTF-8".into() }),
        };
        let n = r.u64()?;
        if n == 0 {
            return r.corrupt("series length is zero");
        }
        let kind = match FunctionKind::from_tag(r.u8()?) {
            Ok(k) => k,
            Err(e) => return Err(TreeError::CorruptFile { offset: r.pos - 1, reason: e.to_string() }),
        };
        let tau = r.f64()?;
        let kappa = r.u64()?;
        let Some(stop_rule) = StopRule::from_tag(r.u8()?) else {
            return Err(TreeError::CorruptFile { offset: r.pos - 1, reason: "unknown stop rule".into() });
        };
        let config = BuildConfig { kind, tau: S::lit(tau), kappa, stop_rule };
        if let Err(e) = config.validate() {
            return r.corrupt(e.to_string());
        }

        let mut nodes: Vec<TreeNode<S>> = Vec::new();
        // Ranges still to be filled, in pre-order: (expected range, parent, is_right).
        // A child's exact range is only known once its left sibling is read,
        // so track the parent range and the next free start instead.
        let mut pending: Vec<(usize, bool)> = vec![(usize::MAX, false)];
        while let Some((parent, is_right)) = pending.pop() {
            let at = r.pos;
            let start = r.u64()?;
            let end = r.u64()?;
            let Ok(range) = IndexRange::new(start, end) else {
                return Err(TreeError::CorruptFile { offset: at, reason: format!("invalid range [{start}, {end}]") });
            };
            let expected_ok = if parent == usize::MAX {
                range == IndexRange::full(n)
            } else {
                let pr = nodes[parent].range;
                if is_right {
                    let (l, _) = nodes[parent].children.unwrap();
                    range.start() == nodes[l.0].range.end() + 1 && range.end() == pr.end()
                } else {
                    range.start() == pr.start() && range.end() < pr.end()
                }
            };
            if !expected_ok {
                return Err(TreeError::CorruptFile { offset: at, reason: format!("range {range} breaks the partition") });
            }
            let f_at = r.pos;
            let (f, used) = match FunctionDescriptor::<S>::decode(&bytes[r.pos..]) {
                Ok(x) => x,
                Err(e) => return Err(TreeError::CorruptFile { offset: f_at, reason: e.to_string() }),
            };
            r.pos += used;
            let m_at = r.pos;
            let (l1, d, fs) = (r.f64()?, r.f64()?, r.f64()?);
            if !(l1 >= 0.0 && d >= 0.0 && fs >= 0.0) {
                return Err(TreeError::CorruptFile { offset: m_at, reason: "negative or NaN error measure".into() });
            }
            let id = nodes.len();
            nodes.push(TreeNode::leaf(range, f, ErrorMeasures::new(S::lit(l1), S::lit(d), S::lit(fs))));
            if parent != usize::MAX {
                let slot = nodes[parent].children.get_or_insert((NodeId(usize::MAX), NodeId(usize::MAX)));
                if is_right {
                    slot.1 = NodeId(id);
                } else {
                    slot.0 = NodeId(id);
                }
            }
            match r.u8()? {
                0 => {}
                1 if range.len() >= 2 => {
                    pending.push((id, true));
                    pending.push((id, false));
                }
                1 => return Err(TreeError::CorruptFile { offset: r.pos - 1, reason: "single-point node has children".into() }),
                b => return Err(TreeError::CorruptFile { offset: r.pos - 1, reason: format!("bad child flag {b}") }),
            }
        }
        if r.pos != bytes.len() {
            return r.corrupt("trailing bytes after last node");
        }
        PlatoTree::from_nodes(series_id, n, config, nodes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TreeError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TreeError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TimeSeries;

    fn sample() -> PlatoTree<f64> {
        let values: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.1).sin() * 3.0 + (i / 50) as f64).collect();
        let t = TimeSeries::from_values("sample", values).unwrap();
        PlatoTree::build(&t, BuildConfig::new(FunctionKind::Linear, 0.5, 4, StopRule::TauOrKappa).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_identical() {
        let tree = sample();
        let bytes = tree.to_bytes();
        assert_eq!(bytes.len(), tree.serialized_len());
        let back = PlatoTree::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, tree);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        assert!(matches!(PlatoTree::<f64>::from_bytes(&bytes), Err(TreeError::VersionMismatch { .. })));
        bytes[0] = b'X';
        assert!(matches!(PlatoTree::<f64>::from_bytes(&bytes), Err(TreeError::VersionMismatch { .. })));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = sample().to_bytes();
        for cut in 0..bytes.len() {
            assert!(PlatoTree::<f64>::from_bytes(&bytes[..cut]).is_err(), "accepted prefix of {cut} bytes");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(PlatoTree::<f64>::from_bytes(&extra), Err(TreeError::CorruptFile { .. })));
    }

    #[test]
    fn corrupt_range_reports_offset() {
        let tree = sample();
        let mut bytes = tree.to_bytes();
        let header = 4 + 2 + 4 + tree.series_id().len() + 8 + 1 + 8 + 8 + 1;
        // Root end becomes n + 1.
        bytes[header + 8..header + 16].copy_from_slice(&(tree.len() + 1).to_le_bytes());
        match PlatoTree::<f64>::from_bytes(&bytes) {
            Err(TreeError::CorruptFile { offset, .. }) => assert_eq!(offset, header),
            other => panic!("unexpected {other:?}"),
        }
    }
}
