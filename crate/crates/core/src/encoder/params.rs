//! Flat, shape-annotated parameter vectors.
//!
//! Every aggregation rule in the simulator (interpolation, FedAvg, softmax
//! mixing, poisoning) is arithmetic on [`ParamVector`]s. Two vectors may be
//! combined only when their layouts are identical.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DPV1";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    segments: Vec<Segment>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut total = 0;
        for s in &segments {
            offsets.push(total);
            total += s.size();
        }
        Self {
            segments,
            offsets,
            total,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Index range of the named segment.
    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.segments
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.offsets[i]..self.offsets[i] + self.segments[i].size())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::LayoutMismatch(format!(
                "{} values for a layout of {}",
                values.len(),
                layout.total()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.total()];
        Self { layout, values }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> &[f64] {
        let r = self.layout.range(name).unwrap_or_else(|| panic!("no segment {name}"));
        &self.values[r]
    }

    pub fn segment_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.layout.range(name).unwrap_or_else(|| panic!("no segment {name}"));
        &mut self.values[r]
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{} segments / {} values vs {} segments / {} values",
                self.layout.segments.len(),
                self.layout.total,
                other.layout.segments.len(),
                other.layout.total
            )))
        }
    }

    /// `Σ w_i · p_i` over vectors sharing one layout.
    pub fn weighted_sum(parts: &[(&ParamVector, f64)]) -> Result<ParamVector> {
        let (first, _) = parts
            .first()
            .ok_or_else(|| Error::Degenerate("weighted sum of zero vectors".into()))?;
        let mut out = vec![0.0; first.len()];
        for (p, w) in parts {
            first.check_layout(p)?;
            for (o, v) in out.iter_mut().zip(&p.values) {
                *o += w * v;
            }
        }
        ParamVector::new(first.layout.clone(), out)
    }

    /// `λ·self + (1−λ)·other`.
    pub fn lerp(&self, other: &ParamVector, lambda: f64) -> Result<ParamVector> {
        self.check_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        ParamVector::new(self.layout.clone(), values)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    /// Header (magic, segment count, then per segment: name length, name
    /// bytes, rank, dims) followed by the values; all integers are u64 and
    /// all reals f64, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.layout.segments.len() as u64).to_le_bytes());
        for s in &self.layout.segments {
            out.extend_from_slice(&(s.name.len() as u64).to_le_bytes());
            out.extend_from_slice(s.name.as_bytes());
            out.extend_from_slice(&(s.shape.len() as u64).to_le_bytes());
            for d in &s.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn serialized_len(&self) -> usize {
        let header: usize = self
            .layout
            .segments
            .iter()
            .map(|s| 8 + s.name.len() + 8 + 8 * s.shape.len())
            .sum();
        MAGIC.len() + 8 + header + 8 * self.values.len()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ParamVector> {
        let mut r = bytes;
        let bad = |m: &str| Error::Data(format!("malformed parameter file: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let read_u64 = |r: &mut &[u8]| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
            Ok(u64::from_le_bytes(b))
        };
        let nseg = read_u64(&mut r)? as usize;
        let mut segments = Vec::with_capacity(nseg.min(1024));
        for _ in 0..nseg {
            let len = read_u64(&mut r)? as usize;
            if r.len() < len {
                return Err(bad("truncated segment name"));
            }
            let name = std::str::from_utf8(&r[..len]).map_err(|_| bad("segment name not utf-8"))?;
            r = &r[len..];
            let rank = read_u64(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            segments.push(Segment::new(name, &shape));
        }
        let layout = Layout::new(segments);
        if r.len() != 8 * layout.total() {
            return Err(bad("value count does not match layout"));
        }
        let values = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        ParamVector::new(Arc::new(layout), values)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> Arc<Layout> {
        Arc::new(Layout::new(vec![Segment::new("w", &[2, 3]), Segment::new("b", &[3])]))
    }

    #[test]
    fn offsets_and_ranges() {
        let l = layout();
        assert_eq!(l.total(), 9);
        assert_eq!(l.range("b"), Some(6..9));
        assert_eq!(l.range("nope"), None);
    }

    #[test]
    fn rejects_bad_lengths_and_nan() {
        assert!(ParamVector::new(layout(), vec![0.0; 8]).is_err());
        let mut v = vec![0.0; 9];
        v[3] = f64::NAN;
        assert!(matches!(ParamVector::new(layout(), v), Err(Error::NonFinite(_))));
    }

    #[test]
    fn mismatched_layouts_refuse_arithmetic() {
        let a = ParamVector::zeros(layout());
        let other = Arc::new(Layout::new(vec![Segment::new("w", &[9])]));
        let b = ParamVector::zeros(other);
        assert!(a.lerp(&b, 0.5).is_err());
        assert!(ParamVector::weighted_sum(&[(&a, 0.5), (&b, 0.5)]).is_err());
    }

    #[test]
    fn serialized_len_matches() {
        let p = ParamVector::new(layout(), (0..9).map(|i| i as f64).collect()).unwrap();
        assert_eq!(p.to_bytes().len(), p.serialized_len());
        assert!(ParamVector::from_bytes(&p.to_bytes()[..20]).is_err());
    }

    proptest! {
        #[test]
        fn bytes_roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 9)) {
            let p = ParamVector::new(layout(), vals).unwrap();
            let q = ParamVector::from_bytes(&p.to_bytes()).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn lerp_preserves_layout(a in proptest::collection::vec(-10f64..10.0, 9),
                                 b in proptest::collection::vec(-10f64..10.0, 9),
                                 lambda in 0f64..=1.0) {
            let pa = ParamVector::new(layout(), a.clone()).unwrap();
            let pb = ParamVector::new(layout(), b.clone()).unwrap();
            let m = pa.lerp(&pb, lambda).unwrap();
            prop_assert!(m.same_layout(&pa));
            for i in 0..9 {
                prop_assert!((m.values()[i] - (lambda * a[i] + (1.0 - lambda) * b[i])).abs() < 1e-12);
            }
        }
    }
}
