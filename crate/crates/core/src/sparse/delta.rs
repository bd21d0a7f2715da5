//! Sparse parameter deltas and their wire encoding.
//!
//! ```text
//! "FTSD" | mask_id: u64 | tensor_count: u32
//! per tensor: name_len: u32 | name: [u8] | value_count: u32 | values: [f32]
//! ```
//! All integers and floats are little-endian.

use crate::error::{Error, Result};
use crate::sparse::mask::SparseMask;
use crate::tensor::ParamSet;

pub const DELTA_MAGIC: &[u8; 4] = b"FTSD";

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTensor {
    pub name: String,
    pub values: Vec<f32>,
}

/// `local - base` restricted to the selected tensors of one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDelta {
    pub mask_id: u64,
    pub tensors: Vec<DeltaTensor>,
}

impl SparseDelta {
    /// All-zero delta for `mask`.
    pub fn zeros(mask: &SparseMask) -> Self {
        SparseDelta {
            mask_id: mask.id(),
            tensors: mask
                .selected()
                .map(|(l, u)| DeltaTensor {
                    name: SparseMask::tensor_name(l, u),
                    values: vec![0.0; mask.value_count(l, u)],
                })
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    pub fn encoded_len(&self) -> usize {
        16 + self
            .tensors
            .iter()
            .map(|t| 8 + t.name.len() + 4 * t.values.len())
            .sum::<usize>()
    }

    /// Size of the encoding of any delta over `mask`.
    pub fn encoded_len_for(mask: &SparseMask) -> usize {
        16 + mask
            .selected()
            .map(|(l, u)| 8 + SparseMask::tensor_name(l, u).len() + 4 * mask.value_count(l, u))
            .sum::<usize>()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(DELTA_MAGIC);
        out.extend_from_slice(&self.mask_id.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.values.len() as u32).to_le_bytes());
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != DELTA_MAGIC {
            return Err(Error::Decode("bad magic, expected FTSD".into()));
        }
        let mask_id = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Decode(format!("tensor name: {e}")))?
                .to_owned();
            let n = r.u32()? as usize;
            let raw = r.take(
                n.checked_mul(4)
                    .ok_or_else(|| Error::Decode("overflow".into()))?,
            )?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(DeltaTensor { name, values });
        }
        if r.pos != bytes.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(SparseDelta { mask_id, tensors })
    }

    /// Errors unless tensor names and sizes agree with `mask`.
    pub fn check_mask(&self, mask: &SparseMask) -> Result<()> {
        if self.mask_id != mask.id() {
            return Err(Error::ForeignMask {
                expected: mask.id(),
                found: self.mask_id,
            });
        }
        if self.tensors.len() != mask.num_selected() {
            return Err(Error::MaskMismatch(format!(
                "{} tensors for {} selected",
                self.tensors.len(),
                mask.num_selected()
            )));
        }
        for (t, (l, u)) in self.tensors.iter().zip(mask.selected()) {
            if t.name != SparseMask::tensor_name(l, u) || t.values.len() != mask.value_count(l, u) {
                return Err(Error::MaskMismatch(format!(
                    "tensor {} with {} values does not match mask",
                    t.name,
                    t.values.len()
                )));
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Decode(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Selected tensors of `local - base`.
pub fn extract_delta(local: &ParamSet, base: &ParamSet, mask: &SparseMask) -> Result<SparseDelta> {
    local.check_compatible(base)?;
    mask.check_params(base)?;
    let tensors = mask
        .selected()
        .map(|(l, u)| DeltaTensor {
            name: SparseMask::tensor_name(l, u),
            values: local
                .tensor(l, u)
                .data()
                .iter()
                .zip(base.tensor(l, u).data())
                .map(|(a, b)| a - b)
                .collect(),
        })
        .collect();
    Ok(SparseDelta {
        mask_id: mask.id(),
        tensors,
    })
}

/// `target + weight * delta` on the masked tensors.
pub fn apply_delta(
    target: &ParamSet,
    delta: &SparseDelta,
    weight: f32,
    mask: &SparseMask,
) -> Result<ParamSet> {
    mask.check_params(target)?;
    delta.check_mask(mask)?;
    let mut out = target.clone();
    for (t, (l, u)) in delta.tensors.iter().zip(mask.selected()) {
        for (p, &d) in out.tensor_mut(l, u).data_mut().iter_mut().zip(&t.values) {
            *p += weight * d;
        }
    }
    Ok(out)
}
