//! Binary weight masks and their on-disk format.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic    b"LTMASK"
//! version  u16 = 1
//! layers   u32
//! per layer:
//!   name_len u16, name (UTF-8)
//!   ndim     u8,  dims u32 × ndim
//!   payload  ceil(n / 8) bytes, bit i of the layer at byte i/8, bit i%8
//!            (1 = kept); unused high bits of the last byte are zero
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, ParamSet};
use crate::tensor::Real;

const MAGIC: &[u8; 6] = b"LTMASK";
const VERSION: u16 = 1;

/// Keep-bits for one prunable weight tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    name: String,
    shape: Vec<usize>,
    bits: Vec<bool>,
}

impl LayerMask {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, bits: Vec<bool>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != bits.len() {
            return Err(Error::shape(format!(
                "mask shape {:?} needs {} bits, got {}",
                shape,
                n,
                bits.len()
            )));
        }
        Ok(LayerMask {
            name: name.into(),
            shape,
            bits,
        })
    }

    pub fn full(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        LayerMask {
            name: name.into(),
            shape,
            bits: vec![true; n],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// One [`LayerMask`] per prunable layer, in network order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    layers: Vec<LayerMask>,
}

impl Mask {
    pub fn new(layers: Vec<LayerMask>) -> Self {
        Mask { layers }
    }

    /// All weights kept.
    pub fn full(spec: &NetworkSpec) -> Self {
        Mask {
            layers: spec
                .prunable_layers()
                .into_iter()
                .map(|l| LayerMask::full(l.name, l.weight_shape))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerMask] {
        &mut self.layers
    }

    pub fn ones(&self) -> usize {
        self.layers.iter().map(LayerMask::ones).sum()
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(LayerMask::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when every weight kept here is also kept in `outer`.
    pub fn is_nested_in(&self, outer: &Mask) -> bool {
        self.layers.len() == outer.layers.len()
            && self.layers.iter().zip(&outer.layers).all(|(a, b)| {
                a.shape == b.shape && a.bits.iter().zip(&b.bits).all(|(&x, &y)| !x || y)
            })
    }

    pub fn check_params<F: Real>(&self, params: &ParamSet<F>) -> Result<()> {
        if self.layers.len() != params.layers().len()
            || self
                .layers
                .iter()
                .zip(params.layers())
                .any(|(m, p)| m.shape != p.weights.shape())
        {
            return Err(Error::shape("mask does not match parameter shapes"));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            let name = layer.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::invalid("layer name longer than 65535 bytes"))?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name)?;
            let ndim = u8::try_from(layer.shape.len())
                .map_err(|_| Error::invalid("mask rank above 255"))?;
            w.write_all(&[ndim])?;
            for &d in &layer.shape {
                let d = u32::try_from(d).map_err(|_| Error::invalid("mask dimension above u32"))?;
                w.write_all(&d.to_le_bytes())?;
            }
            let mut packed = vec![0u8; layer.bits.len().div_ceil(8)];
            for (i, _) in layer.bits.iter().enumerate().filter(|(_, &b)| b) {
                packed[i / 8] |= 1 << (i % 8);
            }
            w.write_all(&packed)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(MAGIC.len())? != MAGIC {
            return Err(Error::format(0, "bad mask magic"));
        }
        let version = cur.u16()?;
        if version != VERSION {
            return Err(Error::format(6, format!("unsupported mask version {version}")));
        }
        let count = cur.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let at = cur.pos as u64;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::format(at, "layer name is not UTF-8"))?
                .to_string();
            let ndim = cur.take(1)?[0] as usize;
            let shape = (0..ndim)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let at = cur.pos as u64;
            let packed = cur.take(n.div_ceil(8))?;
            let bits: Vec<bool> = (0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
            if !n.is_multiple_of(8) && packed[n / 8] >> (n % 8) != 0 {
                return Err(Error::format(at, "nonzero padding bits in mask payload"));
            }
            layers.push(LayerMask { name, shape, bits });
        }
        if cur.pos != bytes.len() {
            return Err(Error::format(cur.pos as u64, "trailing bytes after mask"));
        }
        Ok(Mask { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::cli::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated mask: wanted {n} more bytes"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_strategy() -> impl Strategy<Value = Mask> {
        prop::collection::vec(
            (1usize..5, 1usize..13).prop_flat_map(|(a, b)| {
                prop::collection::vec(any::<bool>(), a * b).prop_map(move |bits| (a, b, bits))
            }),
            0..4,
        )
        .prop_map(|layers| {
            Mask::new(
                layers
                    .into_iter()
                    .enumerate()
                    .map(|(i, (a, b, bits))| LayerMask::new(format!("l{i}"), vec![a, b], bits).unwrap())
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn serialization_round_trips(mask in mask_strategy()) {
            let bytes = mask.to_bytes();
            prop_assert_eq!(Mask::from_bytes(&bytes).unwrap(), mask);
        }
    }

    #[test]
    fn known_layout() {
        let mask = Mask::new(vec![LayerMask::new("a", vec![3], vec![true, false, true]).unwrap()]);
        let bytes = mask.to_bytes();
        let mut expected = b"LTMASK".to_vec();
        expected.extend([1, 0]);
        expected.extend([1, 0, 0, 0]);
        expected.extend([1, 0, b'a']);
        expected.extend([1, 3, 0, 0, 0]);
        expected.push(0b101);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corrupt_input_is_a_format_error() {
        let mask = Mask::new(vec![LayerMask::new("w", vec![2, 5], vec![true; 10]).unwrap()]);
        let bytes = mask.to_bytes();
        for cut in [0, 3, 8, bytes.len() - 1] {
            assert!(matches!(Mask::from_bytes(&bytes[..cut]), Err(Error::Format { .. })));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Mask::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let mut padded = bytes.clone();
        *padded.last_mut().unwrap() |= 0x80;
        assert!(matches!(Mask::from_bytes(&padded), Err(Error::Format { .. })));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(Mask::from_bytes(&trailing).is_err());
    }

    #[test]
    fn nesting() {
        let outer = Mask::new(vec![LayerMask::new("a", vec![3], vec![true, true, false]).unwrap()]);
        let inner = Mask::new(vec![LayerMask::new("a", vec![3], vec![true, false, false]).unwrap()]);
        assert!(inner.is_nested_in(&outer));
        assert!(!outer.is_nested_in(&inner));
    }
}
