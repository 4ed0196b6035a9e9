//! Fixed-length bit strings holding concatenated PUF responses.

use std::fmt;

use crate::error::{invalid, Result};

/// A bit string packed most-significant-bit first, zero-padded at the tail.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    bytes: Vec<u8>,
    len: usize,
}

impl Signature {
    /// All-zero signature of `len` bits.
    pub fn zeros(len: usize) -> Self {
        Self {
            bytes: vec![0; len.div_ceil(8)],
            len,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.flip(i);
            }
        }
        s
    }

    /// Wraps packed bytes holding `len` bits; padding bits must be zero.
    pub fn from_packed(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return invalid(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            ));
        }
        let tail = len % 8;
        if tail != 0 && bytes[bytes.len() - 1] & (0xff >> tail) != 0 {
            return invalid("padding bits past the signature length are set");
        }
        Ok(Self { bytes, len })
    }

    /// Parses a hexadecimal string; the signature length is four bits per digit.
    pub fn from_hex(text: &str) -> Result<Self> {
        let text = text.trim();
        let text = text.strip_prefix("0x").unwrap_or(text);
        if text.is_empty() {
            return invalid("empty hex signature");
        }
        let padded;
        let even = if text.len() % 2 == 1 {
            padded = format!("{text}0");
            padded.as_str()
        } else {
            text
        };
        match hex::decode(even) {
            Ok(bytes) => Self::from_packed(bytes, text.len() * 4),
            Err(e) => invalid(format!("malformed hex signature: {e}")),
        }
    }

    pub fn to_hex(&self) -> String {
        let mut s = hex::encode(&self.bytes);
        if !self.len.is_multiple_of(8) && self.len % 8 <= 4 {
            s.pop();
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn packed(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for {} bits", self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for {} bits", self.len);
        self.bytes[i / 8] ^= 0x80 >> (i % 8);
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len, "signature lengths differ");
        self.bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// The `len` bits starting at `start`, as a new signature.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len, "slice past end of signature");
        if start.is_multiple_of(8) {
            let mut bytes = self.bytes[start / 8..(start + len).div_ceil(8)].to_vec();
            if !len.is_multiple_of(8) {
                let last = bytes.len() - 1;
                bytes[last] &= 0xff << (8 - len % 8);
            }
            return Self { bytes, len };
        }
        let mut out = Self::zeros(len);
        for i in 0..len {
            if self.bit(start + i) {
                out.flip(i);
            }
        }
        out
    }

    /// Hashing encoding: the bit length as a 4-byte big-endian prefix
    /// followed by the packed bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.bytes.len());
        out.extend_from_slice(&(self.len as u32).to_be_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({} bits, {})", self.len, self.to_hex())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_layout() {
        let s = Signature::from_hex("a5").unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.bit(0) && !s.bit(1) && s.bit(2));
        let odd = Signature::from_hex("abc").unwrap();
        assert_eq!(odd.len(), 12);
        assert_eq!(odd.to_hex(), "abc");
        assert!(Signature::from_hex("zz").is_err());
        assert!(Signature::from_hex("").is_err());
    }

    #[test]
    fn encode_prefixes_length() {
        let s = Signature::from_bits(&[true, false, true]);
        assert_eq!(s.encode(), vec![0, 0, 0, 3, 0b1010_0000]);
    }

    #[test]
    fn unaligned_slice() {
        let s = Signature::from_hex("f00f").unwrap();
        assert_eq!(s.slice(4, 8).to_hex(), "00");
        assert_eq!(
            s.slice(2, 4),
            Signature::from_bits(&[true, true, false, false])
        );
        assert_eq!(s.slice(8, 4).to_hex(), "0");
    }

    proptest! {
        #[test]
        fn hex_round_trip(bytes in proptest::collection::vec(any::<u8>(), 1..40)) {
            let s = Signature::from_packed(bytes.clone(), bytes.len() * 8).unwrap();
            prop_assert_eq!(Signature::from_hex(&s.to_hex()).unwrap(), s);
        }

        #[test]
        fn slices_reassemble(bits in proptest::collection::vec(any::<bool>(), 1..100), cut in 0usize..100) {
            let s = Signature::from_bits(&bits);
            let cut = cut % bits.len();
            let left = s.slice(0, cut);
            let right = s.slice(cut, bits.len() - cut);
            let joined: Vec<bool> = (0..left.len()).map(|i| left.bit(i))
                .chain((0..right.len()).map(|i| right.bit(i)))
                .collect();
            prop_assert_eq!(joined, bits);
        }
    }
}
