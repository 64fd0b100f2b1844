use crate::error::{check_dim, Error, Result};

/// A packed sequence of `len` bits; bit `k` lives in byte `k / 8` at position `k % 8`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    len: usize,
    words: Vec<u64>,
}

impl BinaryCode {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % 64 == 0 {
                words.push(0);
            }
            if b {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { len, words }
    }

    /// Unpacks `ceil(len / 8)` little-endian bytes. Padding bits must be zero.
    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        check_dim(len.div_ceil(8), bytes.len())?;
        if len % 8 != 0 {
            let last = bytes[bytes.len() - 1];
            if last >> (len % 8) != 0 {
                return Err(Error::Format {
                    what: "binary code",
                    offset: bytes.len() - 1,
                    reason: "nonzero padding bits".into(),
                });
            }
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        Ok(Self { len, words })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        (0..n).map(|i| (self.words[i / 8] >> (8 * (i % 8))) as u8).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        assert!(k < self.len, "bit {k} out of range {}", self.len);
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set(&mut self, k: usize, value: bool) {
        assert!(k < self.len, "bit {k} out of range {}", self.len);
        if value {
            self.words[k / 64] |= 1 << (k % 64);
        } else {
            self.words[k / 64] &= !(1 << (k % 64));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|k| self.get(k))
    }

    /// Popcount of the XOR.
    pub fn hamming(&self, other: &Self) -> Result<u32> {
        check_dim(self.len, other.len)?;
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones()).sum())
    }

    /// Number of payload bytes when packed.
    pub fn byte_len(&self) -> usize {
        self.len.div_ceil(8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bit_order_is_little_endian() {
        let c = BinaryCode::from_bits([true, false, false, false, false, false, false, false, false, true]);
        assert_eq!(c.to_bytes(), vec![0b0000_0001, 0b0000_0010]);
    }

    #[test]
    fn complementary_codes_are_maximally_apart() {
        let a = BinaryCode::from_bits((0..130).map(|i| i % 3 == 0));
        let b = BinaryCode::from_bits((0..130).map(|i| i % 3 != 0));
        assert_eq!(a.hamming(&b).unwrap(), 130);
        assert_eq!(a.hamming(&a).unwrap(), 0);
        assert!(a.hamming(&BinaryCode::zeros(129)).is_err());
    }

    #[test]
    fn padding_must_be_clear() {
        assert!(BinaryCode::from_bytes(3, &[0b1000]).is_err());
        assert!(BinaryCode::from_bytes(3, &[0b101]).is_ok());
        assert!(BinaryCode::from_bytes(9, &[0]).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let c = BinaryCode::from_bits(bits.iter().copied());
            let back = BinaryCode::from_bytes(bits.len(), &c.to_bytes()).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.iter().collect::<Vec<_>>(), bits);
        }
    }
}
