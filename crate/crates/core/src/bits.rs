//! Fixed-length bitstrings.
//!
//! Bit `0` is the left-most bit: `"0110".parse()` has bit 1 and bit 2 set.
//! Storage is little-endian within `u64` words and unused high bits of the
//! last word are always zero, so derived equality and ordering are sound.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::error::Error;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bits {
    len: usize,
    words: Vec<u64>,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn empty() -> Self {
        Self::zeros(0)
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Self::zeros(len);
        for i in 0..len {
            b.set(i, true);
        }
        b
    }

    /// Uniformly random bits.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> Self {
        let mut words = vec![0u64; words_for(len)];
        for w in words.iter_mut() {
            *w = rng.next_u64();
        }
        let mut b = Bits { len, words };
        b.clear_tail();
        b
    }

    /// Big-endian reading of `value`: `from_u64(1, 3)` is `"001"`.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        let mut b = Self::zeros(len);
        for i in 0..len {
            b.set(i, (value >> (len - 1 - i)) & 1 == 1);
        }
        b
    }

    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= 64, "to_u64 supports at most 64 bits");
        (0..self.len).fold(0u64, |acc, i| (acc << 1) | self.get(i) as u64)
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Self::zeros(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            b.set(i, v);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for width {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range for width {}", self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor_assign(&mut self, other: &Bits) {
        assert_eq!(self.len, other.len, "xor of bitstrings with different widths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &Bits) -> Bits {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &Bits) -> bool {
        assert_eq!(self.len, other.len, "dot of bitstrings with different widths");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum::<u32>()
            & 1
            == 1
    }

    pub fn push(&mut self, v: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        let i = self.len - 1;
        self.set(i, v);
    }

    pub fn extend_from(&mut self, other: &Bits) {
        if self.len.is_multiple_of(64) {
            // word-aligned fast path
            self.words.truncate(self.len / 64);
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
            return;
        }
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    pub fn concat(&self, other: &Bits) -> Bits {
        let mut out = self.clone();
        out.extend_from(other);
        out
    }

    pub fn concat_all<'a, I: IntoIterator<Item = &'a Bits>>(parts: I) -> Bits {
        let mut out = Bits::empty();
        for p in parts {
            out.extend_from(p);
        }
        out
    }

    /// Bits `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Bits {
        assert!(start <= end && end <= self.len, "slice {start}..{end} out of range");
        let mut out = Bits::zeros(end - start);
        for i in start..end {
            if self.get(i) {
                out.set(i - start, true);
            }
        }
        out
    }

    /// Left-most `len` bits.
    pub fn truncate(&self, len: usize) -> Bits {
        self.slice(0, len.min(self.len))
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Canonical encoding: width as big-endian `u32`, then the bits packed
    /// MSB-first into `ceil(width / 8)` bytes.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.len as u32).to_be_bytes());
        let mut byte = 0u8;
        for i in 0..self.len {
            byte = (byte << 1) | self.get(i) as u8;
            if i % 8 == 7 {
                out.push(byte);
                byte = 0;
            }
        }
        if !self.len.is_multiple_of(8) {
            out.push(byte << (8 - self.len % 8));
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.len.div_ceil(8));
        self.encode_into(&mut out);
        out
    }

    /// Inverse of [`Bits::encode_into`]; returns the value and the number of
    /// bytes consumed.
    pub fn decode(input: &[u8]) -> Result<(Bits, usize), Error> {
        if input.len() < 4 {
            return Err(Error::Malformed("truncated bitstring header"));
        }
        let len = u32::from_be_bytes([input[0], input[1], input[2], input[3]]) as usize;
        let nbytes = len.div_ceil(8);
        let body = input
            .get(4..4 + nbytes)
            .ok_or(Error::Malformed("truncated bitstring body"))?;
        let mut b = Bits::zeros(len);
        for i in 0..len {
            if (body[i / 8] >> (7 - i % 8)) & 1 == 1 {
                b.set(i, true);
            }
        }
        Ok((b, 4 + nbytes))
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl FromStr for Bits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut b = Bits::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => b.set(i, true),
                _ => return Err(Error::Malformed("bitstring literal must contain only 0 and 1")),
            }
        }
        Ok(b)
    }
}

/// Parses a literal; panics on bad input. Test and fixture helper.
pub fn bits(s: &str) -> Bits {
    s.parse().expect("invalid bitstring literal")
}

impl From<&Bits> for String {
    fn from(b: &Bits) -> String {
        use alloc::string::ToString;
        b.to_string()
    }
}

/// A permutation of bit positions. Applying it maps input bit `map[i]` to
/// output position `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitPermutation {
    map: Vec<usize>,
}

impl BitPermutation {
    pub fn new(map: Vec<usize>) -> Result<Self, Error> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || seen[m] {
                return Err(Error::InvalidPermutation);
            }
            seen[m] = true;
        }
        Ok(BitPermutation { map })
    }

    pub fn identity(width: usize) -> Self {
        BitPermutation {
            map: (0..width).collect(),
        }
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R, width: usize) -> Self {
        let mut map: Vec<usize> = (0..width).collect();
        map.shuffle(rng);
        BitPermutation { map }
    }

    pub fn width(&self) -> usize {
        self.map.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        BitPermutation { map: inv }
    }

    pub fn apply(&self, input: &Bits) -> Result<Bits, Error> {
        if input.len() != self.map.len() {
            return Err(Error::WidthMismatch {
                expected: self.map.len(),
                found: input.len(),
            });
        }
        let mut out = Bits::zeros(input.len());
        for (i, &src) in self.map.iter().enumerate() {
            if input.get(src) {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.map.len() as u32).to_be_bytes());
        for &m in &self.map {
            out.extend_from_slice(&(m as u32).to_be_bytes());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn literal_round_trip() {
        let b = bits("0110");
        assert!(!b.get(0) && b.get(1) && b.get(2) && !b.get(3));
        assert_eq!(alloc::format!("{b}"), "0110");
        assert!("01x".parse::<Bits>().is_err());
    }

    #[test]
    fn u64_is_big_endian() {
        assert_eq!(Bits::from_u64(1, 3), bits("001"));
        assert_eq!(bits("110").to_u64(), 6);
    }

    #[test]
    fn concat_across_word_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Bits::random(&mut rng, 61);
        let b = Bits::random(&mut rng, 70);
        let c = a.concat(&b);
        assert_eq!(c.len(), 131);
        assert_eq!(c.slice(0, 61), a);
        assert_eq!(c.slice(61, 131), b);
        let aligned = Bits::random(&mut rng, 64).concat(&b);
        assert_eq!(aligned.slice(64, 134), b);
    }

    #[test]
    fn dot_is_parity_of_and() {
        assert!(!bits("1101").dot(&bits("1001")));
        assert!(bits("1101").dot(&bits("1000")));
    }

    #[test]
    fn encoding_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for len in [0, 1, 7, 8, 9, 64, 65, 130] {
            let b = Bits::random(&mut rng, len);
            let enc = b.to_bytes();
            let (d, used) = Bits::decode(&enc).unwrap();
            assert_eq!(d, b);
            assert_eq!(used, enc.len());
        }
        assert!(Bits::decode(&[0, 0, 0, 9, 0xff]).is_err());
    }

    #[test]
    fn permutation_inverse_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = BitPermutation::random(&mut rng, 12);
        let x = Bits::random(&mut rng, 12);
        let y = p.apply(&x).unwrap();
        assert_eq!(p.inverse().apply(&y).unwrap(), x);
        assert!(BitPermutation::new(alloc::vec![0, 0]).is_err());
        assert!(p.apply(&Bits::zeros(5)).is_err());
    }
}
