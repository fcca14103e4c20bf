//! Client-side key bookkeeping.

use alloc::vec::Vec;

use rand::RngCore;

use crate::bits::Bits;
use crate::error::Error;

const MAX_RESAMPLE: usize = 64;

/// Two different keys of equal width. `x0` has subscript 0.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyPair {
    pub x0: Bits,
    pub x1: Bits,
}

impl KeyPair {
    pub fn new(x0: Bits, x1: Bits) -> Result<Self, Error> {
        if x0.len() != x1.len() {
            return Err(Error::WidthMismatch {
                expected: x0.len(),
                found: x1.len(),
            });
        }
        if x0 == x1 {
            return Err(Error::EqualKeys);
        }
        Ok(KeyPair { x0, x1 })
    }

    /// A uniformly random pair of different keys, resampling on collision.
    pub fn sample<R: RngCore + ?Sized>(rng: &mut R, width: usize) -> Result<Self, Error> {
        if width == 0 {
            return Err(Error::KeySampling { width });
        }
        let x0 = Bits::random(rng, width);
        for _ in 0..MAX_RESAMPLE {
            let x1 = Bits::random(rng, width);
            if x1 != x0 {
                return Ok(KeyPair { x0, x1 });
            }
        }
        Err(Error::KeySampling { width })
    }

    pub fn width(&self) -> usize {
        self.x0.len()
    }

    pub fn get(&self, b: bool) -> &Bits {
        if b {
            &self.x1
        } else {
            &self.x0
        }
    }

    /// Subscript of `x`, if it is one of the two keys.
    pub fn subscript_of(&self, x: &Bits) -> Option<bool> {
        if *x == self.x0 {
            Some(false)
        } else if *x == self.x1 {
            Some(true)
        } else {
            None
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        self.x0.encode_into(out);
        self.x1.encode_into(out);
    }
}

/// An indexed list of key pairs of common width.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeySet {
    pairs: Vec<KeyPair>,
}

impl KeySet {
    pub fn new(pairs: Vec<KeyPair>) -> Result<Self, Error> {
        if let Some(first) = pairs.first() {
            if let Some(bad) = pairs.iter().find(|p| p.width() != first.width()) {
                return Err(Error::WidthMismatch {
                    expected: first.width(),
                    found: bad.width(),
                });
            }
        }
        Ok(KeySet { pairs })
    }

    pub fn sample<R: RngCore + ?Sized>(rng: &mut R, n_pairs: usize, width: usize) -> Result<Self, Error> {
        let pairs = (0..n_pairs)
            .map(|_| KeyPair::sample(rng, width))
            .collect::<Result<_, _>>()?;
        Ok(KeySet { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn width(&self) -> Option<usize> {
        self.pairs.first().map(KeyPair::width)
    }

    pub fn pairs(&self) -> &[KeyPair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<KeyPair> {
        self.pairs
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.pairs.len() as u32).to_be_bytes());
        for p in &self.pairs {
            p.encode_into(out);
        }
    }
}

/// Output keys of a combine step: subscript `b` of the result is
/// `pad_b || a_b || b_(b ^ outcome)`. Empty pads give the plain variant.
pub fn combine_keys(a: &KeyPair, b: &KeyPair, outcome: bool, pads: (&Bits, &Bits)) -> Result<KeyPair, Error> {
    if pads.0.len() != pads.1.len() {
        return Err(Error::WidthMismatch {
            expected: pads.0.len(),
            found: pads.1.len(),
        });
    }
    let k0 = Bits::concat_all([pads.0, &a.x0, b.get(outcome)]);
    let k1 = Bits::concat_all([pads.1, &a.x1, b.get(!outcome)]);
    KeyPair::new(k0, k1)
}

/// Block `i` of the result is block `perm[i]` of the input.
pub fn permute_blocks<T: Clone>(blocks: &[T], perm: &[usize]) -> Result<Vec<T>, Error> {
    if perm.len() != blocks.len() {
        return Err(Error::WidthMismatch {
            expected: blocks.len(),
            found: perm.len(),
        });
    }
    let mut seen = alloc::vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(Error::InvalidPermutation);
        }
        seen[p] = true;
    }
    Ok(perm.iter().map(|&p| blocks[p].clone()).collect())
}

pub fn flatten<T: Clone>(blocks: &[Vec<T>]) -> Vec<T> {
    blocks.iter().flat_map(|b| b.iter().cloned()).collect()
}

/// `pad || x_b || y_b^(1) || ... || y_b^(J)` for both subscripts.
pub fn extend_keys_refresh(x: &KeyPair, ys: &[KeyPair], pad: &Bits) -> Result<KeyPair, Error> {
    let mut k0 = pad.concat(&x.x0);
    let mut k1 = pad.concat(&x.x1);
    for y in ys {
        k0.extend_from(&y.x0);
        k1.extend_from(&y.x1);
    }
    KeyPair::new(k0, k1)
}
