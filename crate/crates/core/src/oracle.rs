//! Lazily sampled random oracle.
//!
//! Outputs come from a seeded PRF rather than a stored table, so an oracle is
//! cheap to clone and two instances with the same seed agree everywhere.
//! Global tags live in a separate domain so no ordinary query can hit them.
//! Blinded views stack layers that re-randomize a finite input set.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::bits::Bits;
use crate::error::Error;
use crate::state::{Reg, SparseState};

const DOMAIN_PLAIN: u8 = 0;
const DOMAIN_TAG: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Client,
    Server,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryCounts {
    pub client: u64,
    pub server: u64,
}

impl QueryCounts {
    pub fn get(&self, party: Party) -> u64 {
        match party {
            Party::Client => self.client,
            Party::Server => self.server,
        }
    }

    fn bump(&mut self, party: Party, n: u64) {
        match party {
            Party::Client => self.client += n,
            Party::Server => self.server += n,
        }
    }
}

#[derive(Clone, Debug)]
struct BlindLayer {
    salt: u64,
    inputs: Arc<BTreeSet<Bits>>,
}

#[derive(Clone, Debug)]
pub struct Oracle {
    seed: u64,
    tag_len: usize,
    blinds: Vec<BlindLayer>,
    counts: QueryCounts,
    server_budget: Option<u64>,
}

fn prf(seed: u64, salt: u64, domain: u8, input: &Bits, out_len: usize) -> Bits {
    let mut prefix = Sha256::new();
    prefix.update(b"subqc/ro");
    prefix.update(seed.to_le_bytes());
    prefix.update(salt.to_le_bytes());
    prefix.update([domain]);
    prefix.update((out_len as u32).to_le_bytes());
    prefix.update(input.to_bytes());
    let mut out = Bits::zeros(out_len);
    let mut pos = 0;
    let mut counter = 0u32;
    while pos < out_len {
        let mut h = prefix.clone();
        h.update(counter.to_le_bytes());
        let block = h.finalize();
        for byte in block.iter() {
            for k in 0..8 {
                if pos == out_len {
                    break;
                }
                if (byte >> (7 - k)) & 1 == 1 {
                    out.set(pos, true);
                }
                pos += 1;
            }
        }
        counter += 1;
    }
    out
}

impl Oracle {
    pub fn new(seed: u64, tag_len: usize) -> Self {
        Oracle {
            seed,
            tag_len,
            blinds: Vec::new(),
            counts: QueryCounts::default(),
            server_budget: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tag_len(&self) -> usize {
        self.tag_len
    }

    /// Caps the number of server queries; further server queries fail.
    pub fn with_server_budget(mut self, budget: u64) -> Self {
        self.server_budget = Some(budget);
        self
    }

    pub fn counts(&self) -> &QueryCounts {
        &self.counts
    }

    /// The oracle's value without counting a query. Used by the simulator to
    /// compute expected states; parties go through the counted methods.
    pub fn eval(&self, input: &Bits, out_len: usize) -> Bits {
        for layer in self.blinds.iter().rev() {
            if layer.inputs.contains(input) {
                return prf(self.seed, layer.salt, DOMAIN_PLAIN, input, out_len);
            }
        }
        prf(self.seed, 0, DOMAIN_PLAIN, input, out_len)
    }

    pub fn eval_tag(&self, x: &Bits) -> Bits {
        prf(self.seed, 0, DOMAIN_TAG, x, self.tag_len)
    }

    /// Records `n` queries by `party`, enforcing the server budget.
    pub fn charge(&mut self, party: Party, n: u64) -> Result<(), Error> {
        if party == Party::Server {
            if let Some(budget) = self.server_budget {
                if self.counts.server + n > budget {
                    return Err(Error::BudgetExceeded { budget });
                }
            }
        }
        self.counts.bump(party, n);
        Ok(())
    }

    pub fn query(&mut self, party: Party, input: &Bits, out_len: usize) -> Result<Bits, Error> {
        if out_len == 0 {
            return Err(Error::Malformed("oracle output length must be positive"));
        }
        self.charge(party, 1)?;
        Ok(self.eval(input, out_len))
    }

    /// XORs `H(in_reg)` into `out_reg` on every branch. One counted query.
    pub fn query_superposed(
        &mut self,
        party: Party,
        state: &mut SparseState,
        in_reg: Reg,
        out_reg: Reg,
    ) -> Result<(), Error> {
        let in_pos = state.position(in_reg)?;
        let out_pos = state.position(out_reg)?;
        let out_len = state.width(out_reg)?;
        if out_len == 0 {
            return Err(Error::Malformed("oracle output length must be positive"));
        }
        self.charge(party, 1)?;
        let this = &*self;
        state.xor_into(out_pos, |vals| this.eval(&vals[in_pos], out_len))
    }

    pub fn tag(&mut self, party: Party, x: &Bits) -> Result<Bits, Error> {
        if x.is_empty() {
            return Err(Error::Malformed("cannot tag an empty key"));
        }
        self.charge(party, 1)?;
        Ok(self.eval_tag(x))
    }

    /// A view that answers with fresh randomness on `inputs` and passes
    /// through elsewhere. Counters and budget carry over; `self` is untouched.
    pub fn blind<I: IntoIterator<Item = Bits>>(&self, inputs: I) -> Oracle {
        let mut view = self.clone();
        let salt = self.blinds.len() as u64 + 1;
        view.blinds.push(BlindLayer {
            salt,
            inputs: Arc::new(inputs.into_iter().collect()),
        });
        view
    }

    pub fn is_blinded_at(&self, input: &Bits) -> bool {
        self.blinds.iter().any(|l| l.inputs.contains(input))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits;
    use crate::keys::KeyPair;
    use crate::state::Reg;

    #[test]
    fn queries_are_deterministic_and_counted() {
        let mut o = Oracle::new(7, 32);
        let a = o.query(Party::Client, &bits("0101"), 16).unwrap();
        let b = o.query(Party::Client, &bits("0101"), 16).unwrap();
        assert_eq!(a, b);
        assert_eq!(o.counts().client, 2);
        assert_eq!(o.counts().server, 0);
        let mut o2 = Oracle::new(7, 32);
        assert_eq!(o2.query(Party::Server, &bits("0101"), 16).unwrap(), a);
    }

    #[test]
    fn regression_fixture_seed_zero() {
        let mut o = Oracle::new(0, 32);
        let out = o.query(Party::Client, &bits("0101"), 16).unwrap();
        assert_eq!(alloc::format!("{out}"), FIXTURE_SEED0_0101_16);
    }

    // Cross-checked with an independent SHA-256 computation of the same
    // domain-separated input encoding.
    const FIXTURE_SEED0_0101_16: &str = "1010001010101101";

    #[test]
    fn output_length_is_part_of_the_key() {
        let o = Oracle::new(1, 32);
        let short = o.eval(&bits("11"), 8);
        let long = o.eval(&bits("11"), 16);
        assert_eq!(short.len(), 8);
        assert_eq!(long.len(), 16);
        assert_eq!(o.eval(&bits("11"), 300).len(), 300);
    }

    #[test]
    fn zero_length_output_is_rejected() {
        let mut o = Oracle::new(1, 32);
        assert!(o.query(Party::Client, &bits("1"), 0).is_err());
    }

    #[test]
    fn tags_use_a_separate_domain() {
        let o = Oracle::new(3, 16);
        let x = bits("1011001110001111");
        assert_ne!(o.eval_tag(&x), o.eval(&x, 16));
    }

    #[test]
    fn superposed_query_on_gadget() {
        let mut o = Oracle::new(11, 32);
        let k = KeyPair::new(bits("0011"), bits("1100")).unwrap();
        let (x, y) = (Reg(0), Reg(1));
        let mut s = SparseState::gadget(x, &k);
        s.add_register(y, Bits::zeros(12)).unwrap();
        o.query_superposed(Party::Server, &mut s, x, y).unwrap();
        assert_eq!(o.counts().server, 1);
        let h0 = o.eval(&k.x0, 12);
        let h1 = o.eval(&k.x1, 12);
        assert!((s.amplitude(&[k.x0.clone(), h0]).norm_sqr() - 0.5).abs() < 1e-12);
        assert!((s.amplitude(&[k.x1.clone(), h1]).norm_sqr() - 0.5).abs() < 1e-12);
        o.query_superposed(Party::Server, &mut s, x, y).unwrap();
        let mut expected = SparseState::gadget(x, &k);
        expected.add_register(y, Bits::zeros(12)).unwrap();
        assert!((s.fidelity(&expected).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blinding_is_local_and_layered() {
        let base = Oracle::new(5, 32);
        let s1 = [bits("0001"), bits("0010")];
        let s2 = [bits("0100")];
        let b1 = base.blind(s1.iter().cloned());
        let b2 = b1.blind(s2.iter().cloned());
        for v in 0..16u64 {
            let x = Bits::from_u64(v, 4);
            let in_set = s1.contains(&x) || s2.contains(&x);
            assert_eq!(b2.eval(&x, 32) != base.eval(&x, 32), in_set, "input {x}");
            assert_eq!(b2.eval_tag(&x), base.eval_tag(&x));
        }
        let empty = base.blind(core::iter::empty());
        assert_eq!(empty.eval(&bits("0001"), 32), base.eval(&bits("0001"), 32));
    }

    #[test]
    fn server_budget_is_enforced() {
        let mut o = Oracle::new(1, 8).with_server_budget(2);
        o.query(Party::Server, &bits("1"), 4).unwrap();
        o.query(Party::Server, &bits("1"), 4).unwrap();
        assert_eq!(
            o.query(Party::Server, &bits("1"), 4),
            Err(Error::BudgetExceeded { budget: 2 })
        );
        assert!(o.query(Party::Client, &bits("1"), 4).is_ok());
    }
}
