//! Encrypted lookup tables and their coherent evaluation.
//!
//! A row encrypts a payload under a key as `(R1, H(R1||k) ^ p)` together
//! with a key tag `(R2, H(R2||k))`. Multi-wire keys are concatenated before
//! encryption. Oracle outputs are truncated to their left-most bits.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::bits::{BitPermutation, Bits};
use crate::error::Error;
use crate::keys::KeyPair;
use crate::oracle::{Oracle, Party};
use crate::state::{Reg, SparseState};

const MAX_PAD_RESAMPLE: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRow {
    pub ct_pad: Bits,
    pub ct: Bits,
    pub tag_pad: Bits,
    pub tag: Bits,
}

impl TableRow {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        self.ct_pad.encode_into(out);
        self.ct.encode_into(out);
        self.tag_pad.encode_into(out);
        self.tag.encode_into(out);
    }

    pub fn decode(input: &[u8]) -> Result<(TableRow, usize), Error> {
        let mut at = 0;
        let mut field = || -> Result<Bits, Error> {
            let (b, used) = Bits::decode(&input[at.min(input.len())..])?;
            at += used;
            Ok(b)
        };
        let row = TableRow {
            ct_pad: field()?,
            ct: field()?,
            tag_pad: field()?,
            tag: field()?,
        };
        Ok((row, at))
    }

    fn open(&self, oracle: &Oracle, key: &Bits) -> Option<Bits> {
        if self.tag.is_empty() {
            return None;
        }
        let tag = oracle.eval(&self.tag_pad.concat(key), self.tag.len());
        if tag != self.tag {
            return None;
        }
        if self.ct.is_empty() {
            return Some(Bits::empty());
        }
        Some(oracle.eval(&self.ct_pad.concat(key), self.ct.len()).xor(&self.ct))
    }
}

/// Encrypts `payload` under `key`. Costs the client two queries.
pub fn enc<R: RngCore + ?Sized>(
    oracle: &mut Oracle,
    key: &Bits,
    payload: &Bits,
    pad_len: usize,
    tag_len: usize,
    rng: &mut R,
) -> Result<TableRow, Error> {
    let ct_pad = Bits::random(rng, pad_len);
    let tag_pad = Bits::random(rng, pad_len);
    enc_with_pads(oracle, key, payload, ct_pad, tag_pad, tag_len)
}

fn enc_with_pads(
    oracle: &mut Oracle,
    key: &Bits,
    payload: &Bits,
    ct_pad: Bits,
    tag_pad: Bits,
    tag_len: usize,
) -> Result<TableRow, Error> {
    if ct_pad.is_empty() || tag_len == 0 {
        return Err(Error::Config("pad and tag lengths must be positive".into()));
    }
    let ct = if payload.is_empty() {
        Bits::empty()
    } else {
        oracle
            .query(Party::Client, &ct_pad.concat(key), payload.len())?
            .xor(payload)
    };
    let tag = oracle.query(Party::Client, &tag_pad.concat(key), tag_len)?;
    Ok(TableRow {
        ct_pad,
        ct,
        tag_pad,
        tag,
    })
}

/// Decrypts one row, checking the tag first. Counted for `party`.
pub fn dec_row(oracle: &mut Oracle, party: Party, row: &TableRow, key: &Bits) -> Result<Bits, Error> {
    oracle.charge(party, if row.ct.is_empty() { 1 } else { 2 })?;
    if row.tag.is_empty() || row.tag_pad.is_empty() {
        return Err(Error::Malformed("row without tag"));
    }
    row.open(oracle, key).ok_or(Error::TagMismatch)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupTable {
    pub rows: Vec<TableRow>,
    pub key_len: usize,
    pub payload_len: usize,
    pub tag_len: usize,
}

/// One row per `(input key, payload)` entry, rows shuffled. Input keys must
/// be pairwise distinct and of equal width, as must payloads.
pub fn lt_build<R: RngCore + ?Sized>(
    oracle: &mut Oracle,
    mapping: &[(Bits, Bits)],
    pad_len: usize,
    tag_len: usize,
    rng: &mut R,
) -> Result<LookupTable, Error> {
    let key_len = mapping.first().map_or(0, |(k, _)| k.len());
    let payload_len = mapping.first().map_or(0, |(_, p)| p.len());
    let mut inputs = BTreeSet::new();
    for (k, p) in mapping {
        if k.len() != key_len {
            return Err(Error::WidthMismatch {
                expected: key_len,
                found: k.len(),
            });
        }
        if p.len() != payload_len {
            return Err(Error::WidthMismatch {
                expected: payload_len,
                found: p.len(),
            });
        }
        if !inputs.insert(k.clone()) {
            return Err(Error::Malformed("lookup table inputs must be distinct"));
        }
    }
    let mut used = BTreeSet::new();
    let mut fresh_pad = |rng: &mut R| -> Result<Bits, Error> {
        for _ in 0..MAX_PAD_RESAMPLE {
            let p = Bits::random(rng, pad_len);
            if used.insert(p.clone()) {
                return Ok(p);
            }
        }
        Err(Error::Config("pad length too short for distinct row pads".into()))
    };
    let mut rows = Vec::with_capacity(mapping.len());
    for (j, (k, p)) in mapping.iter().enumerate() {
        let mut attempts = 0;
        loop {
            let ct_pad = fresh_pad(rng)?;
            let tag_pad = fresh_pad(rng)?;
            let row = enc_with_pads(oracle, k, p, ct_pad, tag_pad, tag_len)?;
            // A short tag may also match another input key of this table;
            // resample so every honest key opens exactly its own row.
            let mut clash = false;
            for (i, (other, _)) in mapping.iter().enumerate() {
                if i != j && oracle.query(Party::Client, &row.tag_pad.concat(other), tag_len)? == row.tag {
                    clash = true;
                    break;
                }
            }
            if !clash {
                rows.push(row);
                break;
            }
            attempts += 1;
            if attempts == MAX_PAD_RESAMPLE {
                return Err(Error::Config("tag length too short for unambiguous rows".into()));
            }
        }
    }
    rows.shuffle(rng);
    Ok(LookupTable {
        rows,
        key_len,
        payload_len,
        tag_len,
    })
}

impl LookupTable {
    /// Oracle queries charged for one coherent evaluation: a tag check per
    /// row plus one decryption.
    pub fn eval_cost(&self) -> u64 {
        self.rows.len() as u64 + 1
    }

    /// Payload for `key`, or `None` if no row's tag matches. Not counted.
    pub fn open(&self, oracle: &Oracle, key: &Bits) -> Option<Bits> {
        self.rows.iter().find_map(|r| r.open(oracle, key))
    }

    /// Classical lookup by `party`, charged like a coherent evaluation.
    pub fn lookup(&self, oracle: &mut Oracle, party: Party, key: &Bits) -> Result<Bits, Error> {
        oracle.charge(party, self.eval_cost())?;
        self.open(oracle, key).ok_or(Error::Undecryptable)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        for v in [self.rows.len(), self.key_len, self.payload_len, self.tag_len] {
            out.extend_from_slice(&(v as u32).to_be_bytes());
        }
        for r in &self.rows {
            r.encode_into(out);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.encode_into(&mut v);
        v
    }

    pub fn decode(input: &[u8]) -> Result<(LookupTable, usize), Error> {
        if input.len() < 16 {
            return Err(Error::Malformed("truncated table header"));
        }
        let word = |i: usize| {
            u32::from_be_bytes([input[4 * i], input[4 * i + 1], input[4 * i + 2], input[4 * i + 3]]) as usize
        };
        let (n, key_len, payload_len, tag_len) = (word(0), word(1), word(2), word(3));
        let mut at = 16;
        let mut rows = Vec::new();
        for _ in 0..n {
            let (row, used) = TableRow::decode(&input[at..])?;
            at += used;
            rows.push(row);
        }
        Ok((
            LookupTable {
                rows,
                key_len,
                payload_len,
                tag_len,
            },
            at,
        ))
    }
}

/// Coherently evaluates `table` keyed by the concatenation of `key_regs`,
/// XORing the payload across `out_regs` (split by their widths). Every
/// branch must decrypt; otherwise nothing is changed and the call fails.
pub fn lt_eval_coherent(
    oracle: &mut Oracle,
    party: Party,
    state: &mut SparseState,
    key_regs: &[Reg],
    out_regs: &[Reg],
    table: &LookupTable,
) -> Result<(), Error> {
    let key_pos: Vec<usize> = key_regs.iter().map(|r| state.position(*r)).collect::<Result<_, _>>()?;
    let out_pos: Vec<usize> = out_regs.iter().map(|r| state.position(*r)).collect::<Result<_, _>>()?;
    let key_width: usize = key_pos.iter().map(|&p| state.registers()[p].1).sum();
    if key_width != table.key_len {
        return Err(Error::WidthMismatch {
            expected: table.key_len,
            found: key_width,
        });
    }
    let out_widths: Vec<usize> = out_pos.iter().map(|&p| state.registers()[p].1).collect();
    let out_width: usize = out_widths.iter().sum();
    if out_width != table.payload_len {
        return Err(Error::WidthMismatch {
            expected: table.payload_len,
            found: out_width,
        });
    }
    oracle.charge(party, table.eval_cost())?;
    let o = &*oracle;
    let mut payloads = Vec::with_capacity(state.num_branches());
    for (vals, _) in state.branches() {
        let key = Bits::concat_all(key_pos.iter().map(|&p| &vals[p]));
        payloads.push(table.open(o, &key).ok_or(Error::Undecryptable)?);
    }
    let mut start = 0;
    for (i, &p) in out_pos.iter().enumerate() {
        let w = out_widths[i];
        let mut it = payloads.iter();
        state.xor_into(p, |_| it.next().expect("one payload per branch").slice(start, start + w))?;
        start += w;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReversibleTable {
    pub forward: LookupTable,
    pub backward: LookupTable,
}

/// Forward rows map each input to its partner; backward rows invert them.
/// Tag lengths equal the width of the side being decrypted to.
pub fn revlt_build<R: RngCore + ?Sized>(
    oracle: &mut Oracle,
    pairs: &[(Bits, Bits)],
    pad_len: usize,
    rng: &mut R,
) -> Result<ReversibleTable, Error> {
    let out_w = pairs.first().map_or(1, |(_, y)| y.len());
    let in_w = pairs.first().map_or(1, |(x, _)| x.len());
    let forward = lt_build(oracle, pairs, pad_len, out_w.max(1), rng)?;
    let back: Vec<(Bits, Bits)> = pairs.iter().map(|(x, y)| (y.clone(), x.clone())).collect();
    let backward = lt_build(oracle, &back, pad_len, in_w.max(1), rng)?;
    Ok(ReversibleTable { forward, backward })
}

/// Re-encodes `in_regs` into `out_regs` through a reversible table: forward
/// into the (zero) outputs, then backward to erase the inputs.
pub fn rev_eval(
    oracle: &mut Oracle,
    party: Party,
    state: &mut SparseState,
    in_regs: &[Reg],
    out_regs: &[Reg],
    table: &ReversibleTable,
) -> Result<(), Error> {
    lt_eval_coherent(oracle, party, state, in_regs, out_regs, &table.forward)?;
    lt_eval_coherent(oracle, party, state, out_regs, in_regs, &table.backward)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RobustTable {
    pub forward: LookupTable,
    pub backward: LookupTable,
}

/// Client-side inputs of a robust reversible table.
pub struct RobustKeys<'a> {
    pub help: &'a KeyPair,
    pub k2: &'a KeyPair,
    pub k3: &'a KeyPair,
    pub out2: &'a KeyPair,
    pub out3: &'a KeyPair,
}

/// Output string of row `(b1, b2, b3)`: `perm(y2_b2 || y3_(b3 ^ b1 b2))`.
pub fn robust_output(keys: &RobustKeys<'_>, perm: &BitPermutation, b1: bool, b2: bool, b3: bool) -> Result<Bits, Error> {
    perm.apply(&keys.out2.get(b2).concat(keys.out3.get(b3 ^ (b1 & b2))))
}

/// Identity-style on the helper's 0 branch and CNOT-style on its 1 branch.
/// Both tables use tag length equal to the pad length.
pub fn robust_rlt_build<R: RngCore + ?Sized>(
    oracle: &mut Oracle,
    keys: &RobustKeys<'_>,
    perm: &BitPermutation,
    pad_len: usize,
    rng: &mut R,
) -> Result<RobustTable, Error> {
    if keys.k2.width() != keys.k3.width() {
        return Err(Error::WidthMismatch {
            expected: keys.k3.width(),
            found: keys.k2.width(),
        });
    }
    if keys.out2.width() != keys.out3.width() || perm.width() != 2 * keys.out2.width() {
        return Err(Error::WidthMismatch {
            expected: 2 * keys.out2.width(),
            found: perm.width(),
        });
    }
    let mut fwd = Vec::with_capacity(8);
    let mut bwd = Vec::with_capacity(8);
    for idx in 0..8u8 {
        let (b1, b2, b3) = (idx & 4 != 0, idx & 2 != 0, idx & 1 != 0);
        let h = keys.help.get(b1);
        let input = Bits::concat_all([h, keys.k2.get(b2), keys.k3.get(b3)]);
        let out = robust_output(keys, perm, b1, b2, b3)?;
        bwd.push((h.concat(&out), keys.k2.get(b2).concat(keys.k3.get(b3))));
        fwd.push((input, out));
    }
    let forward = lt_build(oracle, &fwd, pad_len, pad_len, rng)?;
    let backward = lt_build(oracle, &bwd, pad_len, pad_len, rng)?;
    Ok(RobustTable { forward, backward })
}

impl RobustTable {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        self.forward.encode_into(out);
        self.backward.encode_into(out);
    }
}

/// A table realizing a relative phase of `pi * n / D` between the two keys
/// of a pair. Payloads are residues mod `2D` so the phase `pi * m / D` is
/// well defined; the offset `m` stays with the client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseTable {
    pub table: LookupTable,
    pub denom: u32,
}

pub fn phase_payload_width(denom: u32) -> usize {
    (32 - (2 * denom - 1).leading_zeros()) as usize
}

pub fn phase_lt_build<R: RngCore + ?Sized>(
    oracle: &mut Oracle,
    keys: &KeyPair,
    n: u32,
    denom: u32,
    pad_len: usize,
    rng: &mut R,
) -> Result<PhaseTable, Error> {
    if denom == 0 {
        return Err(Error::Config("phase denominator must be positive".into()));
    }
    let m = (rng.next_u32()) % denom;
    let w = phase_payload_width(denom);
    let modulus = 2 * denom;
    let mapping = [
        (keys.x0.clone(), Bits::from_u64(m as u64, w)),
        (keys.x1.clone(), Bits::from_u64(((m + n) % modulus) as u64, w)),
    ];
    let table = lt_build(oracle, &mapping, pad_len, w, rng)?;
    Ok(PhaseTable { table, denom })
}

/// Decrypts into `scratch`, applies `exp(i pi m_b / D)`, decrypts again to
/// clear `scratch`, and removes it.
pub fn phase_eval(
    oracle: &mut Oracle,
    party: Party,
    state: &mut SparseState,
    reg: Reg,
    table: &PhaseTable,
    scratch: Reg,
) -> Result<(), Error> {
    state.add_register(scratch, Bits::zeros(table.table.payload_len))?;
    lt_eval_coherent(oracle, party, state, &[reg], &[scratch], &table.table)?;
    let d = table.denom as f64;
    state.apply_phase(scratch, |v| core::f64::consts::PI * v.to_u64() as f64 / d)?;
    lt_eval_coherent(oracle, party, state, &[reg], &[scratch], &table.table)?;
    state.discard(scratch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits;
    use crate::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (Oracle, ChaCha8Rng) {
        (Oracle::new(seed, 32), ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_payload_ct_is_the_mask() {
        let (mut o, mut rng) = setup(1);
        let key = bits("1010");
        let row = enc(&mut o, &key, &Bits::zeros(8), 16, 16, &mut rng).unwrap();
        assert_eq!(row.ct, o.eval(&row.ct_pad.concat(&key), 8));
        assert_eq!(o.counts().client, 2);
    }

    #[test]
    fn wrong_key_and_truncation_are_rejected() {
        let (mut o, mut rng) = setup(2);
        let row = enc(&mut o, &bits("1111"), &bits("0101"), 16, 24, &mut rng).unwrap();
        assert_eq!(dec_row(&mut o, Party::Server, &row, &bits("1111")).unwrap(), bits("0101"));
        assert_eq!(dec_row(&mut o, Party::Server, &row, &bits("1110")), Err(Error::TagMismatch));
        let mut bytes = Vec::new();
        row.encode_into(&mut bytes);
        assert_eq!(TableRow::decode(&bytes).unwrap().0, row);
        assert!(TableRow::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn basis_test_table_maps_both_keys_to_r() {
        let (mut o, mut rng) = setup(3);
        let k = KeyPair::sample(&mut rng, 6).unwrap();
        let r = Bits::random(&mut rng, 8);
        let t = lt_build(&mut o, &[(k.x0.clone(), r.clone()), (k.x1.clone(), r.clone())], 16, 8, &mut rng).unwrap();
        assert_eq!(t.open(&o, &k.x0), Some(r.clone()));
        assert_eq!(t.open(&o, &k.x1), Some(r));
        let empty = lt_build(&mut o, &[], 16, 8, &mut rng).unwrap();
        assert!(empty.rows.is_empty());
        let (decoded, used) = LookupTable::decode(&t.to_bytes()).unwrap();
        assert_eq!(decoded, t);
        assert_eq!(used, t.to_bytes().len());
    }

    #[test]
    fn coherent_eval_keeps_the_gadget() {
        let (mut o, mut rng) = setup(4);
        let k = KeyPair::sample(&mut rng, 5).unwrap();
        let r = Bits::random(&mut rng, 8);
        let t = lt_build(&mut o, &[(k.x0.clone(), r.clone()), (k.x1.clone(), r.clone())], 16, 8, &mut rng).unwrap();
        let (g, out) = (Reg(0), Reg(1));
        let mut s = SparseState::gadget(g, &k);
        s.add_register(out, Bits::zeros(8)).unwrap();
        lt_eval_coherent(&mut o, Party::Server, &mut s, &[g], &[out], &t).unwrap();
        assert_eq!(o.counts().server, 3);
        let mut expected = SparseState::gadget(g, &k);
        expected.add_register(out, r).unwrap();
        assert!((s.fidelity(&expected).unwrap() - 1.0).abs() < 1e-12);
        lt_eval_coherent(&mut o, Party::Server, &mut s, &[g], &[out], &t).unwrap();
        assert_eq!(s.values_of(out).unwrap(), alloc::vec![Bits::zeros(8)]);
    }

    #[test]
    fn undecryptable_branch_fails() {
        let (mut o, mut rng) = setup(5);
        let t = lt_build(&mut o, &[(bits("0000"), bits("1"))], 8, 8, &mut rng).unwrap();
        let mut s = SparseState::basis(Reg(0), bits("0001"));
        s.add_register(Reg(1), bits("0")).unwrap();
        assert_eq!(
            lt_eval_coherent(&mut o, Party::Server, &mut s, &[Reg(0)], &[Reg(1)], &t),
            Err(Error::Undecryptable)
        );
    }

    #[test]
    fn reversible_table_reencodes_gadget() {
        let (mut o, mut rng) = setup(6);
        let x = KeyPair::sample(&mut rng, 4).unwrap();
        let y = KeyPair::sample(&mut rng, 10).unwrap();
        let t = revlt_build(&mut o, &[(x.x0.clone(), y.x0.clone()), (x.x1.clone(), y.x1.clone())], 16, &mut rng).unwrap();
        assert_eq!(t.forward.tag_len, 10);
        assert_eq!(t.backward.tag_len, 4);
        let mut s = SparseState::gadget(Reg(0), &x);
        s.add_register(Reg(1), Bits::zeros(10)).unwrap();
        rev_eval(&mut o, Party::Server, &mut s, &[Reg(0)], &[Reg(1)], &t).unwrap();
        s.discard(Reg(0)).unwrap();
        assert!((s.fidelity(&SparseState::gadget(Reg(1), &y)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robust_rows_follow_both_branches() {
        let (mut o, mut rng) = setup(7);
        let help = KeyPair::sample(&mut rng, 4).unwrap();
        let k2 = KeyPair::sample(&mut rng, 4).unwrap();
        let k3 = KeyPair::sample(&mut rng, 4).unwrap();
        let out2 = KeyPair::sample(&mut rng, 6).unwrap();
        let out3 = KeyPair::sample(&mut rng, 6).unwrap();
        let perm = BitPermutation::random(&mut rng, 12);
        let keys = RobustKeys {
            help: &help,
            k2: &k2,
            k3: &k3,
            out2: &out2,
            out3: &out3,
        };
        let t = robust_rlt_build(&mut o, &keys, &perm, 16, &mut rng).unwrap();
        assert_eq!(t.forward.rows.len(), 8);
        let row = |b1: bool, b2: bool, b3: bool| {
            let key = Bits::concat_all([help.get(b1), k2.get(b2), k3.get(b3)]);
            t.forward.open(&o, &key).unwrap()
        };
        assert_eq!(row(false, true, false), perm.apply(&out2.x1.concat(&out3.x0)).unwrap());
        assert_eq!(row(true, true, false), perm.apply(&out2.x1.concat(&out3.x1)).unwrap());
    }

    #[test]
    fn phase_table_realizes_relative_phase() {
        let (mut o, mut rng) = setup(8);
        let k = KeyPair::sample(&mut rng, 6).unwrap();
        for n in 0..8u32 {
            let t = phase_lt_build(&mut o, &k, n, 4, 16, &mut rng).unwrap();
            let mut s = SparseState::gadget(Reg(0), &k);
            phase_eval(&mut o, Party::Server, &mut s, Reg(0), &t, Reg(9)).unwrap();
            let theta = core::f64::consts::PI * n as f64 / 4.0;
            let expected = SparseState::from_branches(
                alloc::vec![(Reg(0), 6)],
                [
                    (alloc::vec![k.x0.clone()], Complex::new(1.0, 0.0)),
                    (alloc::vec![k.x1.clone()], Complex::from_polar(1.0, theta)),
                ],
            )
            .unwrap();
            assert!((s.fidelity(&expected).unwrap() - 1.0).abs() < 1e-9, "n = {n}");
        }
    }
}
