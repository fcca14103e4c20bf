//! Client-to-server messages and the honest server.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::SeedableRng;

use crate::bits::{BitPermutation, Bits};
use crate::error::Error;
use crate::keys::KeyPair;
use crate::oracle::{Oracle, Party};
use crate::rng::Rng;
use crate::state::{Reg, ServerMemory, SparseState};
use crate::tables::{lt_eval_coherent, phase_eval, LookupTable, PhaseTable, RobustTable};

const MAX_HINT_ATTEMPTS: usize = 64;

/// Lets the server learn which key of a pair a register holds without
/// learning the other key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubscriptHint {
    /// Global tags of both keys.
    Tags(Bits, Bits),
    /// Pads `R_b` with `H(R_b || x_b)`.
    Padded { pads: (Bits, Bits), hashes: (Bits, Bits) },
}

impl SubscriptHint {
    pub fn tags(oracle: &mut Oracle, keys: &KeyPair) -> Result<Self, Error> {
        let t0 = oracle.tag(Party::Client, &keys.x0)?;
        let t1 = oracle.tag(Party::Client, &keys.x1)?;
        if t0 == t1 {
            return Err(Error::Config("global tags of a key pair collide; raise tag_len".into()));
        }
        Ok(SubscriptHint::Tags(t0, t1))
    }

    /// Pads are resampled while either hash also matches the other key, so
    /// short hashes never misreport a subscript.
    pub fn padded<R: rand::RngCore + ?Sized>(
        oracle: &mut Oracle,
        keys: &KeyPair,
        pad_len: usize,
        hash_len: usize,
        rng: &mut R,
    ) -> Result<Self, Error> {
        for _ in 0..MAX_HINT_ATTEMPTS {
            let p0 = Bits::random(rng, pad_len);
            let p1 = Bits::random(rng, pad_len);
            let h0 = oracle.query(Party::Client, &p0.concat(&keys.x0), hash_len)?;
            let h1 = oracle.query(Party::Client, &p1.concat(&keys.x1), hash_len)?;
            let c0 = oracle.query(Party::Client, &p0.concat(&keys.x1), hash_len)?;
            let c1 = oracle.query(Party::Client, &p1.concat(&keys.x0), hash_len)?;
            if c0 != h0 && c1 != h1 {
                return Ok(SubscriptHint::Padded {
                    pads: (p0, p1),
                    hashes: (h0, h1),
                });
            }
        }
        Err(Error::Config("could not sample unambiguous subscript pads".into()))
    }

    /// Oracle queries an honest server spends to evaluate the hint coherently.
    pub fn cost(&self) -> u64 {
        match self {
            SubscriptHint::Tags(..) => 1,
            SubscriptHint::Padded { .. } => 2,
        }
    }

    /// Subscript of `v`, or `None` if `v` matches neither key.
    pub fn subscript(&self, oracle: &Oracle, v: &Bits) -> Option<bool> {
        match self {
            SubscriptHint::Tags(t0, t1) => {
                let t = oracle.eval_tag(v);
                if t == *t0 {
                    Some(false)
                } else if t == *t1 {
                    Some(true)
                } else {
                    None
                }
            }
            SubscriptHint::Padded { pads, hashes } => {
                if oracle.eval(&pads.0.concat(v), hashes.0.len()) == hashes.0 {
                    Some(false)
                } else if oracle.eval(&pads.1.concat(v), hashes.1.len()) == hashes.1 {
                    Some(true)
                } else {
                    None
                }
            }
        }
    }

    fn encode_into(&self, w: &mut Vec<u8>) {
        match self {
            SubscriptHint::Tags(a, b) => {
                w.push(0);
                a.encode_into(w);
                b.encode_into(w);
            }
            SubscriptHint::Padded { pads, hashes } => {
                w.push(1);
                pads.0.encode_into(w);
                pads.1.encode_into(w);
                hashes.0.encode_into(w);
                hashes.1.encode_into(w);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RobustEntry {
    pub k3: Reg,
    pub k2_reg: Reg,
    pub k2: KeyPair,
    pub out: Reg,
    pub table: RobustTable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reveal {
    pub out: Reg,
    pub perm: BitPermutation,
    pub parts: [(Reg, usize); 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClientMsg {
    PadHadamard { reg: Reg, pad: Bits, out_len: usize },
    BasisTest { reg: Reg, table: LookupTable },
    RobustTables { help: Reg, entries: Vec<RobustEntry> },
    RevealPermutations { entries: Vec<Reveal> },
    CombineMeasure { a: Reg, b: Reg, hint_a: SubscriptHint, hint_b: SubscriptHint },
    CombineMerge { a: Reg, b: Reg, out: Reg, pads: (Bits, Bits) },
    RefreshTables { r: Reg, entries: Vec<(Reg, LookupTable)> },
    RefreshPads { entries: Vec<(Reg, Bits)> },
    Relabel { map: Vec<(Reg, Reg)> },
    Discard { regs: Vec<Reg> },
    PhaseQubit { reg: Reg, qubit: Reg, hint: SubscriptHint, table: PhaseTable },
    MeasureAngle { reg: Reg, next: Option<Reg>, octant: u8 },
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_be_bytes());
}

fn put_reg(w: &mut Vec<u8>, r: Reg) {
    put_u32(w, r.0);
}

impl ClientMsg {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMsg::PadHadamard { .. } => "pad_hadamard",
            ClientMsg::BasisTest { .. } => "basis_test",
            ClientMsg::RobustTables { .. } => "robust_tables",
            ClientMsg::RevealPermutations { .. } => "reveal_perms",
            ClientMsg::CombineMeasure { .. } => "combine_measure",
            ClientMsg::CombineMerge { .. } => "combine_merge",
            ClientMsg::RefreshTables { .. } => "refresh_tables",
            ClientMsg::RefreshPads { .. } => "refresh_pads",
            ClientMsg::Relabel { .. } => "relabel",
            ClientMsg::Discard { .. } => "discard",
            ClientMsg::PhaseQubit { .. } => "phase_qubit",
            ClientMsg::MeasureAngle { .. } => "measure_angle",
        }
    }

    /// Canonical byte encoding used in transcripts.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Vec::new();
        match self {
            ClientMsg::PadHadamard { reg, pad, out_len } => {
                put_reg(&mut w, *reg);
                pad.encode_into(&mut w);
                put_u32(&mut w, *out_len as u32);
            }
            ClientMsg::BasisTest { reg, table } => {
                put_reg(&mut w, *reg);
                table.encode_into(&mut w);
            }
            ClientMsg::RobustTables { help, entries } => {
                put_reg(&mut w, *help);
                put_u32(&mut w, entries.len() as u32);
                for e in entries {
                    put_reg(&mut w, e.k3);
                    put_reg(&mut w, e.k2_reg);
                    e.k2.encode_into(&mut w);
                    put_reg(&mut w, e.out);
                    e.table.encode_into(&mut w);
                }
            }
            ClientMsg::RevealPermutations { entries } => {
                put_u32(&mut w, entries.len() as u32);
                for e in entries {
                    put_reg(&mut w, e.out);
                    e.perm.encode_into(&mut w);
                    for (r, width) in e.parts {
                        put_reg(&mut w, r);
                        put_u32(&mut w, width as u32);
                    }
                }
            }
            ClientMsg::CombineMeasure { a, b, hint_a, hint_b } => {
                put_reg(&mut w, *a);
                put_reg(&mut w, *b);
                hint_a.encode_into(&mut w);
                hint_b.encode_into(&mut w);
            }
            ClientMsg::CombineMerge { a, b, out, pads } => {
                put_reg(&mut w, *a);
                put_reg(&mut w, *b);
                put_reg(&mut w, *out);
                pads.0.encode_into(&mut w);
                pads.1.encode_into(&mut w);
            }
            ClientMsg::RefreshTables { r, entries } => {
                put_reg(&mut w, *r);
                put_u32(&mut w, entries.len() as u32);
                for (x, t) in entries {
                    put_reg(&mut w, *x);
                    t.encode_into(&mut w);
                }
            }
            ClientMsg::RefreshPads { entries } => {
                put_u32(&mut w, entries.len() as u32);
                for (x, p) in entries {
                    put_reg(&mut w, *x);
                    p.encode_into(&mut w);
                }
            }
            ClientMsg::Relabel { map } => {
                put_u32(&mut w, map.len() as u32);
                for (a, b) in map {
                    put_reg(&mut w, *a);
                    put_reg(&mut w, *b);
                }
            }
            ClientMsg::Discard { regs } => {
                put_u32(&mut w, regs.len() as u32);
                for r in regs {
                    put_reg(&mut w, *r);
                }
            }
            ClientMsg::PhaseQubit {
                reg,
                qubit,
                hint,
                table,
            } => {
                put_reg(&mut w, *reg);
                put_reg(&mut w, *qubit);
                hint.encode_into(&mut w);
                put_u32(&mut w, table.denom);
                table.table.encode_into(&mut w);
            }
            ClientMsg::MeasureAngle { reg, next, octant } => {
                put_reg(&mut w, *reg);
                match next {
                    Some(n) => {
                        w.push(1);
                        put_reg(&mut w, *n);
                    }
                    None => w.push(0),
                }
                w.push(*octant);
            }
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Response {
    Ack,
    Bits(Bits),
    Bit(bool),
}

impl Response {
    pub fn kind(&self) -> &'static str {
        match self {
            Response::Ack => "ack",
            Response::Bits(_) => "bits",
            Response::Bit(_) => "bit",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Vec::new();
        match self {
            Response::Ack => {}
            Response::Bits(b) => b.encode_into(&mut w),
            Response::Bit(b) => w.push(*b as u8),
        }
        w
    }
}

/// A server party. The simulator hands it the initial quantum message and
/// every classical message; it answers through the shared oracle, whose
/// queries are charged to [`Party::Server`].
pub trait Server {
    fn receive_quantum(&mut self, states: Vec<SparseState>) -> Result<(), Error>;
    fn handle(&mut self, oracle: &mut Oracle, msg: &ClientMsg) -> Result<Response, Error>;
    /// The server's memory, for simulator-side inspection only.
    fn memory(&self) -> &ServerMemory;
}

const SCRATCH_BASE: u32 = 0x8000_0000;

#[derive(Clone, Debug)]
pub struct HonestServer {
    mem: ServerMemory,
    rng: Rng,
    next_scratch: u32,
    hints: BTreeMap<Reg, SubscriptHint>,
}

fn subscripts(
    oracle: &Oracle,
    state: &SparseState,
    reg: Reg,
    hint: &SubscriptHint,
) -> Result<BTreeMap<Bits, bool>, Error> {
    state
        .values_of(reg)?
        .into_iter()
        .map(|v| {
            let s = hint.subscript(oracle, &v).ok_or(Error::Undecryptable)?;
            Ok((v, s))
        })
        .collect()
}

impl HonestServer {
    pub fn new(seed: u64) -> Self {
        HonestServer {
            mem: ServerMemory::new(),
            rng: Rng::from_seed(crate::rng::derive_seed(seed, b"server", 0)),
            next_scratch: 0,
            hints: BTreeMap::new(),
        }
    }

    pub fn memory_mut(&mut self) -> &mut ServerMemory {
        &mut self.mem
    }

    pub fn rng(&mut self) -> &mut Rng {
        &mut self.rng
    }

    /// Reseeds the measurement stream, e.g. per shot of a replayed run.
    pub fn reseed(&mut self, seed: u64, index: u64) {
        self.rng = crate::rng::indexed_stream(seed, b"server", index);
    }

    fn scratch(&mut self) -> Reg {
        self.next_scratch += 1;
        Reg(SCRATCH_BASE + self.next_scratch)
    }

    pub fn pad_hadamard(&mut self, oracle: &mut Oracle, reg: Reg, pad: &Bits, out_len: usize) -> Result<Bits, Error> {
        let h = self.scratch();
        let joined = self.scratch();
        self.mem.insert_basis(h, Bits::zeros(out_len))?;
        oracle.charge(Party::Server, 1)?;
        let o = &*oracle;
        let rng = &mut self.rng;
        self.mem.with(&[reg, h], |s| {
            let px = s.position(reg)?;
            let ph = s.position(h)?;
            s.xor_into(ph, |v| o.eval(&pad.concat(&v[px]), out_len))?;
            s.merge_registers(&[reg, h], joined)?;
            s.measure_hadamard(joined, rng)
        })
    }

    pub fn basis_test(&mut self, oracle: &mut Oracle, reg: Reg, table: &LookupTable) -> Result<Bits, Error> {
        let out = self.scratch();
        self.mem.insert_basis(out, Bits::zeros(table.payload_len))?;
        let rng = &mut self.rng;
        let r = self.mem.with(&[reg, out], |s| {
            lt_eval_coherent(oracle, Party::Server, s, &[reg], &[out], table)?;
            let r = s.measure_computational(out, rng)?;
            lt_eval_coherent(oracle, Party::Server, s, &[reg], &[out], table)?;
            Ok(r)
        })?;
        self.mem.discard(out)?;
        Ok(r)
    }

    fn robust_tables(&mut self, oracle: &mut Oracle, help: Reg, entries: &[RobustEntry]) -> Result<(), Error> {
        for e in entries {
            self.mem.insert(SparseState::gadget(e.k2_reg, &e.k2))?;
            self.mem
                .insert_basis(e.out, Bits::zeros(e.table.forward.payload_len))?;
            self.mem.with(&[help, e.k2_reg, e.k3, e.out], |s| {
                lt_eval_coherent(oracle, Party::Server, s, &[help, e.k2_reg, e.k3], &[e.out], &e.table.forward)?;
                lt_eval_coherent(oracle, Party::Server, s, &[help, e.out], &[e.k2_reg, e.k3], &e.table.backward)
            })?;
            self.mem.discard(e.k2_reg)?;
            self.mem.discard(e.k3)?;
        }
        Ok(())
    }

    fn reveal(&mut self, entries: &[Reveal]) -> Result<(), Error> {
        for e in entries {
            let inv = e.perm.inverse();
            self.mem.with(&[e.out], |s| {
                s.apply_permutation(e.out, &inv)?;
                s.split_register(e.out, &e.parts)
            })?;
        }
        Ok(())
    }

    fn combine_measure(
        &mut self,
        oracle: &mut Oracle,
        a: Reg,
        b: Reg,
        hint_a: &SubscriptHint,
        hint_b: &SubscriptHint,
    ) -> Result<bool, Error> {
        oracle.charge(Party::Server, hint_a.cost() + hint_b.cost())?;
        let o = &*oracle;
        let rng = &mut self.rng;
        let bit = self.mem.with(&[a, b], |s| {
            let sa = subscripts(o, s, a, hint_a)?;
            let sb = subscripts(o, s, b, hint_b)?;
            let (pa, pb) = (s.position(a)?, s.position(b)?);
            s.measure_predicate(rng, |v| sa[&v[pa]] ^ sb[&v[pb]])
        })?;
        self.hints.insert(a, hint_a.clone());
        Ok(bit)
    }

    fn combine_merge(&mut self, oracle: &mut Oracle, a: Reg, b: Reg, out: Reg, pads: &(Bits, Bits)) -> Result<(), Error> {
        if pads.0.is_empty() {
            return self.mem.with(&[a, b], |s| s.merge_registers(&[a, b], out));
        }
        let hint = self.hints.remove(&a).ok_or(Error::Malformed("combine merge before measure"))?;
        oracle.charge(Party::Server, hint.cost())?;
        let p = self.scratch();
        self.mem.insert_basis(p, Bits::zeros(pads.0.len()))?;
        let o = &*oracle;
        self.mem.with(&[p, a, b], |s| {
            let sa = subscripts(o, s, a, &hint)?;
            let pa = s.position(a)?;
            let pp = s.position(p)?;
            s.xor_into(pp, |v| if sa[&v[pa]] { pads.1.clone() } else { pads.0.clone() })?;
            s.merge_registers(&[p, a, b], out)
        })
    }

    fn refresh_tables(&mut self, oracle: &mut Oracle, r: Reg, entries: &[(Reg, LookupTable)]) -> Result<(), Error> {
        for (x, table) in entries {
            let y = self.scratch();
            self.mem.insert_basis(y, Bits::zeros(table.payload_len))?;
            self.mem.with(&[*x, r, y], |s| {
                lt_eval_coherent(oracle, Party::Server, s, &[*x, r], &[y], table)?;
                s.merge_registers(&[*x, y], *x)
            })?;
        }
        Ok(())
    }

    fn refresh_pads(&mut self, entries: &[(Reg, Bits)]) -> Result<(), Error> {
        for (x, pad) in entries {
            let p = self.scratch();
            self.mem.with(&[*x], |s| {
                s.add_register(p, pad.clone())?;
                s.merge_registers(&[p, *x], *x)
            })?;
        }
        Ok(())
    }

    fn phase_qubit(
        &mut self,
        oracle: &mut Oracle,
        reg: Reg,
        qubit: Reg,
        hint: &SubscriptHint,
        table: &PhaseTable,
    ) -> Result<Bits, Error> {
        oracle.charge(Party::Server, hint.cost())?;
        self.mem.insert_basis(qubit, Bits::zeros(1))?;
        let scratch = self.scratch();
        let rng = &mut self.rng;
        self.mem.with(&[reg, qubit], |s| {
            let sub = subscripts(oracle, s, reg, hint)?;
            let (pr, pq) = (s.position(reg)?, s.position(qubit)?);
            s.xor_into(pq, |v| Bits::from_bools(&[sub[&v[pr]]]))?;
            phase_eval(oracle, Party::Server, s, reg, table, scratch)?;
            s.measure_hadamard(reg, rng)
        })
    }

    fn measure_angle(&mut self, reg: Reg, next: Option<Reg>, octant: u8) -> Result<bool, Error> {
        if let Some(n) = next {
            self.mem.with(&[reg, n], |s| {
                let (pa, pb) = (s.position(reg)?, s.position(n)?);
                s.apply_branch_phase(|v| {
                    if v[pa].get(0) && v[pb].get(0) {
                        core::f64::consts::PI
                    } else {
                        0.0
                    }
                });
                Ok(())
            })?;
        }
        let delta = core::f64::consts::FRAC_PI_4 * (octant % 8) as f64;
        let rng = &mut self.rng;
        let d = self.mem.with(&[reg], |s| {
            s.apply_phase(reg, |v| if v.get(0) { -delta } else { 0.0 })?;
            s.measure_hadamard(reg, rng)
        })?;
        Ok(d.get(0))
    }
}

impl Server for HonestServer {
    fn receive_quantum(&mut self, states: Vec<SparseState>) -> Result<(), Error> {
        for s in states {
            self.mem.insert(s)?;
        }
        Ok(())
    }

    fn handle(&mut self, oracle: &mut Oracle, msg: &ClientMsg) -> Result<Response, Error> {
        match msg {
            ClientMsg::PadHadamard { reg, pad, out_len } => {
                self.pad_hadamard(oracle, *reg, pad, *out_len).map(Response::Bits)
            }
            ClientMsg::BasisTest { reg, table } => self.basis_test(oracle, *reg, table).map(Response::Bits),
            ClientMsg::RobustTables { help, entries } => {
                self.robust_tables(oracle, *help, entries).map(|_| Response::Ack)
            }
            ClientMsg::RevealPermutations { entries } => self.reveal(entries).map(|_| Response::Ack),
            ClientMsg::CombineMeasure { a, b, hint_a, hint_b } => {
                self.combine_measure(oracle, *a, *b, hint_a, hint_b).map(Response::Bit)
            }
            ClientMsg::CombineMerge { a, b, out, pads } => {
                self.combine_merge(oracle, *a, *b, *out, pads).map(|_| Response::Ack)
            }
            ClientMsg::RefreshTables { r, entries } => {
                self.refresh_tables(oracle, *r, entries).map(|_| Response::Ack)
            }
            ClientMsg::RefreshPads { entries } => self.refresh_pads(entries).map(|_| Response::Ack),
            ClientMsg::Relabel { map } => self.mem.rename(map).map(|_| Response::Ack),
            ClientMsg::Discard { regs } => {
                for r in regs {
                    self.mem.discard(*r)?;
                }
                Ok(Response::Ack)
            }
            ClientMsg::PhaseQubit {
                reg,
                qubit,
                hint,
                table,
            } => self.phase_qubit(oracle, *reg, *qubit, hint, table).map(Response::Bits),
            ClientMsg::MeasureAngle { reg, next, octant } => {
                self.measure_angle(*reg, *next, *octant).map(Response::Bit)
            }
        }
    }

    fn memory(&self) -> &ServerMemory {
        &self.mem
    }
}
