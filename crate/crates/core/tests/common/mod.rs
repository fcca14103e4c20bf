//! Property checks shared by the proptest suites and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subqc_core::adversary::{run_with_adversary, HarnessConfig, MeasureAndRandomD, ProtocolId};
use subqc_core::params::ProtocolParams;
use subqc_core::protocol::{basis_test_single, Session};
use subqc_core::server::HonestServer;
use subqc_core::tables::{dec_row, enc, lt_build, revlt_build};
use subqc_core::{BitPermutation, Bits, Error, KeyPair, Oracle, Party, Reg, Server, ServerMemory, SparseState};

pub type Result = core::result::Result<(), TestCaseError>;

/// Fixed-seed proptest configuration so suites replay identically.
pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(x: f64) -> Result {
    prop_assert!((x - 1.0).abs() < 1e-9, "norm {x}");
    Ok(())
}

/// Applies a random sequence of state operations to a two-gadget state,
/// checking the norm after each one.
pub fn normalization_after_ops(seed: u64, ops: &[u8]) -> Result {
    let mut r = rng(seed);
    let oracle = Oracle::new(seed, 16);
    let w = r.gen_range(1..=5);
    let k1 = KeyPair::sample(&mut r, w).unwrap();
    let k2 = KeyPair::sample(&mut r, w).unwrap();
    let mut s = SparseState::gadget(Reg(1), &k1).tensor(&SparseState::gadget(Reg(2), &k2)).unwrap();
    let mut next = 3u32;
    unit(s.norm_sqr())?;
    for &op in ops {
        let regs: Vec<(Reg, usize)> = s.registers().to_vec();
        let (reg, width) = regs[r.gen_range(0..regs.len())];
        match op % 8 {
            0 => {
                let m = r.gen_range(1..=4);
                let out = Reg(next);
                next += 1;
                s.add_register(out, Bits::zeros(m)).unwrap();
                let (pi, po) = (s.position(reg).unwrap(), s.position(out).unwrap());
                s.xor_into(po, |v| oracle.eval(&v[pi], m)).unwrap();
            }
            1 => {
                let perm = BitPermutation::random(&mut r, width);
                s.apply_permutation(reg, &perm).unwrap();
            }
            2 => {
                let c: f64 = r.gen();
                s.apply_phase(reg, |v| c * v.count_ones() as f64).unwrap();
            }
            3 => {
                s.measure_computational(reg, &mut r).unwrap();
            }
            4 if regs.len() > 1 => {
                s.measure_hadamard(reg, &mut r).unwrap();
            }
            5 => {
                let p = s.position(reg).unwrap();
                s.measure_predicate(&mut r, |v| v[p].get(0)).unwrap();
            }
            6 => {
                let k = KeyPair::sample(&mut r, w).unwrap();
                s = s.tensor(&SparseState::gadget(Reg(next), &k)).unwrap();
                next += 1;
            }
            _ if regs.len() > 1 => {
                let (other, ow) = regs[(regs.iter().position(|x| x.0 == reg).unwrap() + 1) % regs.len()];
                let joined = Reg(next);
                next += 1;
                s.merge_registers(&[reg, other], joined).unwrap();
                s.split_register(joined, &[(reg, width), (other, ow)]).unwrap();
            }
            _ => {}
        }
        unit(s.norm_sqr())?;
    }
    Ok(())
}

/// An honest basis test returns the client's string and leaves the gadget
/// untouched.
pub fn basis_test_non_collapsing(seed: u64, width: usize, kappa_out: usize) -> Result {
    let p = ProtocolParams {
        pad_len: 12,
        kappa_out,
        test_rounds: 1,
    };
    let mut server = HonestServer::new(seed);
    let mut s = Session::new(seed, 32, &mut server);
    let g = s.send_gadgets(&[width]).unwrap();
    let before = s.server().memory().gadget_fidelity(&[(g[0].reg, &g[0].keys)]).unwrap();
    unit(before)?;
    let out = basis_test_single(&mut s, &g[0], &p);
    prop_assert!(out.is_ok(), "{:?}", out);
    unit(s.server().memory().gadget_fidelity(&[(g[0].reg, &g[0].keys)]).unwrap())?;
    prop_assert_eq!(s.server().memory().registers().len(), 1);
    Ok(())
}

/// Enc, LT and RevLT decrypt what was encrypted, and only for the right key.
pub fn table_round_trips(seed: u64, width: usize, payload: usize, rows: usize) -> Result {
    let mut r = rng(seed);
    let mut oracle = Oracle::new(seed ^ 0x5eed, 32);
    let key = Bits::random(&mut r, width);
    let msg = Bits::random(&mut r, payload);
    let row = enc(&mut oracle, &key, &msg, 16, 32, &mut r).unwrap();
    prop_assert_eq!(dec_row(&mut oracle, Party::Client, &row, &key).unwrap(), msg.clone());
    let mut wrong = key.clone();
    wrong.set(0, !wrong.get(0));
    prop_assert!(matches!(dec_row(&mut oracle, Party::Client, &row, &wrong), Err(Error::TagMismatch)));

    let mut keys: Vec<Bits> = Vec::new();
    while keys.len() < rows {
        let k = Bits::random(&mut r, width + 6);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mapping: Vec<(Bits, Bits)> = keys.iter().map(|k| (k.clone(), Bits::random(&mut r, payload))).collect();
    let lt = lt_build(&mut oracle, &mapping, 16, 32, &mut r).unwrap();
    for (k, v) in &mapping {
        prop_assert_eq!(&lt.lookup(&mut oracle, Party::Server, k).unwrap(), v);
    }

    let mut outs: Vec<Bits> = Vec::new();
    while outs.len() < rows {
        let y = Bits::random(&mut r, width + 7);
        if !outs.contains(&y) {
            outs.push(y);
        }
    }
    let pairs: Vec<(Bits, Bits)> = keys.iter().cloned().zip(outs.iter().cloned()).collect();
    let rev = revlt_build(&mut oracle, &pairs, 16, &mut r).unwrap();
    for (x, y) in &pairs {
        prop_assert_eq!(&rev.forward.lookup(&mut oracle, Party::Server, x).unwrap(), y);
        prop_assert_eq!(&rev.backward.lookup(&mut oracle, Party::Server, y).unwrap(), x);
    }
    Ok(())
}

/// An honest server's padded Hadamard answer satisfies the parity check
/// for every pad.
pub fn hadamard_parity(seed: u64, width: usize, out_len: usize) -> Result {
    let mut r = rng(seed);
    let mut oracle = Oracle::new(seed, 32);
    let keys = KeyPair::sample(&mut r, width).unwrap();
    let pad = Bits::random(&mut r, 12);
    let mut server = HonestServer::new(seed);
    server.receive_quantum(vec![SparseState::gadget(Reg(1), &keys)]).unwrap();
    let d = server.pad_hadamard(&mut oracle, Reg(1), &pad, out_len).unwrap();
    let h0 = oracle.eval(&pad.concat(&keys.x0), out_len);
    let h1 = oracle.eval(&pad.concat(&keys.x1), out_len);
    prop_assert_eq!(d.len(), width + out_len);
    prop_assert_eq!(d.dot(&keys.x0.concat(&h0)), d.dot(&keys.x1.concat(&h1)));
    let mem: &ServerMemory = server.memory();
    prop_assert!(mem.registers().is_empty());
    Ok(())
}

/// The same seed replays to a byte-identical transcript, honest or not.
pub fn seed_replay(seed: u64, protocol: usize) -> Result {
    let id = ProtocolId::ALL[protocol % ProtocolId::ALL.len()];
    let cfg = HarnessConfig {
        params: ProtocolParams {
            pad_len: 10,
            kappa_out: 8,
            test_rounds: 1,
        },
        width: 4,
        n: 2,
        ..HarnessConfig::default()
    };
    let honest = |s| run_with_adversary(id, &mut HonestServer::new(s), &cfg, s).transcript.to_lines();
    let a = honest(seed);
    prop_assert_eq!(&a, &honest(seed));
    prop_assert_ne!(&a, &honest(seed.wrapping_add(1)));
    let cheat = |s| run_with_adversary(id, &mut MeasureAndRandomD::new(s), &cfg, s).transcript.to_lines();
    prop_assert_eq!(cheat(seed), cheat(seed));
    Ok(())
}
