//! Remote gadget preparation, from the single robust expansion up to the
//! full multi-round pipeline.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::bits::{BitPermutation, Bits};
use crate::keys::{extend_keys_refresh, flatten, permute_blocks, KeyPair};
use crate::params::{PipelineConfig, ProtocolParams, RoundPlan};
use crate::protocol::{basis_test_two, combine, pad_hadamard, Gadget, Outcome, Session};
use crate::server::{ClientMsg, Reveal, RobustEntry};
use crate::state::Reg;
use crate::tables::{lt_build, robust_rlt_build, RobustKeys};

pub use crate::protocol::StageReport;

/// Runs `f` as stage `name` and appends its report. `counts` maps the
/// stage's output to (gadgets in, gadgets out, helpers consumed).
fn reported<T>(
    s: &mut Session<'_>,
    name: &'static str,
    counts: impl Fn(&T) -> (usize, usize, usize),
    f: impl FnOnce(&mut Session<'_>) -> Outcome<T>,
) -> Outcome<T> {
    let start = s.oracle.counts().clone();
    let out = s.stage(name, f);
    match &out {
        Ok(v) => s.report(&start, name, counts(v), true),
        Err(_) => s.report(&start, name, (0, 0, 0), false),
    }
    out
}

/// Robust expansion of each `k3` into two fresh gadgets, all sharing the
/// helper, which is consumed by one padded Hadamard test. Output order per
/// input is the `K3`-derived gadget, then the `K2`-derived one.
fn robust_expand(s: &mut Session<'_>, help: &Gadget, k3s: &[Gadget], p: &ProtocolParams) -> Outcome<Vec<Gadget>> {
    let mut entries = Vec::with_capacity(k3s.len());
    let mut secrets = Vec::with_capacity(k3s.len());
    for k3 in k3s {
        let k2 = KeyPair::sample(s.rng(), k3.keys.width());
        let k2 = s.ok(k2)?;
        let out2 = KeyPair::sample(s.rng(), p.kappa_out);
        let out2 = s.ok(out2)?;
        let out3 = KeyPair::sample(s.rng(), p.kappa_out);
        let out3 = s.ok(out3)?;
        let perm = BitPermutation::random(s.rng(), 2 * p.kappa_out);
        let keys = RobustKeys {
            help: &help.keys,
            k2: &k2,
            k3: &k3.keys,
            out2: &out2,
            out3: &out3,
        };
        let (oracle, rng) = s.oracle_and_rng();
        let table = robust_rlt_build(oracle, &keys, &perm, p.pad_len, rng);
        let table = s.ok(table)?;
        let (k2_reg, out) = (s.fresh_reg(), s.fresh_reg());
        entries.push(RobustEntry {
            k3: k3.reg,
            k2_reg,
            k2,
            out,
            table,
        });
        secrets.push((out, perm, out2, out3));
    }
    s.send_ack(ClientMsg::RobustTables {
        help: help.reg,
        entries,
    })?;
    pad_hadamard(s, help, p)?;
    let mut reveals = Vec::with_capacity(secrets.len());
    let mut gadgets = Vec::with_capacity(2 * secrets.len());
    for (out, perm, out2, out3) in secrets {
        let (r2, r3) = (s.fresh_reg(), s.fresh_reg());
        reveals.push(Reveal {
            out,
            perm,
            parts: [(r2, p.kappa_out), (r3, p.kappa_out)],
        });
        gadgets.push(Gadget::new(r3, out3));
        gadgets.push(Gadget::new(r2, out2));
    }
    s.send_ack(ClientMsg::RevealPermutations { entries: reveals })?;
    Ok(gadgets)
}

/// Two gadgets in (helper and `k3`), two out.
pub fn gdgprep_basic(s: &mut Session<'_>, help: &Gadget, k3: &Gadget, p: &ProtocolParams) -> Outcome<Vec<Gadget>> {
    reported(s, "basic", |_| (2, 2, 1), |s| robust_expand(s, help, core::slice::from_ref(k3), p))
}

/// Basis tests on both inputs, then the basic expansion.
pub fn gdgprep_1p1(s: &mut Session<'_>, help: &Gadget, k3: &Gadget, p: &ProtocolParams) -> Outcome<Vec<Gadget>> {
    reported(s, "1p1", |_| (2, 2, 1), |s| {
        basis_test_two(s, help, k3, p)?;
        robust_expand(s, help, core::slice::from_ref(k3), p)
    })
}

/// `1 + n` gadgets in, `2n` out, one helper shared by all expansions.
pub fn gdgprep_1pn(s: &mut Session<'_>, help: &Gadget, k3s: &[Gadget], p: &ProtocolParams) -> Outcome<Vec<Gadget>> {
    let n = k3s.len();
    reported(s, "1pn", |_| (1 + n, 2 * n, 1), |s| {
        for (i, k3) in k3s.iter().enumerate() {
            s.stage(alloc::format!("test{i}"), |s| basis_test_two(s, help, k3, p))?;
        }
        robust_expand(s, help, k3s, p)
    })
}

/// `R + 1` gadgets in, `2^R` out: `R` doubling rounds of the `1 + n`
/// expansion, each with its own helper.
pub fn gdgprep_logk(s: &mut Session<'_>, helpers: &[Gadget], k2: &Gadget, p: &ProtocolParams) -> Outcome<Vec<Gadget>> {
    let r = helpers.len();
    reported(s, "logk", |_| (r + 1, 1 << r, r), |s| {
        let mut keys = alloc::vec![k2.clone()];
        for (t, h) in helpers.iter().enumerate() {
            keys = s.stage(alloc::format!("round{t}"), |s| gdgprep_1pn(s, h, &keys, p))?;
        }
        Ok(keys)
    })
}

/// One expansion block: its helpers and the gadget it expands.
#[derive(Clone, Debug)]
pub struct Block {
    pub helpers: Vec<Gadget>,
    pub seed: Gadget,
}

/// `M (R + 1)` gadgets in, `M 2^R` out. Blocks run independently, then the
/// client shuffles the output blocks and relabels them in the new order.
pub fn gdgprep_repeat(s: &mut Session<'_>, blocks: &[Block], p: &ProtocolParams) -> Outcome<Vec<Gadget>> {
    let m = blocks.len();
    let r = blocks.first().map_or(0, |b| b.helpers.len());
    reported(s, "repeat", |_| (m * (r + 1), m << r, m * r), |s| {
        if blocks.iter().any(|b| b.helpers.len() != r) {
            return Err(s.abort(crate::Error::Config("blocks differ in helper count".into())));
        }
        let mut outs = Vec::with_capacity(m);
        for (i, b) in blocks.iter().enumerate() {
            outs.push(s.stage(alloc::format!("block{i}"), |s| gdgprep_logk(s, &b.helpers, &b.seed, p))?);
        }
        let mut perm: Vec<usize> = (0..m).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), s.rng());
        let permuted = s.ok(permute_blocks(&outs, &perm))?;
        let flat = flatten(&permuted);
        let renamed: Vec<Gadget> = flat.iter().map(|g| Gadget::new(s.fresh_reg(), g.keys.clone())).collect();
        let map = flat.iter().zip(&renamed).map(|(a, b)| (a.reg, b.reg)).collect();
        s.send_ack(ClientMsg::Relabel { map })?;
        Ok(renamed)
    })
}

/// `N + J` gadgets in, `N` out. Each round extends every key by a fresh
/// key chosen by a table that also reads the round's helper, whose gadget
/// is then consumed by a padded Hadamard test. Final pads are prepended.
pub fn security_refreshing(
    s: &mut Session<'_>,
    keys: &[Gadget],
    lambdas: &[Gadget],
    p: &ProtocolParams,
) -> Outcome<Vec<Gadget>> {
    let (n, j) = (keys.len(), lambdas.len());
    reported(s, "refresh", |_| (n + j, n, j), |s| {
        let mut current: Vec<Gadget> = keys.to_vec();
        let mut extensions: Vec<Vec<KeyPair>> = alloc::vec![Vec::new(); n];
        for (round, lambda) in lambdas.iter().enumerate() {
            s.stage(alloc::format!("round{round}"), |s| {
                let mut entries = Vec::with_capacity(n);
                for (i, g) in current.iter().enumerate() {
                    let y = KeyPair::sample(s.rng(), p.kappa_out);
                    let y = s.ok(y)?;
                    let mut mapping = Vec::with_capacity(4);
                    for b in [false, true] {
                        for b2 in [false, true] {
                            mapping.push((g.keys.get(b).concat(lambda.keys.get(b2)), y.get(b).clone()));
                        }
                    }
                    let (oracle, rng) = s.oracle_and_rng();
                    let table = lt_build(oracle, &mapping, p.pad_len, p.kappa_out, rng);
                    entries.push((g.reg, s.ok(table)?));
                    extensions[i].push(y);
                }
                s.send_ack(ClientMsg::RefreshTables { r: lambda.reg, entries })?;
                for (g, ext) in current.iter_mut().zip(&extensions) {
                    let y = ext.last().expect("extended this round");
                    g.keys = KeyPair {
                        x0: g.keys.x0.concat(&y.x0),
                        x1: g.keys.x1.concat(&y.x1),
                    };
                }
                pad_hadamard(s, lambda, p)
            })?;
        }
        let pads: Vec<Bits> = (0..n).map(|_| Bits::random(s.rng(), p.pad_len)).collect();
        s.send_ack(ClientMsg::RefreshPads {
            entries: keys.iter().map(|g| g.reg).zip(pads.iter().cloned()).collect(),
        })?;
        let mut out = Vec::with_capacity(n);
        for ((g, ext), pad) in keys.iter().zip(&extensions).zip(&pads) {
            let k = s.ok(extend_keys_refresh(&g.keys, ext, pad))?;
            out.push(Gadget::new(g.reg, k));
        }
        Ok(out)
    })
}

/// Helper gadgets from the initial quantum message, handed out in order.
#[derive(Clone, Debug, Default)]
pub struct HelperPool {
    pool: VecDeque<Gadget>,
}

impl HelperPool {
    pub fn new(gadgets: Vec<Gadget>) -> Self {
        HelperPool { pool: gadgets.into() }
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn take(&mut self, s: &Session<'_>, n: usize) -> Outcome<Vec<Gadget>> {
        if self.pool.len() < n {
            return Err(s.abort(crate::Error::Config("helper pool exhausted".into())));
        }
        Ok(self.pool.drain(..n).collect())
    }
}

/// One round of the pipeline: the running gadgets split into
/// `sub_rounds` groups; each group seeds a repeat expansion that is
/// refreshed and then combined position by position into the accumulated
/// output (the first group is taken as is).
pub fn gdgprep_oneround(
    s: &mut Session<'_>,
    running: &[Gadget],
    pool: &mut HelperPool,
    cfg: &PipelineConfig,
    plan: &RoundPlan,
) -> Outcome<Vec<Gadget>> {
    let p = plan.params;
    let (m, r, j, sub) = (plan.blocks, cfg.doublings, cfg.refresh_rounds, cfg.sub_rounds);
    let helpers = sub * (m * r + j);
    reported(s, "oneround", |_| (running.len() + helpers, m << r, helpers), |s| {
        if running.len() != m * sub {
            return Err(s.abort(crate::Error::Config("running gadgets do not match the round plan".into())));
        }
        let mut acc: Option<Vec<Gadget>> = None;
        for t in 0..sub {
            let group = &running[t * m..(t + 1) * m];
            let fresh = s.stage(alloc::format!("sub{t}"), |s| {
                let mut blocks = Vec::with_capacity(m);
                for g in group {
                    blocks.push(Block {
                        helpers: pool.take(s, r)?,
                        seed: g.clone(),
                    });
                }
                let expanded = gdgprep_repeat(s, &blocks, &p)?;
                let lambdas = pool.take(s, j)?;
                let refreshed = security_refreshing(s, &expanded, &lambdas, &p)?;
                match acc.take() {
                    None => Ok(refreshed),
                    Some(prev) => {
                        let mut out = Vec::with_capacity(prev.len());
                        for (a, b) in prev.iter().zip(&refreshed) {
                            let reg = s.fresh_reg();
                            out.push(combine(s, a, b, reg, true, &p)?);
                        }
                        Ok(out)
                    }
                }
            })?;
            acc = Some(fresh);
        }
        Ok(acc.unwrap_or_default())
    })
}

/// The full pipeline: one quantum message with the running gadgets and
/// every helper, then rounds of one-round expansion and refreshing until
/// the target count is reached; extra gadgets are discarded.
pub fn gdgprep_full(s: &mut Session<'_>, cfg: &PipelineConfig) -> Outcome<Vec<Gadget>> {
    s.ok(cfg.validate())?;
    let plan = s.ok(cfg.plan())?;
    let total_helpers = s.ok(cfg.total_helpers())?;
    reported(
        s,
        "full",
        |_| (cfg.n_initial + total_helpers, cfg.l_target, total_helpers),
        |s| {
            let widths = alloc::vec![cfg.key_width; cfg.n_initial + total_helpers];
            let all = s.send_gadgets(&widths)?;
            let mut running = all[..cfg.n_initial].to_vec();
            let mut pool = HelperPool::new(all[cfg.n_initial..].to_vec());
            for rp in &plan {
                running = s.stage(alloc::format!("round{}", rp.round), |s| {
                    let out = gdgprep_oneround(s, &running, &mut pool, cfg, rp)?;
                    let lambdas = pool.take(s, cfg.refresh_rounds)?;
                    security_refreshing(s, &out, &lambdas, &rp.params)
                })?;
            }
            if running.len() > cfg.l_target {
                let extra: Vec<Reg> = running[cfg.l_target..].iter().map(|g| g.reg).collect();
                s.send_ack(ClientMsg::Discard { regs: extra })?;
                running.truncate(cfg.l_target);
            }
            Ok(running)
        },
    )
}
