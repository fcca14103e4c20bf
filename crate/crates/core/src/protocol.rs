//! Client state machines for the atomic sub-protocols.
//!
//! A [`Session`] owns the oracle, the client's randomness and the transcript,
//! and drives any [`Server`] through typed messages.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bits::Bits;
use crate::error::Error;
use crate::keys::{combine_keys, KeyPair};
use crate::oracle::{Oracle, Party};
use crate::params::ProtocolParams;
use crate::rng::{stream, sub_seed, Rng};
use crate::server::{ClientMsg, Response, Server, SubscriptHint};
use crate::state::{Reg, SparseState};
use crate::tables::lt_build;
use crate::transcript::{Transcript, Verdict};

/// A server-held gadget as the client tracks it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gadget {
    pub reg: Reg,
    pub keys: KeyPair,
}

impl Gadget {
    pub fn new(reg: Reg, keys: KeyPair) -> Self {
        Gadget { reg, keys }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Failure {
    /// The client rejected the server.
    Reject { stage: String, reason: String },
    /// The run could not continue: bad configuration or an exhausted budget.
    Abort { stage: String, error: Error },
}

impl Failure {
    pub fn stage(&self) -> &str {
        match self {
            Failure::Reject { stage, .. } | Failure::Abort { stage, .. } => stage,
        }
    }

    pub fn verdict(&self) -> Verdict {
        match self {
            Failure::Reject { stage, reason } => Verdict::Fail {
                stage: stage.clone(),
                reason: reason.clone(),
            },
            Failure::Abort { stage, error } => Verdict::Fail {
                stage: stage.clone(),
                reason: alloc::format!("abort: {error}"),
            },
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Gadget counts and query costs of one pipeline stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageReport {
    pub stage: String,
    pub gadgets_in: usize,
    pub gadgets_out: usize,
    pub helpers: usize,
    pub pass: bool,
    pub client_queries: u64,
    pub server_queries: u64,
}

impl StageReport {
    pub const HEADER: &'static str = "stage\tgadgets_in\tgadgets_out\thelpers\tverdict\tclient_queries\tserver_queries";

    pub fn to_line(&self) -> String {
        alloc::format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.stage,
            self.gadgets_in,
            self.gadgets_out,
            self.helpers,
            if self.pass { "pass" } else { "fail" },
            self.client_queries,
            self.server_queries
        )
    }
}

/// First register label handed out by a session.
pub const FIRST_REG: u32 = 1;

pub struct Session<'a> {
    pub oracle: Oracle,
    rng: Rng,
    server: &'a mut dyn Server,
    pub transcript: Transcript,
    pub reports: Vec<StageReport>,
    next_reg: u32,
    stages: Vec<String>,
}

impl<'a> Session<'a> {
    /// A session whose oracle and client randomness derive from `seed`.
    pub fn new(seed: u64, tag_len: usize, server: &'a mut dyn Server) -> Self {
        let oracle = Oracle::new(sub_seed(seed, b"oracle", 0), tag_len);
        Self::with_oracle(oracle, stream(seed, b"client"), server)
    }

    pub fn with_oracle(oracle: Oracle, rng: Rng, server: &'a mut dyn Server) -> Self {
        Session {
            oracle,
            rng,
            server,
            transcript: Transcript::new(),
            reports: Vec::new(),
            next_reg: FIRST_REG,
            stages: Vec::new(),
        }
    }

    pub fn rng(&mut self) -> &mut Rng {
        &mut self.rng
    }

    /// The oracle and the client's randomness, borrowed together for
    /// table builders.
    pub fn oracle_and_rng(&mut self) -> (&mut Oracle, &mut Rng) {
        (&mut self.oracle, &mut self.rng)
    }

    pub fn server(&self) -> &dyn Server {
        &*self.server
    }

    /// Continues register numbering after labels already in use.
    pub fn set_next_reg(&mut self, next: u32) {
        self.next_reg = next;
    }

    pub fn next_reg(&self) -> u32 {
        self.next_reg
    }

    pub fn fresh_reg(&mut self) -> Reg {
        let r = Reg(self.next_reg);
        self.next_reg += 1;
        r
    }

    pub fn stage_path(&self) -> String {
        if self.stages.is_empty() {
            "session".into()
        } else {
            self.stages.join("/")
        }
    }

    /// Runs `f` with `name` pushed on the stage path.
    pub fn stage<T>(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Self) -> Outcome<T>) -> Outcome<T> {
        self.stages.push(name.into());
        let out = f(self);
        self.stages.pop();
        out
    }

    pub fn abort(&self, error: Error) -> Failure {
        Failure::Abort {
            stage: self.stage_path(),
            error,
        }
    }

    pub fn reject(&self, reason: impl Into<String>) -> Failure {
        Failure::Reject {
            stage: self.stage_path(),
            reason: reason.into(),
        }
    }

    /// Lifts a client-side error into an abort at the current stage.
    pub fn ok<T>(&self, r: Result<T, Error>) -> Outcome<T> {
        r.map_err(|e| self.abort(e))
    }

    /// Samples fresh keys, records the quantum message and hands the server
    /// one gadget per key pair.
    pub fn send_gadgets(&mut self, widths: &[usize]) -> Outcome<Vec<Gadget>> {
        let mut out = Vec::with_capacity(widths.len());
        for &w in widths {
            let keys = KeyPair::sample(&mut self.rng, w);
            let keys = self.ok(keys)?;
            let reg = self.fresh_reg();
            out.push(Gadget::new(reg, keys));
        }
        self.send_quantum(&out)?;
        Ok(out)
    }

    pub fn send_quantum(&mut self, gadgets: &[Gadget]) -> Outcome<()> {
        self.transcript
            .quantum(gadgets.iter().map(|g| (g.reg.0, g.keys.width())).collect());
        let states = gadgets.iter().map(|g| SparseState::gadget(g.reg, &g.keys)).collect();
        self.server
            .receive_quantum(states)
            .map_err(|e| self.abort(e))
    }

    pub fn send(&mut self, msg: ClientMsg) -> Outcome<Response> {
        self.transcript.message(Party::Client, msg.kind(), msg.encode());
        match self.server.handle(&mut self.oracle, &msg) {
            Ok(resp) => {
                self.transcript.message(Party::Server, resp.kind(), resp.encode());
                Ok(resp)
            }
            Err(e @ Error::BudgetExceeded { .. }) => Err(self.abort(e)),
            Err(e) => Err(self.reject(alloc::format!("server error: {e}"))),
        }
    }

    fn expect_bits(&self, r: Response) -> Outcome<Bits> {
        match r {
            Response::Bits(b) => Ok(b),
            other => Err(self.reject(alloc::format!("expected bits, got {}", other.kind()))),
        }
    }

    fn expect_bit(&self, r: Response) -> Outcome<bool> {
        match r {
            Response::Bit(b) => Ok(b),
            other => Err(self.reject(alloc::format!("expected a bit, got {}", other.kind()))),
        }
    }

    fn expect_ack(&self, r: Response) -> Outcome<()> {
        match r {
            Response::Ack => Ok(()),
            other => Err(self.reject(alloc::format!("expected ack, got {}", other.kind()))),
        }
    }

    pub fn send_ack(&mut self, msg: ClientMsg) -> Outcome<()> {
        let r = self.send(msg)?;
        self.expect_ack(r)
    }

    pub fn send_bits(&mut self, msg: ClientMsg) -> Outcome<Bits> {
        let r = self.send(msg)?;
        self.expect_bits(r)
    }

    pub fn send_bit(&mut self, msg: ClientMsg) -> Outcome<bool> {
        let r = self.send(msg)?;
        self.expect_bit(r)
    }

    /// Records the verdict of `result` in the transcript.
    pub fn finish<T>(&mut self, result: &Outcome<T>) {
        let v = match result {
            Ok(_) => Verdict::Pass,
            Err(f) => f.verdict(),
        };
        let _ = self.transcript.set_verdict(v);
    }

    /// Appends a stage report with query counts since `start`.
    pub fn report(&mut self, start: &crate::oracle::QueryCounts, name: &str, counts: (usize, usize, usize), pass: bool) {
        let now = self.oracle.counts().clone();
        let stage = if self.stages.is_empty() {
            name.to_string()
        } else {
            alloc::format!("{}/{}", self.stage_path(), name)
        };
        self.reports.push(StageReport {
            stage,
            gadgets_in: counts.0,
            gadgets_out: counts.1,
            helpers: counts.2,
            pass,
            client_queries: now.client - start.client,
            server_queries: now.server - start.server,
        });
    }
}

/// Padded Hadamard test on gadget `g`; consumes it on an honest server.
pub fn pad_hadamard(s: &mut Session<'_>, g: &Gadget, p: &ProtocolParams) -> Outcome<()> {
    s.stage("pad_hadamard", |s| {
        let pad = Bits::random(s.rng(), p.pad_len);
        let d = s.send_bits(ClientMsg::PadHadamard {
            reg: g.reg,
            pad: pad.clone(),
            out_len: p.kappa_out,
        })?;
        let w = g.keys.width();
        if d.len() != w + p.kappa_out {
            return Err(s.reject("malformed d length"));
        }
        let h0 = s.oracle.query(Party::Client, &pad.concat(&g.keys.x0), p.kappa_out);
        let h0 = s.ok(h0)?;
        let h1 = s.oracle.query(Party::Client, &pad.concat(&g.keys.x1), p.kappa_out);
        let h1 = s.ok(h1)?;
        if d.slice(w, w + p.kappa_out).is_zero() {
            return Err(s.reject("d has an all-zero tail"));
        }
        if d.dot(&g.keys.x0.concat(&h0)) != d.dot(&g.keys.x1.concat(&h1)) {
            return Err(s.reject("parity check failed"));
        }
        Ok(())
    })
}

/// One basis-test round: the server must return the string both keys map to.
pub fn basis_test_single(s: &mut Session<'_>, g: &Gadget, p: &ProtocolParams) -> Outcome<()> {
    s.stage("basis_test", |s| {
        let r = Bits::random(s.rng(), p.kappa_out);
        let mapping = [(g.keys.x0.clone(), r.clone()), (g.keys.x1.clone(), r.clone())];
        let table = lt_build(&mut s.oracle, &mapping, p.pad_len, p.kappa_out, &mut s.rng);
        let table = s.ok(table)?;
        let got = s.send_bits(ClientMsg::BasisTest { reg: g.reg, table })?;
        if got != r {
            return Err(s.reject("wrong basis-test string"));
        }
        Ok(())
    })
}

/// `rounds` independent basis tests, stopping at the first failure.
pub fn basis_test_multi(s: &mut Session<'_>, g: &Gadget, rounds: usize, p: &ProtocolParams) -> Outcome<()> {
    for t in 0..rounds {
        s.stage(alloc::format!("round{t}"), |s| basis_test_single(s, g, p))?;
    }
    Ok(())
}

/// Multi-round test on `k3`, then a single test on `k1`.
pub fn basis_test_two(s: &mut Session<'_>, k1: &Gadget, k3: &Gadget, p: &ProtocolParams) -> Outcome<()> {
    basis_test_multi(s, k3, p.test_rounds, p)?;
    basis_test_single(s, k1, p)
}

/// Measures the XOR of the two gadgets' subscripts and concatenates them
/// into one gadget under `out`. The improved variant hides subscripts
/// behind padded hashes and prefixes fresh pads to the result.
pub fn combine(
    s: &mut Session<'_>,
    a: &Gadget,
    b: &Gadget,
    out: Reg,
    improved: bool,
    p: &ProtocolParams,
) -> Outcome<Gadget> {
    s.stage(if improved { "combine_improved" } else { "combine" }, |s| {
        let (hint_a, hint_b) = if improved {
            let ha = SubscriptHint::padded(&mut s.oracle, &a.keys, p.pad_len, p.kappa_out, &mut s.rng);
            let ha = s.ok(ha)?;
            let hb = SubscriptHint::padded(&mut s.oracle, &b.keys, p.pad_len, p.kappa_out, &mut s.rng);
            (ha, s.ok(hb)?)
        } else {
            let ha = SubscriptHint::tags(&mut s.oracle, &a.keys);
            let ha = s.ok(ha)?;
            let hb = SubscriptHint::tags(&mut s.oracle, &b.keys);
            (ha, s.ok(hb)?)
        };
        let outcome = s.send_bit(ClientMsg::CombineMeasure {
            a: a.reg,
            b: b.reg,
            hint_a,
            hint_b,
        })?;
        let pads = if improved {
            (Bits::random(s.rng(), p.pad_len), Bits::random(s.rng(), p.pad_len))
        } else {
            (Bits::empty(), Bits::empty())
        };
        s.send_ack(ClientMsg::CombineMerge {
            a: a.reg,
            b: b.reg,
            out,
            pads: pads.clone(),
        })?;
        let keys = s.ok(combine_keys(&a.keys, &b.keys, outcome, (&pads.0, &pads.1)))?;
        Ok(Gadget::new(out, keys))
    })
}
