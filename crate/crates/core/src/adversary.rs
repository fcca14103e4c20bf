//! Adversarial servers, a protocol runner that accepts any of them, Monte
//! Carlo estimation of break and pass probabilities, and the classical
//! table-slicing attack against robust tables without the bit permutation.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{RngCore, SeedableRng};

use crate::bits::{BitPermutation, Bits};
use crate::error::Error;
use crate::gadget_prep::{
    gdgprep_1p1, gdgprep_1pn, gdgprep_basic, gdgprep_full, gdgprep_logk, gdgprep_oneround, gdgprep_repeat,
    security_refreshing, Block, HelperPool,
};
use crate::keys::KeyPair;
use crate::oracle::{Oracle, Party};
use crate::params::{PipelineConfig, ProtocolParams};
use crate::protocol::{basis_test_multi, combine, pad_hadamard, Gadget, Outcome, Session, StageReport};
use crate::qfactory::{qfac8, QubitState};
use crate::rng::{indexed_stream, stream, sub_seed, Rng};
use crate::server::{ClientMsg, HonestServer, Response, Server};
use crate::state::{Reg, ServerMemory, SparseState};
use crate::stats::TrialStats;
use crate::tables::{robust_rlt_build, RobustKeys};
use crate::transcript::{Transcript, Verdict};

/// A server that may deviate from the protocol. Its oracle queries go
/// through the shared counted oracle; it never sees client secrets.
pub trait Adversary: Server {
    fn name(&self) -> &'static str;

    /// Claimed secrets at the end of a run, e.g. guessed keys.
    fn guess(&self) -> Vec<Bits> {
        Vec::new()
    }

    /// Server query budget; exceeding it aborts the run.
    fn budget(&self) -> Option<u64> {
        None
    }
}

impl Adversary for HonestServer {
    fn name(&self) -> &'static str {
        "honest"
    }
}

/// Measures every gadget in the computational basis on arrival and answers
/// padded Hadamard tests with a uniformly random `d` with nonzero tail.
/// Other messages are answered honestly on the collapsed state.
#[derive(Clone, Debug)]
pub struct MeasureAndRandomD {
    inner: HonestServer,
    rng: Rng,
    measured: Vec<Bits>,
}

impl MeasureAndRandomD {
    pub fn new(seed: u64) -> Self {
        MeasureAndRandomD {
            inner: HonestServer::new(seed),
            rng: stream(seed, b"adversary"),
            measured: Vec::new(),
        }
    }
}

impl Server for MeasureAndRandomD {
    fn receive_quantum(&mut self, states: Vec<SparseState>) -> Result<(), Error> {
        let regs: Vec<Reg> = states.iter().flat_map(|s| s.registers().iter().map(|r| r.0).collect::<Vec<_>>()).collect();
        self.inner.receive_quantum(states)?;
        for r in regs {
            let x = self.inner.memory_mut().measure_computational(r, &mut self.rng)?;
            self.measured.push(x);
        }
        Ok(())
    }

    fn handle(&mut self, oracle: &mut Oracle, msg: &ClientMsg) -> Result<Response, Error> {
        match msg {
            ClientMsg::PadHadamard { reg, out_len, .. } => {
                let w = self.inner.memory().state_of(&[*reg])?.width(*reg)?;
                self.inner.memory_mut().discard(*reg)?;
                loop {
                    let d = Bits::random(&mut self.rng, w + out_len);
                    if !d.slice(w, w + out_len).is_zero() {
                        return Ok(Response::Bits(d));
                    }
                }
            }
            _ => self.inner.handle(oracle, msg),
        }
    }

    fn memory(&self) -> &ServerMemory {
        self.inner.memory()
    }
}

impl Adversary for MeasureAndRandomD {
    fn name(&self) -> &'static str {
        "measure-and-random-d"
    }

    fn guess(&self) -> Vec<Bits> {
        self.measured.clone()
    }
}

/// Answers every basis test with a uniformly random string without
/// touching its state; honest otherwise.
#[derive(Clone, Debug)]
pub struct RandomBasisGuess {
    inner: HonestServer,
    rng: Rng,
}

impl RandomBasisGuess {
    pub fn new(seed: u64) -> Self {
        RandomBasisGuess {
            inner: HonestServer::new(seed),
            rng: stream(seed, b"adversary"),
        }
    }
}

impl Server for RandomBasisGuess {
    fn receive_quantum(&mut self, states: Vec<SparseState>) -> Result<(), Error> {
        self.inner.receive_quantum(states)
    }

    fn handle(&mut self, oracle: &mut Oracle, msg: &ClientMsg) -> Result<Response, Error> {
        match msg {
            ClientMsg::BasisTest { table, .. } => Ok(Response::Bits(Bits::random(&mut self.rng, table.payload_len))),
            _ => self.inner.handle(oracle, msg),
        }
    }

    fn memory(&self) -> &ServerMemory {
        self.inner.memory()
    }
}

impl Adversary for RandomBasisGuess {
    fn name(&self) -> &'static str {
        "random-basis-guess"
    }
}

/// Honest, plus a blind guess of both keys of the first gadget made
/// without any oracle query.
#[derive(Clone, Debug)]
pub struct ZeroQueryGuesser {
    inner: HonestServer,
    rng: Rng,
    guess: Vec<Bits>,
}

impl ZeroQueryGuesser {
    pub fn new(seed: u64) -> Self {
        ZeroQueryGuesser {
            inner: HonestServer::new(seed),
            rng: stream(seed, b"adversary"),
            guess: Vec::new(),
        }
    }
}

impl Server for ZeroQueryGuesser {
    fn receive_quantum(&mut self, states: Vec<SparseState>) -> Result<(), Error> {
        if self.guess.is_empty() {
            if let Some(first) = states.first() {
                let w = first.registers()[0].1;
                self.guess = alloc::vec![Bits::random(&mut self.rng, w), Bits::random(&mut self.rng, w)];
            }
        }
        self.inner.receive_quantum(states)
    }

    fn handle(&mut self, oracle: &mut Oracle, msg: &ClientMsg) -> Result<Response, Error> {
        self.inner.handle(oracle, msg)
    }

    fn memory(&self) -> &ServerMemory {
        self.inner.memory()
    }
}

impl Adversary for ZeroQueryGuesser {
    fn name(&self) -> &'static str {
        "zero-query-guesser"
    }

    fn guess(&self) -> Vec<Bits> {
        self.guess.clone()
    }
}

/// Spends `extra` oracle queries before answering each message honestly,
/// under a declared budget.
#[derive(Clone, Debug)]
pub struct QueryHog {
    inner: HonestServer,
    extra: u64,
    budget: u64,
}

impl QueryHog {
    pub fn new(seed: u64, extra: u64, budget: u64) -> Self {
        QueryHog {
            inner: HonestServer::new(seed),
            extra,
            budget,
        }
    }
}

impl Server for QueryHog {
    fn receive_quantum(&mut self, states: Vec<SparseState>) -> Result<(), Error> {
        self.inner.receive_quantum(states)
    }

    fn handle(&mut self, oracle: &mut Oracle, msg: &ClientMsg) -> Result<Response, Error> {
        oracle.charge(Party::Server, self.extra)?;
        self.inner.handle(oracle, msg)
    }

    fn memory(&self) -> &ServerMemory {
        self.inner.memory()
    }
}

impl Adversary for QueryHog {
    fn name(&self) -> &'static str {
        "query-hog"
    }

    fn budget(&self) -> Option<u64> {
        Some(self.budget)
    }
}

/// Adversaries selectable by name.
pub fn adversary_by_name(name: &str, seed: u64) -> Result<Box<dyn Adversary>, Error> {
    Ok(match name {
        "honest" => Box::new(HonestServer::new(seed)),
        "measure-and-random-d" => Box::new(MeasureAndRandomD::new(seed)),
        "random-basis-guess" => Box::new(RandomBasisGuess::new(seed)),
        "zero-query-guesser" => Box::new(ZeroQueryGuesser::new(seed)),
        _ => return Err(Error::Config(alloc::format!("unknown adversary `{name}`"))),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolId {
    PadHadamard,
    BasisTest,
    Combine,
    CombineImproved,
    Basic,
    OnePlusOne,
    OnePlusN,
    LogExpansion,
    Repeat,
    Refresh,
    OneRound,
    Full,
    Qfac8,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 13] = [
        ProtocolId::PadHadamard,
        ProtocolId::BasisTest,
        ProtocolId::Combine,
        ProtocolId::CombineImproved,
        ProtocolId::Basic,
        ProtocolId::OnePlusOne,
        ProtocolId::OnePlusN,
        ProtocolId::LogExpansion,
        ProtocolId::Repeat,
        ProtocolId::Refresh,
        ProtocolId::OneRound,
        ProtocolId::Full,
        ProtocolId::Qfac8,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolId::PadHadamard => "pad-hadamard",
            ProtocolId::BasisTest => "basis-test",
            ProtocolId::Combine => "combine",
            ProtocolId::CombineImproved => "combine-improved",
            ProtocolId::Basic => "gdgprep-basic",
            ProtocolId::OnePlusOne => "gdgprep-1p1",
            ProtocolId::OnePlusN => "gdgprep-1pn",
            ProtocolId::LogExpansion => "gdgprep-logk",
            ProtocolId::Repeat => "gdgprep-repeat",
            ProtocolId::Refresh => "refresh",
            ProtocolId::OneRound => "gdgprep-oneround",
            ProtocolId::Full => "gdgprep",
            ProtocolId::Qfac8 => "qfac8",
        }
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ProtocolId::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown protocol `{s}`")))
    }
}

/// Sizes for running a single protocol outside the pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HarnessConfig {
    pub pipeline: PipelineConfig,
    pub params: ProtocolParams,
    /// Key width of the input gadgets.
    pub width: usize,
    /// Number of `K3` gadgets in the `1 + n` expansion and of refreshed gadgets.
    pub n: usize,
    /// Blocks `M` of the repeated expansion.
    pub blocks: usize,
    pub qfac_test_rounds: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            pipeline: PipelineConfig::default(),
            params: ProtocolParams::default(),
            width: 6,
            n: 3,
            blocks: 2,
            qfac_test_rounds: 1,
        }
    }
}

impl HarnessConfig {
    /// Sets one parameter by name. `test_rounds` applies to both the
    /// atomic protocols and the pipeline.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let num = |v: &str| -> Result<usize, Error> {
            v.parse()
                .map_err(|_| Error::Config(alloc::format!("`{key}` expects an integer, got `{v}`")))
        };
        match key {
            "pad_len" => self.params.pad_len = num(value)?,
            "kappa_out" => self.params.kappa_out = num(value)?,
            "test_rounds" => {
                self.params.test_rounds = num(value)?;
                self.pipeline.test_rounds = self.params.test_rounds;
            }
            "width" => self.width = num(value)?,
            "n" => self.n = num(value)?,
            "blocks" => self.blocks = num(value)?,
            "qfac_test_rounds" => self.qfac_test_rounds = num(value)?,
            _ => self.pipeline.set(key, value)?,
        }
        Ok(())
    }

    /// Checks the parameters protocol `id` uses.
    pub fn validate(&self, id: ProtocolId) -> Result<(), Error> {
        self.params.validate()?;
        if self.width == 0 || self.n == 0 || self.blocks == 0 {
            return Err(Error::Config("width, n and blocks must be at least 1".into()));
        }
        match id {
            ProtocolId::OneRound | ProtocolId::Full => self.pipeline.validate(),
            _ => Ok(()),
        }
    }
}

/// Everything a run leaves behind.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub verdict: Verdict,
    pub guess: Vec<Bits>,
    pub transcript: Transcript,
    pub reports: Vec<StageReport>,
    /// Keys of the input gadgets the runner sent, in order. Empty for the
    /// full pipeline, which sends its own.
    pub secrets: Vec<KeyPair>,
    /// Client keys of the output gadgets.
    pub outputs: Vec<KeyPair>,
    /// Fidelity of the server's output with the ideal state, when defined.
    pub fidelity: Option<f64>,
    pub client_queries: u64,
    pub server_queries: u64,
}

struct Produced {
    gadgets: Vec<Gadget>,
    qubit: Option<(Reg, f64)>,
}

fn gadgets_only(g: Outcome<Vec<Gadget>>) -> Outcome<Produced> {
    g.map(|gadgets| Produced { gadgets, qubit: None })
}

fn drive(s: &mut Session<'_>, id: ProtocolId, cfg: &HarnessConfig, secrets: &mut Vec<KeyPair>) -> Outcome<Produced> {
    let p = &cfg.params;
    let w = cfg.width;
    let (r, j) = (cfg.pipeline.doublings, cfg.pipeline.refresh_rounds);
    let mut send = |s: &mut Session<'_>, n: usize| -> Outcome<Vec<Gadget>> {
        let g = s.send_gadgets(&alloc::vec![w; n])?;
        secrets.extend(g.iter().map(|g| g.keys.clone()));
        Ok(g)
    };
    match id {
        ProtocolId::PadHadamard => {
            let g = send(s, 1)?;
            pad_hadamard(s, &g[0], p)?;
            gadgets_only(Ok(Vec::new()))
        }
        ProtocolId::BasisTest => {
            let g = send(s, 1)?;
            basis_test_multi(s, &g[0], p.test_rounds, p)?;
            gadgets_only(Ok(g))
        }
        ProtocolId::Combine | ProtocolId::CombineImproved => {
            let g = send(s, 2)?;
            let out = s.fresh_reg();
            let c = combine(s, &g[0], &g[1], out, id == ProtocolId::CombineImproved, p)?;
            gadgets_only(Ok(alloc::vec![c]))
        }
        ProtocolId::Basic => {
            let g = send(s, 2)?;
            gadgets_only(gdgprep_basic(s, &g[0], &g[1], p))
        }
        ProtocolId::OnePlusOne => {
            let g = send(s, 2)?;
            gadgets_only(gdgprep_1p1(s, &g[0], &g[1], p))
        }
        ProtocolId::OnePlusN => {
            let g = send(s, 1 + cfg.n)?;
            gadgets_only(gdgprep_1pn(s, &g[0], &g[1..], p))
        }
        ProtocolId::LogExpansion => {
            let g = send(s, r + 1)?;
            gadgets_only(gdgprep_logk(s, &g[..r], &g[r], p))
        }
        ProtocolId::Repeat => {
            let g = send(s, cfg.blocks * (r + 1))?;
            let blocks: Vec<Block> = g
                .chunks(r + 1)
                .map(|c| Block {
                    helpers: c[..r].to_vec(),
                    seed: c[r].clone(),
                })
                .collect();
            gadgets_only(gdgprep_repeat(s, &blocks, p))
        }
        ProtocolId::Refresh => {
            let g = send(s, cfg.n + j)?;
            gadgets_only(security_refreshing(s, &g[..cfg.n], &g[cfg.n..], p))
        }
        ProtocolId::OneRound => {
            let plan = s.ok(cfg.pipeline.plan())?;
            let Some(rp) = plan.first() else {
                return Err(s.abort(Error::Config("pipeline has no rounds".into())));
            };
            let helpers = cfg.pipeline.helpers_per_round(rp.running_in);
            let g = send(s, rp.running_in + helpers)?;
            let mut pool = HelperPool::new(g[rp.running_in..].to_vec());
            gadgets_only(gdgprep_oneround(s, &g[..rp.running_in], &mut pool, &cfg.pipeline, rp))
        }
        ProtocolId::Full => {
            gadgets_only(gdgprep_full(s, &cfg.pipeline))
        }
        ProtocolId::Qfac8 => {
            let g = send(s, 1)?;
            let q = qfac8(s, &g[0], cfg.qfac_test_rounds, p)?;
            Ok(Produced {
                gadgets: Vec::new(),
                qubit: Some((q.qubit, q.angle.radians())),
            })
        }
    }
}

/// Runs protocol `id` with `adv` as the server. Deterministic in
/// `(id, cfg, seed)` and the adversary's own seed.
pub fn run_with_adversary(id: ProtocolId, adv: &mut dyn Adversary, cfg: &HarnessConfig, seed: u64) -> RunRecord {
    let budget = adv.budget();
    let name = adv.name();
    let mut oracle = Oracle::new(sub_seed(seed, b"oracle", 0), cfg.pipeline.tag_len);
    if let Some(b) = budget {
        oracle = oracle.with_server_budget(b);
    }
    let server: &mut dyn Server = adv;
    let mut s = Session::with_oracle(oracle, stream(seed, b"client"), server);
    s.transcript.note(alloc::format!("protocol {} adversary {}", id.name(), name));
    let mut secrets = Vec::new();
    let result = match cfg.validate(id) {
        Ok(()) => drive(&mut s, id, cfg, &mut secrets),
        Err(e) => Err(s.abort(e)),
    };
    s.finish(&result);
    let fidelity = match &result {
        Ok(prod) => output_fidelity(s.server().memory(), prod),
        Err(_) => None,
    };
    let counts = s.oracle.counts().clone();
    let verdict = match &result {
        Ok(_) => Verdict::Pass,
        Err(f) => f.verdict(),
    };
    let outputs = result
        .map(|p| p.gadgets.into_iter().map(|g| g.keys).collect())
        .unwrap_or_default();
    let transcript = core::mem::take(&mut s.transcript);
    let reports = core::mem::take(&mut s.reports);
    drop(s);
    RunRecord {
        verdict,
        guess: adv.guess(),
        transcript,
        reports,
        secrets,
        outputs,
        fidelity,
        client_queries: counts.client,
        server_queries: counts.server,
    }
}

fn output_fidelity(mem: &ServerMemory, prod: &Produced) -> Option<f64> {
    if let Some((reg, theta)) = prod.qubit {
        let q = QubitState::from_memory(mem, reg).ok()?;
        return Some(q.fidelity(&QubitState::plus(theta)));
    }
    let targets: Vec<(Reg, &KeyPair)> = prod.gadgets.iter().map(|g| (g.reg, &g.keys)).collect();
    if targets.is_empty() {
        return None;
    }
    mem.gadget_fidelity(&targets).ok()
}

/// Fraction of `trials` runs satisfying `event`, each trial with its own
/// seed (and hence its own oracle). `make` builds the adversary for a
/// trial seed.
pub fn estimate(
    event: impl Fn(&RunRecord) -> bool,
    mut make: impl FnMut(u64) -> Box<dyn Adversary>,
    id: ProtocolId,
    cfg: &HarnessConfig,
    trials: u64,
    seed: u64,
) -> TrialStats {
    let (mut successes, mut passes) = (0, 0);
    for i in 0..trials {
        let t = sub_seed(seed, b"trial", i);
        let mut adv = make(sub_seed(t, b"adversary", 0));
        let rec = run_with_adversary(id, adv.as_mut(), cfg, t);
        successes += event(&rec) as u64;
        passes += rec.verdict.is_pass() as u64;
    }
    TrialStats::new(trials, successes, passes)
}

/// Both keys of the first input pair appear in the guess, in either order.
pub fn guessed_both_keys(rec: &RunRecord) -> bool {
    match (rec.secrets.first(), rec.guess.as_slice()) {
        (Some(k), [a, b, ..]) => (*a == k.x0 && *b == k.x1) || (*a == k.x1 && *b == k.x0),
        _ => false,
    }
}

/// Whether the robust table is built with the secret bit permutation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeLunchVariant {
    Unpermuted,
    Permuted,
}

impl FromStr for FreeLunchVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "unpermuted" => Ok(FreeLunchVariant::Unpermuted),
            "permuted" => Ok(FreeLunchVariant::Permuted),
            _ => Err(Error::Config(alloc::format!("unknown free-lunch variant `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreeLunchParams {
    pub width: usize,
    pub kappa_out: usize,
    pub pad_len: usize,
    /// Recombination guesses the attacker tries.
    pub attempts: usize,
}

impl Default for FreeLunchParams {
    fn default() -> Self {
        FreeLunchParams {
            width: 6,
            kappa_out: 8,
            pad_len: 16,
            attempts: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeLunchOutcome {
    /// The helper measurement landed on the CNOT-style branch.
    pub cnot_branch: bool,
    /// The attacker learned the `K3` key it did not measure.
    pub other_k3: bool,
    /// All four output keys recovered once the permutation is disclosed.
    pub all_outputs: bool,
    pub server_queries: u64,
}

fn try_lookup(oracle: &mut Oracle, table: &crate::tables::LookupTable, key: &Bits) -> Result<Option<Bits>, Error> {
    match table.lookup(oracle, Party::Server, key) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undecryptable) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `a` with the positions in `mask` taken from `b`.
fn splice(a: &Bits, b: &Bits, mask: &[bool]) -> Bits {
    let mut z = a.clone();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            z.set(i, b.get(i));
        }
    }
    z
}

/// A uniformly random mask with exactly `k` of `n` positions set.
fn random_subset<R: RngCore + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<bool> {
    let perm = BitPermutation::random(rng, n);
    let mut mask = alloc::vec![false; n];
    for &i in &perm.as_slice()[..k] {
        mask[i] = true;
    }
    mask
}

/// The client builds one robust table (with or without its bit
/// permutation); the attacker measures the helper and `K3` gadgets,
/// decrypts the two forward rows its measured keys open, splices the
/// outputs into a new candidate and tries it on the backward table. A hit
/// yields the other `K3` key, every forward row on its branch and, after
/// the permutation is disclosed, all four output keys.
pub fn free_lunch_attack(
    oracle: &mut Oracle,
    variant: FreeLunchVariant,
    p: &FreeLunchParams,
    rng: &mut Rng,
) -> Result<FreeLunchOutcome, Error> {
    let help = KeyPair::sample(rng, p.width)?;
    let k2 = KeyPair::sample(rng, p.width)?;
    let k3 = KeyPair::sample(rng, p.width)?;
    let out2 = KeyPair::sample(rng, p.kappa_out)?;
    let out3 = KeyPair::sample(rng, p.kappa_out)?;
    let perm = match variant {
        FreeLunchVariant::Unpermuted => BitPermutation::identity(2 * p.kappa_out),
        FreeLunchVariant::Permuted => BitPermutation::random(rng, 2 * p.kappa_out),
    };
    let keys = RobustKeys {
        help: &help,
        k2: &k2,
        k3: &k3,
        out2: &out2,
        out3: &out3,
    };
    let table = robust_rlt_build(oracle, &keys, &perm, p.pad_len, rng)?;
    let start = oracle.counts().server;

    let mut arng = Rng::seed_from_u64(rng.next_u64());
    let mut mem = ServerMemory::new();
    mem.insert(SparseState::gadget(Reg(1), &help))?;
    mem.insert(SparseState::gadget(Reg(2), &k3))?;
    let xh = mem.measure_computational(Reg(1), &mut arng)?;
    let x3 = mem.measure_computational(Reg(2), &mut arng)?;
    let cnot_branch = help.subscript_of(&xh) == Some(true);

    let mut outcome = FreeLunchOutcome {
        cnot_branch,
        other_k3: false,
        all_outputs: false,
        server_queries: 0,
    };
    let o0 = try_lookup(oracle, &table.forward, &Bits::concat_all([&xh, &k2.x0, &x3]))?;
    let o1 = try_lookup(oracle, &table.forward, &Bits::concat_all([&xh, &k2.x1, &x3]))?;
    let (Some(o0), Some(o1)) = (o0, o1) else {
        outcome.server_queries = oracle.counts().server - start;
        return Ok(outcome);
    };
    let n = 2 * p.kappa_out;
    for _ in 0..p.attempts.max(1) {
        let mask = match variant {
            FreeLunchVariant::Unpermuted => (0..n).map(|i| i >= p.kappa_out).collect(),
            FreeLunchVariant::Permuted => random_subset(&mut arng, n, p.kappa_out),
        };
        let z = splice(&o0, &o1, &mask);
        if z == o0 || z == o1 {
            continue;
        }
        let Some(back) = try_lookup(oracle, &table.backward, &xh.concat(&z))? else {
            continue;
        };
        let other = back.slice(p.width, 2 * p.width);
        if other == x3 {
            continue;
        }
        outcome.other_k3 = true;
        let mut rows = Vec::with_capacity(4);
        for x2 in [&k2.x0, &k2.x1] {
            for y3 in [&x3, &other] {
                if let Some(o) = try_lookup(oracle, &table.forward, &Bits::concat_all([&xh, x2, y3]))? {
                    rows.push(perm.inverse().apply(&o)?);
                }
            }
        }
        outcome.all_outputs = recovers_pair(&rows, &out2, 0, p.kappa_out) && recovers_pair(&rows, &out3, p.kappa_out, n);
        break;
    }
    outcome.server_queries = oracle.counts().server - start;
    Ok(outcome)
}

/// Both keys of `pair` occur as the `[lo, hi)` slice of some row.
fn recovers_pair(rows: &[Bits], pair: &KeyPair, lo: usize, hi: usize) -> bool {
    let has = |k: &Bits| rows.iter().any(|r| r.slice(lo, hi) == *k);
    has(&pair.x0) && has(&pair.x1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeLunchReport {
    /// Success over trials on the CNOT-style branch.
    pub cnot: TrialStats,
    /// Success over every trial run.
    pub all: TrialStats,
    /// Trials where the other `K3` key was recovered, over all trials.
    pub other_k3: u64,
}

/// Repeats the attack, each trial with a fresh oracle, until `cnot_trials`
/// trials have landed on the CNOT-style branch.
pub fn free_lunch_experiment(
    variant: FreeLunchVariant,
    p: &FreeLunchParams,
    cnot_trials: u64,
    seed: u64,
) -> Result<FreeLunchReport, Error> {
    let (mut cnot, mut cnot_ok, mut all, mut all_ok, mut other) = (0, 0, 0, 0, 0);
    while cnot < cnot_trials {
        let mut oracle = Oracle::new(sub_seed(seed, b"free-lunch/oracle", all), 32);
        let mut rng = indexed_stream(seed, b"free-lunch", all);
        let o = free_lunch_attack(&mut oracle, variant, p, &mut rng)?;
        all += 1;
        all_ok += o.all_outputs as u64;
        other += o.other_k3 as u64;
        if o.cnot_branch {
            cnot += 1;
            cnot_ok += o.all_outputs as u64;
        }
        if all > 64 * cnot_trials.max(1) {
            return Err(Error::Config("free-lunch experiment did not reach the CNOT branch".into()));
        }
    }
    Ok(FreeLunchReport {
        cnot: TrialStats::new(cnot, cnot_ok, cnot),
        all: TrialStats::new(all, all_ok, all),
        other_k3: other,
    })
}

/// One line per experiment: `id trials successes rate lo hi`.
pub fn stats_line(id: &str, s: &TrialStats) -> String {
    alloc::format!("{id}\t{s}")
}
