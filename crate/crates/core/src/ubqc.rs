//! Blind delegation of single-qubit circuits on a linear cluster.
//!
//! A circuit is a list of gates `J(a) = H D(a)` with `D(a) = diag(1, e^(i a))`
//! and `a` a multiple of `pi/4`, applied to `|0>` and followed by a
//! computational-basis measurement.
//!
//! The chain has `depth + 1` qubits. Measuring a qubit holding `psi` at
//! angle `phi` (projecting onto `|0> +- e^(i phi)|1>`) leaves
//! `X^s H D(-phi) psi` on the next qubit. Qubit 0 starts in `|+>` and is
//! measured at `phi = 0`, which prepares `|0>`; qubit `k` is measured at
//! `phi = -a_k`. The last measurement doubles as the output measurement,
//! since a Z measurement after `H D(a)` is a measurement of the previous
//! state at angle `-a`.
//!
//! Pending byproducts `X^a Z^b` are handled by measuring at `(-1)^a phi`;
//! the true outcome is then `s ^ b` and the byproducts become `(s ^ b, a)`.
//! Server qubits are `|+_theta>`; the client sends
//! `delta = phi' + theta + r pi` and undoes `r` on the reported bit.

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;

use crate::bits::Bits;
use crate::error::Error;
use crate::params::{PipelineConfig, ProtocolParams};
use crate::protocol::{Outcome, Session, StageReport};
use crate::qfactory::{qfac8, AngleOctant};
use crate::rng::indexed_stream;
use crate::server::{ClientMsg, HonestServer};
use crate::state::Reg;
use crate::transcript::Verdict;
use crate::Complex;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SingleQubitCircuit {
    /// Gate angles in units of `pi/4`.
    angles: Vec<u8>,
}

impl SingleQubitCircuit {
    pub fn new(angles: Vec<u8>) -> Result<Self, Error> {
        if angles.is_empty() {
            return Err(Error::Config("circuit must have at least one gate".into()));
        }
        Ok(SingleQubitCircuit {
            angles: angles.into_iter().map(|a| a % 8).collect(),
        })
    }

    /// `H H`, the identity.
    pub fn identity() -> Self {
        SingleQubitCircuit { angles: alloc::vec![0, 0] }
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R, depth: usize) -> Result<Self, Error> {
        Self::new((0..depth).map(|_| (rng.next_u32() % 8) as u8).collect())
    }

    /// Whitespace-separated octant angles; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut angles = Vec::new();
        for line in text.lines() {
            let body = line.split('#').next().unwrap_or("");
            for tok in body.split_whitespace() {
                let a: u8 = tok
                    .parse()
                    .map_err(|_| Error::Config(alloc::format!("bad circuit angle `{tok}`")))?;
                if a >= 8 {
                    return Err(Error::Config(alloc::format!("circuit angle {a} is not below 8")));
                }
                angles.push(a);
            }
        }
        Self::new(angles)
    }

    pub fn angles(&self) -> &[u8] {
        &self.angles
    }

    pub fn depth(&self) -> usize {
        self.angles.len()
    }

    /// Qubits of the measurement pattern.
    pub fn qubits(&self) -> usize {
        self.angles.len() + 1
    }

    /// Output distribution `[p(0), p(1)]` by direct state-vector simulation.
    pub fn direct_distribution(&self) -> [f64; 2] {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let (mut a, mut b) = (Complex::new(1.0, 0.0), Complex::new(0.0, 0.0));
        for &k in &self.angles {
            let bb = b * Complex::from_polar(1.0, k as f64 * core::f64::consts::FRAC_PI_4);
            (a, b) = ((a + bb) * h, (a - bb) * h);
        }
        let p0 = a.norm_sqr();
        [p0, 1.0 - p0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MbqcRun {
    pub outcome: bool,
    /// Measurement angles sent to the server, in units of `pi/4`.
    pub deltas: Vec<u8>,
}

/// Drives the measurement pattern over server qubits prepared as
/// `|+_theta>` with the client's `theta` per qubit.
pub fn mbqc_linear_cluster(
    s: &mut Session<'_>,
    circuit: &SingleQubitCircuit,
    qubits: &[(Reg, AngleOctant)],
) -> Outcome<MbqcRun> {
    s.stage("mbqc", |s| {
        if qubits.len() != circuit.qubits() {
            return Err(s.abort(Error::Config(alloc::format!(
                "pattern needs {} qubits, got {}",
                circuit.qubits(),
                qubits.len()
            ))));
        }
        let (mut x, mut z) = (false, false);
        let mut deltas = Vec::with_capacity(qubits.len());
        let mut outcome = false;
        for (k, (reg, theta)) in qubits.iter().enumerate() {
            let phi = if k == 0 { 0 } else { (8 - circuit.angles[k - 1]) % 8 };
            let phi_adapted = if x { (8 - phi) % 8 } else { phi };
            let r = Bits::random(s.rng(), 1).get(0);
            let delta = (phi_adapted + theta.octant() + 4 * r as u8) % 8;
            deltas.push(delta);
            let reported = s.send_bit(ClientMsg::MeasureAngle {
                reg: *reg,
                next: qubits.get(k + 1).map(|q| q.0),
                octant: delta,
            })?;
            let m = reported ^ r;
            if k + 1 == qubits.len() {
                outcome = m ^ z;
            } else {
                (x, z) = (m ^ z, x);
            }
        }
        Ok(MbqcRun { outcome, deltas })
    })
}

#[derive(Clone, Debug)]
pub struct UbqcConfig {
    pub pipeline: PipelineConfig,
    pub qfac_test_rounds: usize,
    pub shots: usize,
}

impl Default for UbqcConfig {
    fn default() -> Self {
        UbqcConfig {
            pipeline: PipelineConfig::default(),
            qfac_test_rounds: 1,
            shots: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UbqcResult {
    pub counts: [u64; 2],
    /// Histogram of every measurement angle sent, over the 8 octants.
    pub delta_counts: [u64; 8],
    pub reports: Vec<StageReport>,
    pub verdict: Verdict,
    /// Transcript of the preparation run, followed by the first shot's.
    pub transcript: String,
}

impl UbqcResult {
    pub fn distribution(&self) -> [f64; 2] {
        let n = (self.counts[0] + self.counts[1]).max(1) as f64;
        [self.counts[0] as f64 / n, self.counts[1] as f64 / n]
    }
}

/// Qfactory parameters for gadgets produced by the pipeline's last round.
fn qfac_params(cfg: &PipelineConfig) -> ProtocolParams {
    let rounds = cfg.plan().map(|p| p.len()).unwrap_or(0).max(1);
    cfg.round_params(rounds)
}

/// End-to-end delegation: the pipeline prepares one gadget per pattern
/// qubit; every shot then turns them into rotated qubits and runs the
/// pattern. Gadgets are consumed by a shot, so each shot replays the
/// server's post-preparation state with fresh measurement randomness.
pub fn succ_ubqc(circuit: &SingleQubitCircuit, cfg: &UbqcConfig, seed: u64) -> Result<UbqcResult, Error> {
    let mut pcfg = cfg.pipeline.clone();
    pcfg.l_target = circuit.qubits();
    let mut server = HonestServer::new(seed);
    let mut s = Session::new(seed, pcfg.tag_len, &mut server);
    let prep = crate::gadget_prep::gdgprep_full(&mut s, &pcfg);
    s.finish(&prep);
    let mut result = UbqcResult {
        counts: [0; 2],
        delta_counts: [0; 8],
        reports: s.reports.clone(),
        verdict: Verdict::Pass,
        transcript: s.transcript.to_lines(),
    };
    let gadgets = match prep {
        Ok(g) => g,
        Err(f) => {
            result.verdict = f.verdict();
            return Ok(result);
        }
    };
    let oracle = s.oracle.clone();
    let next_reg = s.next_reg();
    drop(s);
    let p = qfac_params(&pcfg);

    for shot in 0..cfg.shots {
        let mut replay = server.clone();
        replay.reseed(seed, shot as u64 + 1);
        let rng = indexed_stream(seed, b"shot", shot as u64);
        let mut s = Session::with_oracle(oracle.clone(), rng, &mut replay);
        s.set_next_reg(next_reg);
        let run = s.stage("shot", |s| {
            let mut qubits = Vec::with_capacity(gadgets.len());
            for g in &gadgets {
                let q = qfac8(s, g, cfg.qfac_test_rounds, &p)?;
                qubits.push((q.qubit, q.angle));
            }
            mbqc_linear_cluster(s, circuit, &qubits)
        });
        s.finish(&run);
        if shot == 0 {
            result.transcript.push_str(&s.transcript.to_lines());
        }
        match run {
            Ok(r) => {
                result.counts[r.outcome as usize] += 1;
                for d in r.deltas {
                    result.delta_counts[d as usize] += 1;
                }
            }
            Err(f) => {
                result.verdict = f.verdict();
                return Ok(result);
            }
        }
    }
    Ok(result)
}
