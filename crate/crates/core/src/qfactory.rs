//! Eight-basis qfactory: turns one gadget into a server-side qubit
//! `|0> + e^(i theta)|1>` with `theta` a multiple of `pi/4` known only to
//! the client.

use core::f64::consts::FRAC_PI_4;

use crate::bits::Bits;
use crate::error::Error;
use crate::keys::KeyPair;
use crate::params::ProtocolParams;
use crate::protocol::{basis_test_multi, Gadget, Outcome, Session};
use crate::server::{ClientMsg, SubscriptHint};
use crate::state::{Reg, ServerMemory};
use crate::tables::phase_lt_build;
use crate::Complex;

/// `theta = theta1 pi + theta2 pi/2 + theta3 pi/4`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AngleOctant {
    pub theta1: bool,
    pub theta2: bool,
    pub theta3: bool,
}

impl AngleOctant {
    pub fn from_octant(n: u8) -> Self {
        AngleOctant {
            theta1: n & 4 != 0,
            theta2: n & 2 != 0,
            theta3: n & 1 != 0,
        }
    }

    /// `theta` in units of `pi/4`, in `0..8`.
    pub fn octant(&self) -> u8 {
        4 * self.theta1 as u8 + 2 * self.theta2 as u8 + self.theta3 as u8
    }

    pub fn radians(&self) -> f64 {
        self.octant() as f64 * FRAC_PI_4
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState {
    pub alpha: Complex,
    pub beta: Complex,
}

impl QubitState {
    pub fn new(alpha: Complex, beta: Complex) -> Result<Self, Error> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if n <= 1e-24 {
            return Err(Error::ZeroNorm);
        }
        let s = 1.0 / libm::sqrt(n);
        Ok(QubitState {
            alpha: alpha * s,
            beta: beta * s,
        })
    }

    /// `(|0> + e^(i theta)|1>) / sqrt(2)`.
    pub fn plus(theta: f64) -> Self {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        QubitState {
            alpha: Complex::new(h, 0.0),
            beta: Complex::from_polar(h, theta),
        }
    }

    pub fn fidelity(&self, other: &QubitState) -> f64 {
        (self.alpha.conj() * other.alpha + self.beta.conj() * other.beta).norm_sqr()
    }

    /// Reads a one-bit register that is its own factor of `mem`.
    pub fn from_memory(mem: &ServerMemory, reg: Reg) -> Result<Self, Error> {
        let st = mem.state_of(&[reg])?;
        if st.registers().len() != 1 || st.width(reg)? != 1 {
            return Err(Error::Malformed("qubit register is entangled or wider than one bit"));
        }
        QubitState::new(
            st.amplitude(&[Bits::zeros(1)]),
            st.amplitude(&[Bits::ones(1)]),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Qfac8Output {
    pub angle: AngleOctant,
    pub qubit: Reg,
    pub d: Bits,
    pub keys: KeyPair,
}

/// Basis tests on the gadget, then a phase table with `D = 4` for the
/// client's `(theta2, theta3)`; the server moves the subscript into a
/// fresh qubit and Hadamard-measures the key register, returning `d`.
/// The client sets `theta1 = d . (y0 ^ y1)`.
pub fn qfac8(s: &mut Session<'_>, g: &Gadget, test_rounds: usize, p: &ProtocolParams) -> Outcome<Qfac8Output> {
    s.stage("qfac8", |s| {
        basis_test_multi(s, g, test_rounds, p)?;
        let bits = Bits::random(s.rng(), 2);
        let (theta2, theta3) = (bits.get(0), bits.get(1));
        let n = 2 * theta2 as u32 + theta3 as u32;
        let (oracle, rng) = s.oracle_and_rng();
        let table = phase_lt_build(oracle, &g.keys, n, 4, p.pad_len, rng);
        let table = s.ok(table)?;
        let (oracle, rng) = s.oracle_and_rng();
        let hint = SubscriptHint::padded(oracle, &g.keys, p.pad_len, p.kappa_out, rng);
        let hint = s.ok(hint)?;
        let qubit = s.fresh_reg();
        let d = s.send_bits(ClientMsg::PhaseQubit {
            reg: g.reg,
            qubit,
            hint,
            table,
        })?;
        if d.len() != g.keys.width() {
            return Err(s.reject("malformed d length"));
        }
        let theta1 = d.dot(&g.keys.x0.xor(&g.keys.x1));
        Ok(Qfac8Output {
            angle: AngleOctant {
                theta1,
                theta2,
                theta3,
            },
            qubit,
            d,
            keys: g.keys.clone(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::server::{HonestServer, Server};

    #[test]
    fn octant_round_trip() {
        for n in 0..8 {
            assert_eq!(AngleOctant::from_octant(n).octant(), n);
        }
        assert_eq!(AngleOctant::from_octant(6).radians(), 1.5 * core::f64::consts::PI);
    }

    #[test]
    fn honest_qubit_matches_client_angle() {
        let p = ProtocolParams {
            pad_len: 12,
            kappa_out: 12,
            test_rounds: 1,
        };
        for seed in 0..40 {
            let mut server = HonestServer::new(seed);
            let mut s = Session::new(seed, 32, &mut server);
            let g = s.send_gadgets(&[6]).unwrap();
            let out = qfac8(&mut s, &g[0], 1, &p).unwrap();
            let q = QubitState::from_memory(s.server().memory(), out.qubit).unwrap();
            let f = q.fidelity(&QubitState::plus(out.angle.radians()));
            assert!((f - 1.0).abs() < 1e-9, "seed {seed}");
            let m: &dyn Server = s.server();
            assert_eq!(m.memory().registers().len(), 1);
        }
    }
}
