//! Protocol and pipeline parameters.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    #[default]
    Toy,
    /// Asymptotic formulas are evaluated and reported next to the toy values
    /// actually used.
    Paper,
}

impl core::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "toy" => Ok(Mode::Toy),
            "paper" => Ok(Mode::Paper),
            other => Err(Error::Config(alloc::format!("unknown mode `{other}`"))),
        }
    }
}

/// Parameters shared by the atomic sub-protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    /// Pad length of table rows and hash inputs.
    pub pad_len: usize,
    /// Output key length, also the basis-test string and Hadamard tail width.
    pub kappa_out: usize,
    /// Rounds of the multi-round basis test.
    pub test_rounds: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            pad_len: 16,
            kappa_out: 16,
            test_rounds: 2,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), Error> {
        if self.pad_len == 0 || self.kappa_out == 0 {
            return Err(Error::Config("pad_len and kappa_out must be at least 1".into()));
        }
        Ok(())
    }
}

/// Configuration of the full preparation pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Security parameter; only enters the paper-mode report.
    pub kappa: u32,
    /// Width of every key in the initial quantum message.
    pub key_width: usize,
    /// Initial number of running gadgets.
    pub n_initial: usize,
    /// Target number of output gadgets.
    pub l_target: usize,
    /// Sub-rounds per one-round step, each combined into the running keys.
    pub sub_rounds: usize,
    /// Doubling rounds inside each expansion block.
    pub doublings: usize,
    /// Refresh rounds per security refreshing.
    pub refresh_rounds: usize,
    /// Round `t` uses pad and output length `pad_base * t`.
    pub pad_base: usize,
    pub test_rounds: usize,
    /// Global tag length of the oracle.
    pub tag_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Toy,
            kappa: 8,
            key_width: 6,
            n_initial: 2,
            l_target: 8,
            sub_rounds: 2,
            doublings: 2,
            refresh_rounds: 1,
            pad_base: 8,
            test_rounds: 1,
            tag_len: 32,
        }
    }
}

/// Per-round sizes of a pipeline run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundPlan {
    pub round: usize,
    pub running_in: usize,
    pub blocks: usize,
    pub running_out: usize,
    pub params: ProtocolParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.key_width == 0 || self.pad_base == 0 || self.tag_len == 0 {
            return bad("key_width, pad_base and tag_len must be at least 1");
        }
        if self.n_initial == 0 || self.l_target == 0 {
            return bad("n_initial and l_target must be at least 1");
        }
        if self.sub_rounds == 0 {
            return bad("sub_rounds must be at least 1");
        }
        if self.doublings >= 16 {
            return bad("doublings must be below 16");
        }
        if (1usize << self.doublings) <= self.sub_rounds && self.n_initial < self.l_target {
            return bad("2^doublings must exceed sub_rounds for the pipeline to grow");
        }
        self.plan().map(|_| ())
    }

    pub fn round_params(&self, round: usize) -> ProtocolParams {
        ProtocolParams {
            pad_len: self.pad_base * round,
            kappa_out: self.pad_base * round,
            test_rounds: self.test_rounds,
        }
    }

    /// Round sizes until the running count reaches the target.
    pub fn plan(&self) -> Result<Vec<RoundPlan>, Error> {
        let mut out = Vec::new();
        let mut n = self.n_initial;
        let mut round = 1;
        while n < self.l_target {
            if !n.is_multiple_of(self.sub_rounds) || n < self.sub_rounds {
                return Err(Error::Config(alloc::format!(
                    "round {round}: {n} running gadgets do not split into {} sub-rounds",
                    self.sub_rounds
                )));
            }
            let blocks = n / self.sub_rounds;
            let next = blocks << self.doublings;
            out.push(RoundPlan {
                round,
                running_in: n,
                blocks,
                running_out: next,
                params: self.round_params(round),
            });
            n = next;
            round += 1;
            if round > 64 {
                return Err(Error::Config("pipeline does not reach the target".into()));
            }
        }
        Ok(out)
    }

    /// Helper gadgets consumed by one round with `running_in` inputs.
    pub fn helpers_per_round(&self, running_in: usize) -> usize {
        running_in * self.doublings + self.sub_rounds * self.refresh_rounds + self.refresh_rounds
    }

    pub fn total_helpers(&self) -> Result<usize, Error> {
        Ok(self
            .plan()?
            .iter()
            .map(|r| self.helpers_per_round(r.running_in))
            .sum())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let num = |v: &str| -> Result<usize, Error> {
            v.parse()
                .map_err(|_| Error::Config(alloc::format!("`{key}` expects an integer, got `{v}`")))
        };
        match key {
            "mode" => self.mode = value.parse()?,
            "kappa" => self.kappa = num(value)? as u32,
            "key_width" => self.key_width = num(value)?,
            "n_initial" => self.n_initial = num(value)?,
            "l_target" => self.l_target = num(value)?,
            "sub_rounds" => self.sub_rounds = num(value)?,
            "doublings" => self.doublings = num(value)?,
            "refresh_rounds" => self.refresh_rounds = num(value)?,
            "pad_base" => self.pad_base = num(value)?,
            "test_rounds" => self.test_rounds = num(value)?,
            "tag_len" => self.tag_len = num(value)?,
            _ => return Err(Error::Config(alloc::format!("unknown parameter `{key}`"))),
        }
        Ok(())
    }
}

/// Constants of the asymptotic parameter formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaperConstants {
    pub b4: u32,
    /// `threshold(kappa) = threshold_coef * kappa`.
    pub threshold_coef: f64,
    /// Values above the cap are reported as capped.
    pub cap: f64,
}

impl Default for PaperConstants {
    fn default() -> Self {
        PaperConstants {
            b4: 1,
            threshold_coef: 40.0,
            cap: 1e12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaperReport {
    pub eta: f64,
    pub n_initial: f64,
    pub rounds: f64,
    pub refresh_rounds: f64,
    pub capped: bool,
}

/// `eta = kappa^(b4+6)`, `N = kappa * threshold(kappa)`,
/// `T = ceil(log2(L / N))`, `J = eta`, with every value capped.
pub fn paper_report(kappa: u32, l_target: usize, c: &PaperConstants) -> PaperReport {
    let k = kappa as f64;
    let eta_raw = libm::pow(k, (c.b4 + 6) as f64);
    let n_raw = libm::ceil(k * c.threshold_coef * k);
    let ratio = l_target as f64 / n_raw;
    let rounds = if ratio > 1.0 { libm::ceil(libm::log2(ratio)) } else { 0.0 };
    let capped = eta_raw > c.cap || n_raw > c.cap;
    PaperReport {
        eta: eta_raw.min(c.cap),
        n_initial: n_raw.min(c.cap),
        rounds,
        refresh_rounds: libm::ceil(eta_raw).min(c.cap),
        capped,
    }
}

impl PaperReport {
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "paper.eta\t{}", self.eta);
        let _ = writeln!(s, "paper.n_initial\t{}", self.n_initial);
        let _ = writeln!(s, "paper.rounds\t{}", self.rounds);
        let _ = writeln!(s, "paper.refresh_rounds\t{}", self.refresh_rounds);
        let _ = writeln!(s, "paper.capped\t{}", self.capped);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_doubles_twice() {
        let c = PipelineConfig::default();
        let plan = c.plan().unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!((plan[0].running_in, plan[0].blocks, plan[0].running_out), (2, 1, 4));
        assert_eq!((plan[1].running_in, plan[1].blocks, plan[1].running_out), (4, 2, 8));
        assert_eq!(plan[1].params.pad_len, 16);
        assert_eq!(c.total_helpers().unwrap(), (2 * 2 + 2 + 1) + (4 * 2 + 2 + 1));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = PipelineConfig::default();
        c.n_initial = 3;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.doublings = 1;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("doublings", "x").is_err());
        c.set("l_target", "16").unwrap();
        assert_eq!(c.l_target, 16);
    }

    #[test]
    fn paper_report_caps() {
        let r = paper_report(16, 1 << 20, &PaperConstants::default());
        assert_eq!(r.eta, 268_435_456.0);
        assert!(!r.capped);
        assert_eq!(r.n_initial, 40.0 * 256.0);
        assert_eq!(r.rounds, 7.0);
        let r = paper_report(64, 1 << 20, &PaperConstants::default());
        assert!(r.capped);
        assert_eq!(r.eta, 1e12);
        assert_eq!(r.rounds, 3.0);
    }
}
