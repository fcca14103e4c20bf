//! Run settings from a flat `key = value` file plus flag overrides.

use std::path::PathBuf;

use subqc_core::adversary::{FreeLunchParams, FreeLunchVariant, HarnessConfig};
use subqc_core::params::Mode;
use subqc_core::ubqc::UbqcConfig;

/// Keys accepted in config files and as `--key value` flags.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "Master seed; required"),
    ("trials", "Trials of an attack experiment"),
    ("mode", "toy or paper"),
    ("out", "Output directory"),
    ("adversary", "Server strategy for `run`"),
    ("variant", "Free-lunch table variant: unpermuted or permuted"),
    ("attempts", "Free-lunch recombination guesses"),
    ("shots", "UBQC shots"),
    ("pad_len", "Pad length of atomic protocols"),
    ("kappa_out", "Output key length of atomic protocols"),
    ("test_rounds", "Basis-test rounds"),
    ("width", "Key width of input gadgets"),
    ("n", "K3 gadgets in the 1+n expansion"),
    ("blocks", "Blocks of the repeated expansion"),
    ("qfac_test_rounds", "Basis-test rounds before qfactory"),
    ("kappa", "Security parameter"),
    ("key_width", "Key width of the pipeline's initial gadgets"),
    ("n_initial", "Initial running gadgets"),
    ("l_target", "Target output gadgets"),
    ("sub_rounds", "Sub-rounds per one-round step"),
    ("doublings", "Doublings per expansion block"),
    ("refresh_rounds", "Refresh rounds"),
    ("pad_base", "Per-round pad length step"),
    ("tag_len", "Global oracle tag length"),
];

#[derive(Clone, Debug)]
pub struct Settings {
    pub seed: u64,
    pub trials: u64,
    pub mode: Mode,
    pub out: PathBuf,
    pub adversary: String,
    pub variant: FreeLunchVariant,
    pub attempts: usize,
    pub shots: usize,
    pub harness: HarnessConfig,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(format!("line {}: empty key or value", i + 1));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("`{key}` expects an integer, got `{v}`"))
}

impl Settings {
    /// Applies `pairs` in order, so later pairs override earlier ones.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Settings, String> {
        let mut seed = None;
        let mut s = Settings {
            seed: 0,
            trials: 1000,
            mode: Mode::Toy,
            out: PathBuf::from("subqc-out"),
            adversary: "honest".into(),
            variant: FreeLunchVariant::Unpermuted,
            attempts: FreeLunchParams::default().attempts,
            shots: UbqcConfig::default().shots,
            harness: HarnessConfig::default(),
        };
        for (k, v) in pairs {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "seed" => seed = Some(int(k, v)?),
                "trials" => s.trials = int(k, v)?,
                "mode" => {
                    s.mode = v.parse().map_err(|e| format!("{e}"))?;
                    s.harness.pipeline.mode = s.mode;
                }
                "out" => s.out = PathBuf::from(v),
                "adversary" => s.adversary = v.to_string(),
                "variant" => s.variant = v.parse().map_err(|e| format!("{e}"))?,
                "attempts" => s.attempts = int(k, v)?,
                "shots" => s.shots = int(k, v)?,
                _ if KEYS.iter().any(|(name, _)| *name == k) => {
                    s.harness.set(k, v).map_err(|e| format!("{e}"))?
                }
                _ => return Err(format!("unknown key `{k}`")),
            }
        }
        s.seed = seed.ok_or("a seed is required (`--seed` or `seed =` in the config file)")?;
        if s.attempts == 0 {
            return Err("attempts must be at least 1".into());
        }
        Ok(s)
    }

    pub fn free_lunch(&self) -> FreeLunchParams {
        FreeLunchParams {
            width: self.harness.width,
            kappa_out: self.harness.params.kappa_out,
            pad_len: self.harness.params.pad_len,
            attempts: self.attempts,
        }
    }

    pub fn ubqc(&self) -> UbqcConfig {
        UbqcConfig {
            pipeline: self.harness.pipeline.clone(),
            qfac_test_rounds: self.harness.qfac_test_rounds,
            shots: self.shots,
        }
    }
}
