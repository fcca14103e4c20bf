//! Subcommands and the files they write.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use subqc_core::adversary::{
    adversary_by_name, estimate, free_lunch_experiment, run_with_adversary, stats_line, ProtocolId,
};
use subqc_core::params::{paper_report, PaperConstants};
use subqc_core::protocol::StageReport;
use subqc_core::rng::sub_seed;
use subqc_core::stats::TrialStats;
use subqc_core::ubqc::{succ_ubqc, SingleQubitCircuit};

use crate::config::Settings;

pub const STATS_HEADER: &str = "experiment\ttrials\tsuccesses\trate\tlo\thi";

/// How a finished command exits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    ProtocolFail,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn stage_table(reports: &[StageReport]) -> String {
    let mut t = format!("{}\n", StageReport::HEADER);
    for r in reports {
        t.push_str(&r.to_line());
        t.push('\n');
    }
    t
}

/// Paper-mode lines: the asymptotic values beside the toy values in use.
fn paper_lines(s: &Settings) -> String {
    let p = &s.harness.pipeline;
    let mut t = paper_report(p.kappa, p.l_target, &PaperConstants::default()).to_lines();
    let _ = writeln!(t, "toy.kappa\t{}", p.kappa);
    let _ = writeln!(t, "toy.n_initial\t{}", p.n_initial);
    if let Ok(plan) = p.plan() {
        let _ = writeln!(t, "toy.rounds\t{}", plan.len());
    }
    let _ = writeln!(t, "toy.refresh_rounds\t{}", p.refresh_rounds);
    t
}

fn paper_mode(s: &Settings) -> bool {
    s.mode == subqc_core::params::Mode::Paper
}

/// Runs one protocol against the configured server strategy and writes
/// `<protocol>.log`, `<protocol>.stages.tsv` and `<protocol>.summary.tsv`.
pub fn run(s: &Settings, protocol: &str) -> Result<Status, String> {
    let id: ProtocolId = protocol.parse().map_err(err)?;
    s.harness.validate(id).map_err(err)?;
    let mut adv = adversary_by_name(&s.adversary, sub_seed(s.seed, b"adversary", 0)).map_err(err)?;
    let rec = run_with_adversary(id, adv.as_mut(), &s.harness, s.seed);

    let mut summary = String::new();
    let _ = writeln!(summary, "protocol\t{}", id.name());
    let _ = writeln!(summary, "adversary\t{}", s.adversary);
    let _ = writeln!(summary, "seed\t{}", s.seed);
    let _ = writeln!(summary, "verdict\t{}", rec.verdict);
    let _ = writeln!(summary, "outputs\t{}", rec.outputs.len());
    if let Some(f) = rec.fidelity {
        let _ = writeln!(summary, "fidelity\t{f:.12}");
    }
    let _ = writeln!(summary, "client_queries\t{}", rec.client_queries);
    let _ = writeln!(summary, "server_queries\t{}", rec.server_queries);
    if paper_mode(s) {
        summary.push_str(&paper_lines(s));
    }

    let name = id.name();
    write_out(&s.out, &format!("{name}.log"), &rec.transcript.to_lines())?;
    write_out(&s.out, &format!("{name}.stages.tsv"), &stage_table(&rec.reports))?;
    write_out(&s.out, &format!("{name}.summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(if rec.verdict.is_pass() { Status::Pass } else { Status::ProtocolFail })
}

/// Runs a named attack experiment and writes `attack-<name>.tsv`.
pub fn attack(s: &Settings, name: &str) -> Result<Status, String> {
    let rows: Vec<(String, TrialStats)> = match name {
        "free-lunch" => {
            let variant = match s.variant {
                subqc_core::adversary::FreeLunchVariant::Unpermuted => "unpermuted",
                subqc_core::adversary::FreeLunchVariant::Permuted => "permuted",
            };
            let r = free_lunch_experiment(s.variant, &s.free_lunch(), s.trials, s.seed).map_err(err)?;
            let other = TrialStats::new(r.all.trials, r.other_k3, r.all.trials);
            vec![
                (format!("free-lunch/{variant}/cnot"), r.cnot),
                (format!("free-lunch/{variant}/all"), r.all),
                (format!("free-lunch/{variant}/other-k3"), other),
            ]
        }
        "hadamard-cheat" => {
            s.harness.validate(ProtocolId::PadHadamard).map_err(err)?;
            let mut rows = Vec::new();
            for adv in ["honest", "measure-and-random-d"] {
                let st = estimate(
                    |r| r.verdict.is_pass(),
                    |seed| adversary_by_name(adv, seed).expect("built-in adversary"),
                    ProtocolId::PadHadamard,
                    &s.harness,
                    s.trials,
                    s.seed,
                );
                rows.push((format!("hadamard-cheat/{adv}"), st));
            }
            rows
        }
        other => return Err(format!("unknown attack `{other}` (expected free-lunch or hadamard-cheat)")),
    };
    let mut table = format!("{STATS_HEADER}\n");
    for (id, st) in &rows {
        table.push_str(&stats_line(id, st));
        table.push('\n');
    }
    if paper_mode(s) {
        table.push_str(&paper_lines(s));
    }
    write_out(&s.out, &format!("attack-{name}.tsv"), &table)?;
    print!("{table}");
    Ok(Status::Pass)
}

/// Delegates the circuit in `path` and writes `ubqc.tsv` (histogram),
/// `ubqc.deltas.tsv`, `ubqc.log` and `ubqc.stages.tsv`.
pub fn ubqc(s: &Settings, path: &Path) -> Result<Status, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let circuit = SingleQubitCircuit::parse(&text).map_err(err)?;
    let cfg = s.ubqc();
    let mut check = cfg.pipeline.clone();
    check.l_target = circuit.qubits();
    check.validate().map_err(err)?;
    let r = succ_ubqc(&circuit, &cfg, s.seed).map_err(err)?;

    let ideal = circuit.direct_distribution();
    let freq = r.distribution();
    let mut hist = String::from("outcome\tcount\tfrequency\tideal\n");
    for b in 0..2 {
        let _ = writeln!(hist, "{b}\t{}\t{:.6}\t{:.6}", r.counts[b], freq[b], ideal[b]);
    }
    let mut deltas = String::from("octant\tcount\n");
    for (o, c) in r.delta_counts.iter().enumerate() {
        let _ = writeln!(deltas, "{o}\t{c}");
    }
    let mut summary = format!("verdict\t{}\n", r.verdict);
    if paper_mode(s) {
        summary.push_str(&paper_lines(s));
    }
    write_out(&s.out, "ubqc.tsv", &hist)?;
    write_out(&s.out, "ubqc.deltas.tsv", &deltas)?;
    write_out(&s.out, "ubqc.log", &r.transcript)?;
    write_out(&s.out, "ubqc.stages.tsv", &stage_table(&r.reports))?;
    print!("{summary}{hist}");
    Ok(if r.verdict.is_pass() { Status::Pass } else { Status::ProtocolFail })
}
