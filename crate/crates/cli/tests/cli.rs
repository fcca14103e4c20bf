use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn subqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subqc"))
        .args(args)
        .output()
        .expect("spawn subqc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().expect("utf-8 temp path").to_string()
}

/// Rate column of the row named `id` in a stats table.
fn rate(table: &str, id: &str) -> f64 {
    let row = table
        .lines()
        .find(|l| l.split('\t').next() == Some(id))
        .unwrap_or_else(|| panic!("no row {id} in\n{table}"));
    row.split('\t').nth(3).unwrap().parse().unwrap()
}

#[test]
fn run_basic_passes_and_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = subqc(&["run", "gdgprep-basic", "--seed", "1", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(dir.path().join("gdgprep-basic.log")).unwrap();
    assert!(!log.is_empty());
    let stages = fs::read_to_string(dir.path().join("gdgprep-basic.stages.tsv")).unwrap();
    assert!(stages.starts_with("stage\t"));
    assert!(stages.lines().count() > 1);
    let summary = fs::read_to_string(dir.path().join("gdgprep-basic.summary.tsv")).unwrap();
    assert!(summary.contains("verdict\tpass"));
}

#[test]
fn same_seed_gives_identical_transcripts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = subqc(&["run", "gdgprep-1p1", "--seed", "42", "--out", &out_arg(d.path())]);
        assert_eq!(code(&o), 0);
    }
    for f in ["gdgprep-1p1.log", "gdgprep-1p1.stages.tsv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    subqc(&["run", "gdgprep-1p1", "--seed", "43", "--out", &out_arg(c.path())]);
    assert_ne!(
        fs::read(a.path().join("gdgprep-1p1.log")).unwrap(),
        fs::read(c.path().join("gdgprep-1p1.log")).unwrap()
    );
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# honest run\nseed = 5\nkappa_out = 8\npad_len = 12\n").unwrap();
    let out = dir.path().join("out");
    let o = subqc(&[
        "run",
        "pad-hadamard",
        "--config",
        cfg.to_str().unwrap(),
        "--kappa_out",
        "16",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed\t5"));
}

#[test]
fn bad_configuration_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "seed = 1\nno_such_key = 3\n").unwrap();
    let o = subqc(&["run", "gdgprep-basic", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    fs::write(&bad, "seed 1\n").unwrap();
    assert_eq!(code(&subqc(&["run", "gdgprep-basic", "--config", bad.to_str().unwrap()])), 2);

    let missing = dir.path().join("absent.cfg");
    assert_eq!(code(&subqc(&["run", "gdgprep-basic", "--config", missing.to_str().unwrap()])), 2);
    assert_eq!(code(&subqc(&["run", "gdgprep-basic"])), 2, "seed is mandatory");
    assert_eq!(code(&subqc(&["run", "gdgprep-basic", "--seed", "1", "--kappa_out", "x"])), 2);
    assert_eq!(code(&subqc(&["run", "gdgprep-basic", "--seed", "1", "--kappa_out", "0"])), 2);
    assert_eq!(code(&subqc(&["run", "gdgprep-basic", "--seed", "1", "--bogus", "1"])), 2);
    assert_eq!(code(&subqc(&["run", "no-such-protocol", "--seed", "1"])), 2);
    assert_eq!(code(&subqc(&["run", "pad-hadamard", "--seed", "1", "--adversary", "nobody"])), 2);
    assert_eq!(code(&subqc(&[])), 2);
}

#[test]
fn rejected_protocol_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // The cheater passes each seed with probability about 1/2.
    let fails = (0..16)
        .filter(|seed| {
            let o = subqc(&[
                "run",
                "pad-hadamard",
                "--seed",
                &seed.to_string(),
                "--adversary",
                "measure-and-random-d",
                "--out",
                &out_arg(dir.path()),
            ]);
            let c = code(&o);
            assert!(c == 0 || c == 1, "exit {c}");
            c == 1
        })
        .count();
    assert!(fails > 0 && fails < 16, "{fails}");
    let summary = fs::read_to_string(dir.path().join("pad-hadamard.summary.tsv")).unwrap();
    assert!(summary.contains("adversary\tmeasure-and-random-d"));
}

#[test]
fn free_lunch_unpermuted_always_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = subqc(&["attack", "free-lunch", "--seed", "3", "--trials", "100", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(dir.path().join("attack-free-lunch.tsv")).unwrap();
    assert!(t.starts_with("experiment\ttrials\tsuccesses\trate\tlo\thi\n"));
    assert_eq!(rate(&t, "free-lunch/unpermuted/cnot"), 1.0);
}

#[test]
fn free_lunch_permuted_is_rare() {
    let dir = tempfile::tempdir().unwrap();
    let o = subqc(&[
        "attack",
        "free-lunch",
        "--variant",
        "permuted",
        "--kappa_out",
        "20",
        "--seed",
        "3",
        "--trials",
        "200",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(dir.path().join("attack-free-lunch.tsv")).unwrap();
    assert!(rate(&t, "free-lunch/permuted/cnot") <= 0.02, "{t}");
}

#[test]
fn hadamard_cheat_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = subqc(&["attack", "hadamard-cheat", "--seed", "9", "--trials", "300", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(dir.path().join("attack-hadamard-cheat.tsv")).unwrap();
    assert_eq!(rate(&t, "hadamard-cheat/honest"), 1.0);
    let cheat = rate(&t, "hadamard-cheat/measure-and-random-d");
    assert!((0.35..0.65).contains(&cheat), "{cheat}");
}

#[test]
fn unknown_attack_exits_two() {
    let o = subqc(&["attack", "time-travel", "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("time-travel"));
}

#[test]
fn identity_circuit_concentrates_on_zero() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = dir.path().join("id.circ");
    fs::write(&circuit, "# H H\n0 0\n").unwrap();
    let run = |out: &str| {
        let o = subqc(&[
            "ubqc",
            circuit.to_str().unwrap(),
            "--seed",
            "11",
            "--shots",
            "50",
            "--pad_base",
            "16",
            "--out",
            out,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(a.to_str().unwrap());
    run(b.to_str().unwrap());
    let hist = fs::read_to_string(a.join("ubqc.tsv")).unwrap();
    assert_eq!(hist.lines().nth(1).unwrap().split('\t').nth(1), Some("50"));
    assert_eq!(hist.lines().nth(2).unwrap().split('\t').nth(1), Some("0"));
    for f in ["ubqc.tsv", "ubqc.deltas.tsv", "ubqc.log", "ubqc.stages.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_or_bad_circuit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing.circ");
    assert_eq!(code(&subqc(&["ubqc", missing.to_str().unwrap(), "--seed", "1"])), 2);
    let bad = dir.path().join("bad.circ");
    fs::write(&bad, "0 9\n").unwrap();
    assert_eq!(code(&subqc(&["ubqc", bad.to_str().unwrap(), "--seed", "1"])), 2);
}

#[test]
fn paper_mode_reports_asymptotics() {
    let dir = tempfile::tempdir().unwrap();
    let o = subqc(&["run", "gdgprep", "--seed", "2", "--mode", "paper", "--pad_base", "16", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = fs::read_to_string(dir.path().join("gdgprep.summary.tsv")).unwrap();
    assert!(s.contains("paper.eta\t2097152"), "{s}");
    assert!(s.contains("toy.rounds\t2"), "{s}");
}
