//! `subqc`: run protocols, attack experiments and blind circuits.
//!
//! Exit status is 0 on success, 1 when a protocol run rejects and 2 on
//! usage, configuration or I/O errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};

use commands::Status;
use config::{parse_file, Settings, KEYS};

fn cli() -> Command {
    let mut cmd = Command::new("subqc")
        .about("Blind quantum computation via remote gadget preparation, simulated")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("Flat `key = value` file; flags override it"),
        )
        .subcommand(
            Command::new("run")
                .about("Run one protocol and record its transcript")
                .arg(Arg::new("protocol").required(true)),
        )
        .subcommand(
            Command::new("attack")
                .about("Estimate an attack's success rate")
                .arg(Arg::new("attack").required(true).value_name("free-lunch|hadamard-cheat")),
        )
        .subcommand(
            Command::new("ubqc")
                .about("Blindly delegate a single-qubit circuit")
                .arg(Arg::new("circuit").required(true).value_name("FILE")),
        );
    for (key, help) in KEYS {
        cmd = cmd.arg(Arg::new(*key).long(*key).global(true).value_name("VALUE").help(*help));
    }
    cmd
}

fn settings(m: &ArgMatches) -> Result<Settings, String> {
    let mut pairs = Vec::new();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
        pairs = parse_file(&text).map_err(|e| format!("{path}: {e}"))?;
    }
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            pairs.push((key.to_string(), v.clone()));
        }
    }
    Settings::from_pairs(&pairs)
}

fn dispatch(m: &ArgMatches) -> Result<Status, String> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let s = settings(sub)?;
    match name {
        "run" => commands::run(&s, sub.get_one::<String>("protocol").expect("required")),
        "attack" => commands::attack(&s, sub.get_one::<String>("attack").expect("required")),
        "ubqc" => commands::ubqc(&s, &PathBuf::from(sub.get_one::<String>("circuit").expect("required"))),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    match dispatch(&m) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::ProtocolFail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("subqc: error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn command_definition_is_consistent() {
        super::cli().debug_assert();
    }
}
