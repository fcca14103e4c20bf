//! Append-only record of a protocol run.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::error::Error;
use crate::oracle::Party;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail { stage: String, reason: String },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Fail { stage, reason } => write!(f, "fail at {stage}: {reason}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    Message {
        sender: Party,
        kind: &'static str,
        payload: Vec<u8>,
    },
    /// The initial quantum message, recorded by register label and width.
    Quantum { registers: Vec<(u32, usize)> },
    Note(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<Entry>,
    verdict: Option<Verdict>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn message(&mut self, sender: Party, kind: &'static str, payload: Vec<u8>) {
        self.entries.push(Entry::Message {
            sender,
            kind,
            payload,
        });
    }

    pub fn quantum(&mut self, registers: Vec<(u32, usize)>) {
        self.entries.push(Entry::Quantum { registers });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.entries.push(Entry::Note(text.into()));
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.verdict.as_ref()
    }

    /// Sets the verdict. A second call is an error.
    pub fn set_verdict(&mut self, v: Verdict) -> Result<(), Error> {
        if self.verdict.is_some() {
            return Err(Error::Malformed("transcript verdict already set"));
        }
        self.verdict = Some(v);
        Ok(())
    }

    /// Number of messages sent by `party`.
    pub fn count_from(&self, party: Party) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, Entry::Message { sender, .. } if *sender == party))
            .count()
    }

    /// Line records: `C`/`S` messages with hex payloads, `Q` quantum
    /// messages, `N` notes, and a final `V` verdict line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e {
                Entry::Message {
                    sender,
                    kind,
                    payload,
                } => {
                    let who = match sender {
                        Party::Client => 'C',
                        Party::Server => 'S',
                    };
                    let _ = write!(out, "{who} {kind} ");
                    for b in payload {
                        let _ = write!(out, "{b:02x}");
                    }
                    out.push('\n');
                }
                Entry::Quantum { registers } => {
                    out.push('Q');
                    for (r, w) in registers {
                        let _ = write!(out, " r{r}:{w}");
                    }
                    out.push('\n');
                }
                Entry::Note(t) => {
                    let _ = writeln!(out, "N {t}");
                }
            }
        }
        match &self.verdict {
            Some(Verdict::Pass) => out.push_str("V pass\n"),
            Some(Verdict::Fail { stage, reason }) => {
                let _ = writeln!(out, "V fail {stage} {reason}");
            }
            None => out.push_str("V none\n"),
        }
        out
    }
}
