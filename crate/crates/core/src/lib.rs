//! Simulator core for succinct blind quantum computation built on remote
//! gadget preparation in the quantum random oracle model.
//!
//! A classical client drives an in-process server through lookup-table
//! protocols. The server's quantum memory is a product of sparse
//! superpositions over named bitstring registers, and the random oracle is a
//! seeded PRF with classical, superposed, tagged and blinded query modes.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adversary;
pub mod bits;
pub mod error;
pub mod gadget_prep;
pub mod keys;
pub mod oracle;
pub mod params;
pub mod protocol;
pub mod qfactory;
pub mod rng;
pub mod server;
pub mod state;
pub mod stats;
pub mod tables;
pub mod transcript;
pub mod ubqc;

pub use bits::{BitPermutation, Bits};
pub use error::Error;
pub use keys::{KeyPair, KeySet};
pub use oracle::{Oracle, Party};
pub use server::Server;
pub use state::{Reg, ServerMemory, SparseState};
pub use transcript::{Transcript, Verdict};

pub type Complex = num_complex::Complex64;
