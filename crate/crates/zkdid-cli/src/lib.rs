//! Command-line frontend over the core toolkit: per-actor state files, a
//! file-backed ledger, a line-oriented scenario language for scripted
//! multi-party flows, and a benchmark harness.
//!
//! Everything is deterministic under a fixed `--seed` (or `ZKDID_SEED`):
//! identical command sequences produce byte-identical ledgers, proofs and
//! scenario reports. Time is logical — the ledger height only moves when
//! a command seals a block or `ledger tick` is invoked.

pub mod cost;
pub mod scenario;
pub mod state;
