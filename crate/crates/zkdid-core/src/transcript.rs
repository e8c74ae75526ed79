//! Fiat-Shamir transcript: a SHA-256 hash chain that both prover and
//! verifier drive with identical absorb/challenge sequences, turning the
//! interactive protocol into a non-interactive one.
//!
//! Absorbing folds labeled prover messages into the running state with
//! length framing (so message boundaries are unambiguous). Challenges are
//! derived from the state plus a squeeze counter; squeezing never feeds
//! back into the state, so challenge values depend only on what was
//! absorbed before them and on how many challenges were already drawn.

use crate::field::{Felt, MODULUS};
use crate::hashing::{byte_hash, Digest32};

/// Domain-separation prefix folded into every transcript at creation.
const TRANSCRIPT_DOMAIN: &[u8] = b"zkdid/fs/v1";

/// A running Fiat-Shamir state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    state: Digest32,
    counter: u64,
}

impl Transcript {
    /// Starts a transcript bound to a protocol label.
    pub fn new(label: &str) -> Transcript {
        let mut buf = Vec::with_capacity(TRANSCRIPT_DOMAIN.len() + label.len());
        buf.extend_from_slice(TRANSCRIPT_DOMAIN);
        buf.extend_from_slice(label.as_bytes());
        Transcript {
            state: byte_hash(&buf),
            counter: 0,
        }
    }

    /// Folds a labeled message into the state. Label and data are both
    /// length-prefixed, so `absorb("ab", "c")` and `absorb("a", "bc")`
    /// yield different states.
    pub fn absorb(&mut self, label: &str, data: &[u8]) {
        let mut buf = Vec::with_capacity(32 + 4 + label.len() + 8 + data.len());
        buf.extend_from_slice(self.state.as_bytes());
        buf.extend_from_slice(&(label.len() as u32).to_be_bytes());
        buf.extend_from_slice(label.as_bytes());
        buf.extend_from_slice(&(data.len() as u64).to_be_bytes());
        buf.extend_from_slice(data);
        self.state = byte_hash(&buf);
    }

    /// Absorbs a field element (8 bytes big-endian).
    pub fn absorb_felt(&mut self, label: &str, value: Felt) {
        self.absorb(label, &value.to_be_bytes());
    }

    /// Squeezes a 32-byte challenge and advances the squeeze counter.
    pub fn challenge_bytes(&mut self, label: &str) -> Digest32 {
        let mut buf = Vec::with_capacity(32 + 8 + label.len());
        buf.extend_from_slice(self.state.as_bytes());
        buf.extend_from_slice(&self.counter.to_be_bytes());
        buf.extend_from_slice(label.as_bytes());
        self.counter += 1;
        byte_hash(&buf)
    }

    /// Squeezes a field element: the first 8 bytes of a challenge digest,
    /// read big-endian and reduced mod p.
    pub fn challenge_felt(&mut self, label: &str) -> Felt {
        let d = self.challenge_bytes(label);
        let raw = u64::from_be_bytes(d.as_bytes()[..8].try_into().unwrap());
        Felt::new(raw % MODULUS)
    }

    /// Squeezes `count` indices, each uniform-ish over `0..range_size`.
    /// Duplicates are possible and left in place.
    pub fn challenge_indices(&mut self, label: &str, count: usize, range_size: usize) -> Vec<usize> {
        assert!(range_size > 0, "index range must be nonempty");
        (0..count)
            .map(|_| {
                let d = self.challenge_bytes(label);
                let raw = u64::from_be_bytes(d.as_bytes()[..8].try_into().unwrap());
                (raw % range_size as u64) as usize
            })
            .collect()
    }
}
