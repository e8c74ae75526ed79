//! Byte hashing (SHA-256) and the MiMC-style algebraic permutation used for
//! in-circuit commitments.
//!
//! The permutation runs `x <- (x + k + c_i)^7` for a fixed number of rounds
//! with round constants derived by hashing an ASCII label, so independent
//! implementations can re-derive them. The two-to-one compression
//! `h2(l, r) = perm(l, r) + l + r` is a Davies-Meyer construction: the feed
//! forward stops the permutation from being run backwards.

use std::fmt;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::Felt;

/// Number of rounds of the standard permutation.
pub const MIMC_ROUNDS: usize = 64;

/// Label prefix for round-constant derivation; the constant for round `i`
/// (`i >= 1`) is the first 8 bytes (big-endian) of
/// `SHA-256("zkdid/mimc/gl/" || decimal(i))`, reduced mod p. Round 0 uses 0.
pub const MIMC_CONSTANT_LABEL: &str = "zkdid/mimc/gl/";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashingError {
    /// Attribute commitments require at least one attribute.
    #[error("cannot commit an empty attribute list")]
    EmptyAttributes,
}

/// A 32-byte digest, the output type of all byte-level hashing.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest32> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest32(arr))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

/// SHA-256 of an arbitrary byte string.
pub fn byte_hash(data: &[u8]) -> Digest32 {
    let mut hasher = Sha256::new();
    hasher.update(data);
    Digest32(hasher.finalize().into())
}

/// Round-count and derived constants for the permutation. The standard
/// instance has 64 rounds; reduced-round instances exist for small test
/// configurations and reuse the same derivation schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MimcParams {
    rounds: usize,
    constants: Vec<Felt>,
}

impl MimcParams {
    /// Builds an instance with the given number of rounds (`>= 1`).
    pub fn with_rounds(rounds: usize) -> MimcParams {
        assert!(rounds >= 1, "permutation needs at least one round");
        let constants = (0..rounds).map(derive_round_constant).collect();
        MimcParams { rounds, constants }
    }

    /// The standard 64-round instance.
    pub fn standard() -> &'static MimcParams {
        static STANDARD: OnceLock<MimcParams> = OnceLock::new();
        STANDARD.get_or_init(|| MimcParams::with_rounds(MIMC_ROUNDS))
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn constants(&self) -> &[Felt] {
        &self.constants
    }

    pub fn constant(&self, round: usize) -> Felt {
        self.constants[round]
    }
}

fn derive_round_constant(i: usize) -> Felt {
    if i == 0 {
        return Felt::ZERO;
    }
    let digest = byte_hash(format!("{MIMC_CONSTANT_LABEL}{i}").as_bytes());
    let raw = u64::from_be_bytes(digest.0[..8].try_into().expect("8-byte slice"));
    Felt::new(raw)
}

/// The keyed permutation: `rounds` iterations of `x <- (x + k + c_i)^7`.
pub fn mimc_perm_with(params: &MimcParams, x: Felt, k: Felt) -> Felt {
    let mut state = x;
    for i in 0..params.rounds {
        state = (state + k + params.constants[i]).pow7();
    }
    state
}

/// Standard 64-round permutation.
pub fn mimc_perm(x: Felt, k: Felt) -> Felt {
    mimc_perm_with(MimcParams::standard(), x, k)
}

/// Two-to-one compression with Davies-Meyer feed forward.
pub fn h2_with(params: &MimcParams, l: Felt, r: Felt) -> Felt {
    mimc_perm_with(params, l, r) + l + r
}

/// Standard two-to-one compression.
pub fn h2(l: Felt, r: Felt) -> Felt {
    h2_with(MimcParams::standard(), l, r)
}

/// Folds an attribute list into a single field commitment:
/// `acc = salt; acc = h2(acc, a_i)` in order. Order-sensitive by design.
pub fn commit_attributes_with(
    params: &MimcParams,
    attributes: &[u32],
    salt: Felt,
) -> Result<Felt, HashingError> {
    if attributes.is_empty() {
        return Err(HashingError::EmptyAttributes);
    }
    let mut acc = salt;
    for &a in attributes {
        acc = h2_with(params, acc, Felt::from(a));
    }
    Ok(acc)
}

/// Standard-instance attribute commitment.
pub fn commit_attributes(attributes: &[u32], salt: Felt) -> Result<Felt, HashingError> {
    commit_attributes_with(MimcParams::standard(), attributes, salt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MODULUS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sha256_standard_vectors() {
        assert_eq!(
            byte_hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            byte_hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn byte_hash_is_deterministic_and_spreads() {
        let a = byte_hash(b"some input");
        assert_eq!(a, byte_hash(b"some input"));
        assert_ne!(a, byte_hash(b"some inpuu"));
    }

    #[test]
    fn round_constant_schedule() {
        let params = MimcParams::standard();
        assert_eq!(params.rounds(), 64);
        assert_eq!(params.constant(0), Felt::ZERO);
        // Independent re-derivation of c_1 and c_63.
        for i in [1usize, 63] {
            let digest = byte_hash(format!("zkdid/mimc/gl/{i}").as_bytes());
            let expect = Felt::new(u64::from_be_bytes(digest.0[..8].try_into().unwrap()));
            assert_eq!(params.constant(i), expect);
            assert!(params.constant(i).as_u64() < MODULUS);
        }
        // Reduced-round instances share the same prefix of the schedule.
        let toy = MimcParams::with_rounds(8);
        assert_eq!(toy.constants(), &params.constants()[..8]);
    }

    /// Straight-line re-evaluation of the permutation used as the oracle:
    /// only field add and a repeated-squaring seventh power.
    fn perm_oracle(params: &MimcParams, x: Felt, k: Felt) -> Felt {
        let mut s = x;
        for i in 0..params.rounds() {
            let t = s + k + params.constant(i);
            let mut acc = Felt::ONE;
            for _ in 0..7 {
                acc = acc * t;
            }
            s = acc;
        }
        s
    }

    #[test]
    fn perm_matches_straight_line_oracle() {
        let params = MimcParams::standard();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = Felt::new(rng.gen_range(0..MODULUS));
            let k = Felt::new(rng.gen_range(0..MODULUS));
            assert_eq!(mimc_perm(x, k), perm_oracle(params, x, k));
        }
    }

    // Frozen outputs of the standard 64-round instance, cross-checked
    // against the straight-line oracle in `perm_golden_values`.
    const GOLDEN_PERM_0_0: u64 = 14139896673851430463;
    const GOLDEN_H2_1_2: u64 = 7135190659918509756;

    #[test]
    fn perm_golden_values() {
        let oracle = perm_oracle(MimcParams::standard(), Felt::ZERO, Felt::ZERO);
        assert_eq!(oracle.as_u64(), GOLDEN_PERM_0_0);
        assert_eq!(mimc_perm(Felt::ZERO, Felt::ZERO), oracle);
        // Feed forward adds 0 + 0, so h2(0,0) equals the bare permutation.
        assert_eq!(h2(Felt::ZERO, Felt::ZERO).as_u64(), GOLDEN_PERM_0_0);
        assert_eq!(h2(Felt::ONE, Felt::TWO).as_u64(), GOLDEN_H2_1_2);
        let oracle_12 = perm_oracle(MimcParams::standard(), Felt::ONE, Felt::TWO)
            + Felt::ONE
            + Felt::TWO;
        assert_eq!(oracle_12.as_u64(), GOLDEN_H2_1_2);
    }

    #[test]
    fn perm_sensitivity_and_injectivity() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let k = Felt::new(rng.gen_range(0..MODULUS));
        let mut seen = std::collections::HashSet::new();
        for i in 0..1000u64 {
            let out = mimc_perm(Felt::new(i), k);
            assert!(seen.insert(out.as_u64()), "collision on distinct inputs");
        }
        // Key sensitivity: same x, different keys.
        let x = Felt::new(5);
        assert_ne!(mimc_perm(x, Felt::ZERO), mimc_perm(x, Felt::ONE));
    }

    #[test]
    fn h2_is_asymmetric() {
        let l = Felt::new(11);
        let r = Felt::new(22);
        assert_ne!(h2(l, r), h2(r, l));
    }

    #[test]
    fn commit_single_attribute_is_one_fold() {
        let salt = Felt::new(12345);
        let expect = h2(salt, Felt::from(750u32));
        assert_eq!(commit_attributes(&[750], salt).unwrap(), expect);
    }

    #[test]
    fn commit_folds_in_order() {
        let salt = Felt::new(977);
        let manual = h2(h2(salt, Felt::from(10u32)), Felt::from(20u32));
        assert_eq!(commit_attributes(&[10, 20], salt).unwrap(), manual);
        assert_ne!(
            commit_attributes(&[10, 20], salt).unwrap(),
            commit_attributes(&[20, 10], salt).unwrap()
        );
    }

    #[test]
    fn commit_depends_on_salt() {
        assert_ne!(
            commit_attributes(&[1, 2, 3], Felt::new(1)).unwrap(),
            commit_attributes(&[1, 2, 3], Felt::new(2)).unwrap()
        );
    }

    #[test]
    fn commit_empty_is_rejected() {
        assert_eq!(
            commit_attributes(&[], Felt::ZERO),
            Err(HashingError::EmptyAttributes)
        );
    }
}
