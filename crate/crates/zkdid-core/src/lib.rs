//! Core library for a STARK-based anonymous credential system: issuers
//! commit attribute bundles into an on-ledger accumulator, holders prove
//! threshold predicates about single attributes in zero knowledge, and a
//! deterministic in-process ledger carries DID documents, revocation roots
//! and guardian-based key recovery.
//!
//! Layering (bottom up): [`field`] and [`hashing`] provide the Goldilocks
//! field, SHA-256 byte hashing and the MiMC-style permutation; [`merkle`]
//! builds salted byte trees and algebraic `h2` trees; [`transcript`] is the
//! Fiat-Shamir hash chain; [`air`] defines the execution trace and
//! constraint system for the credential predicate; [`fri`] and [`stark`]
//! produce and check proofs; [`accumulator`], [`identity`], [`vdr`] and
//! [`protocol`] assemble the credential lifecycle on top.

pub mod accumulator;
pub mod air;
pub mod field;
pub mod fri;
pub mod hashing;
pub mod identity;
pub mod merkle;
pub mod protocol;
pub mod stark;
pub mod transcript;
pub mod vdr;

pub use accumulator::{Accumulator, AccumulatorError};
pub use field::{EvalDomain, Felt, FieldError};
pub use identity::{
    verify_sig, Credential, CredentialContent, Did, DidDocument, HashSig, IdentityError, Keychain,
    PresentationStatement,
};
pub use hashing::{byte_hash, commit_attributes, h2, mimc_perm, Digest32, MimcParams};
pub use merkle::{
    alg_open, alg_root, alg_verify, byte_verify, AlgPath, ByteMerkleTree, BytePath, MerkleError,
};
pub use air::predicate::{AirParams, PredicateStatement, PredicateWitness};
pub use air::{Air, AirError, Trace};
pub use protocol::{
    Decision, HolderWallet, IssuerContext, Presentation, PresentationRequest, ProtocolError,
    RejectReason, SchemaRegistry, SystemConfig, VerifierContext,
};
pub use stark::codec::{decode_proof, encode_proof, DecodeError};
pub use stark::{prove, verify, ProofParams, StarkProof, VerifyError};
pub use transcript::Transcript;
pub use vdr::{Block, DidRecord, RecoveryStatus, Transaction, TxPayload, Vdr, VdrError};
