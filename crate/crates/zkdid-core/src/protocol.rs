//! The credential lifecycle, assembled: issuers mint signed attribute
//! bundles and maintain the revocation accumulator, holders turn
//! credentials into zero-knowledge presentations, verifiers check
//! presentations against the registry.
//!
//! A presentation discloses *only* the statement being proven (schema,
//! issuer, attribute name, threshold, accumulator epoch/root, session
//! nonce) plus the proof bytes. Attribute values, the blinding salt, the
//! holder's DID and the accumulator slot stay private.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde_json::{json, Value};
use thiserror::Error;

use crate::accumulator::{Accumulator, AccumulatorError};
use crate::air::predicate::{AirParams, PredicateStatement, PredicateWitness};
use crate::air::AirError;
use crate::field::{Felt, MODULUS};
use crate::hashing::{Digest32, HashingError, MimcParams};
use crate::identity::{
    Credential, CredentialContent, Did, DidDocument, HashSig, IdentityError, Keychain,
    PresentationStatement,
};
use crate::merkle::{alg_verify_with, AlgPath};
use crate::stark::codec::{decode_proof, encode_proof};
use crate::stark::{prove, ProofParams, ProveError};
use crate::vdr::{Transaction, TxPayload, Vdr, VdrError};

/// Envelope version strings for the three JSON wire formats.
pub const ENVELOPE_PRESENTATION: &str = "zkdid-pres/1";
pub const ENVELOPE_REQUEST: &str = "zkdid-req/1";
pub const ENVELOPE_CREDENTIAL: &str = "zkdid-cred/1";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
    #[error("schema {schema:?} has no attribute {attribute:?}")]
    UnknownAttribute { schema: String, attribute: String },
    #[error("schema {0:?} already registered")]
    SchemaExists(String),
    #[error("invalid schema definition: {0}")]
    BadSchema(&'static str),
    #[error("credential does not fit the schema: {0}")]
    SchemaMismatch(&'static str),
    #[error("no credential matches the request")]
    NoMatchingCredential,
    #[error("credential rejected: {0}")]
    BadCredential(&'static str),
    #[error("membership witness does not match the published root")]
    StaleWitness,
    #[error("credential has been revoked")]
    Revoked,
    #[error("issuer has no published accumulator root")]
    NoPublishedRoot,
    #[error("malformed envelope: {0}")]
    Envelope(&'static str),
    #[error(transparent)]
    Hashing(#[from] HashingError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Vdr(#[from] VdrError),
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error(transparent)]
    Air(#[from] AirError),
    #[error(transparent)]
    Prove(#[from] ProveError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// System-wide parameters every party must agree on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemConfig {
    /// Accumulator depth; capacity is `2^tree_depth` credentials.
    pub tree_depth: u8,
    /// Rounds of the algebraic permutation (power of two).
    pub mimc_rounds: u16,
    /// Bit width of attribute range checks.
    pub range_bits: u8,
    /// Key-tree height: each party gets `2^key_height` one-time keys.
    pub key_height: u32,
    /// Recovery veto window in blocks.
    pub timelock_blocks: u64,
    /// STARK query count.
    pub num_queries: usize,
}

impl SystemConfig {
    pub fn standard() -> SystemConfig {
        SystemConfig {
            tree_depth: 16,
            mimc_rounds: 64,
            range_bits: 32,
            key_height: 5,
            timelock_blocks: 100,
            num_queries: 30,
        }
    }

    /// The compression-function instance all commitments use.
    pub fn mimc(&self) -> MimcParams {
        if self.mimc_rounds as usize == MimcParams::standard().rounds() {
            MimcParams::standard().clone()
        } else {
            MimcParams::with_rounds(self.mimc_rounds as usize)
        }
    }

    /// Proof parameters for a schema with `num_attributes` attributes.
    pub fn proof_params(&self, num_attributes: u16) -> ProofParams {
        ProofParams {
            air: AirParams {
                num_attributes,
                tree_depth: self.tree_depth,
                mimc_rounds: self.mimc_rounds,
                range_bits: self.range_bits,
            },
            num_queries: self.num_queries,
        }
    }
}

impl Default for SystemConfig {
    fn default() -> SystemConfig {
        SystemConfig::standard()
    }
}

/// Catalog of credential schemas: a tag names an ordered attribute list.
/// The attribute order fixes each attribute's index inside proofs.
#[derive(Clone, Debug)]
pub struct SchemaRegistry {
    schemas: BTreeMap<String, Vec<String>>,
}

impl SchemaRegistry {
    /// A registry preloaded with the built-in `credit/v1` schema
    /// (single attribute `creditScore`).
    pub fn new() -> SchemaRegistry {
        let mut schemas = BTreeMap::new();
        schemas.insert("credit/v1".to_string(), vec!["creditScore".to_string()]);
        SchemaRegistry { schemas }
    }

    pub fn register(&mut self, tag: &str, attributes: &[&str]) -> Result<(), ProtocolError> {
        if self.schemas.contains_key(tag) {
            return Err(ProtocolError::SchemaExists(tag.to_string()));
        }
        if tag.is_empty() {
            return Err(ProtocolError::BadSchema("empty tag"));
        }
        if attributes.is_empty() {
            return Err(ProtocolError::BadSchema("no attributes"));
        }
        if attributes.len() > u16::MAX as usize {
            return Err(ProtocolError::BadSchema("too many attributes"));
        }
        let mut seen = BTreeSet::new();
        for a in attributes {
            if a.is_empty() {
                return Err(ProtocolError::BadSchema("empty attribute name"));
            }
            if !seen.insert(*a) {
                return Err(ProtocolError::BadSchema("duplicate attribute name"));
            }
        }
        self.schemas.insert(
            tag.to_string(),
            attributes.iter().map(|s| s.to_string()).collect(),
        );
        Ok(())
    }

    pub fn attributes(&self, tag: &str) -> Result<&[String], ProtocolError> {
        self.schemas
            .get(tag)
            .map(|v| v.as_slice())
            .ok_or_else(|| ProtocolError::UnknownSchema(tag.to_string()))
    }

    /// Index of `attribute` within `tag`'s ordered attribute list.
    pub fn attribute_index(&self, tag: &str, attribute: &str) -> Result<u16, ProtocolError> {
        let attrs = self.attributes(tag)?;
        attrs
            .iter()
            .position(|a| a == attribute)
            .map(|i| i as u16)
            .ok_or_else(|| ProtocolError::UnknownAttribute {
                schema: tag.to_string(),
                attribute: attribute.to_string(),
            })
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(|s| s.as_str())
    }
}

impl Default for SchemaRegistry {
    fn default() -> SchemaRegistry {
        SchemaRegistry::new()
    }
}

fn random_felt<R: RngCore>(rng: &mut R) -> Felt {
    loop {
        let x = rng.next_u64();
        if x < MODULUS {
            return Felt::new(x);
        }
    }
}

/// An issuer: a DID, its keychain, and the revocation accumulator for the
/// credentials it has issued.
pub struct IssuerContext {
    pub config: SystemConfig,
    pub did: Did,
    keys: Keychain,
    accumulator: Accumulator,
}

impl IssuerContext {
    /// Derives the issuer's keychain and an empty accumulator.
    pub fn new(config: SystemConfig, seed: [u8; 32]) -> Result<IssuerContext, ProtocolError> {
        let keys = Keychain::generate(seed, config.key_height)?;
        let did = keys.did();
        let accumulator = Accumulator::with_params(config.tree_depth as u32, config.mimc());
        Ok(IssuerContext {
            config,
            did,
            keys,
            accumulator,
        })
    }

    /// Registers the issuer DID and publishes the genesis (epoch 0)
    /// accumulator root.
    pub fn register_on(&mut self, vdr: &mut Vdr) -> Result<(), ProtocolError> {
        let doc = DidDocument {
            did: self.did,
            key_root: self.keys.root(),
            service_endpoint: String::new(),
        };
        let anchor = vdr.height();
        let tx = Transaction::sign(self.did, anchor, TxPayload::RegisterDid(doc), &mut self.keys)?;
        vdr.submit(tx)?;
        self.publish_root(vdr)
    }

    fn publish_root(&mut self, vdr: &mut Vdr) -> Result<(), ProtocolError> {
        let payload = TxPayload::PublishRoot {
            epoch: self.accumulator.epoch(),
            root: self.accumulator.root(),
        };
        let tx = Transaction::sign(self.did, vdr.height(), payload, &mut self.keys)?;
        vdr.submit(tx)?;
        Ok(())
    }

    /// Issues a credential: commits the attributes under a fresh salt,
    /// inserts the commitment into the accumulator, publishes the new
    /// root, and signs the credential for the holder.
    pub fn issue<R: RngCore>(
        &mut self,
        vdr: &mut Vdr,
        schemas: &SchemaRegistry,
        holder: Did,
        schema: &str,
        attributes: &[(String, u32)],
        rng: &mut R,
    ) -> Result<Credential, ProtocolError> {
        let names = schemas.attributes(schema)?;
        if attributes.len() != names.len() {
            return Err(ProtocolError::SchemaMismatch("attribute count"));
        }
        for ((name, _), expected) in attributes.iter().zip(names) {
            if name != expected {
                return Err(ProtocolError::SchemaMismatch("attribute order"));
            }
        }

        let salt = random_felt(rng);
        let content_stub = CredentialContent {
            schema: schema.to_string(),
            issuer: self.did,
            holder,
            attributes: attributes.to_vec(),
            salt,
            slot: 0,
            epoch: 0,
        };
        let commitment = content_stub.commitment(&self.config.mimc())?;
        let slot = self.accumulator.add(commitment)?;
        self.publish_root(vdr)?;

        let content = CredentialContent {
            slot,
            epoch: self.accumulator.epoch(),
            ..content_stub
        };
        Ok(Credential::sign(content, &mut self.keys)?)
    }

    /// Revokes the credential in `slot` and publishes the new root.
    pub fn revoke(&mut self, vdr: &mut Vdr, slot: u32) -> Result<(), ProtocolError> {
        self.accumulator.revoke(slot)?;
        self.publish_root(vdr)
    }

    /// Fresh membership witness for a live slot (holders refresh through
    /// this after any accumulator change).
    pub fn witness(&self, slot: u32) -> Result<AlgPath, ProtocolError> {
        if self.accumulator.is_revoked(slot) {
            return Err(ProtocolError::Revoked);
        }
        Ok(self.accumulator.witness(slot)?)
    }

    pub fn accumulator(&self) -> &Accumulator {
        &self.accumulator
    }

    pub fn key_root(&self) -> Digest32 {
        self.keys.root()
    }

    pub fn keychain(&self) -> &Keychain {
        &self.keys
    }

    /// Rebuilds an issuer from persisted state. The DID is explicit: after
    /// a recovery the active keychain is no longer the one the identifier
    /// was derived from.
    pub fn from_parts(
        config: SystemConfig,
        did: Did,
        keys: Keychain,
        accumulator: Accumulator,
    ) -> IssuerContext {
        IssuerContext {
            config,
            did,
            keys,
            accumulator,
        }
    }
}

/// A holder's wallet: keychain plus stored credentials.
pub struct HolderWallet {
    pub config: SystemConfig,
    pub did: Did,
    keys: Keychain,
    credentials: Vec<Credential>,
}

impl HolderWallet {
    pub fn new(config: SystemConfig, seed: [u8; 32]) -> Result<HolderWallet, ProtocolError> {
        let keys = Keychain::generate(seed, config.key_height)?;
        let did = keys.did();
        Ok(HolderWallet {
            config,
            did,
            keys,
            credentials: Vec::new(),
        })
    }

    /// Rebuilds a wallet from persisted state. The DID is explicit for the
    /// same reason as [`IssuerContext::from_parts`].
    pub fn from_parts(
        config: SystemConfig,
        did: Did,
        keys: Keychain,
        credentials: Vec<Credential>,
    ) -> HolderWallet {
        HolderWallet {
            config,
            did,
            keys,
            credentials,
        }
    }

    pub fn keychain(&self) -> &Keychain {
        &self.keys
    }

    pub fn key_root(&self) -> Digest32 {
        self.keys.root()
    }

    /// Swaps in a replacement keychain (after a finalized recovery). The
    /// DID is unchanged: identifiers are bound to the *initial* key root.
    pub fn adopt_keys(&mut self, keys: Keychain) {
        self.keys = keys;
    }

    /// Registers the holder's DID.
    pub fn register_on(&mut self, vdr: &mut Vdr) -> Result<(), ProtocolError> {
        let doc = DidDocument {
            did: self.did,
            key_root: self.keys.root(),
            service_endpoint: String::new(),
        };
        self.send(vdr, TxPayload::RegisterDid(doc))
    }

    fn send(&mut self, vdr: &mut Vdr, payload: TxPayload) -> Result<(), ProtocolError> {
        let tx = Transaction::sign(self.did, vdr.height(), payload, &mut self.keys)?;
        vdr.submit(tx)?;
        Ok(())
    }

    /// Names this wallet's guardian set and recovery threshold.
    pub fn configure_guardians(
        &mut self,
        vdr: &mut Vdr,
        guardians: Vec<Did>,
        threshold: u32,
    ) -> Result<(), ProtocolError> {
        self.send(
            vdr,
            TxPayload::ConfigureGuardians {
                guardians,
                threshold,
            },
        )
    }

    /// Opens a recovery for `subject` (this wallet must be a guardian).
    pub fn initiate_recovery(
        &mut self,
        vdr: &mut Vdr,
        subject: Did,
        new_key_root: Digest32,
    ) -> Result<(), ProtocolError> {
        self.send(
            vdr,
            TxPayload::InitiateRecovery {
                subject,
                new_key_root,
            },
        )
    }

    /// Adds this guardian's approval to an open recovery.
    pub fn approve_recovery(
        &mut self,
        vdr: &mut Vdr,
        subject: Did,
        new_key_root: Digest32,
    ) -> Result<(), ProtocolError> {
        self.send(
            vdr,
            TxPayload::ApproveRecovery {
                subject,
                new_key_root,
            },
        )
    }

    /// Controller veto: cancels any in-progress recovery of this wallet.
    pub fn cancel_recovery(&mut self, vdr: &mut Vdr) -> Result<(), ProtocolError> {
        let subject = self.did;
        self.send(vdr, TxPayload::CancelRecovery { subject })
    }

    /// Completes a time-locked recovery of `subject`.
    pub fn finalize_recovery(&mut self, vdr: &mut Vdr, subject: Did) -> Result<(), ProtocolError> {
        self.send(vdr, TxPayload::FinalizeRecovery { subject })
    }

    /// Accepts a credential after checking it is bound to this wallet and
    /// carries a valid issuer signature per the registry.
    pub fn add_credential(&mut self, credential: Credential, vdr: &Vdr) -> Result<(), ProtocolError> {
        if credential.content.holder != self.did {
            return Err(ProtocolError::BadCredential("bound to a different holder"));
        }
        let issuer_doc = vdr
            .document(&credential.content.issuer)
            .ok_or(ProtocolError::BadCredential("issuer not registered"))?;
        if !credential.verify(&issuer_doc.key_root) {
            return Err(ProtocolError::BadCredential("issuer signature invalid"));
        }
        self.credentials.push(credential);
        Ok(())
    }

    pub fn credentials(&self) -> &[Credential] {
        &self.credentials
    }

    /// Builds a zero-knowledge presentation answering `request`, using a
    /// fresh membership `witness` for the matching credential's slot.
    ///
    /// The proof is bound to the canonical statement encoding, which
    /// includes the verifier's nonce, so it cannot be replayed across
    /// sessions.
    pub fn present<R: RngCore>(
        &self,
        request: &PresentationRequest,
        schemas: &SchemaRegistry,
        vdr: &Vdr,
        witness: &AlgPath,
        rng: &mut R,
    ) -> Result<Presentation, ProtocolError> {
        let credential = self
            .credentials
            .iter()
            .rev()
            .find(|c| c.content.schema == request.schema && c.content.issuer == request.issuer)
            .ok_or(ProtocolError::NoMatchingCredential)?;

        let attribute_index = schemas.attribute_index(&request.schema, &request.attribute)?;
        let (epoch, root) = vdr
            .latest_root(&request.issuer)
            .ok_or(ProtocolError::NoPublishedRoot)?;

        let mimc = self.config.mimc();
        let commitment = credential.content.commitment(&mimc)?;
        if !alg_verify_with(&mimc, root, commitment, witness) {
            return Err(ProtocolError::StaleWitness);
        }

        let statement = PresentationStatement {
            schema: request.schema.clone(),
            issuer: request.issuer,
            attribute: request.attribute.clone(),
            threshold: request.threshold,
            epoch,
            root,
            nonce: request.nonce,
        };

        let air_statement = PredicateStatement {
            attribute_index,
            threshold: request.threshold,
            accumulator_root: root,
        };
        let values: Vec<u32> = credential.content.attributes.iter().map(|(_, v)| *v).collect();
        let air_witness = PredicateWitness {
            attributes: values,
            salt: credential.content.salt,
            path: witness.clone(),
        };
        let params = self
            .config
            .proof_params(credential.content.attributes.len() as u16);
        let proof = prove(
            &params,
            &air_statement,
            &air_witness,
            &statement.to_bytes(),
            rng,
        )?;
        Ok(Presentation {
            statement,
            proof_bytes: encode_proof(&params, &proof),
        })
    }
}

/// What a verifier asks a holder to prove.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresentationRequest {
    pub schema: String,
    pub attribute: String,
    pub threshold: u32,
    pub issuer: Did,
    pub nonce: [u8; 16],
}

/// A holder's answer: the statement plus the serialized proof. Nothing
/// else — no credential fields, no holder identifier, no slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presentation {
    pub statement: PresentationStatement,
    pub proof_bytes: Vec<u8>,
}

/// Why a presentation was rejected. The display form is a stable
/// kebab-case token, used by scenario assertions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    /// Statement nonce differs from the request's nonce.
    NonceMismatch,
    /// Nonce already accepted once.
    NonceReplayed,
    /// Statement fields disagree with the request.
    StatementMismatch,
    UnknownSchema,
    UnknownAttribute,
    /// Issuer unregistered or has no published roots.
    UnknownIssuer,
    /// Statement pins an accumulator root that is no longer current.
    StaleRoot,
    /// Proof bytes failed to decode.
    MalformedProof,
    /// Proof parameters disagree with the pinned system configuration.
    WrongParameters,
    /// The proof itself failed verification.
    InvalidProof,
}

impl RejectReason {
    /// All reasons, in checking order.
    pub const ALL: [RejectReason; 10] = [
        RejectReason::NonceMismatch,
        RejectReason::NonceReplayed,
        RejectReason::StatementMismatch,
        RejectReason::UnknownSchema,
        RejectReason::UnknownAttribute,
        RejectReason::UnknownIssuer,
        RejectReason::StaleRoot,
        RejectReason::MalformedProof,
        RejectReason::WrongParameters,
        RejectReason::InvalidProof,
    ];

    /// Inverse of the display form.
    pub fn from_token(token: &str) -> Option<RejectReason> {
        RejectReason::ALL.into_iter().find(|r| r.to_string() == token)
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::NonceMismatch => "nonce-mismatch",
            RejectReason::NonceReplayed => "nonce-replayed",
            RejectReason::StatementMismatch => "statement-mismatch",
            RejectReason::UnknownSchema => "unknown-schema",
            RejectReason::UnknownAttribute => "unknown-attribute",
            RejectReason::UnknownIssuer => "unknown-issuer",
            RejectReason::StaleRoot => "stale-root",
            RejectReason::MalformedProof => "malformed-proof",
            RejectReason::WrongParameters => "wrong-parameters",
            RejectReason::InvalidProof => "invalid-proof",
        };
        f.write_str(s)
    }
}

/// Outcome of checking a presentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject(RejectReason),
}

impl Decision {
    /// Inverse of the display form (`accept` or `reject:<reason>`).
    pub fn from_token(token: &str) -> Option<Decision> {
        if token == "accept" {
            return Some(Decision::Accept);
        }
        let reason = token.strip_prefix("reject:")?;
        RejectReason::from_token(reason).map(Decision::Reject)
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Accept => f.write_str("accept"),
            Decision::Reject(r) => write!(f, "reject:{r}"),
        }
    }
}

/// A verifier: pins a system configuration and schema catalog, hands out
/// single-use nonces, and checks presentations against the registry.
pub struct VerifierContext {
    pub config: SystemConfig,
    schemas: SchemaRegistry,
    used_nonces: BTreeSet<[u8; 16]>,
}

impl VerifierContext {
    pub fn new(config: SystemConfig, schemas: SchemaRegistry) -> VerifierContext {
        VerifierContext {
            config,
            schemas,
            used_nonces: BTreeSet::new(),
        }
    }

    /// Rebuilds a verifier from persisted state, including burned nonces.
    pub fn from_parts(
        config: SystemConfig,
        schemas: SchemaRegistry,
        used_nonces: BTreeSet<[u8; 16]>,
    ) -> VerifierContext {
        VerifierContext {
            config,
            schemas,
            used_nonces,
        }
    }

    pub fn used_nonces(&self) -> &BTreeSet<[u8; 16]> {
        &self.used_nonces
    }

    /// Builds a request with a fresh session nonce.
    pub fn make_request<R: RngCore>(
        &self,
        schema: &str,
        attribute: &str,
        threshold: u32,
        issuer: Did,
        rng: &mut R,
    ) -> Result<PresentationRequest, ProtocolError> {
        // Fail early on schemas this verifier would reject anyway.
        self.schemas.attribute_index(schema, attribute)?;
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        Ok(PresentationRequest {
            schema: schema.to_string(),
            attribute: attribute.to_string(),
            threshold,
            issuer,
            nonce,
        })
    }

    /// Checks a presentation against the request it should answer and the
    /// current registry state. Cheap structural checks run first; the
    /// proof is verified last. An accepted nonce is burned.
    pub fn verify_presentation(
        &mut self,
        vdr: &Vdr,
        request: &PresentationRequest,
        presentation: &Presentation,
    ) -> Decision {
        use RejectReason as R;
        let stmt = &presentation.statement;

        if stmt.nonce != request.nonce {
            return Decision::Reject(R::NonceMismatch);
        }
        if self.used_nonces.contains(&stmt.nonce) {
            return Decision::Reject(R::NonceReplayed);
        }
        if stmt.schema != request.schema
            || stmt.attribute != request.attribute
            || stmt.threshold != request.threshold
            || stmt.issuer != request.issuer
        {
            return Decision::Reject(R::StatementMismatch);
        }

        let attribute_index = match self.schemas.attribute_index(&stmt.schema, &stmt.attribute) {
            Ok(i) => i,
            Err(ProtocolError::UnknownSchema(_)) => return Decision::Reject(R::UnknownSchema),
            Err(_) => return Decision::Reject(R::UnknownAttribute),
        };
        let num_attributes = self
            .schemas
            .attributes(&stmt.schema)
            .expect("schema resolved")
            .len() as u16;

        let Some((epoch, root)) = vdr.latest_root(&stmt.issuer) else {
            return Decision::Reject(R::UnknownIssuer);
        };
        if stmt.epoch != epoch || stmt.root != root {
            return Decision::Reject(R::StaleRoot);
        }

        let Ok((params, proof)) = decode_proof(&presentation.proof_bytes) else {
            return Decision::Reject(R::MalformedProof);
        };
        if params != self.config.proof_params(num_attributes) {
            return Decision::Reject(R::WrongParameters);
        }

        let air_statement = PredicateStatement {
            attribute_index,
            threshold: stmt.threshold,
            accumulator_root: root,
        };
        if crate::stark::verify(&params, &air_statement, &proof, &stmt.to_bytes()).is_err() {
            return Decision::Reject(R::InvalidProof);
        }
        self.used_nonces.insert(stmt.nonce);
        Decision::Accept
    }
}

fn get_str<'a>(v: &'a Value, key: &'static str) -> Result<&'a str, ProtocolError> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or(ProtocolError::Envelope("missing string field"))
}

fn get_u64(v: &Value, key: &'static str) -> Result<u64, ProtocolError> {
    v.get(key)
        .and_then(Value::as_u64)
        .ok_or(ProtocolError::Envelope("missing integer field"))
}

fn get_u32(v: &Value, key: &'static str) -> Result<u32, ProtocolError> {
    u32::try_from(get_u64(v, key)?).map_err(|_| ProtocolError::Envelope("integer out of range"))
}

fn parse_did(s: &str) -> Result<Did, ProtocolError> {
    s.parse().map_err(|_| ProtocolError::Envelope("bad DID"))
}

fn parse_hex_array<const N: usize>(s: &str) -> Result<[u8; N], ProtocolError> {
    let bytes = hex::decode(s).map_err(|_| ProtocolError::Envelope("bad hex"))?;
    bytes
        .try_into()
        .map_err(|_| ProtocolError::Envelope("wrong hex length"))
}

fn parse_felt(s: &str) -> Result<Felt, ProtocolError> {
    let raw: [u8; 8] = parse_hex_array(s)?;
    Felt::from_be_bytes(raw).ok_or(ProtocolError::Envelope("non-canonical field element"))
}

fn check_version(v: &Value, expected: &'static str) -> Result<(), ProtocolError> {
    if v.get("v").and_then(Value::as_str) != Some(expected) {
        return Err(ProtocolError::Envelope("wrong envelope version"));
    }
    Ok(())
}

/// Serializes a request as a `zkdid-req/1` JSON envelope.
pub fn request_to_json(req: &PresentationRequest) -> String {
    json!({
        "v": ENVELOPE_REQUEST,
        "schema": req.schema,
        "attribute": req.attribute,
        "threshold": req.threshold,
        "issuer": req.issuer.to_string(),
        "nonce": hex::encode(req.nonce),
    })
    .to_string()
}

pub fn request_from_json(text: &str) -> Result<PresentationRequest, ProtocolError> {
    let v: Value = serde_json::from_str(text)?;
    check_version(&v, ENVELOPE_REQUEST)?;
    Ok(PresentationRequest {
        schema: get_str(&v, "schema")?.to_string(),
        attribute: get_str(&v, "attribute")?.to_string(),
        threshold: get_u32(&v, "threshold")?,
        issuer: parse_did(get_str(&v, "issuer")?)?,
        nonce: parse_hex_array(get_str(&v, "nonce")?)?,
    })
}

/// Serializes a presentation as a `zkdid-pres/1` JSON envelope.
pub fn presentation_to_json(p: &Presentation) -> String {
    json!({
        "v": ENVELOPE_PRESENTATION,
        "statement": {
            "schema": p.statement.schema,
            "issuer": p.statement.issuer.to_string(),
            "attribute": p.statement.attribute,
            "threshold": p.statement.threshold,
            "epoch": p.statement.epoch,
            "root": hex::encode(p.statement.root.to_be_bytes()),
            "nonce": hex::encode(p.statement.nonce),
        },
        "proof": hex::encode(&p.proof_bytes),
    })
    .to_string()
}

pub fn presentation_from_json(text: &str) -> Result<Presentation, ProtocolError> {
    let v: Value = serde_json::from_str(text)?;
    check_version(&v, ENVELOPE_PRESENTATION)?;
    let stmt = v
        .get("statement")
        .ok_or(ProtocolError::Envelope("missing statement"))?;
    let statement = PresentationStatement {
        schema: get_str(stmt, "schema")?.to_string(),
        issuer: parse_did(get_str(stmt, "issuer")?)?,
        attribute: get_str(stmt, "attribute")?.to_string(),
        threshold: get_u32(stmt, "threshold")?,
        epoch: get_u64(stmt, "epoch")?,
        root: parse_felt(get_str(stmt, "root")?)?,
        nonce: parse_hex_array(get_str(stmt, "nonce")?)?,
    };
    let proof_bytes =
        hex::decode(get_str(&v, "proof")?).map_err(|_| ProtocolError::Envelope("bad hex"))?;
    Ok(Presentation {
        statement,
        proof_bytes,
    })
}

/// Serializes a credential as a `zkdid-cred/1` JSON envelope.
pub fn credential_to_json(c: &Credential) -> String {
    let attrs: Vec<Value> = c
        .content
        .attributes
        .iter()
        .map(|(name, value)| json!({"name": name, "value": value}))
        .collect();
    json!({
        "v": ENVELOPE_CREDENTIAL,
        "schema": c.content.schema,
        "issuer": c.content.issuer.to_string(),
        "holder": c.content.holder.to_string(),
        "attributes": attrs,
        "salt": hex::encode(c.content.salt.to_be_bytes()),
        "slot": c.content.slot,
        "epoch": c.content.epoch,
        "signature": hex::encode(c.signature.to_bytes()),
    })
    .to_string()
}

pub fn credential_from_json(text: &str) -> Result<Credential, ProtocolError> {
    let v: Value = serde_json::from_str(text)?;
    check_version(&v, ENVELOPE_CREDENTIAL)?;
    let attrs_json = v
        .get("attributes")
        .and_then(Value::as_array)
        .ok_or(ProtocolError::Envelope("missing attributes"))?;
    let mut attributes = Vec::with_capacity(attrs_json.len());
    for a in attrs_json {
        attributes.push((get_str(a, "name")?.to_string(), get_u32(a, "value")?));
    }
    let content = CredentialContent {
        schema: get_str(&v, "schema")?.to_string(),
        issuer: parse_did(get_str(&v, "issuer")?)?,
        holder: parse_did(get_str(&v, "holder")?)?,
        attributes,
        salt: parse_felt(get_str(&v, "salt")?)?,
        slot: get_u32(&v, "slot")?,
        epoch: get_u64(&v, "epoch")?,
    };
    let sig_bytes =
        hex::decode(get_str(&v, "signature")?).map_err(|_| ProtocolError::Envelope("bad hex"))?;
    let signature =
        HashSig::from_bytes(&sig_bytes).map_err(|_| ProtocolError::Envelope("bad signature"))?;
    Ok(Credential { content, signature })
}
