//! Verifiable data registry: a deterministic, in-process ledger.
//!
//! The registry orders signed transactions into blocks. `submit` validates
//! a transaction against the working state and applies it immediately;
//! `tick` seals everything submitted since the last tick into the next
//! block and advances the chain height. There is no consensus layer — the
//! point is a single, replayable ordering with the same authorization
//! rules a distributed registry would enforce.
//!
//! Replay protection is structural: every transaction is signed by a
//! one-time key, and the registry remembers which key indices each DID has
//! used under its current key root. A transaction also names an anchor
//! height, which must fall inside a recent window, so signed messages
//! cannot be held back indefinitely.
//!
//! Key recovery is guardian-based: a DID's controller designates guardian
//! DIDs and a threshold; guardians vote a replacement key root in, which
//! takes effect only after a timelock during which the current controller
//! can cancel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read as _, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::field::Felt;
use crate::hashing::{byte_hash, Digest32};
use crate::identity::{verify_sig, Did, DidDocument, HashSig, Keychain};

/// How far behind the chain tip a transaction's anchor may lag.
pub const ANCHOR_WINDOW: u64 = 1000;

/// Default number of blocks a recovery stays cancellable after reaching
/// its approval threshold.
pub const DEFAULT_TIMELOCK_BLOCKS: u64 = 100;

const LOG_HEADER: &str = "ZKDL v1";

const TAG_REGISTER: u8 = 0x10;
const TAG_UPDATE: u8 = 0x11;
const TAG_PUBLISH_ROOT: u8 = 0x12;
const TAG_CONFIGURE_GUARDIANS: u8 = 0x13;
const TAG_INITIATE_RECOVERY: u8 = 0x14;
const TAG_APPROVE_RECOVERY: u8 = 0x15;
const TAG_CANCEL_RECOVERY: u8 = 0x16;
const TAG_FINALIZE_RECOVERY: u8 = 0x17;

#[derive(Debug, Error)]
pub enum VdrError {
    #[error("unknown DID {0}")]
    UnknownDid(Did),
    #[error("signature does not verify against the signer's key root")]
    BadSignature,
    #[error("one-time key index {index} already used by {did}")]
    KeyReuse { did: Did, index: u32 },
    #[error("anchor height {anchor} outside the window ending at {height}")]
    BadAnchor { anchor: u64, height: u64 },
    #[error("signer not authorized: {0}")]
    Unauthorized(&'static str),
    #[error("invalid transition: {0}")]
    InvalidTransition(&'static str),
    #[error("signer is not a guardian of the subject")]
    NotGuardian,
    #[error("guardian already approved this recovery")]
    DuplicateApproval,
    #[error("timelock not elapsed: locked at {locked_at}, finalizable at {required}, height {height}")]
    TimelockNotElapsed {
        locked_at: u64,
        required: u64,
        height: u64,
    },
    #[error("no recovery in progress")]
    NoPendingRecovery,
    #[error("revocation root epoch gap: expected {expected}, got {got}")]
    EpochGap { expected: u64, got: u64 },
    #[error("malformed block log: {0}")]
    MalformedLog(&'static str),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// The signed instruction inside a transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxPayload {
    /// Creates a DID record. Self-certifying: the document's identifier
    /// must be the hash of its key root, and the registrant signs with
    /// that same root.
    RegisterDid(DidDocument),
    /// Replaces the signer's document (key rotation, service change).
    UpdateDocument(DidDocument),
    /// Appends the next revocation-accumulator root to the signer's
    /// published stream. Epochs must be contiguous from 0.
    PublishRoot { epoch: u64, root: Felt },
    /// Sets the signer's guardian set and approval threshold.
    ConfigureGuardians { guardians: Vec<Did>, threshold: u32 },
    /// Starts a recovery of `subject` to a new key root. Guardian only;
    /// counts as the initiator's approval.
    InitiateRecovery { subject: Did, new_key_root: Digest32 },
    /// Adds a guardian approval to the pending recovery. The named root
    /// must match the pending one.
    ApproveRecovery { subject: Did, new_key_root: Digest32 },
    /// Controller veto: abandons the active recovery at any stage.
    CancelRecovery { subject: Did },
    /// Installs the recovered key root once the timelock has elapsed.
    /// Any registered party may execute it.
    FinalizeRecovery { subject: Did },
}

impl TxPayload {
    /// Canonical encoding; the byte string covered by the signature
    /// (together with signer and anchor).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            TxPayload::RegisterDid(doc) => {
                out.push(TAG_REGISTER);
                out.extend_from_slice(&doc.to_bytes());
            }
            TxPayload::UpdateDocument(doc) => {
                out.push(TAG_UPDATE);
                out.extend_from_slice(&doc.to_bytes());
            }
            TxPayload::PublishRoot { epoch, root } => {
                out.push(TAG_PUBLISH_ROOT);
                out.extend_from_slice(&epoch.to_be_bytes());
                out.extend_from_slice(&root.to_be_bytes());
            }
            TxPayload::ConfigureGuardians {
                guardians,
                threshold,
            } => {
                out.push(TAG_CONFIGURE_GUARDIANS);
                out.extend_from_slice(&(guardians.len() as u32).to_be_bytes());
                for g in guardians {
                    out.extend_from_slice(g.id().as_bytes());
                }
                out.extend_from_slice(&threshold.to_be_bytes());
            }
            TxPayload::InitiateRecovery {
                subject,
                new_key_root,
            } => {
                out.push(TAG_INITIATE_RECOVERY);
                out.extend_from_slice(subject.id().as_bytes());
                out.extend_from_slice(new_key_root.as_bytes());
            }
            TxPayload::ApproveRecovery {
                subject,
                new_key_root,
            } => {
                out.push(TAG_APPROVE_RECOVERY);
                out.extend_from_slice(subject.id().as_bytes());
                out.extend_from_slice(new_key_root.as_bytes());
            }
            TxPayload::CancelRecovery { subject } => {
                out.push(TAG_CANCEL_RECOVERY);
                out.extend_from_slice(subject.id().as_bytes());
            }
            TxPayload::FinalizeRecovery { subject } => {
                out.push(TAG_FINALIZE_RECOVERY);
                out.extend_from_slice(subject.id().as_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TxPayload, VdrError> {
        let malformed = |r| VdrError::MalformedLog(r);
        let (&tag, body) = bytes
            .split_first()
            .ok_or(VdrError::MalformedLog("empty payload"))?;
        let digest_at = |at: usize| -> Result<Digest32, VdrError> {
            let raw: [u8; 32] = body
                .get(at..at + 32)
                .ok_or(malformed("truncated payload"))?
                .try_into()
                .unwrap();
            Ok(Digest32(raw))
        };
        match tag {
            TAG_REGISTER | TAG_UPDATE => {
                let doc = DidDocument::from_bytes(body)
                    .map_err(|_| malformed("bad document payload"))?;
                if tag == TAG_REGISTER {
                    Ok(TxPayload::RegisterDid(doc))
                } else {
                    Ok(TxPayload::UpdateDocument(doc))
                }
            }
            TAG_PUBLISH_ROOT => {
                if body.len() != 16 {
                    return Err(malformed("bad root payload"));
                }
                let epoch = u64::from_be_bytes(body[..8].try_into().unwrap());
                let root = Felt::from_be_bytes(body[8..16].try_into().unwrap())
                    .ok_or(malformed("non-canonical root"))?;
                Ok(TxPayload::PublishRoot { epoch, root })
            }
            TAG_CONFIGURE_GUARDIANS => {
                if body.len() < 8 {
                    return Err(malformed("bad guardian payload"));
                }
                let count = u32::from_be_bytes(body[..4].try_into().unwrap()) as usize;
                if body.len() != 4 + 32 * count + 4 {
                    return Err(malformed("bad guardian payload"));
                }
                let mut guardians = Vec::with_capacity(count);
                for i in 0..count {
                    let raw: [u8; 32] = body[4 + 32 * i..4 + 32 * (i + 1)].try_into().unwrap();
                    guardians.push(Did::from_id(Digest32(raw)));
                }
                let threshold =
                    u32::from_be_bytes(body[4 + 32 * count..].try_into().unwrap());
                Ok(TxPayload::ConfigureGuardians {
                    guardians,
                    threshold,
                })
            }
            TAG_INITIATE_RECOVERY | TAG_APPROVE_RECOVERY => {
                if body.len() != 64 {
                    return Err(malformed("bad recovery payload"));
                }
                let subject = Did::from_id(digest_at(0)?);
                let new_key_root = digest_at(32)?;
                if tag == TAG_INITIATE_RECOVERY {
                    Ok(TxPayload::InitiateRecovery {
                        subject,
                        new_key_root,
                    })
                } else {
                    Ok(TxPayload::ApproveRecovery {
                        subject,
                        new_key_root,
                    })
                }
            }
            TAG_CANCEL_RECOVERY | TAG_FINALIZE_RECOVERY => {
                if body.len() != 32 {
                    return Err(malformed("bad recovery payload"));
                }
                let subject = Did::from_id(digest_at(0)?);
                if tag == TAG_CANCEL_RECOVERY {
                    Ok(TxPayload::CancelRecovery { subject })
                } else {
                    Ok(TxPayload::FinalizeRecovery { subject })
                }
            }
            _ => Err(malformed("unknown payload tag")),
        }
    }
}

/// A signed registry transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub signer: Did,
    /// Chain height the signer observed; must be within [`ANCHOR_WINDOW`]
    /// of the tip at submission.
    pub anchor_height: u64,
    pub payload: TxPayload,
    pub signature: HashSig,
}

impl Transaction {
    /// The byte string the signature covers.
    pub fn signing_bytes(signer: &Did, payload: &TxPayload, anchor_height: u64) -> Vec<u8> {
        let mut msg = Vec::new();
        msg.extend_from_slice(signer.id().as_bytes());
        msg.extend_from_slice(&payload.to_bytes());
        msg.extend_from_slice(&anchor_height.to_be_bytes());
        msg
    }

    /// Builds and signs a transaction, consuming one key of the chain.
    pub fn sign(
        signer: Did,
        anchor_height: u64,
        payload: TxPayload,
        keys: &mut Keychain,
    ) -> Result<Transaction, crate::identity::IdentityError> {
        let msg = Transaction::signing_bytes(&signer, &payload, anchor_height);
        let signature = keys.sign(&msg)?;
        Ok(Transaction {
            signer,
            anchor_height,
            payload,
            signature,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload.to_bytes();
        let sig = self.signature.to_bytes();
        let mut out = Vec::with_capacity(32 + 8 + 4 + payload.len() + 4 + sig.len());
        out.extend_from_slice(self.signer.id().as_bytes());
        out.extend_from_slice(&self.anchor_height.to_be_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&(sig.len() as u32).to_be_bytes());
        out.extend_from_slice(&sig);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Transaction, VdrError> {
        let malformed = |r| VdrError::MalformedLog(r);
        if bytes.len() < 44 {
            return Err(malformed("truncated transaction"));
        }
        let signer = Did::from_id(Digest32(bytes[..32].try_into().unwrap()));
        let anchor_height = u64::from_be_bytes(bytes[32..40].try_into().unwrap());
        let payload_len = u32::from_be_bytes(bytes[40..44].try_into().unwrap()) as usize;
        let rest = &bytes[44..];
        if rest.len() < payload_len + 4 {
            return Err(malformed("truncated transaction"));
        }
        let payload = TxPayload::from_bytes(&rest[..payload_len])?;
        let sig_len =
            u32::from_be_bytes(rest[payload_len..payload_len + 4].try_into().unwrap()) as usize;
        let sig_bytes = &rest[payload_len + 4..];
        if sig_bytes.len() != sig_len {
            return Err(malformed("truncated transaction"));
        }
        let signature =
            HashSig::from_bytes(sig_bytes).map_err(|_| malformed("bad signature encoding"))?;
        Ok(Transaction {
            signer,
            anchor_height,
            payload,
            signature,
        })
    }
}

/// A sealed batch of transactions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&(self.transactions.len() as u32).to_be_bytes());
        for tx in &self.transactions {
            let bytes = tx.to_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Block, VdrError> {
        let malformed = |r| VdrError::MalformedLog(r);
        if bytes.len() < 12 {
            return Err(malformed("truncated block"));
        }
        let height = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        let count = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if count > bytes.len() / 4 {
            return Err(malformed("transaction count exceeds block size"));
        }
        let mut at = 12;
        let mut transactions = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32::from_be_bytes(
                bytes
                    .get(at..at + 4)
                    .ok_or(malformed("truncated block"))?
                    .try_into()
                    .unwrap(),
            ) as usize;
            at += 4;
            let tx_bytes = bytes.get(at..at + len).ok_or(malformed("truncated block"))?;
            transactions.push(Transaction::from_bytes(tx_bytes)?);
            at += len;
        }
        if at != bytes.len() {
            return Err(malformed("trailing bytes in block"));
        }
        Ok(Block {
            height,
            transactions,
        })
    }
}

/// Progress of a guardian recovery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RecoveryStatus {
    None,
    /// Collecting approvals.
    Pending {
        new_key_root: Digest32,
        approvals: BTreeSet<Did>,
    },
    /// Threshold reached; waiting out the veto window.
    TimeLocked {
        new_key_root: Digest32,
        approvals: BTreeSet<Did>,
        locked_at: u64,
    },
}

/// Everything the registry tracks about one DID.
#[derive(Clone, Debug)]
pub struct DidRecord {
    pub document: DidDocument,
    pub guardians: Vec<Did>,
    pub recovery_threshold: u32,
    pub recovery: RecoveryStatus,
    /// One-time key indices spent under the *current* key root.
    pub used_key_indices: BTreeSet<u32>,
}

/// The registry itself. See the module docs for the execution model.
#[derive(Clone, Debug)]
pub struct Vdr {
    height: u64,
    timelock_blocks: u64,
    dids: BTreeMap<Did, DidRecord>,
    /// Published accumulator roots per DID; index = epoch.
    roots: BTreeMap<Did, Vec<Felt>>,
    pending: Vec<Transaction>,
    blocks: Vec<Block>,
}

impl Vdr {
    pub fn new() -> Vdr {
        Vdr::with_timelock(DEFAULT_TIMELOCK_BLOCKS)
    }

    pub fn with_timelock(timelock_blocks: u64) -> Vdr {
        Vdr {
            height: 0,
            timelock_blocks,
            dids: BTreeMap::new(),
            roots: BTreeMap::new(),
            pending: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Number of sealed blocks.
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn timelock_blocks(&self) -> u64 {
        self.timelock_blocks
    }

    pub fn record(&self, did: &Did) -> Option<&DidRecord> {
        self.dids.get(did)
    }

    pub fn document(&self, did: &Did) -> Option<&DidDocument> {
        self.dids.get(did).map(|r| &r.document)
    }

    pub fn is_registered(&self, did: &Did) -> bool {
        self.dids.contains_key(did)
    }

    /// All registered DIDs, in sorted order.
    pub fn dids(&self) -> impl Iterator<Item = &Did> {
        self.dids.keys()
    }

    /// Latest `(epoch, root)` published by `did`, if any.
    pub fn latest_root(&self, did: &Did) -> Option<(u64, Felt)> {
        let hist = self.roots.get(did)?;
        let root = *hist.last()?;
        Some((hist.len() as u64 - 1, root))
    }

    /// Root `did` published for `epoch`, if any.
    pub fn root_at(&self, did: &Did, epoch: u64) -> Option<Felt> {
        self.roots.get(did)?.get(epoch as usize).copied()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Transactions accepted but not yet sealed into a block.
    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    /// Validates a transaction against the working state and applies it.
    /// Rejected transactions leave no trace.
    pub fn submit(&mut self, tx: Transaction) -> Result<(), VdrError> {
        self.validate(&tx)?;
        self.apply(&tx);
        self.pending.push(tx);
        Ok(())
    }

    /// Seals everything submitted since the last tick into the next block
    /// (possibly empty) and advances the height. Returns the new height.
    pub fn tick(&mut self) -> u64 {
        let block = Block {
            height: self.height,
            transactions: std::mem::take(&mut self.pending),
        };
        self.blocks.push(block);
        self.height += 1;
        self.height
    }

    fn validate(&self, tx: &Transaction) -> Result<(), VdrError> {
        if tx.anchor_height > self.height {
            return Err(VdrError::BadAnchor {
                anchor: tx.anchor_height,
                height: self.height,
            });
        }
        if self.height - tx.anchor_height > ANCHOR_WINDOW {
            return Err(VdrError::BadAnchor {
                anchor: tx.anchor_height,
                height: self.height,
            });
        }

        // Resolve the key root the signature must verify under, plus the
        // spent-index set for replay detection.
        let (key_root, used) = match (&tx.payload, self.dids.get(&tx.signer)) {
            (TxPayload::RegisterDid(doc), None) => (doc.key_root, None),
            (TxPayload::RegisterDid(_), Some(_)) => {
                return Err(VdrError::InvalidTransition("DID already registered"));
            }
            (_, Some(record)) => (record.document.key_root, Some(&record.used_key_indices)),
            (_, None) => return Err(VdrError::UnknownDid(tx.signer)),
        };
        if let Some(used) = used {
            if used.contains(&tx.signature.key_index) {
                return Err(VdrError::KeyReuse {
                    did: tx.signer,
                    index: tx.signature.key_index,
                });
            }
        }
        let msg = Transaction::signing_bytes(&tx.signer, &tx.payload, tx.anchor_height);
        if !verify_sig(&key_root, &msg, &tx.signature) {
            return Err(VdrError::BadSignature);
        }

        match &tx.payload {
            TxPayload::RegisterDid(doc) => {
                if doc.did != tx.signer {
                    return Err(VdrError::Unauthorized("registrant must be the document DID"));
                }
                if *doc.did.id() != byte_hash(doc.key_root.as_bytes()) {
                    return Err(VdrError::Unauthorized(
                        "identifier does not match the key root",
                    ));
                }
            }
            TxPayload::UpdateDocument(doc) => {
                if doc.did != tx.signer {
                    return Err(VdrError::Unauthorized("only the controller updates a document"));
                }
            }
            TxPayload::PublishRoot { epoch, .. } => {
                let expected = self.roots.get(&tx.signer).map_or(0, |h| h.len() as u64);
                if *epoch != expected {
                    return Err(VdrError::EpochGap {
                        expected,
                        got: *epoch,
                    });
                }
            }
            TxPayload::ConfigureGuardians {
                guardians,
                threshold,
            } => {
                let record = self.dids.get(&tx.signer).expect("resolved above");
                if !matches!(record.recovery, RecoveryStatus::None) {
                    return Err(VdrError::InvalidTransition(
                        "cannot reconfigure guardians during an active recovery",
                    ));
                }
                if guardians.is_empty() || (*threshold as usize) > guardians.len() || *threshold == 0
                {
                    return Err(VdrError::InvalidTransition(
                        "threshold must be within 1..=guardian count",
                    ));
                }
                let mut seen = BTreeSet::new();
                for g in guardians {
                    if *g == tx.signer {
                        return Err(VdrError::InvalidTransition(
                            "a DID cannot guard itself",
                        ));
                    }
                    if !self.dids.contains_key(g) {
                        return Err(VdrError::UnknownDid(*g));
                    }
                    if !seen.insert(*g) {
                        return Err(VdrError::InvalidTransition("duplicate guardian"));
                    }
                }
            }
            TxPayload::InitiateRecovery { subject, .. } => {
                let record = self
                    .dids
                    .get(subject)
                    .ok_or(VdrError::UnknownDid(*subject))?;
                if !record.guardians.contains(&tx.signer) {
                    return Err(VdrError::NotGuardian);
                }
                if !matches!(record.recovery, RecoveryStatus::None) {
                    return Err(VdrError::InvalidTransition(
                        "a recovery is already in progress",
                    ));
                }
            }
            TxPayload::ApproveRecovery {
                subject,
                new_key_root,
            } => {
                let record = self
                    .dids
                    .get(subject)
                    .ok_or(VdrError::UnknownDid(*subject))?;
                if !record.guardians.contains(&tx.signer) {
                    return Err(VdrError::NotGuardian);
                }
                match &record.recovery {
                    RecoveryStatus::None => return Err(VdrError::NoPendingRecovery),
                    RecoveryStatus::TimeLocked { .. } => {
                        return Err(VdrError::InvalidTransition(
                            "recovery already reached its threshold",
                        ));
                    }
                    RecoveryStatus::Pending {
                        new_key_root: pending_root,
                        approvals,
                    } => {
                        if pending_root != new_key_root {
                            return Err(VdrError::InvalidTransition(
                                "approval names a different key root",
                            ));
                        }
                        if approvals.contains(&tx.signer) {
                            return Err(VdrError::DuplicateApproval);
                        }
                    }
                }
            }
            TxPayload::CancelRecovery { subject } => {
                let record = self
                    .dids
                    .get(subject)
                    .ok_or(VdrError::UnknownDid(*subject))?;
                if tx.signer != *subject {
                    return Err(VdrError::Unauthorized("only the controller cancels a recovery"));
                }
                if matches!(record.recovery, RecoveryStatus::None) {
                    return Err(VdrError::NoPendingRecovery);
                }
            }
            TxPayload::FinalizeRecovery { subject } => {
                let record = self
                    .dids
                    .get(subject)
                    .ok_or(VdrError::UnknownDid(*subject))?;
                match &record.recovery {
                    RecoveryStatus::None => return Err(VdrError::NoPendingRecovery),
                    RecoveryStatus::Pending { .. } => {
                        return Err(VdrError::InvalidTransition(
                            "recovery has not reached its threshold",
                        ));
                    }
                    RecoveryStatus::TimeLocked { locked_at, .. } => {
                        let required = locked_at + self.timelock_blocks;
                        if self.height < required {
                            return Err(VdrError::TimelockNotElapsed {
                                locked_at: *locked_at,
                                required,
                                height: self.height,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies a transaction that [`Vdr::validate`] accepted.
    fn apply(&mut self, tx: &Transaction) {
        match &tx.payload {
            TxPayload::RegisterDid(doc) => {
                let mut used = BTreeSet::new();
                used.insert(tx.signature.key_index);
                self.dids.insert(
                    doc.did,
                    DidRecord {
                        document: doc.clone(),
                        guardians: Vec::new(),
                        recovery_threshold: 0,
                        recovery: RecoveryStatus::None,
                        used_key_indices: used,
                    },
                );
                return;
            }
            _ => {
                let record = self.dids.get_mut(&tx.signer).expect("validated");
                record.used_key_indices.insert(tx.signature.key_index);
            }
        }
        match &tx.payload {
            TxPayload::RegisterDid(_) => unreachable!("handled above"),
            TxPayload::UpdateDocument(doc) => {
                let record = self.dids.get_mut(&tx.signer).expect("validated");
                let rotated = record.document.key_root != doc.key_root;
                record.document = doc.clone();
                if rotated {
                    // A fresh root opens a fresh one-time index space.
                    record.used_key_indices.clear();
                }
            }
            TxPayload::PublishRoot { root, .. } => {
                self.roots.entry(tx.signer).or_default().push(*root);
            }
            TxPayload::ConfigureGuardians {
                guardians,
                threshold,
            } => {
                let record = self.dids.get_mut(&tx.signer).expect("validated");
                record.guardians = guardians.clone();
                record.recovery_threshold = *threshold;
            }
            TxPayload::InitiateRecovery {
                subject,
                new_key_root,
            } => {
                let threshold = self.dids[subject].recovery_threshold;
                let height = self.height;
                let record = self.dids.get_mut(subject).expect("validated");
                let mut approvals = BTreeSet::new();
                approvals.insert(tx.signer);
                record.recovery = if approvals.len() as u32 >= threshold {
                    RecoveryStatus::TimeLocked {
                        new_key_root: *new_key_root,
                        approvals,
                        locked_at: height,
                    }
                } else {
                    RecoveryStatus::Pending {
                        new_key_root: *new_key_root,
                        approvals,
                    }
                };
            }
            TxPayload::ApproveRecovery { subject, .. } => {
                let threshold = self.dids[subject].recovery_threshold;
                let height = self.height;
                let record = self.dids.get_mut(subject).expect("validated");
                if let RecoveryStatus::Pending {
                    new_key_root,
                    approvals,
                } = &mut record.recovery
                {
                    approvals.insert(tx.signer);
                    if approvals.len() as u32 >= threshold {
                        record.recovery = RecoveryStatus::TimeLocked {
                            new_key_root: *new_key_root,
                            approvals: std::mem::take(approvals),
                            locked_at: height,
                        };
                    }
                }
            }
            TxPayload::CancelRecovery { subject } => {
                let record = self.dids.get_mut(subject).expect("validated");
                record.recovery = RecoveryStatus::None;
            }
            TxPayload::FinalizeRecovery { subject } => {
                let record = self.dids.get_mut(subject).expect("validated");
                if let RecoveryStatus::TimeLocked { new_key_root, .. } = &record.recovery {
                    record.document.key_root = *new_key_root;
                    record.used_key_indices.clear();
                    record.recovery = RecoveryStatus::None;
                }
            }
        }
    }

    /// Writes the sealed chain as a text log: a header line, then one
    /// hex-encoded block per line.
    pub fn write_log(&self, path: &Path) -> Result<(), VdrError> {
        let mut out = String::new();
        out.push_str(LOG_HEADER);
        out.push('\n');
        for block in &self.blocks {
            let _ = writeln!(out, "{}", hex::encode(block.to_bytes()));
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Reconstructs a registry by replaying a block log through the full
    /// validation pipeline. Any invalid or reordered transaction fails the
    /// replay, so a log that loads is internally consistent.
    pub fn read_log(path: &Path, timelock_blocks: u64) -> Result<Vdr, VdrError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(VdrError::MalformedLog("bad header"));
        }
        let mut vdr = Vdr::with_timelock(timelock_blocks);
        for line in lines {
            let bytes = hex::decode(line).map_err(|_| VdrError::MalformedLog("bad hex"))?;
            let block = Block::from_bytes(&bytes)?;
            if block.height != vdr.height {
                return Err(VdrError::MalformedLog("block height out of order"));
            }
            for tx in block.transactions {
                vdr.submit(tx)?;
            }
            vdr.tick();
        }
        Ok(vdr)
    }
}
