//! Decentralized identifiers and hash-based one-time signatures.
//!
//! Every party owns a keychain of `2^height` Lamport one-time keys whose
//! public digests sit in a salted Merkle tree. The tree root is the
//! party's public key; a DID is derived by hashing the *initial* root, so
//! later key rotations keep the identifier stable. Signing consumes the
//! lowest unused key — a one-time key must never sign twice, and the
//! ledger enforces that each (key root, index) pair appears at most once.
//!
//! The module also defines canonical, injective byte encodings (tagged,
//! length-prefixed) for the structures that get signed or hashed:
//! credentials, presentation statements and DID documents.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::field::Felt;
use crate::hashing::{byte_hash, commit_attributes_with, Digest32, HashingError, MimcParams};
use crate::merkle::{byte_verify, ByteMerkleTree, BytePath, SALT_LEN};

/// URI scheme+method prefix of every identifier in this system.
pub const DID_PREFIX: &str = "did:zkd:";

/// Maximum keychain height (2^16 one-time keys).
pub const MAX_KEY_HEIGHT: u32 = 16;

/// Encoding tag for [`CredentialContent`].
pub const TAG_CREDENTIAL: u8 = 0x01;
/// Encoding tag for [`PresentationStatement`].
pub const TAG_STATEMENT: u8 = 0x02;
/// Encoding tag for [`DidDocument`].
pub const TAG_DID_DOCUMENT: u8 = 0x03;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    /// Every one-time key in the chain has been used.
    #[error("one-time keys exhausted (all {0} used)")]
    KeysExhausted(u32),
    /// Keychain height outside `0..=MAX_KEY_HEIGHT`.
    #[error("key height {0} out of range")]
    BadHeight(u32),
    /// The string is not a well-formed DID.
    #[error("malformed DID: {0}")]
    BadDid(String),
    /// A canonical encoding failed to parse.
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

/// A decentralized identifier: `did:zkd:` followed by 32 bytes of hex.
///
/// The identifier is the hash of the owner's initial key-tree root, so it
/// is self-certifying at registration time and survives key rotation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    id: Digest32,
}

impl Did {
    /// Derives the DID bound to an initial key-tree root.
    pub fn from_key_root(root: &Digest32) -> Did {
        Did {
            id: byte_hash(root.as_bytes()),
        }
    }

    /// Wraps a raw identifier (e.g. parsed from storage).
    pub fn from_id(id: Digest32) -> Did {
        Did { id }
    }

    pub fn id(&self) -> &Digest32 {
        &self.id
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{DID_PREFIX}{}", self.id.to_hex())
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Did, IdentityError> {
        let hex_part = s
            .strip_prefix(DID_PREFIX)
            .ok_or_else(|| IdentityError::BadDid(s.to_string()))?;
        if hex_part.len() != 64 {
            return Err(IdentityError::BadDid(s.to_string()));
        }
        let id = Digest32::from_hex(hex_part).ok_or_else(|| IdentityError::BadDid(s.to_string()))?;
        Ok(Did { id })
    }
}

const BITS: usize = 256;

/// Secret preimage for key `index`, digest bit `j`, bit value `b`.
/// The input is `seed || index (4) || j (2) || b (1)` — 39 bytes, a length
/// no other derivation in this module uses.
fn secret_part(seed: &[u8; 32], index: u32, j: u16, b: u8) -> Digest32 {
    let mut buf = [0u8; 39];
    buf[..32].copy_from_slice(seed);
    buf[32..36].copy_from_slice(&index.to_be_bytes());
    buf[36..38].copy_from_slice(&j.to_be_bytes());
    buf[38] = b;
    byte_hash(&buf)
}

/// Deterministic leaf salt for the key tree: first half of
/// `H(seed || "keysalt" || index (4))` — a 43-byte input, disjoint from
/// the secret derivation by length.
fn leaf_salt(seed: &[u8; 32], index: u32) -> [u8; SALT_LEN] {
    let mut buf = [0u8; 43];
    buf[..32].copy_from_slice(seed);
    buf[32..39].copy_from_slice(b"keysalt");
    buf[39..43].copy_from_slice(&index.to_be_bytes());
    let digest = byte_hash(&buf);
    let mut salt = [0u8; SALT_LEN];
    salt.copy_from_slice(&digest.as_bytes()[..SALT_LEN]);
    salt
}

/// Public digest of one-time key `index`: the hash of the 512
/// concatenated per-bit public hashes (bit position major, bit value
/// minor).
fn public_key_digest(seed: &[u8; 32], index: u32) -> Digest32 {
    let mut buf = Vec::with_capacity(BITS * 2 * 32);
    for j in 0..BITS as u16 {
        for b in 0..2u8 {
            let h = byte_hash(secret_part(seed, index, j, b).as_bytes());
            buf.extend_from_slice(h.as_bytes());
        }
    }
    byte_hash(&buf)
}

/// Extracts bit `j` of a digest, most-significant bit of byte 0 first.
fn digest_bit(d: &Digest32, j: usize) -> u8 {
    (d.as_bytes()[j >> 3] >> (7 - (j & 7))) & 1
}

/// A one-time signature: for each of the 256 digest bits, the revealed
/// secret preimage for the message's bit value and the public hash of the
/// complementary value, plus the Merkle opening of the key's public
/// digest in the signer's key tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashSig {
    pub key_index: u32,
    /// `(revealed preimage, complement hash)` per digest bit, in order.
    pub pairs: Vec<(Digest32, Digest32)>,
    pub path: BytePath,
}

impl HashSig {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + BITS * 64 + 4 + SALT_LEN + 32 * self.path.siblings.len());
        out.extend_from_slice(&self.key_index.to_be_bytes());
        for (reveal, other) in &self.pairs {
            out.extend_from_slice(reveal.as_bytes());
            out.extend_from_slice(other.as_bytes());
        }
        out.extend_from_slice(&self.path.to_bytes());
        out
    }

    /// Parses a signature, inferring the tree height from the length.
    pub fn from_bytes(bytes: &[u8]) -> Result<HashSig, IdentityError> {
        let fixed = 4 + BITS * 64 + 4 + SALT_LEN;
        if bytes.len() < fixed || (bytes.len() - fixed) % 32 != 0 {
            return Err(IdentityError::Malformed("signature length"));
        }
        let height = (bytes.len() - fixed) / 32;
        if height > MAX_KEY_HEIGHT as usize {
            return Err(IdentityError::Malformed("signature path too deep"));
        }
        let key_index = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        let mut pairs = Vec::with_capacity(BITS);
        for j in 0..BITS {
            let at = 4 + j * 64;
            let mut reveal = [0u8; 32];
            let mut other = [0u8; 32];
            reveal.copy_from_slice(&bytes[at..at + 32]);
            other.copy_from_slice(&bytes[at + 32..at + 64]);
            pairs.push((Digest32(reveal), Digest32(other)));
        }
        let path = BytePath::from_bytes(&bytes[4 + BITS * 64..], height)
            .map_err(|_| IdentityError::Malformed("signature path"))?;
        Ok(HashSig {
            key_index,
            pairs,
            path,
        })
    }
}

/// A seed-derived chain of `2^height` Lamport one-time keys with a salted
/// Merkle tree over the public digests. Fully reproducible from
/// `(seed, height, next_index)`.
#[derive(Clone)]
pub struct Keychain {
    seed: [u8; 32],
    height: u32,
    next_index: u32,
    tree: ByteMerkleTree,
}

impl fmt::Debug for Keychain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keychain")
            .field("height", &self.height)
            .field("next_index", &self.next_index)
            .field("root", &self.root())
            .finish_non_exhaustive()
    }
}

impl Keychain {
    /// Derives the full keychain from a secret seed.
    pub fn generate(seed: [u8; 32], height: u32) -> Result<Keychain, IdentityError> {
        if height > MAX_KEY_HEIGHT {
            return Err(IdentityError::BadHeight(height));
        }
        let count = 1u32 << height;
        let leaves: Vec<Digest32> = (0..count).map(|i| public_key_digest(&seed, i)).collect();
        let leaf_refs: Vec<&[u8]> = leaves.iter().map(|d| d.as_bytes().as_slice()).collect();
        let salts: Vec<[u8; SALT_LEN]> = (0..count).map(|i| leaf_salt(&seed, i)).collect();
        let tree = ByteMerkleTree::build_with_salts(&leaf_refs, salts)
            .expect("key tree over at least one leaf");
        Ok(Keychain {
            seed,
            height,
            next_index: 0,
            tree,
        })
    }

    /// Public key: the root of the key tree.
    pub fn root(&self) -> Digest32 {
        self.tree.root()
    }

    /// DID derived from this chain's root (valid only if this is the
    /// party's *initial* chain).
    pub fn did(&self) -> Did {
        Did::from_key_root(&self.root())
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn capacity(&self) -> u32 {
        1u32 << self.height
    }

    /// Index the next signature will consume.
    pub fn next_index(&self) -> u32 {
        self.next_index
    }

    pub fn remaining(&self) -> u32 {
        self.capacity() - self.next_index
    }

    /// Signs a message with the lowest unused key, consuming it.
    pub fn sign(&mut self, message: &[u8]) -> Result<HashSig, IdentityError> {
        if self.next_index >= self.capacity() {
            return Err(IdentityError::KeysExhausted(self.capacity()));
        }
        let index = self.next_index;
        self.next_index += 1;

        let digest = byte_hash(message);
        let mut pairs = Vec::with_capacity(BITS);
        for j in 0..BITS {
            let bit = digest_bit(&digest, j);
            let reveal = secret_part(&self.seed, index, j as u16, bit);
            let other = byte_hash(secret_part(&self.seed, index, j as u16, 1 - bit).as_bytes());
            pairs.push((reveal, other));
        }
        let path = self
            .tree
            .open(index as usize)
            .expect("index below capacity");
        Ok(HashSig {
            key_index: index,
            pairs,
            path,
        })
    }

    /// Serializes `(seed, height, next_index)`; the tree is re-derived on
    /// load.
    pub fn to_bytes(&self) -> [u8; 37] {
        let mut out = [0u8; 37];
        out[..32].copy_from_slice(&self.seed);
        out[32] = self.height as u8;
        out[33..37].copy_from_slice(&self.next_index.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Keychain, IdentityError> {
        if bytes.len() != 37 {
            return Err(IdentityError::Malformed("keychain length"));
        }
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&bytes[..32]);
        let height = bytes[32] as u32;
        let next_index = u32::from_be_bytes(bytes[33..37].try_into().unwrap());
        let mut chain = Keychain::generate(seed, height)?;
        if next_index > chain.capacity() {
            return Err(IdentityError::Malformed("used-key mark beyond capacity"));
        }
        chain.next_index = next_index;
        Ok(chain)
    }
}

/// Checks a one-time signature against a key-tree root.
pub fn verify_sig(key_root: &Digest32, message: &[u8], sig: &HashSig) -> bool {
    if sig.pairs.len() != BITS || sig.path.index != sig.key_index {
        return false;
    }
    let digest = byte_hash(message);
    let mut buf = Vec::with_capacity(BITS * 2 * 32);
    for (j, (reveal, other)) in sig.pairs.iter().enumerate() {
        let bit = digest_bit(&digest, j);
        let revealed_hash = byte_hash(reveal.as_bytes());
        let (h0, h1) = if bit == 0 {
            (revealed_hash, *other)
        } else {
            (*other, revealed_hash)
        };
        buf.extend_from_slice(h0.as_bytes());
        buf.extend_from_slice(h1.as_bytes());
    }
    let leaf = byte_hash(&buf);
    byte_verify(key_root, leaf.as_bytes(), &sig.path)
}

/// The signed body of a credential: schema, parties, ordered attributes,
/// the commitment salt, and where the commitment lives in the issuer's
/// accumulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CredentialContent {
    pub schema: String,
    pub issuer: Did,
    pub holder: Did,
    /// Attribute `(name, value)` pairs in schema order.
    pub attributes: Vec<(String, u32)>,
    /// Blinding salt for the attribute commitment.
    pub salt: Felt,
    /// Accumulator slot holding the commitment.
    pub slot: u32,
    /// Accumulator epoch right after insertion.
    pub epoch: u64,
}

impl CredentialContent {
    /// The accumulator leaf this credential commits to.
    pub fn commitment(&self, params: &MimcParams) -> Result<Felt, HashingError> {
        let values: Vec<u32> = self.attributes.iter().map(|(_, v)| *v).collect();
        commit_attributes_with(params, &values, self.salt)
    }

    /// Canonical injective encoding (tag 0x01). This is what the issuer
    /// signs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![TAG_CREDENTIAL];
        put_string(&mut out, &self.schema);
        out.extend_from_slice(self.issuer.id().as_bytes());
        out.extend_from_slice(self.holder.id().as_bytes());
        out.extend_from_slice(&(self.attributes.len() as u32).to_be_bytes());
        for (name, value) in &self.attributes {
            put_string(&mut out, name);
            out.extend_from_slice(&value.to_be_bytes());
        }
        out.extend_from_slice(&self.salt.to_be_bytes());
        out.extend_from_slice(&self.slot.to_be_bytes());
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CredentialContent, IdentityError> {
        let mut r = Reader::new(bytes);
        let content = read_credential_content(&mut r)?;
        r.finish()?;
        Ok(content)
    }
}

fn read_credential_content(r: &mut Reader<'_>) -> Result<CredentialContent, IdentityError> {
    if r.u8()? != TAG_CREDENTIAL {
        return Err(IdentityError::Malformed("wrong tag"));
    }
    let schema = r.string()?;
    let issuer = Did::from_id(r.digest()?);
    let holder = Did::from_id(r.digest()?);
    let count = r.u32()? as usize;
    if count > 1 << 16 {
        return Err(IdentityError::Malformed("attribute count"));
    }
    let mut attributes = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let value = r.u32()?;
        attributes.push((name, value));
    }
    let salt = r.felt()?;
    let slot = r.u32()?;
    let epoch = r.u64()?;
    Ok(CredentialContent {
        schema,
        issuer,
        holder,
        attributes,
        salt,
        slot,
        epoch,
    })
}

/// A credential: signed content. The signature covers
/// [`CredentialContent::to_bytes`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credential {
    pub content: CredentialContent,
    pub signature: HashSig,
}

impl Credential {
    /// Issues (signs) the content with the issuer's keychain.
    pub fn sign(content: CredentialContent, issuer_keys: &mut Keychain) -> Result<Credential, IdentityError> {
        let signature = issuer_keys.sign(&content.to_bytes())?;
        Ok(Credential { content, signature })
    }

    /// Checks the issuer signature against the issuer's key root.
    pub fn verify(&self, issuer_key_root: &Digest32) -> bool {
        verify_sig(issuer_key_root, &self.content.to_bytes(), &self.signature)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.content.to_bytes();
        out.extend_from_slice(&self.signature.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Credential, IdentityError> {
        let mut r = Reader::new(bytes);
        let content = read_credential_content(&mut r)?;
        let signature = HashSig::from_bytes(r.rest())?;
        Ok(Credential { content, signature })
    }
}

/// Everything a verifier asserts when checking a presentation: which
/// schema and issuer, which attribute, the claimed threshold, and the
/// accumulator root (with its epoch) the membership proof targets. The
/// nonce binds the proof to one verification session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresentationStatement {
    pub schema: String,
    pub issuer: Did,
    pub attribute: String,
    pub threshold: u32,
    pub epoch: u64,
    pub root: Felt,
    pub nonce: [u8; 16],
}

impl PresentationStatement {
    /// Canonical injective encoding (tag 0x02); absorbed into the proof
    /// transcript, so the proof is bound to every field here.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![TAG_STATEMENT];
        put_string(&mut out, &self.schema);
        out.extend_from_slice(self.issuer.id().as_bytes());
        put_string(&mut out, &self.attribute);
        out.extend_from_slice(&self.threshold.to_be_bytes());
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out.extend_from_slice(&self.root.to_be_bytes());
        out.extend_from_slice(&self.nonce);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PresentationStatement, IdentityError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != TAG_STATEMENT {
            return Err(IdentityError::Malformed("wrong tag"));
        }
        let schema = r.string()?;
        let issuer = Did::from_id(r.digest()?);
        let attribute = r.string()?;
        let threshold = r.u32()?;
        let epoch = r.u64()?;
        let root = r.felt()?;
        let nonce: [u8; 16] = r.take(16)?.try_into().unwrap();
        r.finish()?;
        Ok(PresentationStatement {
            schema,
            issuer,
            attribute,
            threshold,
            epoch,
            root,
            nonce,
        })
    }
}

/// On-ledger description of a DID: its current key root and an optional
/// service endpoint. Guardian configuration lives in the ledger's
/// recovery records, not in the document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DidDocument {
    pub did: Did,
    pub key_root: Digest32,
    pub service_endpoint: String,
}

impl DidDocument {
    /// Canonical injective encoding (tag 0x03); the payload signed by
    /// registration and update transactions.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![TAG_DID_DOCUMENT];
        out.extend_from_slice(self.did.id().as_bytes());
        out.extend_from_slice(self.key_root.as_bytes());
        put_string(&mut out, &self.service_endpoint);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DidDocument, IdentityError> {
        let mut r = Reader::new(bytes);
        if r.u8()? != TAG_DID_DOCUMENT {
            return Err(IdentityError::Malformed("wrong tag"));
        }
        let did = Did::from_id(r.digest()?);
        let key_root = r.digest()?;
        let service_endpoint = r.string()?;
        r.finish()?;
        Ok(DidDocument {
            did,
            key_root,
            service_endpoint,
        })
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Reader<'a> {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IdentityError> {
        if self.bytes.len() - self.pos < n {
            return Err(IdentityError::Malformed("truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn rest(&mut self) -> &'a [u8] {
        let out = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        out
    }

    fn finish(&self) -> Result<(), IdentityError> {
        if self.pos != self.bytes.len() {
            return Err(IdentityError::Malformed("trailing bytes"));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, IdentityError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IdentityError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IdentityError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn felt(&mut self) -> Result<Felt, IdentityError> {
        let raw: [u8; 8] = self.take(8)?.try_into().unwrap();
        Felt::from_be_bytes(raw).ok_or(IdentityError::Malformed("non-canonical field element"))
    }

    fn digest(&mut self) -> Result<Digest32, IdentityError> {
        let raw: [u8; 32] = self.take(32)?.try_into().unwrap();
        Ok(Digest32(raw))
    }

    fn string(&mut self) -> Result<String, IdentityError> {
        let len = self.u32()? as usize;
        if len > 1 << 20 {
            return Err(IdentityError::Malformed("string too long"));
        }
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| IdentityError::Malformed("invalid utf-8"))
    }
}
