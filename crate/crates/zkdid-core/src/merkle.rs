//! Merkle commitments in two flavors: salted SHA-256 trees over byte
//! strings (used for trace/FRI layer commitments and the signature key
//! tree) and unsalted `h2` trees over field elements (used for the
//! revocation accumulator and inside the proof system).
//!
//! Byte trees separate leaf hashing from node hashing with a domain tag
//! (`0x00` for leaves, `0x01` for internal nodes) so a leaf can never be
//! reinterpreted as an inner node. Every leaf carries a 16-byte blinding
//! salt; opening a leaf therefore reveals nothing about its siblings.

use rand::RngCore;
use thiserror::Error;

use crate::field::Felt;
use crate::hashing::{byte_hash, h2_with, Digest32, MimcParams};

/// Tag prepended when hashing a leaf of a byte tree.
const LEAF_TAG: u8 = 0x00;
/// Tag prepended when hashing an internal node of a byte tree.
const NODE_TAG: u8 = 0x01;

/// Byte length of leaf blinding salts.
pub const SALT_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    /// Trees over zero leaves are not defined.
    #[error("cannot build a tree over zero leaves")]
    EmptyLeaves,
    /// Requested an opening for a leaf index outside the tree.
    #[error("leaf index {index} out of range (leaf count {count})")]
    IndexOutOfRange { index: usize, count: usize },
    /// Algebraic trees require exactly `2^depth` leaves.
    #[error("leaf count {len} does not equal 2^{depth}")]
    SizeMismatch { len: usize, depth: u32 },
    /// A serialized path had the wrong length.
    #[error("malformed path encoding")]
    MalformedPath,
}

/// Authentication path in a salted byte tree: the leaf's index, its
/// blinding salt and the sibling digests bottom-up.
///
/// Serialized as `index (4 bytes BE) || salt || siblings`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BytePath {
    pub index: u32,
    pub salt: [u8; SALT_LEN],
    pub siblings: Vec<Digest32>,
}

impl BytePath {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + SALT_LEN + 32 * self.siblings.len());
        out.extend_from_slice(&self.index.to_be_bytes());
        out.extend_from_slice(&self.salt);
        for s in &self.siblings {
            out.extend_from_slice(s.as_bytes());
        }
        out
    }

    /// Parses a path with a known depth (sibling count).
    pub fn from_bytes(bytes: &[u8], depth: usize) -> Result<BytePath, MerkleError> {
        let expect = 4 + SALT_LEN + 32 * depth;
        if bytes.len() != expect {
            return Err(MerkleError::MalformedPath);
        }
        let index = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        let mut salt = [0u8; SALT_LEN];
        salt.copy_from_slice(&bytes[4..4 + SALT_LEN]);
        let mut siblings = Vec::with_capacity(depth);
        for i in 0..depth {
            let start = 4 + SALT_LEN + 32 * i;
            let mut d = [0u8; 32];
            d.copy_from_slice(&bytes[start..start + 32]);
            siblings.push(Digest32(d));
        }
        Ok(BytePath { index, salt, siblings })
    }
}

/// A salted SHA-256 Merkle tree over byte-string leaves. Leaf count is
/// padded to the next power of two with empty (length-0) leaves; padding
/// leaves get salts like any other so the tree shape stays uniform.
#[derive(Clone, Debug)]
pub struct ByteMerkleTree {
    leaf_count: usize,
    salts: Vec<[u8; SALT_LEN]>,
    /// levels[0] = leaf digests, levels.last() = [root]
    levels: Vec<Vec<Digest32>>,
}

fn hash_leaf(salt: &[u8; SALT_LEN], leaf: &[u8]) -> Digest32 {
    let mut buf = Vec::with_capacity(1 + SALT_LEN + leaf.len());
    buf.push(LEAF_TAG);
    buf.extend_from_slice(salt);
    buf.extend_from_slice(leaf);
    byte_hash(&buf)
}

fn hash_nodes(left: &Digest32, right: &Digest32) -> Digest32 {
    let mut buf = [0u8; 65];
    buf[0] = NODE_TAG;
    buf[1..33].copy_from_slice(left.as_bytes());
    buf[33..65].copy_from_slice(right.as_bytes());
    byte_hash(&buf)
}

impl ByteMerkleTree {
    /// Builds a tree over the given leaves, drawing one salt per (padded)
    /// leaf from the provided RNG.
    pub fn build<R: RngCore>(leaves: &[Vec<u8>], rng: &mut R) -> Result<ByteMerkleTree, MerkleError> {
        Self::build_from_slices(&leaves.iter().map(|l| l.as_slice()).collect::<Vec<_>>(), rng)
    }

    /// Like [`ByteMerkleTree::build`] but borrows the leaves.
    pub fn build_from_slices<R: RngCore>(
        leaves: &[&[u8]],
        rng: &mut R,
    ) -> Result<ByteMerkleTree, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyLeaves);
        }
        let padded = leaves.len().next_power_of_two();
        let mut salts = Vec::with_capacity(padded);
        for _ in 0..padded {
            let mut s = [0u8; SALT_LEN];
            rng.fill_bytes(&mut s);
            salts.push(s);
        }
        Self::build_with_salts(leaves, salts)
    }

    /// Builds a tree with caller-chosen salts, one per padded leaf. Used
    /// when the whole tree must be reproducible from a seed.
    pub fn build_with_salts(
        leaves: &[&[u8]],
        salts: Vec<[u8; SALT_LEN]>,
    ) -> Result<ByteMerkleTree, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyLeaves);
        }
        let padded = leaves.len().next_power_of_two();
        if salts.len() != padded {
            return Err(MerkleError::SizeMismatch {
                len: salts.len(),
                depth: padded.trailing_zeros(),
            });
        }
        let mut level: Vec<Digest32> = (0..padded)
            .map(|i| hash_leaf(&salts[i], leaves.get(i).copied().unwrap_or(&[])))
            .collect();
        let mut levels = vec![level.clone()];
        while level.len() > 1 {
            level = level
                .chunks(2)
                .map(|pair| hash_nodes(&pair[0], &pair[1]))
                .collect();
            levels.push(level.clone());
        }
        Ok(ByteMerkleTree {
            leaf_count: leaves.len(),
            salts,
            levels,
        })
    }

    pub fn root(&self) -> Digest32 {
        self.levels.last().expect("tree has at least one level")[0]
    }

    /// Number of original (unpadded) leaves.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Tree depth (path length); 0 for a single-leaf tree.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Opens the leaf at `index`.
    pub fn open(&self, index: usize) -> Result<BytePath, MerkleError> {
        if index >= self.leaf_count {
            return Err(MerkleError::IndexOutOfRange {
                index,
                count: self.leaf_count,
            });
        }
        let mut siblings = Vec::with_capacity(self.depth());
        let mut pos = index;
        for level in &self.levels[..self.levels.len() - 1] {
            siblings.push(level[pos ^ 1]);
            pos >>= 1;
        }
        Ok(BytePath {
            index: index as u32,
            salt: self.salts[index],
            siblings,
        })
    }
}

/// Checks a byte-tree opening: rehashes the salted leaf and folds the
/// siblings upward, choosing operand order from the index bits.
pub fn byte_verify(root: &Digest32, leaf: &[u8], path: &BytePath) -> bool {
    if path.siblings.len() < 32 {
        if (path.index as u64) >= (1u64 << path.siblings.len()) {
            return false;
        }
    }
    let mut cur = hash_leaf(&path.salt, leaf);
    let mut pos = path.index;
    for sib in &path.siblings {
        cur = if pos & 1 == 0 {
            hash_nodes(&cur, sib)
        } else {
            hash_nodes(sib, &cur)
        };
        pos >>= 1;
    }
    cur == *root
}

/// Authentication path in an algebraic tree: index plus sibling elements
/// bottom-up. Direction at each level is bit `j` of the index (bit set =
/// current node is the right child).
///
/// Serialized as `index (4 bytes BE) || siblings (8-byte BE each)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlgPath {
    pub index: u32,
    pub siblings: Vec<Felt>,
}

impl AlgPath {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.siblings.len());
        out.extend_from_slice(&self.index.to_be_bytes());
        for s in &self.siblings {
            out.extend_from_slice(&s.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], depth: usize) -> Result<AlgPath, MerkleError> {
        if bytes.len() != 4 + 8 * depth {
            return Err(MerkleError::MalformedPath);
        }
        let index = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        let mut siblings = Vec::with_capacity(depth);
        for i in 0..depth {
            let start = 4 + 8 * i;
            let arr: [u8; 8] = bytes[start..start + 8].try_into().unwrap();
            siblings.push(Felt::from_be_bytes(arr).ok_or(MerkleError::MalformedPath)?);
        }
        Ok(AlgPath { index, siblings })
    }
}

/// Roots of all-empty subtrees: `Z_0 = 0`, `Z_{j+1} = h2(Z_j, Z_j)`.
/// `Z_depth` is the root of an empty tree of that depth.
pub fn zero_subtree_roots(params: &MimcParams, depth: u32) -> Vec<Felt> {
    let mut out = Vec::with_capacity(depth as usize + 1);
    let mut z = Felt::ZERO;
    out.push(z);
    for _ in 0..depth {
        z = h2_with(params, z, z);
        out.push(z);
    }
    out
}

/// Root of a dense algebraic tree; `leaves.len()` must equal `2^depth`.
pub fn alg_root_with(
    params: &MimcParams,
    leaves: &[Felt],
    depth: u32,
) -> Result<Felt, MerkleError> {
    if leaves.len() != 1usize << depth {
        return Err(MerkleError::SizeMismatch {
            len: leaves.len(),
            depth,
        });
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| h2_with(params, pair[0], pair[1]))
            .collect();
    }
    Ok(level[0])
}

/// Standard-instance [`alg_root_with`].
pub fn alg_root(leaves: &[Felt], depth: u32) -> Result<Felt, MerkleError> {
    alg_root_with(MimcParams::standard(), leaves, depth)
}

/// Opens leaf `index` of a dense algebraic tree.
pub fn alg_open_with(
    params: &MimcParams,
    leaves: &[Felt],
    depth: u32,
    index: usize,
) -> Result<AlgPath, MerkleError> {
    if leaves.len() != 1usize << depth {
        return Err(MerkleError::SizeMismatch {
            len: leaves.len(),
            depth,
        });
    }
    if index >= leaves.len() {
        return Err(MerkleError::IndexOutOfRange {
            index,
            count: leaves.len(),
        });
    }
    let mut siblings = Vec::with_capacity(depth as usize);
    let mut level = leaves.to_vec();
    let mut pos = index;
    for _ in 0..depth {
        siblings.push(level[pos ^ 1]);
        level = level
            .chunks(2)
            .map(|pair| h2_with(params, pair[0], pair[1]))
            .collect();
        pos >>= 1;
    }
    Ok(AlgPath {
        index: index as u32,
        siblings,
    })
}

/// Standard-instance [`alg_open_with`].
pub fn alg_open(leaves: &[Felt], depth: u32, index: usize) -> Result<AlgPath, MerkleError> {
    alg_open_with(MimcParams::standard(), leaves, depth, index)
}

/// Checks an algebraic opening against a root.
pub fn alg_verify_with(params: &MimcParams, root: Felt, leaf: Felt, path: &AlgPath) -> bool {
    if path.siblings.len() < 32 && (path.index as u64) >= (1u64 << path.siblings.len()) {
        return false;
    }
    let mut cur = leaf;
    let mut pos = path.index;
    for sib in &path.siblings {
        cur = if pos & 1 == 0 {
            h2_with(params, cur, *sib)
        } else {
            h2_with(params, *sib, cur)
        };
        pos >>= 1;
    }
    cur == root
}

/// Standard-instance [`alg_verify_with`].
pub fn alg_verify(root: Felt, leaf: Felt, path: &AlgPath) -> bool {
    alg_verify_with(MimcParams::standard(), root, leaf, path)
}
