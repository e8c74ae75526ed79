//! Revocation accumulator: a fixed-depth sparse Merkle tree over `h2`
//! whose leaves are credential commitments. Issuing appends a commitment
//! at the next free slot; revoking resets that slot's leaf to the zero
//! sentinel. Slots are never reused — a revoked credential's slot stays
//! burned, which keeps old proofs-of-membership unambiguous.
//!
//! Every mutation advances an epoch counter and records the new root, so
//! verifiers can pin "the root as of epoch e" and holders can refresh
//! their membership witnesses after other parties' updates.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::field::Felt;
use crate::hashing::{h2_with, MimcParams};
use crate::merkle::{zero_subtree_roots, AlgPath};

const FILE_MAGIC: [u8; 4] = *b"ZKDA";
const FILE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum AccumulatorError {
    /// All `2^depth` slots have been handed out.
    #[error("accumulator capacity exhausted")]
    CapacityExhausted,
    /// The slot holds no live credential.
    #[error("slot {0} is not occupied")]
    SlotNotOccupied(u32),
    /// No root was ever recorded for that epoch.
    #[error("unknown epoch {0}")]
    UnknownEpoch(u64),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    /// The file is not a valid accumulator snapshot.
    #[error("malformed accumulator file: {0}")]
    Malformed(&'static str),
}

/// Sparse `h2` Merkle tree with slot allocation, epochs and root history.
#[derive(Clone, Debug)]
pub struct Accumulator {
    depth: u32,
    params: MimcParams,
    epoch: u64,
    next_slot: u32,
    occupied: BTreeMap<u32, Felt>,
    /// `levels[j]` holds the non-default nodes at height `j`
    /// (`levels[0]` = leaves, `levels[depth]` = root).
    levels: Vec<BTreeMap<u32, Felt>>,
    /// Root of an all-empty subtree per height.
    zero_roots: Vec<Felt>,
    /// `root_history[e]` = root after epoch `e`; epoch 0 is genesis.
    root_history: Vec<Felt>,
}

impl Accumulator {
    /// An empty accumulator of the given depth (capacity `2^depth`) over
    /// the standard compression instance.
    pub fn new(depth: u32) -> Accumulator {
        Accumulator::with_params(depth, MimcParams::standard().clone())
    }

    /// Like [`Accumulator::new`] with an explicit compression instance.
    pub fn with_params(depth: u32, params: MimcParams) -> Accumulator {
        assert!(depth >= 1 && depth <= 32, "depth must be in 1..=32");
        let zero_roots = zero_subtree_roots(&params, depth);
        let genesis = zero_roots[depth as usize];
        Accumulator {
            depth,
            params,
            epoch: 0,
            next_slot: 0,
            occupied: BTreeMap::new(),
            levels: vec![BTreeMap::new(); depth as usize + 1],
            zero_roots,
            root_history: vec![genesis],
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn capacity(&self) -> u64 {
        1u64 << self.depth
    }

    /// Epoch of the latest mutation (0 = untouched).
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Next slot that `add` would hand out.
    pub fn next_slot(&self) -> u32 {
        self.next_slot
    }

    /// Number of live (non-revoked) commitments.
    pub fn live_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_occupied(&self, slot: u32) -> bool {
        self.occupied.contains_key(&slot)
    }

    /// True if the slot was allocated and later revoked.
    pub fn is_revoked(&self, slot: u32) -> bool {
        slot < self.next_slot && !self.is_occupied(slot)
    }

    fn node(&self, level: usize, index: u32) -> Felt {
        self.levels[level]
            .get(&index)
            .copied()
            .unwrap_or(self.zero_roots[level])
    }

    /// Current root.
    pub fn root(&self) -> Felt {
        self.node(self.depth as usize, 0)
    }

    /// Root as of a past (or the current) epoch.
    pub fn root_at(&self, epoch: u64) -> Result<Felt, AccumulatorError> {
        self.root_history
            .get(epoch as usize)
            .copied()
            .ok_or(AccumulatorError::UnknownEpoch(epoch))
    }

    /// All roots, genesis first. Index equals epoch.
    pub fn root_history(&self) -> &[Felt] {
        &self.root_history
    }

    fn set_leaf(&mut self, slot: u32, value: Felt) {
        self.levels[0].insert(slot, value);
        let mut pos = slot;
        for level in 0..self.depth as usize {
            let left = self.node(level, pos & !1);
            let right = self.node(level, (pos & !1) + 1);
            pos >>= 1;
            let parent = h2_with(&self.params, left, right);
            self.levels[level + 1].insert(pos, parent);
        }
    }

    fn bump_epoch(&mut self) {
        self.epoch += 1;
        let root = self.root();
        self.root_history.push(root);
    }

    /// Inserts a commitment at the next free slot. Returns the slot.
    pub fn add(&mut self, commitment: Felt) -> Result<u32, AccumulatorError> {
        if u64::from(self.next_slot) >= self.capacity() {
            return Err(AccumulatorError::CapacityExhausted);
        }
        let slot = self.next_slot;
        self.next_slot += 1;
        self.occupied.insert(slot, commitment);
        self.set_leaf(slot, commitment);
        self.bump_epoch();
        Ok(slot)
    }

    /// Resets a slot's leaf to zero. The slot is burned, never reissued.
    pub fn revoke(&mut self, slot: u32) -> Result<(), AccumulatorError> {
        if self.occupied.remove(&slot).is_none() {
            return Err(AccumulatorError::SlotNotOccupied(slot));
        }
        self.set_leaf(slot, Felt::ZERO);
        self.bump_epoch();
        Ok(())
    }

    /// Membership witness for a live slot against the *current* root.
    /// Holders call this again after any epoch change ("refresh").
    pub fn witness(&self, slot: u32) -> Result<AlgPath, AccumulatorError> {
        if !self.is_occupied(slot) {
            return Err(AccumulatorError::SlotNotOccupied(slot));
        }
        let mut siblings = Vec::with_capacity(self.depth as usize);
        let mut pos = slot;
        for level in 0..self.depth as usize {
            siblings.push(self.node(level, pos ^ 1));
            pos >>= 1;
        }
        Ok(AlgPath {
            index: slot,
            siblings,
        })
    }

    /// Commitment stored at a live slot.
    pub fn commitment(&self, slot: u32) -> Result<Felt, AccumulatorError> {
        self.occupied
            .get(&slot)
            .copied()
            .ok_or(AccumulatorError::SlotNotOccupied(slot))
    }

    /// Serializes the full state (occupied slots plus root history).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&FILE_MAGIC);
        out.extend_from_slice(&FILE_VERSION.to_be_bytes());
        out.push(self.depth as u8);
        out.extend_from_slice(&(self.params.rounds() as u16).to_be_bytes());
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out.extend_from_slice(&self.next_slot.to_be_bytes());
        out.extend_from_slice(&(self.occupied.len() as u32).to_be_bytes());
        for (&slot, &value) in &self.occupied {
            out.extend_from_slice(&slot.to_be_bytes());
            out.extend_from_slice(&value.to_be_bytes());
        }
        out.extend_from_slice(&(self.root_history.len() as u64).to_be_bytes());
        for root in &self.root_history {
            out.extend_from_slice(&root.to_be_bytes());
        }
        out
    }

    /// Rebuilds an accumulator from [`Accumulator::to_bytes`] output.
    /// The tree is reconstructed from the occupied slots and checked
    /// against the recorded current root.
    pub fn from_bytes(bytes: &[u8]) -> Result<Accumulator, AccumulatorError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != FILE_MAGIC {
            return Err(AccumulatorError::Malformed("bad magic"));
        }
        if r.u16()? != FILE_VERSION {
            return Err(AccumulatorError::Malformed("unsupported version"));
        }
        let depth = r.u8()? as u32;
        if !(1..=32).contains(&depth) {
            return Err(AccumulatorError::Malformed("depth out of range"));
        }
        let rounds = r.u16()? as usize;
        if rounds == 0 {
            return Err(AccumulatorError::Malformed("round count out of range"));
        }
        let params = if rounds == MimcParams::standard().rounds() {
            MimcParams::standard().clone()
        } else {
            MimcParams::with_rounds(rounds)
        };
        let epoch = r.u64()?;
        let next_slot = r.u32()?;
        let occupied_len = r.u32()? as usize;
        let mut acc = Accumulator::with_params(depth, params);
        for _ in 0..occupied_len {
            let slot = r.u32()?;
            let value = r.felt()?;
            if u64::from(slot) >= u64::from(next_slot) {
                return Err(AccumulatorError::Malformed("occupied slot beyond allocation mark"));
            }
            acc.occupied.insert(slot, value);
            acc.set_leaf(slot, value);
        }
        let history_len = r.u64()? as usize;
        if history_len != epoch as usize + 1 {
            return Err(AccumulatorError::Malformed("history length disagrees with epoch"));
        }
        let mut history = Vec::with_capacity(history_len);
        for _ in 0..history_len {
            history.push(r.felt()?);
        }
        if r.pos != bytes.len() {
            return Err(AccumulatorError::Malformed("trailing bytes"));
        }
        if *history.last().expect("nonempty") != acc.root() {
            return Err(AccumulatorError::Malformed("recorded root disagrees with tree"));
        }
        acc.epoch = epoch;
        acc.next_slot = next_slot;
        acc.root_history = history;
        Ok(acc)
    }

    /// Writes the state to a file.
    pub fn save(&self, path: &Path) -> Result<(), AccumulatorError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Loads state written by [`Accumulator::save`].
    pub fn load(path: &Path) -> Result<Accumulator, AccumulatorError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Accumulator::from_bytes(&buf)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AccumulatorError> {
        if self.bytes.len() - self.pos < n {
            return Err(AccumulatorError::Malformed("truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, AccumulatorError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, AccumulatorError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, AccumulatorError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, AccumulatorError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn felt(&mut self) -> Result<Felt, AccumulatorError> {
        let raw: [u8; 8] = self.take(8)?.try_into().unwrap();
        Felt::from_be_bytes(raw).ok_or(AccumulatorError::Malformed("non-canonical field element"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merkle::{alg_root_with, alg_verify_with};

    /// Dense-tree oracle: the accumulator root must match a from-scratch
    /// Merkle root over the full (mostly zero) leaf array.
    fn dense_root(acc: &Accumulator) -> Felt {
        let mut leaves = vec![Felt::ZERO; 1 << acc.depth()];
        for (&slot, &v) in &acc.occupied {
            leaves[slot as usize] = v;
        }
        alg_root_with(&acc.params, &leaves, acc.depth()).unwrap()
    }

    #[test]
    fn genesis_is_empty_tree() {
        let acc = Accumulator::new(4);
        assert_eq!(acc.epoch(), 0);
        assert_eq!(acc.root(), zero_subtree_roots(MimcParams::standard(), 4)[4]);
        assert_eq!(acc.root(), dense_root(&acc));
        assert_eq!(acc.root_at(0).unwrap(), acc.root());
    }

    #[test]
    fn add_tracks_dense_oracle() {
        let mut acc = Accumulator::new(4);
        for i in 0..10u64 {
            let slot = acc.add(Felt::new(1000 + i)).unwrap();
            assert_eq!(slot, i as u32);
            assert_eq!(acc.root(), dense_root(&acc), "after add {i}");
            assert_eq!(acc.epoch(), i + 1);
        }
        assert_eq!(acc.live_count(), 10);
    }

    #[test]
    fn witnesses_verify_and_refresh() {
        let mut acc = Accumulator::new(5);
        let c1 = Felt::new(111);
        let c2 = Felt::new(222);
        let s1 = acc.add(c1).unwrap();
        let s2 = acc.add(c2).unwrap();
        let w1 = acc.witness(s1).unwrap();
        assert!(alg_verify_with(&acc.params, acc.root(), c1, &w1));

        // Another mutation stales the old witness…
        acc.add(Felt::new(333)).unwrap();
        assert!(!alg_verify_with(&acc.params, acc.root(), c1, &w1));
        // …refreshing repairs it.
        let w1b = acc.witness(s1).unwrap();
        assert!(alg_verify_with(&acc.params, acc.root(), c1, &w1b));
        let w2 = acc.witness(s2).unwrap();
        assert!(alg_verify_with(&acc.params, acc.root(), c2, &w2));
    }

    #[test]
    fn revoke_zeroes_the_leaf() {
        let mut acc = Accumulator::new(4);
        let s0 = acc.add(Felt::new(500)).unwrap();
        let s1 = acc.add(Felt::new(501)).unwrap();
        acc.revoke(s0).unwrap();
        assert_eq!(acc.root(), dense_root(&acc));
        assert!(!acc.is_occupied(s0));
        assert!(acc.is_occupied(s1));
        assert!(matches!(
            acc.witness(s0),
            Err(AccumulatorError::SlotNotOccupied(0))
        ));
        // Double revocation is an error.
        assert!(matches!(
            acc.revoke(s0),
            Err(AccumulatorError::SlotNotOccupied(0))
        ));
        // The survivor still proves membership.
        let w = acc.witness(s1).unwrap();
        assert!(alg_verify_with(&acc.params, acc.root(), Felt::new(501), &w));
    }

    #[test]
    fn slots_are_never_reused() {
        let mut acc = Accumulator::new(4);
        let s0 = acc.add(Felt::new(1)).unwrap();
        acc.revoke(s0).unwrap();
        let s1 = acc.add(Felt::new(2)).unwrap();
        assert_eq!(s1, 1, "revoked slot must stay burned");
        assert_eq!(acc.next_slot(), 2);
    }

    #[test]
    fn capacity_counts_allocations_not_live_entries() {
        let mut acc = Accumulator::new(2);
        for i in 0..4u64 {
            acc.add(Felt::new(i + 1)).unwrap();
        }
        acc.revoke(0).unwrap();
        // Even with a free-looking leaf, allocation is exhausted.
        assert!(matches!(
            acc.add(Felt::new(9)),
            Err(AccumulatorError::CapacityExhausted)
        ));
    }

    #[test]
    fn epochs_and_history() {
        let mut acc = Accumulator::new(3);
        let genesis = acc.root();
        acc.add(Felt::new(10)).unwrap();
        let r1 = acc.root();
        acc.add(Felt::new(20)).unwrap();
        let r2 = acc.root();
        acc.revoke(0).unwrap();
        let r3 = acc.root();
        assert_eq!(acc.epoch(), 3);
        assert_eq!(acc.root_at(0).unwrap(), genesis);
        assert_eq!(acc.root_at(1).unwrap(), r1);
        assert_eq!(acc.root_at(2).unwrap(), r2);
        assert_eq!(acc.root_at(3).unwrap(), r3);
        assert!(matches!(acc.root_at(4), Err(AccumulatorError::UnknownEpoch(4))));
        assert_eq!(acc.root_history().len(), 4);
    }

    #[test]
    fn deterministic_across_replays() {
        let script = |acc: &mut Accumulator| {
            acc.add(Felt::new(5)).unwrap();
            acc.add(Felt::new(6)).unwrap();
            acc.revoke(0).unwrap();
            acc.add(Felt::new(7)).unwrap();
        };
        let mut a = Accumulator::new(6);
        let mut b = Accumulator::new(6);
        script(&mut a);
        script(&mut b);
        assert_eq!(a.root(), b.root());
        assert_eq!(a.root_history, b.root_history);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut acc = Accumulator::new(5);
        for i in 0..7u64 {
            acc.add(Felt::new(100 + i)).unwrap();
        }
        acc.revoke(2).unwrap();
        acc.revoke(5).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("acc.bin");
        acc.save(&file).unwrap();
        let loaded = Accumulator::load(&file).unwrap();
        assert_eq!(loaded.root(), acc.root());
        assert_eq!(loaded.epoch(), acc.epoch());
        assert_eq!(loaded.next_slot(), acc.next_slot());
        assert_eq!(loaded.root_history, acc.root_history);
        assert_eq!(loaded.occupied, acc.occupied);
        // Witnesses from the reloaded state still verify.
        let w = loaded.witness(3).unwrap();
        assert!(alg_verify_with(&loaded.params, loaded.root(), Felt::new(103), &w));
        // And it keeps allocating where it left off.
        let mut loaded = loaded;
        assert_eq!(loaded.add(Felt::new(999)).unwrap(), 7);
    }

    #[test]
    fn snapshot_rejects_corruption() {
        let mut acc = Accumulator::new(4);
        acc.add(Felt::new(42)).unwrap();
        let bytes = acc.to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Accumulator::from_bytes(&bad),
            Err(AccumulatorError::Malformed("bad magic"))
        ));

        assert!(matches!(
            Accumulator::from_bytes(&bytes[..bytes.len() - 3]),
            Err(AccumulatorError::Malformed(_))
        ));

        // Flip a byte of the recorded current root.
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 1] ^= 1;
        assert!(matches!(
            Accumulator::from_bytes(&bad),
            Err(AccumulatorError::Malformed(_))
        ));

        let mut bad = bytes;
        bad.push(0);
        assert!(matches!(
            Accumulator::from_bytes(&bad),
            Err(AccumulatorError::Malformed("trailing bytes"))
        ));
    }

    #[test]
    fn reduced_round_instance_is_consistent() {
        let params = MimcParams::with_rounds(8);
        let mut acc = Accumulator::with_params(3, params.clone());
        let c = Felt::new(77);
        let slot = acc.add(c).unwrap();
        let w = acc.witness(slot).unwrap();
        assert!(alg_verify_with(&params, acc.root(), c, &w));
        assert_eq!(acc.root(), dense_root(&acc));
        // Differs from the standard instance's tree.
        let mut std_acc = Accumulator::new(3);
        std_acc.add(c).unwrap();
        assert_ne!(acc.root(), std_acc.root());
    }
}
