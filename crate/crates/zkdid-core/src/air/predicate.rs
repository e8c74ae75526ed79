//! The credential predicate as a constraint system.
//!
//! The statement proven is: *"I know a salt, an attribute vector and a
//! Merkle path such that hashing the attributes under the salt gives a
//! leaf of the accumulator with the stated root, and attribute number
//! `attribute_index` is at least `threshold`."*
//!
//! # Trace layout
//!
//! One compression-function call (`h2`) occupies `R = mimc_rounds`
//! consecutive rows — an *invocation*. The lane runs
//! `num_attributes + tree_depth` invocations back to back: first the
//! attribute fold (`acc = h2(acc, a_i)` starting from the salt), then one
//! invocation per Merkle level. Within an invocation the `state` column
//! carries the permutation state, `key` the (fixed) second input and `dm`
//! the feed-forward term `l + r`; the final row exposes the digest in
//! `hout`, which the next invocation picks up. At each Merkle level the
//! `dir` bit swaps digest and sibling (`sib`) into permutation-input
//! order.
//!
//! In parallel, rows `attribute_index * R ..+ range_bits` of the bit
//! columns decompose the proven attribute (`vbit`/`vsum`) and its excess
//! over the threshold (`dbit`/`dsum`), most significant bit first; the
//! final segment row ties `vsum` to the hashed attribute and
//! `vsum - threshold - dsum` to zero, which together enforce the
//! comparison.
//!
//! All cells outside the lane and segment are filled with random field
//! elements by the trace builder; no constraint touches them, and the
//! randomness blinds Merkle-tree openings of the trace.

use rand::RngCore;

use super::{cur, konst, next, Air, AirError, Boundary, Expr, Trace, Transition};
use crate::field::{Felt, MODULUS};
use crate::hashing::{commit_attributes_with, MimcParams};
use crate::merkle::{alg_verify_with, AlgPath};

/// Permutation state (first compression input, evolving).
pub const COL_STATE: usize = 0;
/// Round key (second compression input, constant per invocation).
pub const COL_KEY: usize = 1;
/// Feed-forward term `l + r`, constant per invocation.
pub const COL_DM: usize = 2;
/// Compression output, defined on each invocation's final row.
pub const COL_HOUT: usize = 3;
/// Merkle sibling, defined on each path invocation's first row.
pub const COL_SIB: usize = 4;
/// Merkle direction bit, defined on each path invocation's first row.
pub const COL_DIR: usize = 5;
/// Bits of the proven attribute value, most significant first.
pub const COL_VBIT: usize = 6;
/// Running value accumulator over `vbit`.
pub const COL_VSUM: usize = 7;
/// Bits of `value - threshold`.
pub const COL_DBIT: usize = 8;
/// Running accumulator over `dbit`.
pub const COL_DSUM: usize = 9;

/// Number of committed trace columns.
pub const TRACE_COLUMNS: usize = 10;

// Mask indices, in the order `build_masks` emits them.
const M_ROUND: usize = 0;
const M_START: usize = 1;
const M_FINAL: usize = 2;
const M_FOLD_B: usize = 3;
const M_PATH_B: usize = 4;
const M_RANGE_INIT: usize = 5;
const M_RANGE_STEP: usize = 6;
const M_RANGE_FIN: usize = 7;
const NUM_MASKS: usize = 8;

/// Shape parameters shared by prover and verifier. All four are part of
/// the public statement; changing any of them changes the trace layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AirParams {
    /// Number of attributes folded into one credential commitment.
    pub num_attributes: u16,
    /// Accumulator tree depth.
    pub tree_depth: u8,
    /// Rounds of the compression permutation; must be a power of two.
    pub mimc_rounds: u16,
    /// Bit width of attribute values and threshold differences.
    pub range_bits: u8,
}

impl AirParams {
    /// Production shape: single-attribute credentials in a depth-16
    /// accumulator with the full 64-round permutation and 32-bit values.
    pub fn standard() -> AirParams {
        AirParams {
            num_attributes: 1,
            tree_depth: 16,
            mimc_rounds: 64,
            range_bits: 32,
        }
    }

    pub fn validate(&self) -> Result<(), AirError> {
        if self.num_attributes == 0 {
            return Err(AirError::InvalidParams("need at least one attribute".into()));
        }
        if self.tree_depth == 0 || self.tree_depth > 32 {
            return Err(AirError::InvalidParams("tree depth must be in 1..=32".into()));
        }
        if self.mimc_rounds < 2 || !self.mimc_rounds.is_power_of_two() {
            return Err(AirError::InvalidParams(
                "round count must be a power of two, at least 2".into(),
            ));
        }
        if self.range_bits == 0 || self.range_bits > 32 {
            return Err(AirError::InvalidParams("range bits must be in 1..=32".into()));
        }
        if u16::from(self.range_bits) > self.mimc_rounds {
            return Err(AirError::InvalidParams(
                "range segment must fit inside one invocation".into(),
            ));
        }
        Ok(())
    }

    /// Number of compression invocations in the lane.
    pub fn invocations(&self) -> usize {
        self.num_attributes as usize + self.tree_depth as usize
    }

    /// Rows actually used by the lane.
    pub fn lane_length(&self) -> usize {
        self.invocations() * self.mimc_rounds as usize
    }

    /// Trace length: the lane padded to a power of two, with at least one
    /// spare row so the lane's final row always has a successor inside
    /// the domain.
    pub fn trace_length(&self) -> usize {
        (self.lane_length() + 1).next_power_of_two()
    }

    /// The compression instance these parameters select.
    pub fn mimc(&self) -> MimcParams {
        if self.mimc_rounds as usize == MimcParams::standard().rounds() {
            MimcParams::standard().clone()
        } else {
            MimcParams::with_rounds(self.mimc_rounds as usize)
        }
    }
}

/// Public inputs of one predicate instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredicateStatement {
    /// Which attribute the threshold applies to.
    pub attribute_index: u16,
    /// Claimed lower bound on the attribute value.
    pub threshold: u32,
    /// Accumulator root the credential commitment must live under.
    pub accumulator_root: Felt,
}

impl PredicateStatement {
    pub fn validate(&self, params: &AirParams) -> Result<(), AirError> {
        if self.attribute_index >= params.num_attributes {
            return Err(AirError::InvalidStatement(format!(
                "attribute index {} out of range ({} attributes)",
                self.attribute_index, params.num_attributes
            )));
        }
        if params.range_bits < 32 && u64::from(self.threshold) >= (1u64 << params.range_bits) {
            return Err(AirError::InvalidStatement(format!(
                "threshold does not fit in {} bits",
                params.range_bits
            )));
        }
        Ok(())
    }
}

/// Private inputs of one predicate instance.
#[derive(Clone, Debug)]
pub struct PredicateWitness {
    /// Full attribute vector, in schema order.
    pub attributes: Vec<u32>,
    /// Blinding salt the commitment was built with.
    pub salt: Felt,
    /// Membership path of the commitment in the accumulator.
    pub path: AlgPath,
}

fn build_masks(params: &AirParams, statement: &PredicateStatement) -> Vec<Vec<Felt>> {
    let n = params.trace_length();
    let r = params.mimc_rounds as usize;
    let m = params.num_attributes as usize;
    let invocations = params.invocations();
    let bits = params.range_bits as usize;
    let mut masks = vec![vec![Felt::ZERO; n]; NUM_MASKS];
    for inv in 0..invocations {
        let base = inv * r;
        for rho in 0..r - 1 {
            masks[M_ROUND][base + rho] = Felt::ONE;
        }
        masks[M_START][base] = Felt::ONE;
        masks[M_FINAL][base + r - 1] = Felt::ONE;
        // Boundary masks sit on the final row of the invocation *before*
        // the one they feed: fold-to-fold for attributes 1.., then one
        // path hand-off per tree level.
        if inv + 1 < m {
            masks[M_FOLD_B][base + r - 1] = Felt::ONE;
        } else if inv + 1 < invocations {
            masks[M_PATH_B][base + r - 1] = Felt::ONE;
        }
    }
    let seg = statement.attribute_index as usize * r;
    masks[M_RANGE_INIT][seg] = Felt::ONE;
    for b in 0..bits - 1 {
        masks[M_RANGE_STEP][seg + b] = Felt::ONE;
    }
    masks[M_RANGE_FIN][seg + bits - 1] = Felt::ONE;
    masks
}

fn round_constant_column(params: &AirParams) -> Vec<Felt> {
    let n = params.trace_length();
    let r = params.mimc_rounds as usize;
    let mimc = params.mimc();
    (0..n).map(|row| mimc.constant(row % r)).collect()
}

/// Builds the constraint system for one statement. Both prover and
/// verifier call this; everything inside is public.
pub fn predicate_air(params: &AirParams, statement: &PredicateStatement) -> Result<Air, AirError> {
    params.validate()?;
    statement.validate(params)?;

    let n = params.trace_length();
    let lane_end = params.lane_length() - 1;
    let round_in = cur(COL_STATE) + cur(COL_KEY) + Expr::Periodic(0);
    let two = konst(2);

    let transitions = vec![
        // Permutation rounds: state advances, key and feed-forward hold.
        Transition {
            name: "round".into(),
            mask: M_ROUND,
            expr: next(COL_STATE) - round_in.clone().pow(7),
        },
        Transition {
            name: "key_hold".into(),
            mask: M_ROUND,
            expr: next(COL_KEY) - cur(COL_KEY),
        },
        Transition {
            name: "dm_hold".into(),
            mask: M_ROUND,
            expr: next(COL_DM) - cur(COL_DM),
        },
        // Feed-forward is fixed from the invocation's inputs.
        Transition {
            name: "dm_init".into(),
            mask: M_START,
            expr: cur(COL_DM) - cur(COL_STATE) - cur(COL_KEY),
        },
        // Digest: last round plus feed-forward, exposed in `hout`.
        Transition {
            name: "digest".into(),
            mask: M_FINAL,
            expr: cur(COL_HOUT) - round_in.pow(7) - cur(COL_DM),
        },
        // Fold hand-off: digest becomes the next invocation's state.
        Transition {
            name: "fold_chain".into(),
            mask: M_FOLD_B,
            expr: next(COL_STATE) - cur(COL_HOUT),
        },
        // Path hand-off: digest and sibling enter in direction order.
        Transition {
            name: "path_state".into(),
            mask: M_PATH_B,
            expr: next(COL_STATE)
                - cur(COL_HOUT)
                - next(COL_DIR) * (next(COL_SIB) - cur(COL_HOUT)),
        },
        Transition {
            name: "path_key".into(),
            mask: M_PATH_B,
            expr: next(COL_KEY)
                - next(COL_SIB)
                - next(COL_DIR) * (cur(COL_HOUT) - next(COL_SIB)),
        },
        Transition {
            name: "dir_bool".into(),
            mask: M_PATH_B,
            expr: next(COL_DIR) * next(COL_DIR) - next(COL_DIR),
        },
        // Range segment: accumulators start at their first bit…
        Transition {
            name: "vsum_init".into(),
            mask: M_RANGE_INIT,
            expr: cur(COL_VSUM) - cur(COL_VBIT),
        },
        Transition {
            name: "dsum_init".into(),
            mask: M_RANGE_INIT,
            expr: cur(COL_DSUM) - cur(COL_DBIT),
        },
        Transition {
            name: "vbit_bool_init".into(),
            mask: M_RANGE_INIT,
            expr: cur(COL_VBIT) * cur(COL_VBIT) - cur(COL_VBIT),
        },
        Transition {
            name: "dbit_bool_init".into(),
            mask: M_RANGE_INIT,
            expr: cur(COL_DBIT) * cur(COL_DBIT) - cur(COL_DBIT),
        },
        // …then shift in one bit per row…
        Transition {
            name: "vsum_step".into(),
            mask: M_RANGE_STEP,
            expr: next(COL_VSUM) - two.clone() * cur(COL_VSUM) - next(COL_VBIT),
        },
        Transition {
            name: "dsum_step".into(),
            mask: M_RANGE_STEP,
            expr: next(COL_DSUM) - two * cur(COL_DSUM) - next(COL_DBIT),
        },
        Transition {
            name: "vbit_bool".into(),
            mask: M_RANGE_STEP,
            expr: next(COL_VBIT) * next(COL_VBIT) - next(COL_VBIT),
        },
        Transition {
            name: "dbit_bool".into(),
            mask: M_RANGE_STEP,
            expr: next(COL_DBIT) * next(COL_DBIT) - next(COL_DBIT),
        },
        // …and close: the rebuilt value is the hashed attribute, and it
        // exceeds the threshold by exactly the decomposed difference.
        Transition {
            name: "value_binding".into(),
            mask: M_RANGE_FIN,
            expr: cur(COL_VSUM) - cur(COL_KEY),
        },
        Transition {
            name: "threshold".into(),
            mask: M_RANGE_FIN,
            expr: cur(COL_VSUM) - Expr::Pub(0) - cur(COL_DSUM),
        },
    ];

    let air = Air {
        trace_length: n,
        num_columns: TRACE_COLUMNS,
        masks: build_masks(params, statement),
        periodics: vec![round_constant_column(params)],
        public_inputs: vec![Felt::from(statement.threshold)],
        transitions,
        boundaries: vec![Boundary {
            name: "root".into(),
            column: COL_HOUT,
            row: lane_end,
            value: statement.accumulator_root,
        }],
    };
    air.validate()?;
    Ok(air)
}

fn random_felt<R: RngCore>(rng: &mut R) -> Felt {
    loop {
        let v = rng.next_u64();
        if v < MODULUS {
            return Felt::new(v);
        }
    }
}

/// Writes one compression invocation into the trace and returns its
/// digest. `l` seeds the state, `k` is the round key.
fn fill_invocation(trace: &mut Trace, mimc: &MimcParams, inv: usize, l: Felt, k: Felt) -> Felt {
    let r = mimc.rounds();
    let base = inv * r;
    let dm = l + k;
    let mut s = l;
    for rho in 0..r {
        trace.set(COL_STATE, base + rho, s);
        trace.set(COL_KEY, base + rho, k);
        trace.set(COL_DM, base + rho, dm);
        s = (s + k + mimc.constant(rho)).pow7();
    }
    let digest = s + dm;
    trace.set(COL_HOUT, base + r - 1, digest);
    digest
}

/// Builds a satisfying trace for `statement` from `witness`, or reports
/// why the witness does not satisfy it. Unconstrained cells are filled
/// with randomness from `rng` so that openings of the committed trace
/// leak nothing beyond the constraint values.
pub fn build_trace<R: RngCore>(
    params: &AirParams,
    statement: &PredicateStatement,
    witness: &PredicateWitness,
    rng: &mut R,
) -> Result<Trace, AirError> {
    params.validate()?;
    statement.validate(params)?;
    let m = params.num_attributes as usize;
    let depth = params.tree_depth as usize;
    let bits = params.range_bits;
    if witness.attributes.len() != m || witness.path.siblings.len() != depth {
        return Err(AirError::WitnessShape);
    }
    for (i, &a) in witness.attributes.iter().enumerate() {
        if bits < 32 && u64::from(a) >= (1u64 << bits) {
            return Err(AirError::AttributeOutOfRange { index: i, bits });
        }
    }
    let value = witness.attributes[statement.attribute_index as usize];
    if value < statement.threshold {
        return Err(AirError::PredicateUnsatisfied);
    }
    let mimc = params.mimc();
    let commitment = commit_attributes_with(&mimc, &witness.attributes, witness.salt)
        .expect("attribute vector is nonempty");
    if !alg_verify_with(&mimc, statement.accumulator_root, commitment, &witness.path) {
        return Err(AirError::MembershipMismatch);
    }

    let n = params.trace_length();
    let r = params.mimc_rounds as usize;
    let mut trace = Trace::new(TRACE_COLUMNS, n);
    for col in 0..TRACE_COLUMNS {
        for row in 0..n {
            trace.set(col, row, random_felt(rng));
        }
    }

    // Attribute fold.
    let mut acc = witness.salt;
    for (i, &a) in witness.attributes.iter().enumerate() {
        acc = fill_invocation(&mut trace, &mimc, i, acc, Felt::from(a));
    }
    // Merkle climb; direction bit j of the leaf index picks the operand
    // order exactly as path verification does.
    for (j, &sib) in witness.path.siblings.iter().enumerate() {
        let dir = (witness.path.index >> j) & 1 == 1;
        let (l, k) = if dir { (sib, acc) } else { (acc, sib) };
        let inv = m + j;
        trace.set(COL_SIB, inv * r, sib);
        trace.set(COL_DIR, inv * r, if dir { Felt::ONE } else { Felt::ZERO });
        acc = fill_invocation(&mut trace, &mimc, inv, l, k);
    }
    debug_assert_eq!(acc, statement.accumulator_root);

    // Range segment, most significant bit first.
    let seg = statement.attribute_index as usize * r;
    let diff = u64::from(value - statement.threshold);
    let value = u64::from(value);
    let mut vs = 0u64;
    let mut ds = 0u64;
    for b in 0..bits as usize {
        let pos = bits as usize - 1 - b;
        let vb = (value >> pos) & 1;
        let db = (diff >> pos) & 1;
        vs = 2 * vs + vb;
        ds = 2 * ds + db;
        trace.set(COL_VBIT, seg + b, Felt::new(vb));
        trace.set(COL_VSUM, seg + b, Felt::new(vs));
        trace.set(COL_DBIT, seg + b, Felt::new(db));
        trace.set(COL_DSUM, seg + b, Felt::new(ds));
    }

    Ok(trace)
}
