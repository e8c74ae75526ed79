//! A deterministic ledger-cost model for the benchmark harness.
//!
//! The unit is one compression-function invocation performed by a
//! verifying contract: Merkle authentication paths for the trace and
//! composition commitments, the per-layer folding openings, plus a flat
//! transcript overhead. The count depends only on the proof parameters,
//! never on the witness, so equal configurations always price equally.

use zkdid_core::stark::BLOWUP;
use zkdid_core::ProofParams;

/// Flat charge for transcript initialization and challenge squeezes.
const TRANSCRIPT_OVERHEAD: u64 = 16;

/// Hash invocations needed to verify one proof under `params`.
pub fn cost_units(params: &ProofParams) -> u64 {
    let lde = params.air.trace_length() * BLOWUP;
    let lde_log = lde.trailing_zeros() as u64;
    // Folding halts on a two-point domain.
    let layers = lde_log.saturating_sub(1);
    let queries = params.num_queries as u64;

    // Two commitment trees opened per query, full-depth paths.
    let commitment_paths = 2 * lde_log;
    // One path per folding layer, each one level shallower.
    let folding_paths = (1..=layers).map(|i| lde_log - i).sum::<u64>();
    // Leaf digests for every opened value.
    let leaves = 2 + layers;

    queries * (commitment_paths + folding_paths + leaves) + TRANSCRIPT_OVERHEAD
}
