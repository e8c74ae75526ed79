//! The proof system: commit to a low-degree extension of the execution
//! trace, combine all constraint quotients into one composition
//! polynomial under verifier-chosen weights, argue the composition is
//! low-degree with FRI, and answer spot checks that tie the committed
//! trace to the committed composition.
//!
//! Prover and verifier drive one shared Fiat-Shamir transcript in this
//! order: system parameters and statement, the caller's nonce, the trace
//! root, per-constraint weights, the composition root, the FRI roots and
//! final polynomial, and finally the query positions. A verifier always
//! absorbs *its own* statement and nonce, so a proof transplanted to a
//! different statement or session derails every challenge after that
//! point and fails the spot checks.
//!
//! Degree bookkeeping: with trace length `N`, transition constraints of
//! degree `d` yield quotients of degree at most `d * (N - 1)`; every
//! quotient is lifted to a common target degree `8N - 1` with a
//! `alpha + beta * x^adj` weighing. The blowup factor is fixed at 8 and
//! the composition is folded down to a two-point domain, so soundness
//! rests on the per-query consistency checks between the trace openings
//! and the composition openings rather than on the final-degree bound
//! alone — the classic instructional-STARK trade-off, adopted here
//! deliberately to keep the system small.

pub mod codec;

use std::collections::HashMap;

use rand::RngCore;
use thiserror::Error;

use crate::air::predicate::{
    build_trace, predicate_air, AirParams, PredicateStatement, PredicateWitness, TRACE_COLUMNS,
};
use crate::air::{Air, AirError};
use crate::field::{batch_inverse, intt, ntt, poly_eval, EvalDomain, Felt, FieldError, MODULUS};
use crate::fri::{fri_commit, fri_verify, FriError, FriProof};
use crate::hashing::Digest32;
use crate::merkle::{byte_verify, ByteMerkleTree, BytePath, MerkleError};
use crate::transcript::Transcript;

/// Transcript domain label; versioned so incompatible revisions of the
/// protocol can never replay each other's proofs.
const PROTOCOL_LABEL: &str = "zkdid/stark/v1";

/// Evaluation-domain blowup factor (rate 1/8).
pub const BLOWUP: usize = 8;

/// Offset of the low-degree-extension coset, kept off the trace domain.
fn lde_offset() -> Felt {
    Felt::generator()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProveError {
    #[error(transparent)]
    Air(#[from] AirError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Fri(#[from] FriError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error(transparent)]
    Air(#[from] AirError),
    /// Query count or opening shapes disagree with the parameters.
    #[error("proof shape does not match the parameters")]
    ShapeMismatch,
    /// A trace opening failed authentication in the given query.
    #[error("invalid trace opening in query {0}")]
    TraceOpening(usize),
    /// A composition opening failed authentication in the given query.
    #[error("invalid composition opening in query {0}")]
    CompositionOpening(usize),
    /// No authenticated opening covers a queried position.
    #[error("missing opening for queried position {0}")]
    MissingOpening(usize),
    /// Recomputed composition value disagrees with the committed one.
    #[error("trace and composition disagree in query {0}")]
    Inconsistent(usize),
    #[error(transparent)]
    Fri(#[from] FriError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Public proof-system parameters. The air shape pins the trace layout;
/// `num_queries` sets the spot-check count (and with it the soundness
/// level of the consistency phase).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProofParams {
    pub air: AirParams,
    pub num_queries: usize,
}

impl ProofParams {
    /// Production shape with 30 spot checks.
    pub fn standard() -> ProofParams {
        ProofParams {
            air: AirParams::standard(),
            num_queries: 30,
        }
    }

    pub fn validate(&self) -> Result<(), AirError> {
        self.air.validate()?;
        if self.num_queries == 0 || self.num_queries > 1024 {
            return Err(AirError::InvalidParams("query count must be in 1..=1024".into()));
        }
        Ok(())
    }

    /// Size of the low-degree-extension domain.
    pub fn lde_size(&self) -> usize {
        self.air.trace_length() * BLOWUP
    }

    /// Number of FRI folds: down to a two-point final domain.
    pub fn fri_layers(&self) -> usize {
        (self.lde_size().trailing_zeros() - 1) as usize
    }
}

/// One query's worth of openings: both trace rows the transition needs,
/// plus the composition value at the query point and its negation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryOpening {
    pub trace_row: Vec<Felt>,
    pub trace_path: BytePath,
    pub next_row: Vec<Felt>,
    pub next_path: BytePath,
    pub comp_value: Felt,
    pub comp_path: BytePath,
    pub comp_sym_value: Felt,
    pub comp_sym_path: BytePath,
}

/// A complete proof for one predicate statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarkProof {
    pub trace_root: Digest32,
    pub composition_root: Digest32,
    pub queries: Vec<QueryOpening>,
    pub fri: FriProof,
}

/// Binds parameters and statement into the transcript, in fixed layout.
fn absorb_instance(t: &mut Transcript, params: &ProofParams, statement: &PredicateStatement) {
    let mut buf = Vec::with_capacity(11);
    buf.extend_from_slice(&params.air.num_attributes.to_be_bytes());
    buf.push(params.air.tree_depth);
    buf.extend_from_slice(&params.air.mimc_rounds.to_be_bytes());
    buf.push(params.air.range_bits);
    buf.push(BLOWUP as u8);
    buf.extend_from_slice(&(params.num_queries as u32).to_be_bytes());
    t.absorb("params", &buf);
    let mut sb = Vec::with_capacity(14);
    sb.extend_from_slice(&statement.attribute_index.to_be_bytes());
    sb.extend_from_slice(&statement.threshold.to_be_bytes());
    sb.extend_from_slice(&statement.accumulator_root.to_be_bytes());
    t.absorb("statement", &sb);
}

/// Draws one `(alpha, beta)` weight pair per constraint, transitions
/// first, then boundaries, in declaration order.
fn draw_weights(air: &Air, t: &mut Transcript) -> Vec<(Felt, Felt)> {
    (0..air.transitions.len() + air.boundaries.len())
        .map(|_| {
            let a = t.challenge_felt("cp/alpha");
            let b = t.challenge_felt("cp/beta");
            (a, b)
        })
        .collect()
}

/// Serializes one trace row into the Merkle leaf layout (one 8-byte
/// big-endian word per column).
fn row_leaf_bytes(row: &[Felt]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * row.len());
    for v in row {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Evaluates the composition polynomial at one point from the trace rows
/// at `x` and `g*x` plus the public column values at `x`. Prover (over
/// the whole extension domain) and verifier (at query points) both call
/// this; it *is* the definition of the composition polynomial.
#[allow(clippy::too_many_arguments)]
fn evaluate_composition(
    air: &Air,
    weights: &[(Felt, Felt)],
    trace_dom: &EvalDomain,
    x: Felt,
    cur_row: &[Felt],
    next_row: &[Felt],
    masks_at_x: &[Felt],
    periodics_at_x: &[Felt],
) -> Result<Felt, FieldError> {
    let n = air.trace_length as u64;
    let target = 8 * n - 1;
    // Transition zerofier: vanishes on the trace domain except its last
    // point, so quotients are polynomials exactly when M*C does.
    let g_last = trace_dom.element(air.trace_length - 1);
    let zt_inv = (x - g_last) * (x.pow(n) - Felt::ONE).inv()?;
    let mut acc = Felt::ZERO;
    for (k, tr) in air.transitions.iter().enumerate() {
        let c = tr.expr.eval(cur_row, next_row, periodics_at_x, &air.public_inputs);
        let q = c * masks_at_x[tr.mask] * zt_inv;
        let adj = target - (tr.expr.degree() as u64) * (n - 1);
        let (alpha, beta) = weights[k];
        acc += (alpha + beta * x.pow(adj)) * q;
    }
    let bound_adj = target - (n - 2);
    for (j, b) in air.boundaries.iter().enumerate() {
        let q = (cur_row[b.column] - b.value) * (x - trace_dom.element(b.row)).inv()?;
        let (alpha, beta) = weights[air.transitions.len() + j];
        acc += (alpha + beta * x.pow(bound_adj)) * q;
    }
    Ok(acc)
}

/// Interpolates over the trace domain and re-evaluates over the larger
/// coset. Returns the low-degree extension.
fn extend_column(
    column: &[Felt],
    trace_dom: &EvalDomain,
    lde_dom: &EvalDomain,
) -> Result<Vec<Felt>, FieldError> {
    let mut coeffs = intt(column, trace_dom)?;
    coeffs.resize(lde_dom.size(), Felt::ZERO);
    ntt(&coeffs, lde_dom)
}

/// Produces a proof that `witness` satisfies `statement` under `params`.
/// `nonce` is caller context (session nonce, presentation binding); the
/// verifier must supply the identical bytes. `rng` drives only blinding:
/// trace randomization and Merkle salts.
pub fn prove<R: RngCore>(
    params: &ProofParams,
    statement: &PredicateStatement,
    witness: &PredicateWitness,
    nonce: &[u8],
    rng: &mut R,
) -> Result<StarkProof, ProveError> {
    params.validate()?;
    let air = predicate_air(&params.air, statement)?;
    let trace = build_trace(&params.air, statement, witness, rng)?;
    // Catch witness/builder bugs here rather than shipping a proof that
    // can never verify.
    air.check_trace(&trace)?;

    let n = air.trace_length;
    let log_n = n.trailing_zeros();
    let trace_dom = EvalDomain::new(log_n, Felt::ONE)?;
    let lde_dom = EvalDomain::new(log_n + 3, lde_offset())?;
    let m = lde_dom.size();

    let mut t = Transcript::new(PROTOCOL_LABEL);
    absorb_instance(&mut t, params, statement);
    t.absorb("nonce", nonce);

    // Commit to the extended trace, row-wise.
    let mut trace_lde = Vec::with_capacity(TRACE_COLUMNS);
    for c in 0..TRACE_COLUMNS {
        trace_lde.push(extend_column(trace.column(c), &trace_dom, &lde_dom)?);
    }
    let leaves: Vec<Vec<u8>> = (0..m)
        .map(|i| {
            let row: Vec<Felt> = trace_lde.iter().map(|col| col[i]).collect();
            row_leaf_bytes(&row)
        })
        .collect();
    let trace_tree = ByteMerkleTree::build(&leaves, rng)?;
    t.absorb("trace_root", trace_tree.root().as_bytes());

    let weights = draw_weights(&air, &mut t);

    // Public columns, extended the same way.
    let mut mask_lde = Vec::with_capacity(air.masks.len());
    for mask in &air.masks {
        mask_lde.push(extend_column(mask, &trace_dom, &lde_dom)?);
    }
    let mut per_lde = Vec::with_capacity(air.periodics.len());
    for p in &air.periodics {
        per_lde.push(extend_column(p, &trace_dom, &lde_dom)?);
    }

    // Composition polynomial over the whole extension domain.
    let xs = lde_dom.elements();
    let mut cp = Vec::with_capacity(m);
    let mut cur_row = vec![Felt::ZERO; TRACE_COLUMNS];
    let mut next_row = vec![Felt::ZERO; TRACE_COLUMNS];
    let mut masks_at = vec![Felt::ZERO; air.masks.len()];
    let mut per_at = vec![Felt::ZERO; air.periodics.len()];
    for i in 0..m {
        let j = (i + BLOWUP) % m;
        for (c, col) in trace_lde.iter().enumerate() {
            cur_row[c] = col[i];
            next_row[c] = col[j];
        }
        for (k, col) in mask_lde.iter().enumerate() {
            masks_at[k] = col[i];
        }
        for (k, col) in per_lde.iter().enumerate() {
            per_at[k] = col[i];
        }
        cp.push(evaluate_composition(
            &air, &weights, &trace_dom, xs[i], &cur_row, &next_row, &masks_at, &per_at,
        )?);
    }

    let comp_leaves: Vec<Vec<u8>> = cp.iter().map(|v| v.to_be_bytes().to_vec()).collect();
    let comp_tree = ByteMerkleTree::build(&comp_leaves, rng)?;
    t.absorb("composition_root", comp_tree.root().as_bytes());

    let fri_prover = fri_commit(&cp, &lde_dom, params.fri_layers(), &mut t, rng)?;

    let indices = t.challenge_indices("query", params.num_queries, m);
    let fri = fri_prover.open(&indices)?;

    let mut queries = Vec::with_capacity(indices.len());
    for &idx in &indices {
        let nxt = (idx + BLOWUP) % m;
        let sym = (idx + m / 2) % m;
        queries.push(QueryOpening {
            trace_row: trace_lde.iter().map(|col| col[idx]).collect(),
            trace_path: trace_tree.open(idx)?,
            next_row: trace_lde.iter().map(|col| col[nxt]).collect(),
            next_path: trace_tree.open(nxt)?,
            comp_value: cp[idx],
            comp_path: comp_tree.open(idx)?,
            comp_sym_value: cp[sym],
            comp_sym_path: comp_tree.open(sym)?,
        });
    }

    Ok(StarkProof {
        trace_root: trace_tree.root(),
        composition_root: comp_tree.root(),
        queries,
        fri,
    })
}

/// Checks a proof against a statement. The caller passes its own `nonce`
/// bytes — never ones taken from the proof or the prover — which is what
/// makes replayed and transplanted proofs fail.
pub fn verify(
    params: &ProofParams,
    statement: &PredicateStatement,
    proof: &StarkProof,
    nonce: &[u8],
) -> Result<(), VerifyError> {
    params.validate()?;
    let air = predicate_air(&params.air, statement)?;
    if proof.queries.len() != params.num_queries {
        return Err(VerifyError::ShapeMismatch);
    }
    let n = air.trace_length;
    let log_n = n.trailing_zeros();
    let trace_dom = EvalDomain::new(log_n, Felt::ONE)?;
    let lde_dom = EvalDomain::new(log_n + 3, lde_offset())?;
    let m = lde_dom.size();

    let mut t = Transcript::new(PROTOCOL_LABEL);
    absorb_instance(&mut t, params, statement);
    t.absorb("nonce", nonce);
    t.absorb("trace_root", proof.trace_root.as_bytes());
    let weights = draw_weights(&air, &mut t);
    t.absorb("composition_root", proof.composition_root.as_bytes());

    // Authenticate every opening up front; afterwards the maps hold only
    // root-bound (position, value) pairs.
    let mut trace_map: HashMap<usize, &[Felt]> = HashMap::new();
    let mut comp_map: HashMap<usize, Felt> = HashMap::new();
    for (q, query) in proof.queries.iter().enumerate() {
        for (row, path) in [(&query.trace_row, &query.trace_path), (&query.next_row, &query.next_path)] {
            if row.len() != TRACE_COLUMNS
                || !byte_verify(&proof.trace_root, &row_leaf_bytes(row), path)
            {
                return Err(VerifyError::TraceOpening(q));
            }
            trace_map.insert(path.index as usize, row.as_slice());
        }
        for (value, path) in [
            (query.comp_value, &query.comp_path),
            (query.comp_sym_value, &query.comp_sym_path),
        ] {
            if !byte_verify(&proof.composition_root, &value.to_be_bytes(), path) {
                return Err(VerifyError::CompositionOpening(q));
            }
            comp_map.insert(path.index as usize, value);
        }
    }

    // FRI replays its own transcript traffic and derives the query
    // positions; its layer zero is the authenticated composition map.
    let indices = fri_verify(
        &proof.fri,
        &lde_dom,
        params.fri_layers(),
        params.num_queries,
        &mut t,
        |i| comp_map.get(&i).copied(),
    )?;

    // Public columns, prepared once for cheap out-of-domain evaluation.
    let public = PublicColumns::prepare(&air, &trace_dom)?;

    // Spot checks: the committed composition must equal the composition
    // recomputed from the committed trace at every queried point.
    let mut masks_at = vec![Felt::ZERO; air.masks.len()];
    let mut per_at = vec![Felt::ZERO; air.periodics.len()];
    for (q, &idx) in indices.iter().enumerate() {
        let nxt = (idx + BLOWUP) % m;
        let cur_row = *trace_map.get(&idx).ok_or(VerifyError::MissingOpening(idx))?;
        let next_row = *trace_map.get(&nxt).ok_or(VerifyError::MissingOpening(nxt))?;
        let committed = *comp_map.get(&idx).ok_or(VerifyError::MissingOpening(idx))?;
        let x = lde_dom.element(idx);
        public.eval_at(x, &mut masks_at, &mut per_at)?;
        let recomputed = evaluate_composition(
            &air, &weights, &trace_dom, x, cur_row, next_row, &masks_at, &per_at,
        )?;
        if recomputed != committed {
            return Err(VerifyError::Inconsistent(q));
        }
    }
    Ok(())
}

/// Interpolant coefficients of one periodic column: periodic schedules
/// concentrate on a handful of coefficients (a column repeating every
/// `p` rows only has energy at multiples of `n / p`), so most columns
/// evaluate as short sparse sums. Anything without that structure falls
/// back to dense Horner evaluation.
enum PeriodicPoly {
    Sparse(Vec<(u64, Felt)>),
    Dense(Vec<Felt>),
}

/// Out-of-domain evaluator for the public mask and periodic columns.
///
/// The masks are boolean selectors with small support (or small
/// co-support), so each evaluation sums Lagrange basis terms
/// `L_i(x) = Z(x) * w^i / (n * (x - w^i))` over just the selected rows
/// — cost proportional to the support, not the trace length. Mostly-one
/// selectors use the complement: summing the basis over *all* rows gives
/// exactly 1, so `P(x) = 1 - Z(x)/n * sum over unselected rows`. The
/// query points live on a coset disjoint from the trace domain, so the
/// denominators can never vanish.
struct PublicColumns {
    n_inv: Felt,
    omegas: Vec<Felt>,
    /// Per mask: the rows the Lagrange sum ranges over, and whether those
    /// rows are the complement of the selector's support.
    masks: Vec<(Vec<usize>, bool)>,
    periodics: Vec<PeriodicPoly>,
}

impl PublicColumns {
    fn prepare(air: &Air, trace_dom: &EvalDomain) -> Result<PublicColumns, FieldError> {
        let n = trace_dom.size();
        let masks = air
            .masks
            .iter()
            .map(|col| {
                let ones: Vec<usize> = (0..n).filter(|&i| !col[i].is_zero()).collect();
                if ones.len() * 2 > n {
                    ((0..n).filter(|&i| col[i].is_zero()).collect(), true)
                } else {
                    (ones, false)
                }
            })
            .collect();
        let periodics = air
            .periodics
            .iter()
            .map(|col| {
                let coeffs = intt(col, trace_dom)?;
                let sparse: Vec<(u64, Felt)> = coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(j, &c)| (j as u64, c))
                    .collect();
                Ok(if sparse.len() * 8 <= n {
                    PeriodicPoly::Sparse(sparse)
                } else {
                    PeriodicPoly::Dense(coeffs)
                })
            })
            .collect::<Result<_, FieldError>>()?;
        Ok(PublicColumns {
            n_inv: Felt::new(n as u64).pow(MODULUS - 2),
            omegas: trace_dom.elements(),
            masks,
            periodics,
        })
    }

    fn eval_at(&self, x: Felt, masks_at: &mut [Felt], per_at: &mut [Felt]) -> Result<(), FieldError> {
        let n = self.omegas.len();
        let scale = (x.pow(n as u64) - Felt::ONE) * self.n_inv;

        let denoms: Vec<Felt> = self
            .masks
            .iter()
            .flat_map(|(rows, _)| rows.iter().map(|&i| x - self.omegas[i]))
            .collect();
        let invs = batch_inverse(&denoms)?;
        let mut at = 0;
        for (k, (rows, complement)) in self.masks.iter().enumerate() {
            let mut sum = Felt::ZERO;
            for &i in rows {
                sum = sum + self.omegas[i] * invs[at];
                at += 1;
            }
            let val = scale * sum;
            masks_at[k] = if *complement { Felt::ONE - val } else { val };
        }

        for (k, poly) in self.periodics.iter().enumerate() {
            per_at[k] = match poly {
                PeriodicPoly::Sparse(terms) => terms
                    .iter()
                    .fold(Felt::ZERO, |acc, &(j, c)| acc + c * x.pow(j)),
                PeriodicPoly::Dense(coeffs) => poly_eval(coeffs, x),
            };
        }
        Ok(())
    }
}
