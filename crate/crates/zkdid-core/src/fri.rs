//! FRI low-degree argument: commit to a vector of evaluations over a
//! coset, then repeatedly fold it in half with verifier-chosen mixing
//! factors until the remainder is small enough to send in the clear as
//! (at most linear) polynomial coefficients.
//!
//! One fold maps evaluations of `f` over a domain of size `M` to
//! evaluations of `f'(y) = (f(x) + f(-x))/2 + beta * (f(x) - f(-x))/(2x)`
//! (with `y = x^2`) over the squared domain of size `M/2`; `f'` has half
//! the degree of `f`, and agreement between the two layers at random
//! points transfers closeness-to-low-degree down the chain. Layer zero is
//! *not* committed here: callers have already committed those evaluations
//! elsewhere and supply them per index at verification time.
//!
//! Queries are not part of the commit phase. Both sides derive the query
//! indices from the shared transcript after all roots and the final
//! coefficients have been absorbed; [`FriProver::open`] then assembles
//! the per-query openings the verifier will check.

use rand::RngCore;
use thiserror::Error;

use crate::field::{intt, EvalDomain, Felt, FieldError};
use crate::hashing::Digest32;
use crate::merkle::{byte_verify, ByteMerkleTree, BytePath, MerkleError};
use crate::transcript::Transcript;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FriError {
    /// Evaluation vector length does not match the domain size.
    #[error("evaluation count {0} does not match the domain size {1}")]
    SizeMismatch(usize, usize),
    /// More folds requested than the domain supports.
    #[error("cannot fold a domain of 2^{log_size} points {layers} times")]
    TooManyLayers { log_size: u32, layers: usize },
    /// The fully folded layer is not a polynomial of degree at most one.
    #[error("folded remainder has {0} coefficients, expected at most 2")]
    NotLowDegree(usize),
    /// Proof structure does not match the agreed parameters.
    #[error("proof shape does not match the parameters")]
    ShapeMismatch,
    /// The caller could not supply a layer-zero value for an index.
    #[error("no layer-zero value available at index {0}")]
    MissingLayerZero(usize),
    /// A Merkle opening failed to verify or opened the wrong position.
    #[error("bad opening in query {query}, layer {layer}")]
    BadOpening { query: usize, layer: usize },
    /// Two adjacent layers disagree at a query point.
    #[error("fold mismatch in query {query}, layer {layer}")]
    FoldMismatch { query: usize, layer: usize },
    /// The last fold disagrees with the claimed final polynomial.
    #[error("final polynomial mismatch in query {query}")]
    FinalMismatch { query: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
}

/// Everything the verifier receives: one root per committed layer, the
/// final polynomial and per-query openings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FriProof {
    pub layer_roots: Vec<Digest32>,
    /// Coefficients of the fully folded remainder, constant term first.
    pub final_coeffs: [Felt; 2],
    pub queries: Vec<FriQueryProof>,
}

/// Openings for one query index, outermost committed layer first.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FriQueryProof {
    pub layers: Vec<FriLayerOpening>,
}

/// Values of one committed layer at a query position and its negation,
/// with authentication paths for both.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FriLayerOpening {
    pub value: Felt,
    pub sym_value: Felt,
    pub path: BytePath,
    pub sym_path: BytePath,
}

struct CommittedLayer {
    evals: Vec<Felt>,
    tree: ByteMerkleTree,
}

/// Prover-side state after the commit phase: retained layers plus the
/// public roots and final coefficients.
pub struct FriProver {
    layers: Vec<CommittedLayer>,
    pub layer_roots: Vec<Digest32>,
    pub final_coeffs: [Felt; 2],
}

fn validate_shape(evals_len: usize, domain: &EvalDomain, num_layers: usize) -> Result<(), FriError> {
    if evals_len != domain.size() {
        return Err(FriError::SizeMismatch(evals_len, domain.size()));
    }
    if num_layers == 0 || num_layers >= domain.log_size() as usize {
        return Err(FriError::TooManyLayers {
            log_size: domain.log_size(),
            layers: num_layers,
        });
    }
    Ok(())
}

/// Folds a full evaluation vector once. `domain` is the layer's domain;
/// the result lives on `domain.squared()`. For a polynomial with
/// coefficients `c`, the folded polynomial is `c[2i] + beta * c[2i+1]`,
/// so each fold halves the degree bound.
pub fn fold_layer(evals: &[Felt], domain: &EvalDomain, beta: Felt) -> Vec<Felt> {
    let m = evals.len();
    let half = m / 2;
    let inv2 = Felt::new(2).inv().expect("2 is invertible");
    // x_i^{-1} walks multiplicatively; no per-element inversions.
    let offset_inv = domain.offset().inv().expect("offset is nonzero");
    let gen_inv = domain.generator().inv().expect("generator is nonzero");
    let mut x_inv = offset_inv;
    let mut out = Vec::with_capacity(half);
    for i in 0..half {
        let even = (evals[i] + evals[i + half]) * inv2;
        let odd = (evals[i] - evals[i + half]) * inv2 * x_inv;
        out.push(even + beta * odd);
        x_inv *= gen_inv;
    }
    out
}

/// One verifier-side fold of a value pair at position `i` of `domain`.
fn fold_pair(value: Felt, sym_value: Felt, x: Felt, beta: Felt) -> Result<Felt, FriError> {
    let inv2 = Felt::new(2).inv().expect("2 is invertible");
    let even = (value + sym_value) * inv2;
    let odd = (value - sym_value) * inv2 * x.inv()?;
    Ok(even + beta * odd)
}

/// Commit phase. Draws one mixing factor per fold from the transcript,
/// commits every intermediate layer with a salted Merkle tree (absorbing
/// each root), and absorbs the final coefficients. Layer zero is assumed
/// to be committed by the caller already.
pub fn fri_commit<R: RngCore>(
    evals: &[Felt],
    domain: &EvalDomain,
    num_layers: usize,
    transcript: &mut Transcript,
    rng: &mut R,
) -> Result<FriProver, FriError> {
    validate_shape(evals.len(), domain, num_layers)?;
    let mut layers = Vec::with_capacity(num_layers.saturating_sub(1));
    let mut layer_roots = Vec::with_capacity(num_layers.saturating_sub(1));
    let mut current = evals.to_vec();
    let mut cur_domain = *domain;
    for l in 0..num_layers {
        let beta = transcript.challenge_felt("fri/beta");
        current = fold_layer(&current, &cur_domain, beta);
        cur_domain = cur_domain.squared();
        if l + 1 < num_layers {
            let leaves: Vec<Vec<u8>> = current.iter().map(|v| v.to_be_bytes().to_vec()).collect();
            let tree = ByteMerkleTree::build(&leaves, rng)?;
            let root = tree.root();
            transcript.absorb("fri_root", root.as_bytes());
            layer_roots.push(root);
            layers.push(CommittedLayer {
                evals: current.clone(),
                tree,
            });
        }
    }
    // The remainder travels in the clear; it must be (at most) linear.
    let coeffs = intt(&current, &cur_domain)?;
    let trailing = coeffs.iter().rposition(|c| !c.is_zero()).map_or(0, |p| p + 1);
    if trailing > 2 {
        return Err(FriError::NotLowDegree(trailing));
    }
    let final_coeffs = [coeffs[0], coeffs.get(1).copied().unwrap_or(Felt::ZERO)];
    let mut final_bytes = [0u8; 16];
    final_bytes[..8].copy_from_slice(&final_coeffs[0].to_be_bytes());
    final_bytes[8..].copy_from_slice(&final_coeffs[1].to_be_bytes());
    transcript.absorb("fri_final", &final_bytes);
    Ok(FriProver {
        layers,
        layer_roots,
        final_coeffs,
    })
}

impl FriProver {
    /// Assembles openings for externally chosen query indices (positions
    /// in the *layer-zero* domain).
    pub fn open(&self, indices: &[usize]) -> Result<FriProof, FriError> {
        let mut queries = Vec::with_capacity(indices.len());
        for &idx in indices {
            let mut layers = Vec::with_capacity(self.layers.len());
            for layer in &self.layers {
                let m = layer.evals.len();
                let i = idx % m;
                let sym = (i + m / 2) % m;
                layers.push(FriLayerOpening {
                    value: layer.evals[i],
                    sym_value: layer.evals[sym],
                    path: layer.tree.open(i)?,
                    sym_path: layer.tree.open(sym)?,
                });
            }
            queries.push(FriQueryProof { layers });
        }
        Ok(FriProof {
            layer_roots: self.layer_roots.clone(),
            final_coeffs: self.final_coeffs,
            queries,
        })
    }
}

/// Verification. Replays the transcript (mixing factors, roots, final
/// coefficients), squeezes `num_queries` indices over the layer-zero
/// domain, and checks every query's fold chain. `layer_zero` supplies the
/// already-authenticated layer-zero value at a given index; it is the
/// caller's job to have verified those values against its own commitment.
/// Returns the query indices so callers can run their own per-index
/// checks against the same positions.
pub fn fri_verify<F>(
    proof: &FriProof,
    domain: &EvalDomain,
    num_layers: usize,
    num_queries: usize,
    transcript: &mut Transcript,
    layer_zero: F,
) -> Result<Vec<usize>, FriError>
where
    F: Fn(usize) -> Option<Felt>,
{
    validate_shape(domain.size(), domain, num_layers)?;
    if proof.layer_roots.len() != num_layers - 1 || proof.queries.len() != num_queries {
        return Err(FriError::ShapeMismatch);
    }
    // Replay the commit phase's transcript traffic.
    let mut betas = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        betas.push(transcript.challenge_felt("fri/beta"));
        if l + 1 < num_layers {
            transcript.absorb("fri_root", proof.layer_roots[l].as_bytes());
        }
    }
    let mut final_bytes = [0u8; 16];
    final_bytes[..8].copy_from_slice(&proof.final_coeffs[0].to_be_bytes());
    final_bytes[8..].copy_from_slice(&proof.final_coeffs[1].to_be_bytes());
    transcript.absorb("fri_final", &final_bytes);

    let indices = transcript.challenge_indices("query", num_queries, domain.size());

    // Precompute the domain of every layer.
    let mut domains = Vec::with_capacity(num_layers + 1);
    domains.push(*domain);
    for _ in 0..num_layers {
        let last = *domains.last().expect("nonempty");
        domains.push(last.squared());
    }

    for (q, (&idx, query)) in indices.iter().zip(&proof.queries).enumerate() {
        if query.layers.len() != num_layers - 1 {
            return Err(FriError::ShapeMismatch);
        }
        let m0 = domains[0].size();
        let i0 = idx % m0;
        let sym0 = (i0 + m0 / 2) % m0;
        let mut value = layer_zero(i0).ok_or(FriError::MissingLayerZero(i0))?;
        let mut sym_value = layer_zero(sym0).ok_or(FriError::MissingLayerZero(sym0))?;
        for l in 0..num_layers {
            let i = idx % domains[l].size();
            let x = domains[l].element(i);
            let folded = fold_pair(value, sym_value, x, betas[l])?;
            let next_size = domains[l + 1].size();
            let next_i = idx % next_size;
            if l + 1 < num_layers {
                let opening = &query.layers[l];
                let next_sym = (next_i + next_size / 2) % next_size;
                let root = &proof.layer_roots[l];
                if opening.path.index as usize != next_i
                    || opening.sym_path.index as usize != next_sym
                    || !byte_verify(root, &opening.value.to_be_bytes(), &opening.path)
                    || !byte_verify(root, &opening.sym_value.to_be_bytes(), &opening.sym_path)
                {
                    return Err(FriError::BadOpening { query: q, layer: l });
                }
                if folded != opening.value {
                    return Err(FriError::FoldMismatch { query: q, layer: l });
                }
                value = opening.value;
                sym_value = opening.sym_value;
            } else {
                let y = domains[l + 1].element(next_i);
                let expect = proof.final_coeffs[0] + proof.final_coeffs[1] * y;
                if folded != expect {
                    return Err(FriError::FinalMismatch { query: q });
                }
            }
        }
    }
    Ok(indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ntt;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashMap;

    /// Evaluations of a random polynomial of degree < `degree_bound` over
    /// `domain`.
    fn low_degree_evals(
        rng: &mut ChaCha20Rng,
        domain: &EvalDomain,
        degree_bound: usize,
    ) -> Vec<Felt> {
        let mut coeffs = vec![Felt::ZERO; domain.size()];
        for c in coeffs.iter_mut().take(degree_bound) {
            *c = Felt::new(rng.gen::<u64>() % crate::field::MODULUS);
        }
        ntt(&coeffs, domain).unwrap()
    }

    fn test_domain(log_size: u32) -> EvalDomain {
        EvalDomain::new(log_size, Felt::generator()).unwrap()
    }

    /// Runs commit + open against a fresh prover transcript and returns
    /// the proof with the map a caller would use for layer zero.
    fn prove(
        evals: &[Felt],
        domain: &EvalDomain,
        num_layers: usize,
        num_queries: usize,
        seed: u64,
    ) -> Result<FriProof, FriError> {
        let mut t = Transcript::new("fri-test");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let prover = fri_commit(evals, domain, num_layers, &mut t, &mut rng)?;
        let indices = t.challenge_indices("query", num_queries, domain.size());
        prover.open(&indices)
    }

    fn verify(
        proof: &FriProof,
        evals: &[Felt],
        domain: &EvalDomain,
        num_layers: usize,
        num_queries: usize,
    ) -> Result<(), FriError> {
        let map: HashMap<usize, Felt> = evals.iter().copied().enumerate().collect();
        let mut t = Transcript::new("fri-test");
        fri_verify(proof, domain, num_layers, num_queries, &mut t, |i| {
            map.get(&i).copied()
        })
        .map(|_| ())
    }

    #[test]
    fn fold_halves_degree() {
        // Folding evaluations of a degree-<8 polynomial gives a degree-<4
        // polynomial on the squared domain, for any beta.
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let domain = test_domain(6);
        let evals = low_degree_evals(&mut rng, &domain, 8);
        for beta in [Felt::ZERO, Felt::ONE, Felt::new(123456789)] {
            let folded = fold_layer(&evals, &domain, beta);
            let coeffs = intt(&folded, &domain.squared()).unwrap();
            for c in &coeffs[4..] {
                assert!(c.is_zero());
            }
        }
    }

    #[test]
    fn fold_matches_odd_even_split() {
        // f(x) = fe(x^2) + x*fo(x^2) implies the fold is fe + beta*fo.
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let domain = test_domain(5);
        let mut coeffs = vec![Felt::ZERO; domain.size()];
        for c in coeffs.iter_mut().take(10) {
            *c = Felt::new(rng.gen::<u64>() % crate::field::MODULUS);
        }
        let evals = ntt(&coeffs, &domain).unwrap();
        let beta = Felt::new(777);
        let folded = fold_layer(&evals, &domain, beta);
        let folded_coeffs = intt(&folded, &domain.squared()).unwrap();
        for i in 0..5 {
            let expect = coeffs[2 * i] + beta * coeffs[2 * i + 1];
            assert_eq!(folded_coeffs[i], expect, "coefficient {i}");
        }
    }

    #[test]
    fn fold_pair_agrees_with_fold_layer() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let domain = test_domain(4);
        let evals: Vec<Felt> = (0..16).map(|_| Felt::new(rng.gen::<u64>() % crate::field::MODULUS)).collect();
        let beta = Felt::new(31337);
        let folded = fold_layer(&evals, &domain, beta);
        for i in 0..8 {
            let pair = fold_pair(evals[i], evals[i + 8], domain.element(i), beta).unwrap();
            assert_eq!(pair, folded[i]);
        }
    }

    #[test]
    fn honest_proof_verifies() {
        // Rate 1/8: degree < 32 over 256 points, folded 4 times down to a
        // 16-point domain where at most 2 coefficients may remain.
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let domain = test_domain(8);
        let evals = low_degree_evals(&mut rng, &domain, 32);
        let proof = prove(&evals, &domain, 4, 20, 99).unwrap();
        assert_eq!(proof.layer_roots.len(), 3);
        assert_eq!(proof.queries.len(), 20);
        verify(&proof, &evals, &domain, 4, 20).unwrap();
    }

    #[test]
    fn constant_polynomial_verifies() {
        let domain = test_domain(5);
        let evals = vec![Felt::new(42); 32];
        let proof = prove(&evals, &domain, 2, 8, 1).unwrap();
        assert_eq!(proof.final_coeffs, [Felt::new(42), Felt::ZERO]);
        verify(&proof, &evals, &domain, 2, 8).unwrap();
    }

    #[test]
    fn too_high_degree_fails_commit() {
        // Degree >= 2^(log-size - layers) survives the folds and is caught
        // at the final interpolation.
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let domain = test_domain(8);
        let evals = low_degree_evals(&mut rng, &domain, 64); // too wide for 4 folds
        match prove(&evals, &domain, 4, 4, 7) {
            Err(FriError::NotLowDegree(n)) => assert!(n > 2),
            other => panic!("expected NotLowDegree, got {other:?}"),
        }
    }

    #[test]
    fn random_vector_rejected() {
        // A uniformly random vector is far from every low-degree
        // polynomial; commitment itself must fail at the final check.
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let domain = test_domain(8);
        let evals: Vec<Felt> = (0..256)
            .map(|_| Felt::new(rng.gen::<u64>() % crate::field::MODULUS))
            .collect();
        assert!(matches!(
            prove(&evals, &domain, 4, 20, 3),
            Err(FriError::NotLowDegree(_))
        ));
    }

    #[test]
    fn tampered_final_coeffs_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let domain = test_domain(8);
        let evals = low_degree_evals(&mut rng, &domain, 32);
        let mut proof = prove(&evals, &domain, 4, 10, 1).unwrap();
        proof.final_coeffs[0] += Felt::ONE;
        assert!(verify(&proof, &evals, &domain, 4, 10).is_err());
    }

    #[test]
    fn tampered_layer_value_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let domain = test_domain(8);
        let evals = low_degree_evals(&mut rng, &domain, 32);
        let mut proof = prove(&evals, &domain, 4, 10, 1).unwrap();
        proof.queries[3].layers[1].value += Felt::ONE;
        // Either the Merkle path or the fold chain notices.
        assert!(verify(&proof, &evals, &domain, 4, 10).is_err());
    }

    #[test]
    fn tampered_root_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let domain = test_domain(8);
        let evals = low_degree_evals(&mut rng, &domain, 32);
        let mut proof = prove(&evals, &domain, 4, 10, 1).unwrap();
        let mut bytes = *proof.layer_roots[0].as_bytes();
        bytes[0] ^= 1;
        proof.layer_roots[0] = Digest32(bytes);
        assert!(verify(&proof, &evals, &domain, 4, 10).is_err());
    }

    #[test]
    fn layer_zero_disagreement_rejected() {
        // The verifier folds from *its* layer-zero values; a proof made
        // from different evaluations cannot keep the chain consistent.
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let domain = test_domain(8);
        let evals = low_degree_evals(&mut rng, &domain, 32);
        let other = low_degree_evals(&mut rng, &domain, 32);
        let proof = prove(&evals, &domain, 4, 10, 1).unwrap();
        assert!(verify(&proof, &other, &domain, 4, 10).is_err());
    }

    #[test]
    fn missing_layer_zero_reported() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let domain = test_domain(8);
        let evals = low_degree_evals(&mut rng, &domain, 32);
        let proof = prove(&evals, &domain, 4, 5, 1).unwrap();
        let mut t = Transcript::new("fri-test");
        let res = fri_verify(&proof, &domain, 4, 5, &mut t, |_| None);
        assert!(matches!(res, Err(FriError::MissingLayerZero(_))));
    }

    #[test]
    fn shape_validation() {
        let domain = test_domain(4);
        let evals = vec![Felt::ZERO; 8];
        let mut t = Transcript::new("x");
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(
            fri_commit(&evals, &domain, 2, &mut t, &mut rng),
            Err(FriError::SizeMismatch(8, 16))
        ));
        let evals = vec![Felt::ZERO; 16];
        assert!(matches!(
            fri_commit(&evals, &domain, 4, &mut t, &mut rng),
            Err(FriError::TooManyLayers { .. })
        ));
        // Proof with wrong query count.
        let prover = fri_commit(&evals, &domain, 2, &mut t, &mut rng).unwrap();
        let proof = prover.open(&[0, 1]).unwrap();
        let mut t2 = Transcript::new("x");
        assert!(matches!(
            fri_verify(&proof, &domain, 2, 3, &mut t2, |_| Some(Felt::ZERO)),
            Err(FriError::ShapeMismatch)
        ));
    }

    #[test]
    fn proof_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let domain = test_domain(7);
        let evals = low_degree_evals(&mut rng, &domain, 16);
        let p1 = prove(&evals, &domain, 3, 12, 55).unwrap();
        let p2 = prove(&evals, &domain, 3, 12, 55).unwrap();
        assert_eq!(p1, p2);
        // Different salt seeds change the trees but the proof still passes.
        let p3 = prove(&evals, &domain, 3, 12, 56).unwrap();
        assert_ne!(p1, p3);
        verify(&p3, &evals, &domain, 3, 12).unwrap();
    }
}
