//! End-to-end acceptance suite. Each test exercises one system-level
//! guarantee — the credit-score flow, completeness, soundness under
//! mutation, exhaustive toy-scale soundness, FRI rejection behaviour,
//! field/NTT correctness against independent reference oracles, the
//! accumulator's incremental roots, the recovery state machine, the
//! proving cost envelope, and the privacy of serialized presentations —
//! and prints one summary line on success.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use zkdid_core::air::predicate::{build_trace, predicate_air, COL_STATE};
use zkdid_core::field::{intt, ntt, MODULUS};
use zkdid_core::fri::{fold_layer, fri_commit, fri_verify, FriError};
use zkdid_core::hashing::{byte_hash, commit_attributes_with, Digest32};
use zkdid_core::merkle::{alg_open_with, alg_root_with, alg_verify_with};
use zkdid_core::protocol::presentation_to_json;
use zkdid_core::stark::ProveError;
use zkdid_core::vdr::RecoveryStatus;
use zkdid_core::{
    encode_proof, prove, verify, Accumulator, AirError, AirParams, Decision, Did, EvalDomain,
    Felt, HolderWallet, IssuerContext, Keychain, MimcParams, Presentation, PredicateStatement,
    PredicateWitness, PresentationStatement, ProofParams, ProtocolError, RejectReason,
    SchemaRegistry, SystemConfig, Transcript, Vdr, VdrError, VerifierContext,
};

const SCHEMA: &str = "credit/v1";
const ATTRIBUTE: &str = "creditScore";

fn seeded(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_felt(rng: &mut ChaCha20Rng) -> Felt {
    Felt::new(rng.gen_range(0..MODULUS))
}

fn random_nonzero(rng: &mut ChaCha20Rng) -> Felt {
    loop {
        let f = random_felt(rng);
        if !f.is_zero() {
            return f;
        }
    }
}

/// A small configuration that keeps traces short while exercising the
/// full pipeline: 4-slot accumulator, standard rounds, full 32-bit
/// attribute range.
fn small_config() -> SystemConfig {
    SystemConfig {
        tree_depth: 2,
        mimc_rounds: 64,
        range_bits: 32,
        key_height: 3,
        timelock_blocks: 5,
        num_queries: 20,
    }
}

/// One issuer, one holder, one verifier, all registered on a fresh ledger
/// with the credit schema.
struct System {
    vdr: Vdr,
    schemas: SchemaRegistry,
    issuer: IssuerContext,
    holder: HolderWallet,
    verifier: VerifierContext,
}

fn system(config: &SystemConfig, tag: u8) -> System {
    let mut vdr = Vdr::with_timelock(config.timelock_blocks);
    let schemas = SchemaRegistry::new();
    let mut issuer = IssuerContext::new(config.clone(), [tag; 32]).unwrap();
    issuer.register_on(&mut vdr).unwrap();
    let mut holder = HolderWallet::new(config.clone(), [tag ^ 0xff; 32]).unwrap();
    holder.register_on(&mut vdr).unwrap();
    vdr.tick();
    let verifier = VerifierContext::new(config.clone(), schemas.clone());
    System {
        vdr,
        schemas,
        issuer,
        holder,
        verifier,
    }
}

/// Issues a single-attribute credit credential to the system's holder and
/// returns the accumulator slot it occupies.
fn issue(sys: &mut System, value: u32, rng: &mut ChaCha20Rng) -> u32 {
    let credential = sys
        .issuer
        .issue(
            &mut sys.vdr,
            &sys.schemas,
            sys.holder.did,
            SCHEMA,
            &[(ATTRIBUTE.to_string(), value)],
            rng,
        )
        .unwrap();
    let slot = credential.content.slot;
    sys.holder.add_credential(credential, &sys.vdr).unwrap();
    sys.vdr.tick();
    slot
}

/// Builds a uniformly random satisfiable instance for the given trace
/// shape: random attributes, a fresh salt, a commitment living in a
/// sparse accumulator next to a few random neighbours, and a threshold
/// drawn at or below the selected attribute.
fn random_instance(
    params: &AirParams,
    rng: &mut ChaCha20Rng,
) -> (PredicateStatement, PredicateWitness) {
    let mimc = params.mimc();
    let m = params.num_attributes as usize;
    let max = if params.range_bits >= 32 {
        u32::MAX
    } else {
        (1u32 << params.range_bits) - 1
    };
    let attributes: Vec<u32> = (0..m).map(|_| rng.gen_range(0..=max)).collect();
    let salt = random_nonzero(rng);
    let commitment = commit_attributes_with(&mimc, &attributes, salt).unwrap();

    let mut acc = Accumulator::with_params(params.tree_depth as u32, mimc);
    let capacity = acc.capacity();
    let before = rng.gen_range(0..capacity.min(4));
    for _ in 0..before {
        acc.add(random_nonzero(rng)).unwrap();
    }
    let slot = acc.add(commitment).unwrap();
    let room = capacity - u64::from(slot) - 1;
    for _ in 0..rng.gen_range(0..=room.min(2)) {
        acc.add(random_nonzero(rng)).unwrap();
    }
    let path = acc.witness(slot).unwrap();

    let attribute_index = rng.gen_range(0..m) as u16;
    let threshold = rng.gen_range(0..=attributes[attribute_index as usize]);
    (
        PredicateStatement {
            attribute_index,
            threshold,
            accumulator_root: acc.root(),
        },
        PredicateWitness {
            attributes,
            salt,
            path,
        },
    )
}

#[test]
fn end_to_end_credit_flow_with_revocation() {
    let started = Instant::now();
    let mut rng = seeded(0x01);
    let mut sys = system(&SystemConfig::standard(), 1);

    // Issue {"creditScore": 750} and prove it clears a threshold of 700.
    let slot = issue(&mut sys, 750, &mut rng);
    let request = sys
        .verifier
        .make_request(SCHEMA, ATTRIBUTE, 700, sys.issuer.did, &mut rng)
        .unwrap();
    let witness = sys.issuer.witness(slot).unwrap();
    let presentation = sys
        .holder
        .present(&request, &sys.schemas, &sys.vdr, &witness, &mut rng)
        .unwrap();
    assert_eq!(
        sys.verifier
            .verify_presentation(&sys.vdr, &request, &presentation),
        Decision::Accept
    );

    // Mint a second proof before the revocation lands.
    let stale_request = sys
        .verifier
        .make_request(SCHEMA, ATTRIBUTE, 700, sys.issuer.did, &mut rng)
        .unwrap();
    let stale_presentation = sys
        .holder
        .present(&stale_request, &sys.schemas, &sys.vdr, &witness, &mut rng)
        .unwrap();

    sys.issuer.revoke(&mut sys.vdr, slot).unwrap();
    sys.vdr.tick();

    // The pre-revocation proof now pins an outdated accumulator root,
    assert_eq!(
        sys.verifier
            .verify_presentation(&sys.vdr, &stale_request, &stale_presentation),
        Decision::Reject(RejectReason::StaleRoot)
    );
    // the holder can no longer refresh a membership witness,
    assert!(matches!(
        sys.issuer.witness(slot),
        Err(ProtocolError::Revoked)
    ));
    // and presenting with the stale witness fails outright.
    let request_after = sys
        .verifier
        .make_request(SCHEMA, ATTRIBUTE, 700, sys.issuer.did, &mut rng)
        .unwrap();
    assert!(matches!(
        sys.holder
            .present(&request_after, &sys.schemas, &sys.vdr, &witness, &mut rng),
        Err(ProtocolError::StaleWitness)
    ));

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "flow took {elapsed:?}");
    println!("acceptance: credit flow with revocation — pass ({elapsed:.2?})");
}

#[test]
fn completeness_random_valid_witnesses_all_verify() {
    let toy = AirParams {
        num_attributes: 3,
        tree_depth: 2,
        mimc_rounds: 8,
        range_bits: 4,
    };
    let shapes = [(toy, 20usize, "toy"), (AirParams::standard(), 30, "standard")];
    let mut rng = seeded(0x02);
    for (air, num_queries, label) in shapes {
        let params = ProofParams { air, num_queries };
        for i in 0..100 {
            let (statement, witness) = random_instance(&params.air, &mut rng);
            let mut nonce = [0u8; 32];
            rng.fill_bytes(&mut nonce);
            let proof = prove(&params, &statement, &witness, &nonce, &mut rng)
                .unwrap_or_else(|e| panic!("{label} witness {i} failed to prove: {e}"));
            verify(&params, &statement, &proof, &nonce)
                .unwrap_or_else(|e| panic!("{label} proof {i} failed to verify: {e}"));
        }
        println!("acceptance: completeness at {label} parameters — pass (100/100)");
    }
}

#[test]
fn soundness_bit_flips_and_nonce_substitution() {
    let mut rng = seeded(0x03);
    let mut sys = system(&small_config(), 3);
    let slot = issue(&mut sys, 750, &mut rng);
    let request = sys
        .verifier
        .make_request(SCHEMA, ATTRIBUTE, 700, sys.issuer.did, &mut rng)
        .unwrap();
    let witness = sys.issuer.witness(slot).unwrap();
    let honest = sys
        .holder
        .present(&request, &sys.schemas, &sys.vdr, &witness, &mut rng)
        .unwrap();
    assert_eq!(
        sys.verifier
            .verify_presentation(&sys.vdr, &request, &honest),
        Decision::Accept
    );

    // Every single-bit corruption of the proof bytes must be rejected.
    // Each check runs under a fresh verifier so the decision reflects the
    // proof itself rather than nonce bookkeeping.
    let mut accepted = 0u32;
    let (mut malformed, mut wrong_params, mut invalid) = (0u32, 0u32, 0u32);
    for _ in 0..1000 {
        let byte = rng.gen_range(0..honest.proof_bytes.len());
        let bit = 1u8 << rng.gen_range(0..8);
        let mut mutated = honest.proof_bytes.clone();
        mutated[byte] ^= bit;
        let candidate = Presentation {
            statement: honest.statement.clone(),
            proof_bytes: mutated,
        };
        let mut verifier = VerifierContext::new(sys.verifier.config.clone(), sys.schemas.clone());
        match verifier.verify_presentation(&sys.vdr, &request, &candidate) {
            Decision::Accept => accepted += 1,
            Decision::Reject(RejectReason::MalformedProof) => malformed += 1,
            Decision::Reject(RejectReason::WrongParameters) => wrong_params += 1,
            Decision::Reject(RejectReason::InvalidProof) => invalid += 1,
            Decision::Reject(other) => panic!("unexpected rejection class: {other}"),
        }
    }
    assert_eq!(accepted, 0, "{accepted} corrupted proofs were accepted");

    // Substituting a different session nonce into an otherwise honest
    // presentation must always be pinned as a mismatch.
    for _ in 0..100 {
        let mut forged = honest.clone();
        loop {
            rng.fill_bytes(&mut forged.statement.nonce);
            if forged.statement.nonce != request.nonce {
                break;
            }
        }
        let mut verifier = VerifierContext::new(sys.verifier.config.clone(), sys.schemas.clone());
        assert_eq!(
            verifier.verify_presentation(&sys.vdr, &request, &forged),
            Decision::Reject(RejectReason::NonceMismatch)
        );
    }
    println!(
        "acceptance: soundness under mutation — pass \
         (0/1000 flips accepted: {malformed} malformed, {wrong_params} wrong-params, \
         {invalid} invalid; 100/100 nonce substitutions mismatched)"
    );
}

#[test]
fn toy_scale_exhaustive_soundness() {
    // 4-bit attributes, depth-2 tree, 8-round permutation: small enough to
    // sweep every (value, threshold) pair and brute-force the difference
    // register the constraints rely on.
    let params = AirParams {
        num_attributes: 1,
        tree_depth: 2,
        mimc_rounds: 8,
        range_bits: 4,
    };
    let proof_params = ProofParams {
        air: params,
        num_queries: 8,
    };
    let mimc = params.mimc();
    let mut rng = seeded(0x04);
    let salt = Felt::new(0x5a17);
    let neighbours = [Felt::new(11), Felt::new(22), Felt::new(33)];

    let mut satisfiable = 0u32;
    let mut unsatisfiable = 0u32;
    for value in 0..16u32 {
        let commitment = commit_attributes_with(&mimc, &[value], salt).unwrap();
        let leaves = vec![commitment, neighbours[0], neighbours[1], neighbours[2]];
        let root = alg_root_with(&mimc, &leaves, 2).unwrap();
        let path = alg_open_with(&mimc, &leaves, 2, 0).unwrap();
        for threshold in 0..16u32 {
            let statement = PredicateStatement {
                attribute_index: 0,
                threshold,
                accumulator_root: root,
            };
            let witness = PredicateWitness {
                attributes: vec![value],
                salt,
                path: path.clone(),
            };

            // Independent enumeration: the range lane forces a 4-bit
            // register d with d == value - threshold in the field, so a
            // satisfying trace exists iff one of the 16 register values
            // closes that equation. Below the threshold the difference
            // wraps to an enormous field element and no value can.
            let enumerated = (0..16u64)
                .any(|d| Felt::new(u64::from(value)) - Felt::new(u64::from(threshold)) == Felt::new(d));
            assert_eq!(
                enumerated,
                value >= threshold,
                "register enumeration disagrees at ({value},{threshold})"
            );

            let air = predicate_air(&params, &statement).unwrap();
            match build_trace(&params, &statement, &witness, &mut rng) {
                Ok(trace) => {
                    assert!(
                        value >= threshold,
                        "builder produced a trace for unsatisfiable ({value},{threshold})"
                    );
                    air.check_trace(&trace).unwrap();
                    satisfiable += 1;

                    // The full pipeline agrees with the trace-level check.
                    let proof =
                        prove(&proof_params, &statement, &witness, b"toy", &mut rng).unwrap();
                    verify(&proof_params, &statement, &proof, b"toy").unwrap();

                    // A corrupted register cell must not slip through.
                    let mut tampered = trace;
                    let bumped = tampered.cell(COL_STATE, 1) + Felt::ONE;
                    tampered.set(COL_STATE, 1, bumped);
                    assert!(air.check_trace(&tampered).is_err());
                }
                Err(AirError::PredicateUnsatisfied) => {
                    assert!(
                        value < threshold,
                        "builder refused satisfiable ({value},{threshold})"
                    );
                    unsatisfiable += 1;
                    // The prover refuses outright as well.
                    assert!(matches!(
                        prove(&proof_params, &statement, &witness, b"toy", &mut rng),
                        Err(ProveError::Air(AirError::PredicateUnsatisfied))
                    ));
                }
                Err(other) => panic!("unexpected builder error at ({value},{threshold}): {other}"),
            }
        }
    }
    assert_eq!(satisfiable, 136);
    assert_eq!(unsatisfiable, 120);
    println!(
        "acceptance: exhaustive toy soundness — pass \
         (256 pairs: {satisfiable} satisfiable, {unsatisfiable} refused)"
    );
}

#[test]
fn fri_rejects_random_vectors_and_folds_preserve_structure() {
    let mut rng = seeded(0x05);

    // 100 random vectors on a 256-point coset, degree bound 32 (rate 1/8),
    // folded four times so the remainder must be linear on 16 points.
    // A uniformly random vector survives only if fourteen interpolated
    // coefficients vanish by chance.
    let domain = EvalDomain::new(8, Felt::generator()).unwrap();
    let num_layers = 4;
    let num_queries = 30;
    let mut rejected = 0u32;
    for trial in 0..100 {
        let evals: Vec<Felt> = (0..domain.size()).map(|_| random_felt(&mut rng)).collect();
        let mut transcript = Transcript::new("acceptance/fri");
        match fri_commit(&evals, &domain, num_layers, &mut transcript, &mut rng) {
            Err(FriError::NotLowDegree(_)) => rejected += 1,
            Err(other) => panic!("trial {trial}: unexpected commit error {other}"),
            Ok(prover) => {
                // Vanishingly unlikely; count it as accepted only if the
                // query phase also passes.
                let indices = transcript.challenge_indices("query", num_queries, domain.size());
                let proof = prover.open(&indices).unwrap();
                let mut replay = Transcript::new("acceptance/fri");
                if fri_verify(&proof, &domain, num_layers, num_queries, &mut replay, |i| {
                    evals.get(i).copied()
                })
                .is_err()
                {
                    rejected += 1;
                }
            }
        }
    }
    assert!(rejected >= 99, "only {rejected}/100 random vectors rejected");

    // An honest polynomial at the degree bound passes the same pipeline…
    let mut coeffs: Vec<Felt> = (0..32).map(|_| random_felt(&mut rng)).collect();
    coeffs[31] = random_nonzero(&mut rng);
    let mut padded = coeffs.clone();
    padded.resize(domain.size(), Felt::ZERO);
    let evals = ntt(&padded, &domain).unwrap();
    let mut transcript = Transcript::new("acceptance/fri");
    let prover = fri_commit(&evals, &domain, num_layers, &mut transcript, &mut rng).unwrap();
    let indices = transcript.challenge_indices("query", num_queries, domain.size());
    let proof = prover.open(&indices).unwrap();
    let mut replay = Transcript::new("acceptance/fri");
    fri_verify(&proof, &domain, num_layers, num_queries, &mut replay, |i| {
        evals.get(i).copied()
    })
    .unwrap();

    // …but not with corrupted final coefficients or a tampered opening.
    let mut bad = proof.clone();
    bad.final_coeffs[0] = bad.final_coeffs[0] + Felt::ONE;
    let mut replay = Transcript::new("acceptance/fri");
    assert!(fri_verify(&bad, &domain, num_layers, num_queries, &mut replay, |i| {
        evals.get(i).copied()
    })
    .is_err());
    let mut bad = proof.clone();
    bad.queries[0].layers[0].value = bad.queries[0].layers[0].value + Felt::ONE;
    let mut replay = Transcript::new("acceptance/fri");
    assert!(fri_verify(&bad, &domain, num_layers, num_queries, &mut replay, |i| {
        evals.get(i).copied()
    })
    .is_err());

    // One fold maps coefficients c to c[2i] + beta * c[2i+1], halving the
    // degree bound. Verified by interpolation on every size up to 64.
    for log in 1..=6u32 {
        let n = 1usize << log;
        let dom = EvalDomain::new(log, Felt::generator()).unwrap();
        let coeffs: Vec<Felt> = (0..n).map(|_| random_felt(&mut rng)).collect();
        let evals = ntt(&coeffs, &dom).unwrap();
        let beta = random_felt(&mut rng);
        let folded = fold_layer(&evals, &dom, beta);
        let back = intt(&folded, &dom.squared()).unwrap();
        let expected: Vec<Felt> = (0..n / 2)
            .map(|i| coeffs[2 * i] + beta * coeffs[2 * i + 1])
            .collect();
        assert_eq!(back, expected, "fold mismatch at size {n}");
    }
    println!(
        "acceptance: fri rejection and fold structure — pass \
         ({rejected}/100 random vectors rejected)"
    );
}

#[test]
fn field_and_ntt_match_reference_oracles() {
    const P: u128 = MODULUS as u128;
    fn modpow(mut base: u128, mut exp: u64) -> u128 {
        let mut acc = 1u128;
        base %= P;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % P;
            }
            base = base * base % P;
            exp >>= 1;
        }
        acc
    }

    let mut rng = seeded(0x06);

    // 10^4 random operations against wide-integer arithmetic.
    for _ in 0..10_000 {
        let a = rng.gen_range(0..MODULUS);
        let b = rng.gen_range(0..MODULUS);
        let (fa, fb) = (Felt::new(a), Felt::new(b));
        assert_eq!(u128::from((fa + fb).as_u64()), (u128::from(a) + u128::from(b)) % P);
        assert_eq!(
            u128::from((fa - fb).as_u64()),
            (u128::from(a) + P - u128::from(b)) % P
        );
        assert_eq!(u128::from((fa * fb).as_u64()), u128::from(a) * u128::from(b) % P);
        assert_eq!(u128::from((-fa).as_u64()), (P - u128::from(a)) % P);
    }

    // Exponentiation and inversion.
    for _ in 0..100 {
        let a = rng.gen_range(1..MODULUS);
        let e = rng.next_u64();
        assert_eq!(u128::from(Felt::new(a).pow(e).as_u64()), modpow(u128::from(a), e));
        let inv = Felt::new(a).pow(MODULUS - 2);
        assert_eq!(Felt::new(a) * inv, Felt::ONE);
        assert_eq!(u128::from(inv.as_u64()), modpow(u128::from(a), MODULUS - 2));
    }

    // intt ∘ ntt is the identity, on the plain domain and on cosets.
    for log in [0u32, 1, 3, 5, 8, 10] {
        for offset in [Felt::ONE, Felt::generator(), random_nonzero(&mut rng)] {
            let dom = EvalDomain::new(log, offset).unwrap();
            let coeffs: Vec<Felt> = (0..1usize << log).map(|_| random_felt(&mut rng)).collect();
            let evals = ntt(&coeffs, &dom).unwrap();
            assert_eq!(intt(&evals, &dom).unwrap(), coeffs, "log {log} round trip");
        }
    }

    // The size-8 transform matches a naive reference evaluation computed
    // entirely in wide-integer arithmetic.
    for offset in [Felt::ONE, Felt::generator()] {
        let dom = EvalDomain::new(3, offset).unwrap();
        let coeffs: Vec<Felt> = (0..8).map(|_| random_felt(&mut rng)).collect();
        let evals = ntt(&coeffs, &dom).unwrap();
        for i in 0..8 {
            let x = u128::from(dom.element(i).as_u64());
            let mut acc = 0u128;
            let mut xp = 1u128;
            for c in &coeffs {
                acc = (acc + u128::from(c.as_u64()) * xp) % P;
                xp = xp * x % P;
            }
            assert_eq!(u128::from(evals[i].as_u64()), acc, "point {i}");
        }
    }
    println!("acceptance: field and ntt oracles — pass (10000 ops, round trips, size-8 dft)");
}

#[test]
fn accumulator_incremental_roots_match_dense_rebuilds() {
    let depth = 10u32;
    let mimc = MimcParams::standard().clone();
    let mut acc = Accumulator::with_params(depth, mimc.clone());
    let mut rng = seeded(0x07);
    let mut dense = vec![Felt::ZERO; 1 << depth];
    let mut live: BTreeMap<u32, Felt> = BTreeMap::new();
    let mut roots = vec![acc.root()];
    assert_eq!(acc.root(), alg_root_with(&mimc, &dense, depth).unwrap());

    for step in 0..1000u64 {
        let can_add = u64::from(acc.next_slot()) < acc.capacity();
        if live.is_empty() || (can_add && rng.gen_bool(0.65)) {
            // Zero is the vacant-leaf marker, so live commitments are
            // sampled nonzero to keep the model unambiguous.
            let commitment = random_nonzero(&mut rng);
            let slot = acc.add(commitment).unwrap();
            dense[slot as usize] = commitment;
            live.insert(slot, commitment);
        } else {
            let slots: Vec<u32> = live.keys().copied().collect();
            let slot = slots[rng.gen_range(0..slots.len())];
            acc.revoke(slot).unwrap();
            dense[slot as usize] = Felt::ZERO;
            live.remove(&slot);
        }
        assert_eq!(acc.epoch(), step + 1);
        let rebuilt = alg_root_with(&mimc, &dense, depth).unwrap();
        assert_eq!(acc.root(), rebuilt, "root diverged at epoch {}", step + 1);
        roots.push(rebuilt);

        // Witness spot checks against the ground-truth occupancy map.
        for _ in 0..3 {
            if acc.next_slot() == 0 {
                break;
            }
            let slot = rng.gen_range(0..acc.next_slot());
            match live.get(&slot) {
                Some(&commitment) => {
                    let path = acc.witness(slot).unwrap();
                    assert!(alg_verify_with(&mimc, acc.root(), commitment, &path));
                    assert!(!alg_verify_with(&mimc, acc.root(), commitment + Felt::ONE, &path));
                }
                None => assert!(acc.witness(slot).is_err()),
            }
        }
    }

    // The recorded history matches the per-epoch rebuilds.
    assert_eq!(acc.root_history(), &roots[..]);
    for _ in 0..50 {
        let epoch = rng.gen_range(0..roots.len() as u64);
        assert_eq!(acc.root_at(epoch).unwrap(), roots[epoch as usize]);
    }

    // Final sweep over every allocated slot.
    for slot in 0..acc.next_slot() {
        assert_eq!(acc.is_occupied(slot), live.contains_key(&slot));
        assert_eq!(acc.is_revoked(slot), !live.contains_key(&slot));
        match live.get(&slot) {
            Some(&commitment) => {
                assert_eq!(acc.commitment(slot).unwrap(), commitment);
                let path = acc.witness(slot).unwrap();
                assert!(alg_verify_with(&mimc, acc.root(), commitment, &path));
            }
            None => {
                assert!(acc.witness(slot).is_err());
                assert!(acc.commitment(slot).is_err());
            }
        }
    }
    assert_eq!(acc.live_count(), live.len());
    println!(
        "acceptance: accumulator history oracle — pass (1000 epochs, {} live at end)",
        live.len()
    );
}

fn fuzz_wallet(config: &SystemConfig, tag: u64) -> HolderWallet {
    let mut seed = [0xa5u8; 32];
    seed[..8].copy_from_slice(&tag.to_be_bytes());
    HolderWallet::new(config.clone(), seed).unwrap()
}

#[test]
fn recovery_reaches_timelock_at_third_approval_and_respects_boundaries() {
    let config = SystemConfig {
        tree_depth: 2,
        mimc_rounds: 64,
        range_bits: 32,
        key_height: 5,
        timelock_blocks: 10,
        num_queries: 20,
    };
    let mut vdr = Vdr::with_timelock(config.timelock_blocks);
    let mut carol = fuzz_wallet(&config, 1);
    let mut guardians: Vec<HolderWallet> = (0..5).map(|i| fuzz_wallet(&config, 10 + i)).collect();
    carol.register_on(&mut vdr).unwrap();
    for g in &mut guardians {
        g.register_on(&mut vdr).unwrap();
    }
    let guardian_dids: Vec<Did> = guardians.iter().map(|g| g.did).collect();
    carol
        .configure_guardians(&mut vdr, guardian_dids, 3)
        .unwrap();
    vdr.tick();

    let original_root = vdr.document(&carol.did).unwrap().key_root;
    let replacement = Keychain::generate([0xed; 32], config.key_height).unwrap();
    let new_root = replacement.root();

    // Threshold 3 of 5: the state flips to TimeLocked exactly on the
    // third approval (the initiation counts as the first).
    guardians[0]
        .initiate_recovery(&mut vdr, carol.did, new_root)
        .unwrap();
    assert!(matches!(
        vdr.record(&carol.did).unwrap().recovery,
        RecoveryStatus::Pending { .. }
    ));
    guardians[1]
        .approve_recovery(&mut vdr, carol.did, new_root)
        .unwrap();
    assert!(matches!(
        vdr.record(&carol.did).unwrap().recovery,
        RecoveryStatus::Pending { .. }
    ));
    let lock_height = vdr.height();
    guardians[2]
        .approve_recovery(&mut vdr, carol.did, new_root)
        .unwrap();
    match &vdr.record(&carol.did).unwrap().recovery {
        RecoveryStatus::TimeLocked {
            new_key_root,
            approvals,
            locked_at,
        } => {
            assert_eq!(*new_key_root, new_root);
            assert_eq!(approvals.len(), 3);
            assert_eq!(*locked_at, lock_height);
        }
        other => panic!("expected a time-locked recovery, got {other:?}"),
    }

    // One block short of the window the rotation is refused…
    while vdr.height() < lock_height + config.timelock_blocks - 1 {
        vdr.tick();
    }
    let err = guardians[3]
        .finalize_recovery(&mut vdr, carol.did)
        .unwrap_err();
    assert!(matches!(
        err,
        ProtocolError::Vdr(VdrError::TimelockNotElapsed { .. })
    ));
    assert_eq!(vdr.document(&carol.did).unwrap().key_root, original_root);

    // …and lands exactly at the boundary.
    vdr.tick();
    guardians[3].finalize_recovery(&mut vdr, carol.did).unwrap();
    assert_eq!(vdr.document(&carol.did).unwrap().key_root, new_root);
    assert_eq!(
        vdr.record(&carol.did).unwrap().recovery,
        RecoveryStatus::None
    );
    carol.adopt_keys(replacement);

    // The controller's veto always wins when ordered before the finalize,
    // even with the window fully elapsed.
    let hostile = Keychain::generate([0xba; 32], config.key_height).unwrap();
    guardians[4]
        .initiate_recovery(&mut vdr, carol.did, hostile.root())
        .unwrap();
    guardians[0]
        .approve_recovery(&mut vdr, carol.did, hostile.root())
        .unwrap();
    guardians[1]
        .approve_recovery(&mut vdr, carol.did, hostile.root())
        .unwrap();
    for _ in 0..config.timelock_blocks + 5 {
        vdr.tick();
    }
    carol.cancel_recovery(&mut vdr).unwrap();
    let err = guardians[2]
        .finalize_recovery(&mut vdr, carol.did)
        .unwrap_err();
    assert!(matches!(
        err,
        ProtocolError::Vdr(VdrError::NoPendingRecovery)
    ));
    assert_eq!(vdr.document(&carol.did).unwrap().key_root, new_root);
    println!("acceptance: recovery timelock boundaries — pass");
}

/// Mirror of the ledger's recovery state, advanced alongside the real
/// thing by the interleaving fuzz below.
#[derive(Clone, Debug, PartialEq)]
enum Model {
    Idle,
    Pending {
        root: Digest32,
        approvals: BTreeSet<Did>,
    },
    Locked {
        root: Digest32,
        approvals: BTreeSet<Did>,
        locked_at: u64,
    },
}

fn vdr_kind(e: &VdrError) -> &'static str {
    match e {
        VdrError::NotGuardian => "not-guardian",
        VdrError::NoPendingRecovery => "no-pending-recovery",
        VdrError::DuplicateApproval => "duplicate-approval",
        VdrError::InvalidTransition(_) => "invalid-transition",
        VdrError::TimelockNotElapsed { .. } => "timelock-not-elapsed",
        VdrError::Unauthorized(_) => "unauthorized",
        VdrError::UnknownDid(_) => "unknown-did",
        VdrError::BadSignature => "bad-signature",
        VdrError::KeyReuse { .. } => "key-reuse",
        VdrError::BadAnchor { .. } => "bad-anchor",
        _ => "other",
    }
}

fn outcome(res: Result<(), ProtocolError>) -> Result<(), &'static str> {
    match res {
        Ok(()) => Ok(()),
        Err(ProtocolError::Vdr(e)) => Err(vdr_kind(&e)),
        Err(other) => panic!("unexpected protocol error: {other}"),
    }
}

#[test]
fn recovery_interleavings_never_rotate_without_authority() {
    let config = SystemConfig {
        tree_depth: 2,
        mimc_rounds: 64,
        range_bits: 32,
        key_height: 6,
        timelock_blocks: 3,
        num_queries: 20,
    };
    let threshold = 3usize;
    let mut total_rotations = 0u32;
    let mut total_cancels = 0u32;

    for run in 0..6u64 {
        let mut rng = seeded(0x80 + run);
        let mut vdr = Vdr::with_timelock(config.timelock_blocks);
        // Actors 0..=4 are guardians, 5 is a registered outsider, 6 is the
        // subject herself.
        let mut actors: Vec<HolderWallet> = (0..7)
            .map(|i| fuzz_wallet(&config, 1000 * (run + 1) + i))
            .collect();
        let carol_did = actors[6].did;
        let guardian_dids: Vec<Did> = actors[..5].iter().map(|g| g.did).collect();
        for actor in &mut actors {
            actor.register_on(&mut vdr).unwrap();
        }
        actors[6]
            .configure_guardians(&mut vdr, guardian_dids.clone(), threshold as u32)
            .unwrap();
        vdr.tick();

        let mut model = Model::Idle;
        let mut model_root = vdr.document(&carol_did).unwrap().key_root;
        let mut staged: Vec<(Digest32, Keychain)> = Vec::new();
        let spare_root = byte_hash(b"not-a-real-keychain");

        for step in 0..120 {
            let weight = rng.gen_range(0..100u32);
            let actor = rng.gen_range(0..actors.len());
            let actor_did = actors[actor].did;
            let is_guardian = guardian_dids.contains(&actor_did);
            let height = vdr.height();
            let before_root = vdr.document(&carol_did).unwrap().key_root;

            // Predict the ledger's answer from the model, then apply the
            // same action for real and compare.
            let (predicted, applied): (Result<(), &'static str>, Result<(), &'static str>) =
                match weight {
                    // Advance logical time.
                    0..=24 => {
                        vdr.tick();
                        (Ok(()), Ok(()))
                    }
                    // Open a recovery with a fresh replacement root.
                    25..=39 => {
                        let predicted = if !is_guardian {
                            Err("not-guardian")
                        } else if model != Model::Idle {
                            Err("invalid-transition")
                        } else {
                            Ok(())
                        };
                        let root = if predicted.is_ok() {
                            let mut seed = [0u8; 32];
                            rng.fill_bytes(&mut seed);
                            let chain = Keychain::generate(seed, config.key_height).unwrap();
                            let root = chain.root();
                            staged.push((root, chain));
                            root
                        } else {
                            spare_root
                        };
                        if predicted.is_ok() {
                            let mut approvals = BTreeSet::new();
                            approvals.insert(actor_did);
                            model = Model::Pending { root, approvals };
                        }
                        let applied =
                            outcome(actors[actor].initiate_recovery(&mut vdr, carol_did, root));
                        (predicted, applied)
                    }
                    // Approve with the pinned root.
                    40..=64 => {
                        let (predicted, root) = if !is_guardian {
                            (Err("not-guardian"), spare_root)
                        } else {
                            match &model {
                                Model::Idle => (Err("no-pending-recovery"), spare_root),
                                Model::Locked { root, .. } => (Err("invalid-transition"), *root),
                                Model::Pending { root, approvals } => {
                                    if approvals.contains(&actor_did) {
                                        (Err("duplicate-approval"), *root)
                                    } else {
                                        (Ok(()), *root)
                                    }
                                }
                            }
                        };
                        if predicted.is_ok() {
                            if let Model::Pending { root, approvals } = &mut model {
                                approvals.insert(actor_did);
                                if approvals.len() >= threshold {
                                    model = Model::Locked {
                                        root: *root,
                                        approvals: std::mem::take(approvals),
                                        locked_at: height,
                                    };
                                }
                            }
                        }
                        let applied =
                            outcome(actors[actor].approve_recovery(&mut vdr, carol_did, root));
                        (predicted, applied)
                    }
                    // Approve naming the wrong root.
                    65..=69 => {
                        let predicted = if !is_guardian {
                            Err("not-guardian")
                        } else {
                            match &model {
                                Model::Idle => Err("no-pending-recovery"),
                                _ => Err("invalid-transition"),
                            }
                        };
                        let applied = outcome(actors[actor].approve_recovery(
                            &mut vdr,
                            carol_did,
                            spare_root,
                        ));
                        (predicted, applied)
                    }
                    // Controller veto (or an outsider trying it).
                    70..=79 => {
                        let predicted = if actor_did != carol_did {
                            Err("unauthorized")
                        } else if model == Model::Idle {
                            Err("no-pending-recovery")
                        } else {
                            Ok(())
                        };
                        if predicted.is_ok() {
                            model = Model::Idle;
                            total_cancels += 1;
                        }
                        // Only the subject signs a cancel for herself; other
                        // actors attempt (and fail) the same payload.
                        let applied = if actor == 6 {
                            outcome(actors[6].cancel_recovery(&mut vdr))
                        } else {
                            let payload = zkdid_core::TxPayload::CancelRecovery {
                                subject: carol_did,
                            };
                            let mut keys = actors[actor].keychain().clone();
                            let tx = zkdid_core::Transaction::sign(
                                actor_did,
                                vdr.height(),
                                payload,
                                &mut keys,
                            )
                            .expect("signing a cancel attempt");
                            actors[actor].adopt_keys(keys);
                            vdr.submit(tx).map_err(|e| vdr_kind(&e))
                        };
                        (predicted, applied)
                    }
                    // Finalize, by anyone registered.
                    _ => {
                        let predicted = match &model {
                            Model::Idle => Err("no-pending-recovery"),
                            Model::Pending { .. } => Err("invalid-transition"),
                            Model::Locked { locked_at, .. } => {
                                if height < locked_at + config.timelock_blocks {
                                    Err("timelock-not-elapsed")
                                } else {
                                    Ok(())
                                }
                            }
                        };
                        let applied =
                            outcome(actors[actor].finalize_recovery(&mut vdr, carol_did));
                        // The subject only swaps to the replacement chain
                        // once the rotation has actually landed.
                        if predicted.is_ok() {
                            if let Model::Locked { root, .. } = &model {
                                model_root = *root;
                                total_rotations += 1;
                                let chain = staged
                                    .iter()
                                    .find(|(r, _)| r == root)
                                    .map(|(_, c)| c.clone())
                                    .expect("staged chain for pinned root");
                                actors[6].adopt_keys(chain);
                            }
                            model = Model::Idle;
                        }
                        (predicted, applied)
                    }
                };

            assert_eq!(
                applied, predicted,
                "run {run} step {step} (weight {weight}, actor {actor}): ledger and model disagree"
            );

            // The ledger's record must mirror the model exactly.
            let record = vdr.record(&carol_did).unwrap();
            let expected = match &model {
                Model::Idle => RecoveryStatus::None,
                Model::Pending { root, approvals } => RecoveryStatus::Pending {
                    new_key_root: *root,
                    approvals: approvals.clone(),
                },
                Model::Locked {
                    root,
                    approvals,
                    locked_at,
                } => RecoveryStatus::TimeLocked {
                    new_key_root: *root,
                    approvals: approvals.clone(),
                    locked_at: *locked_at,
                },
            };
            assert_eq!(record.recovery, expected, "run {run} step {step}");
            let after_root = vdr.document(&carol_did).unwrap().key_root;
            assert_eq!(after_root, model_root, "run {run} step {step}");

            // The active root may only move on a modeled, authorized
            // finalize.
            if after_root != before_root {
                assert!(
                    weight >= 80 && predicted.is_ok(),
                    "run {run} step {step}: unauthorized rotation"
                );
            }
        }
    }
    assert!(total_rotations > 0, "fuzz never exercised a full rotation");
    assert!(total_cancels > 0, "fuzz never exercised a controller veto");
    println!(
        "acceptance: recovery interleavings — pass \
         (6 runs x 120 steps, {total_rotations} rotations, {total_cancels} vetoes)"
    );
}

#[test]
fn proving_costs_stay_inside_the_envelope() {
    let params = ProofParams::standard();
    let mut rng = seeded(0x09);
    let (statement, witness) = random_instance(&params.air, &mut rng);
    let nonce = *b"performance-envelope-nonce------";

    let started = Instant::now();
    let proof_a = prove(&params, &statement, &witness, &nonce, &mut seeded(0x91)).unwrap();
    let prove_a = started.elapsed();
    let started = Instant::now();
    let proof_b = prove(&params, &statement, &witness, &nonce, &mut seeded(0x91)).unwrap();
    let prove_b = started.elapsed();

    // Same seed, same bytes: proof size cannot wobble between runs.
    let bytes_a = encode_proof(&params, &proof_a);
    let bytes_b = encode_proof(&params, &proof_b);
    assert_eq!(bytes_a, bytes_b, "same-seed proofs must be byte-identical");

    let mut verify_times = Vec::new();
    for _ in 0..5 {
        let started = Instant::now();
        verify(&params, &statement, &proof_a, &nonce).unwrap();
        verify_times.push(started.elapsed());
    }
    verify_times.sort();
    let verify_time = verify_times[2];
    let prove_time = prove_a.min(prove_b);

    assert!(prove_a < Duration::from_secs(30), "prove took {prove_a:?}");
    assert!(prove_b < Duration::from_secs(30), "prove took {prove_b:?}");
    assert!(
        verify_time < Duration::from_millis(250),
        "verify took {verify_time:?}"
    );
    let ratio = verify_time.as_secs_f64() / prove_time.as_secs_f64();
    assert!(
        ratio < 0.05,
        "verify/prove ratio {:.2}% breaches the envelope",
        ratio * 100.0
    );
    println!(
        "acceptance: performance envelope — pass (prove {prove_time:.2?}, verify {verify_time:.2?}, \
         ratio {:.2}%, proof {} bytes)",
        ratio * 100.0,
        bytes_a.len()
    );
}

#[test]
fn presentations_carry_no_private_bytes() {
    let config = small_config();
    let params = config.proof_params(1);
    let mimc = config.mimc();
    let mut rng = seeded(0x0a);

    // Fixed public context shared by the randomized scenarios.
    let issuer_did = Keychain::generate([0x11; 32], 3).unwrap().did();
    let holder_did = Keychain::generate([0x22; 32], 3).unwrap().did();
    let holder_id_hex = holder_did
        .to_string()
        .strip_prefix("did:zkd:")
        .unwrap()
        .to_string();

    for scenario in 0..1000u64 {
        // Attribute values start at 2^24 so their byte patterns cannot
        // collide with small counters in the serialized proof.
        let value = rng.gen_range(1u32 << 24..=u32::MAX);
        let threshold = rng.gen_range(1u32 << 16..=value);
        let salt = random_nonzero(&mut rng);
        let commitment = commit_attributes_with(&mimc, &[value], salt).unwrap();
        let mut acc = Accumulator::with_params(config.tree_depth as u32, mimc.clone());
        for _ in 0..rng.gen_range(0..3) {
            acc.add(random_nonzero(&mut rng)).unwrap();
        }
        let slot = acc.add(commitment).unwrap();
        let path = acc.witness(slot).unwrap();
        let root = acc.root();

        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        let statement = PresentationStatement {
            schema: SCHEMA.to_string(),
            issuer: issuer_did,
            attribute: ATTRIBUTE.to_string(),
            threshold,
            epoch: acc.epoch(),
            root,
            nonce,
        };
        let air_statement = PredicateStatement {
            attribute_index: 0,
            threshold,
            accumulator_root: root,
        };
        let air_witness = PredicateWitness {
            attributes: vec![value],
            salt,
            path,
        };
        let proof = prove(
            &params,
            &air_statement,
            &air_witness,
            &statement.to_bytes(),
            &mut rng,
        )
        .unwrap();
        let presentation = Presentation {
            statement,
            proof_bytes: encode_proof(&params, &proof),
        };
        let json = presentation_to_json(&presentation);

        let value_hex = hex::encode(Felt::from(value).to_be_bytes());
        let salt_hex = hex::encode(salt.to_be_bytes());
        assert!(
            !json.contains(&value_hex),
            "attribute bytes leaked in scenario {scenario}"
        );
        assert!(
            !json.contains(&salt_hex),
            "salt bytes leaked in scenario {scenario}"
        );
        assert!(
            !json.contains(&holder_id_hex),
            "holder identifier leaked in scenario {scenario}"
        );

        // Structurally: exactly the public statement plus the proof blob,
        // no credential fields, no slot, no holder.
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let top: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(top, ["proof", "statement", "v"]);
        let stmt: Vec<&str> = v["statement"]
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        assert_eq!(
            stmt,
            ["attribute", "epoch", "issuer", "nonce", "root", "schema", "threshold"]
        );
    }

    // The same witness under two different random streams yields distinct
    // bytes, and both satisfy an actual verifier.
    let mut sys = system(&config, 10);
    let slot = issue(&mut sys, 750, &mut rng);
    let request = sys
        .verifier
        .make_request(SCHEMA, ATTRIBUTE, 700, sys.issuer.did, &mut rng)
        .unwrap();
    let witness = sys.issuer.witness(slot).unwrap();
    let first = sys
        .holder
        .present(&request, &sys.schemas, &sys.vdr, &witness, &mut seeded(0xaa))
        .unwrap();
    let second = sys
        .holder
        .present(&request, &sys.schemas, &sys.vdr, &witness, &mut seeded(0xbb))
        .unwrap();
    assert_ne!(first.proof_bytes, second.proof_bytes);
    let mut v1 = VerifierContext::new(config.clone(), sys.schemas.clone());
    let mut v2 = VerifierContext::new(config.clone(), sys.schemas.clone());
    assert_eq!(
        v1.verify_presentation(&sys.vdr, &request, &first),
        Decision::Accept
    );
    assert_eq!(
        v2.verify_presentation(&sys.vdr, &request, &second),
        Decision::Accept
    );
    let credential = &sys.holder.credentials()[0];
    let value_hex = hex::encode(Felt::from(750u32).to_be_bytes());
    let salt_hex = hex::encode(credential.content.salt.to_be_bytes());
    let holder_hex = sys
        .holder
        .did
        .to_string()
        .strip_prefix("did:zkd:")
        .unwrap()
        .to_string();
    for presentation in [&first, &second] {
        let json = presentation_to_json(presentation);
        assert!(!json.contains(&value_hex));
        assert!(!json.contains(&salt_hex));
        assert!(!json.contains(&holder_hex));
    }
    println!(
        "acceptance: privacy scan — pass (1000 scenarios clean, same-witness proofs distinct)"
    );
}
