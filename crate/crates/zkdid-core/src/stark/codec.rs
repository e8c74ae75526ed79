//! Binary proof envelope.
//!
//! Layout is fully determined by the header, so no field carries a length
//! prefix: `"ZKDP"` magic, format version, field and hash identifiers,
//! blowup, query count and the four air parameters fix every subsequent
//! offset. Decoding is defensive — any truncation, non-canonical field
//! element or parameter inconsistency yields a [`DecodeError`] with the
//! byte offset where parsing stopped, never a panic.

use thiserror::Error;

use super::{ProofParams, QueryOpening, StarkProof, BLOWUP};
use crate::air::predicate::{AirParams, TRACE_COLUMNS};
use crate::field::Felt;
use crate::fri::{FriLayerOpening, FriProof, FriQueryProof};
use crate::hashing::Digest32;
use crate::merkle::{BytePath, SALT_LEN};

pub const MAGIC: [u8; 4] = *b"ZKDP";
pub const VERSION: u16 = 1;
/// 64-bit prime field identifier.
pub const FIELD_ID: u8 = 1;
/// SHA-256 commitment identifier.
pub const HASH_ID: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed proof at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: &'static str,
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Reader<'a> {
        Reader { bytes, offset: 0 }
    }

    fn fail<T>(&self, reason: &'static str) -> Result<T, DecodeError> {
        Err(DecodeError {
            offset: self.offset,
            reason,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.bytes.len() - self.offset < n {
            return self.fail("unexpected end of input");
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn felt(&mut self) -> Result<Felt, DecodeError> {
        let raw: [u8; 8] = self.take(8)?.try_into().unwrap();
        match Felt::from_be_bytes(raw) {
            Some(f) => Ok(f),
            None => {
                self.offset -= 8;
                self.fail("non-canonical field element")
            }
        }
    }

    fn digest(&mut self) -> Result<Digest32, DecodeError> {
        let raw: [u8; 32] = self.take(32)?.try_into().unwrap();
        Ok(Digest32(raw))
    }

    fn path(&mut self, depth: usize) -> Result<BytePath, DecodeError> {
        let len = 4 + SALT_LEN + 32 * depth;
        let start = self.offset;
        let raw = self.take(len)?;
        BytePath::from_bytes(raw, depth).map_err(|_| DecodeError {
            offset: start,
            reason: "malformed authentication path",
        })
    }
}

fn put_path(out: &mut Vec<u8>, path: &BytePath) {
    out.extend_from_slice(&path.to_bytes());
}

/// Serializes a proof with its parameters into the binary envelope.
pub fn encode_proof(params: &ProofParams, proof: &StarkProof) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.push(FIELD_ID);
    out.push(HASH_ID);
    out.push(BLOWUP as u8);
    out.extend_from_slice(&(params.num_queries as u32).to_be_bytes());
    out.extend_from_slice(&params.air.num_attributes.to_be_bytes());
    out.push(params.air.tree_depth);
    out.extend_from_slice(&params.air.mimc_rounds.to_be_bytes());
    out.push(params.air.range_bits);

    out.extend_from_slice(proof.trace_root.as_bytes());
    out.extend_from_slice(proof.composition_root.as_bytes());
    for q in &proof.queries {
        for v in &q.trace_row {
            out.extend_from_slice(&v.to_be_bytes());
        }
        put_path(&mut out, &q.trace_path);
        for v in &q.next_row {
            out.extend_from_slice(&v.to_be_bytes());
        }
        put_path(&mut out, &q.next_path);
        out.extend_from_slice(&q.comp_value.to_be_bytes());
        put_path(&mut out, &q.comp_path);
        out.extend_from_slice(&q.comp_sym_value.to_be_bytes());
        put_path(&mut out, &q.comp_sym_path);
    }
    for root in &proof.fri.layer_roots {
        out.extend_from_slice(root.as_bytes());
    }
    out.extend_from_slice(&proof.fri.final_coeffs[0].to_be_bytes());
    out.extend_from_slice(&proof.fri.final_coeffs[1].to_be_bytes());
    for q in &proof.fri.queries {
        for layer in &q.layers {
            out.extend_from_slice(&layer.value.to_be_bytes());
            out.extend_from_slice(&layer.sym_value.to_be_bytes());
            put_path(&mut out, &layer.path);
            put_path(&mut out, &layer.sym_path);
        }
    }
    out
}

/// Parses a binary proof envelope back into parameters and proof.
pub fn decode_proof(bytes: &[u8]) -> Result<(ProofParams, StarkProof), DecodeError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(DecodeError {
            offset: 0,
            reason: "bad magic",
        });
    }
    if r.u16()? != VERSION {
        return Err(DecodeError {
            offset: 4,
            reason: "unsupported version",
        });
    }
    if r.u8()? != FIELD_ID {
        return Err(DecodeError {
            offset: 6,
            reason: "unsupported field",
        });
    }
    if r.u8()? != HASH_ID {
        return Err(DecodeError {
            offset: 7,
            reason: "unsupported hash",
        });
    }
    if r.u8()? as usize != BLOWUP {
        return Err(DecodeError {
            offset: 8,
            reason: "unsupported blowup factor",
        });
    }
    let num_queries = r.u32()? as usize;
    let air = AirParams {
        num_attributes: r.u16()?,
        tree_depth: r.u8()?,
        mimc_rounds: r.u16()?,
        range_bits: r.u8()?,
    };
    let params = ProofParams { air, num_queries };
    if params.validate().is_err() {
        return r.fail("invalid parameter set");
    }

    let lde_depth = params.lde_size().trailing_zeros() as usize;
    let num_layers = params.fri_layers();

    let trace_root = r.digest()?;
    let composition_root = r.digest()?;
    let mut queries = Vec::with_capacity(num_queries);
    for _ in 0..num_queries {
        let mut trace_row = Vec::with_capacity(TRACE_COLUMNS);
        for _ in 0..TRACE_COLUMNS {
            trace_row.push(r.felt()?);
        }
        let trace_path = r.path(lde_depth)?;
        let mut next_row = Vec::with_capacity(TRACE_COLUMNS);
        for _ in 0..TRACE_COLUMNS {
            next_row.push(r.felt()?);
        }
        let next_path = r.path(lde_depth)?;
        let comp_value = r.felt()?;
        let comp_path = r.path(lde_depth)?;
        let comp_sym_value = r.felt()?;
        let comp_sym_path = r.path(lde_depth)?;
        queries.push(QueryOpening {
            trace_row,
            trace_path,
            next_row,
            next_path,
            comp_value,
            comp_path,
            comp_sym_value,
            comp_sym_path,
        });
    }

    let mut layer_roots = Vec::with_capacity(num_layers - 1);
    for _ in 0..num_layers - 1 {
        layer_roots.push(r.digest()?);
    }
    let final_coeffs = [r.felt()?, r.felt()?];
    let mut fri_queries = Vec::with_capacity(num_queries);
    for _ in 0..num_queries {
        let mut layers = Vec::with_capacity(num_layers - 1);
        for l in 0..num_layers - 1 {
            let value = r.felt()?;
            let sym_value = r.felt()?;
            // Layer l+1 of the fold chain lives on a domain of size
            // 2^(lde_depth - l - 1).
            let depth = lde_depth - l - 1;
            let path = r.path(depth)?;
            let sym_path = r.path(depth)?;
            layers.push(FriLayerOpening {
                value,
                sym_value,
                path,
                sym_path,
            });
        }
        fri_queries.push(FriQueryProof { layers });
    }
    if r.offset != bytes.len() {
        return r.fail("trailing bytes after proof");
    }
    Ok((
        params,
        StarkProof {
            trace_root,
            composition_root,
            queries,
            fri: FriProof {
                layer_roots,
                final_coeffs,
                queries: fri_queries,
            },
        },
    ))
}
