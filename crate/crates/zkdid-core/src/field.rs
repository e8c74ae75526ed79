//! Arithmetic in the Goldilocks prime field `p = 2^64 - 2^32 + 1` and
//! power-of-two evaluation domains with NTT/INTT over optional cosets.
//!
//! `p - 1 = 2^32 * 3 * 5 * 17 * 257 * 65537`, so the field supports radix-2
//! domains up to size `2^32`. The multiplicative group is generated by 7,
//! and since `gcd(7, p - 1) = 1` the map `x -> x^7` is a permutation, which
//! is what the algebraic hash in [`crate::hashing`] relies on.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

/// The field modulus `p = 2^64 - 2^32 + 1`.
pub const MODULUS: u64 = 0xffff_ffff_0000_0001;

/// Fixed generator of the multiplicative group `F_p^*`.
pub const GENERATOR: u64 = 7;

/// Largest `k` such that `2^k` divides `p - 1`.
pub const TWO_ADICITY: u32 = 32;

/// Errors produced by field and domain operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    /// Zero has no multiplicative inverse.
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    /// No multiplicative subgroup of order `2^k` exists for `k > 32`.
    #[error("no root of unity of order 2^{0} (two-adicity is {TWO_ADICITY})")]
    UnsupportedOrder(u32),
    /// An input vector does not match the domain it is paired with.
    #[error("input length {len} does not match domain size {expected}")]
    SizeMismatch { len: usize, expected: usize },
    /// A domain was constructed with a zero coset offset.
    #[error("coset offset must be nonzero")]
    ZeroOffset,
}

/// An element of the Goldilocks field, always stored in canonical form
/// (`0 <= value < p`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Felt(u64);

impl Felt {
    pub const ZERO: Felt = Felt(0);
    pub const ONE: Felt = Felt(1);
    pub const TWO: Felt = Felt(2);

    /// Builds an element from any `u64`, reducing mod `p`.
    pub const fn new(value: u64) -> Felt {
        if value >= MODULUS {
            Felt(value - MODULUS)
        } else {
            Felt(value)
        }
    }

    /// The canonical representative in `[0, p)`.
    pub const fn as_u64(self) -> u64 {
        self.0
    }

    /// The fixed multiplicative generator as an element.
    pub const fn generator() -> Felt {
        Felt(GENERATOR)
    }

    /// Big-endian 8-byte encoding of the canonical representative. This is
    /// the only serialized form used anywhere in the crate.
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    /// Parses a canonical big-endian encoding; returns `None` for values
    /// `>= p` so non-canonical encodings are rejected at the boundary.
    pub fn from_be_bytes(bytes: [u8; 8]) -> Option<Felt> {
        let v = u64::from_be_bytes(bytes);
        if v < MODULUS {
            Some(Felt(v))
        } else {
            None
        }
    }

    /// Reduces an arbitrary `u128` (used by oracles and the multiplier).
    fn from_u128(value: u128) -> Felt {
        Felt((value % MODULUS as u128) as u64)
    }

    /// `self^exp` by square-and-multiply; `0^0 = 1` by convention.
    pub fn pow(self, mut exp: u64) -> Felt {
        let mut base = self;
        let mut acc = Felt::ONE;
        while exp != 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat (`a^(p-2)`).
    pub fn inv(self) -> Result<Felt, FieldError> {
        if self.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(MODULUS - 2))
    }

    /// `x^7`, the permutation exponent used by the algebraic hash.
    pub fn pow7(self) -> Felt {
        let x2 = self * self;
        let x4 = x2 * x2;
        x4 * x2 * self
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Generator of the order-`2^k` multiplicative subgroup,
    /// `g^((p-1) / 2^k)` with `g = 7`. Defined for `0 <= k <= 32`.
    pub fn root_of_unity(k: u32) -> Result<Felt, FieldError> {
        if k > TWO_ADICITY {
            return Err(FieldError::UnsupportedOrder(k));
        }
        Ok(Felt::generator().pow((MODULUS - 1) >> k))
    }
}

impl From<u32> for Felt {
    fn from(v: u32) -> Felt {
        Felt(v as u64)
    }
}

impl From<u8> for Felt {
    fn from(v: u8) -> Felt {
        Felt(v as u64)
    }
}

impl fmt::Debug for Felt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Felt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Felt {
    type Output = Felt;
    fn add(self, rhs: Felt) -> Felt {
        // Inputs are canonical, so the true sum is < 2p and at most one
        // subtraction of p is needed; a u64 carry already implies sum >= p.
        let (sum, over) = self.0.overflowing_add(rhs.0);
        if over {
            Felt(sum.wrapping_sub(MODULUS))
        } else if sum >= MODULUS {
            Felt(sum - MODULUS)
        } else {
            Felt(sum)
        }
    }
}

impl Sub for Felt {
    type Output = Felt;
    fn sub(self, rhs: Felt) -> Felt {
        let (diff, under) = self.0.overflowing_sub(rhs.0);
        if under {
            Felt(diff.wrapping_add(MODULUS))
        } else {
            Felt(diff)
        }
    }
}

impl Neg for Felt {
    type Output = Felt;
    fn neg(self) -> Felt {
        Felt::ZERO - self
    }
}

impl Mul for Felt {
    type Output = Felt;
    fn mul(self, rhs: Felt) -> Felt {
        Felt::from_u128(self.0 as u128 * rhs.0 as u128)
    }
}

impl AddAssign for Felt {
    fn add_assign(&mut self, rhs: Felt) {
        *self = *self + rhs;
    }
}

impl SubAssign for Felt {
    fn sub_assign(&mut self, rhs: Felt) {
        *self = *self - rhs;
    }
}

impl MulAssign for Felt {
    fn mul_assign(&mut self, rhs: Felt) {
        *self = *self * rhs;
    }
}

/// Inverts a slice of nonzero elements with a single field inversion
/// (Montgomery's batch trick).
pub fn batch_inverse(values: &[Felt]) -> Result<Vec<Felt>, FieldError> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = Felt::ONE;
    for &v in values {
        if v.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        prefix.push(acc);
        acc *= v;
    }
    let mut inv = acc.inv()?;
    let mut out = vec![Felt::ZERO; values.len()];
    for i in (0..values.len()).rev() {
        out[i] = inv * prefix[i];
        inv *= values[i];
    }
    Ok(out)
}

/// A multiplicative coset `offset * <generator>` of size `2^log_size`, the
/// domain for all NTT work. `offset = 1` gives the plain subgroup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalDomain {
    log_size: u32,
    offset: Felt,
    generator: Felt,
}

impl EvalDomain {
    /// Creates the domain of size `2^log_size` shifted by `offset`.
    pub fn new(log_size: u32, offset: Felt) -> Result<EvalDomain, FieldError> {
        if offset.is_zero() {
            return Err(FieldError::ZeroOffset);
        }
        let generator = Felt::root_of_unity(log_size)?;
        Ok(EvalDomain {
            log_size,
            offset,
            generator,
        })
    }

    pub fn log_size(&self) -> u32 {
        self.log_size
    }

    pub fn size(&self) -> usize {
        1usize << self.log_size
    }

    pub fn offset(&self) -> Felt {
        self.offset
    }

    pub fn generator(&self) -> Felt {
        self.generator
    }

    /// The `i`-th domain element, `offset * generator^i`.
    pub fn element(&self, i: usize) -> Felt {
        self.offset * self.generator.pow((i as u64) & (self.size() as u64 - 1))
    }

    /// All domain elements in index order.
    pub fn elements(&self) -> Vec<Felt> {
        let mut out = Vec::with_capacity(self.size());
        let mut cur = self.offset;
        for _ in 0..self.size() {
            out.push(cur);
            cur *= self.generator;
        }
        out
    }

    /// The domain `{x^2 : x in self}`: half the size, squared offset.
    pub fn squared(&self) -> EvalDomain {
        EvalDomain {
            log_size: self.log_size.saturating_sub(1),
            offset: self.offset * self.offset,
            generator: self.generator * self.generator,
        }
    }
}

fn bit_reverse_permute(values: &mut [Felt]) {
    let n = values.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if i < j {
            values.swap(i, j);
        }
    }
}

/// In-place radix-2 Cooley-Tukey transform; `root` must generate the
/// order-`values.len()` subgroup. Natural order in, natural order out.
fn transform(values: &mut [Felt], root: Felt) {
    let n = values.len();
    if n <= 1 {
        return;
    }
    bit_reverse_permute(values);
    let mut len = 2;
    while len <= n {
        let step = root.pow((n / len) as u64);
        for start in (0..n).step_by(len) {
            let mut w = Felt::ONE;
            for k in 0..len / 2 {
                let a = values[start + k];
                let b = values[start + k + len / 2] * w;
                values[start + k] = a + b;
                values[start + k + len / 2] = a - b;
                w *= step;
            }
        }
        len <<= 1;
    }
}

/// Evaluates the polynomial with the given coefficients over the domain:
/// `out[i] = P(offset * generator^i)`.
pub fn ntt(coeffs: &[Felt], domain: &EvalDomain) -> Result<Vec<Felt>, FieldError> {
    if coeffs.len() != domain.size() {
        return Err(FieldError::SizeMismatch {
            len: coeffs.len(),
            expected: domain.size(),
        });
    }
    let mut values = coeffs.to_vec();
    if domain.offset() != Felt::ONE {
        let mut power = Felt::ONE;
        for v in values.iter_mut() {
            *v *= power;
            power *= domain.offset();
        }
    }
    transform(&mut values, domain.generator());
    Ok(values)
}

/// Interpolates evaluations over the domain back to coefficients;
/// exact inverse of [`ntt`] on the same domain.
pub fn intt(evals: &[Felt], domain: &EvalDomain) -> Result<Vec<Felt>, FieldError> {
    if evals.len() != domain.size() {
        return Err(FieldError::SizeMismatch {
            len: evals.len(),
            expected: domain.size(),
        });
    }
    let mut values = evals.to_vec();
    let root_inv = domain.generator().inv().expect("domain generator is nonzero");
    transform(&mut values, root_inv);
    let n_inv = Felt::new(domain.size() as u64)
        .inv()
        .expect("domain size is nonzero mod p");
    for v in values.iter_mut() {
        *v *= n_inv;
    }
    if domain.offset() != Felt::ONE {
        let offset_inv = domain.offset().inv().expect("offset is nonzero");
        let mut power = Felt::ONE;
        for v in values.iter_mut() {
            *v *= power;
            power *= offset_inv;
        }
    }
    Ok(values)
}

/// Degree of the polynomial described by `coeffs` (None for the zero
/// polynomial). Convenience for tests and degree audits.
pub fn poly_degree(coeffs: &[Felt]) -> Option<usize> {
    coeffs.iter().rposition(|c| !c.is_zero())
}

/// Horner evaluation of a coefficient vector at a point.
pub fn poly_eval(coeffs: &[Felt], x: Felt) -> Felt {
    let mut acc = Felt::ZERO;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}
