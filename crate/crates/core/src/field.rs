//! Prime-field arithmetic.
//!
//! Every code symbol is a residue modulo a prime `q`. [`PrimeField`] is a
//! small copyable context holding the modulus; [`FieldElement`] is a residue
//! that remembers which field it belongs to, so mixing moduli is caught
//! instead of silently producing garbage.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} does not fit in 32 bits")]
    ModulusTooLarge(u64),
    #[error("modulus mismatch: {left} vs {right}")]
    ModulusMismatch { left: u32, right: u32 },
    #[error("division by zero")]
    DivisionByZero,
}

/// Deterministic primality test by trial division. Adequate for the 32-bit
/// moduli used here (at most 65536 candidate divisors).
pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    if x < 4 {
        return true;
    }
    if x.is_multiple_of(2) {
        return false;
    }
    let mut d = 3u64;
    while d * d <= x {
        if x.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Least prime `p >= x`.
pub fn smallest_prime_geq(x: u64) -> u64 {
    let mut p = x.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

/// The field F_q for a prime `q < 2^32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    modulus: u32,
}

impl PrimeField {
    pub fn new(modulus: u64) -> Result<Self, FieldError> {
        if modulus > u32::MAX as u64 {
            return Err(FieldError::ModulusTooLarge(modulus));
        }
        if !is_prime(modulus) {
            return Err(FieldError::NotPrime(modulus));
        }
        Ok(Self {
            modulus: modulus as u32,
        })
    }

    #[inline]
    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    /// Reduces an arbitrary integer into the field.
    #[inline]
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: (value % self.modulus as u64) as u32,
            modulus: self.modulus,
        }
    }

    /// Reduces a signed integer into the field.
    pub fn element_signed(&self, value: i64) -> FieldElement {
        let q = self.modulus as i64;
        self.element(value.rem_euclid(q) as u64)
    }

    #[inline]
    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    #[inline]
    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    // Raw residue arithmetic. Inputs must already be canonical (< q).

    #[inline]
    pub(crate) fn add_raw(&self, a: u32, b: u32) -> u32 {
        let s = a as u64 + b as u64;
        let q = self.modulus as u64;
        (if s >= q { s - q } else { s }) as u32
    }

    #[inline]
    pub(crate) fn sub_raw(&self, a: u32, b: u32) -> u32 {
        if a >= b {
            a - b
        } else {
            (a as u64 + self.modulus as u64 - b as u64) as u32
        }
    }

    #[inline]
    pub(crate) fn mul_raw(&self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.modulus as u64) as u32
    }

    #[inline]
    pub(crate) fn neg_raw(&self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    pub(crate) fn pow_raw(&self, base: u32, mut exponent: u64) -> u32 {
        let q = self.modulus as u64;
        let mut acc = 1 % q;
        let mut b = base as u64 % q;
        while exponent > 0 {
            if exponent & 1 == 1 {
                acc = acc * b % q;
            }
            b = b * b % q;
            exponent >>= 1;
        }
        acc as u32
    }

    /// Inverse by the extended Euclidean algorithm.
    pub(crate) fn inv_raw(&self, a: u32) -> Result<u32, FieldError> {
        if a == 0 {
            return Err(FieldError::DivisionByZero);
        }
        let (mut old_r, mut r) = (a as i64, self.modulus as i64);
        let (mut old_s, mut s) = (1i64, 0i64);
        while r != 0 {
            let quot = old_r / r;
            (old_r, r) = (r, old_r - quot * r);
            (old_s, s) = (s, old_s - quot * s);
        }
        debug_assert_eq!(old_r, 1);
        Ok(old_s.rem_euclid(self.modulus as i64) as u32)
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.modulus)
    }
}

/// A canonical residue in `[0, q)` tagged with its modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u32,
    modulus: u32,
}

impl FieldElement {
    #[inline]
    pub fn value(&self) -> u32 {
        self.value
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        PrimeField {
            modulus: self.modulus,
        }
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn same_field(&self, other: &Self) -> Result<PrimeField, FieldError> {
        if self.modulus != other.modulus {
            return Err(FieldError::ModulusMismatch {
                left: self.modulus,
                right: other.modulus,
            });
        }
        Ok(self.field())
    }

    pub fn checked_add(self, other: Self) -> Result<Self, FieldError> {
        let f = self.same_field(&other)?;
        Ok(self.with(f.add_raw(self.value, other.value)))
    }

    pub fn checked_sub(self, other: Self) -> Result<Self, FieldError> {
        let f = self.same_field(&other)?;
        Ok(self.with(f.sub_raw(self.value, other.value)))
    }

    pub fn checked_mul(self, other: Self) -> Result<Self, FieldError> {
        let f = self.same_field(&other)?;
        Ok(self.with(f.mul_raw(self.value, other.value)))
    }

    pub fn checked_div(self, other: Self) -> Result<Self, FieldError> {
        let f = self.same_field(&other)?;
        let inv = f.inv_raw(other.value)?;
        Ok(self.with(f.mul_raw(self.value, inv)))
    }

    pub fn inv(self) -> Result<Self, FieldError> {
        Ok(self.with(self.field().inv_raw(self.value)?))
    }

    /// `self^exponent` by square-and-multiply; `0^0 = 1`.
    pub fn pow(self, exponent: u64) -> Self {
        self.with(self.field().pow_raw(self.value, exponent))
    }

    #[inline]
    fn with(self, value: u32) -> Self {
        Self {
            value,
            modulus: self.modulus,
        }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

// Operator forms panic on mismatched moduli; use the `checked_*` methods
// where the operands come from untrusted input.

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("field operands must share a modulus")
    }
}

impl Sub for FieldElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("field operands must share a modulus")
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.checked_mul(rhs).expect("field operands must share a modulus")
    }
}

impl Neg for FieldElement {
    type Output = Self;
    fn neg(self) -> Self {
        self.with(self.field().neg_raw(self.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    fn trial_division_next_prime(x: u64) -> u64 {
        (x..).find(|&p| p >= 2 && (2..p).all(|d| p % d != 0)).unwrap()
    }

    #[test]
    fn add_examples() {
        let f11 = f(11);
        assert_eq!((f11.element(7) + f11.element(5)).value(), 1);
        assert_eq!((f11.element(10) + f11.element(1)).value(), 0);
        for x in 0..11 {
            assert_eq!((f11.zero() + f11.element(x)).value() as u64, x);
        }
    }

    #[test]
    fn mul_examples() {
        let f11 = f(11);
        let seven = f11.element(7);
        assert_eq!((seven * seven).value(), 5);
        assert_eq!((seven * seven * seven * seven).value(), 3);
        for x in 0..11 {
            assert_eq!((f11.one() * f11.element(x)).value() as u64, x);
        }
    }

    #[test]
    fn inv_examples() {
        let f11 = f(11);
        assert_eq!(f11.one().inv().unwrap().value(), 1);
        assert_eq!(f11.element(2).inv().unwrap().value(), 6);
        assert_eq!(f11.zero().inv(), Err(FieldError::DivisionByZero));
        assert_eq!(
            f11.one().checked_div(f11.zero()),
            Err(FieldError::DivisionByZero)
        );
    }

    #[test]
    fn pow_examples() {
        let f11 = f(11);
        assert_eq!(f11.element(2).pow(4).value(), 5);
        assert_eq!(f11.element(7).pow(4).value(), 3);
        assert_eq!(f11.element(9).pow(0).value(), 1);
        assert_eq!(f11.zero().pow(0).value(), 1);
        assert_eq!(f11.zero().pow(3).value(), 0);
    }

    #[test]
    fn smallest_prime_examples() {
        assert_eq!(smallest_prime_geq(8), 11);
        assert_eq!(smallest_prime_geq(11), 11);
        assert_eq!(smallest_prime_geq(258), 263);
        for x in 2..2000 {
            assert_eq!(smallest_prime_geq(x), trial_division_next_prime(x), "x={x}");
        }
    }

    #[test]
    fn rejects_composite_and_mismatch() {
        assert_eq!(PrimeField::new(12), Err(FieldError::NotPrime(12)));
        assert_eq!(PrimeField::new(1), Err(FieldError::NotPrime(1)));
        assert!(PrimeField::new(1 << 33).is_err());
        let a = f(11).element(3);
        let b = f(13).element(3);
        assert_eq!(
            a.checked_add(b),
            Err(FieldError::ModulusMismatch {
                left: 11,
                right: 13
            })
        );
        assert!(a.checked_mul(b).is_err());
        assert!(a.checked_sub(b).is_err());
    }

    #[test]
    fn canonical_residues() {
        let f11 = f(11);
        assert_eq!(f11.element(25).value(), 3);
        assert_eq!(f11.element_signed(-1).value(), 10);
        assert_eq!((-f11.element(4)).value(), 7);
        assert_eq!((-f11.zero()).value(), 0);
    }

    #[test]
    fn fermat_and_inverse_exhaustive() {
        for q in [11u64, 13, 263] {
            let fq = f(q);
            for a in 1..q {
                let a = fq.element(a);
                assert_eq!(a.pow(q - 1), fq.one());
                assert_eq!(a * a.inv().unwrap(), fq.one());
            }
        }
    }

    fn field_and_triple() -> impl Strategy<Value = (u64, u64, u64, u64)> {
        prop::sample::select(vec![11u64, 13, 263])
            .prop_flat_map(|q| (Just(q), 0..q, 0..q, 0..q))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn field_axioms((q, a, b, c) in field_and_triple()) {
            let fq = f(q);
            let (a, b, c) = (fq.element(a), fq.element(b), fq.element(c));
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!(a * (b + c), a * b + a * c);
            prop_assert_eq!(a + fq.zero(), a);
            prop_assert_eq!(a * fq.one(), a);
            prop_assert_eq!(a - a, fq.zero());
            prop_assert_eq!(a + (-a), fq.zero());
            prop_assert!(a.value() < fq.modulus());
        }
    }
}
