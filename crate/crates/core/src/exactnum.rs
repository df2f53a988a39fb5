//! Exact arithmetic substrate: word-size prime fields, rationals, and
//! multi-prime Chinese remaindering.
//!
//! Two ring descriptors implement [`Ring`]: [`Rationals`] (elements are
//! [`ExactRational`]) and [`PrimeField`] (elements are `u64` residues in
//! `[0, p)`). Polynomials, curves and matrices elsewhere in the crate are
//! generic over these descriptors.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

/// Canonical exact rational (denominator positive, lowest terms).
pub type ExactRational = BigRational;

/// Working prime used for the quintic computations this library reproduces.
pub const PRIME_6361: u64 = 6361;
/// 2^61 - 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;
/// 2^31 - 1.
pub const MERSENNE_31: u64 = (1 << 31) - 1;
/// Primes used by the pipeline when the caller does not pick any.
pub const DEFAULT_PRIMES: [u64; 2] = [MERSENNE_61, MERSENNE_31];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExactError {
    #[error("{0} is not a prime greater than 2 below 2^63")]
    NotPrime(u64),
    #[error("attempted to invert zero modulo {0}")]
    ZeroInverse(u64),
    #[error("denominator {den} is not invertible modulo {p}")]
    DenominatorNotInvertible { den: String, p: u64 },
    #[error("prime {0} appears more than once")]
    DuplicatePrime(u64),
    #[error("residue {value} is not reduced modulo {p}")]
    UnreducedResidue { value: u64, p: u64 },
    #[error("empty residue list")]
    EmptyResidues,
    #[error("cannot parse rational from {0:?}")]
    BadRational(String),
}

/// A commutative ring described by a runtime value.
///
/// The descriptor carries whatever context the elements need (the modulus
/// for a prime field), so elements themselves stay plain data.
pub trait Ring: Clone + PartialEq + fmt::Debug + Send + Sync {
    type Elem: Clone + PartialEq + fmt::Debug + Send + Sync;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn is_zero(&self, a: &Self::Elem) -> bool;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn sub(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn neg(&self, a: &Self::Elem) -> Self::Elem;
    fn from_i64(&self, v: i64) -> Self::Elem;
    /// Map an exact rational into the ring; fails when the denominator is
    /// not invertible.
    fn from_rational(&self, q: &ExactRational) -> Result<Self::Elem, ExactError>;
    /// Field inverse.
    fn inv(&self, a: &Self::Elem) -> Result<Self::Elem, ExactError>;
    /// Text form used by the polynomial serializer.
    fn format_elem(&self, a: &Self::Elem) -> String;
    /// Short description used in error messages ("Q", "GF(7)").
    fn tag(&self) -> String;

    fn pow(&self, a: &Self::Elem, mut e: u64) -> Self::Elem {
        let mut base = a.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            e >>= 1;
            if e > 0 {
                base = self.mul(&base, &base);
            }
        }
        acc
    }

    fn div(&self, a: &Self::Elem, b: &Self::Elem) -> Result<Self::Elem, ExactError> {
        Ok(self.mul(a, &self.inv(b)?))
    }
}

/// Rings whose elements can be drawn at random for test-data generation.
pub trait SampleRing: Ring {
    /// Uniform element; rings of characteristic zero draw integers in
    /// `[-bound, bound]`, prime fields ignore `bound`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, bound: i64) -> Self::Elem;
}

/// The field of rationals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Rationals;

impl Ring for Rationals {
    type Elem = ExactRational;

    fn zero(&self) -> ExactRational {
        ExactRational::zero()
    }
    fn one(&self) -> ExactRational {
        ExactRational::one()
    }
    fn is_zero(&self, a: &ExactRational) -> bool {
        a.is_zero()
    }
    fn add(&self, a: &ExactRational, b: &ExactRational) -> ExactRational {
        a + b
    }
    fn sub(&self, a: &ExactRational, b: &ExactRational) -> ExactRational {
        a - b
    }
    fn mul(&self, a: &ExactRational, b: &ExactRational) -> ExactRational {
        a * b
    }
    fn neg(&self, a: &ExactRational) -> ExactRational {
        -a
    }
    fn from_i64(&self, v: i64) -> ExactRational {
        ExactRational::from_integer(BigInt::from(v))
    }
    fn from_rational(&self, q: &ExactRational) -> Result<ExactRational, ExactError> {
        Ok(q.clone())
    }
    fn inv(&self, a: &ExactRational) -> Result<ExactRational, ExactError> {
        if a.is_zero() {
            return Err(ExactError::ZeroInverse(0));
        }
        Ok(a.recip())
    }
    fn format_elem(&self, a: &ExactRational) -> String {
        format_rational(a)
    }
    fn tag(&self) -> String {
        "Q".to_string()
    }
}

impl SampleRing for Rationals {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, bound: i64) -> ExactRational {
        self.from_i64(rng.gen_range(-bound..=bound))
    }
}

/// `num/den`, or just `num` for integers.
pub fn format_rational(q: &ExactRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Inverse of [`format_rational`]; also accepts surrounding whitespace.
pub fn parse_rational(s: &str) -> Result<ExactRational, ExactError> {
    let t = s.trim();
    let bad = || ExactError::BadRational(s.to_string());
    match t.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(ExactRational::new(n, d))
        }
        None => Ok(ExactRational::from_integer(t.parse().map_err(|_| bad())?)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduction {
    /// p = 2^k - 1.
    Mersenne(u32),
    /// p < 2^32, products fit a u64.
    Small,
    General,
}

/// GF(p) for a prime `2 < p < 2^63`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    p: u64,
    reduction: Reduction,
}

impl fmt::Debug for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.p)
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.p)
    }
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self, ExactError> {
        if p <= 2 || p >= 1 << 63 || !is_prime_u64(p) {
            return Err(ExactError::NotPrime(p));
        }
        let reduction = if (p + 1).is_power_of_two() {
            Reduction::Mersenne(p.trailing_ones())
        } else if p < 1 << 32 {
            Reduction::Small
        } else {
            Reduction::General
        };
        Ok(Self { p, reduction })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        match self.reduction {
            Reduction::Mersenne(k) => {
                let x = a as u128 * b as u128;
                let lo = (x as u64) & self.p;
                let hi = (x >> k) as u64;
                // hi < 2^(2k - k) fits; one fold leaves a value below 2p.
                let s = lo + hi;
                let s = (s & self.p) + (s >> k);
                if s >= self.p {
                    s - self.p
                } else {
                    s
                }
            }
            Reduction::Small => (a * b) % self.p,
            Reduction::General => ((a as u128 * b as u128) % self.p as u128) as u64,
        }
    }

    /// `dst[i] -= f * src[i]` for all `i`.
    pub fn axpy_neg(&self, dst: &mut [u64], f: u64, src: &[u64]) {
        match self.reduction {
            Reduction::Mersenne(k) => {
                let p = self.p;
                for (d, &s) in dst.iter_mut().zip(src) {
                    let x = f as u128 * s as u128;
                    let t = ((x as u64) & p) + (x >> k) as u64;
                    let t = (t & p) + (t >> k);
                    // t < p + 1; p - t in [0, p]
                    let y = *d + (p - t);
                    *d = if y >= p { y - p } else { y };
                }
            }
            _ => {
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = self.sub_mul(*d, f, s);
                }
            }
        }
    }

    /// `sum a[i] * b[i]`.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        match self.reduction {
            Reduction::Mersenne(k) => {
                // 2^k - 1 squared is below 2^(2k); with k <= 61 up to 2^(128-2k)
                // products can be summed before folding
                let p = self.p as u128;
                let chunk = 1usize << (126 - 2 * k).min(20);
                let mut acc = 0u64;
                for (ca, cb) in a.chunks(chunk).zip(b.chunks(chunk)) {
                    let mut s: u128 = 0;
                    for (&x, &y) in ca.iter().zip(cb) {
                        s += x as u128 * y as u128;
                    }
                    let s = (s & p) + (s >> k);
                    let s = (s & p) + (s >> k);
                    let s = ((s & p) + (s >> k)) as u64;
                    acc = self.add(acc, if s >= self.p { s - self.p } else { s });
                }
                acc
            }
            _ => a.iter().zip(b).fold(0, |acc, (&x, &y)| self.add(acc, self.mul(x, y))),
        }
    }

    /// `a - f*b`, the elimination kernel.
    #[inline]
    pub fn sub_mul(&self, a: u64, f: u64, b: u64) -> u64 {
        self.sub(a, self.mul(f, b))
    }

    pub fn pow(&self, a: u64, mut e: u64) -> u64 {
        let mut base = a;
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    pub fn inv(&self, a: u64) -> Result<u64, ExactError> {
        let a = a % self.p;
        if a == 0 {
            return Err(ExactError::ZeroInverse(self.p));
        }
        // extended Euclid on i128 to stay exact for 63-bit moduli
        let (mut r0, mut r1) = (self.p as i128, a as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1);
        Ok(t0.rem_euclid(self.p as i128) as u64)
    }

    pub fn reduce_i64(&self, v: i64) -> u64 {
        (v as i128).rem_euclid(self.p as i128) as u64
    }

    pub fn reduce_bigint(&self, v: &BigInt) -> u64 {
        let m = BigInt::from(self.p);
        v.mod_floor(&m).to_u64().expect("residue fits u64")
    }

    pub fn reduce_rational(&self, q: &ExactRational) -> Result<u64, ExactError> {
        let den = self.reduce_bigint(q.denom());
        if den == 0 {
            return Err(ExactError::DenominatorNotInvertible {
                den: q.denom().to_string(),
                p: self.p,
            });
        }
        Ok(self.mul(self.reduce_bigint(q.numer()), self.inv(den)?))
    }

    /// Representative in `(-p/2, p/2]`.
    pub fn symmetric(&self, a: u64) -> i64 {
        if a > self.p / 2 {
            -((self.p - a) as i64)
        } else {
            a as i64
        }
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.p)
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(1..self.p)
    }
}

impl Ring for PrimeField {
    type Elem = u64;

    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1
    }
    fn is_zero(&self, a: &u64) -> bool {
        *a == 0
    }
    fn add(&self, a: &u64, b: &u64) -> u64 {
        PrimeField::add(self, *a, *b)
    }
    fn sub(&self, a: &u64, b: &u64) -> u64 {
        PrimeField::sub(self, *a, *b)
    }
    fn mul(&self, a: &u64, b: &u64) -> u64 {
        PrimeField::mul(self, *a, *b)
    }
    fn neg(&self, a: &u64) -> u64 {
        PrimeField::neg(self, *a)
    }
    fn from_i64(&self, v: i64) -> u64 {
        self.reduce_i64(v)
    }
    fn from_rational(&self, q: &ExactRational) -> Result<u64, ExactError> {
        self.reduce_rational(q)
    }
    fn inv(&self, a: &u64) -> Result<u64, ExactError> {
        PrimeField::inv(self, *a)
    }
    fn format_elem(&self, a: &u64) -> String {
        a.to_string()
    }
    fn tag(&self) -> String {
        format!("GF({})", self.p)
    }
    fn pow(&self, a: &u64, e: u64) -> u64 {
        PrimeField::pow(self, *a, e)
    }
}

impl SampleRing for PrimeField {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, _bound: i64) -> u64 {
        self.random(rng)
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, a, m);
        }
        a = mul_mod_u64(a, a, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the first twelve prime bases are exact for
/// every 64-bit input.
pub fn is_prime_u64(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Combine residues `(value, prime)` into the unique integer in `[0, prod)`.
pub fn crt_combine(residues: &[(u64, u64)]) -> Result<BigUint, ExactError> {
    let (x, _) = crt_with_modulus(residues)?;
    Ok(x)
}

/// Same as [`crt_combine`], but returns the representative in
/// `(-prod/2, prod/2]`.
pub fn crt_combine_symmetric(residues: &[(u64, u64)]) -> Result<BigInt, ExactError> {
    let (x, m) = crt_with_modulus(residues)?;
    let x = BigInt::from_biguint(Sign::Plus, x);
    let m = BigInt::from_biguint(Sign::Plus, m);
    if &x * 2 > m {
        Ok(x - m)
    } else {
        Ok(x)
    }
}

fn crt_with_modulus(residues: &[(u64, u64)]) -> Result<(BigUint, BigUint), ExactError> {
    if residues.is_empty() {
        return Err(ExactError::EmptyResidues);
    }
    let mut seen = std::collections::BTreeSet::new();
    for &(v, p) in residues {
        if !seen.insert(p) {
            return Err(ExactError::DuplicatePrime(p));
        }
        if !is_prime_u64(p) {
            return Err(ExactError::NotPrime(p));
        }
        if v >= p {
            return Err(ExactError::UnreducedResidue { value: v, p });
        }
    }
    let mut x = BigUint::zero();
    let mut m = BigUint::one();
    for &(v, p) in residues {
        // x' = x + m * ((v - x) * m^{-1} mod p)
        let x_mod = (&x % p).to_u64().unwrap();
        let m_mod = (&m % p).to_u64().unwrap();
        let diff = (v as u128 + p as u128 - x_mod as u128) % p as u128;
        let t = (diff * inv_mod(m_mod, p)? as u128 % p as u128) as u64;
        x += &m * t;
        m *= p;
    }
    Ok((x, m))
}

fn inv_mod(a: u64, p: u64) -> Result<u64, ExactError> {
    let (mut r0, mut r1) = (p as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return Err(ExactError::ZeroInverse(p));
    }
    Ok(t0.rem_euclid(p as i128) as u64)
}

/// Rational reconstruction: find `n/d` with `|n|, d <= sqrt(m/2)` and
/// `n ≡ a d (mod m)`, if one exists.
pub fn rational_reconstruction(a: &BigUint, m: &BigUint) -> Option<ExactRational> {
    let m = BigInt::from_biguint(Sign::Plus, m.clone());
    let bound = (&m / 2u32).sqrt();
    let (mut r0, mut r1) = (m.clone(), BigInt::from_biguint(Sign::Plus, a % m.magnitude()));
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while r1 > bound {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let t2 = &t0 - &q * &t1;
        r0 = std::mem::replace(&mut r1, r2);
        t0 = std::mem::replace(&mut t1, t2);
    }
    if t1.is_zero() || t1.abs() > bound || !r1.gcd(&t1).is_one() {
        return None;
    }
    Some(ExactRational::new(r1, t1))
}
