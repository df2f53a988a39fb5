//! Plane curves `P = Σ C_ijk x1^i x2^j x3^k` (no binomial factors), the
//! decomposition `P = u^4 h + v w` that characterises undulation lines, and
//! linear changes of coordinates.

use std::collections::BTreeMap;

use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exactnum::{
    format_rational, parse_rational, ExactError, ExactRational, Rationals, Ring, SampleRing,
};
use crate::polycore::{enumerate_monomials, MultiPoly, VarId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurveError {
    #[error("degree mismatch: {0}")]
    Degree(String),
    #[error("the lines u and v are proportional")]
    ParallelLines,
    #[error("linear map is singular")]
    Singular,
    #[error("bad curve file: {0}")]
    Format(String),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Position of `x1^i x2^j x3^k` among the degree-`d` monomials in
/// descending lexicographic order.
pub fn ternary_index(d: u32, e: [u8; 3]) -> usize {
    let i = e[0] as usize;
    let j = e[1] as usize;
    let d = d as usize;
    (d - i) * (d - i + 1) / 2 + (d - i - j)
}

/// Exponent triples of degree `d` in the order used by [`TernaryForm`].
pub fn ternary_monomials(d: u32) -> Vec<[u8; 3]> {
    enumerate_monomials(d, 3).into_iter().map(|e| [e[0], e[1], e[2]]).collect()
}

/// Dense homogeneous polynomial in `x1, x2, x3`.
#[derive(Clone, PartialEq, Debug)]
pub struct TernaryForm<R: Ring> {
    ring: R,
    degree: u32,
    coeffs: Vec<R::Elem>,
}

impl<R: Ring> TernaryForm<R> {
    pub fn zero(ring: R, degree: u32) -> Self {
        let n = ((degree + 1) * (degree + 2) / 2) as usize;
        Self { coeffs: vec![ring.zero(); n], ring, degree }
    }

    pub fn from_coeffs(ring: R, degree: u32, coeffs: Vec<R::Elem>) -> Result<Self, CurveError> {
        let n = ((degree + 1) * (degree + 2) / 2) as usize;
        if coeffs.len() != n {
            return Err(CurveError::Degree(format!(
                "{} coefficients for degree {degree}, expected {n}",
                coeffs.len()
            )));
        }
        Ok(Self { ring, degree, coeffs })
    }

    pub fn linear(ring: R, l: &LinearForm<R>) -> Self {
        Self { degree: 1, coeffs: l.0.to_vec(), ring }
    }

    pub fn ring(&self) -> &R {
        &self.ring
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Coefficients in [`ternary_monomials`] order.
    pub fn coeffs(&self) -> &[R::Elem] {
        &self.coeffs
    }

    pub fn coeff(&self, e: [u8; 3]) -> &R::Elem {
        &self.coeffs[ternary_index(self.degree, e)]
    }

    pub fn set(&mut self, e: [u8; 3], c: R::Elem) {
        let idx = ternary_index(self.degree, e);
        self.coeffs[idx] = c;
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| self.ring.is_zero(c))
    }

    pub fn add(&self, o: &Self) -> Result<Self, CurveError> {
        if self.degree != o.degree {
            return Err(CurveError::Degree(format!("adding degrees {} and {}", self.degree, o.degree)));
        }
        let coeffs = self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| self.ring.add(a, b)).collect();
        Ok(Self { ring: self.ring.clone(), degree: self.degree, coeffs })
    }

    pub fn scale(&self, s: &R::Elem) -> Self {
        let coeffs = self.coeffs.iter().map(|a| self.ring.mul(a, s)).collect();
        Self { ring: self.ring.clone(), degree: self.degree, coeffs }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero(self.ring.clone(), self.degree + o.degree);
        let ma = ternary_monomials(self.degree);
        let mb = ternary_monomials(o.degree);
        for (ea, ca) in ma.iter().zip(&self.coeffs) {
            if self.ring.is_zero(ca) {
                continue;
            }
            for (eb, cb) in mb.iter().zip(&o.coeffs) {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                let idx = ternary_index(out.degree, e);
                let t = self.ring.mul(ca, cb);
                out.coeffs[idx] = self.ring.add(&out.coeffs[idx], &t);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut one = Self::zero(self.ring.clone(), 0);
        one.coeffs[0] = self.ring.one();
        (0..e).fold(one, |acc, _| acc.mul(self))
    }

    pub fn eval(&self, x: &[R::Elem; 3]) -> R::Elem {
        let r = &self.ring;
        let mut acc = r.zero();
        for (e, c) in ternary_monomials(self.degree).iter().zip(&self.coeffs) {
            if r.is_zero(c) {
                continue;
            }
            let mut t = c.clone();
            for a in 0..3 {
                t = r.mul(&t, &r.pow(&x[a], e[a] as u64));
            }
            acc = r.add(&acc, &t);
        }
        acc
    }

    /// Partial derivative with respect to `x_{axis+1}`.
    pub fn derivative(&self, axis: usize) -> Self {
        if self.degree == 0 {
            return Self::zero(self.ring.clone(), 0);
        }
        let mut out = Self::zero(self.ring.clone(), self.degree - 1);
        for (e, c) in ternary_monomials(self.degree).iter().zip(&self.coeffs) {
            if e[axis] == 0 {
                continue;
            }
            let mut f = *e;
            f[axis] -= 1;
            let t = self.ring.mul(c, &self.ring.from_i64(e[axis] as i64));
            out.set(f, t);
        }
        out
    }

    pub fn gradient(&self, x: &[R::Elem; 3]) -> [R::Elem; 3] {
        [0, 1, 2].map(|a| self.derivative(a).eval(x))
    }

    /// Substitute `x -> g x`, i.e. `x_i -> Σ_j g[i][j] x_j`.
    pub fn substitute_linear(&self, g: &[[R::Elem; 3]; 3]) -> Self {
        let rows: Vec<Self> = g
            .iter()
            .map(|row| Self::linear(self.ring.clone(), &LinearForm(row.clone())))
            .collect();
        let mut out = Self::zero(self.ring.clone(), self.degree);
        for (e, c) in ternary_monomials(self.degree).iter().zip(&self.coeffs) {
            if self.ring.is_zero(c) {
                continue;
            }
            let t = rows[0].pow(e[0] as u32).mul(&rows[1].pow(e[1] as u32)).mul(&rows[2].pow(e[2] as u32));
            out = out.add(&t.scale(c)).expect("same degree");
        }
        out
    }

    /// The same form as a [`MultiPoly`] in the variables `x1, x2, x3`.
    pub fn to_multipoly(&self) -> MultiPoly<R> {
        MultiPoly::from_terms(
            self.ring.clone(),
            ternary_monomials(self.degree).into_iter().zip(self.coeffs.iter().cloned()).map(|(e, c)| {
                (
                    crate::polycore::Monomial::from_pairs(
                        (0..3).map(|a| (VarId::X(a as u8), e[a])),
                    ),
                    c,
                )
            }),
        )
    }

    pub fn map_ring<S: Ring>(
        &self,
        target: S,
        f: impl Fn(&R::Elem) -> Result<S::Elem, ExactError>,
    ) -> Result<TernaryForm<S>, ExactError> {
        let coeffs = self.coeffs.iter().map(f).collect::<Result<_, _>>()?;
        Ok(TernaryForm { ring: target, degree: self.degree, coeffs })
    }
}

/// `w1 x1 + w2 x2 + w3 x3`.
#[derive(Clone, PartialEq, Debug)]
pub struct LinearForm<R: Ring>(pub [R::Elem; 3]);

impl<R: Ring> LinearForm<R> {
    pub fn is_zero(&self, ring: &R) -> bool {
        self.0.iter().all(|c| ring.is_zero(c))
    }
}

/// Cross product `a × b`; with `a, b` two lines, this is their common point.
pub fn cross<R: Ring>(ring: &R, a: &[R::Elem; 3], b: &[R::Elem; 3]) -> [R::Elem; 3] {
    let m = |x: &R::Elem, y: &R::Elem, z: &R::Elem, w: &R::Elem| {
        ring.sub(&ring.mul(x, y), &ring.mul(z, w))
    };
    [
        m(&a[1], &b[2], &a[2], &b[1]),
        m(&a[2], &b[0], &a[0], &b[2]),
        m(&a[0], &b[1], &a[1], &b[0]),
    ]
}

/// A plane curve of degree `r >= 4`.
#[derive(Clone, PartialEq, Debug)]
pub struct PlaneCurve<R: Ring> {
    form: TernaryForm<R>,
}

impl<R: Ring> PlaneCurve<R> {
    pub fn new(form: TernaryForm<R>) -> Result<Self, CurveError> {
        if form.degree() < 4 {
            return Err(CurveError::Degree(format!("curve degree {} < 4", form.degree())));
        }
        Ok(Self { form })
    }

    pub fn zero(ring: R, r: u32) -> Result<Self, CurveError> {
        Self::new(TernaryForm::zero(ring, r))
    }

    /// Curve from a sparse `(i,j,k) -> C_ijk` map; missing slots are zero.
    pub fn from_map(ring: R, r: u32, coeffs: &BTreeMap<[u8; 3], R::Elem>) -> Result<Self, CurveError> {
        let mut form = TernaryForm::zero(ring, r);
        for (e, c) in coeffs {
            if e.iter().map(|&x| x as u32).sum::<u32>() != r {
                return Err(CurveError::Degree(format!("slot {e:?} does not sum to {r}")));
            }
            form.set(*e, c.clone());
        }
        Self::new(form)
    }

    pub fn degree(&self) -> u32 {
        self.form.degree()
    }

    pub fn ring(&self) -> &R {
        self.form.ring()
    }

    pub fn form(&self) -> &TernaryForm<R> {
        &self.form
    }

    pub fn coeff(&self, e: [u8; 3]) -> &R::Elem {
        self.form.coeff(e)
    }

    /// All `(r+1)(r+2)/2` slots with their values, zeros included.
    pub fn slots(&self) -> impl Iterator<Item = ([u8; 3], &R::Elem)> {
        ternary_monomials(self.degree()).into_iter().zip(self.form.coeffs())
    }

    pub fn scale(&self, s: &R::Elem) -> Self {
        Self { form: self.form.scale(s) }
    }

    pub fn map_ring<S: Ring>(
        &self,
        target: S,
        f: impl Fn(&R::Elem) -> Result<S::Elem, ExactError>,
    ) -> Result<PlaneCurve<S>, ExactError> {
        Ok(PlaneCurve { form: self.form.map_ring(target, f)? })
    }
}

/// `u, h, v, w` with `P = u^4 h + v w`.
#[derive(Clone, PartialEq, Debug)]
pub struct DecompositionWitness<R: Ring> {
    pub u: LinearForm<R>,
    pub h: TernaryForm<R>,
    pub v: LinearForm<R>,
    pub w: TernaryForm<R>,
}

impl<R: Ring> DecompositionWitness<R> {
    /// Curve degree implied by the witness.
    pub fn degree(&self) -> Result<u32, CurveError> {
        let r = self.h.degree() + 4;
        if self.w.degree() + 1 != r {
            return Err(CurveError::Degree(format!(
                "deg h = {} needs deg w = {}, got {}",
                self.h.degree(),
                r - 1,
                self.w.degree()
            )));
        }
        Ok(r)
    }
}

/// `C_ijk = s_ijk(u, h, v, w)`: the coefficients of `u^4 h + v w`.
pub fn compose_curve<R: Ring>(wit: &DecompositionWitness<R>) -> Result<PlaneCurve<R>, CurveError> {
    wit.degree()?;
    let ring = wit.h.ring().clone();
    let u = TernaryForm::linear(ring.clone(), &wit.u);
    let v = TernaryForm::linear(ring, &wit.v);
    let form = u.pow(4).mul(&wit.h).add(&v.mul(&wit.w))?;
    PlaneCurve::new(form)
}

/// What [`tangency_oracle`] observed at `X = u × v`.
#[derive(Clone, PartialEq, Debug)]
pub struct TangencyReport<R: Ring> {
    pub point: [R::Elem; 3],
    pub value: R::Elem,
    pub gradient: [R::Elem; 3],
    /// `P(X) = 0`.
    pub on_curve: bool,
    /// `∇P(X) × v = 0`; a zero gradient counts as parallel.
    pub gradient_parallel: bool,
}

impl<R: Ring> TangencyReport<R> {
    pub fn passed(&self) -> bool {
        self.on_curve && self.gradient_parallel
    }
}

/// Check that `P = u^4 h + v w` passes through `X = u × v` with tangent
/// line `v` there.
pub fn tangency_oracle<R: Ring>(wit: &DecompositionWitness<R>) -> Result<TangencyReport<R>, CurveError> {
    let ring = wit.h.ring().clone();
    let point = cross(&ring, &wit.u.0, &wit.v.0);
    if point.iter().all(|c| ring.is_zero(c)) {
        return Err(CurveError::ParallelLines);
    }
    let curve = compose_curve(wit)?;
    let value = curve.form().eval(&point);
    let gradient = curve.form().gradient(&point);
    let gradient_parallel = cross(&ring, &gradient, &wit.v.0).iter().all(|c| ring.is_zero(c));
    Ok(TangencyReport { on_curve: ring.is_zero(&value), point, value, gradient, gradient_parallel })
}

/// Act on a curve by substitution: `(g·P)(x) = P(g x)`.
///
/// With this convention `act_linear(h, act_linear(g, P)) = act_linear(g h, P)`.
pub fn act_linear<R: Ring>(g: &[[R::Elem; 3]; 3], p: &PlaneCurve<R>) -> Result<PlaneCurve<R>, CurveError> {
    if p.ring().is_zero(&det3(p.ring(), g)) {
        return Err(CurveError::Singular);
    }
    PlaneCurve::new(p.form().substitute_linear(g))
}

pub fn det3<R: Ring>(ring: &R, g: &[[R::Elem; 3]; 3]) -> R::Elem {
    let c = cross(ring, &g[1], &g[2]);
    (0..3).fold(ring.zero(), |acc, i| ring.add(&acc, &ring.mul(&g[0][i], &c[i])))
}

pub fn mat3_mul<R: Ring>(ring: &R, a: &[[R::Elem; 3]; 3], b: &[[R::Elem; 3]; 3]) -> [[R::Elem; 3]; 3] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            (0..3).fold(ring.zero(), |acc, k| ring.add(&acc, &ring.mul(&a[i][k], &b[k][j])))
        })
    })
}

fn random_form<R: SampleRing>(ring: &R, d: u32, rng: &mut ChaCha8Rng, bound: i64) -> TernaryForm<R> {
    let n = ((d + 1) * (d + 2) / 2) as usize;
    let coeffs = (0..n).map(|_| ring.sample(rng, bound)).collect();
    TernaryForm { ring: ring.clone(), degree: d, coeffs }
}

fn random_line<R: SampleRing>(ring: &R, rng: &mut ChaCha8Rng, bound: i64) -> LinearForm<R> {
    loop {
        let l = LinearForm([(); 3].map(|_| ring.sample(rng, bound)));
        if !l.is_zero(ring) {
            return l;
        }
    }
}

/// Random curve; integer coefficients in `[-bound, bound]` over the
/// rationals, uniform residues over a prime field. Deterministic per seed.
pub fn random_curve<R: SampleRing>(r: u32, ring: &R, seed: u64, bound: i64) -> Result<PlaneCurve<R>, CurveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PlaneCurve::new(random_form(ring, r, &mut rng, bound))
}

/// Random witness with `u` not proportional to `v`, and the curve it
/// composes to.
pub fn random_undulation_curve<R: SampleRing>(
    r: u32,
    ring: &R,
    seed: u64,
    bound: i64,
) -> Result<(PlaneCurve<R>, DecompositionWitness<R>), CurveError> {
    if r < 4 {
        return Err(CurveError::Degree(format!("curve degree {r} < 4")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x756e_6475_6c61_7465);
    let v = random_line(ring, &mut rng, bound);
    let u = loop {
        let u = random_line(ring, &mut rng, bound);
        if !cross(ring, &u.0, &v.0).iter().all(|c| ring.is_zero(c)) {
            break u;
        }
    };
    let h = random_form(ring, r - 4, &mut rng, bound);
    let w = random_form(ring, r - 1, &mut rng, bound);
    let wit = DecompositionWitness { u, h, v, w };
    Ok((compose_curve(&wit)?, wit))
}

/// On-disk curve: `{"format":1,"r":4,"coeffs":{"i,j,k":"num/den",...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFile {
    #[serde(default = "format_one")]
    pub format: u32,
    pub r: u32,
    #[serde(default)]
    pub coeffs: BTreeMap<String, String>,
}

/// On-disk witness: lines as three strings, forms as sparse coefficient maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessFile {
    #[serde(default = "format_one")]
    pub format: u32,
    pub r: u32,
    pub u: [String; 3],
    pub h: BTreeMap<String, String>,
    pub v: [String; 3],
    pub w: BTreeMap<String, String>,
}

fn format_one() -> u32 {
    1
}

fn slot_key(e: [u8; 3]) -> String {
    format!("{},{},{}", e[0], e[1], e[2])
}

fn parse_slot(key: &str) -> Result<[u8; 3], CurveError> {
    let parts: Vec<&str> = key.split(',').map(str::trim).collect();
    let bad = || CurveError::Format(format!("bad exponent key {key:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut e = [0u8; 3];
    for (a, p) in parts.iter().enumerate() {
        e[a] = p.parse().map_err(|_| bad())?;
    }
    Ok(e)
}

fn form_to_map(f: &TernaryForm<Rationals>) -> BTreeMap<String, String> {
    ternary_monomials(f.degree())
        .into_iter()
        .zip(f.coeffs())
        .filter(|(_, c)| !c.is_zero())
        .map(|(e, c)| (slot_key(e), format_rational(c)))
        .collect()
}

fn form_from_map(d: u32, m: &BTreeMap<String, String>) -> Result<TernaryForm<Rationals>, CurveError> {
    let mut f = TernaryForm::zero(Rationals, d);
    for (k, v) in m {
        let e = parse_slot(k)?;
        if e.iter().map(|&x| x as u32).sum::<u32>() != d {
            return Err(CurveError::Format(format!("key {k:?} is not of degree {d}")));
        }
        f.set(e, parse_rational(v)?);
    }
    Ok(f)
}

impl CurveFile {
    pub fn from_curve(c: &PlaneCurve<Rationals>) -> Self {
        Self { format: 1, r: c.degree(), coeffs: form_to_map(c.form()) }
    }

    pub fn to_curve(&self) -> Result<PlaneCurve<Rationals>, CurveError> {
        if self.format != 1 {
            return Err(CurveError::Format(format!("unsupported format {}", self.format)));
        }
        if self.r < 4 || self.r > 60 {
            return Err(CurveError::Format(format!("unsupported degree {}", self.r)));
        }
        PlaneCurve::new(form_from_map(self.r, &self.coeffs)?)
    }

    pub fn parse(text: &str) -> Result<PlaneCurve<Rationals>, CurveError> {
        let f: CurveFile = serde_json::from_str(text).map_err(|e| CurveError::Format(e.to_string()))?;
        f.to_curve()
    }
}

impl WitnessFile {
    pub fn from_witness(w: &DecompositionWitness<Rationals>) -> Result<Self, CurveError> {
        Ok(Self {
            format: 1,
            r: w.degree()?,
            u: w.u.0.clone().map(|c| format_rational(&c)),
            h: form_to_map(&w.h),
            v: w.v.0.clone().map(|c| format_rational(&c)),
            w: form_to_map(&w.w),
        })
    }

    pub fn to_witness(&self) -> Result<DecompositionWitness<Rationals>, CurveError> {
        if self.r < 4 {
            return Err(CurveError::Format(format!("unsupported degree {}", self.r)));
        }
        let line = |l: &[String; 3]| -> Result<LinearForm<Rationals>, CurveError> {
            Ok(LinearForm([parse_rational(&l[0])?, parse_rational(&l[1])?, parse_rational(&l[2])?]))
        };
        Ok(DecompositionWitness {
            u: line(&self.u)?,
            h: form_from_map(self.r - 4, &self.h)?,
            v: line(&self.v)?,
            w: form_from_map(self.r - 1, &self.w)?,
        })
    }
}

/// Exact rational 3×3 matrix helper for tests and callers.
pub fn int_matrix(m: [[i64; 3]; 3]) -> [[ExactRational; 3]; 3] {
    m.map(|row| row.map(|x| Rationals.from_i64(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::PrimeField;
    use crate::polycore::Naming;

    fn q(v: i64) -> ExactRational {
        Rationals.from_i64(v)
    }

    fn line(a: i64, b: i64, c: i64) -> LinearForm<Rationals> {
        LinearForm([q(a), q(b), q(c)])
    }

    fn form(d: u32, terms: &[([u8; 3], i64)]) -> TernaryForm<Rationals> {
        let mut f = TernaryForm::zero(Rationals, d);
        for &(e, c) in terms {
            f.set(e, q(c));
        }
        f
    }

    fn nonzero_slots(c: &PlaneCurve<Rationals>) -> Vec<([u8; 3], i64)> {
        c.slots()
            .filter(|(_, v)| !v.is_zero())
            .map(|(e, v)| (e, v.to_integer().try_into().unwrap()))
            .collect()
    }

    #[test]
    fn index_matches_enumeration() {
        for d in 0..8 {
            for (n, e) in ternary_monomials(d).into_iter().enumerate() {
                assert_eq!(ternary_index(d, e), n);
            }
        }
    }

    #[test]
    fn compose_examples() {
        let w = DecompositionWitness { u: line(1, 0, 0), h: form(0, &[([0, 0, 0], 1)]), v: line(0, 1, 0), w: TernaryForm::zero(Rationals, 3) };
        assert_eq!(nonzero_slots(&compose_curve(&w).unwrap()), vec![([4, 0, 0], 1)]);

        let w = DecompositionWitness { w: form(3, &[([3, 0, 0], 1)]), ..w };
        assert_eq!(nonzero_slots(&compose_curve(&w).unwrap()), vec![([4, 0, 0], 1), ([3, 1, 0], 1)]);

        let w = DecompositionWitness { u: line(1, 1, 0), h: form(0, &[([0, 0, 0], 1)]), v: line(0, 0, 1), w: TernaryForm::zero(Rationals, 3) };
        let c = compose_curve(&w).unwrap();
        let binom = [1, 4, 6, 4, 1];
        for (e, v) in c.slots() {
            let expect = if e[2] == 0 { binom[e[1] as usize] } else { 0 };
            assert_eq!(*v, q(expect), "{e:?}");
        }
    }

    #[test]
    fn compose_rejects_degree_mismatch() {
        let w = DecompositionWitness { u: line(1, 0, 0), h: form(0, &[]), v: line(0, 1, 0), w: form(2, &[]) };
        assert!(matches!(compose_curve(&w), Err(CurveError::Degree(_))));
    }

    #[test]
    fn tangency_examples() {
        let w = DecompositionWitness { u: line(1, 0, 0), h: form(0, &[([0, 0, 0], 1)]), v: line(0, 1, 0), w: form(3, &[([3, 0, 0], 1)]) };
        let rep = tangency_oracle(&w).unwrap();
        assert_eq!(rep.point, [q(0), q(0), q(1)]);
        assert_eq!(rep.gradient, [q(0), q(0), q(0)]);
        assert!(rep.passed());

        let w = DecompositionWitness { w: form(3, &[([0, 0, 3], 1)]), ..w };
        let rep = tangency_oracle(&w).unwrap();
        assert_eq!(rep.gradient, [q(0), q(1), q(0)]);
        assert!(rep.passed());

        let w = DecompositionWitness { u: line(0, 1, 0), ..w };
        assert_eq!(tangency_oracle(&w), Err(CurveError::ParallelLines));
    }

    #[test]
    fn tangency_detects_non_decomposed_curves() {
        // P = x1^4 + x3^4 with v = x2: X = (0,0,1) is not on P
        let u = line(1, 0, 0);
        let v = line(0, 1, 0);
        let p = form(4, &[([4, 0, 0], 1), ([0, 0, 4], 1)]);
        let x = cross(&Rationals, &u.0, &v.0);
        assert!(!p.eval(&x).is_zero());
    }

    #[test]
    fn action_examples() {
        let p = random_curve(4, &Rationals, 3, 20).unwrap();
        let id = int_matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        assert_eq!(act_linear(&id, &p).unwrap(), p);

        let lam = int_matrix([[3, 0, 0], [0, 3, 0], [0, 0, 3]]);
        assert_eq!(act_linear(&lam, &p).unwrap(), p.scale(&q(81)));

        let swap = int_matrix([[0, 1, 0], [1, 0, 0], [0, 0, 1]]);
        let s = act_linear(&swap, &p).unwrap();
        for (e, c) in p.slots() {
            assert_eq!(s.coeff([e[1], e[0], e[2]]), c);
        }

        let sing = int_matrix([[1, 2, 3], [2, 4, 6], [0, 0, 1]]);
        assert_eq!(act_linear(&sing, &p), Err(CurveError::Singular));
    }

    #[test]
    fn action_composes() {
        let p = random_curve(4, &Rationals, 8, 9).unwrap();
        let g = int_matrix([[1, 2, 0], [0, 1, -1], [3, 0, 1]]);
        let h = int_matrix([[2, 0, 1], [1, 1, 0], [0, -1, 1]]);
        let lhs = act_linear(&h, &act_linear(&g, &p).unwrap()).unwrap();
        let rhs = act_linear(&mat3_mul(&Rationals, &g, &h), &p).unwrap();
        assert_eq!(lhs, rhs);
    }

    fn random_unimodular(rng: &mut ChaCha8Rng) -> ([[ExactRational; 3]; 3], [[ExactRational; 3]; 3]) {
        use rand::Rng;
        let mut g = int_matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        let mut gi = g.clone();
        for _ in 0..rng.gen_range(1..8) {
            let i = rng.gen_range(0..3);
            let j = (i + rng.gen_range(1..3)) % 3;
            let s = rng.gen_range(-3i64..=3);
            let mut e = int_matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
            e[i][j] = q(s);
            let mut ei = int_matrix([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
            ei[i][j] = q(-s);
            g = mat3_mul(&Rationals, &g, &e);
            gi = mat3_mul(&Rationals, &ei, &gi);
        }
        (g, gi)
    }

    #[test]
    fn action_inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for s in 0..1000 {
            let p = random_curve(4, &Rationals, s, 50).unwrap();
            let (g, gi) = random_unimodular(&mut rng);
            let back = act_linear(&gi, &act_linear(&g, &p).unwrap()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn tangency_randomized() {
        let f = PrimeField::new(1_000_000_007).unwrap();
        for s in 0..1000 {
            let (_, w) = random_undulation_curve(4, &Rationals, s, 30).unwrap();
            assert!(tangency_oracle(&w).unwrap().passed());
            let (_, w) = random_undulation_curve(4, &f, s, 0).unwrap();
            assert!(tangency_oracle(&w).unwrap().passed());
        }
        for s in 0..50 {
            let (_, w) = random_undulation_curve(5, &Rationals, s, 30).unwrap();
            assert!(tangency_oracle(&w).unwrap().passed());
        }
    }

    #[test]
    fn composition_matches_symbolic_expansion() {
        // expand u^4 h + v w with MultiPoly over the x-variables
        for s in 0..50 {
            let (c, w) = random_undulation_curve(if s % 2 == 0 { 4 } else { 5 }, &Rationals, s, 10).unwrap();
            let u = TernaryForm::linear(Rationals, &w.u).to_multipoly();
            let v = TernaryForm::linear(Rationals, &w.v).to_multipoly();
            let sym = u.pow(4).mul(&w.h.to_multipoly()).unwrap().add(&v.mul(&w.w.to_multipoly()).unwrap()).unwrap();
            assert_eq!(sym, c.form().to_multipoly());
        }
    }

    #[test]
    fn random_generation_is_deterministic() {
        assert_eq!(random_curve(4, &Rationals, 7, 100).unwrap(), random_curve(4, &Rationals, 7, 100).unwrap());
        let (c, w) = random_undulation_curve(4, &Rationals, 7, 100).unwrap();
        assert_eq!(compose_curve(&w).unwrap(), c);
        assert_eq!(random_undulation_curve(4, &Rationals, 7, 100).unwrap().0, c);
        assert_ne!(random_curve(4, &Rationals, 8, 100).unwrap(), random_curve(4, &Rationals, 7, 100).unwrap());
    }

    #[test]
    fn curve_file_round_trip() {
        let (c, w) = random_undulation_curve(4, &Rationals, 2, 100).unwrap();
        let text = serde_json::to_string(&CurveFile::from_curve(&c)).unwrap();
        assert_eq!(CurveFile::parse(&text).unwrap(), c);
        let wf = WitnessFile::from_witness(&w).unwrap();
        let back: WitnessFile = serde_json::from_str(&serde_json::to_string(&wf).unwrap()).unwrap();
        assert_eq!(back.to_witness().unwrap(), w);

        let c = CurveFile::parse(r#"{"r":4,"coeffs":{"4,0,0":"1/2","0,1,3":"-3"}}"#).unwrap();
        assert_eq!(*c.coeff([4, 0, 0]), ExactRational::new(1.into(), 2.into()));
        assert_eq!(*c.coeff([0, 1, 3]), q(-3));
        assert!(c.coeff([2, 1, 1]).is_zero());
        assert_eq!(c.slots().count(), 15);

        for bad in ["", "{}", r#"{"r":3}"#, r#"{"r":4,"coeffs":{"4,0":"1"}}"#, r#"{"r":4,"coeffs":{"3,0,0":"1"}}"#, r#"{"r":4,"coeffs":{"4,0,0":"x"}}"#, r#"{"format":2,"r":4}"#] {
            assert!(CurveFile::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn multipoly_view_uses_coordinate_variables() {
        let f = form(4, &[([4, 0, 0], 1), ([3, 1, 0], -2)]);
        assert_eq!(f.to_multipoly().to_text(Naming::Standard), "x1^4 - 2*x1^3*x2");
    }
}
