//! Sparse multivariate polynomials over an exact ring, with the three
//! gradings of the undulation ideal (C-degree, v-degree and the
//! weight triple `overline_deg`).
//!
//! Text form: terms such as `-3/2*C[2,1,1]^2*v1*v3^4` joined by ` + ` / ` - `.
//! Coordinates print as `x1..x3`, the auxiliary line as `u1..u3`, and
//! parameters as `t0, t1, ...` (or as the letters `a..o` under
//! [`Naming::Letters`]).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use smallvec::SmallVec;
use thiserror::Error;

use crate::exactnum::{parse_rational, ExactError, Ring};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("ring mismatch: {0} vs {1}")]
    RingMismatch(String, String),
    #[error("no value assigned to variable {0}")]
    MissingVariable(VarId),
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// A variable of the polynomial universe.
///
/// Ordering is the documented variable order: coefficients `C[i,j,k]` first
/// (descending lexicographic in `(i,j,k)`, so `C[4,0,0]` precedes `C[3,1,0]`),
/// then parameters by index, then `v1, v2, v3`, `u1, u2, u3`, `x1, x2, x3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarId {
    C(u8, u8, u8),
    V(u8),
    U(u8),
    X(u8),
    Param(u16),
}

impl VarId {
    fn rank(&self) -> (u8, i32, i32, i32) {
        match *self {
            VarId::C(i, j, k) => (0, -(i as i32), -(j as i32), -(k as i32)),
            VarId::Param(p) => (1, p as i32, 0, 0),
            VarId::V(a) => (2, a as i32, 0, 0),
            VarId::U(a) => (3, a as i32, 0, 0),
            VarId::X(a) => (4, a as i32, 0, 0),
        }
    }

    pub fn c(t: [u8; 3]) -> Self {
        VarId::C(t[0], t[1], t[2])
    }

    fn write(&self, f: &mut impl fmt::Write, naming: Naming) -> fmt::Result {
        match *self {
            VarId::C(i, j, k) => write!(f, "C[{i},{j},{k}]"),
            VarId::V(a) => write!(f, "v{}", a + 1),
            VarId::U(a) => write!(f, "u{}", a + 1),
            VarId::X(a) => write!(f, "x{}", a + 1),
            VarId::Param(p) if naming == Naming::Letters && p < 15 => {
                write!(f, "{}", (b'a' + p as u8) as char)
            }
            VarId::Param(p) => write!(f, "t{p}"),
        }
    }
}

impl Ord for VarId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl PartialOrd for VarId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, Naming::Standard)
    }
}

/// How parameter variables are spelled in text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Naming {
    #[default]
    Standard,
    /// `Param(0..15)` spelled `a..o`.
    Letters,
}

/// A power product, stored as `(variable, exponent)` pairs sorted by
/// variable with no zero exponents.
///
/// `Ord` is graded lexicographic with the largest monomial first: a
/// `BTreeMap<Monomial, _>` iterates from the leading term downwards.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(SmallVec<[(VarId, u8); 8]>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(SmallVec::new())
    }

    pub fn var(v: VarId) -> Self {
        Self::from_pairs([(v, 1)])
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarId, u8)>) -> Self {
        let mut m = Monomial::one();
        for (v, e) in pairs {
            m.mul_var(v, e);
        }
        m
    }

    pub fn mul_var(&mut self, v: VarId, e: u8) {
        if e == 0 {
            return;
        }
        match self.0.binary_search_by(|(w, _)| w.cmp(&v)) {
            Ok(i) => self.0[i].1 += e,
            Err(i) => self.0.insert(i, (v, e)),
        }
    }

    pub fn pairs(&self) -> &[(VarId, u8)] {
        &self.0
    }

    pub fn exponent(&self, v: VarId) -> u8 {
        self.0
            .binary_search_by(|(w, _)| w.cmp(&v))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e as u32).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = SmallVec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0, self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Grading of this single monomial. Only `C` and `v` variables contribute.
    pub fn grading(&self) -> Grading {
        let mut g = Grading::default();
        for &(v, e) in &self.0 {
            let e32 = e as u32;
            match v {
                VarId::C(i, j, k) => {
                    g.deg_c += e32;
                    g.overline[0] += e32 * i as u32;
                    g.overline[1] += e32 * j as u32;
                    g.overline[2] += e32 * k as u32;
                }
                VarId::V(a) => {
                    g.deg_v += e32;
                    g.overline[a as usize] += e32;
                }
                _ => {}
            }
        }
        g
    }

    pub fn to_text(&self, naming: Naming) -> String {
        let mut s = String::new();
        for (n, &(v, e)) in self.0.iter().enumerate() {
            if n > 0 {
                s.push('*');
            }
            v.write(&mut s, naming).unwrap();
            if e > 1 {
                s.push('^');
                s.push_str(&e.to_string());
            }
        }
        s
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        // larger total degree first, then larger exponent of the earliest
        // variable where the two differ
        other.degree().cmp(&self.degree()).then_with(|| {
            let (mut i, mut j) = (0, 0);
            loop {
                match (self.0.get(i), other.0.get(j)) {
                    (None, None) => return Ordering::Equal,
                    (Some(_), None) => return Ordering::Less,
                    (None, Some(_)) => return Ordering::Greater,
                    (Some(&(va, ea)), Some(&(vb, eb))) => match va.cmp(&vb) {
                        Ordering::Less => return Ordering::Less,
                        Ordering::Greater => return Ordering::Greater,
                        Ordering::Equal if ea != eb => return eb.cmp(&ea),
                        Ordering::Equal => {
                            i += 1;
                            j += 1;
                        }
                    },
                }
            }
        })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The three gradings of a monomial or homogeneous polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Grading {
    pub deg_c: u32,
    pub deg_v: u32,
    pub overline: [u32; 3],
}

impl Grading {
    pub fn add(&self, o: &Grading) -> Grading {
        Grading {
            deg_c: self.deg_c + o.deg_c,
            deg_v: self.deg_v + o.deg_v,
            overline: [
                self.overline[0] + o.overline[0],
                self.overline[1] + o.overline[1],
                self.overline[2] + o.overline[2],
            ],
        }
    }
}

/// Result of [`MultiPoly::grade_of`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GradeReport {
    Zero,
    Homogeneous(Grading),
    /// Two monomials with different gradings.
    Inhomogeneous(Monomial, Monomial),
}

/// Sparse polynomial with coefficients in `R`; never stores zero terms.
#[derive(Clone, PartialEq)]
pub struct MultiPoly<R: Ring> {
    ring: R,
    terms: BTreeMap<Monomial, R::Elem>,
}

impl<R: Ring> fmt::Debug for MultiPoly<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiPoly[{}]({})", self.ring.tag(), self.to_text(Naming::Standard))
    }
}

impl<R: Ring> fmt::Display for MultiPoly<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(Naming::Standard))
    }
}

impl<R: Ring> MultiPoly<R> {
    pub fn zero(ring: R) -> Self {
        Self { ring, terms: BTreeMap::new() }
    }

    pub fn constant(ring: R, c: R::Elem) -> Self {
        Self::monomial(ring, Monomial::one(), c)
    }

    pub fn one(ring: R) -> Self {
        let one = ring.one();
        Self::constant(ring, one)
    }

    pub fn var(ring: R, v: VarId) -> Self {
        let one = ring.one();
        Self::monomial(ring, Monomial::var(v), one)
    }

    pub fn monomial(ring: R, m: Monomial, c: R::Elem) -> Self {
        let mut p = Self::zero(ring);
        p.add_term(m, c);
        p
    }

    pub fn from_terms(ring: R, terms: impl IntoIterator<Item = (Monomial, R::Elem)>) -> Self {
        let mut p = Self::zero(ring);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn ring(&self) -> &R {
        &self.ring
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms from the leading (graded-lex largest) monomial down.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &R::Elem)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> R::Elem {
        self.terms.get(m).cloned().unwrap_or_else(|| self.ring.zero())
    }

    pub fn add_term(&mut self, m: Monomial, c: R::Elem) {
        if self.ring.is_zero(&c) {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(old) => {
                let s = self.ring.add(old, &c);
                if self.ring.is_zero(&s) {
                    self.terms.remove(&m);
                } else {
                    *old = s;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    fn check_ring(&self, other: &Self) -> Result<(), PolyError> {
        if self.ring != other.ring {
            return Err(PolyError::RingMismatch(self.ring.tag(), other.ring.tag()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_ring(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        Self {
            ring: self.ring.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), self.ring.neg(c))).collect(),
        }
    }

    pub fn scale(&self, s: &R::Elem) -> Self {
        let mut out = Self::zero(self.ring.clone());
        for (m, c) in &self.terms {
            out.add_term(m.clone(), self.ring.mul(c, s));
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_ring(other)?;
        let mut out = Self::zero(self.ring.clone());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), self.ring.mul(ca, cb));
            }
        }
        Ok(out)
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Self {
        Self {
            ring: self.ring.clone(),
            terms: self.terms.iter().map(|(k, c)| (k.mul(m), c.clone())).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(self.ring.clone());
        for _ in 0..e {
            acc = acc.mul(self).expect("same ring");
        }
        acc
    }

    pub fn grade_of(&self) -> GradeReport {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return GradeReport::Zero;
        };
        let g = first.grading();
        for m in it {
            if m.grading() != g {
                return GradeReport::Inhomogeneous(first.clone(), m.clone());
            }
        }
        GradeReport::Homogeneous(g)
    }

    /// Evaluate with `assign` giving each variable's value.
    pub fn evaluate_with(
        &self,
        assign: impl Fn(VarId) -> Option<R::Elem>,
    ) -> Result<R::Elem, PolyError> {
        let mut cache: BTreeMap<VarId, R::Elem> = BTreeMap::new();
        let mut acc = self.ring.zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for &(v, e) in m.pairs() {
                let x = match cache.get(&v) {
                    Some(x) => x.clone(),
                    None => {
                        let x = assign(v).ok_or(PolyError::MissingVariable(v))?;
                        cache.insert(v, x.clone());
                        x
                    }
                };
                t = self.ring.mul(&t, &self.ring.pow(&x, e as u64));
            }
            acc = self.ring.add(&acc, &t);
        }
        Ok(acc)
    }

    pub fn evaluate(&self, assignment: &BTreeMap<VarId, R::Elem>) -> Result<R::Elem, PolyError> {
        self.evaluate_with(|v| assignment.get(&v).cloned())
    }

    /// Replace some variables by polynomials; other variables are kept.
    pub fn substitute(
        &self,
        subst: &impl Fn(VarId) -> Option<MultiPoly<R>>,
    ) -> Result<Self, PolyError> {
        let mut out = Self::zero(self.ring.clone());
        for (m, c) in &self.terms {
            let mut t = Self::constant(self.ring.clone(), c.clone());
            let mut kept = Monomial::one();
            for &(v, e) in m.pairs() {
                match subst(v) {
                    Some(p) => t = t.mul(&p.pow(e as u32))?,
                    None => kept.mul_var(v, e),
                }
            }
            out = out.add(&t.mul_monomial(&kept))?;
        }
        Ok(out)
    }

    /// Coefficient map into another ring.
    pub fn map_ring<S: Ring>(
        &self,
        target: S,
        f: impl Fn(&R::Elem) -> Result<S::Elem, ExactError>,
    ) -> Result<MultiPoly<S>, ExactError> {
        let mut out = MultiPoly::zero(target);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c)?);
        }
        Ok(out)
    }

    /// Split by the exponent pattern of the `v` variables:
    /// returns `v-monomial -> coefficient polynomial` (in the other variables).
    pub fn split_by_v(&self) -> BTreeMap<[u8; 3], MultiPoly<R>> {
        let mut out: BTreeMap<[u8; 3], MultiPoly<R>> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut ve = [0u8; 3];
            let mut rest = Monomial::one();
            for &(v, e) in m.pairs() {
                match v {
                    VarId::V(a) => ve[a as usize] = e,
                    _ => rest.mul_var(v, e),
                }
            }
            out.entry(ve)
                .or_insert_with(|| MultiPoly::zero(self.ring.clone()))
                .add_term(rest, c.clone());
        }
        out
    }

    pub fn to_text(&self, naming: Naming) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (n, (m, c)) in self.terms.iter().enumerate() {
            let mut coef = self.ring.format_elem(c);
            let negative = coef.starts_with('-');
            if negative {
                coef.remove(0);
            }
            if n == 0 {
                if negative {
                    s.push('-');
                }
            } else {
                s.push_str(if negative { " - " } else { " + " });
            }
            let body = m.to_text(naming);
            match (coef == "1", body.is_empty()) {
                (true, false) => s.push_str(&body),
                (_, true) => s.push_str(&coef),
                (false, false) => {
                    s.push_str(&coef);
                    s.push('*');
                    s.push_str(&body);
                }
            }
        }
        s
    }

    /// Parse the text form. Coefficients are integers or `num/den`,
    /// mapped into `ring`.
    pub fn parse(ring: R, text: &str, naming: Naming) -> Result<Self, PolyError> {
        Parser { s: text.as_bytes(), pos: 0, naming }.poly(ring)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    naming: Naming,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, PolyError> {
        Err(PolyError::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn digits(&mut self) -> Result<&str, PolyError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected digits");
        }
        Ok(std::str::from_utf8(&self.s[start..self.pos]).unwrap())
    }

    fn small(&mut self, max: u32) -> Result<u32, PolyError> {
        let d = self.digits()?.to_string();
        match d.parse::<u32>() {
            Ok(v) if v <= max => Ok(v),
            _ => self.err(format!("number {d} out of range")),
        }
    }

    fn axis(&mut self) -> Result<u8, PolyError> {
        let a = self.small(3)?;
        if a == 0 {
            return self.err("axis index must be 1..3");
        }
        Ok(a as u8 - 1)
    }

    fn variable(&mut self) -> Result<VarId, PolyError> {
        let c = self.peek().ok_or(PolyError::Parse { pos: self.pos, msg: "unexpected end".into() })?;
        self.pos += 1;
        match c {
            b'C' => {
                if !self.eat(b'[') {
                    return self.err("expected '['");
                }
                let i = self.small(255)? as u8;
                if !self.eat(b',') {
                    return self.err("expected ','");
                }
                let j = self.small(255)? as u8;
                if !self.eat(b',') {
                    return self.err("expected ','");
                }
                let k = self.small(255)? as u8;
                if !self.eat(b']') {
                    return self.err("expected ']'");
                }
                Ok(VarId::C(i, j, k))
            }
            b'v' => Ok(VarId::V(self.axis()?)),
            b'u' => Ok(VarId::U(self.axis()?)),
            b'x' => Ok(VarId::X(self.axis()?)),
            b't' if self.s.get(self.pos).is_some_and(u8::is_ascii_digit) => {
                Ok(VarId::Param(self.small(u16::MAX as u32)? as u16))
            }
            b'a'..=b'o' if self.naming == Naming::Letters => Ok(VarId::Param((c - b'a') as u16)),
            _ => {
                self.pos -= 1;
                self.err(format!("unknown variable starting with {:?}", c as char))
            }
        }
    }

    fn term<R: Ring>(&mut self, ring: &R) -> Result<(Monomial, R::Elem), PolyError> {
        let mut coef = ring.one();
        let mut mono = Monomial::one();
        loop {
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                let num = self.digits()?.to_string();
                let text = if self.eat(b'/') {
                    format!("{num}/{}", self.digits()?)
                } else {
                    num
                };
                let q = parse_rational(&text)?;
                coef = ring.mul(&coef, &ring.from_rational(&q)?);
            } else {
                let v = self.variable()?;
                let e = if self.eat(b'^') { self.small(255)? as u8 } else { 1 };
                mono.mul_var(v, e);
            }
            if !self.eat(b'*') {
                break;
            }
        }
        Ok((mono, coef))
    }

    fn poly<R: Ring>(&mut self, ring: R) -> Result<MultiPoly<R>, PolyError> {
        let mut p = MultiPoly::zero(ring.clone());
        let mut negative = self.eat(b'-');
        if !negative {
            self.eat(b'+');
        }
        if self.peek().is_none() {
            return self.err("empty polynomial");
        }
        loop {
            let (m, c) = self.term(&ring)?;
            p.add_term(m, if negative { ring.neg(&c) } else { c });
            match self.peek() {
                None => break,
                Some(b'+') => negative = false,
                Some(b'-') => negative = true,
                Some(c) => return self.err(format!("unexpected {:?}", c as char)),
            }
            self.pos += 1;
        }
        Ok(p)
    }
}

/// All exponent vectors of total degree `degree` in `nvars` variables,
/// in descending lexicographic order (graded lex with the first variable
/// largest): for three variables, `[5,0,0], [4,1,0], [4,0,1], [3,2,0], ...`.
pub fn enumerate_monomials(degree: u32, nvars: usize) -> Vec<Vec<u8>> {
    assert!(nvars >= 1, "need at least one variable");
    let mut out = Vec::new();
    let mut cur = vec![0u8; nvars];
    fn rec(pos: usize, left: u32, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left as u8;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e as u8;
            rec(pos + 1, left - e, cur, out);
        }
    }
    rec(0, degree, &mut cur, &mut out);
    out
}

/// `binomial(n, k)` as u64.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}
