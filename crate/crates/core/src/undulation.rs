//! The quartic undulation invariant as a 21×21 determinant.
//!
//! Rows are `α1..α3` (spanning `I_{2,5}`) and `β1..β18` (a complement of
//! `C · I_{2,5}` inside `I_{3,5}`), expanded in the degree-5 v-monomials
//! `v1^5, v1^4 v2, v1^4 v3, ...` (descending lex). The shipped rows are
//! read from `data/appendix.txt`, written in the letters `a..o` with
//! `a = C400, b = C310/4, ..., o = C004` (each `C_ijk` divided by the
//! multinomial `4!/(i! j! k!)`).
//!
//! The determinant equals the Cayley–Salmon invariant up to one global
//! nonzero constant fixed by the row basis and column order.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smallvec::SmallVec;
use thiserror::Error;

use crate::curve::{cross, ternary_index, ternary_monomials, CurveError, LinearForm, PlaneCurve};
use crate::exactnum::{format_rational, ExactError, ExactRational, PrimeField, Rationals, Ring, DEFAULT_PRIMES};
use crate::idealgen::{
    complement_basis, component_basis, component_basis_resumable, sample_point, ComponentSpec, IdealError,
};
use crate::linalg::{bareiss_det, det_exact, det_mod, rational_kernel, DenseMatrix, LinalgError};
use crate::polycore::{binomial, GradeReport, MultiPoly, Naming, PolyError, VarId};

const APPENDIX: &str = include_str!("../data/appendix.txt");

#[derive(Debug, Error)]
pub enum UndulationError {
    #[error("appendix checksum mismatch: header says {expected}, content hashes to {found}")]
    Checksum { expected: String, found: String },
    #[error("appendix line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("transcription error in {row}: {msg}")]
    Transcription { row: String, msg: String },
    #[error("expected a plane quartic, got degree {0}")]
    NotQuartic(u32),
    #[error("matrix is nonsingular; no undulation line to recover")]
    Nonsingular,
    #[error("{0}")]
    Matrix(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Ideal(#[from] IdealError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Letters `a..o` against the quartic slots `C_ijk`: letter `t` is
/// `C_{slot t} / scale t`, slots in descending lex order.
pub struct LetterMap;

impl LetterMap {
    pub fn slot(letter: usize) -> [u8; 3] {
        ternary_monomials(4)[letter]
    }

    /// `4! / (i! j! k!)`.
    pub fn scale(letter: usize) -> i64 {
        let [i, j, k] = Self::slot(letter);
        let fact = |n: u8| (1..=n as i64).product::<i64>();
        24 / (fact(i) * fact(j) * fact(k))
    }

    pub fn name(letter: usize) -> char {
        (b'a' + letter as u8) as char
    }

    /// Letter values of a quartic.
    pub fn letters<R: Ring>(curve: &PlaneCurve<R>) -> Result<Vec<R::Elem>, UndulationError> {
        if curve.degree() != 4 {
            return Err(UndulationError::NotQuartic(curve.degree()));
        }
        let ring = curve.ring();
        (0..15)
            .map(|t| Ok(ring.mul(curve.coeff(Self::slot(t)), &ring.inv(&ring.from_i64(Self::scale(t)))?)))
            .collect()
    }

    /// Rewrite a polynomial in letters as one in the `C_ijk`.
    pub fn to_c<R: Ring>(poly: &MultiPoly<R>) -> Result<MultiPoly<R>, UndulationError> {
        let ring = poly.ring().clone();
        let mut subst = BTreeMap::new();
        for t in 0..15 {
            let inv = ring.inv(&ring.from_i64(Self::scale(t)))?;
            subst.insert(VarId::Param(t as u16), MultiPoly::var(ring.clone(), VarId::c(Self::slot(t))).scale(&inv));
        }
        Ok(poly.substitute(&|v| subst.get(&v).cloned())?)
    }
}

/// Variable assignment for evaluating matrix entries at a quartic: letters
/// and `C_ijk` both resolve.
fn curve_assignment<R: Ring>(curve: &PlaneCurve<R>) -> Result<impl Fn(VarId) -> Option<R::Elem> + '_, UndulationError> {
    let letters = LetterMap::letters(curve)?;
    Ok(move |v: VarId| match v {
        VarId::Param(t) => letters.get(t as usize).cloned(),
        VarId::C(i, j, k) if i + j + k == 4 => Some(curve.coeff([i, j, k]).clone()),
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixSource {
    Appendix,
    Pipeline { prime: u64, seed: u64 },
}

/// Square matrix of polynomial entries; row `i` is the coefficient list of
/// row polynomial `i` over the v-monomials of degree `vdeg`.
#[derive(Debug, Clone)]
pub struct UndulationMatrix<R: Ring> {
    pub source: MatrixSource,
    pub labels: Vec<String>,
    pub kinds: Vec<RowKind>,
    /// Full row polynomials, including the v-variables.
    pub rows: Vec<MultiPoly<R>>,
    /// `entries[row][col]`, free of v.
    pub entries: Vec<Vec<MultiPoly<R>>>,
    pub vdeg: u32,
}

impl<R: Ring> UndulationMatrix<R> {
    pub fn from_rows(
        source: MatrixSource,
        labels: Vec<String>,
        kinds: Vec<RowKind>,
        rows: Vec<MultiPoly<R>>,
        vdeg: u32,
    ) -> Result<Self, UndulationError> {
        let ncols = ternary_monomials(vdeg).len();
        if rows.len() != ncols {
            return Err(UndulationError::Matrix(format!("{} rows for {ncols} columns", rows.len())));
        }
        let mut entries = Vec::with_capacity(rows.len());
        for (label, row) in labels.iter().zip(&rows) {
            let ring = row.ring().clone();
            let mut line = vec![MultiPoly::zero(ring); ncols];
            for (e, coeff) in row.split_by_v() {
                if e.iter().map(|&x| x as u32).sum::<u32>() != vdeg {
                    return Err(UndulationError::Matrix(format!("{label} is not of v-degree {vdeg}")));
                }
                line[ternary_index(vdeg, e)] = coeff;
            }
            entries.push(line);
        }
        Ok(Self { source, labels, kinds, rows, entries, vdeg })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// Substitute a quartic's coefficients into every entry.
    pub fn assemble(&self, curve: &PlaneCurve<R>) -> Result<DenseMatrix<R::Elem>, UndulationError> {
        let assign = curve_assignment(curve)?;
        let rows = self
            .entries
            .iter()
            .map(|line| line.iter().map(|e| e.evaluate_with(&assign)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DenseMatrix::from_rows(rows)?)
    }

    /// deg_C of the nonzero entries of each row (`None` if mixed).
    pub fn row_degrees(&self) -> Vec<Option<u32>> {
        self.entries
            .iter()
            .map(|line| {
                let mut degs = line
                    .iter()
                    .flat_map(|e| e.terms().map(|(m, _)| m.pairs().iter().map(|&(_, x)| x as u32).sum::<u32>()));
                let first = degs.next()?;
                degs.all(|d| d == first).then_some(first)
            })
            .collect()
    }
}

impl UndulationMatrix<Rationals> {
    pub fn reduce_mod(&self, field: PrimeField) -> Result<UndulationMatrix<PrimeField>, UndulationError> {
        let map = |p: &MultiPoly<Rationals>| p.map_ring(field, |q| field.reduce_rational(q));
        Ok(UndulationMatrix {
            source: self.source,
            labels: self.labels.clone(),
            kinds: self.kinds.clone(),
            rows: self.rows.iter().map(map).collect::<Result<_, _>>()?,
            entries: self
                .entries
                .iter()
                .map(|l| l.iter().map(map).collect::<Result<Vec<_>, _>>())
                .collect::<Result<_, _>>()?,
            vdeg: self.vdeg,
        })
    }
}

/// Parsed appendix: `φ` and the 21 matrix rows, in letters.
#[derive(Debug, Clone)]
pub struct Appendix {
    pub phi: MultiPoly<Rationals>,
    pub matrix: UndulationMatrix<Rationals>,
    pub checksum: String,
}

/// One named validation step and its outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub detail: String,
}

fn body_hash(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// Parse an appendix file and verify its checksum; no algebraic checks.
///
/// Format: `#` header lines, one of which is `# sha256 <hex>` over the
/// data lines (each terminated by `\n`); data lines are
/// `phi 0 : <poly>`, `alpha <i> : <poly>`, `beta <i> : <poly>`.
pub fn parse_appendix(text: &str) -> Result<Appendix, UndulationError> {
    let mut expected = None;
    let mut body = String::new();
    let mut parsed: Vec<(usize, String, usize, MultiPoly<Rationals>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(h) = rest.trim().strip_prefix("sha256 ") {
                expected = Some(h.trim().to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        body.push_str(line);
        body.push('\n');
        let fmt = |msg: &str| UndulationError::Format { line: lineno, msg: msg.to_string() };
        let (head, poly) = line.split_once(':').ok_or_else(|| fmt("missing ':'"))?;
        let mut words = head.split_whitespace();
        let tag = words.next().ok_or_else(|| fmt("missing row tag"))?.to_string();
        let idx: usize = words.next().and_then(|w| w.parse().ok()).ok_or_else(|| fmt("missing row index"))?;
        let poly = MultiPoly::parse(Rationals, poly, Naming::Letters).map_err(|e| fmt(&e.to_string()))?;
        parsed.push((lineno, tag, idx, poly));
    }
    let found = body_hash(&body);
    let expected = expected.ok_or(UndulationError::Format { line: 0, msg: "no sha256 header".into() })?;
    if expected != found {
        return Err(UndulationError::Checksum { expected, found });
    }
    let mut want: Vec<(&str, usize)> = vec![("phi", 0)];
    want.extend((1..=3).map(|i| ("alpha", i)));
    want.extend((1..=18).map(|i| ("beta", i)));
    if parsed.len() != want.len() {
        return Err(UndulationError::Format { line: 0, msg: format!("{} data lines, expected 22", parsed.len()) });
    }
    for ((lineno, tag, idx, _), (wt, wi)) in parsed.iter().zip(&want) {
        if tag != wt || idx != wi {
            return Err(UndulationError::Format { line: *lineno, msg: format!("expected {wt} {wi}, found {tag} {idx}") });
        }
    }
    let mut it = parsed.into_iter();
    let phi = it.next().unwrap().3;
    let (labels, kinds, rows): (Vec<_>, Vec<_>, Vec<_>) = it
        .map(|(_, tag, idx, p)| {
            let kind = if tag == "alpha" { RowKind::Alpha } else { RowKind::Beta };
            (format!("{tag} {idx}"), kind, p)
        })
        .fold((vec![], vec![], vec![]), |mut acc, (l, k, p)| {
            acc.0.push(l);
            acc.1.push(k);
            acc.2.push(p);
            acc
        });
    let matrix = UndulationMatrix::from_rows(MatrixSource::Appendix, labels, kinds, rows, 5)?;
    Ok(Appendix { phi, matrix, checksum: found })
}

impl Appendix {
    /// Algebraic validation: `αi = vi φ`, gradings, entry degrees, and
    /// membership in the ideal at `points` sampled points per prime.
    pub fn validate(&self, primes: &[u64], points: usize, seed: u64) -> Result<Vec<Check>, UndulationError> {
        let mut checks = Vec::new();
        let m = &self.matrix;
        let bad = |row: &str, msg: String| UndulationError::Transcription { row: row.to_string(), msg };
        for a in 0..3 {
            let expect = self.phi.mul(&MultiPoly::var(Rationals, VarId::V(a as u8)))?;
            if m.rows[a] != expect {
                return Err(bad(&m.labels[a], format!("differs from v{} * phi", a + 1)));
            }
        }
        checks.push(Check { name: "alpha_i = v_i phi".into(), detail: "3 rows".into() });

        let mut grades = Vec::new();
        for (label, (row, kind)) in m.labels.iter().zip(m.rows.iter().zip(&m.kinds)) {
            let want = if *kind == RowKind::Alpha { (2, 5) } else { (3, 5) };
            match LetterMap::to_c(row)?.grade_of() {
                GradeReport::Homogeneous(g) if (g.deg_c, g.deg_v) == want => {
                    if g.deg_v + 4 * g.deg_c != g.overline.iter().sum::<u32>() {
                        return Err(bad(label, "overline degree inconsistent with deg_C, deg_v".into()));
                    }
                    grades.push(g.overline);
                }
                GradeReport::Homogeneous(g) => {
                    return Err(bad(label, format!("grading ({}, {}), expected {want:?}", g.deg_c, g.deg_v)))
                }
                GradeReport::Inhomogeneous(a, b) => {
                    return Err(bad(label, format!("inhomogeneous: {} vs {}", a.to_text(Naming::Letters), b.to_text(Naming::Letters))))
                }
                GradeReport::Zero => return Err(bad(label, "row is zero".into())),
            }
        }
        checks.push(Check { name: "gradings".into(), detail: "alpha (2,5), beta (3,5), all overline-homogeneous".into() });

        for (label, (deg, kind)) in m.labels.iter().zip(m.row_degrees().iter().zip(&m.kinds)) {
            let want = if *kind == RowKind::Alpha { 2 } else { 3 };
            if *deg != Some(want) {
                return Err(bad(label, format!("entry degree {deg:?}, expected {want}")));
            }
        }
        checks.push(Check { name: "entry degrees".into(), detail: "alpha 2, beta 3, det degree 60".into() });

        let mut all: Vec<(&str, &MultiPoly<Rationals>)> = vec![("phi 0", &self.phi)];
        all.extend(m.labels.iter().map(String::as_str).zip(&m.rows));
        for &p in primes {
            let field = PrimeField::new(p)?;
            let inv_scale: Vec<u64> = (0..15).map(|t| field.inv(field.reduce_i64(LetterMap::scale(t)))).collect::<Result<_, _>>()?;
            let reduced: Vec<MultiPoly<PrimeField>> =
                all.iter().map(|(_, q)| q.map_ring(field, |c| field.reduce_rational(c))).collect::<Result<_, _>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ p);
            for i in 0..points {
                let pt = sample_point(field, 4, &mut rng)?;
                let assign = |v: VarId| match v {
                    VarId::Param(t) => Some(field.mul(pt.c[t as usize], inv_scale[t as usize])),
                    VarId::V(a) => Some(pt.v[a as usize]),
                    _ => None,
                };
                for ((label, _), q) in all.iter().zip(&reduced) {
                    let val = q.evaluate_with(assign)?;
                    if val != 0 {
                        return Err(bad(label, format!("membership constraint {i} mod {p} evaluates to {val}")));
                    }
                }
            }
        }
        checks.push(Check {
            name: "membership".into(),
            detail: format!("{} polynomials x {points} sampled points x {} primes", all.len(), primes.len()),
        });
        let _ = grades;
        Ok(checks)
    }
}

static EMBEDDED: OnceLock<Result<Appendix, String>> = OnceLock::new();

/// The shipped appendix, parsed and validated once per process.
pub fn load_appendix() -> Result<&'static Appendix, UndulationError> {
    EMBEDDED
        .get_or_init(|| {
            let a = parse_appendix(APPENDIX).map_err(|e| e.to_string())?;
            a.validate(&DEFAULT_PRIMES, 100, 0).map_err(|e| e.to_string())?;
            Ok(a)
        })
        .as_ref()
        .map_err(|e| UndulationError::Matrix(format!("embedded appendix: {e}")))
}

/// Parse (and validate) an appendix file from disk.
pub fn load_appendix_from(path: &Path) -> Result<Appendix, UndulationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UndulationError::Format { line: 0, msg: format!("{}: {e}", path.display()) })?;
    let a = parse_appendix(&text)?;
    a.validate(&DEFAULT_PRIMES, 100, 0)?;
    Ok(a)
}

pub fn embedded_appendix_text() -> &'static str {
    APPENDIX
}

/// Integer form of a rational matrix for fast exact evaluation: each row's
/// entries share a denominator and a C-degree.
struct Compiled {
    rows: Vec<CompiledRow>,
}

/// Coefficient and `(slot, exponent)` factors of one term.
type Term<C> = (C, SmallVec<[(u8, u8); 3]>);

struct CompiledRow {
    den: BigInt,
    degree: u32,
    entries: Vec<Vec<Term<BigInt>>>,
}

impl Compiled {
    fn new(m: &UndulationMatrix<Rationals>) -> Result<Self, UndulationError> {
        let mut rows = Vec::new();
        for (label, line) in m.labels.iter().zip(&m.entries) {
            let mut terms: Vec<Vec<Term<ExactRational>>> = Vec::new();
            let mut degree = None;
            for e in line {
                let mut out = Vec::new();
                for (mono, c) in e.terms() {
                    let mut q = c.clone();
                    let mut vars = SmallVec::new();
                    let mut d = 0;
                    for &(v, x) in mono.pairs() {
                        let slot = match v {
                            VarId::Param(t) if t < 15 => {
                                q /= ExactRational::from(BigInt::from(LetterMap::scale(t as usize)).pow(x as u32));
                                t as u8
                            }
                            VarId::C(i, j, k) if i + j + k == 4 => ternary_index(4, [i, j, k]) as u8,
                            other => return Err(UndulationError::Matrix(format!("{label}: unexpected variable {other}"))),
                        };
                        vars.push((slot, x));
                        d += x as u32;
                    }
                    if *degree.get_or_insert(d) != d {
                        return Err(UndulationError::Matrix(format!("{label}: entries of mixed degree")));
                    }
                    out.push((q, vars));
                }
                terms.push(out);
            }
            let den = terms.iter().flatten().fold(BigInt::one(), |acc, (q, _)| acc.lcm(q.denom()));
            let entries = terms
                .into_iter()
                .map(|e| e.into_iter().map(|(q, v)| (q.numer() * (&den / q.denom()), v)).collect())
                .collect();
            rows.push(CompiledRow { den, degree: degree.unwrap_or(0), entries });
        }
        Ok(Self { rows })
    }

    /// Integer matrix `N` and scale `s` with `M(P) = diag(1/s_i) N`, and
    /// `det M(P) = det N / prod s_i`.
    fn integer_matrix(&self, curve: &PlaneCurve<Rationals>) -> (DenseMatrix<BigInt>, BigInt) {
        let d = curve.slots().fold(BigInt::one(), |acc, (_, q)| acc.lcm(q.denom()));
        let ints: Vec<BigInt> = curve.slots().map(|(_, q)| q.numer() * (&d / q.denom())).collect();
        let pows: Vec<[BigInt; 4]> = ints.iter().map(|x| [BigInt::one(), x.clone(), x * x, x * x * x]).collect();
        let mut scale = BigInt::one();
        let rows = self
            .rows
            .iter()
            .map(|row| {
                scale *= &row.den * d.pow(row.degree);
                row.entries
                    .iter()
                    .map(|terms| {
                        let mut acc = BigInt::zero();
                        for (c, vars) in terms {
                            let mut t = c.clone();
                            for &(s, x) in vars {
                                t *= &pows[s as usize][x as usize];
                            }
                            acc += t;
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        (DenseMatrix::from_rows(rows).expect("square"), scale)
    }
}

static COMPILED: OnceLock<Result<Compiled, String>> = OnceLock::new();

fn compiled_appendix() -> Result<&'static Compiled, UndulationError> {
    COMPILED
        .get_or_init(|| {
            let a = load_appendix().map_err(|e| e.to_string())?;
            Compiled::new(&a.matrix).map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(|e| UndulationError::Matrix(e.clone()))
}

/// Substitute a rational quartic into a matrix with rational entries.
pub fn assemble(m: &UndulationMatrix<Rationals>, curve: &PlaneCurve<Rationals>) -> Result<DenseMatrix<ExactRational>, UndulationError> {
    m.assemble(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Zero,
    Nonzero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub value: ExactRational,
    pub verdict: Verdict,
    /// Verified undulation lines; only filled when the value is zero.
    pub lines: Vec<LinearForm<Rationals>>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReportFile {
    pub format: u32,
    pub value: String,
    pub verdict: Verdict,
    pub lines: Vec<[String; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl InvariantReport {
    pub fn to_file(&self) -> InvariantReportFile {
        InvariantReportFile {
            format: 1,
            value: format_rational(&self.value),
            verdict: self.verdict,
            lines: self.lines.iter().map(|l| l.0.clone().map(|c| format_rational(&c))).collect(),
            diagnostic: self.diagnostic.clone(),
        }
    }
}

/// Exact invariant of a rational quartic from the shipped matrix.
pub fn invariant_quartic(curve: &PlaneCurve<Rationals>) -> Result<InvariantReport, UndulationError> {
    if curve.degree() != 4 {
        return Err(UndulationError::NotQuartic(curve.degree()));
    }
    let (n, scale) = compiled_appendix()?.integer_matrix(curve);
    let det = bareiss_det(&n)?;
    let value = ExactRational::new(det, scale);
    if !value.is_zero() {
        return Ok(InvariantReport { value, verdict: Verdict::Nonzero, lines: Vec::new(), diagnostic: None });
    }
    // the integer matrix differs from M(P) by row scaling, so the kernels agree
    let mnum = n.map(|x| ExactRational::from(x.clone()));
    let found = undulation_line_from_kernel(&mnum, curve)?;
    Ok(InvariantReport { value, verdict: Verdict::Zero, lines: found.lines, diagnostic: found.diagnostic })
}

/// Value of the shipped determinant only, without line recovery.
pub fn invariant_value(curve: &PlaneCurve<Rationals>) -> Result<ExactRational, UndulationError> {
    if curve.degree() != 4 {
        return Err(UndulationError::NotQuartic(curve.degree()));
    }
    let (n, scale) = compiled_appendix()?.integer_matrix(curve);
    Ok(ExactRational::new(bareiss_det(&n)?, scale))
}

/// Reference path: [`assemble`] then [`det_exact`].
pub fn invariant_value_slow(m: &UndulationMatrix<Rationals>, curve: &PlaneCurve<Rationals>) -> Result<ExactRational, UndulationError> {
    Ok(det_exact(&m.assemble(curve)?)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelLines {
    pub kernel_dim: usize,
    pub lines: Vec<LinearForm<Rationals>>,
    pub diagnostic: Option<String>,
}

/// Does the binary quartic `f0 s^4 + f1 s^3 t + ... + f4 t^4` have a root
/// of multiplicity at least 4 (including `f = 0`)?
pub fn has_quadruple_root(f: &[ExactRational; 5]) -> bool {
    if f[0].is_zero() {
        return f[1].is_zero() && f[2].is_zero() && f[3].is_zero();
    }
    // f = f0 (s + r t)^4
    let r = &f[1] / (&f[0] * ExactRational::from(BigInt::from(4)));
    (2..5).all(|i| f[i] == &f[0] * ExactRational::from(BigInt::from(binomial(4, i as u64))) * num_traits::pow(r.clone(), i))
}

/// Restriction of a quartic to the line `v · x = 0`, as a binary quartic.
pub fn restrict_to_line(curve: &PlaneCurve<Rationals>, v: &LinearForm<Rationals>) -> Result<[ExactRational; 5], UndulationError> {
    let ring = Rationals;
    let e: [[ExactRational; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| ring.from_i64((i == j) as i64)));
    let dirs: Vec<[ExactRational; 3]> = e.iter().map(|ei| cross(&ring, &v.0, ei)).filter(|d| d.iter().any(|c| !c.is_zero())).collect();
    let p = dirs.first().ok_or(CurveError::Degree("zero line".into()))?.clone();
    let q = dirs
        .iter()
        .find(|d| cross(&ring, &p, d).iter().any(|c| !c.is_zero()))
        .ok_or(CurveError::Degree("degenerate line".into()))?
        .clone();
    // x = s p + t q
    let g: [[ExactRational; 3]; 3] = std::array::from_fn(|i| [p[i].clone(), q[i].clone(), ring.zero()]);
    let form = curve.form().substitute_linear(&g);
    Ok(std::array::from_fn(|i| form.coeff([(4 - i) as u8, i as u8, 0]).clone()))
}

fn primitive(v: [ExactRational; 3]) -> [ExactRational; 3] {
    let l = v.iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
    let ints: Vec<BigInt> = v.iter().map(|q| q.numer() * (&l / q.denom())).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    let sign = if ints.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) { -BigInt::one() } else { BigInt::one() };
    std::array::from_fn(|i| ExactRational::from(&ints[i] / &g * &sign))
}

/// Undulation lines from the kernel of a singular evaluated matrix.
///
/// Each kernel basis vector is tested as a degree-5 Veronese image
/// `(v^μ)_μ`: normalise by the largest pure power, read `v` off the
/// `v_a^4 v_b` entries, then compare all 21 coordinates. Lines that pass are
/// also checked to meet the curve in a point of multiplicity at least 4.
/// Irreducibility is not checked: a reducible quartic (say, containing a
/// line) can report extra lines or only a diagnostic.
pub fn undulation_line_from_kernel(
    mnum: &DenseMatrix<ExactRational>,
    curve: &PlaneCurve<Rationals>,
) -> Result<KernelLines, UndulationError> {
    let kernel = rational_kernel(mnum);
    if kernel.is_empty() {
        return Err(UndulationError::Nonsingular);
    }
    let vdeg = 5u32;
    let monos = ternary_monomials(vdeg);
    if mnum.ncols() != monos.len() {
        return Err(UndulationError::Matrix(format!("{} columns, expected {}", mnum.ncols(), monos.len())));
    }
    let pure = |a: usize| {
        let mut e = [0u8; 3];
        e[a] = vdeg as u8;
        ternary_index(vdeg, e)
    };
    let mut lines: Vec<LinearForm<Rationals>> = Vec::new();
    for x in &kernel {
        let Some(a) = (0..3).filter(|&a| !x[pure(a)].is_zero()).max_by(|&i, &j| x[pure(i)].abs().cmp(&x[pure(j)].abs()).then(j.cmp(&i))) else {
            continue;
        };
        let norm = x[pure(a)].clone();
        let v: [ExactRational; 3] = std::array::from_fn(|b| {
            if b == a {
                ExactRational::one()
            } else {
                let mut e = [0u8; 3];
                e[a] = 4;
                e[b] = 1;
                &x[ternary_index(vdeg, e)] / &norm
            }
        });
        let veronese = monos.iter().enumerate().all(|(i, e)| {
            let val = (0..3).fold(ExactRational::one(), |acc, c| acc * num_traits::pow(v[c].clone(), e[c] as usize));
            val * &norm == x[i]
        });
        if !veronese {
            continue;
        }
        let line = LinearForm(primitive(v));
        if has_quadruple_root(&restrict_to_line(curve, &line)?) && !lines.contains(&line) {
            lines.push(line);
        }
    }
    let diagnostic = if lines.is_empty() {
        Some(format!("non-Veronese kernel of dimension {}", kernel.len()))
    } else if kernel.len() > 1 {
        Some(format!("kernel of dimension {}", kernel.len()))
    } else {
        None
    };
    Ok(KernelLines { kernel_dim: kernel.len(), lines, diagnostic })
}

/// Rebuild the matrix over GF(p): `I_{2,5}` basis for the α rows, the
/// canonical complement of `C · I_{2,5}` in `I_{3,5}` for the β rows.
pub fn pipeline_matrix(prime: u64, seed: u64) -> Result<UndulationMatrix<PrimeField>, UndulationError> {
    let small = component_basis(&ComponentSpec::total(4, 2, 5, prime, seed)?)?;
    let big = component_basis(&ComponentSpec::total(4, 3, 5, prime, seed)?)?;
    let comp = complement_basis(&big, &small)?;
    let alphas = small.polys();
    let betas = comp.polys();
    let mut labels: Vec<String> = (1..=alphas.len()).map(|i| format!("alpha {i}")).collect();
    labels.extend((1..=betas.len()).map(|i| format!("beta {i}")));
    let mut kinds = vec![RowKind::Alpha; alphas.len()];
    kinds.extend(vec![RowKind::Beta; betas.len()]);
    let rows = alphas.into_iter().chain(betas).collect();
    UndulationMatrix::from_rows(MatrixSource::Pipeline { prime, seed }, labels, kinds, rows, 5)
}

/// Determinant of a GF(p) matrix evaluated at a quartic over GF(p).
pub fn det_at_mod(m: &UndulationMatrix<PrimeField>, curve: &PlaneCurve<PrimeField>) -> Result<u64, UndulationError> {
    let field = *curve.ring();
    Ok(det_mod(&m.assemble(curve)?, field)?)
}

/// Outcome of comparing two determinants over random curves mod p.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatioCheck {
    Constant(u64),
    /// The second determinant vanished at this curve.
    Degenerate { curve: usize },
    Varies { curve: usize, first: u64, found: u64 },
}

/// `det a / det b` at `count` random quartics over GF(p).
pub fn determinant_ratio(
    a: &UndulationMatrix<PrimeField>,
    b: &UndulationMatrix<PrimeField>,
    field: PrimeField,
    count: usize,
    seed: u64,
) -> Result<RatioCheck, UndulationError> {
    let mut first = None;
    for i in 0..count {
        let p = crate::curve::random_curve(4, &field, seed.wrapping_add(i as u64), 0)?;
        let (da, db) = (det_at_mod(a, &p)?, det_at_mod(b, &p)?);
        if db == 0 {
            return Ok(RatioCheck::Degenerate { curve: i });
        }
        let r = field.mul(da, field.inv(db)?);
        let f = *first.get_or_insert(r);
        if r != f || r == 0 {
            return Ok(RatioCheck::Varies { curve: i, first: f, found: r });
        }
    }
    Ok(first.map_or(RatioCheck::Degenerate { curve: 0 }, RatioCheck::Constant))
}

/// Do the α rows of two matrices span the same space? Letters are
/// rewritten in the `C_ijk` first.
pub fn same_alpha_span(a: &UndulationMatrix<PrimeField>, b: &UndulationMatrix<PrimeField>) -> Result<bool, UndulationError> {
    let alphas = |m: &UndulationMatrix<PrimeField>| -> Result<Vec<MultiPoly<PrimeField>>, UndulationError> {
        m.rows.iter().zip(&m.kinds).filter(|(_, k)| **k == RowKind::Alpha).map(|(r, _)| LetterMap::to_c(r)).collect()
    };
    let (xa, xb) = (alphas(a)?, alphas(b)?);
    let Some(first) = xa.first().or(xb.first()) else {
        return Ok(true);
    };
    let field = *first.ring();
    let monos: Vec<crate::polycore::Monomial> = xa
        .iter()
        .chain(&xb)
        .flat_map(|r| r.terms().map(|(m, _)| m.clone()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let vec_of = |r: &MultiPoly<PrimeField>| monos.iter().map(|m| r.coeff(m)).collect::<Vec<u64>>();
    let span = |rows: &[MultiPoly<PrimeField>]| {
        let mut eb = crate::linalg::EchelonBasis::new(field, monos.len());
        for r in rows {
            eb.insert(vec_of(r));
        }
        eb
    };
    let (ea, eb) = (span(&xa), span(&xb));
    Ok(ea.rank() == eb.rank() && xb.iter().all(|r| ea.contains(&vec_of(r))))
}

/// The 36×36 quintic matrix: `I_{2,7}` (15 rows) and the complement of
/// `C^4 · I_{2,7}` inside `I_{6,7}` (21 rows). The `I_{6,7}` solve is very
/// large; it stops at `deadline` and resumes from `checkpoint`.
pub fn build_quintic_matrix(
    prime: u64,
    seed: u64,
    deadline: Option<Instant>,
    checkpoint: Option<&Path>,
) -> Result<UndulationMatrix<PrimeField>, UndulationError> {
    build_matrix(5, 2, 6, 7, prime, seed, deadline, checkpoint)
}

/// Generic construction: `I_{n_small,m}` rows plus a complement inside
/// `I_{n_big,m}`; needs a square result.
#[allow(clippy::too_many_arguments)]
pub fn build_matrix(
    r: u32,
    n_small: u32,
    n_big: u32,
    m: u32,
    prime: u64,
    seed: u64,
    deadline: Option<Instant>,
    checkpoint: Option<&Path>,
) -> Result<UndulationMatrix<PrimeField>, UndulationError> {
    let small = component_basis(&ComponentSpec::total(r, n_small, m, prime, seed)?)?;
    let big = component_basis_resumable(&ComponentSpec::total(r, n_big, m, prime, seed)?, deadline, checkpoint)?;
    let comp = complement_basis(&big, &small)?;
    let alphas = small.polys();
    let betas = comp.polys();
    let mut labels: Vec<String> = (1..=alphas.len()).map(|i| format!("alpha {i}")).collect();
    labels.extend((1..=betas.len()).map(|i| format!("beta {i}")));
    let mut kinds = vec![RowKind::Alpha; alphas.len()];
    kinds.extend(vec![RowKind::Beta; betas.len()]);
    let rows = alphas.into_iter().chain(betas).collect();
    UndulationMatrix::from_rows(MatrixSource::Pipeline { prime, seed }, labels, kinds, rows, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{compose_curve, random_curve, random_undulation_curve, DecompositionWitness, TernaryForm};
    use crate::exactnum::{MERSENNE_31, MERSENNE_61};

    fn q(v: i64) -> ExactRational {
        Rationals.from_i64(v)
    }

    fn quartic(terms: &[([u8; 3], i64)]) -> PlaneCurve<Rationals> {
        let mut f = TernaryForm::zero(Rationals, 4);
        for &(e, c) in terms {
            f.set(e, q(c));
        }
        PlaneCurve::new(f).unwrap()
    }

    #[test]
    fn letter_map() {
        let scales: Vec<i64> = (0..15).map(LetterMap::scale).collect();
        assert_eq!(scales, [1, 4, 4, 6, 12, 6, 4, 12, 12, 4, 1, 4, 6, 4, 1]);
        assert_eq!(LetterMap::slot(4), [2, 1, 1]);
        assert_eq!(LetterMap::name(14), 'o');
    }

    #[test]
    fn appendix_loads_and_validates() {
        let a = load_appendix().unwrap();
        assert_eq!(a.matrix.size(), 21);
        assert_eq!(a.matrix.kinds.iter().filter(|k| **k == RowKind::Alpha).count(), 3);
        // v1^5 entry of alpha 1 is the v1^4 coefficient of phi
        let k_o = MultiPoly::parse(Rationals, "k*o - 4*l*n + 3*m^2", Naming::Letters).unwrap();
        assert_eq!(a.matrix.entries[0][0], k_o);
        let beta4 = MultiPoly::parse(Rationals, "k*m*o - m^3 - l^2*o + 2*l*m*n - k*n^2", Naming::Letters).unwrap();
        assert_eq!(a.matrix.entries[6][ternary_index(5, [4, 0, 1])], beta4);
        // alpha_i vanishes on monomials not divisible by v_i
        for (i, line) in a.matrix.entries.iter().take(3).enumerate() {
            for (col, e) in ternary_monomials(5).iter().enumerate() {
                if e[i] == 0 {
                    assert!(line[col].is_zero());
                }
            }
        }
    }

    #[test]
    fn phi_evaluation_example() {
        let a = load_appendix().unwrap();
        let mut assign = BTreeMap::new();
        for t in 0..15u16 {
            assign.insert(VarId::Param(t), q(0));
        }
        for (t, val) in [(10, 1), (14, 1), (12, 1)] {
            assign.insert(VarId::Param(t), q(val));
        }
        assign.insert(VarId::V(0), q(1));
        assign.insert(VarId::V(1), q(0));
        assign.insert(VarId::V(2), q(0));
        assert_eq!(a.phi.evaluate(&assign).unwrap(), q(4));
    }

    #[test]
    fn corrupted_appendix_is_rejected() {
        let text = embedded_appendix_text().replacen("k*o*v1^4", "k*o*v1^4 + a*v1^4", 1);
        assert!(matches!(parse_appendix(&text), Err(UndulationError::Checksum { .. })));
        // a consistent checksum over a wrong row fails algebraic validation
        let body: String = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).map(|l| format!("{l}\n")).collect();
        let fixed = text.replace(&parse_hash(&text), &body_hash(&body));
        let a = parse_appendix(&fixed).unwrap();
        assert!(matches!(a.validate(&[MERSENNE_31], 5, 0), Err(UndulationError::Transcription { .. })));
    }

    fn parse_hash(text: &str) -> String {
        text.lines().find_map(|l| l.strip_prefix("# sha256 ")).unwrap().trim().to_string()
    }

    #[test]
    fn assemble_examples() {
        let a = load_appendix().unwrap();
        let zero = PlaneCurve::zero(Rationals, 4).unwrap();
        let m = assemble(&a.matrix, &zero).unwrap();
        assert!((0..21).all(|i| (0..21).all(|j| m.get(i, j).is_zero())));
        let x4 = quartic(&[([4, 0, 0], 1)]);
        assert!(invariant_value(&x4).unwrap().is_zero());
        assert!(assemble(&a.matrix, &PlaneCurve::zero(Rationals, 5).unwrap()).is_err());

        let p = random_curve(4, &Rationals, 3, 20).unwrap();
        let m1 = assemble(&a.matrix, &p).unwrap();
        let m2 = assemble(&a.matrix, &p.scale(&q(2))).unwrap();
        for i in 0..21 {
            let f = if i < 3 { q(4) } else { q(8) };
            for j in 0..21 {
                assert_eq!(m2.get(i, j), &(m1.get(i, j) * &f));
            }
        }
    }

    #[test]
    fn fast_and_reference_determinants_agree() {
        let a = load_appendix().unwrap();
        for seed in 0..5 {
            let p = random_curve(4, &Rationals, seed, 30).unwrap();
            let p = p.scale(&ExactRational::new(BigInt::from(1), BigInt::from(seed as i64 + 2)));
            assert_eq!(invariant_value(&p).unwrap(), invariant_value_slow(&a.matrix, &p).unwrap());
        }
    }

    #[test]
    fn witness_curves_vanish_and_lines_are_recovered() {
        for seed in 0..20 {
            let (p, wit) = random_undulation_curve(4, &Rationals, seed, 50).unwrap();
            let rep = invariant_quartic(&p).unwrap();
            assert_eq!(rep.verdict, Verdict::Zero);
            assert!(rep.value.is_zero());
            assert!(
                rep.lines.iter().any(|l| cross(&Rationals, &l.0, &wit.v.0).iter().all(|c| c.is_zero())),
                "seed {seed}: {:?}",
                rep.diagnostic
            );
        }
    }

    #[test]
    fn generic_curves_do_not_vanish() {
        for seed in 0..10 {
            let p = random_curve(4, &Rationals, 1000 + seed, 1_000_000).unwrap();
            let rep = invariant_quartic(&p).unwrap();
            assert_eq!(rep.verdict, Verdict::Nonzero);
            assert!(rep.lines.is_empty());
        }
    }

    #[test]
    fn line_recovery_examples() {
        // x1^4 + x2 * w with generic w: the line is x2
        let w = TernaryForm::from_coeffs(Rationals, 3, (1..=10).map(|i| q(i * i - 7)).collect()).unwrap();
        let wit = DecompositionWitness {
            u: LinearForm([q(1), q(0), q(0)]),
            h: TernaryForm::from_coeffs(Rationals, 0, vec![q(1)]).unwrap(),
            v: LinearForm([q(0), q(1), q(0)]),
            w,
        };
        let p = compose_curve(&wit).unwrap();
        let rep = invariant_quartic(&p).unwrap();
        assert_eq!(rep.lines, vec![LinearForm([q(0), q(1), q(0)])]);
        let json = serde_json::to_value(rep.to_file()).unwrap();
        assert_eq!(json["verdict"], "zero");
        assert_eq!(json["lines"][0], serde_json::json!(["0", "1", "0"]));

        // a fourth power: every line through the point is special; must not crash
        let p = quartic(&[([4, 0, 0], 1)]);
        let rep = invariant_quartic(&p).unwrap();
        assert_eq!(rep.verdict, Verdict::Zero);
        assert!(rep.diagnostic.is_some() || !rep.lines.is_empty());

        let a = load_appendix().unwrap();
        let generic = random_curve(4, &Rationals, 77, 100).unwrap();
        let m = assemble(&a.matrix, &generic).unwrap();
        assert!(matches!(undulation_line_from_kernel(&m, &generic), Err(UndulationError::Nonsingular)));
    }

    #[test]
    fn quadruple_root_test() {
        // (s + 2t)^4
        let f = [1, 8, 24, 32, 16].map(q);
        assert!(has_quadruple_root(&f));
        assert!(has_quadruple_root(&[0, 0, 0, 0, 5].map(q)));
        assert!(has_quadruple_root(&[0, 0, 0, 0, 0].map(q)));
        assert!(!has_quadruple_root(&[1, 8, 24, 32, 17].map(q)));
        assert!(!has_quadruple_root(&[0, 0, 0, 1, 0].map(q)));
    }

    #[test]
    fn pipeline_matches_appendix_up_to_constant() {
        for prime in [MERSENNE_61, MERSENNE_31] {
            let field = PrimeField::new(prime).unwrap();
            let pipe = pipeline_matrix(prime, 1).unwrap();
            let app = load_appendix().unwrap().matrix.reduce_mod(field).unwrap();
            let mut ratio = None;
            for seed in 0..5 {
                let p = random_curve(4, &field, seed, 0).unwrap();
                let dp = det_at_mod(&pipe, &p).unwrap();
                let da = det_at_mod(&app, &p).unwrap();
                assert_ne!(da, 0);
                let r = field.mul(dp, field.inv(da).unwrap());
                assert_ne!(r, 0);
                assert_eq!(*ratio.get_or_insert(r), r);
            }
            let (p, _) = random_undulation_curve(4, &field, 9, 0).unwrap();
            assert_eq!(det_at_mod(&pipe, &p).unwrap(), 0);
            assert!(same_alpha_span(&pipe, &app).unwrap());
            let mut skewed = app.clone();
            skewed.rows[0] = skewed.rows[3].clone();
            assert!(!same_alpha_span(&pipe, &skewed).unwrap());
            assert_eq!(determinant_ratio(&pipe, &app, field, 5, 40).unwrap(), RatioCheck::Constant(ratio.unwrap()));
        }
    }

    #[test]
    fn quintic_builder_respects_budget() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("q.jsonl");
        let res = build_quintic_matrix(crate::exactnum::PRIME_6361, 0, Some(Instant::now()), Some(&ck));
        assert!(matches!(res, Err(UndulationError::Ideal(IdealError::BudgetExhausted { done: 0, .. }))), "{res:?}");
        assert!(ck.exists());
        // the same builder on quartic parameters yields a 21x21 matrix
        let m = build_matrix(4, 2, 3, 5, MERSENNE_31, 0, None, Some(&dir.path().join("r4.jsonl"))).unwrap();
        assert_eq!(m.size(), 21);
    }
}
