//! `undulate`: evaluate the quartic undulation invariant, compute graded
//! components of the undulation ideal, and cross-check the shipped matrix.
//!
//! Exit codes: 0 success, 1 usage or input error (and failed checks),
//! 2 undulation found (with `--fail-on-undulation`), 3 computation
//! unsaturated or out of budget.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde::Serialize;
use undulation_core::curve::{random_curve, random_undulation_curve, CurveFile, WitnessFile};
use undulation_core::exactnum::{rational_reconstruction, PrimeField, Rationals, DEFAULT_PRIMES, PRIME_6361};
use undulation_core::idealgen::{
    build_constraints, cell_dims, component_basis, ComponentSpec, IdealError, Layout, SamplePolicy,
};
use undulation_core::polycore::{MultiPoly, Naming};
use undulation_core::undulation::{
    build_quintic_matrix, determinant_ratio, embedded_appendix_text, invariant_quartic, parse_appendix, pipeline_matrix,
    same_alpha_span, RatioCheck, UndulationError, UndulationMatrix, Verdict,
};

/// Largest refined cell (in unknowns) attempted without `--heavy`.
const FEASIBLE_CELL_COLUMNS: usize = 4000;

#[derive(Parser)]
#[command(name = "undulate", version, about = "Undulation invariant of plane curves")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Exact invariant of a quartic given as curve JSON.
    Invariant {
        curve: PathBuf,
        /// Exit with status 2 when the curve has an undulation.
        #[arg(long)]
        fail_on_undulation: bool,
    },
    /// Dimension of a graded component I_{n,m} (or its refined triangle).
    Dims {
        #[command(flatten)]
        comp: ComponentArgs,
        /// Print the refined dimension of every overline cell.
        #[arg(long)]
        triangle: bool,
        /// Fail unless the dimension equals this value.
        #[arg(long)]
        expect: Option<usize>,
    },
    /// Basis polynomials of a component over GF(p).
    Basis {
        #[command(flatten)]
        comp: ComponentArgs,
    },
    /// Sampled constraint matrix in triplet form.
    Dump {
        #[command(flatten)]
        comp: ComponentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an appendix file and cross-check it against the pipeline.
    Verify {
        /// Appendix file (default: the shipped copy).
        #[arg(long)]
        appendix: Option<PathBuf>,
        /// Primes for the modular checks (repeatable).
        #[arg(long = "prime")]
        primes: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluation curves for the determinant ratio.
        #[arg(long, default_value_t = 20)]
        curves: usize,
        /// Sampled membership constraints per polynomial and prime.
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Generate a test curve (and witness for undulation curves).
    Gen {
        #[arg(value_enum)]
        kind: GenKind,
        #[arg(short, long, default_value_t = 4)]
        r: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coefficient bound (witness entries for undulation curves).
        #[arg(long)]
        bound: Option<i64>,
        /// Curve output (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Witness output (default: `<out>.witness.json`).
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Build the 36x36 quintic matrix over GF(p). Very long-running.
    Quintic {
        #[arg(long)]
        heavy: bool,
        #[arg(long, default_value_t = PRIME_6361)]
        prime: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop starting new cells after this many seconds.
        #[arg(long)]
        budget_secs: Option<u64>,
        /// Progress file; rerun with the same path to resume.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the matrix rows here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Random,
    Undulation,
}

#[derive(Args)]
struct ComponentArgs {
    /// Curve degree.
    #[arg(short, default_value_t = 4)]
    r: u32,
    /// C-degree.
    #[arg(short)]
    n: u32,
    /// v-degree.
    #[arg(short)]
    m: u32,
    /// Single overline cell `m1,m2,m3` instead of the whole component.
    #[arg(long, value_parser = parse_cell)]
    refined: Option<[u32; 3]>,
    /// Primes (repeatable); results must agree across all of them.
    #[arg(long = "prime")]
    primes: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial sample rows as a multiple of the unknown count.
    #[arg(long, default_value_t = 1.25)]
    oversampling: f64,
    /// Allow systems beyond the desk-scale envelope.
    #[arg(long)]
    heavy: bool,
}

fn parse_cell(s: &str) -> Result<[u32; 3], String> {
    let parts: Vec<u32> = s.split(',').map(|t| t.trim().parse().map_err(|_| format!("bad cell {s:?}"))).collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("cell needs three entries: {s:?}"))
}

/// Error with the exit status it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }
}

impl From<IdealError> for Failure {
    fn from(e: IdealError) -> Self {
        let code = match e {
            IdealError::Unsaturated { .. } | IdealError::BudgetExhausted { .. } => 3,
            _ => 1,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<UndulationError> for Failure {
    fn from(e: UndulationError) -> Self {
        match e {
            UndulationError::Ideal(inner) => inner.into(),
            other => Self::input(other.to_string()),
        }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let fmt = cli.format;
    let res = match cli.cmd {
        Command::Invariant { curve, fail_on_undulation } => cmd_invariant(&curve, fail_on_undulation, fmt),
        Command::Dims { comp, triangle, expect } => cmd_dims(&comp, triangle, expect, fmt),
        Command::Basis { comp } => cmd_basis(&comp, fmt),
        Command::Dump { comp, out } => cmd_dump(&comp, out.as_deref()),
        Command::Verify { appendix, primes, seed, curves, points } => {
            cmd_verify(appendix.as_deref(), &primes, seed, curves, points)
        }
        Command::Gen { kind, r, seed, bound, out, witness } => cmd_gen(kind, r, seed, bound, out.as_deref(), witness.as_deref()),
        Command::Quintic { heavy, prime, seed, budget_secs, checkpoint, out } => {
            cmd_quintic(heavy, prime, seed, budget_secs, checkpoint.as_deref(), out.as_deref())
        }
    };
    match res {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                // a closed pipe (`| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::input(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

/// Rational preimages of GF(p) coefficients, when every coefficient has
/// one of small height.
fn lift(poly: &MultiPoly<PrimeField>) -> Option<MultiPoly<Rationals>> {
    let m = BigUint::from(poly.ring().modulus());
    let terms = poly
        .terms()
        .map(|(mono, c)| Some((mono.clone(), rational_reconstruction(&BigUint::from(*c), &m)?)))
        .collect::<Option<Vec<_>>>()?;
    Some(MultiPoly::from_terms(Rationals, terms))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn cmd_invariant(path: &Path, fail_on_undulation: bool, fmt: Format) -> Outcome {
    let curve = CurveFile::parse(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let report = invariant_quartic(&curve)?;
    let file = report.to_file();
    match fmt {
        Format::Json => print!("{}", to_json(&file)),
        Format::Text => {
            println!("value   {}", file.value);
            println!("verdict {}", if report.verdict == Verdict::Zero { "zero" } else { "nonzero" });
            for l in &file.lines {
                println!("line    {} {} {}", l[0], l[1], l[2]);
            }
            if let Some(d) = &file.diagnostic {
                println!("note    {d}");
            }
        }
    }
    if fail_on_undulation && report.verdict == Verdict::Zero {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn primes_or_default(primes: &[u64]) -> Vec<u64> {
    if primes.is_empty() {
        DEFAULT_PRIMES.to_vec()
    } else {
        primes.to_vec()
    }
}

fn specs(c: &ComponentArgs) -> Result<Vec<ComponentSpec>, Failure> {
    primes_or_default(&c.primes)
        .into_iter()
        .map(|p| {
            let mut s = match c.refined {
                Some(cell) => ComponentSpec::refined(c.r, c.n, c.m, cell, p, c.seed)?,
                None => ComponentSpec::total(c.r, c.n, c.m, p, c.seed)?,
            };
            s.policy = SamplePolicy { oversampling: c.oversampling, seed: c.seed };
            s.validate()?;
            Ok(s)
        })
        .collect()
}

fn check_envelope(c: &ComponentArgs) -> Result<(), Failure> {
    if c.heavy {
        return Ok(());
    }
    let layout = Layout::new(c.r, c.n, c.m);
    let largest = match c.refined {
        Some(cell) => layout.cell_columns(cell).len(),
        None => layout.cells().iter().map(|&cell| layout.cell_columns(cell).len()).max().unwrap_or(0),
    };
    if largest > FEASIBLE_CELL_COLUMNS {
        return Err(Failure::input(format!(
            "largest cell has {largest} unknowns (limit {FEASIBLE_CELL_COLUMNS}); rerun with --heavy"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct DimsOutput {
    format: u32,
    r: u32,
    n: u32,
    m: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    refined: Option<[u32; 3]>,
    primes: Vec<u64>,
    seed: u64,
    dim: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    cells: Vec<CellDim>,
}

#[derive(Serialize)]
struct CellDim {
    cell: [u32; 3],
    dim: usize,
}

fn cmd_dims(c: &ComponentArgs, triangle: bool, expect: Option<usize>, fmt: Format) -> Outcome {
    check_envelope(c)?;
    let specs = specs(c)?;
    let mut found: Option<std::collections::BTreeMap<[u32; 3], usize>> = None;
    for s in &specs {
        let cells = cell_dims(s)?;
        match &found {
            Some(prev) if prev != &cells => {
                return Err(Failure::input(format!("primes disagree: {} vs {}", specs[0].prime, s.prime)));
            }
            _ => found = Some(cells),
        }
    }
    let cells = found.unwrap_or_default();
    let dim: usize = cells.values().sum();
    let out = DimsOutput {
        format: 1,
        r: c.r,
        n: c.n,
        m: c.m,
        refined: c.refined,
        primes: specs.iter().map(|s| s.prime).collect(),
        seed: c.seed,
        dim,
        cells: if triangle { cells.iter().map(|(&cell, &dim)| CellDim { cell, dim }).collect() } else { Vec::new() },
    };
    match fmt {
        Format::Json => write_or_print(None, &to_json(&out))?,
        Format::Text => {
            let mut s = String::new();
            if triangle {
                for CellDim { cell, dim } in &out.cells {
                    writeln!(s, "[{},{},{}] {dim}", cell[0], cell[1], cell[2]).unwrap();
                }
            }
            let primes: Vec<String> = out.primes.iter().map(u64::to_string).collect();
            writeln!(s, "dim I_{{{},{}}} (r={}) = {dim}   primes {}  seed {}", c.n, c.m, c.r, primes.join(","), c.seed).unwrap();
            write_or_print(None, &s)?;
        }
    }
    match expect {
        Some(k) if k != dim => Err(Failure::input(format!("expected dimension {k}, got {dim}"))),
        _ => Ok(ExitCode::SUCCESS),
    }
}

#[derive(Serialize)]
struct BasisOutput {
    format: u32,
    r: u32,
    n: u32,
    m: u32,
    prime: u64,
    seed: u64,
    /// `rational` when every coefficient was lifted back to Q.
    coefficients: &'static str,
    polys: Vec<String>,
}

fn cmd_basis(c: &ComponentArgs, fmt: Format) -> Outcome {
    check_envelope(c)?;
    let spec = specs(c)?.remove(0);
    let basis = component_basis(&spec)?;
    let modular = basis.polys();
    let lifted: Option<Vec<MultiPoly<Rationals>>> = modular.iter().map(lift).collect();
    let polys: Vec<String> = match &lifted {
        Some(l) => l.iter().map(|p| p.to_text(Naming::Standard)).collect(),
        None => modular.iter().map(|p| p.to_text(Naming::Standard)).collect(),
    };
    let coefficients = if lifted.is_some() { "rational" } else { "modular" };
    let text = match fmt {
        Format::Json => to_json(&BasisOutput {
            format: 1,
            r: c.r,
            n: c.n,
            m: c.m,
            prime: spec.prime,
            seed: c.seed,
            coefficients,
            polys,
        }),
        Format::Text => {
            let mut s = format!(
                "# basis of I_{{{},{}}} (r={}) over GF({}), dimension {}, {coefficients} coefficients\n",
                c.n,
                c.m,
                c.r,
                spec.prime,
                polys.len()
            );
            for p in polys {
                writeln!(s, "{p}").unwrap();
            }
            s
        }
    };
    write_or_print(None, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump(c: &ComponentArgs, out: Option<&Path>) -> Outcome {
    check_envelope(c)?;
    let spec = specs(c)?.remove(0);
    write_or_print(out, &build_constraints(&spec)?.to_triplets())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(appendix: Option<&Path>, primes: &[u64], seed: u64, curves: usize, points: usize) -> Outcome {
    let text = match appendix {
        Some(p) => read(p)?,
        None => embedded_appendix_text().to_string(),
    };
    let primes = primes_or_default(primes);
    for &p in &primes {
        PrimeField::new(p).map_err(|e| Failure::input(e.to_string()))?;
    }
    let a = parse_appendix(&text).map_err(|e| Failure::input(format!("load: {e}")))?;
    println!("PASS load: checksum {}", a.checksum);
    let mut failed = Vec::new();
    match a.validate(&primes, points, seed) {
        Ok(checks) => checks.iter().for_each(|c| println!("PASS {}: {}", c.name, c.detail)),
        Err(e) => {
            println!("FAIL validation: {e}");
            failed.push("validation".to_string());
        }
    }
    for &p in &primes {
        let field = PrimeField::new(p).expect("checked");
        let pipe = pipeline_matrix(p, seed)?;
        let app: UndulationMatrix<PrimeField> = a.matrix.reduce_mod(field)?;
        let name = format!("ratio mod {p}");
        match determinant_ratio(&pipe, &app, field, curves, seed)? {
            RatioCheck::Constant(r) => println!("PASS {name}: constant {} over {curves} curves", field.symmetric(r)),
            other => {
                println!("FAIL {name}: {other:?}");
                failed.push(name);
            }
        }
        let name = format!("alpha span mod {p}");
        if same_alpha_span(&pipe, &app)? {
            println!("PASS {name}: pipeline and appendix alpha rows agree");
        } else {
            println!("FAIL {name}");
            failed.push(name);
        }
    }
    if primes.len() == 1 {
        println!("note: single-prime checks are probabilistic, add --prime for confirmation");
    }
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Failure::input(format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_gen(kind: GenKind, r: u32, seed: u64, bound: Option<i64>, out: Option<&Path>, witness: Option<&Path>) -> Outcome {
    let bad = |e: undulation_core::curve::CurveError| Failure::input(e.to_string());
    match kind {
        GenKind::Random => {
            if !(4..=5).contains(&r) {
                return Err(Failure::input(format!("random curves are generated for r = 4 or 5, not {r}")));
            }
            let curve = random_curve(r, &Rationals, seed, bound.unwrap_or(1_000_000)).map_err(bad)?;
            write_or_print(out, &to_json(&CurveFile::from_curve(&curve)))?;
        }
        GenKind::Undulation => {
            if r != 4 {
                return Err(Failure::input(format!("undulation curves are generated for r = 4, not {r}")));
            }
            let (curve, wit) = random_undulation_curve(r, &Rationals, seed, bound.unwrap_or(50)).map_err(bad)?;
            write_or_print(out, &to_json(&CurveFile::from_curve(&curve)))?;
            let wpath = witness.map(Path::to_path_buf).or_else(|| out.map(|p| p.with_extension("witness.json")));
            let wtext = to_json(&WitnessFile::from_witness(&wit).map_err(bad)?);
            match wpath {
                Some(p) => write_or_print(Some(&p), &wtext)?,
                None => eprintln!("note: witness not written; pass --out or --witness"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_quintic(
    heavy: bool,
    prime: u64,
    seed: u64,
    budget_secs: Option<u64>,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
) -> Outcome {
    if !heavy {
        return Err(Failure::input(
            "the quintic matrix needs the I_{6,7} solve (159411-dimensional, days of CPU); pass --heavy to run it",
        ));
    }
    let deadline = budget_secs.map(|s| Instant::now() + Duration::from_secs(s));
    let m = build_quintic_matrix(prime, seed, deadline, checkpoint)?;
    let mut text = format!("# quintic undulation matrix over GF({prime}), {} rows\n", m.size());
    for (label, row) in m.labels.iter().zip(&m.rows) {
        writeln!(text, "{label} : {}", row.to_text(Naming::Standard)).unwrap();
    }
    write_or_print(out, &text)?;
    Ok(ExitCode::SUCCESS)
}
