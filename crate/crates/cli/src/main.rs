//! `reducible`: command-line front end for lattice inspection, reduction,
//! line tensions, defect scans, link invariants and numerical oracles.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use num_rational::Rational64;
use serde_json::{json, Value};

use reducible::defects::{crossing_v0, scan_kbody};
use reducible::diagram::{build_zalpha, reduce_boundary, PortableDiagram};
use reducible::elt::{elt_curve, elt_point, v_butterfly, v_entanglement};
use reducible::gates::{
    is_dual_unitary, is_unitary, operator_schmidt_spectrum, random_chm, random_dual_unitary,
    random_unitary, CMatrix, Tolerance, TwoSiteGate,
};
use reducible::knots::{kauffman_bracket, rii_unlink, unfold_to_link};
use reducible::lattice::{
    builtin, format_rational, parse_rational, trace_worldlines, BaseGateSpec, BUILTIN_NAMES,
};
use reducible::numeric::{
    contract_z_numeric, correlation_channel, correlation_cone, predicted_z, sff, CorrelationPoint,
    GateDraw, RmtEnsemble,
};
use reducible::Error;

/// Environment variable naming the directory for relative output paths.
const OUT_DIR_VAR: &str = "REDUCIBLE_OUT_DIR";

/// Seed used when none is given; always reported on stderr.
const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(
    name = "reducible",
    version,
    about = "Completely reducible dual-unitary lattices: exact and numerical tools"
)]
struct Cli {
    /// Worker threads for parallel ensembles (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate or inspect two-site gates.
    #[command(subcommand)]
    Gate(GateCmd),
    /// Inspect base-gate lattices.
    #[command(subcommand)]
    Lattice(LatticeCmd),
    /// Reduce Z_α(m, n) with the rewrite engine.
    Reduce(ReduceArgs),
    /// Exact entanglement line tension.
    Elt(EltArgs),
    /// Defect insertion scans and the zero-velocity crossing test.
    #[command(subcommand)]
    Defects(DefectsCmd),
    /// Unfold Z₂ into a link and simplify it.
    Knot(KnotArgs),
    /// Dense numerical oracles.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Two-point correlation function on a chain.
    Correlate(CorrelateArgs),
    /// Spectral form factor of Floquet circuits.
    #[command(subcommand)]
    Sff(SffCmd),
}

/// Lattice selection shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct LatticeArg {
    /// Builtin name (e.g. `pyramid4`, `family_u:6`) or path to a lattice description file.
    lattice: String,
    /// Local dimension of the elementary qudits.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..=16))]
    d: u64,
}

impl LatticeArg {
    fn resolve(&self) -> Result<BaseGateSpec, Error> {
        resolve_lattice(&self.lattice, self.d as usize)
    }
}

fn resolve_lattice(name: &str, d: usize) -> Result<BaseGateSpec, Error> {
    let path = Path::new(name);
    if path.is_file() {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        return BaseGateSpec::from_dsl(&text)?.with_dimension(d);
    }
    builtin(name, d)
}

#[derive(Subcommand, Debug)]
enum GateCmd {
    /// Print a random gate as a JSON record.
    Random {
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..=16))]
        d: u64,
        #[arg(long, value_enum, default_value_t = GateFamily::DualUnitary)]
        kind: GateFamily,
        /// Random seed (default 0, announced on stderr).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check unitarity and dual unitarity of a gate stored as a JSON record.
    Check {
        file: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum GateFamily {
    DualUnitary,
    Unitary,
    ControlledPhase,
}

#[derive(Subcommand, Debug)]
enum LatticeCmd {
    /// List builtin lattices.
    List,
    /// Print the lattice description.
    Show(LatticeArg),
    /// Worldline velocities and multiplicities as JSON.
    Worldlines(LatticeArg),
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[command(flatten)]
    lattice: LatticeArg,
    /// Extent of the diamond along the first light-cone direction (cells).
    #[arg(long)]
    m: usize,
    /// Extent of the diamond along the second light-cone direction (cells).
    #[arg(long)]
    n: usize,
    /// Also report Z_α as a symbolic power of d.
    #[arg(long)]
    alpha_symbolic: bool,
    /// Write the rewrite trace (JSON) to this file.
    #[arg(long)]
    dump_trace: Option<PathBuf>,
    /// Write the residual diagram (portable JSON graph) to this file.
    #[arg(long)]
    dump_residual: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EltArgs {
    #[command(flatten)]
    lattice: LatticeArg,
    /// Evaluate at this velocity (`p/q`, integer or decimal) and print the exact value.
    #[arg(long, allow_hyphen_values = true)]
    v: Option<String>,
    /// Print a CSV sampling of the curve.
    #[arg(long)]
    curve: bool,
    /// Sample points for `--curve`.
    #[arg(long, default_value_t = 41)]
    points: usize,
}

#[derive(Subcommand, Debug)]
enum DefectsCmd {
    /// All stuck k-body defect configurations of Z_α(m, n).
    Scan {
        #[command(flatten)]
        lattice: LatticeArg,
        /// Extent of the diamond along the first light-cone direction (cells).
        #[arg(long)]
        m: usize,
        /// Extent of the diamond along the second light-cone direction (cells).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Zero-velocity crossing worldline test.
    V0(LatticeArg),
}

#[derive(Args, Debug)]
struct KnotArgs {
    #[command(flatten)]
    lattice: LatticeArg,
    /// Extent of the diamond along the first light-cone direction (cells).
    #[arg(long)]
    m: usize,
    /// Extent of the diamond along the second light-cone direction (cells).
    #[arg(long)]
    n: usize,
    /// Evaluate the Kauffman bracket of the simplified link.
    #[arg(long)]
    bracket: bool,
    /// Print the planar-diagram code of the unfolded link.
    #[arg(long)]
    pd: bool,
}

#[derive(Subcommand, Debug)]
enum OracleCmd {
    /// Dense Z_α(m, n) with random gates, compared with the rewrite engine.
    Z {
        #[command(flatten)]
        lattice: LatticeArg,
        /// Extent of the diamond along the first light-cone direction (cells).
        #[arg(long)]
        m: usize,
        /// Extent of the diamond along the second light-cone direction (cells).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(2..=3))]
        alpha: u32,
        /// Random seed (default 0, announced on stderr).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of independent draws.
        #[arg(long, default_value_t = 1)]
        draws: u64,
        /// Use SWAP gates instead of random ones.
        #[arg(long)]
        swaps: bool,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Backend {
    Cone,
    Channel,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Pauli {
    X,
    Y,
    Z,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    #[command(flatten)]
    lattice: LatticeArg,
    /// Leg carrying σ at time 0.
    #[arg(long)]
    start: i64,
    /// Leg carrying ρ at the final time.
    #[arg(long)]
    end: i64,
    /// Number of brickwork layers.
    #[arg(long)]
    t: usize,
    /// Chain length in composite qudits.
    #[arg(long = "L", default_value_t = 10)]
    sites: usize,
    /// Pauli operator placed at time 0.
    #[arg(long, value_enum, default_value_t = Pauli::Z)]
    sigma: Pauli,
    /// Pauli operator measured at the final time.
    #[arg(long, value_enum, default_value_t = Pauli::Z)]
    rho: Pauli,
    /// Brute-force light cone or worldline channel product.
    #[arg(long, value_enum, default_value_t = Backend::Cone)]
    backend: Backend,
    /// Random seed (default 0, announced on stderr).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum SffCmd {
    /// Average the form factor over random realizations and write CSV.
    Run {
        #[arg(long)]
        lattice: String,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..=16))]
        d: u64,
        /// Ring length in composite qudits.
        #[arg(long = "L")]
        sites: usize,
        #[arg(long, default_value_t = 30)]
        tmax: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Random seed (default 0, announced on stderr).
        #[arg(long)]
        seed: Option<u64>,
        /// CSV output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Float with at most 12 significant digits.
/// Writes to stdout, exiting quietly when the reader has gone away (e.g. `| head`).
fn emit(args: std::fmt::Arguments, newline: bool) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    let res = stdout.write_fmt(args).and_then(|_| {
        if newline {
            stdout.write_all(b"\n")
        } else {
            Ok(())
        }
    });
    if let Err(e) = res {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing output: {e}");
        std::process::exit(1);
    }
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*), false) };
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!($($arg)*), true) };
}

fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded.abs() < 1e-4 || rounded.abs() >= 1e15 {
        format!("{rounded:e}")
    } else {
        rounded.to_string()
    }
}

fn fmt_complex(z: Complex64) -> Value {
    json!({ "re": fmt_float(z.re), "im": fmt_float(z.im) })
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        eprintln!("using default seed {DEFAULT_SEED}");
        DEFAULT_SEED
    })
}

fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn write_file(p: &Path, text: &str) -> Result<(), Error> {
    let p = output_path(p);
    fs::write(&p, text)
        .map_err(|e| Error::InvalidParameter(format!("cannot write {}: {e}", p.display())))
}

fn pauli(p: Pauli) -> CMatrix {
    let (o, z, i) = (
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 1.0),
    );
    match p {
        Pauli::X => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Pauli::Z => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

fn print_json(v: &Value) {
    outln!(
        "{}",
        serde_json::to_string_pretty(v).expect("JSON values serialize")
    );
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gate(GateCmd::Random { d, kind, seed }) => {
            let (d, seed) = (d as usize, seed_or_default(seed));
            let g = match kind {
                GateFamily::DualUnitary => random_dual_unitary(d, seed)?,
                GateFamily::Unitary => random_unitary(d, seed)?,
                GateFamily::ControlledPhase => random_chm(d, seed)?.as_controlled_phase(),
            };
            outln!("{}", g.to_json()?);
        }
        Command::Gate(GateCmd::Check { file, tol }) => {
            let text = fs::read_to_string(&file)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", file.display())))?;
            let g = TwoSiteGate::from_json(&text)?;
            let tol = Tolerance::new(tol)?;
            let spectrum: Vec<String> = operator_schmidt_spectrum(&g)
                .into_iter()
                .map(fmt_float)
                .collect();
            print_json(&json!({
                "d": g.d(),
                "unitary": is_unitary(&g, tol),
                "dual_unitary": is_dual_unitary(&g, tol),
                "schmidt_spectrum": spectrum,
            }));
        }
        Command::Lattice(LatticeCmd::List) => {
            for name in BUILTIN_NAMES {
                outln!("{name}");
            }
        }
        Command::Lattice(LatticeCmd::Show(l)) => print!("{}", l.resolve()?.to_dsl()),
        Command::Lattice(LatticeCmd::Worldlines(l)) => {
            let flow = trace_worldlines(&l.resolve()?)?;
            let entries: Vec<Value> = flow
                .entries()
                .iter()
                .map(|(v, n)| json!({ "v": format_rational(*v), "n": n }))
                .collect();
            print_json(&Value::Array(entries));
        }
        Command::Reduce(a) => {
            let spec = a.lattice.resolve()?;
            let r = reduce_boundary(&build_zalpha(&spec, a.m, a.n)?);
            let mut out = json!({
                "status": r.status,
                "overlaps": r.overlaps,
                "residual_nodes": r.residual.node_count(),
            });
            if a.alpha_symbolic && r.is_fully_reduced() {
                out["z_alpha"] = json!(format!("d^(-(alpha-1)*{})", r.overlaps));
            }
            if let Some(p) = &a.dump_trace {
                write_file(p, &serde_json::to_string_pretty(&r.trace)?)?;
            }
            if let Some(p) = &a.dump_residual {
                write_file(
                    p,
                    &serde_json::to_string_pretty(&PortableDiagram::from(&r.residual))?,
                )?;
            }
            print_json(&out);
        }
        Command::Elt(a) => {
            let spec = a.lattice.resolve()?;
            let flow = trace_worldlines(&spec)?;
            if let Some(v) = &a.v {
                outln!("{}", format_rational(elt_point(&flow, parse_rational(v)?)));
            } else if a.curve {
                let curve = elt_curve(&flow);
                let span = Rational64::from_integer(3) / 2;
                outln!("v,elt,v_float,elt_float");
                for (v, e) in curve.sample(-span, span, a.points) {
                    outln!(
                        "{},{},{},{}",
                        format_rational(v),
                        format_rational(e),
                        fmt_float(ratio(v)),
                        fmt_float(ratio(e))
                    );
                }
            } else {
                let curve = elt_curve(&flow);
                let segments: Vec<Value> = curve
                    .segments()
                    .iter()
                    .map(|s| {
                        json!({
                            "from": s.from.map(format_rational),
                            "to": s.to.map(format_rational),
                            "slope": format_rational(s.slope),
                            "intercept": format_rational(s.intercept),
                        })
                    })
                    .collect();
                print_json(&json!({
                    "breakpoints": curve.breakpoints().iter().map(|&v| format_rational(v)).collect::<Vec<_>>(),
                    "segments": segments,
                    "v_entanglement": format_rational(v_entanglement(&flow)),
                    "v_butterfly": format_rational(v_butterfly(&flow)),
                }));
            }
        }
        Command::Defects(DefectsCmd::Scan { lattice, m, n, k }) => {
            let spec = lattice.resolve()?;
            let found = scan_kbody(&spec, m, n, k)?;
            let records: Vec<Value> = found
                .iter()
                .map(|o| {
                    json!({
                        "positions": o.positions,
                        "pattern": o.pattern,
                        "overlaps": o.overlaps,
                        "residual_nodes": o.residual.node_count(),
                    })
                })
                .collect();
            print_json(&Value::Array(records));
        }
        Command::Defects(DefectsCmd::V0(l)) => {
            let report = crossing_v0(&l.resolve()?)?;
            let witness = report.witness.map(|w| {
                json!({
                    "start_leg": w.start_leg,
                    "velocity": format_rational(w.velocity),
                    "period_layers": w.period_layers,
                    "periodic_path": w.periodic_path,
                })
            });
            print_json(&json!({ "crossing": report.crossing, "witness": witness }));
        }
        Command::Knot(a) => {
            let spec = a.lattice.resolve()?;
            let unfolded = unfold_to_link(&spec, a.m, a.n)?;
            if a.pd {
                out!("{}", unfolded.link);
            }
            let simplified = rii_unlink(&unfolded.link);
            let links: Vec<Value> = simplified
                .link
                .linking_numbers()
                .into_iter()
                .map(|(i, j, lk)| json!({ "components": [i, j], "linking_number": lk }))
                .collect();
            let mut out = json!({
                "crossings": unfolded.link.crossing_count(),
                "terminals": unfolded.terminals,
                "unlinked": simplified.unlinked,
                "components": simplified.components,
                "remaining_crossings": simplified.link.crossing_count(),
                "rii_moves": simplified.moves,
                "linking_numbers": links,
            });
            if a.bracket {
                let b = kauffman_bracket(&simplified.link)?;
                let (p, q) = b.evaluate_at_loop_value(spec.d() as i64)?;
                out["bracket"] = json!(b.to_string());
                out["bracket_at_d"] =
                    json!({ "constant": p.to_string(), "a_squared": q.to_string() });
            }
            print_json(&out);
        }
        Command::Oracle(OracleCmd::Z {
            lattice,
            m,
            n,
            alpha,
            seed,
            draws,
            swaps,
        }) => {
            let spec = lattice.resolve()?;
            let seed = if swaps { 0 } else { seed_or_default(seed) };
            let values: Vec<String> = (0..draws.max(1))
                .map(|k| {
                    let draw = if swaps {
                        GateDraw::Swaps
                    } else {
                        GateDraw::RandomPerCell {
                            seed: seed.wrapping_add(k),
                        }
                    };
                    contract_z_numeric(&spec, &draw, m, n, alpha).map(fmt_float)
                })
                .collect::<Result<_, _>>()?;
            let predicted = match predicted_z(&spec, m, n, alpha) {
                Ok(z) => Some(fmt_float(z)),
                Err(Error::NotReducible { .. }) => None,
                Err(e) => return Err(e),
            };
            print_json(&json!({ "z": values, "predicted": predicted }));
        }
        Command::Correlate(a) => {
            let spec = a.lattice.resolve()?;
            if spec.d() != 2 {
                return Err(Error::InvalidParameter("Pauli operators need d = 2".into()));
            }
            let draw = GateDraw::RandomPerCell {
                seed: seed_or_default(a.seed),
            };
            let point = CorrelationPoint {
                start_leg: a.start,
                end_leg: a.end,
                layers: a.t,
            };
            let (sigma, rho) = (pauli(a.sigma), pauli(a.rho));
            let c = match a.backend {
                Backend::Cone => correlation_cone(&spec, &draw, &sigma, &rho, &point, a.sites)?,
                Backend::Channel => correlation_channel(&spec, &draw, &sigma, &rho, &point)?,
            };
            print_json(&fmt_complex(c));
        }
        Command::Sff(SffCmd::Run {
            lattice,
            d,
            sites,
            tmax,
            reps,
            seed,
            out,
        }) => {
            let spec = resolve_lattice(&lattice, d as usize)?;
            let result = sff(&spec, sites, tmax, reps, seed_or_default(seed))?;
            eprintln!(
                "best-fit random-matrix ensemble: {}",
                match result.best_fit() {
                    RmtEnsemble::Cue => "CUE",
                    RmtEnsemble::Coe => "COE",
                }
            );
            let csv = result.to_csv();
            match out {
                Some(p) => write_file(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn ratio(v: Rational64) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
