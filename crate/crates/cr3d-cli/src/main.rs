//! Batch driver for the `cr3d` library.
//!
//! Five commands: `mesh` (generators), `verify` (identity suites over a
//! degree range), `infsup` (deflated Schur-complement eigenvalue problem),
//! `nspace` (macroelement nullspace dimension) and `critical` (per-edge,
//! per-apex spurious-mode and elimination certificates).
//!
//! Output contract: reports go to stdout (or `--out`) as single-line JSON
//! with fixed field order and 17-significant-digit floats, so identical
//! configurations produce byte-identical bytes; stderr carries only a JSON
//! error object.  Exit codes: 0 all checks passed, 1 a check failed, 2
//! configuration or computation error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cr3d::assembly::{assemble_with_margin, AssembledSystem, MatrixKind};
use cr3d::fespace::{FeSpace, Space};
use cr3d::mesh::{generate, CriticalKind, Mesh, MeshKind};
use cr3d::report;
use cr3d::stability::{
    build_critical_pressure, certify_elimination, certify_spurious, infsup_constant, nspace_dim,
    EliminationCertificate, Pair,
};

mod suites;

#[derive(Parser)]
#[command(name = "cr3d", version, about = "Crouzeix-Raviart Stokes elements: meshes, verification suites, inf-sup constants, critical-edge certificates")]
struct Cli {
    /// Coplanarity tolerance for critical-edge detection.
    #[arg(long, global = true, default_value_t = 1e-9, value_name = "TOL", allow_negative_numbers = true)]
    tol_coplanar: f64,
    /// Relative threshold for rank cuts and spurious-pairing checks.
    #[arg(long, global = true, default_value_t = 1e-10, value_name = "TOL", allow_negative_numbers = true)]
    tol_rank: f64,
    /// Acceptable relative residual of reported eigenpairs.
    #[arg(long, global = true, default_value_t = 1e-9, value_name = "TOL", allow_negative_numbers = true)]
    tol_eig: f64,
    /// Quadrature exactness margin on top of the 2k default.
    #[arg(long, global = true, default_value_t = 2, value_name = "N")]
    quad_degree_margin: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh and write it as JSON.
    Mesh(MeshArgs),
    /// Run a verification suite over a degree range.
    Verify(VerifyArgs),
    /// Compute the inf-sup constant of a discrete Stokes pair.
    Infsup(InfsupArgs),
    /// Compute the macroelement nullspace dimension.
    Nspace(NspaceArgs),
    /// Certify spurious pressure modes and their elimination per critical
    /// edge and apex.
    Critical(CriticalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Generator {
    /// The reference tetrahedron.
    Reference,
    /// n^3 cubes, each split into six tetrahedra sharing the main diagonal.
    Kuhn,
    /// Four tetrahedra around an interior critical edge.
    InnerCriticalPatch,
    /// A path of iota tetrahedra around a boundary critical edge.
    OuterCriticalPatch,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PairArg {
    /// Nonconforming Crouzeix-Raviart velocities.
    Cr,
    /// Conforming Lagrange velocities.
    Conforming,
}

impl From<PairArg> for Pair {
    fn from(p: PairArg) -> Pair {
        match p {
            PairArg::Cr => Pair::Cr,
            PairArg::Conforming => Pair::Conforming,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MatrixArg {
    Stiffness,
    Divergence,
    PressureMass,
}

impl From<MatrixArg> for MatrixKind {
    fn from(m: MatrixArg) -> MatrixKind {
        match m {
            MatrixArg::Stiffness => MatrixKind::Stiffness,
            MatrixArg::Divergence => MatrixKind::Divergence,
            MatrixArg::PressureMass => MatrixKind::PressureMass,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

/// Inclusive integer range, written `2..8` or as a single value `3`.
#[derive(Clone, Copy, Debug)]
pub struct DegreeRange {
    pub lo: usize,
    pub hi: usize,
}

impl DegreeRange {
    pub fn iter(self) -> impl Iterator<Item = usize> {
        self.lo..=self.hi
    }
}

fn parse_range(s: &str) -> Result<DegreeRange, String> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (
            a.trim().parse::<usize>().map_err(|e| format!("bad range start {a:?}: {e}"))?,
            b.trim().parse::<usize>().map_err(|e| format!("bad range end {b:?}: {e}"))?,
        ),
        None => {
            let v = s.trim().parse::<usize>().map_err(|e| format!("bad degree {s:?}: {e}"))?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(format!("range {s:?} is empty"));
    }
    Ok(DegreeRange { lo, hi })
}

#[derive(Args)]
struct MeshArgs {
    /// Generator to run.
    #[arg(long, value_enum, value_name = "NAME")]
    gen: Generator,
    /// Cubes per edge for the kuhn generator.
    #[arg(long, default_value_t = 1, value_name = "N")]
    n: usize,
    /// Path length for the outer-critical-patch generator (1..=3).
    #[arg(long, default_value_t = 1, value_name = "IOTA")]
    iota: usize,
    /// Output path (stdout if omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Mesh input shared by the analysis commands: a JSON file or a generator.
#[derive(Args)]
struct MeshSource {
    /// Path to a mesh JSON file ({"vertices": [...], "tets": [...]}).
    #[arg(long, value_name = "PATH", conflicts_with = "gen")]
    mesh: Option<PathBuf>,
    /// Built-in generator instead of a file.
    #[arg(long, value_enum, value_name = "NAME")]
    gen: Option<Generator>,
    /// Cubes per edge for the kuhn generator.
    #[arg(long, default_value_t = 1, value_name = "N")]
    n: usize,
    /// Path length for the outer-critical-patch generator (1..=3).
    #[arg(long, default_value_t = 1, value_name = "IOTA")]
    iota: usize,
}

impl MeshSource {
    fn resolve(&self) -> Result<Mesh, Failure> {
        match (&self.mesh, self.gen) {
            (Some(path), None) => {
                let text = fs::read_to_string(path)?;
                Ok(Mesh::from_json_str(&text)?)
            }
            (None, Some(gen)) => Ok(generate(mesh_kind(gen, self.n, self.iota))?),
            _ => Err(Failure::Config("exactly one of --mesh and --gen is required".into())),
        }
    }
}

fn mesh_kind(gen: Generator, n: usize, iota: usize) -> MeshKind {
    match gen {
        Generator::Reference => MeshKind::Reference,
        Generator::Kuhn => MeshKind::KuhnCube(n),
        Generator::InnerCriticalPatch => MeshKind::InnerCriticalPatch,
        Generator::OuterCriticalPatch => MeshKind::OuterCriticalPatch(iota),
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Identity suite to run.
    #[arg(long, value_enum, value_name = "NAME")]
    suite: suites::Suite,
    /// Degree range, e.g. 1..6 (inclusive).
    #[arg(long, value_parser = parse_range, default_value = "1..4", value_name = "RANGE")]
    k: DegreeRange,
    /// Dimension range for the appendix-a suite.
    #[arg(long, value_parser = parse_range, default_value = "2..4", value_name = "RANGE")]
    d: DegreeRange,
    /// Report format.
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Output path (stdout if omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InfsupArgs {
    #[command(flatten)]
    source: MeshSource,
    /// Velocity degree.
    #[arg(long, default_value_t = 2, value_name = "K")]
    k: usize,
    /// Velocity space of the pair.
    #[arg(long, value_enum, default_value_t = PairArg::Cr)]
    pair: PairArg,
    /// Also dump one assembled matrix as CSV.
    #[arg(long, value_enum, requires = "matrix_out", value_name = "WHICH")]
    matrix_csv: Option<MatrixArg>,
    /// Path for the CSV matrix dump.
    #[arg(long, requires = "matrix_csv", value_name = "PATH")]
    matrix_out: Option<PathBuf>,
    /// Output path (stdout if omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NspaceArgs {
    #[command(flatten)]
    source: MeshSource,
    /// Velocity degree.
    #[arg(long, default_value_t = 2, value_name = "K")]
    k: usize,
    /// Velocity space of the pair.
    #[arg(long, value_enum, default_value_t = PairArg::Cr)]
    pair: PairArg,
    /// Comma-separated tet ids of the macroelement (all tets if omitted).
    #[arg(long = "macro", value_name = "IDS")]
    macro_tets: Option<String>,
    /// Output path (stdout if omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CriticalArgs {
    #[command(flatten)]
    source: MeshSource,
    /// Velocity degree.
    #[arg(long, default_value_t = 2, value_name = "K")]
    k: usize,
    /// Output path (stdout if omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Non-check failures; failed checks travel back as `Ok(false)`.
enum Failure {
    Config(String),
    Run(cr3d::Error),
    Io(std::io::Error),
}

impl From<cr3d::Error> for Failure {
    fn from(e: cr3d::Error) -> Failure {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Io(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Run(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    schema: &'static str,
    error: String,
}

fn emit_error(message: String) {
    let object = ErrorReport { schema: report::SCHEMA, error: message };
    let text = report::to_json_string(&object)
        .unwrap_or_else(|_| "{\"schema\":\"cr3d-report/1\",\"error\":\"unserializable\"}".into());
    eprintln!("{text}");
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n"))?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            if let Err(e) = writeln!(stdout, "{text}") {
                if e.kind() == std::io::ErrorKind::BrokenPipe {
                    // downstream closed the pipe (e.g. head); not an error
                    std::process::exit(0);
                }
                return Err(e.into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error(format!("configuration error: {e}"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            emit_error(f.to_string());
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    for (name, tol) in [
        ("--tol-coplanar", cli.tol_coplanar),
        ("--tol-rank", cli.tol_rank),
        ("--tol-eig", cli.tol_eig),
    ] {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Failure::Config(format!("{name} must be positive and finite, got {tol}")));
        }
    }
    match &cli.command {
        Command::Mesh(args) => cmd_mesh(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Infsup(args) => cmd_infsup(args, &cli),
        Command::Nspace(args) => cmd_nspace(args),
        Command::Critical(args) => cmd_critical(args, &cli),
    }
}

fn check_degree(k: usize) -> Result<(), Failure> {
    if (1..=6).contains(&k) {
        Ok(())
    } else {
        Err(Failure::Config(format!("--k must be in 1..=6, got {k}")))
    }
}

fn cmd_mesh(args: &MeshArgs) -> Result<bool, Failure> {
    let mesh = generate(mesh_kind(args.gen, args.n, args.iota))?;
    write_output(&args.out, &mesh.to_json_string())?;
    Ok(true)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool, Failure> {
    let report = suites::run(args.suite, args.k, args.d)?;
    let text = match args.format {
        OutputFormat::Json => report::to_json_string(&report)?,
        OutputFormat::Csv => report.to_csv(),
    };
    write_output(&args.out, &text)?;
    Ok(report.passed)
}

fn assemble_pair(
    mesh: &Mesh,
    k: usize,
    pair: PairArg,
    margin: usize,
) -> Result<AssembledSystem, Failure> {
    let velocity = match pair {
        PairArg::Cr => Space::CRk0,
        PairArg::Conforming => Space::Sk0,
    };
    Ok(assemble_with_margin(mesh, k, velocity, Space::Pkm1, margin)?)
}

fn cmd_infsup(args: &InfsupArgs, cli: &Cli) -> Result<bool, Failure> {
    check_degree(args.k)?;
    let mesh = args.source.resolve()?;
    let system = assemble_pair(&mesh, args.k, args.pair, cli.quad_degree_margin)?;
    if let (Some(which), Some(path)) = (args.matrix_csv, &args.matrix_out) {
        fs::write(path, system.matrix_csv(which.into()))?;
    }
    let report = infsup_constant(&system)?;
    let ok = report.eigen_residual <= cli.tol_eig;
    write_output(&args.out, &report::to_json_string(&report)?)?;
    Ok(ok)
}

fn cmd_nspace(args: &NspaceArgs) -> Result<bool, Failure> {
    check_degree(args.k)?;
    let mesh = args.source.resolve()?;
    let macro_tets: Vec<usize> = match &args.macro_tets {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Failure::Config(format!("bad tet id {s:?} in --macro: {e}")))
            })
            .collect::<Result<_, _>>()?,
        None => (0..mesh.num_tets()).collect(),
    };
    let report = nspace_dim(&mesh, &macro_tets, args.k, args.pair.into())?;
    write_output(&args.out, &report::to_json_string(&report)?)?;
    Ok(true)
}

#[derive(Serialize)]
struct EdgeApexCertificate {
    edge: usize,
    endpoints: [usize; 2],
    kind: CriticalKind,
    iota: usize,
    apex: usize,
    spurious_residual: f64,
    spurious_passed: bool,
    /// "passed", "failed", "precondition-unmet" or "not-applicable".
    elimination_status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    elimination: Option<EliminationCertificate>,
    #[serde(skip_serializing_if = "String::is_empty")]
    detail: String,
}

#[derive(Serialize)]
struct CriticalReport {
    schema: &'static str,
    k: usize,
    tol_coplanar: f64,
    spurious_tol: f64,
    mesh_vertices: usize,
    mesh_tets: usize,
    critical_edges: usize,
    certificates: Vec<EdgeApexCertificate>,
    /// False when a certificate failed or the run stopped early.
    passed: bool,
}

fn cmd_critical(args: &CriticalArgs, cli: &Cli) -> Result<bool, Failure> {
    check_degree(args.k)?;
    let mesh = args.source.resolve()?;
    let records = mesh.detect_critical_edges(cli.tol_coplanar);
    let space = FeSpace::new(Space::Pkm1, &mesh, args.k)?;

    let mut certificates = Vec::new();
    let mut all_passed = true;
    let flush = |certs: Vec<EdgeApexCertificate>, passed: bool| -> Result<(), Failure> {
        let report = CriticalReport {
            schema: report::SCHEMA,
            k: args.k,
            tol_coplanar: cli.tol_coplanar,
            spurious_tol: cli.tol_rank,
            mesh_vertices: mesh.num_vertices(),
            mesh_tets: mesh.num_tets(),
            critical_edges: records.len(),
            certificates: certs,
            passed,
        };
        write_output(&args.out, &report::to_json_string(&report)?)
    };

    for record in &records {
        for apex in record.endpoints {
            let step: Result<(f64, &'static str, Option<EliminationCertificate>, String), cr3d::Error> =
                (|| {
                    let pressure = build_critical_pressure(&mesh, &space, record, apex)?;
                    let residual = certify_spurious(&pressure, &mesh, args.k)?;
                    let (status, cert, detail) = match certify_elimination(&mesh, record, args.k) {
                        Ok(cert) => {
                            (if cert.passed { "passed" } else { "failed" }, Some(cert), String::new())
                        }
                        Err(cr3d::Error::PreconditionUnmet(m)) => ("precondition-unmet", None, m),
                        Err(cr3d::Error::InvalidParameter(m))
                        | Err(cr3d::Error::UnsupportedDegree(m)) => ("not-applicable", None, m),
                        Err(e) => return Err(e),
                    };
                    Ok((residual, status, cert, detail))
                })();
            match step {
                Ok((residual, status, cert, detail)) => {
                    let spurious_passed = residual <= cli.tol_rank;
                    all_passed &= spurious_passed && status != "failed";
                    certificates.push(EdgeApexCertificate {
                        edge: record.edge,
                        endpoints: record.endpoints,
                        kind: record.kind,
                        iota: record.iota,
                        apex,
                        spurious_residual: residual,
                        spurious_passed,
                        elimination_status: status,
                        elimination: cert,
                        detail,
                    });
                }
                Err(e) => {
                    // flush what exists before surfacing the error
                    flush(certificates, false)?;
                    return Err(e.into());
                }
            }
        }
    }
    flush(certificates, all_passed)?;
    Ok(all_passed)
}
