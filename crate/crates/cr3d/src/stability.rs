//! Stability analysis of the assembled Stokes pairs: inf-sup constants via
//! a deflated Schur-complement eigenvalue problem, dimensions of the
//! divergence-orthogonal pressure space on macroelements, and certificates
//! for the spurious pressure modes carried by critical edges.
//!
//! A critical edge contributes, for each of its two endpoints, a pressure
//! mode that alternates in sign across the ordered edge patch.  Against the
//! conforming velocity space this mode is orthogonal to every divergence;
//! [`certify_spurious`] measures the largest normalized pairing and so
//! certifies the mode numerically.  The nonconforming enrichment restores
//! control: [`certify_elimination`] evaluates the divergence pairings of
//! the enrichment functions against both critical pressures of an edge in
//! closed form, audits the closed forms against the assembled matrices, and
//! reports the smallest singular value of the resulting 2x2 pairing matrix
//! (nonzero iff both modes are controlled).

use serde::Serialize;

use crate::assembly::{assemble, AssembledSystem};
use crate::fespace::{BaryPoly, DofKind, FeSpace, Space};
use crate::linalg::{self, Matrix};
use crate::mesh::{dot3, sub3, CriticalEdgeRecord, CriticalKind, Mesh};
use crate::polylib;
use crate::report;
use crate::{Error, Result};

/// Relative threshold on singular values when matrix ranks are decided.
pub const RANK_TOL: f64 = 1e-10;
/// Relative threshold below which a Schur-complement eigenvalue counts as a
/// spurious pressure mode.
pub const SPURIOUS_TOL: f64 = 1e-10;
/// Relative residual tolerance for accepted eigenpairs.
pub const EIG_RESIDUAL_TOL: f64 = 1e-9;
/// Relative tolerance for the closed-form/assembled pairing comparison in
/// elimination certificates.
pub const PAIRING_AUDIT_TOL: f64 = 1e-10;

/// Velocity family of a Stokes pair; the pressure is always the broken
/// polynomial space one degree lower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pair {
    /// Nonconforming Crouzeix-Raviart velocities.
    Cr,
    /// Conforming Lagrange velocities with zero boundary trace.
    Conforming,
}

impl Pair {
    pub fn velocity_space(self) -> Space {
        match self {
            Pair::Cr => Space::CRk0,
            Pair::Conforming => Space::Sk0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pair::Cr => "cr",
            Pair::Conforming => "conforming",
        }
    }
}

/// Solves `A x = lambda M x` for symmetric `A` and SPD `M` (eigenvalues
/// ascending, `M`-orthonormal eigenvectors in columns) and audits every
/// eigenpair: the residual `||A x - lambda M x||` must stay below
/// [`EIG_RESIDUAL_TOL`] relative to `(||A||_F + |lambda| ||M||_F) ||x||`.
pub fn sym_eig(a: &Matrix, m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let (vals, vecs) = linalg::sym_eig_gen(a, m)?;
    let na = a.fro_norm();
    let nm = m.fro_norm();
    let n = vals.len();
    for (j, &lambda) in vals.iter().enumerate() {
        let x: Vec<f64> = (0..n).map(|i| vecs[(i, j)]).collect();
        let ax = a.matvec(&x);
        let mx = m.matvec(&x);
        let r2: f64 = (0..n).map(|i| (ax[i] - lambda * mx[i]).powi(2)).sum();
        let scale = (na + lambda.abs() * nm).max(f64::MIN_POSITIVE)
            * linalg::norm2(&x).max(f64::MIN_POSITIVE);
        if r2.sqrt() > EIG_RESIDUAL_TOL * scale {
            return Err(Error::NoConvergence(format!(
                "eigenpair {j} residual {:.3e} exceeds {EIG_RESIDUAL_TOL:.1e} (relative)",
                r2.sqrt() / scale
            )));
        }
    }
    Ok((vals, vecs))
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub tets: usize,
    pub digest: String,
}

/// Result of [`infsup_constant`].
#[derive(Clone, Debug, Serialize)]
pub struct InfSupReport {
    pub schema: String,
    pub pair: Pair,
    pub k: usize,
    pub n_velocity: usize,
    pub n_pressure: usize,
    /// Square root of the smallest deflated Schur-complement eigenvalue.
    pub gamma_h: f64,
    /// Up to five smallest eigenvalues, ascending.
    pub smallest_eigenvalues: Vec<f64>,
    /// Eigenvalues at most [`SPURIOUS_TOL`] times the largest one.
    pub spurious_modes: usize,
    /// Largest relative residual among the reported eigenpairs, measured on
    /// the undeflated pencil `(S, M_p)`.
    pub eigen_residual: f64,
    pub spurious_tol: f64,
    pub eig_residual_tol: f64,
    pub mesh: MeshSummary,
}

/// Inf-sup constant of an assembled Stokes pair.
///
/// Forms the pressure Schur complement `S = B A^{-1} B^T`, restricts it to
/// the `M_p`-orthogonal complement of the constant pressure (columns `Z` of
/// a Householder reflection), and solves `(Z^T S Z) y = lambda (Z^T M_p Z)
/// y`.  The inf-sup constant is the square root of the smallest eigenvalue;
/// eigenvalues at most [`SPURIOUS_TOL`] times the largest one are counted
/// as spurious pressure modes.  The smallest eigenpairs are audited on the
/// undeflated pencil, which also exercises the deflation itself.
pub fn infsup_constant(system: &AssembledSystem) -> Result<InfSupReport> {
    let np = system.n_pressure();
    if np < 2 {
        return Err(Error::InvalidParameter(format!(
            "inf-sup deflation needs at least 2 pressure DoFs, got {np}"
        )));
    }
    let mp = system.mp();
    let s = schur_complement(system)?;

    let c = system.pressure_space().constant_coefficients()?;
    let w = mp.matvec(&c);
    let z = orthogonal_complement(&w)?;
    let sz = z.transpose().matmul(&s.matmul(&z));
    let mz = z.transpose().matmul(&mp.matmul(&z));
    let (vals, vecs) = linalg::sym_eig_gen(&sz, &mz)?;

    let lambda_max = *vals.last().expect("deflated pencil is nonempty");
    let spurious_modes = if lambda_max <= 0.0 {
        vals.len()
    } else {
        vals.iter().filter(|&&l| l <= SPURIOUS_TOL * lambda_max).count()
    };
    let gamma_h = vals[0].max(0.0).sqrt();

    let n_report = vals.len().min(5);
    let ns = s.fro_norm();
    let nmp = mp.fro_norm();
    let mut eigen_residual = 0.0_f64;
    for j in 0..n_report {
        let y: Vec<f64> = (0..vals.len()).map(|i| vecs[(i, j)]).collect();
        let q = z.matvec(&y);
        let sq = s.matvec(&q);
        let mq = mp.matvec(&q);
        let r2: f64 = (0..np).map(|i| (sq[i] - vals[j] * mq[i]).powi(2)).sum();
        let scale = (ns + vals[j].abs() * nmp).max(f64::MIN_POSITIVE)
            * linalg::norm2(&q).max(f64::MIN_POSITIVE);
        eigen_residual = eigen_residual.max(r2.sqrt() / scale);
    }
    if eigen_residual > EIG_RESIDUAL_TOL {
        return Err(Error::NoConvergence(format!(
            "inf-sup eigenpair residual {eigen_residual:.3e} exceeds {EIG_RESIDUAL_TOL:.1e}"
        )));
    }

    Ok(InfSupReport {
        schema: report::SCHEMA.to_string(),
        pair: pair_of(system)?,
        k: system.k(),
        n_velocity: system.n_velocity(),
        n_pressure: np,
        gamma_h,
        smallest_eigenvalues: vals.iter().take(5).copied().collect(),
        spurious_modes,
        eigen_residual,
        spurious_tol: SPURIOUS_TOL,
        eig_residual_tol: EIG_RESIDUAL_TOL,
        mesh: MeshSummary {
            vertices: system.mesh_vertices(),
            tets: system.mesh_tets(),
            digest: system.mesh_digest().to_string(),
        },
    })
}

fn pair_of(system: &AssembledSystem) -> Result<Pair> {
    match system.velocity_scalar().space() {
        Space::CRk0 => Ok(Pair::Cr),
        Space::Sk0 => Ok(Pair::Conforming),
        other => Err(Error::InvalidParameter(format!(
            "no named velocity/pressure pair uses {other:?}"
        ))),
    }
}

fn schur_complement(system: &AssembledSystem) -> Result<Matrix> {
    let np = system.n_pressure();
    if system.n_velocity() == 0 {
        return Ok(Matrix::zeros(np, np));
    }
    let chol = system.a().cholesky()?;
    let x = chol.solve_matrix(&system.b().transpose());
    let mut s = system.b().matmul(&x);
    // symmetric by construction; enforce it exactly for the eigensolver
    for i in 0..np {
        for j in i + 1..np {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Orthonormal basis of the hyperplane orthogonal to `w`: the trailing
/// `n - 1` columns of the Householder reflection that maps `w` onto the
/// first coordinate axis.
fn orthogonal_complement(w: &[f64]) -> Result<Matrix> {
    let n = w.len();
    let nw = linalg::norm2(w);
    if nw == 0.0 || n < 2 {
        return Err(Error::InvalidParameter(
            "deflation needs a nonzero vector of length >= 2".into(),
        ));
    }
    let mut u = w.to_vec();
    u[0] += w[0].signum() * nw;
    let uu: f64 = u.iter().map(|v| v * v).sum();
    let mut z = Matrix::zeros(n, n - 1);
    for i in 0..n {
        for j in 1..n {
            z[(i, j - 1)] = f64::from(i == j) - 2.0 * u[i] * u[j] / uu;
        }
    }
    Ok(z)
}

/// Result of [`nspace_dim`].
#[derive(Clone, Debug, Serialize)]
pub struct NspaceReport {
    pub schema: String,
    pub pair: Pair,
    pub k: usize,
    /// The macroelement tets (sorted).
    pub macro_tets: Vec<usize>,
    pub n_velocity: usize,
    pub n_pressure: usize,
    pub divergence_rank: usize,
    /// `n_pressure - divergence_rank`: pressures orthogonal to every
    /// discrete divergence.  Value 1 means "constants only".
    pub dim: usize,
    /// Singular values of the divergence matrix, descending.
    pub singular_values: Vec<f64>,
    pub rank_tol: f64,
}

/// Dimension of the space of pressures orthogonal to the divergence of the
/// velocity space on a macroelement.
///
/// The macroelement is extracted as a mesh of its own, so the zero boundary
/// conditions apply on the macroelement boundary.  The result is
/// `dim P_{k-1} - rank B` with the rank cut at [`RANK_TOL`] relative to the
/// largest singular value of the divergence matrix.
pub fn nspace_dim(mesh: &Mesh, macro_tets: &[usize], k: usize, pair: Pair) -> Result<NspaceReport> {
    if macro_tets.is_empty() {
        return Err(Error::InvalidParameter("macroelement has no tets".into()));
    }
    let mut sorted = macro_tets.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != macro_tets.len() {
        return Err(Error::InvalidParameter("macroelement repeats a tet".into()));
    }
    for &t in &sorted {
        if t >= mesh.num_tets() {
            return Err(Error::IndexOutOfRange(format!("tet {t} of {}", mesh.num_tets())));
        }
    }
    // every tet must be reachable through shared facets, otherwise the
    // macroelement statement splits into independent ones
    let inside = |t: usize| sorted.binary_search(&t).is_ok();
    let mut seen = vec![false; sorted.len()];
    seen[0] = true;
    let mut reached = 1;
    let mut stack = vec![sorted[0]];
    while let Some(t) = stack.pop() {
        for f in mesh.tet_facets(t) {
            for &t2 in mesh.facet_tets(f) {
                if t2 == t || !inside(t2) {
                    continue;
                }
                let slot = sorted.binary_search(&t2).expect("inside() checked membership");
                if !seen[slot] {
                    seen[slot] = true;
                    reached += 1;
                    stack.push(t2);
                }
            }
        }
    }
    if reached != sorted.len() {
        return Err(Error::DisconnectedMacro(format!(
            "only {reached} of {} tets reachable through shared facets",
            sorted.len()
        )));
    }

    let (sub, _vertex_map, _tet_map) = mesh.submesh(&sorted)?;
    let system = assemble(&sub, k, pair.velocity_space(), Space::Pkm1)?;
    let singular_values = if system.n_velocity() == 0 {
        Vec::new()
    } else {
        linalg::singular_values(system.b())?
    };
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let divergence_rank = singular_values.iter().filter(|&&v| v > RANK_TOL * sigma_max).count();
    Ok(NspaceReport {
        schema: report::SCHEMA.to_string(),
        pair,
        k,
        macro_tets: sorted,
        n_velocity: system.n_velocity(),
        n_pressure: system.n_pressure(),
        divergence_rank,
        dim: system.n_pressure() - divergence_rank,
        singular_values,
        rank_tol: RANK_TOL,
    })
}

/// A critical pressure mode expanded in the global pressure basis: on the
/// `i`-th tet of the ordered patch (1-based) it equals
/// `(-1)^i / |K_i| * P_{k-1}^{(0,3)}(1 - 2 lambda_{K_i, apex})`
/// and it vanishes outside the patch.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalPressure {
    pub edge: usize,
    pub endpoints: [usize; 2],
    pub apex: usize,
    pub kind: CriticalKind,
    pub k: usize,
    pub coefficients: Vec<f64>,
}

/// Expands the critical pressure mode of `record` with the given apex
/// (which must be an edge endpoint) in the basis of `pressure_space`.
pub fn build_critical_pressure(
    mesh: &Mesh,
    pressure_space: &FeSpace,
    record: &CriticalEdgeRecord,
    apex: usize,
) -> Result<CriticalPressure> {
    if !matches!(pressure_space.space(), Space::Pkm1 | Space::Pkm1Zero) {
        return Err(Error::InvalidParameter(format!(
            "critical pressures live in a pressure space, got {:?}",
            pressure_space.space()
        )));
    }
    validate_record(mesh, record)?;
    if apex != record.endpoints[0] && apex != record.endpoints[1] {
        return Err(Error::ApexNotOnEdge { apex, edge: record.edge });
    }
    let k = pressure_space.k();
    let radial = polylib::jacobi(0.0, 3.0, k - 1).compose_affine(1.0, -2.0);
    let mut coefficients = vec![0.0; pressure_space.dim()];
    for (pos, &t) in record.tets.iter().enumerate() {
        let slot = mesh.local_vertex(t, apex).ok_or_else(|| {
            Error::NotCritical(format!("patch tet {t} does not contain apex {apex}"))
        })?;
        let poly =
            BaryPoly::from_univariate(&radial, slot).scale(patch_sign(pos) / mesh.volume(t));
        for (dof, c) in pressure_space.expand_on_tet(t, &poly)? {
            coefficients[dof] += c;
        }
    }
    Ok(CriticalPressure {
        edge: record.edge,
        endpoints: record.endpoints,
        apex,
        kind: record.kind,
        k,
        coefficients,
    })
}

/// Sign `(-1)^i` of the `i`-th patch tet, with `pos` 0-based.
fn patch_sign(pos: usize) -> f64 {
    if pos.is_multiple_of(2) {
        -1.0
    } else {
        1.0
    }
}

/// Checks that `record` describes an edge patch of `mesh`: matching
/// endpoints and tet set, a kind consistent with the boundary flag, and an
/// ordering in which consecutive tets (cyclically for inner edges) share a
/// facet containing the edge — the alternating signs are meaningless
/// otherwise.  Coplanarity itself is not re-checked; it is
/// tolerance-dependent and belongs to detection.
fn validate_record(mesh: &Mesh, record: &CriticalEdgeRecord) -> Result<()> {
    if record.edge >= mesh.num_edges() {
        return Err(Error::NotCritical(format!(
            "edge {} out of range ({} edges)",
            record.edge,
            mesh.num_edges()
        )));
    }
    if mesh.edge(record.edge) != record.endpoints {
        return Err(Error::NotCritical(format!(
            "endpoints {:?} do not match edge {}",
            record.endpoints, record.edge
        )));
    }
    let mut patch = mesh.edge_tets(record.edge).to_vec();
    patch.sort_unstable();
    let mut given = record.tets.clone();
    given.sort_unstable();
    given.dedup();
    if given != patch {
        return Err(Error::NotCritical(format!(
            "tets {:?} are not the patch of edge {}",
            record.tets, record.edge
        )));
    }
    if record.iota != record.tets.len() {
        return Err(Error::NotCritical(format!(
            "iota {} disagrees with {} patch tets",
            record.iota,
            record.tets.len()
        )));
    }
    let boundary = mesh.edge_is_boundary(record.edge);
    let sizes_ok = match record.kind {
        CriticalKind::Inner => !boundary && record.tets.len() == 4,
        CriticalKind::Outer => boundary && (1..=3).contains(&record.tets.len()),
    };
    if !sizes_ok {
        return Err(Error::NotCritical(format!(
            "{:?} edge with {} tets (boundary: {boundary})",
            record.kind,
            record.tets.len()
        )));
    }
    let n = record.tets.len();
    let pairs = if record.kind == CriticalKind::Inner { n } else { n - 1 };
    for i in 0..pairs {
        let a = record.tets[i];
        let b = record.tets[(i + 1) % n];
        let adjacent = mesh.tet_facets(a).iter().any(|&f| {
            let fv = mesh.facet(f);
            mesh.facet_tets(f).contains(&b)
                && fv.contains(&record.endpoints[0])
                && fv.contains(&record.endpoints[1])
        });
        if !adjacent {
            return Err(Error::NotCritical(format!(
                "ordered patch tets {a} and {b} do not share a facet through the edge"
            )));
        }
    }
    Ok(())
}

/// Largest normalized divergence pairing of a pressure mode against the
/// conforming velocity space of the same degree:
/// `max_j |(p^T B)_j| / (||p||_{M_p} sqrt(A_jj))`.
///
/// A value at roundoff level certifies that the mode is orthogonal to the
/// range of the divergence, i.e. a genuine spurious pressure mode of the
/// conforming pair.
pub fn certify_spurious(pressure: &CriticalPressure, mesh: &Mesh, k: usize) -> Result<f64> {
    if k != pressure.k {
        return Err(Error::DimensionMismatch(format!(
            "pressure was built for k = {}, asked to certify k = {k}",
            pressure.k
        )));
    }
    let system = assemble(mesh, k, Space::Sk0, Space::Pkm1)?;
    let np = system.n_pressure();
    if pressure.coefficients.len() != np {
        return Err(Error::DimensionMismatch(format!(
            "pressure has {} coefficients, the mesh carries {np} pressure DoFs",
            pressure.coefficients.len()
        )));
    }
    let p = &pressure.coefficients;
    let pnorm = linalg::dot(p, &system.mp().matvec(p)).max(0.0).sqrt();
    if pnorm == 0.0 {
        return Err(Error::InvalidParameter("pressure mode is identically zero".into()));
    }
    let nv = system.n_velocity();
    let mut btp = vec![0.0; nv];
    for (q, &pq) in p.iter().enumerate() {
        if pq == 0.0 {
            continue;
        }
        for (j, bqj) in system.b().row(q).iter().enumerate() {
            btp[j] += pq * bqj;
        }
    }
    let mut worst = 0.0_f64;
    for (j, v) in btp.iter().enumerate() {
        worst = worst.max(v.abs() / (pnorm * system.a()[(j, j)].sqrt()));
    }
    Ok(worst)
}

/// Certificate that the nonconforming enrichment of degree `k` pairs
/// non-degenerately with both critical pressures of an edge.
#[derive(Clone, Debug, Serialize)]
pub struct EliminationCertificate {
    pub schema: String,
    pub edge: usize,
    pub endpoints: [usize; 2],
    pub kind: CriticalKind,
    pub k: usize,
    /// `"cell-bubble"` (even `k`) or `"facet-bubble-pair"` (odd `k`).
    pub mechanism: &'static str,
    /// The patch tet whose enrichment functions are tested.
    pub tet: usize,
    /// Empty for even `k`; the interior facet pair `[F, G]` for odd `k`.
    pub facets: Vec<usize>,
    /// 2x2 pairing matrix (rows: the two critical pressures, columns: the
    /// two test directions), in the normalization whose entries are
    /// mesh-independent.
    pub gram: [[f64; 2]; 2],
    /// Odd `k` only: `d_s(lambda_{K,v_K} - lambda_{K',v_{K'}})` along the
    /// unit normal `s` of `F` pointing from `K` into `K'`; negative on any
    /// non-degenerate mesh.  Omitted from JSON for even `k` (reports never
    /// contain `null`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub min_singular_value: f64,
    /// Largest relative deviation between assembled and closed-form
    /// pairings over both pressures and both test functions.
    pub pairing_residual: f64,
    pub passed: bool,
}

/// Certifies that the degree-`k` enrichment eliminates the two critical
/// pressure modes of `record`.
///
/// * even `k`: the cell function of the first patch tet `K`, tested along
///   the edge direction and one further direction, pairs with the critical
///   pressure of apex `p` as `-sigma_K (k+3)/(2 (k+1) |Khat|) d_w
///   lambda_{K,p}`; the 2x2 matrix of directional derivatives is
///   `[[-1, 0], [1, 1]]` in exact arithmetic.
/// * odd `k >= 3`: needs a patch tet `K` with an interior facet `F`
///   containing the edge and another interior facet `G` missing one
///   endpoint `y`.  The facet functions of `F` (along the normal `s` of
///   `F`) and of `G` (along `t = y - u`) yield, after scaling by
///   `-sigma_K (k+1) |Khat|`, the matrix `[[theta, 1], [theta, (k+1)/2]]`
///   with `theta < 0`, hence nonsingular for `k >= 3`.  `k = 1` is
///   rejected: the two rows coincide and no such pair separates the modes.
///
/// Both branches audit every closed-form pairing against the assembled
/// divergence matrix.
pub fn certify_elimination(
    mesh: &Mesh,
    record: &CriticalEdgeRecord,
    k: usize,
) -> Result<EliminationCertificate> {
    validate_record(mesh, record)?;
    if k.is_multiple_of(2) {
        certify_elimination_even(mesh, record, k)
    } else if k >= 3 {
        certify_elimination_odd(mesh, record, k)
    } else {
        Err(Error::InvalidParameter(
            "degree 1 has no enrichment pair separating the two critical pressures".into(),
        ))
    }
}

fn certify_elimination_even(
    mesh: &Mesh,
    record: &CriticalEdgeRecord,
    k: usize,
) -> Result<EliminationCertificate> {
    let kf = k as f64;
    let tet = record.tets[0];
    let sigma = patch_sign(0);
    let [pa, pb] = record.endpoints;
    let v = *mesh
        .tet(tet)
        .iter()
        .filter(|&&z| z != pa && z != pb)
        .min()
        .expect("tet has vertices off the edge");
    let s = sub3(mesh.vertex(pb), mesh.vertex(pa));
    let t = sub3(mesh.vertex(pb), mesh.vertex(v));
    let grads = mesh.barycentric_gradients(tet)?;
    let grad_of =
        |z: usize| grads[mesh.local_vertex(tet, z).expect("patch tet contains the vertex")];
    let gram = [
        [dot3(s, grad_of(pa)), dot3(t, grad_of(pa))],
        [dot3(s, grad_of(pb)), dot3(t, grad_of(pb))],
    ];

    let system = assemble(mesh, k, Space::CRk0, Space::Pkm1)?;
    let dof = scalar_dof(system.velocity_scalar(), &DofKind::CRCell, tet)?;
    let mut residual = 0.0_f64;
    for apex in record.endpoints {
        let pressure = build_critical_pressure(mesh, system.pressure_space(), record, apex)?;
        let dl = grad_of(apex);
        for dir in [s, t] {
            let vel = directional_velocity(&system, dof, dir);
            let assembled = system.pairing(&pressure.coefficients, &vel)?;
            // (p, div(B_k w)) = -sigma (k+3)/(2 (k+1) |Khat|) d_w lambda_apex
            // with |Khat| = 1/6
            let expected = -sigma * 3.0 * (kf + 3.0) / (kf + 1.0) * dot3(dir, dl);
            residual = residual.max((assembled - expected).abs() / expected.abs().max(1.0));
        }
    }
    finish_certificate(record, k, "cell-bubble", tet, Vec::new(), gram, None, residual)
}

fn certify_elimination_odd(
    mesh: &Mesh,
    record: &CriticalEdgeRecord,
    k: usize,
) -> Result<EliminationCertificate> {
    let kf = k as f64;
    let [ea, eb] = record.endpoints;
    // deterministic scan for an admissible (K, F, G): first patch tet with
    // an interior facet F through the edge and an interior facet G missing
    // an endpoint, facets in id order
    let mut choice = None;
    'scan: for (pos, &t) in record.tets.iter().enumerate() {
        let mut fs = mesh.tet_facets(t).to_vec();
        fs.sort_unstable();
        for &f in &fs {
            if mesh.facet_is_boundary(f) {
                continue;
            }
            let fv = mesh.facet(f);
            if !(fv.contains(&ea) && fv.contains(&eb)) {
                continue;
            }
            for &g in &fs {
                if g == f || mesh.facet_is_boundary(g) {
                    continue;
                }
                let gv = mesh.facet(g);
                if gv.contains(&ea) && gv.contains(&eb) {
                    continue;
                }
                choice = Some((pos, t, f, g));
                break 'scan;
            }
        }
    }
    let Some((pos, tet, f, g)) = choice else {
        return Err(Error::PreconditionUnmet(format!(
            "no tet in the patch of edge {} has both an interior facet through the edge \
             and another interior facet missing an endpoint",
            record.edge
        )));
    };
    let sigma = patch_sign(pos);

    // F couples the two patch neighbors sharing it; s is the unit normal of
    // F pointing from K into the neighbor K'
    let other = *mesh
        .facet_tets(f)
        .iter()
        .find(|&&x| x != tet)
        .expect("interior facet has a second tet");
    let mut s = mesh.facet_normal(f)?;
    let base = mesh.facet_vertices(f)?[0];
    let apex_other = mesh.opposite_vertex(other, f)?;
    if dot3(s, sub3(mesh.vertex(apex_other), base)) < 0.0 {
        s = [-s[0], -s[1], -s[2]];
    }
    let grads = mesh.barycentric_gradients(tet)?;
    let grads_other = mesh.barycentric_gradients(other)?;
    let vk = mesh.opposite_vertex(tet, f)?;
    let theta = dot3(s, grads[mesh.local_vertex(tet, vk).expect("opposite vertex")])
        - dot3(s, grads_other[mesh.local_vertex(other, apex_other).expect("opposite vertex")]);

    // G isolates the endpoint y opposite it; t runs towards y so that
    // d_t lambda_{K,y} = 1
    let y = mesh.opposite_vertex(tet, g)?;
    if y != ea && y != eb {
        return Err(Error::PreconditionUnmet(format!(
            "facet {g} does not isolate an endpoint of edge {}",
            record.edge
        )));
    }
    let u = *mesh
        .tet(tet)
        .iter()
        .filter(|&&z| z != y)
        .min()
        .expect("tet has vertices besides y");
    let tdir = sub3(mesh.vertex(y), mesh.vertex(u));
    let dt_ly = dot3(tdir, grads[mesh.local_vertex(tet, y).expect("y lies in the tet")]);

    // rows: apex != y, apex = y; columns: F along s, G along t; entries are
    // the pairings scaled by -sigma_K (k+1) |Khat|
    let gram = [[theta, dt_ly], [theta, 0.5 * (kf + 1.0) * dt_ly]];

    let system = assemble(mesh, k, Space::CRk0, Space::Pkm1)?;
    let fdof = scalar_dof(system.velocity_scalar(), &DofKind::CRFacet, f)?;
    let gdof = scalar_dof(system.velocity_scalar(), &DofKind::CRFacet, g)?;
    let mut residual = 0.0_f64;
    for apex in record.endpoints {
        let pressure = build_critical_pressure(mesh, system.pressure_space(), record, apex)?;
        let g_expected = if apex == y {
            -sigma * 3.0 * dt_ly
        } else {
            -sigma * 6.0 * dt_ly / (kf + 1.0)
        };
        let checks = [(fdof, s, -sigma * 6.0 * theta / (kf + 1.0)), (gdof, tdir, g_expected)];
        for (dof, dir, expected) in checks {
            let vel = directional_velocity(&system, dof, dir);
            let assembled = system.pairing(&pressure.coefficients, &vel)?;
            residual = residual.max((assembled - expected).abs() / expected.abs().max(1.0));
        }
    }
    finish_certificate(
        record,
        k,
        "facet-bubble-pair",
        tet,
        vec![f, g],
        gram,
        Some(theta),
        residual,
    )
}

fn scalar_dof(space: &FeSpace, kind: &DofKind, entity: usize) -> Result<usize> {
    space
        .keys()
        .iter()
        .position(|key| key.kind == *kind && key.entity == entity)
        .ok_or_else(|| Error::UnknownEntity(format!("no {kind:?} DoF on entity {entity}")))
}

/// Velocity coefficient vector for the vector field `dir * phi_scalar`.
fn directional_velocity(system: &AssembledSystem, scalar_dof: usize, dir: [f64; 3]) -> Vec<f64> {
    let mut v = vec![0.0; system.n_velocity()];
    for (c, &d) in dir.iter().enumerate() {
        v[system.velocity_dof(c, scalar_dof)] = d;
    }
    v
}

#[allow(clippy::too_many_arguments)]
fn finish_certificate(
    record: &CriticalEdgeRecord,
    k: usize,
    mechanism: &'static str,
    tet: usize,
    facets: Vec<usize>,
    gram: [[f64; 2]; 2],
    theta: Option<f64>,
    pairing_residual: f64,
) -> Result<EliminationCertificate> {
    let m = Matrix::from_rows(&[gram[0].to_vec(), gram[1].to_vec()]);
    let sv = linalg::singular_values(&m)?;
    let passed = pairing_residual <= PAIRING_AUDIT_TOL
        && sv[1] > RANK_TOL * sv[0]
        && theta.is_none_or(|th| th < 0.0);
    Ok(EliminationCertificate {
        schema: report::SCHEMA.to_string(),
        edge: record.edge,
        endpoints: record.endpoints,
        kind: record.kind,
        k,
        mechanism,
        tet,
        facets,
        gram,
        theta,
        min_singular_value: sv[1],
        pairing_residual,
        passed,
    })
}
