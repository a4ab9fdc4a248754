//! Nonconforming Crouzeix-Raviart finite element spaces of arbitrary polynomial
//! order on tetrahedral meshes.
//!
//! The crate builds the scalar spaces `CR_{k,0}(T)` obtained by enriching the
//! conforming Lagrange space `S_{k,0}(T)` (for odd `k` its subspace `S'_{k,0}`
//! of functions vanishing at the mesh vertices) with one nonconforming bubble
//! per cell (even `k`) or per interior facet (odd `k`).  On top of the spaces
//! it provides:
//!
//! * assembly of the discrete Stokes forms `a_h` (broken velocity gradient),
//!   `b_h` (pressure/divergence pairing) and the pressure mass matrix,
//! * computation of the discrete inf-sup constant by a deflated Schur
//!   complement eigenvalue problem,
//! * detection of *critical edges* (edges whose adjacent facets lie in at most
//!   two planes), construction of the associated spurious pressure modes of
//!   the conforming pair, and certificates that the nonconforming enrichment
//!   eliminates them,
//! * the orthogonal-polynomial toolbox (Legendre, Jacobi, Gegenbauer, the
//!   facet-orthogonal profiles `Q_k` and their d-dimensional generalisation)
//!   that underlies the basis construction.
//!
//! All dense linear algebra is implemented in [`linalg`]; quadrature on
//! reference simplices in [`quadrature`].

pub mod assembly;
pub mod fespace;
pub mod linalg;
pub mod mesh;
pub mod polylib;
pub mod quadrature;
pub mod report;
pub mod stability;

/// Errors produced by mesh construction, space enumeration, assembly and the
/// stability certificates.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The tet list does not describe a conforming triangulation.
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    /// A tetrahedron (or the whole mesh) is degenerate.
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    /// An entity index is out of range for the mesh at hand.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    /// A vertex/edge/facet lookup failed.
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The polynomial degree is not supported by the requested operation.
    #[error("unsupported degree: {0}")]
    UnsupportedDegree(String),
    /// Matrix/vector dimensions do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A matrix required to be symmetric positive definite is not.
    #[error("matrix is not symmetric positive definite ({0})")]
    NotSpd(String),
    /// An iterative eigenvalue/singular value solver failed to converge.
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    /// A linear system is singular to working precision.
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    /// A freshly constructed quadrature rule failed its monomial audit.
    #[error("quadrature exactness audit failed: {0}")]
    ExactnessAuditFailed(String),
    /// The edge passed to a critical-pressure routine is not critical.
    #[error("edge is not critical: {0}")]
    NotCritical(String),
    /// The apex vertex is not an endpoint of the critical edge.
    #[error("apex {apex} is not an endpoint of edge {edge}")]
    ApexNotOnEdge { apex: usize, edge: usize },
    /// A macroelement is not facet-connected.
    #[error("macroelement is not connected: {0}")]
    DisconnectedMacro(String),
    /// A theorem hypothesis needed by a certificate does not hold on the mesh.
    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),
}

pub type Result<T> = std::result::Result<T, Error>;
