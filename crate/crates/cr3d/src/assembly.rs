//! Assembly of the dense discrete Stokes matrices: the broken velocity
//! stiffness `A`, the pressure-divergence coupling `B`, and the pressure
//! mass `Mp`.
//!
//! Velocity spaces are vector-valued (three scalar components in
//! component-major block order), so `A` is block diagonal with three copies
//! of the scalar broken stiffness and `B[(q, (c, i))] = sum_K int_K q
//! d(phi_i)/dx_c`.  All integrands are polynomials; the quadrature degree is
//! `2k` plus a safety margin, and assembling with a larger margin reproduces
//! the same matrices to rounding.

use serde::Serialize;

use crate::fespace::{DofKey, FeSpace, Space};
use crate::linalg::Matrix;
use crate::mesh::Mesh;
use crate::quadrature;
use crate::{Error, Result};

/// Default exactness added on top of the minimal `2k`.
pub const DEFAULT_DEGREE_MARGIN: usize = 2;

/// The assembled Stokes system for one mesh and degree.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    k: usize,
    a: Matrix,
    b: Matrix,
    mp: Matrix,
    velocity_keys: Vec<DofKey>,
    pressure_keys: Vec<DofKey>,
    velocity_scalar: FeSpace,
    pressure: FeSpace,
    mesh_digest: String,
    mesh_vertices: usize,
    mesh_tets: usize,
}

/// Selects one of the assembled matrices for export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Stiffness,
    Divergence,
    PressureMass,
}

/// Header describing an exported system: dimensions plus a digest of the
/// DoF orderings, so downstream consumers can detect mismatched files.
#[derive(Serialize)]
pub struct SystemHeader {
    pub k: usize,
    pub n_velocity: usize,
    pub n_pressure: usize,
    pub velocity_dof_digest: String,
    pub pressure_dof_digest: String,
    pub mesh_digest: String,
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Assembles with the default quadrature margin.
pub fn assemble(
    mesh: &Mesh,
    k: usize,
    velocity_space: Space,
    pressure_space: Space,
) -> Result<AssembledSystem> {
    assemble_with_margin(mesh, k, velocity_space, pressure_space, DEFAULT_DEGREE_MARGIN)
}

/// Assembles the Stokes matrices with quadrature exactness `2k + margin`.
pub fn assemble_with_margin(
    mesh: &Mesh,
    k: usize,
    velocity_space: Space,
    pressure_space: Space,
    margin: usize,
) -> Result<AssembledSystem> {
    if !matches!(velocity_space, Space::CRk0 | Space::Sk0) {
        return Err(Error::InvalidParameter(
            "velocity space must be CRk0 or Sk0".into(),
        ));
    }
    if !matches!(pressure_space, Space::Pkm1 | Space::Pkm1Zero) {
        return Err(Error::InvalidParameter(
            "pressure space must be Pkm1 or Pkm1Zero".into(),
        ));
    }
    let vs = FeSpace::new(velocity_space, mesh, k)?;
    let ps = FeSpace::new(pressure_space, mesh, k)?;
    let ns = vs.dim();
    let np = ps.dim();
    let degree = 2 * k + margin;
    let rule = quadrature::cached_rule(3, degree)?;

    // scalar broken stiffness and the three divergence component blocks
    let mut stiff = Matrix::zeros(ns, ns);
    let mut div = [
        Matrix::zeros(np, ns),
        Matrix::zeros(np, ns),
        Matrix::zeros(np, ns),
    ];
    let mut mp = Matrix::zeros(np, np);

    for t in 0..mesh.num_tets() {
        let grads = mesh.barycentric_gradients(t)?;
        let scale = 6.0 * mesh.volume(t);
        let vdofs = vs.dofs_on_tet(t);
        let pdofs = ps.dofs_on_tet(t);
        let npts = rule.len();
        // tabulate shape values/gradients once per point
        let mut vgrad = vec![[0.0f64; 3]; vdofs.len() * npts];
        let mut pval = vec![0.0f64; pdofs.len() * npts];
        for (ip, pt) in rule.points().iter().enumerate() {
            let lambda = [1.0 - pt[0] - pt[1] - pt[2], pt[0], pt[1], pt[2]];
            for (a, &i) in vdofs.iter().enumerate() {
                vgrad[a * npts + ip] = vs.gradient(i, t, &lambda, &grads);
            }
            for (a, &q) in pdofs.iter().enumerate() {
                pval[a * npts + ip] = ps.value(q, t, &lambda);
            }
        }
        let w = rule.weights();
        for (a, &i) in vdofs.iter().enumerate() {
            for (b, &j) in vdofs.iter().enumerate().skip(a) {
                let mut acc = 0.0;
                for ip in 0..npts {
                    let ga = vgrad[a * npts + ip];
                    let gb = vgrad[b * npts + ip];
                    acc += w[ip] * (ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2]);
                }
                acc *= scale;
                stiff[(i, j)] += acc;
                if i != j {
                    stiff[(j, i)] += acc;
                }
            }
        }
        for (a, &q) in pdofs.iter().enumerate() {
            for (b, &r) in pdofs.iter().enumerate().skip(a) {
                let mut acc = 0.0;
                for ip in 0..npts {
                    acc += w[ip] * pval[a * npts + ip] * pval[b * npts + ip];
                }
                acc *= scale;
                mp[(q, r)] += acc;
                if q != r {
                    mp[(r, q)] += acc;
                }
            }
        }
        for (a, &q) in pdofs.iter().enumerate() {
            for (b, &j) in vdofs.iter().enumerate() {
                let mut acc = [0.0; 3];
                for ip in 0..npts {
                    let pv = w[ip] * pval[a * npts + ip];
                    let g = vgrad[b * npts + ip];
                    acc[0] += pv * g[0];
                    acc[1] += pv * g[1];
                    acc[2] += pv * g[2];
                }
                for c in 0..3 {
                    div[c][(q, j)] += scale * acc[c];
                }
            }
        }
    }

    // expand to the vector-valued system: component-major blocks
    let nv = 3 * ns;
    let mut a = Matrix::zeros(nv, nv);
    let mut b = Matrix::zeros(np, nv);
    for c in 0..3 {
        for i in 0..ns {
            for j in 0..ns {
                a[(c * ns + i, c * ns + j)] = stiff[(i, j)];
            }
        }
        for q in 0..np {
            for j in 0..ns {
                b[(q, c * ns + j)] = div[c][(q, j)];
            }
        }
    }
    let mut velocity_keys = Vec::with_capacity(nv);
    for c in 0..3 {
        for key in vs.keys() {
            let mut key = key.clone();
            key.component = c;
            velocity_keys.push(key);
        }
    }
    let mesh_digest = format!("{:016x}", fnv1a64(mesh.to_json_string().as_bytes()));

    Ok(AssembledSystem {
        k,
        a,
        b,
        mp,
        velocity_keys,
        pressure_keys: ps.keys().to_vec(),
        velocity_scalar: vs,
        pressure: ps,
        mesh_digest,
        mesh_vertices: mesh.num_vertices(),
        mesh_tets: mesh.num_tets(),
    })
}

impl AssembledSystem {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Broken velocity stiffness (vector-valued, block diagonal).
    pub fn a(&self) -> &Matrix {
        &self.a
    }

    /// Pressure-divergence coupling, `n_pressure x n_velocity`.
    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// Pressure mass matrix.
    pub fn mp(&self) -> &Matrix {
        &self.mp
    }

    pub fn n_velocity(&self) -> usize {
        self.velocity_keys.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure_keys.len()
    }

    pub fn velocity_keys(&self) -> &[DofKey] {
        &self.velocity_keys
    }

    pub fn pressure_keys(&self) -> &[DofKey] {
        &self.pressure_keys
    }

    /// The scalar velocity space underlying the vector blocks.
    pub fn velocity_scalar(&self) -> &FeSpace {
        &self.velocity_scalar
    }

    pub fn pressure_space(&self) -> &FeSpace {
        &self.pressure
    }

    pub fn mesh_digest(&self) -> &str {
        &self.mesh_digest
    }

    pub fn mesh_vertices(&self) -> usize {
        self.mesh_vertices
    }

    pub fn mesh_tets(&self) -> usize {
        self.mesh_tets
    }

    /// Global index of the vector velocity DoF for scalar DoF `i`,
    /// component `c`.
    pub fn velocity_dof(&self, component: usize, scalar_dof: usize) -> usize {
        component * self.velocity_scalar.dim() + scalar_dof
    }

    /// The bilinear pairing `q^T B v`.
    pub fn pairing(&self, pressure: &[f64], velocity: &[f64]) -> Result<f64> {
        if pressure.len() != self.n_pressure() || velocity.len() != self.n_velocity() {
            return Err(Error::DimensionMismatch(format!(
                "pairing got ({}, {}), system is ({}, {})",
                pressure.len(),
                velocity.len(),
                self.n_pressure(),
                self.n_velocity()
            )));
        }
        let bv = self.b.matvec(velocity);
        Ok(crate::linalg::dot(pressure, &bv))
    }

    /// Row-major CSV dump of one matrix.
    pub fn matrix_csv(&self, which: MatrixKind) -> String {
        let m = match which {
            MatrixKind::Stiffness => &self.a,
            MatrixKind::Divergence => &self.b,
            MatrixKind::PressureMass => &self.mp,
        };
        let mut out = String::new();
        for i in 0..m.rows() {
            let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:.17e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON header with dimensions and DoF-ordering digests.
    pub fn header(&self) -> SystemHeader {
        let digest = |keys: &[DofKey]| {
            let doc: Vec<String> = keys.iter().map(|k| format!("{k:?}")).collect();
            format!("{:016x}", fnv1a64(doc.join(";").as_bytes()))
        };
        SystemHeader {
            k: self.k,
            n_velocity: self.n_velocity(),
            n_pressure: self.n_pressure(),
            velocity_dof_digest: digest(&self.velocity_keys),
            pressure_dof_digest: digest(&self.pressure_keys),
            mesh_digest: self.mesh_digest.clone(),
        }
    }
}
