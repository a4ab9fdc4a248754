//! Finite element spaces on tetrahedral meshes: the conforming spaces
//! `S_{k,0}` and `S'_{k,0}`, the nonconforming Crouzeix-Raviart complements
//! `B_k^nc`, their sum `CR_{k,0}`, and the discontinuous pressure spaces
//! `P_{k-1}` / mean-zero `P_{k-1,0}`.
//!
//! Shape functions are stored per tetrahedron as polynomials in the four
//! barycentric coordinates (a list of multi-index/coefficient pairs), which
//! keeps every construction exact and makes gradients a chain rule with the
//! constant barycentric gradients.
//!
//! The Crouzeix-Raviart complement depends on the parity of `k`:
//!
//! * even `k`: one cell function per tetrahedron,
//!   `B_k(K) = sum_z Q_k(1 - 2 lambda_z) - 1`, whose moments against
//!   `P_{k-1}(F)` vanish on all four facets;
//! * odd `k`: one facet function per interior facet `F`, equal on each
//!   neighbor tet to `Q_k(1 - 2 lambda_z)` with `z` the vertex opposite `F`;
//!   its trace on `F` is identically `Q_k(1) = 1` from both sides, and its
//!   moments vanish on the remaining facets.
//!
//! Here `Q_k = (L_{k+1} - L_k)' / (k + 1)` with Legendre `L_k`; membership of
//! the assembled space in the maximal jump-orthogonal CR space can be audited
//! numerically with [`jump_moment_audit`].

use crate::linalg::{self, Matrix};
use crate::mesh::Mesh;
use crate::polylib::{self, UnivariatePoly};
use crate::quadrature;
use crate::{Error, Result};

/// Space selector for [`FeSpace::new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    /// Continuous piecewise `P_k` with zero boundary trace.
    Sk0,
    /// `S_{k,0}` functions additionally vanishing at every vertex.
    Sk0Prime,
    /// Nonconforming Crouzeix-Raviart complement (parity-dependent).
    Bnc,
    /// The basic Crouzeix-Raviart space: `Bnc + S_{k,0}` (even k) or
    /// `Bnc + S'_{k,0}` (odd k).
    CRk0,
    /// Discontinuous pressures: `P_{k-1}` on every tetrahedron.
    Pkm1,
    /// Mean-zero pressures.  Enumerated with the same per-tet basis as
    /// [`Space::Pkm1`]; the constraint is imposed by deflation downstream,
    /// so only [`FeSpace::math_dim`] differs.
    Pkm1Zero,
}

/// Identity of a single degree of freedom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofKey {
    pub kind: DofKind,
    pub entity: usize,
    pub component: usize,
}

/// Geometric/algebraic type of a degree of freedom.  The multi-indices `mu`
/// follow the conforming basis monomials `lambda^(mu + 1_entity)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DofKind {
    /// `lambda_z^k` at an interior vertex.
    VertexNode,
    /// `lambda_a^(mu_0+1) lambda_b^(mu_1+1)` on an interior edge, |mu| = k-2.
    EdgeNode([u8; 2]),
    /// Facet bubble with |mu| = k-3 on an interior facet.
    FacetNode([u8; 3]),
    /// Cell bubble with |mu| = k-4.
    CellNode([u8; 4]),
    /// Cell-type CR function (even k).
    CRCell,
    /// Facet-type CR function on an interior facet (odd k).
    CRFacet,
    /// Pressure monomial `lambda^mu`, |mu| = k-1 (k = 1 or k >= 3).
    PressureMonomial([u8; 4]),
    /// Pressure function `P_1^(0,3)(1 - 2 lambda_z)` = `1 - 5 lambda_z`
    /// for local vertex z (k = 2).
    PressureVertex(u8),
}

/// Polynomial in the four barycentric coordinates of a tetrahedron, stored
/// as merged `(multi-index, coefficient)` terms.
#[derive(Clone, Debug, Default)]
pub struct BaryPoly {
    terms: Vec<([u8; 4], f64)>,
}

impl BaryPoly {
    pub fn zero() -> Self {
        BaryPoly { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        BaryPoly::monomial([0, 0, 0, 0], c)
    }

    pub fn monomial(mu: [u8; 4], c: f64) -> Self {
        let mut p = BaryPoly { terms: vec![(mu, c)] };
        p.normalize();
        p
    }

    /// Substitutes `lambda_slot` into a univariate polynomial.
    pub fn from_univariate(p: &UnivariatePoly, slot: usize) -> Self {
        let mut terms = Vec::new();
        for (i, &c) in p.coeffs().iter().enumerate() {
            let mut mu = [0u8; 4];
            mu[slot] = i as u8;
            terms.push((mu, c));
        }
        let mut p = BaryPoly { terms };
        p.normalize();
        p
    }

    fn normalize(&mut self) {
        self.terms.sort_by_key(|(mu, _)| *mu);
        let mut merged: Vec<([u8; 4], f64)> = Vec::with_capacity(self.terms.len());
        for &(mu, c) in &self.terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == mu => *acc += c,
                _ => merged.push((mu, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.terms = merged;
    }

    pub fn terms(&self) -> &[([u8; 4], f64)] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|(mu, _)| mu.iter().map(|&e| e as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &BaryPoly) -> BaryPoly {
        let mut p = BaryPoly {
            terms: self.terms.iter().chain(&other.terms).copied().collect(),
        };
        p.normalize();
        p
    }

    pub fn scale(&self, s: f64) -> BaryPoly {
        let mut p = BaryPoly {
            terms: self.terms.iter().map(|&(mu, c)| (mu, s * c)).collect(),
        };
        p.normalize();
        p
    }

    pub fn mul(&self, other: &BaryPoly) -> BaryPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(a, ca) in &self.terms {
            for &(b, cb) in &other.terms {
                let mu = [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
                terms.push((mu, ca * cb));
            }
        }
        let mut p = BaryPoly { terms };
        p.normalize();
        p
    }

    pub fn eval(&self, l: &[f64; 4]) -> f64 {
        let mut acc = 0.0;
        for &(mu, c) in &self.terms {
            let mut m = c;
            for (slot, &e) in mu.iter().enumerate() {
                for _ in 0..e {
                    m *= l[slot];
                }
            }
            acc += m;
        }
        acc
    }

    /// Partial derivatives with respect to the four barycentric variables.
    pub fn grad_lambda(&self, l: &[f64; 4]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for &(mu, c) in &self.terms {
            for slot in 0..4 {
                if mu[slot] == 0 {
                    continue;
                }
                let mut m = c * mu[slot] as f64;
                for (s, &e) in mu.iter().enumerate() {
                    let e = if s == slot { e - 1 } else { e };
                    for _ in 0..e {
                        m *= l[s];
                    }
                }
                g[slot] += m;
            }
        }
        g
    }

    /// Rewrites the polynomial as a homogeneous polynomial of the given
    /// total degree using `sum lambda = 1`.
    pub fn homogenize(&self, degree: usize) -> Result<BaryPoly> {
        if self.degree() > degree {
            return Err(Error::InvalidParameter(format!(
                "cannot homogenize degree {} polynomial to degree {degree}",
                self.degree()
            )));
        }
        let mut terms = Vec::new();
        for &(mu, c) in &self.terms {
            let m: usize = mu.iter().map(|&e| e as usize).sum();
            for nu in compositions(degree - m, 4) {
                let mut coeff = c;
                // multinomial (degree-m)! / prod nu_i!
                let mut rem = degree - m;
                for &n in &nu {
                    coeff *= polylib::binom_i128(rem, n as usize) as f64;
                    rem -= n as usize;
                }
                terms.push((
                    [mu[0] + nu[0], mu[1] + nu[1], mu[2] + nu[2], mu[3] + nu[3]],
                    coeff,
                ));
            }
        }
        let mut p = BaryPoly { terms };
        p.normalize();
        Ok(p)
    }
}

/// All compositions of `total` into `parts` nonnegative integers, in
/// lexicographic order with the first component decreasing.
pub(crate) fn compositions(total: usize, parts: usize) -> Vec<Vec<u8>> {
    fn rec(parts: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if parts == 1 {
            let mut v = cur.clone();
            v.push(left as u8);
            out.push(v);
            return;
        }
        for a in (0..=left).rev() {
            cur.push(a as u8);
            rec(parts - 1, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, total, &mut Vec::new(), &mut out);
    out
}

/// A global basis function: one barycentric polynomial per support tet.
#[derive(Clone, Debug)]
pub struct ShapeFunction {
    /// `(tet id, polynomial)`, sorted by tet id.
    parts: Vec<(usize, BaryPoly)>,
}

impl ShapeFunction {
    fn new(mut parts: Vec<(usize, BaryPoly)>) -> Self {
        parts.sort_by_key(|(t, _)| *t);
        ShapeFunction { parts }
    }

    pub fn parts(&self) -> &[(usize, BaryPoly)] {
        &self.parts
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.parts.iter().map(|(t, _)| *t)
    }

    pub fn in_support(&self, tet: usize) -> bool {
        self.part(tet).is_some()
    }

    fn part(&self, tet: usize) -> Option<&BaryPoly> {
        self.parts
            .binary_search_by_key(&tet, |(t, _)| *t)
            .ok()
            .map(|i| &self.parts[i].1)
    }

    /// Value at a barycentric point of `tet`; the flag is false (and the
    /// value zero) outside the support.
    pub fn value(&self, tet: usize, lambda: &[f64; 4]) -> (f64, bool) {
        match self.part(tet) {
            Some(p) => (p.eval(lambda), true),
            None => (0.0, false),
        }
    }

    /// Physical gradient at a barycentric point of `tet`, given the
    /// barycentric gradients of that tet.
    pub fn gradient(
        &self,
        tet: usize,
        lambda: &[f64; 4],
        grads: &[[f64; 3]; 4],
    ) -> ([f64; 3], bool) {
        match self.part(tet) {
            Some(p) => {
                let gl = p.grad_lambda(lambda);
                let mut g = [0.0; 3];
                for slot in 0..4 {
                    for i in 0..3 {
                        g[i] += gl[slot] * grads[slot][i];
                    }
                }
                (g, true)
            }
            None => ([0.0; 3], false),
        }
    }
}

/// An enumerated scalar finite element space on a fixed mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    space: Space,
    k: usize,
    keys: Vec<DofKey>,
    shapes: Vec<ShapeFunction>,
    dofs_per_tet: Vec<Vec<usize>>,
}

impl FeSpace {
    pub fn new(space: Space, mesh: &Mesh, k: usize) -> Result<FeSpace> {
        if !(1..=6).contains(&k) {
            return Err(Error::UnsupportedDegree(format!(
                "polynomial degree {k} outside the supported range 1..6"
            )));
        }
        let mut keys = Vec::new();
        let mut shapes = Vec::new();
        match space {
            Space::Sk0 => conforming(mesh, k, true, &mut keys, &mut shapes),
            Space::Sk0Prime => conforming(mesh, k, false, &mut keys, &mut shapes),
            Space::Bnc => nonconforming(mesh, k, &mut keys, &mut shapes),
            Space::CRk0 => {
                nonconforming(mesh, k, &mut keys, &mut shapes);
                let mut ckeys = Vec::new();
                let mut cshapes = Vec::new();
                conforming(mesh, k, k.is_multiple_of(2), &mut ckeys, &mut cshapes);
                // conforming keys first, CR keys last
                ckeys.append(&mut keys);
                cshapes.append(&mut shapes);
                keys = ckeys;
                shapes = cshapes;
            }
            Space::Pkm1 | Space::Pkm1Zero => pressure(mesh, k, &mut keys, &mut shapes),
        }
        let mut dofs_per_tet = vec![Vec::new(); mesh.num_tets()];
        for (i, s) in shapes.iter().enumerate() {
            for t in s.support() {
                dofs_per_tet[t].push(i);
            }
        }
        Ok(FeSpace { space, k, keys, shapes, dofs_per_tet })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of enumerated basis functions.
    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    /// Mathematical dimension of the space; differs from [`Self::dim`]
    /// only for the mean-zero pressure space, whose constraint is handled
    /// by deflation rather than basis removal.
    pub fn math_dim(&self) -> usize {
        match self.space {
            Space::Pkm1Zero => self.keys.len().saturating_sub(1),
            _ => self.keys.len(),
        }
    }

    pub fn keys(&self) -> &[DofKey] {
        &self.keys
    }

    pub fn shape(&self, dof: usize) -> &ShapeFunction {
        &self.shapes[dof]
    }

    pub fn dofs_on_tet(&self, tet: usize) -> &[usize] {
        &self.dofs_per_tet[tet]
    }

    /// Value of basis function `dof` at a barycentric point of `tet`
    /// (zero outside the support).
    pub fn value(&self, dof: usize, tet: usize, lambda: &[f64; 4]) -> f64 {
        self.shapes[dof].value(tet, lambda).0
    }

    /// Physical gradient of basis function `dof` (zero outside support).
    pub fn gradient(
        &self,
        dof: usize,
        tet: usize,
        lambda: &[f64; 4],
        grads: &[[f64; 3]; 4],
    ) -> [f64; 3] {
        self.shapes[dof].gradient(tet, lambda, grads).0
    }

    /// Expands a barycentric polynomial of degree <= k-1 on `tet` in the
    /// local pressure basis, returning `(global dof, coefficient)` pairs.
    /// Only meaningful for pressure spaces.
    pub fn expand_on_tet(&self, tet: usize, poly: &BaryPoly) -> Result<Vec<(usize, f64)>> {
        if !matches!(self.space, Space::Pkm1 | Space::Pkm1Zero) {
            return Err(Error::InvalidParameter(
                "expand_on_tet requires a pressure space".into(),
            ));
        }
        let deg = self.k - 1;
        let monomials = compositions(deg, 4);
        let index: std::collections::HashMap<[u8; 4], usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, mu)| ([mu[0], mu[1], mu[2], mu[3]], i))
            .collect();
        let locals = self.dofs_on_tet(tet);
        if locals.len() != monomials.len() {
            return Err(Error::DimensionMismatch(format!(
                "tet {tet} carries {} pressure functions, expected {}",
                locals.len(),
                monomials.len()
            )));
        }
        let n = monomials.len();
        let mut a = Matrix::zeros(n, n);
        for (col, &dof) in locals.iter().enumerate() {
            let part = self.shapes[dof]
                .part(tet)
                .expect("support bookkeeping is consistent");
            for &(mu, c) in part.homogenize(deg)?.terms() {
                a[(index[&mu], col)] += c;
            }
        }
        let mut rhs = vec![0.0; n];
        for &(mu, c) in poly.homogenize(deg)?.terms() {
            rhs[index[&mu]] += c;
        }
        let coeffs = linalg::lu_solve(&a, &rhs)?;
        Ok(locals.iter().copied().zip(coeffs).collect())
    }

    /// Coefficient vector of the constant pressure `1`.
    pub fn constant_coefficients(&self) -> Result<Vec<f64>> {
        if !matches!(self.space, Space::Pkm1 | Space::Pkm1Zero) {
            return Err(Error::InvalidParameter(
                "constant_coefficients requires a pressure space".into(),
            ));
        }
        let mut c = vec![0.0; self.dim()];
        let one = BaryPoly::constant(1.0);
        for t in 0..self.dofs_per_tet.len() {
            for (dof, v) in self.expand_on_tet(t, &one)? {
                c[dof] = v;
            }
        }
        Ok(c)
    }
}

/// Convenience wrapper returning only the DoF keys of a space.
pub fn enumerate(space: Space, mesh: &Mesh, k: usize) -> Result<Vec<DofKey>> {
    Ok(FeSpace::new(space, mesh, k)?.keys.clone())
}

fn key(kind: DofKind, entity: usize) -> DofKey {
    DofKey { kind, entity, component: 0 }
}

/// Conforming basis: interior vertices (optional), interior edges, interior
/// facets, cells — each entity by ascending id, multi-indices lexicographic.
fn conforming(
    mesh: &Mesh,
    k: usize,
    with_vertices: bool,
    keys: &mut Vec<DofKey>,
    shapes: &mut Vec<ShapeFunction>,
) {
    if with_vertices {
        for z in 0..mesh.num_vertices() {
            if mesh.vertex_is_boundary(z) {
                continue;
            }
            let patch = mesh.patch(crate::mesh::Entity::Vertex(z)).expect("vertex exists");
            if patch.is_empty() {
                continue;
            }
            let parts = patch
                .iter()
                .map(|&t| {
                    let slot = mesh.local_vertex(t, z).expect("patch tets contain z");
                    let mut mu = [0u8; 4];
                    mu[slot] = k as u8;
                    (t, BaryPoly::monomial(mu, 1.0))
                })
                .collect();
            keys.push(key(DofKind::VertexNode, z));
            shapes.push(ShapeFunction::new(parts));
        }
    }
    if k >= 2 {
        for e in 0..mesh.num_edges() {
            if mesh.edge_is_boundary(e) {
                continue;
            }
            let verts = mesh.edge(e);
            for mu in compositions(k - 2, 2) {
                let parts = mesh
                    .edge_tets(e)
                    .iter()
                    .map(|&t| {
                        let mut m = [0u8; 4];
                        m[mesh.local_vertex(t, verts[0]).expect("edge in tet")] = mu[0] + 1;
                        m[mesh.local_vertex(t, verts[1]).expect("edge in tet")] = mu[1] + 1;
                        (t, BaryPoly::monomial(m, 1.0))
                    })
                    .collect();
                keys.push(key(DofKind::EdgeNode([mu[0], mu[1]]), e));
                shapes.push(ShapeFunction::new(parts));
            }
        }
    }
    if k >= 3 {
        for f in 0..mesh.num_facets() {
            if mesh.facet_is_boundary(f) {
                continue;
            }
            let verts = mesh.facet(f);
            for mu in compositions(k - 3, 3) {
                let parts = mesh
                    .facet_tets(f)
                    .iter()
                    .map(|&t| {
                        let mut m = [0u8; 4];
                        for (i, &v) in verts.iter().enumerate() {
                            m[mesh.local_vertex(t, v).expect("facet in tet")] = mu[i] + 1;
                        }
                        (t, BaryPoly::monomial(m, 1.0))
                    })
                    .collect();
                keys.push(key(DofKind::FacetNode([mu[0], mu[1], mu[2]]), f));
                shapes.push(ShapeFunction::new(parts));
            }
        }
    }
    if k >= 4 {
        for t in 0..mesh.num_tets() {
            for mu in compositions(k - 4, 4) {
                let m = [mu[0] + 1, mu[1] + 1, mu[2] + 1, mu[3] + 1];
                keys.push(key(DofKind::CellNode([mu[0], mu[1], mu[2], mu[3]]), t));
                shapes.push(ShapeFunction::new(vec![(t, BaryPoly::monomial(m, 1.0))]));
            }
        }
    }
}

/// Nonconforming complement: cell functions for even k, interior facet
/// functions for odd k.
fn nonconforming(mesh: &Mesh, k: usize, keys: &mut Vec<DofKey>, shapes: &mut Vec<ShapeFunction>) {
    let q = polylib::q_k(k).compose_affine(1.0, -2.0); // Q_k(1 - 2 t)
    if k.is_multiple_of(2) {
        for t in 0..mesh.num_tets() {
            let mut p = BaryPoly::constant(-1.0);
            for slot in 0..4 {
                p = p.add(&BaryPoly::from_univariate(&q, slot));
            }
            keys.push(key(DofKind::CRCell, t));
            shapes.push(ShapeFunction::new(vec![(t, p)]));
        }
    } else {
        for f in 0..mesh.num_facets() {
            if mesh.facet_is_boundary(f) {
                continue;
            }
            let parts = mesh
                .facet_tets(f)
                .iter()
                .map(|&t| {
                    let z = mesh.opposite_vertex(t, f).expect("facet belongs to tet");
                    let slot = mesh.local_vertex(t, z).expect("opposite vertex in tet");
                    (t, BaryPoly::from_univariate(&q, slot))
                })
                .collect();
            keys.push(key(DofKind::CRFacet, f));
            shapes.push(ShapeFunction::new(parts));
        }
    }
}

/// Per-tet pressure basis: the constant for k = 1, the four functions
/// `1 - 5 lambda_z` for k = 2 (so the low-order pairing matrices come out in
/// the same frame as the analysis), and lambda-monomials of total degree
/// k-1 otherwise.
fn pressure(mesh: &Mesh, k: usize, keys: &mut Vec<DofKey>, shapes: &mut Vec<ShapeFunction>) {
    match k {
        1 => {
            for t in 0..mesh.num_tets() {
                keys.push(key(DofKind::PressureMonomial([0; 4]), t));
                shapes.push(ShapeFunction::new(vec![(t, BaryPoly::constant(1.0))]));
            }
        }
        2 => {
            let p13 = polylib::jacobi(0.0, 3.0, 1).compose_affine(1.0, -2.0);
            for t in 0..mesh.num_tets() {
                for z in 0..4u8 {
                    keys.push(key(DofKind::PressureVertex(z), t));
                    shapes.push(ShapeFunction::new(vec![(
                        t,
                        BaryPoly::from_univariate(&p13, z as usize),
                    )]));
                }
            }
        }
        _ => {
            for t in 0..mesh.num_tets() {
                for mu in compositions(k - 1, 4) {
                    let m = [mu[0], mu[1], mu[2], mu[3]];
                    keys.push(key(DofKind::PressureMonomial(m), t));
                    shapes.push(ShapeFunction::new(vec![(t, BaryPoly::monomial(m, 1.0))]));
                }
            }
        }
    }
}

/// Maximum facet-moment residual of the coefficient vector `v` in the given
/// scalar velocity space: the moments of the inter-element jump (interior
/// facets) or of the trace (boundary facets) against `P_{k-1}(F)`.
/// Membership in the maximal Crouzeix-Raviart space means this vanishes.
pub fn jump_moment_audit(space: &FeSpace, mesh: &Mesh, v: &[f64]) -> Result<f64> {
    if v.len() != space.dim() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient vector has length {}, space has dimension {}",
            v.len(),
            space.dim()
        )));
    }
    let k = space.k;
    let moments = compositions(k - 1, 3);
    let mut worst: f64 = 0.0;
    for f in 0..mesh.num_facets() {
        let fverts = mesh.facet(f);
        let adj = mesh.facet_tets(f);
        // facet-barycentric slots of the facet vertices within each tet
        let sides: Vec<(usize, [usize; 3])> = adj
            .iter()
            .map(|&t| {
                let mut slots = [0usize; 3];
                for (i, &fv) in fverts.iter().enumerate() {
                    slots[i] = mesh.local_vertex(t, fv).expect("facet vertex in tet");
                }
                (t, slots)
            })
            .collect();
        let jump = |nu: &[f64; 3]| -> f64 {
            let mut val = 0.0;
            for (side, &(t, slots)) in sides.iter().enumerate() {
                let mut lambda = [0.0; 4];
                for i in 0..3 {
                    lambda[slots[i]] = nu[i];
                }
                let sign = if side == 0 { 1.0 } else { -1.0 };
                for &dof in space.dofs_on_tet(t) {
                    val += sign * v[dof] * space.value(dof, t, &lambda);
                }
            }
            val
        };
        for mu in &moments {
            let q = [mu[0] as i32, mu[1] as i32, mu[2] as i32];
            let m = quadrature::integrate_facet(mesh, f, 2 * k, |nu, _| {
                jump(nu) * nu[0].powi(q[0]) * nu[1].powi(q[1]) * nu[2].powi(q[2])
            })?;
            worst = worst.max(m.abs());
        }
    }
    Ok(worst)
}

/// Smallest singular value of the `L^2 + broken H^1` Gram matrix of the
/// enumerated `CR_{k,0}` basis; positivity certifies that the conforming
/// and nonconforming parts form a direct sum.
pub fn direct_sum_audit(mesh: &Mesh, k: usize) -> Result<f64> {
    let space = FeSpace::new(Space::CRk0, mesh, k)?;
    let n = space.dim();
    let mut gram = Matrix::zeros(n, n);
    for t in 0..mesh.num_tets() {
        let grads = mesh.barycentric_gradients(t)?;
        let dofs = space.dofs_on_tet(t);
        for (a, &i) in dofs.iter().enumerate() {
            for &j in &dofs[a..] {
                let v = quadrature::integrate_tet(mesh, t, 2 * k, |l, _| {
                    let gi = space.gradient(i, t, l, &grads);
                    let gj = space.gradient(j, t, l, &grads);
                    space.value(i, t, l) * space.value(j, t, l)
                        + gi[0] * gj[0]
                        + gi[1] * gj[1]
                        + gi[2] * gj[2]
                })?;
                gram[(i, j)] += v;
                if i != j {
                    gram[(j, i)] += v;
                }
            }
        }
    }
    let sigma = linalg::singular_values(&gram)?;
    Ok(sigma.last().copied().unwrap_or(0.0))
}

/// Vertex-value system of three facet-type CR functions meeting at the
/// vertices of a shared tetrahedron (odd k): diagonal `Q_k(-1)`, off-diagonal
/// `Q_k(1)`.  Its determinant `-(k-1)(k+2)^2` being nonzero is the
/// independence argument behind the direct sum for odd k.
pub fn direct_sum_endpoint_matrix(k: usize) -> Matrix {
    let (at_one, at_minus_one) = polylib::q_k_endpoints(k);
    let mut m = Matrix::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = if i == j { at_minus_one as f64 } else { at_one as f64 };
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, MeshKind};
    use rand::{Rng, SeedableRng};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(2024)
    }

    fn random_bary(rng: &mut impl Rng) -> [f64; 4] {
        let mut v = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let s: f64 = v.iter().sum();
        for x in &mut v {
            *x /= s;
        }
        v
    }

    #[test]
    fn bary_poly_eval_and_grad() {
        // p = 2 l0^2 l3 - l1
        let p = BaryPoly::monomial([2, 0, 0, 1], 2.0).add(&BaryPoly::monomial([0, 1, 0, 0], -1.0));
        let l = [0.5, 0.2, 0.1, 0.2];
        assert!((p.eval(&l) - (2.0 * 0.25 * 0.2 - 0.2)).abs() < 1e-15);
        let g = p.grad_lambda(&l);
        assert!((g[0] - 4.0 * 0.5 * 0.2).abs() < 1e-15);
        assert!((g[1] + 1.0).abs() < 1e-15);
        assert!((g[3] - 2.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn homogenize_preserves_values_on_simplex() {
        let mut r = rng();
        let p = BaryPoly::monomial([1, 0, 0, 0], 3.0)
            .add(&BaryPoly::constant(-2.0))
            .add(&BaryPoly::monomial([0, 0, 2, 0], 1.5));
        let h = p.homogenize(4).unwrap();
        for _ in 0..20 {
            let l = random_bary(&mut r);
            assert!((p.eval(&l) - h.eval(&l)).abs() < 1e-13);
        }
        assert!(h.terms().iter().all(|(mu, _)| mu.iter().map(|&e| e as usize).sum::<usize>() == 4));
        assert!(p.homogenize(0).is_err());
    }

    #[test]
    fn dimension_examples() {
        let patch = generate(MeshKind::InnerCriticalPatch).unwrap();
        // k = 1: four interior facets carry the CR functions, S'_{1,0} = {0}
        assert_eq!(enumerate(Space::Bnc, &patch, 1).unwrap().len(), 4);
        assert_eq!(enumerate(Space::Sk0Prime, &patch, 1).unwrap().len(), 0);
        assert_eq!(enumerate(Space::CRk0, &patch, 1).unwrap().len(), 4);

        let reference = generate(MeshKind::Reference).unwrap();
        assert_eq!(enumerate(Space::Bnc, &reference, 2).unwrap().len(), 1);
        assert_eq!(enumerate(Space::Sk0, &reference, 2).unwrap().len(), 0);
        assert_eq!(enumerate(Space::CRk0, &reference, 2).unwrap().len(), 1);

        let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
        assert_eq!(enumerate(Space::Bnc, &kuhn, 2).unwrap().len(), 6);
        // one interior edge (the cube diagonal) contributes k-1 = 1 key
        assert_eq!(enumerate(Space::CRk0, &kuhn, 2).unwrap().len(), 7);
    }

    #[test]
    fn pressure_dimensions() {
        let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
        for k in 1..=4usize {
            let dim = enumerate(Space::Pkm1, &kuhn, k).unwrap().len();
            let per_tet = polylib::binom_i128(k + 2, 3) as usize;
            assert_eq!(dim, 6 * per_tet);
            let zero = FeSpace::new(Space::Pkm1Zero, &kuhn, k).unwrap();
            assert_eq!(zero.dim(), dim);
            assert_eq!(zero.math_dim(), dim - 1);
        }
    }

    #[test]
    fn degree_range_is_enforced() {
        let m = generate(MeshKind::Reference).unwrap();
        assert!(matches!(
            FeSpace::new(Space::CRk0, &m, 0),
            Err(Error::UnsupportedDegree(_))
        ));
        assert!(matches!(
            FeSpace::new(Space::CRk0, &m, 7),
            Err(Error::UnsupportedDegree(_))
        ));
    }

    #[test]
    fn sprime_has_no_vertex_keys_and_vanishes_at_vertices() {
        let kuhn = generate(MeshKind::KuhnCube(2)).unwrap();
        for k in 2..=4usize {
            let sp = FeSpace::new(Space::Sk0Prime, &kuhn, k).unwrap();
            assert!(sp.keys().iter().all(|key| !matches!(key.kind, DofKind::VertexNode)));
            for dof in 0..sp.dim() {
                for t in sp.shape(dof).support() {
                    for z in 0..4 {
                        let mut l = [0.0; 4];
                        l[z] = 1.0;
                        assert!(sp.value(dof, t, &l).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn conforming_basis_has_zero_boundary_trace() {
        let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
        let mut r = rng();
        for k in 2..=4usize {
            let s = FeSpace::new(Space::Sk0, &kuhn, k).unwrap();
            for f in 0..kuhn.num_facets() {
                if !kuhn.facet_is_boundary(f) {
                    continue;
                }
                let t = kuhn.facet_tets(f)[0];
                let fverts = kuhn.facet(f);
                for _ in 0..5 {
                    // random point on the boundary facet in tet coordinates
                    let mut w = [r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>()];
                    let ws: f64 = w.iter().sum();
                    w.iter_mut().for_each(|x| *x /= ws);
                    let mut lambda = [0.0; 4];
                    for (i, &fv) in fverts.iter().enumerate() {
                        lambda[kuhn.local_vertex(t, fv).unwrap()] = w[i];
                    }
                    for dof in 0..s.dim() {
                        assert!(
                            s.value(dof, t, &lambda).abs() < 1e-13,
                            "conforming dof {dof} must vanish on boundary facets"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn conforming_basis_is_continuous_across_facets() {
        let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
        let mut r = rng();
        for k in [2usize, 4] {
            let s = FeSpace::new(Space::Sk0, &kuhn, k).unwrap();
            for f in 0..kuhn.num_facets() {
                let adj = kuhn.facet_tets(f);
                if adj.len() != 2 {
                    continue;
                }
                let fverts = kuhn.facet(f);
                for _ in 0..4 {
                    let mut w = [r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>()];
                    let ws: f64 = w.iter().sum();
                    w.iter_mut().for_each(|x| *x /= ws);
                    let lam = |t: usize| {
                        let mut lambda = [0.0; 4];
                        for (i, &fv) in fverts.iter().enumerate() {
                            lambda[kuhn.local_vertex(t, fv).unwrap()] = w[i];
                        }
                        lambda
                    };
                    let (l0, l1) = (lam(adj[0]), lam(adj[1]));
                    for dof in 0..s.dim() {
                        let a = s.value(dof, adj[0], &l0);
                        let b = s.value(dof, adj[1], &l1);
                        assert!((a - b).abs() < 1e-13, "dof {dof} jumps across facet {f}");
                    }
                }
            }
        }
    }

    #[test]
    fn lowest_order_cr_is_one_minus_three_lambda() {
        let patch = generate(MeshKind::OuterCriticalPatch(2)).unwrap();
        let space = FeSpace::new(Space::CRk0, &patch, 1).unwrap();
        assert_eq!(space.dim(), 1);
        let f = match space.keys()[0].kind {
            DofKind::CRFacet => space.keys()[0].entity,
            _ => panic!("k = 1 basis must be facet-type"),
        };
        let mut r = rng();
        for &t in patch.facet_tets(f) {
            let z = patch.opposite_vertex(t, f).unwrap();
            let slot = patch.local_vertex(t, z).unwrap();
            for _ in 0..10 {
                let l = random_bary(&mut r);
                let expected = 1.0 - 3.0 * l[slot];
                assert!((space.value(0, t, &l) - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_cell_function_matches_legendre_form() {
        let reference = generate(MeshKind::Reference).unwrap();
        let space = FeSpace::new(Space::Bnc, &reference, 2).unwrap();
        let l2 = polylib::legendre(2);
        let mut r = rng();
        for _ in 0..20 {
            let l = random_bary(&mut r);
            let sum: f64 = l.iter().map(|&x| l2.eval(1.0 - 2.0 * x)).sum();
            let expected = 5.0 / 3.0 * (sum - 1.0);
            assert!((space.value(0, 0, &l) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn facet_type_cr_has_unit_trace_from_both_sides() {
        let patch = generate(MeshKind::OuterCriticalPatch(2)).unwrap();
        let mut r = rng();
        for k in [1usize, 3, 5] {
            let space = FeSpace::new(Space::Bnc, &patch, k).unwrap();
            assert_eq!(space.dim(), 1, "one interior facet");
            let f = space.keys()[0].entity;
            let fverts = patch.facet(f);
            for &t in patch.facet_tets(f) {
                for _ in 0..6 {
                    let mut w = [r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>()];
                    let ws: f64 = w.iter().sum();
                    w.iter_mut().for_each(|x| *x /= ws);
                    let mut lambda = [0.0; 4];
                    for (i, &fv) in fverts.iter().enumerate() {
                        lambda[patch.local_vertex(t, fv).unwrap()] = w[i];
                    }
                    assert!(
                        (space.value(0, t, &lambda) - 1.0).abs() < 1e-13,
                        "facet CR function has trace Q_k(1) = 1 on its facet"
                    );
                }
            }
        }
    }

    #[test]
    fn even_cell_function_trace_identity() {
        // on a facet F, the cell function restricts to
        // sum_{y in V(F)} Q_k(1 - 2 lambda_y), since the opposite term is 1
        let reference = generate(MeshKind::Reference).unwrap();
        let mut r = rng();
        for k in [2usize, 4, 6] {
            let space = FeSpace::new(Space::Bnc, &reference, k).unwrap();
            let q = polylib::q_k(k).compose_affine(1.0, -2.0);
            for opposite in 0..4usize {
                for _ in 0..10 {
                    let mut l = random_bary(&mut r);
                    // project onto the facet lambda_opposite = 0
                    let rest: f64 = 1.0 - l[opposite];
                    l.iter_mut().for_each(|x| *x /= rest);
                    l[opposite] = 0.0;
                    let expected: f64 = (0..4)
                        .filter(|&y| y != opposite)
                        .map(|y| q.eval(l[y]))
                        .sum();
                    assert!((space.value(0, 0, &l) - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn jump_moments_vanish_for_conforming_functions() {
        let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
        let space = FeSpace::new(Space::CRk0, &kuhn, 2).unwrap();
        // the single conforming key (interior edge) comes first
        assert!(matches!(space.keys()[0].kind, DofKind::EdgeNode(_)));
        let mut v = vec![0.0; space.dim()];
        v[0] = 1.0;
        let res = jump_moment_audit(&space, &kuhn, &v).unwrap();
        assert!(res < 1e-12, "conforming functions have no jumps, residual {res:.3e}");
    }

    #[test]
    fn jump_moments_vanish_for_cell_type_cr() {
        let reference = generate(MeshKind::Reference).unwrap();
        for k in [2usize, 4, 6] {
            let space = FeSpace::new(Space::CRk0, &reference, k).unwrap();
            let cr = space
                .keys()
                .iter()
                .position(|key| matches!(key.kind, DofKind::CRCell))
                .unwrap();
            let mut v = vec![0.0; space.dim()];
            v[cr] = 1.0;
            let res = jump_moment_audit(&space, &reference, &v).unwrap();
            assert!(res < 1e-12, "k = {k}: cell CR facet moments must vanish, got {res:.3e}");
        }
    }

    #[test]
    fn jump_moments_vanish_for_facet_type_cr() {
        let patch = generate(MeshKind::OuterCriticalPatch(2)).unwrap();
        for k in [1usize, 3, 5] {
            let space = FeSpace::new(Space::CRk0, &patch, k).unwrap();
            let cr = space
                .keys()
                .iter()
                .position(|key| matches!(key.kind, DofKind::CRFacet))
                .unwrap();
            let mut v = vec![0.0; space.dim()];
            v[cr] = 1.0;
            let res = jump_moment_audit(&space, &patch, &v).unwrap();
            assert!(res < 1e-12, "k = {k}: facet CR moments must vanish, got {res:.3e}");
        }
    }

    #[test]
    fn random_cr_combinations_stay_jump_orthogonal() {
        let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
        let mut r = rng();
        for k in [2usize, 3] {
            let space = FeSpace::new(Space::CRk0, &kuhn, k).unwrap();
            let v: Vec<f64> = (0..space.dim()).map(|_| 2.0 * r.gen::<f64>() - 1.0).collect();
            let res = jump_moment_audit(&space, &kuhn, &v).unwrap();
            assert!(res < 1e-11, "k = {k}: whole space is jump-orthogonal, got {res:.3e}");
        }
    }

    #[test]
    fn direct_sum_audit_is_positive() {
        let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
        for k in 1..=3usize {
            let sigma = direct_sum_audit(&kuhn, k).unwrap();
            assert!(sigma > 1e-8, "k = {k}: Gram min singular value {sigma:.3e}");
        }
    }

    #[test]
    fn endpoint_matrix_determinant() {
        for k in [3usize, 5] {
            let m = direct_sum_endpoint_matrix(k);
            let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
            let kf = k as f64;
            let expected = -(kf - 1.0) * (kf + 2.0) * (kf + 2.0);
            assert!((det - expected).abs() < 1e-9, "k = {k}: det {det}, expected {expected}");
            if k == 3 {
                assert!((det + 50.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn general_dimension_q_satisfies_cr_conditions() {
        // Q_{d,k}(1 - 2 nu_j) on a facet of the reference d-simplex:
        // unit value on the opposite facet and vanishing moments against
        // P_{k-1} on facets containing the vertex
        for d in 2..=4usize {
            for k in 1..=5usize {
                let q = polylib::q_dk(d, k).unwrap().compose_affine(1.0, -2.0);
                assert!((q.eval(0.0) - 1.0).abs() < 1e-11, "trace value Q(1) = 1");
                // facet = reference (d-1)-simplex; vertex z occupies bary
                // slot 0, so lambda_z restricted to the facet is
                // nu_0 = 1 - sum of the quadrature coordinates
                let rule_degree = k + 1 + q.degree();
                let moment = |kappa: &[u8]| -> f64 {
                    if d == 2 {
                        let rule = quadrature::gauss_1d(rule_degree / 2 + 1);
                        rule.integrate(|x| {
                            let nu0 = 1.0 - x[0];
                            let mut m = q.eval(nu0);
                            m *= nu0.powi(kappa[0] as i32);
                            m * x[0].powi(kappa[1] as i32)
                        })
                    } else {
                        let rule = quadrature::simplex_rule(d - 1, rule_degree).unwrap();
                        rule.integrate(|x| {
                            let nu0 = 1.0 - x.iter().sum::<f64>();
                            let mut m = q.eval(nu0) * nu0.powi(kappa[0] as i32);
                            for (i, &e) in kappa[1..].iter().enumerate() {
                                m *= x[i].powi(e as i32);
                            }
                            m
                        })
                    }
                };
                for kappa in compositions(k - 1, d) {
                    let val = moment(&kappa);
                    assert!(
                        val.abs() < 1e-11,
                        "d = {d}, k = {k}, kappa = {kappa:?}: moment {val:.3e}"
                    );
                }
            }
        }
    }

    #[test]
    fn pressure_expansion_round_trips() {
        let patch = generate(MeshKind::InnerCriticalPatch).unwrap();
        let mut r = rng();
        for k in 1..=4usize {
            let space = FeSpace::new(Space::Pkm1, &patch, k).unwrap();
            // expand P_{k-1}^{(0,3)}(1 - 2 lambda_0) on tet 2 and re-evaluate
            let jac = polylib::jacobi(0.0, 3.0, k - 1).compose_affine(1.0, -2.0);
            let target = BaryPoly::from_univariate(&jac, 0);
            let coeffs = space.expand_on_tet(2, &target).unwrap();
            for _ in 0..10 {
                let l = random_bary(&mut r);
                let direct = target.eval(&l);
                let expanded: f64 =
                    coeffs.iter().map(|&(dof, c)| c * space.value(dof, 2, &l)).sum();
                assert!((direct - expanded).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn constant_pressure_coefficients() {
        let patch = generate(MeshKind::InnerCriticalPatch).unwrap();
        let mut r = rng();
        for k in 1..=4usize {
            let space = FeSpace::new(Space::Pkm1, &patch, k).unwrap();
            let c = space.constant_coefficients().unwrap();
            match k {
                1 => assert!(c.iter().all(|&x| (x - 1.0).abs() < 1e-13)),
                2 => assert!(
                    c.iter().all(|&x| (x + 1.0).abs() < 1e-12),
                    "sum_z (1 - 5 lambda_z) = -1 forces all coefficients to -1"
                ),
                _ => {}
            }
            for t in 0..patch.num_tets() {
                let l = random_bary(&mut r);
                let val: f64 = space
                    .dofs_on_tet(t)
                    .iter()
                    .map(|&dof| c[dof] * space.value(dof, t, &l))
                    .sum();
                assert!((val - 1.0).abs() < 1e-11, "k = {k}: constant expansion");
            }
        }
    }
}
