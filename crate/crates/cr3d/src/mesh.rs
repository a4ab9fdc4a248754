//! Conforming tetrahedral meshes with derived topology and critical-edge
//! detection.
//!
//! A [`Mesh`] owns vertex coordinates and tetrahedra (as vertex index
//! 4-tuples, reoriented to positive volume at build time) and derives facet
//! and edge tables, adjacency, boundary flags, and barycentric geometry.
//! Everything is immutable after [`Mesh::build`], so queries are read-only
//! and thread-safe.
//!
//! An edge is *critical* when all mesh facets containing it lie in at most
//! two planes.  Interior critical edges are always shared by exactly four
//! tetrahedra, whose cyclic ordering around the edge alternates the two
//! planes; boundary critical edges carry one, two, or three tetrahedra in
//! path order.  [`Mesh::detect_critical_edges`] reports these patches in a
//! deterministic ordering (lowest tet id first) on which the sign pattern of
//! the associated critical pressure modes relies.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub(crate) fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Local vertex pairs of the six edges of a tetrahedron.
pub const TET_EDGE_PAIRS: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Conforming tetrahedral mesh with precomputed topology.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    volumes: Vec<f64>,
    grads: Vec<[[f64; 3]; 4]>,
    facets: Vec<[usize; 3]>,
    facet_tets: Vec<Vec<usize>>,
    edges: Vec<[usize; 2]>,
    edge_tets: Vec<Vec<usize>>,
    edge_facets: Vec<Vec<usize>>,
    tet_facets: Vec<[usize; 4]>,
    tet_edges: Vec<[usize; 6]>,
    facet_boundary: Vec<bool>,
    edge_boundary: Vec<bool>,
    vertex_boundary: Vec<bool>,
    vertex_tets: Vec<Vec<usize>>,
    diameter: f64,
}

/// Mesh entity selector for patch queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entity {
    Facet(usize),
    Edge(usize),
    Vertex(usize),
}

/// Built-in mesh families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshKind {
    /// The reference tetrahedron with vertices 0, e1, e2, e3.
    Reference,
    /// Four tetrahedra sharing the interior edge from (0,0,0) to (0,0,1),
    /// with all facets containing that edge in the planes x = 0 and y = 0.
    InnerCriticalPatch,
    /// Boundary critical-edge patch with 1, 2, or 3 tetrahedra.
    OuterCriticalPatch(usize),
    /// Unit cube split into n^3 subcubes of 6 tetrahedra each (Kuhn
    /// triangulation), conforming.
    KuhnCube(usize),
}

/// Classification of a critical edge by its position in the mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Inner,
    Outer,
}

/// A detected critical edge together with its ordered patch.
///
/// For inner edges `tets` is the cyclic ordering around the edge starting at
/// the lowest tet id and moving towards its lower-id neighbor; consecutive
/// tets share a facet and the shared facets alternate between the two
/// planes.  For outer edges `tets` is the path ordering starting at the
/// lower-id end.  The alternating-sign structure of critical pressure modes
/// is defined relative to this ordering.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalEdgeRecord {
    pub edge: usize,
    pub endpoints: [usize; 2],
    pub kind: CriticalKind,
    pub tets: Vec<usize>,
    pub planes: Vec<[f64; 3]>,
    pub iota: usize,
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
}

fn signed_volume(v: &[[f64; 3]; 4]) -> f64 {
    let a = sub3(v[1], v[0]);
    let b = sub3(v[2], v[0]);
    let c = sub3(v[3], v[0]);
    dot3(a, cross3(b, c)) / 6.0
}

impl Mesh {
    /// Builds a mesh from raw vertex and tetrahedron lists.
    ///
    /// Tetrahedra are reoriented to positive signed volume (swapping the
    /// last two vertices where needed), then the facet/edge tables and
    /// boundary flags are derived.  Fails if an index is out of range, a
    /// tetrahedron is degenerate relative to the bounding-box scale, or a
    /// facet is shared by more than two tetrahedra.
    pub fn build(vertices: Vec<[f64; 3]>, tets: Vec<[usize; 4]>) -> Result<Mesh> {
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v >= vertices.len() {
                    return Err(Error::IndexOutOfRange(format!(
                        "tet {t} references vertex {v}, mesh has {}",
                        vertices.len()
                    )));
                }
            }
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &vertices {
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        let diameter = if vertices.is_empty() { 0.0 } else { norm3(sub3(hi, lo)) };

        let mut canonical = Vec::with_capacity(tets.len());
        let mut volumes = Vec::with_capacity(tets.len());
        let mut grads = Vec::with_capacity(tets.len());
        for (t, tet) in tets.iter().enumerate() {
            let mut tet = *tet;
            let coords = |tet: &[usize; 4]| {
                [
                    vertices[tet[0]],
                    vertices[tet[1]],
                    vertices[tet[2]],
                    vertices[tet[3]],
                ]
            };
            let mut vol = signed_volume(&coords(&tet));
            if vol < 0.0 {
                tet.swap(2, 3);
                vol = -vol;
            }
            if vol <= 1e-14 * diameter.powi(3) {
                return Err(Error::Degenerate(format!(
                    "tet {t} has volume {vol:.3e} below the degeneracy threshold"
                )));
            }
            volumes.push(vol);
            grads.push(barycentric_gradients_of(&coords(&tet), vol));
            canonical.push(tet);
        }

        // facet and edge tables keyed by sorted vertex tuples
        let mut facet_ids: std::collections::HashMap<[usize; 3], usize> =
            std::collections::HashMap::new();
        let mut facets = Vec::new();
        let mut facet_tets: Vec<Vec<usize>> = Vec::new();
        let mut tet_facets = Vec::with_capacity(canonical.len());
        for (t, tet) in canonical.iter().enumerate() {
            let mut ids = [0usize; 4];
            for (local, id_slot) in ids.iter_mut().enumerate() {
                let mut key: Vec<usize> =
                    (0..4).filter(|&j| j != local).map(|j| tet[j]).collect();
                key.sort_unstable();
                let key = [key[0], key[1], key[2]];
                let id = *facet_ids.entry(key).or_insert_with(|| {
                    facets.push(key);
                    facet_tets.push(Vec::new());
                    facets.len() - 1
                });
                facet_tets[id].push(t);
                *id_slot = id;
            }
            tet_facets.push(ids);
        }
        for (f, adj) in facet_tets.iter().enumerate() {
            if adj.len() > 2 {
                return Err(Error::NonConforming(format!(
                    "facet {:?} is shared by {} tetrahedra",
                    facets[f],
                    adj.len()
                )));
            }
        }

        let mut edge_ids: std::collections::HashMap<[usize; 2], usize> =
            std::collections::HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tets: Vec<Vec<usize>> = Vec::new();
        let mut tet_edges = Vec::with_capacity(canonical.len());
        for (t, tet) in canonical.iter().enumerate() {
            let mut ids = [0usize; 6];
            for (slot, pair) in TET_EDGE_PAIRS.iter().enumerate() {
                let mut key = [tet[pair[0]], tet[pair[1]]];
                key.sort_unstable();
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tets.push(Vec::new());
                    edges.len() - 1
                });
                edge_tets[id].push(t);
                ids[slot] = id;
            }
            tet_edges.push(ids);
        }

        let mut edge_facets: Vec<Vec<usize>> = vec![Vec::new(); edges.len()];
        for (f, facet) in facets.iter().enumerate() {
            for pair in [[0, 1], [0, 2], [1, 2]] {
                let key = [facet[pair[0]], facet[pair[1]]];
                let id = edge_ids[&key];
                edge_facets[id].push(f);
            }
        }

        let facet_boundary: Vec<bool> = facet_tets.iter().map(|adj| adj.len() == 1).collect();
        let mut edge_boundary = vec![false; edges.len()];
        let mut vertex_boundary = vec![false; vertices.len()];
        for (f, facet) in facets.iter().enumerate() {
            if facet_boundary[f] {
                for &v in facet {
                    vertex_boundary[v] = true;
                }
                for pair in [[0, 1], [0, 2], [1, 2]] {
                    let key = [facet[pair[0]], facet[pair[1]]];
                    edge_boundary[edge_ids[&key]] = true;
                }
            }
        }

        let mut vertex_tets: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
        for (t, tet) in canonical.iter().enumerate() {
            for &v in tet {
                vertex_tets[v].push(t);
            }
        }

        Ok(Mesh {
            vertices,
            tets: canonical,
            volumes,
            grads,
            facets,
            facet_tets,
            edges,
            edge_tets,
            edge_facets,
            tet_facets,
            tet_edges,
            facet_boundary,
            edge_boundary,
            vertex_boundary,
            vertex_tets,
            diameter,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        self.vertices[i]
    }

    /// Vertex indices of tetrahedron `t` in canonical (positive) orientation.
    pub fn tet(&self, t: usize) -> [usize; 4] {
        self.tets[t]
    }

    pub fn tet_vertices(&self, t: usize) -> Result<[[f64; 3]; 4]> {
        let tet = self.tets.get(t).ok_or_else(|| {
            Error::IndexOutOfRange(format!("tet {t} of {}", self.tets.len()))
        })?;
        Ok([
            self.vertices[tet[0]],
            self.vertices[tet[1]],
            self.vertices[tet[2]],
            self.vertices[tet[3]],
        ])
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.volumes[t]
    }

    /// Sorted vertex triple of facet `f`.
    pub fn facet(&self, f: usize) -> [usize; 3] {
        self.facets[f]
    }

    pub fn facet_vertices(&self, f: usize) -> Result<[[f64; 3]; 3]> {
        let facet = self.facets.get(f).ok_or_else(|| {
            Error::IndexOutOfRange(format!("facet {f} of {}", self.facets.len()))
        })?;
        Ok([
            self.vertices[facet[0]],
            self.vertices[facet[1]],
            self.vertices[facet[2]],
        ])
    }

    pub fn facet_area(&self, f: usize) -> Result<f64> {
        let v = self.facet_vertices(f)?;
        Ok(0.5 * norm3(cross3(sub3(v[1], v[0]), sub3(v[2], v[0]))))
    }

    /// Unit normal of facet `f`, sign-canonicalized so its first nonzero
    /// component is positive.
    pub fn facet_normal(&self, f: usize) -> Result<[f64; 3]> {
        let v = self.facet_vertices(f)?;
        let mut n = cross3(sub3(v[1], v[0]), sub3(v[2], v[0]));
        let len = norm3(n);
        if len == 0.0 {
            return Err(Error::Degenerate(format!("facet {f} has zero area")));
        }
        for c in &mut n {
            *c /= len;
        }
        for c in n {
            if c.abs() > 1e-13 {
                if c < 0.0 {
                    n = [-n[0], -n[1], -n[2]];
                }
                break;
            }
        }
        Ok(n)
    }

    pub fn facet_tets(&self, f: usize) -> &[usize] {
        &self.facet_tets[f]
    }

    /// Sorted vertex pair of edge `e`.
    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn edge_tets(&self, e: usize) -> &[usize] {
        &self.edge_tets[e]
    }

    pub fn edge_facets(&self, e: usize) -> &[usize] {
        &self.edge_facets[e]
    }

    /// Facet ids of tetrahedron `t`; slot `j` holds the facet opposite the
    /// tet's local vertex `j`.
    pub fn tet_facets(&self, t: usize) -> [usize; 4] {
        self.tet_facets[t]
    }

    /// Edge ids of tetrahedron `t` in [`TET_EDGE_PAIRS`] slot order.
    pub fn tet_edges(&self, t: usize) -> [usize; 6] {
        self.tet_edges[t]
    }

    pub fn facet_index(&self, verts: &[usize; 3]) -> Option<usize> {
        let mut key = *verts;
        key.sort_unstable();
        self.facets.iter().position(|f| *f == key)
    }

    pub fn edge_index(&self, verts: &[usize; 2]) -> Option<usize> {
        let mut key = *verts;
        key.sort_unstable();
        self.edges.iter().position(|e| *e == key)
    }

    pub fn facet_is_boundary(&self, f: usize) -> bool {
        self.facet_boundary[f]
    }

    pub fn edge_is_boundary(&self, e: usize) -> bool {
        self.edge_boundary[e]
    }

    pub fn vertex_is_boundary(&self, v: usize) -> bool {
        self.vertex_boundary[v]
    }

    /// Bounding-box diagonal of the vertex set.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// The set of tetrahedra containing the given entity (facet, edge, or
    /// nodal patch).
    pub fn patch(&self, entity: Entity) -> Result<Vec<usize>> {
        match entity {
            Entity::Facet(f) => self
                .facet_tets
                .get(f)
                .cloned()
                .ok_or_else(|| Error::UnknownEntity(format!("facet {f}"))),
            Entity::Edge(e) => self
                .edge_tets
                .get(e)
                .cloned()
                .ok_or_else(|| Error::UnknownEntity(format!("edge {e}"))),
            Entity::Vertex(v) => self
                .vertex_tets
                .get(v)
                .cloned()
                .ok_or_else(|| Error::UnknownEntity(format!("vertex {v}"))),
        }
    }

    /// Barycentric coordinates of `point` with respect to tetrahedron `t`,
    /// ordered like the canonical vertex list of `t`.
    pub fn barycentric(&self, t: usize, point: [f64; 3]) -> Result<[f64; 4]> {
        let verts = self.tet_vertices(t)?;
        let grads = self.grads[t];
        let mut lambda = [0.0; 4];
        for i in 0..4 {
            // lambda_i is affine with gradient grads[i] and value 1 at vertex i
            lambda[i] = 1.0 + dot3(grads[i], sub3(point, verts[i]));
        }
        Ok(lambda)
    }

    /// Constant gradients of the four barycentric coordinates of `t`.
    pub fn barycentric_gradients(&self, t: usize) -> Result<[[f64; 3]; 4]> {
        if t >= self.tets.len() {
            return Err(Error::IndexOutOfRange(format!("tet {t} of {}", self.tets.len())));
        }
        Ok(self.grads[t])
    }

    /// The vertex of tetrahedron `t` not contained in facet `f`.
    pub fn opposite_vertex(&self, t: usize, f: usize) -> Result<usize> {
        let facet = self
            .facets
            .get(f)
            .ok_or_else(|| Error::UnknownEntity(format!("facet {f}")))?;
        self.tets
            .get(t)
            .ok_or_else(|| Error::IndexOutOfRange(format!("tet {t}")))?
            .iter()
            .copied()
            .find(|v| !facet.contains(v))
            .ok_or_else(|| {
                Error::UnknownEntity(format!("facet {f} is not a facet of tet {t}"))
            })
    }

    /// Local index of global vertex `v` within tetrahedron `t`, if present.
    pub fn local_vertex(&self, t: usize, v: usize) -> Option<usize> {
        self.tets[t].iter().position(|&w| w == v)
    }

    /// Detects all critical edges: edges whose containing facets lie in at
    /// most two planes (up to `tol`, measured relative to the patch
    /// diameter).  Patches that cannot carry the documented ordering (an
    /// interior edge without exactly four tets, or a boundary edge with more
    /// than three) are skipped.
    pub fn detect_critical_edges(&self, tol: f64) -> Vec<CriticalEdgeRecord> {
        let mut records = Vec::new();
        for e in 0..self.edges.len() {
            if let Some(rec) = self.classify_edge(e, tol) {
                records.push(rec);
            }
        }
        records
    }

    fn classify_edge(&self, e: usize, tol: f64) -> Option<CriticalEdgeRecord> {
        let facets = &self.edge_facets[e];
        // patch diameter for the relative coplanarity test
        let mut patch_verts: Vec<usize> = Vec::new();
        for &f in facets {
            patch_verts.extend_from_slice(&self.facets[f]);
        }
        patch_verts.sort_unstable();
        patch_verts.dedup();
        let mut diam: f64 = 0.0;
        for (i, &a) in patch_verts.iter().enumerate() {
            for &b in &patch_verts[i + 1..] {
                diam = diam.max(norm3(sub3(self.vertices[a], self.vertices[b])));
            }
        }

        // greedy clustering of facet planes: same cluster iff normals are
        // parallel up to sign and all supporting points lie on the plane
        let mut clusters: Vec<([f64; 3], [f64; 3])> = Vec::new(); // (normal, point)
        for &f in facets {
            let n = self.facet_normal(f).ok()?;
            let verts = self.facet_vertices(f).ok()?;
            let mut matched = false;
            for (cn, cx) in &clusters {
                let parallel = norm3(cross3(*cn, n)) <= tol;
                let coplanar = verts
                    .iter()
                    .all(|v| dot3(*cn, sub3(*v, *cx)).abs() <= tol * diam);
                if parallel && coplanar {
                    matched = true;
                    break;
                }
            }
            if !matched {
                clusters.push((n, verts[0]));
            }
        }
        if clusters.len() > 2 {
            return None;
        }

        let patch = &self.edge_tets[e];
        let inner = !self.edge_boundary[e];
        if inner && patch.len() != 4 {
            return None;
        }
        if !inner && !(1..=3).contains(&patch.len()) {
            return None;
        }
        let ordered = self.order_edge_patch(e, inner)?;
        Some(CriticalEdgeRecord {
            edge: e,
            endpoints: self.edges[e],
            kind: if inner { CriticalKind::Inner } else { CriticalKind::Outer },
            iota: ordered.len(),
            tets: ordered,
            planes: clusters.iter().map(|(n, _)| *n).collect(),
        })
    }

    /// Orders the tets around edge `e` so that consecutive entries share a
    /// facet containing `e`: a cycle (inner) or a path (outer), starting at
    /// the lowest tet id and breaking ties towards the lower-id neighbor.
    fn order_edge_patch(&self, e: usize, inner: bool) -> Option<Vec<usize>> {
        let patch = &self.edge_tets[e];
        if patch.len() == 1 {
            return Some(patch.clone());
        }
        // adjacency within the patch via shared facets containing e
        let mut neighbors: std::collections::HashMap<usize, Vec<usize>> =
            patch.iter().map(|&t| (t, Vec::new())).collect();
        for &f in &self.edge_facets[e] {
            let adj = &self.facet_tets[f];
            if adj.len() == 2 {
                neighbors.get_mut(&adj[0])?.push(adj[1]);
                neighbors.get_mut(&adj[1])?.push(adj[0]);
            }
        }
        let start = if inner {
            *patch.iter().min()?
        } else {
            // path ends have exactly one neighbor
            patch
                .iter()
                .copied()
                .filter(|t| neighbors[t].len() == 1)
                .min()?
        };
        let mut ordered = vec![start];
        let mut prev = usize::MAX;
        let mut cur = start;
        while ordered.len() < patch.len() {
            let next = neighbors[&cur]
                .iter()
                .copied()
                .filter(|&t| t != prev && (inner || !ordered.contains(&t)))
                .min()?;
            ordered.push(next);
            prev = cur;
            cur = next;
        }
        // a malformed fan (e.g. pinched patch) could revisit a tet
        let mut seen = ordered.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != patch.len() {
            return None;
        }
        Some(ordered)
    }

    /// Extracts the submesh spanned by `tets` as a standalone mesh with its
    /// own boundary.  Returns the new mesh and the new-to-old vertex and tet
    /// index maps.
    pub fn submesh(&self, tets: &[usize]) -> Result<(Mesh, Vec<usize>, Vec<usize>)> {
        let mut vertex_map = Vec::new(); // new -> old
        let mut old_to_new: std::collections::HashMap<usize, usize> =
            std::collections::HashMap::new();
        let mut new_tets = Vec::with_capacity(tets.len());
        for &t in tets {
            let tet = self
                .tets
                .get(t)
                .ok_or_else(|| Error::IndexOutOfRange(format!("tet {t}")))?;
            let mut mapped = [0usize; 4];
            for (slot, &v) in tet.iter().enumerate() {
                let nv = *old_to_new.entry(v).or_insert_with(|| {
                    vertex_map.push(v);
                    vertex_map.len() - 1
                });
                mapped[slot] = nv;
            }
            new_tets.push(mapped);
        }
        let vertices = vertex_map.iter().map(|&v| self.vertices[v]).collect();
        let mesh = Mesh::build(vertices, new_tets)?;
        Ok((mesh, vertex_map, tets.to_vec()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&MeshFile {
            vertices: self.vertices.clone(),
            tets: self.tets.clone(),
        })
        .expect("mesh serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Mesh> {
        let file: MeshFile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidParameter(format!("mesh JSON: {e}")))?;
        Mesh::build(file.vertices, file.tets)
    }
}

fn barycentric_gradients_of(verts: &[[f64; 3]; 4], volume: f64) -> [[f64; 3]; 4] {
    // rows of the inverse edge matrix give the gradients of lambda_1..3;
    // lambda_0 closes the partition of unity
    let c1 = sub3(verts[1], verts[0]);
    let c2 = sub3(verts[2], verts[0]);
    let c3 = sub3(verts[3], verts[0]);
    let det = 6.0 * volume;
    let r1 = cross3(c2, c3);
    let r2 = cross3(c3, c1);
    let r3 = cross3(c1, c2);
    let mut g = [[0.0; 3]; 4];
    for i in 0..3 {
        g[1][i] = r1[i] / det;
        g[2][i] = r2[i] / det;
        g[3][i] = r3[i] / det;
        g[0][i] = -(g[1][i] + g[2][i] + g[3][i]);
    }
    g
}

/// Builds one of the named mesh families.
pub fn generate(kind: MeshKind) -> Result<Mesh> {
    match kind {
        MeshKind::Reference => Mesh::build(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 3]],
        ),
        MeshKind::InnerCriticalPatch => {
            let (verts, _) = critical_patch_vertices();
            Mesh::build(
                verts,
                vec![[0, 1, 2, 3], [0, 1, 3, 4], [0, 1, 4, 5], [0, 1, 5, 2]],
            )
        }
        MeshKind::OuterCriticalPatch(iota) => match iota {
            1 => generate(MeshKind::Reference),
            2 => {
                let (verts, _) = critical_patch_vertices();
                Mesh::build(verts[..5].to_vec(), vec![[0, 1, 2, 3], [0, 1, 3, 4]])
            }
            3 => {
                let (verts, _) = critical_patch_vertices();
                Mesh::build(verts, vec![[0, 1, 2, 3], [0, 1, 3, 4], [0, 1, 4, 5]])
            }
            _ => Err(Error::InvalidParameter(format!(
                "outer critical patch size {iota} not in 1..3"
            ))),
        },
        MeshKind::KuhnCube(n) => {
            if n == 0 {
                return Err(Error::InvalidParameter("kuhn cube requires n >= 1".into()));
            }
            let m = n + 1;
            let id = |i: usize, j: usize, k: usize| (i * m + j) * m + k;
            let h = 1.0 / n as f64;
            let mut verts = Vec::with_capacity(m * m * m);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        verts.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                    }
                }
            }
            const PERMS: [[usize; 3]; 6] =
                [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let mut tets = Vec::with_capacity(6 * n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let c = [i, j, k];
                        for perm in PERMS {
                            let mut p = c;
                            let v0 = id(p[0], p[1], p[2]);
                            p[perm[0]] += 1;
                            let v1 = id(p[0], p[1], p[2]);
                            p[perm[1]] += 1;
                            let v2 = id(p[0], p[1], p[2]);
                            p[perm[2]] += 1;
                            let v3 = id(p[0], p[1], p[2]);
                            tets.push([v0, v1, v2, v3]);
                        }
                    }
                }
            }
            Mesh::build(verts, tets)
        }
    }
}

/// Vertex list shared by the critical-patch generators: the common edge runs
/// from p = origin (id 0) to q = (0,0,1) (id 1), surrounded by the four unit
/// points a_1..a_4 (ids 2..5) alternating between the y = 0 and x = 0 planes.
fn critical_patch_vertices() -> (Vec<[f64; 3]>, [f64; 3]) {
    (
        vec![
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
        ],
        [0.0, 0.0, 1.0],
    )
}
