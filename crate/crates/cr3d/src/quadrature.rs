//! Quadrature on reference simplices in dimensions 1 to 4 with certified
//! polynomial exactness.
//!
//! The reference simplex is `T_d = { x in R^d : x_i >= 0, sum x_i <= 1 }`
//! (so `T_1 = [0,1]`, `T_3` is the reference tetrahedron of volume 1/6).
//! Rules are built by the collapsed-coordinate (Duffy) conical product
//!
//! ```text
//!   x_1 = xi_1,  x_2 = xi_2 (1 - x_1),  ...,  x_i = xi_i (1 - sum_{j<i} x_j)
//! ```
//!
//! where direction `i` (1-based) carries a Gauss-Jacobi rule with weight
//! `(1 - xi)^(d-i)` on `[0,1]`, absorbing exactly the Jacobian factor of the
//! map.  An `n`-point factor per direction yields total-degree exactness
//! `2n - 1`.  Every constructed rule is audited against the closed form
//!
//! ```text
//!   int_{T_d} x^a dx = (prod_i a_i!) / (|a| + d)!
//! ```
//!
//! for all monomials with `|a| <= exact_degree` before it is returned; a
//! failed audit is an error, not a warning.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::mesh::Mesh;
use crate::{polylib, Error, Result};

/// Quadrature rule on the reference simplex of dimension `dim`.
///
/// Points are stored as `[f64; 4]` with the first `dim` entries used.
#[derive(Clone, Debug)]
pub struct QuadRule {
    dim: usize,
    points: Vec<[f64; 4]>,
    weights: Vec<f64>,
    exact_degree: usize,
}

impl QuadRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integrates `f` over the reference simplex; `f` receives the first
    /// `dim` coordinates of each quadrature point.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        for (p, w) in self.points.iter().zip(&self.weights) {
            acc += w * f(&p[..self.dim]);
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Gauss rules on [0,1] via Golub-Welsch
// ---------------------------------------------------------------------------

/// Nodes/weights on `[0,1]` for the weight function `(1-x)^alpha`, computed
/// by the Golub-Welsch algorithm: eigenvalues of the symmetric tridiagonal
/// recurrence (Jacobi) matrix give the nodes, squared first eigenvector
/// components scaled by the zeroth moment give the weights.
fn gauss_jacobi_01(n: usize, alpha: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "empty quadrature rule");
    let a = alpha as f64;
    let b = 0.0_f64;
    // monic three-term recurrence coefficients on [-1,1]
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n]; // off[j] couples j-1 and j
    for j in 0..n {
        let jf = j as f64;
        diag[j] = if j == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * jf + a + b) * (2.0 * jf + a + b + 2.0))
        };
        if j >= 1 {
            let num = 4.0 * jf * (jf + a) * (jf + b) * (jf + a + b);
            let den = (2.0 * jf + a + b).powi(2)
                * (2.0 * jf + a + b + 1.0)
                * (2.0 * jf + a + b - 1.0);
            off[j] = (num / den).sqrt();
        }
    }
    let mut jm = crate::linalg::Matrix::zeros(n, n);
    for j in 0..n {
        jm[(j, j)] = diag[j];
        if j >= 1 {
            jm[(j, j - 1)] = off[j];
            jm[(j - 1, j)] = off[j];
        }
    }
    let (nodes_sym, vecs) =
        crate::linalg::sym_eig(&jm).expect("Golub-Welsch eigensolve cannot fail on tridiagonals");
    // zeroth moment of (1-x)^a (1+x)^b on [-1,1] for integer a, b = 0:
    // 2^(a+1) a! 0! / (a+1)! = 2^(a+1) / (a+1)
    let mu0 = 2.0_f64.powi(alpha as i32 + 1) / (a + 1.0);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let w_sym = mu0 * vecs[(0, i)] * vecs[(0, i)];
        // map t in [-1,1] to x = (1+t)/2 in [0,1]; the weight transforms by
        // (1-x)^alpha dx = ((1-t)/2)^alpha dt/2
        nodes.push(0.5 * (1.0 + nodes_sym[i]));
        weights.push(w_sym / 2.0_f64.powi(alpha as i32 + 1));
    }
    (nodes, weights)
}

/// `n`-point Gauss-Legendre rule on the 1D reference simplex `[0,1]`,
/// exact for polynomials of degree `2n - 1`.
pub fn gauss_1d(n: usize) -> QuadRule {
    let (nodes, weights) = gauss_jacobi_01(n, 0);
    let points = nodes.iter().map(|&x| [x, 0.0, 0.0, 0.0]).collect();
    let rule = QuadRule { dim: 1, points, weights, exact_degree: 2 * n - 1 };
    audit_rule(&rule).expect("1D Gauss rule failed its monomial audit");
    rule
}

/// Conical-product rule on the reference simplex `T_dim`, `2 <= dim <= 4`,
/// exact for total degree >= `degree` (certified by the monomial audit).
pub fn simplex_rule(dim: usize, degree: usize) -> Result<QuadRule> {
    if !(2..=4).contains(&dim) {
        return Err(Error::InvalidParameter(format!("simplex_rule dimension {dim} not in 2..4")));
    }
    if degree > 30 {
        return Err(Error::InvalidParameter(format!("simplex_rule degree {degree} exceeds 30")));
    }
    let n = degree / 2 + 1;
    let factors: Vec<(Vec<f64>, Vec<f64>)> =
        (0..dim).map(|i| gauss_jacobi_01(n, dim - 1 - i)).collect();
    let total = n.pow(dim as u32);
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    loop {
        let mut x = [0.0; 4];
        let mut w = 1.0;
        let mut remaining = 1.0;
        for i in 0..dim {
            let xi = factors[i].0[idx[i]];
            x[i] = xi * remaining;
            remaining -= x[i];
            w *= factors[i].1[idx[i]];
        }
        points.push(x);
        weights.push(w);
        // odometer increment
        let mut carry = dim;
        for i in (0..dim).rev() {
            idx[i] += 1;
            if idx[i] < n {
                carry = i;
                break;
            }
            idx[i] = 0;
        }
        if carry == dim {
            break;
        }
    }
    let rule = QuadRule { dim, points, weights, exact_degree: 2 * n - 1 };
    audit_rule(&rule)?;
    Ok(rule)
}

/// Closed-form reference-simplex integral of the monomial `x^a`:
/// `(prod a_i!) / (|a| + dim)!`.
fn monomial_reference_integral(a: &[usize]) -> f64 {
    let total: usize = a.iter().sum();
    let mut val = 1.0;
    // prod a_i! / (|a|+d)! computed as a product of ratios to avoid overflow
    for &ai in a {
        val *= polylib::factorial_i128(ai) as f64;
    }
    let mut den = 1.0;
    for j in 1..=(total + a.len()) {
        den *= j as f64;
    }
    val / den
}

fn multi_indices(dim: usize, max_total: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if dim == 1 {
            for a in 0..=left {
                let mut v = cur.clone();
                v.push(a);
                out.push(v);
            }
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(dim - 1, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, max_total, &mut Vec::new(), &mut out);
    out
}

/// Audits a rule against the monomial closed form for every multi-index of
/// total degree `<= exact_degree`, plus the weight-sum identity
/// `sum w = 1/dim!`.
fn audit_rule(rule: &QuadRule) -> Result<()> {
    let wsum: f64 = rule.weights.iter().sum();
    let vol = 1.0 / polylib::factorial_i128(rule.dim) as f64;
    if (wsum - vol).abs() > 1e-13 {
        return Err(Error::ExactnessAuditFailed(format!(
            "weight sum {wsum:.17e} differs from reference volume {vol:.17e}"
        )));
    }
    let indices = multi_indices(rule.dim, rule.exact_degree);
    // power tables: pows[q][i][e] = x_i(q)^e
    let deg = rule.exact_degree;
    let mut results = vec![0.0; indices.len()];
    let mut pows = vec![vec![0.0; deg + 1]; rule.dim];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        for i in 0..rule.dim {
            pows[i][0] = 1.0;
            for e in 1..=deg {
                pows[i][e] = pows[i][e - 1] * p[i];
            }
        }
        for (r, a) in results.iter_mut().zip(&indices) {
            let mut m = *w;
            for i in 0..rule.dim {
                m *= pows[i][a[i]];
            }
            *r += m;
        }
    }
    for (r, a) in results.iter().zip(&indices) {
        let exact = monomial_reference_integral(a);
        if (r - exact).abs() > 1e-12 * exact {
            return Err(Error::ExactnessAuditFailed(format!(
                "monomial {a:?}: rule gives {r:.17e}, closed form {exact:.17e}"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// shared rule cache
// ---------------------------------------------------------------------------

type RuleCache = Mutex<HashMap<(usize, usize), Arc<QuadRule>>>;

fn rule_cache() -> &'static RuleCache {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Memoized rule lookup: repeated assemblies with the same exactness reuse
/// the audited rule instead of rebuilding it.
pub fn cached_rule(dim: usize, degree: usize) -> Result<Arc<QuadRule>> {
    let mut cache = rule_cache().lock().expect("quadrature cache poisoned");
    if let Some(rule) = cache.get(&(dim, degree)) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(if dim == 1 {
        gauss_1d(degree / 2 + 1)
    } else {
        simplex_rule(dim, degree)?
    });
    cache.insert((dim, degree), rule.clone());
    Ok(rule)
}

// ---------------------------------------------------------------------------
// mesh-entity integration
// ---------------------------------------------------------------------------

/// Integrates `f(lambda, x)` over tetrahedron `tet`; `lambda` are the four
/// barycentric coordinates of the quadrature point (ordered like the tet's
/// vertex list), `x` its physical position.  The caller declares the
/// polynomial degree of `f`; the affine pullback scales by `|K| / |K_ref|`.
pub fn integrate_tet(
    mesh: &Mesh,
    tet: usize,
    degree: usize,
    mut f: impl FnMut(&[f64; 4], &[f64; 3]) -> f64,
) -> Result<f64> {
    let rule = cached_rule(3, degree)?;
    let verts = mesh.tet_vertices(tet)?;
    let scale = 6.0 * mesh.volume(tet);
    let mut acc = 0.0;
    for (p, w) in rule.points().iter().zip(rule.weights()) {
        let lambda = [1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]];
        let mut x = [0.0; 3];
        for (l, v) in lambda.iter().zip(&verts) {
            x[0] += l * v[0];
            x[1] += l * v[1];
            x[2] += l * v[2];
        }
        acc += w * f(&lambda, &x);
    }
    Ok(acc * scale)
}

/// Integrates `f(mu, x)` over facet `facet`; `mu` are the three barycentric
/// coordinates with respect to the facet's (sorted) vertex triple, `x` the
/// physical point.  Scales by `|F| / |F_ref|` with `|F_ref| = 1/2`.
pub fn integrate_facet(
    mesh: &Mesh,
    facet: usize,
    degree: usize,
    mut f: impl FnMut(&[f64; 3], &[f64; 3]) -> f64,
) -> Result<f64> {
    let rule = cached_rule(2, degree)?;
    let verts = mesh.facet_vertices(facet)?;
    let scale = 2.0 * mesh.facet_area(facet)?;
    let mut acc = 0.0;
    for (p, w) in rule.points().iter().zip(rule.weights()) {
        let mu = [1.0 - p[0] - p[1], p[0], p[1]];
        let mut x = [0.0; 3];
        for (l, v) in mu.iter().zip(&verts) {
            x[0] += l * v[0];
            x[1] += l * v[1];
            x[2] += l * v[2];
        }
        acc += w * f(&mu, &x);
    }
    Ok(acc * scale)
}

/// The two reference-tetrahedron integrals pairing `P_{k-1}^{(0,3)}(1-2x_1)`
/// with `(L_{k+1} - L_k)''` evaluated at `1-2x_1` (apex direction, `I_p`)
/// and at `1-2x_2` (off-apex direction, `I_y`).
///
/// Closed forms: `I_p = (k+1)/4` and `I_y = (1/2)(-1)^(k-1)`.
pub fn iy_integrals(k: usize) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("iy_integrals requires k >= 2, got {k}")));
    }
    let p = polylib::jacobi(0.0, 3.0, k - 1);
    let mut diff =
        polylib::UnivariatePoly::new(polylib::legendre(k + 1).coeffs().to_vec());
    {
        // (L_{k+1} - L_k)''
        let lk = polylib::legendre(k);
        let mut c = diff.coeffs().to_vec();
        for (i, v) in lk.coeffs().iter().enumerate() {
            c[i] -= v;
        }
        diff = polylib::UnivariatePoly::new(c).derivative().derivative();
    }
    let rule = cached_rule(3, 2 * k)?;
    let mut ip = 0.0;
    let mut iy = 0.0;
    for (pt, w) in rule.points().iter().zip(rule.weights()) {
        let f1 = p.eval(1.0 - 2.0 * pt[0]);
        ip += w * f1 * diff.eval(1.0 - 2.0 * pt[0]);
        iy += w * f1 * diff.eval(1.0 - 2.0 * pt[1]);
    }
    Ok((ip, iy))
}
