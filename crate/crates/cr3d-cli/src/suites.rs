//! Verification suites behind `cr3d verify`.
//!
//! Each suite evaluates a family of identities over a degree range (the
//! `appendix-a` suite also over a dimension range) and reports one line per
//! check; a check either requires a residual to stay below a threshold or a
//! margin (smallest singular value) to stay above one, as its name says.

use clap::ValueEnum;
use serde::Serialize;

use crate::{DegreeRange, Failure};
use cr3d::fespace::{direct_sum_audit, jump_moment_audit, DofKind, FeSpace, Space};
use cr3d::mesh::{generate, Mesh, MeshKind};
use cr3d::polylib::{self, BetaMethod};
use cr3d::quadrature;
use cr3d::report;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Suite {
    /// Orthogonal-polynomial identities: endpoint values, endpoint-system
    /// determinant, beta-coefficient cross-check.
    Polylib,
    /// Quadrature exactness on the reference interval and tetrahedron.
    Quadrature,
    /// Facet-moment orthogonality of the nonconforming basis functions.
    CrOrthogonality,
    /// Direct-sum audit of the conforming + nonconforming decomposition.
    DirectSum,
    /// General-dimension profile conditions and the d = 3 specialization.
    AppendixA,
    /// Radial/edge integral values used by the elimination certificates.
    AppendixB,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Polylib => "polylib",
            Suite::Quadrature => "quadrature",
            Suite::CrOrthogonality => "cr-orthogonality",
            Suite::DirectSum => "direct-sum",
            Suite::AppendixA => "appendix-a",
            Suite::AppendixB => "appendix-b",
        }
    }
}

#[derive(Serialize)]
pub struct Check {
    pub name: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Measured residual (or margin, for `*-margin` checks).
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub suite: &'static str,
    pub k_range: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_range: Option<[usize; 2]>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,d,k,value,threshold,pass");
        for c in &self.checks {
            let d = c.d.map(|v| v.to_string()).unwrap_or_default();
            let k = c.k.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "\n{},{d},{k},{:.17e},{:.17e},{}",
                c.name, c.value, c.threshold, c.pass
            ));
        }
        out
    }
}

struct Collector {
    checks: Vec<Check>,
}

impl Collector {
    fn new() -> Self {
        Collector { checks: Vec::new() }
    }

    /// A residual that must stay at or below the threshold.
    fn below(&mut self, name: &'static str, d: Option<usize>, k: Option<usize>, value: f64, threshold: f64) {
        self.checks.push(Check { name, d, k, value, threshold, pass: value <= threshold });
    }

    /// A margin that must stay strictly above the threshold.
    fn above(&mut self, name: &'static str, k: Option<usize>, value: f64, threshold: f64) {
        self.checks.push(Check { name, d: None, k, value, threshold, pass: value > threshold });
    }
}

pub fn run(suite: Suite, k: DegreeRange, d: DegreeRange) -> Result<VerifyReport, Failure> {
    let mut col = Collector::new();
    let mut d_range = None;
    match suite {
        Suite::Polylib => polylib_suite(&mut col, k)?,
        Suite::Quadrature => quadrature_suite(&mut col, k)?,
        Suite::CrOrthogonality => cr_orthogonality_suite(&mut col, k)?,
        Suite::DirectSum => direct_sum_suite(&mut col, k)?,
        Suite::AppendixA => {
            appendix_a_suite(&mut col, k, d)?;
            d_range = Some([d.lo, d.hi]);
        }
        Suite::AppendixB => appendix_b_suite(&mut col, k)?,
    }
    let passed = col.checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        schema: report::SCHEMA,
        suite: suite.name(),
        k_range: [k.lo, k.hi],
        d_range,
        checks: col.checks,
        passed,
    })
}

fn require(cond: bool, message: String) -> Result<(), Failure> {
    if cond {
        Ok(())
    } else {
        Err(Failure::Config(message))
    }
}

fn polylib_suite(col: &mut Collector, range: DegreeRange) -> Result<(), Failure> {
    require(range.lo >= 1, format!("polylib suite needs k >= 1, got {}", range.lo))?;
    require(range.hi <= 12, format!("polylib suite caps at k = 12, got {}", range.hi))?;
    for k in range.iter() {
        let q = polylib::q_k(k);
        let (at_one, at_minus_one) = polylib::q_k_endpoints(k);
        col.below("q-value-at-one", None, Some(k), (q.eval(1.0) - at_one as f64).abs(), 1e-14);
        col.below(
            "q-value-at-minus-one",
            None,
            Some(k),
            (q.eval(-1.0) - at_minus_one as f64).abs(),
            1e-11 * (k as f64 + 1.0),
        );
        if k % 2 == 1 && k >= 3 {
            // diagonal Q_k(-1), off-diagonal Q_k(1): det = -(k-1)(k+2)^2
            let det = (at_minus_one - at_one) * (at_minus_one - at_one)
                * (at_minus_one + 2 * at_one);
            let kk = k as i128;
            let want = -(kk - 1) * (kk + 2) * (kk + 2);
            col.below("endpoint-det-integer", None, Some(k), (det - want).unsigned_abs() as f64, 0.5);
        }
        let mut beta_dev = 0.0_f64;
        for m in 0..=2usize {
            let solved = polylib::beta_coeffs(k, m, BetaMethod::Solve)?;
            let explicit = polylib::beta_coeffs(k, m, BetaMethod::Explicit)?;
            for (a, b) in solved.values.iter().zip(&explicit.values) {
                beta_dev = beta_dev.max((a - b).abs());
            }
            beta_dev = beta_dev.max(explicit.system_residual());
        }
        col.below("beta-solve-vs-explicit", None, Some(k), beta_dev, 1e-10);
    }
    Ok(())
}

fn reference_tet() -> Result<Mesh, Failure> {
    Ok(generate(MeshKind::Reference)?)
}

fn quadrature_suite(col: &mut Collector, range: DegreeRange) -> Result<(), Failure> {
    require(range.hi <= 14, format!("quadrature suite caps at degree 14, got {}", range.hi))?;
    let reference = reference_tet()?;
    for degree in range.iter() {
        // moments of barycentric monomials on the reference tet:
        // int_K l0^a l1^b l2^c l3^e = 6|K| a! b! c! e! / (deg + 3)!
        let mut worst_tet = 0.0_f64;
        for alpha in compositions_up_to(degree, 4) {
            let exact = 6.0 * (1.0 / 6.0) * factorial_product(&alpha)
                / factorial(alpha.iter().map(|&a| a as usize).sum::<usize>() + 3);
            let got = quadrature::integrate_tet(&reference, 0, degree, |l, _| {
                alpha.iter().enumerate().map(|(i, &a)| l[i].powi(a as i32)).product()
            })?;
            worst_tet = worst_tet.max((got - exact).abs());
        }
        col.below("tet-monomial-exactness", None, Some(degree), worst_tet, 1e-13);

        let rule = quadrature::gauss_1d(degree / 2 + 1);
        let mut worst_1d = 0.0_f64;
        for j in 0..=degree {
            let got = rule.integrate(|x| x[0].powi(j as i32));
            worst_1d = worst_1d.max((got - 1.0 / (j as f64 + 1.0)).abs());
        }
        col.below("gauss-1d-exactness", None, Some(degree), worst_1d, 1e-14);
    }
    Ok(())
}

fn cr_orthogonality_suite(col: &mut Collector, range: DegreeRange) -> Result<(), Failure> {
    require(range.lo >= 1, format!("cr-orthogonality suite needs k >= 1, got {}", range.lo))?;
    require(range.hi <= 6, format!("cr-orthogonality suite caps at k = 6, got {}", range.hi))?;
    let mesh = generate(MeshKind::KuhnCube(1))?;
    for k in range.iter() {
        let space = FeSpace::new(Space::CRk0, &mesh, k)?;
        let want = if k % 2 == 0 { DofKind::CRCell } else { DofKind::CRFacet };
        let dof = space
            .keys()
            .iter()
            .position(|key| key.kind == want)
            .expect("kuhn_cube(1) carries both enrichment kinds");
        let mut l2 = 0.0;
        for t in 0..mesh.num_tets() {
            l2 += quadrature::integrate_tet(&mesh, t, 2 * k, |l, _| {
                let v = space.value(dof, t, l);
                v * v
            })?;
        }
        let mut v = vec![0.0; space.dim()];
        v[dof] = 1.0 / l2.sqrt();
        col.below("facet-moments", None, Some(k), jump_moment_audit(&space, &mesh, &v)?, 1e-12);
    }
    Ok(())
}

fn direct_sum_suite(col: &mut Collector, range: DegreeRange) -> Result<(), Failure> {
    require(range.lo >= 1, format!("direct-sum suite needs k >= 1, got {}", range.lo))?;
    require(range.hi <= 6, format!("direct-sum suite caps at k = 6, got {}", range.hi))?;
    let mesh = generate(MeshKind::KuhnCube(1))?;
    for k in range.iter() {
        col.above("gram-min-singular-value-margin", Some(k), direct_sum_audit(&mesh, k)?, 1e-8);
    }
    Ok(())
}

fn appendix_a_suite(col: &mut Collector, range: DegreeRange, dims: DegreeRange) -> Result<(), Failure> {
    require(dims.lo >= 2, format!("appendix-a suite needs d >= 2, got {}", dims.lo))?;
    for d in dims.iter() {
        for k in range.iter() {
            require(
                polylib::in_validated_range(k, d),
                format!("appendix-a suite is validated for k <= 10, d <= 5; got k = {k}, d = {d}"),
            )?;
        }
    }
    for d in dims.iter() {
        for k in range.iter() {
            let q = polylib::q_dk(d, k)?.compose_affine(1.0, -2.0);
            col.below("q-trace-value", Some(d), Some(k), (q.eval(0.0) - 1.0).abs(), 1e-11);

            // moments against P_{k-1} on a facet through the vertex, whose
            // barycentric coordinate restricts to nu_0 = 1 - sum x_i
            let rule_degree = k + 1 + q.degree();
            let mut worst = 0.0_f64;
            for kappa in compositions(k - 1, d) {
                let val = if d == 2 {
                    let rule = quadrature::gauss_1d(rule_degree / 2 + 1);
                    rule.integrate(|x| {
                        let nu0 = 1.0 - x[0];
                        q.eval(nu0) * nu0.powi(kappa[0] as i32) * x[0].powi(kappa[1] as i32)
                    })
                } else {
                    let rule = quadrature::simplex_rule(d - 1, rule_degree)?;
                    rule.integrate(|x| {
                        let nu0 = 1.0 - x.iter().sum::<f64>();
                        let mut m = q.eval(nu0) * nu0.powi(kappa[0] as i32);
                        for (i, &e) in kappa[1..].iter().enumerate() {
                            m *= x[i].powi(e as i32);
                        }
                        m
                    })
                };
                worst = worst.max(val.abs());
            }
            col.below("q-vanishing-moments", Some(d), Some(k), worst, 1e-11);
        }
    }
    if dims.lo <= 3 && 3 <= dims.hi {
        for k in range.iter() {
            let general = polylib::q_dk(3, k)?;
            let direct = polylib::q_k(k);
            let n = general.coeffs().len().max(direct.coeffs().len());
            let mut worst = 0.0_f64;
            for i in 0..n {
                let a = general.coeffs().get(i).copied().unwrap_or(0.0);
                let b = direct.coeffs().get(i).copied().unwrap_or(0.0);
                worst = worst.max((a - b).abs());
            }
            col.below("q3k-matches-qk", Some(3), Some(k), worst, 1e-12);
        }
    }
    Ok(())
}

fn appendix_b_suite(col: &mut Collector, range: DegreeRange) -> Result<(), Failure> {
    require(range.hi <= 16, format!("appendix-b suite caps at k = 16, got {}", range.hi))?;
    for k in range.iter() {
        if k >= 2 {
            let (ip, iy) = quadrature::iy_integrals(k)?;
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            col.below("i-p-identity", None, Some(k), (ip - (k as f64 + 1.0) / 4.0).abs(), 1e-11);
            col.below("i-y-identity", None, Some(k), (iy - 0.5 * sign).abs(), 1e-11);
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let want = 4.0 * sign / (k as f64 + 2.0);
        col.below("iota-closed-form", None, Some(k), (polylib::iota_k(k) - want).abs(), 1e-11);
    }
    Ok(())
}

/// All multi-indices of the given length summing to `total`.
fn compositions(total: usize, len: usize) -> Vec<Vec<u8>> {
    if len == 1 {
        return vec![vec![total as u8]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, len - 1) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

/// All multi-indices of the given length summing to at most `total`.
fn compositions_up_to(total: usize, len: usize) -> Vec<Vec<u8>> {
    (0..=total).flat_map(|t| compositions(t, len)).collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn factorial_product(alpha: &[u8]) -> f64 {
    alpha.iter().map(|&a| factorial(a as usize)).product()
}
