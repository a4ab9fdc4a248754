//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS/FAIL` line with the measured quantities.
//!
//! Criterion 7 currently FAILS, and the failure is genuine rather than a
//! defect of this implementation: the quadratic CR pair on kuhn_cube(n) has
//! exactly three spurious piecewise-constant pressure modes for n = 1, 2, 3
//! (gamma_h = 0).  Cell-type enrichment functions have mean-zero facet
//! traces, so they pair to zero with every piecewise-constant pressure, and
//! the conforming quadratic part alone leaves three checkerboards of the
//! Kuhn lattice uncontrolled.  On kuhn_cube(1) counting alone already forces
//! this (21 velocity DoFs against 23 mean-zero pressures); on finer grids
//! the modes were re-verified against an independent facet-integral
//! evaluation (see `kuhn_null_modes_are_piecewise_constant_checkerboards`
//! in the stability module).  The spectrum beyond the three exact zeros is
//! bounded away from zero, so every other claim checked here -- the per-tet
//! macroelement condition, critical-pressure orthogonality, and the
//! elimination certificates -- holds.

use std::time::Instant;

use cr3d::assembly::assemble;
use cr3d::fespace::{
    direct_sum_audit, direct_sum_endpoint_matrix, jump_moment_audit, DofKind, FeSpace, Space,
};
use cr3d::mesh::{generate, Mesh, MeshKind};
use cr3d::polylib::{self, BetaMethod};
use cr3d::quadrature;
use cr3d::stability::{
    build_critical_pressure, certify_elimination, certify_spurious, infsup_constant, nspace_dim,
    Pair,
};
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn random_single_tet(rng: &mut impl Rng) -> Option<Mesh> {
    let verts: Vec<[f64; 3]> =
        (0..4).map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    match Mesh::build(verts, vec![[0, 1, 2, 3]]) {
        Ok(m) if m.volume(0) > 1e-3 => Some(m),
        _ => None,
    }
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

struct Criterion {
    number: usize,
    time_limit: f64,
    started: Instant,
    failures: Vec<String>,
}

impl Criterion {
    fn new(number: usize, time_limit: f64) -> Self {
        Criterion { number, time_limit, started: Instant::now(), failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(detail());
        }
    }

    fn finish(mut self, summary: &str) {
        let elapsed = self.started.elapsed().as_secs_f64();
        if elapsed > self.time_limit {
            self.failures
                .push(format!("runtime {elapsed:.1}s exceeds {:.0}s", self.time_limit));
        }
        let verdict = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {verdict} — {summary} ({elapsed:.2}s){}",
            self.number,
            if self.failures.is_empty() {
                String::new()
            } else {
                format!("; {}", self.failures.join("; "))
            }
        );
        assert!(self.failures.is_empty(), "criterion {}: {}", self.number, self.failures.join("; "));
    }
}

#[test]
fn criterion_1_macroelement_condition() {
    let mut c = Criterion::new(1, 10.0);
    let mut r = rng(101);
    let mut tested = 0usize;
    let mut worst_pairing = 0.0_f64;
    while tested < 100 {
        let Some(mesh) = random_single_tet(&mut r) else { continue };
        tested += 1;
        let report = nspace_dim(&mesh, &[0], 2, Pair::Cr).unwrap();
        c.check(report.dim == 1, || format!("tet {tested}: nspace dim {}", report.dim));

        // pairing of the four pressure functions against the cell function
        // pushed along w_l = v_l - p: exactly 5|K| [[1,-1,0,0],[1,0,-1,0],
        // [1,0,0,-1]]
        let sys = assemble(&mesh, 2, Space::CRk0, Space::Pkm1).unwrap();
        let vol = mesh.volume(0);
        let verts = mesh.tet_vertices(0).unwrap();
        let expected = [[1.0, -1.0, 0.0, 0.0], [1.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, -1.0]];
        for (row, exp_row) in expected.iter().enumerate() {
            let w = [
                verts[row + 1][0] - verts[0][0],
                verts[row + 1][1] - verts[0][1],
                verts[row + 1][2] - verts[0][2],
            ];
            let mut vel = vec![0.0; sys.n_velocity()];
            for (comp, &wc) in w.iter().enumerate() {
                vel[sys.velocity_dof(comp, 0)] = wc;
            }
            for (y, &e) in exp_row.iter().enumerate() {
                let mut pressure = vec![0.0; sys.n_pressure()];
                pressure[y] = 1.0;
                let got = sys.pairing(&pressure, &vel).unwrap();
                let rel = (got - 5.0 * vol * e).abs() / (5.0 * vol);
                worst_pairing = worst_pairing.max(rel);
            }
        }
    }
    c.check(worst_pairing <= 1e-11, || format!("pairing relative error {worst_pairing:.3e}"));
    c.finish(&format!(
        "100 random tets: nspace dim 1, pairing matrix 5|K|[[1,-1,0,0],...] rel err {worst_pairing:.1e}"
    ));
}

#[test]
fn criterion_2_cr_membership() {
    let mut c = Criterion::new(2, 30.0);
    let mesh = generate(MeshKind::KuhnCube(1)).unwrap();
    let mut worst_moment = 0.0_f64;
    let mut worst_q1 = 0.0_f64;
    for k in 1..=6usize {
        let space = FeSpace::new(Space::CRk0, &mesh, k).unwrap();
        let want = if k % 2 == 0 { DofKind::CRCell } else { DofKind::CRFacet };
        let dof = space.keys().iter().position(|key| key.kind == want).unwrap();
        let mut v = vec![0.0; space.dim()];
        v[dof] = 1.0;
        let mut l2 = 0.0;
        for t in 0..mesh.num_tets() {
            l2 += quadrature::integrate_tet(&mesh, t, 2 * k, |l, _| {
                let val = space.value(dof, t, l);
                val * val
            })
            .unwrap();
        }
        v[dof] = 1.0 / l2.sqrt();
        let res = jump_moment_audit(&space, &mesh, &v).unwrap();
        worst_moment = worst_moment.max(res);
        c.check(res <= 1e-12, || format!("k={k}: facet moment {res:.3e}"));

        let q1 = (polylib::q_k(k).eval(1.0) - 1.0).abs();
        worst_q1 = worst_q1.max(q1);
        c.check(q1 <= 1e-14, || format!("k={k}: Q_k(1) off by {q1:.3e}"));
    }
    c.finish(&format!(
        "k=1..6 unit-normalized facet moments <= {worst_moment:.1e}, Q_k(1)=1 to {worst_q1:.1e}"
    ));
}

#[test]
fn criterion_3_integral_identities() {
    let mut c = Criterion::new(3, 10.0);

    // int_K P_1^{(0,3)}(1 - 2 lambda_y) lambda_z = -|K|/4 (y = z), 0 else
    let mut r = rng(303);
    let mut worst_orthog = 0.0_f64;
    let mut tested = 0;
    while tested < 5 {
        let Some(mesh) = random_single_tet(&mut r) else { continue };
        tested += 1;
        let vol = mesh.volume(0);
        for y in 0..4 {
            for z in 0..4 {
                let val = quadrature::integrate_tet(&mesh, 0, 2, |l, _| {
                    (1.0 - 5.0 * l[y]) * l[z]
                })
                .unwrap();
                let want = if y == z { -vol / 4.0 } else { 0.0 };
                worst_orthog = worst_orthog.max((val - want).abs());
            }
        }
    }
    c.check(worst_orthog <= 1e-11, || format!("orthogonality lemma residual {worst_orthog:.3e}"));

    let mut worst_iy = 0.0_f64;
    for k in 2..=8usize {
        let (ip, iy) = quadrature::iy_integrals(k).unwrap();
        let want_ip = (k as f64 + 1.0) / 4.0;
        let want_iy = 0.5 * if k % 2 == 0 { -1.0 } else { 1.0 };
        worst_iy = worst_iy.max((ip - want_ip).abs()).max((iy - want_iy).abs());
    }
    c.check(worst_iy <= 1e-11, || format!("I_p/I_y residual {worst_iy:.3e}"));

    let mut worst_iota = 0.0_f64;
    for k in 0..=12usize {
        let want = 4.0 * if k % 2 == 0 { 1.0 } else { -1.0 } / (k as f64 + 2.0);
        worst_iota = worst_iota.max((polylib::iota_k(k) - want).abs());
    }
    c.check(worst_iota <= 1e-11, || format!("iota_k residual {worst_iota:.3e}"));

    c.finish(&format!(
        "-|K|/4 lemma {worst_orthog:.1e}, I_p/I_y {worst_iy:.1e} (k=2..8), iota_k {worst_iota:.1e} (k=0..12)"
    ));
}

#[test]
fn criterion_4_direct_sum() {
    let mut c = Criterion::new(4, 60.0);

    // endpoint system determinant, exact integer arithmetic: the 3x3 matrix
    // has diagonal Q_k(-1), off-diagonal Q_k(1); det = (b-a)^2 (b+2a)
    for k in [3usize, 5] {
        let (a, b) = polylib::q_k_endpoints(k);
        let det = (b - a) * (b - a) * (b + 2 * a);
        let kk = k as i128;
        let want = -(kk - 1) * (kk + 2) * (kk + 2);
        c.check(det == want, || format!("k={k}: endpoint det {det}, want {want}"));
        // and the assembled float matrix agrees
        let m = direct_sum_endpoint_matrix(k);
        let fdet = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
        c.check((fdet - want as f64).abs() <= 1e-9, || format!("k={k}: float det {fdet}"));
    }

    let mesh = generate(MeshKind::KuhnCube(1)).unwrap();
    let mut min_sigma = f64::INFINITY;
    for k in 1..=4usize {
        let sigma = direct_sum_audit(&mesh, k).unwrap();
        min_sigma = min_sigma.min(sigma);
        c.check(sigma > 1e-8, || format!("k={k}: Gram min singular value {sigma:.3e}"));
    }
    c.finish(&format!(
        "endpoint det = -(k-1)(k+2)^2 exactly (k=3,5); direct-sum min sigma {min_sigma:.2e} (k=1..4)"
    ));
}

#[test]
fn criterion_5_critical_pressures() {
    let mut c = Criterion::new(5, 60.0);
    let meshes = [
        ("inner", generate(MeshKind::InnerCriticalPatch).unwrap()),
        ("outer1", generate(MeshKind::OuterCriticalPatch(1)).unwrap()),
        ("outer2", generate(MeshKind::OuterCriticalPatch(2)).unwrap()),
        ("outer3", generate(MeshKind::OuterCriticalPatch(3)).unwrap()),
    ];
    let mut worst = 0.0_f64;
    for (name, mesh) in &meshes {
        let record = mesh
            .detect_critical_edges(1e-9)
            .into_iter()
            .find(|r| r.endpoints == [0, 1])
            .unwrap_or_else(|| panic!("{name}: edge [0,1] must be critical"));
        for k in 1..=4usize {
            let space = FeSpace::new(Space::Pkm1, mesh, k).unwrap();
            for apex in record.endpoints {
                let p = build_critical_pressure(mesh, &space, &record, apex).unwrap();
                let res = certify_spurious(&p, mesh, k).unwrap();
                worst = worst.max(res);
                c.check(res <= 1e-10, || format!("{name} k={k} apex={apex}: residual {res:.3e}"));
            }
        }
    }

    // perturbed (no longer critical) patch: the mode family must stop being
    // divergence-orthogonal; max over k = 1..4 and both apexes
    let base = generate(MeshKind::InnerCriticalPatch).unwrap();
    let mut verts: Vec<[f64; 3]> = (0..base.num_vertices()).map(|i| base.vertex(i)).collect();
    verts[2] = [1.0, 0.1, 0.0];
    let tets: Vec<[usize; 4]> = (0..base.num_tets()).map(|t| base.tet(t)).collect();
    let bent = Mesh::build(verts, tets).unwrap();
    let record = bent
        .detect_critical_edges(0.2)
        .into_iter()
        .find(|r| r.endpoints == [0, 1])
        .expect("bent patch still matches at a loose tolerance");
    c.check(
        bent.detect_critical_edges(1e-9).iter().all(|r| r.endpoints != [0, 1]),
        || "bent edge still classifies as critical at 1e-9".into(),
    );
    let mut bent_max = 0.0_f64;
    for k in 1..=4usize {
        let space = FeSpace::new(Space::Pkm1, &bent, k).unwrap();
        for apex in record.endpoints {
            let p = build_critical_pressure(&bent, &space, &record, apex).unwrap();
            bent_max = bent_max.max(certify_spurious(&p, &bent, k).unwrap());
        }
    }
    c.check(bent_max > 1e-6, || format!("perturbed-patch residual {bent_max:.3e}"));

    c.finish(&format!(
        "critical residuals <= {worst:.1e} (4 patches, k=1..4, both apexes); perturbed patch {bent_max:.1e} > 1e-6"
    ));
}

#[test]
fn criterion_6_elimination() {
    let mut c = Criterion::new(6, 60.0);

    // even k = 4: cell function on the inner patch
    let inner = generate(MeshKind::InnerCriticalPatch).unwrap();
    let record = inner
        .detect_critical_edges(1e-9)
        .into_iter()
        .find(|r| r.endpoints == [0, 1])
        .expect("inner patch edge");
    let even = certify_elimination(&inner, &record, 4).unwrap();
    c.check(even.pairing_residual <= 1e-11, || {
        format!("even k=4 pairing residual {:.3e}", even.pairing_residual)
    });
    c.check(even.min_singular_value > 1e-8, || {
        format!("even k=4 min sigma {:.3e}", even.min_singular_value)
    });
    c.check(even.passed, || "even k=4 certificate not passed".into());

    // odd k = 3 on an admissible mesh: the face-diagonal edge [0,6] of
    // kuhn_cube(1) carries the required facet pair
    let kuhn = generate(MeshKind::KuhnCube(1)).unwrap();
    let record = kuhn
        .detect_critical_edges(1e-9)
        .into_iter()
        .find(|r| r.endpoints == [0, 6])
        .expect("kuhn_cube(1) face diagonal is critical");
    let odd = certify_elimination(&kuhn, &record, 3).unwrap();
    let theta = odd.theta.expect("odd certificates carry theta");
    c.check(theta < 0.0, || format!("theta = {theta}"));
    let gram_ok = (odd.gram[0][0] - theta).abs() <= 1e-12
        && (odd.gram[1][0] - theta).abs() <= 1e-12
        && (odd.gram[0][1] - 1.0).abs() <= 1e-12
        && (odd.gram[1][1] - 2.0).abs() <= 1e-12;
    c.check(gram_ok, || format!("odd k=3 Gram {:?}", odd.gram));
    c.check(odd.min_singular_value > 1e-8, || {
        format!("odd k=3 min sigma {:.3e}", odd.min_singular_value)
    });
    c.check(odd.pairing_residual <= 1e-11, || {
        format!("odd k=3 pairing residual {:.3e}", odd.pairing_residual)
    });

    c.finish(&format!(
        "even k=4 residual {:.1e}, min sigma {:.2e}; odd k=3 Gram [[theta,1],[theta,2]], theta = {theta:.4}",
        even.pairing_residual, even.min_singular_value
    ));
}

#[test]
fn criterion_7_inf_sup() {
    let mut c = Criterion::new(7, 600.0);

    let mut gammas = Vec::new();
    let mut detail = String::new();
    for n in 1..=3usize {
        let mesh = generate(MeshKind::KuhnCube(n)).unwrap();
        let system = assemble(&mesh, 2, Space::CRk0, Space::Pkm1).unwrap();
        let report = infsup_constant(&system).unwrap();
        detail.push_str(&format!(
            "n={n}: gamma={:.3e} spurious={}; ",
            report.gamma_h, report.spurious_modes
        ));
        c.check(report.gamma_h > 0.01, || {
            format!(
                "n={n}: gamma_h = {:.3e} (not > 0.01; {} spurious piecewise-constant modes)",
                report.gamma_h, report.spurious_modes
            )
        });
        gammas.push(report.gamma_h);
    }
    let (lo, hi) = (
        gammas.iter().cloned().fold(f64::INFINITY, f64::min),
        gammas.iter().cloned().fold(0.0, f64::max),
    );
    c.check(lo > 0.0 && hi / lo <= 2.0, || format!("gamma ratio {hi:.3e}/{lo:.3e}"));

    // invariance under uniform scaling x10 plus a rigid motion
    let mesh = generate(MeshKind::KuhnCube(2)).unwrap();
    let base = infsup_constant(&assemble(&mesh, 2, Space::CRk0, Space::Pkm1).unwrap()).unwrap();
    let axis = {
        let raw = [0.3_f64, 0.55, -0.78];
        let n = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
        [raw[0] / n, raw[1] / n, raw[2] / n]
    };
    let (sin, cos) = 1.1_f64.sin_cos();
    let transform = |v: [f64; 3]| {
        let kxv = [
            axis[1] * v[2] - axis[2] * v[1],
            axis[2] * v[0] - axis[0] * v[2],
            axis[0] * v[1] - axis[1] * v[0],
        ];
        let kv = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = 10.0 * (v[i] * cos + kxv[i] * sin + axis[i] * kv * (1.0 - cos))
                + [1.0, -2.0, 0.5][i];
        }
        out
    };
    let verts: Vec<[f64; 3]> = (0..mesh.num_vertices()).map(|i| transform(mesh.vertex(i))).collect();
    let tets: Vec<[usize; 4]> = (0..mesh.num_tets()).map(|t| mesh.tet(t)).collect();
    let moved = Mesh::build(verts, tets).unwrap();
    let moved_report =
        infsup_constant(&assemble(&moved, 2, Space::CRk0, Space::Pkm1).unwrap()).unwrap();
    let scale = base.gamma_h.max(moved_report.gamma_h);
    let invariant = if scale == 0.0 {
        true
    } else {
        (base.gamma_h - moved_report.gamma_h).abs() <= 1e-9 * scale
    };
    c.check(invariant, || {
        format!("gamma {:.6e} vs transformed {:.6e}", base.gamma_h, moved_report.gamma_h)
    });

    // conforming pair on a mesh with a critical edge: at least one deflated
    // eigenvalue below 1e-10 * lambda_max
    let patch = generate(MeshKind::InnerCriticalPatch).unwrap();
    let conf = infsup_constant(&assemble(&patch, 2, Space::Sk0, Space::Pkm1).unwrap()).unwrap();
    c.check(conf.spurious_modes >= 1, || {
        format!("conforming pair spurious modes = {}", conf.spurious_modes)
    });
    detail.push_str(&format!("conforming spurious={}", conf.spurious_modes));

    c.finish(&detail);
}

/// First-run gamma_h values on the Kuhn family, frozen as regression
/// baselines: all three are exactly zero (three-dimensional nullspaces), and
/// the first nonzero eigenvalue of the deflated pencil is pinned to guard
/// the rest of the spectrum.
#[test]
fn gamma_regression_baselines() {
    let baselines = [
        // (n, first nonzero eigenvalue of the deflated pencil)
        (1usize, 0.083333333333333_65),
        (2, 0.007623188017289492),
        (3, 0.006004487883451606),
    ];
    for (n, lambda4) in baselines {
        let mesh = generate(MeshKind::KuhnCube(n)).unwrap();
        let report = infsup_constant(&assemble(&mesh, 2, Space::CRk0, Space::Pkm1).unwrap()).unwrap();
        assert!(report.gamma_h.abs() <= 1e-7, "n={n}: gamma_h = {:.3e}", report.gamma_h);
        assert_eq!(report.spurious_modes, 3, "n={n}");
        let got = report.smallest_eigenvalues[3];
        assert!(
            (got - lambda4).abs() <= 1e-9 * lambda4,
            "n={n}: lambda_4 = {got:.16e}, baseline {lambda4:.16e}"
        );
    }
}

#[test]
fn criterion_8_general_dimension() {
    let mut c = Criterion::new(8, 30.0);

    let mut worst_cond = 0.0_f64;
    for d in 2..=4usize {
        for k in 1..=5usize {
            let q = polylib::q_dk(d, k).unwrap().compose_affine(1.0, -2.0);
            // condition 1: unit trace on the opposite facet
            worst_cond = worst_cond.max((q.eval(0.0) - 1.0).abs());
            // condition 2: vanishing moments against P_{k-1} on facets
            // containing the vertex; facet = reference (d-1)-simplex with
            // the vertex's barycentric nu_0 = 1 - sum x_i
            let rule_degree = k + 1 + q.degree();
            for kappa in compositions(k - 1, d) {
                let val = if d == 2 {
                    let rule = quadrature::gauss_1d(rule_degree / 2 + 1);
                    rule.integrate(|x| {
                        let nu0 = 1.0 - x[0];
                        q.eval(nu0) * nu0.powi(kappa[0] as i32) * x[0].powi(kappa[1] as i32)
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
                };
                worst_cond = worst_cond.max(val.abs());
            }
        }
    }
    c.check(worst_cond <= 1e-11, || format!("Q_dk conditions residual {worst_cond:.3e}"));

    let mut worst_beta = 0.0_f64;
    for k in 1..=5usize {
        for m in 0..=2usize {
            let solved = polylib::beta_coeffs(k, m, BetaMethod::Solve).unwrap();
            let explicit = polylib::beta_coeffs(k, m, BetaMethod::Explicit).unwrap();
            for (a, b) in solved.values.iter().zip(&explicit.values) {
                worst_beta = worst_beta.max((a - b).abs());
            }
            worst_beta = worst_beta.max(explicit.system_residual());
        }
    }
    c.check(worst_beta <= 1e-10, || format!("beta solve/explicit deviation {worst_beta:.3e}"));

    let mut worst_q3 = 0.0_f64;
    for k in 1..=5usize {
        let general = polylib::q_dk(3, k).unwrap();
        let direct = polylib::q_k(k);
        let n = general.coeffs().len().max(direct.coeffs().len());
        for i in 0..n {
            let a = general.coeffs().get(i).copied().unwrap_or(0.0);
            let b = direct.coeffs().get(i).copied().unwrap_or(0.0);
            worst_q3 = worst_q3.max((a - b).abs());
        }
    }
    c.check(worst_q3 <= 1e-12, || format!("Q_3k vs Q_k coefficient gap {worst_q3:.3e}"));

    c.finish(&format!(
        "Q_dk conditions {worst_cond:.1e} (d=2..4, k=1..5); beta paths {worst_beta:.1e}; Q_3k==Q_k {worst_q3:.1e}"
    ));
}
