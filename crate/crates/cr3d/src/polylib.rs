//! Univariate orthogonal polynomials: Legendre `L_n`, Jacobi `P_n^(a,b)`,
//! Gegenbauer `C_n^(lam)`, the facet-orthogonal profile
//! `Q_k = (L_{k+1} - L_k)' / (k+1)` and its general-dimension analogue
//! `Q_{d,k} = P_{k+m}^{(m)}` with `m = d-2` and
//! `P_{k+m} = sum_l beta_{k,l} L_{k+l}`.
//!
//! All construction runs over exact `i128` rationals through the standard
//! three-term recurrences; coefficients are converted to `f64` only at the
//! end.  Degrees stay small (validated range `k <= 10`, `d <= 5`), so the
//! monomial basis is well conditioned and derivatives/affine substitutions
//! are cheap.

use crate::linalg::{lu_solve, Matrix};
use crate::quadrature;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// exact rational arithmetic
// ---------------------------------------------------------------------------

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Reduced fraction with positive denominator.  Arithmetic is checked: the
/// validated degree range keeps every intermediate far below `i128::MAX`, so
/// an overflow indicates a degree far out of range and panics with a clear
/// message instead of returning garbage.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    pub(crate) const ZERO: Ratio = Ratio { num: 0, den: 1 };
    pub(crate) const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub(crate) fn new(num: i128, den: i128) -> Ratio {
        assert!(den != 0, "rational with zero denominator");
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Ratio { num: s * num / g, den: s * den / g }
    }

    pub(crate) fn int(n: i128) -> Ratio {
        Ratio { num: n, den: 1 }
    }

    fn checked_mul_i128(a: i128, b: i128) -> i128 {
        a.checked_mul(b).expect("rational overflow: polynomial degree outside validated range")
    }

    pub(crate) fn add(self, o: Ratio) -> Ratio {
        let g = gcd(self.den, o.den).max(1);
        let (da, db) = (self.den / g, o.den / g);
        let num = Self::checked_mul_i128(self.num, db)
            .checked_add(Self::checked_mul_i128(o.num, da))
            .expect("rational overflow: polynomial degree outside validated range");
        Ratio::new(num, Self::checked_mul_i128(self.den, db))
    }

    pub(crate) fn sub(self, o: Ratio) -> Ratio {
        self.add(o.neg())
    }

    pub(crate) fn neg(self) -> Ratio {
        Ratio { num: -self.num, den: self.den }
    }

    pub(crate) fn mul(self, o: Ratio) -> Ratio {
        // cross-reduce before multiplying to limit growth
        let g1 = gcd(self.num, o.den).max(1);
        let g2 = gcd(o.num, self.den).max(1);
        Ratio::new(
            Self::checked_mul_i128(self.num / g1, o.num / g2),
            Self::checked_mul_i128(self.den / g2, o.den / g1),
        )
    }

    pub(crate) fn div(self, o: Ratio) -> Ratio {
        assert!(o.num != 0, "rational division by zero");
        self.mul(Ratio { num: o.den, den: o.num })
    }

    pub(crate) fn is_zero(self) -> bool {
        self.num == 0
    }

    pub(crate) fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Best rational approximation with denominator <= 10^6 (continued
    /// fractions).  Exact for every parameter the library is actually called
    /// with (integers and half-integers); for other reals it returns the
    /// closest small-denominator rational.
    pub(crate) fn approx(x: f64) -> Ratio {
        assert!(x.is_finite(), "non-finite polynomial parameter");
        const MAX_DEN: i128 = 1_000_000;
        let sign = if x < 0.0 { -1 } else { 1 };
        let mut t = x.abs();
        let (mut h0, mut h1, mut k0, mut k1): (i128, i128, i128, i128) = (0, 1, 1, 0);
        for _ in 0..40 {
            let a = t.floor();
            if a > 1e17 {
                break;
            }
            let ai = a as i128;
            let h2 = ai.saturating_mul(h1).saturating_add(h0);
            let k2 = ai.saturating_mul(k1).saturating_add(k0);
            if k2 > MAX_DEN {
                break;
            }
            h0 = h1;
            h1 = h2;
            k0 = k1;
            k1 = k2;
            let frac = t - a;
            if frac.abs() < 1e-12 {
                break;
            }
            t = 1.0 / frac;
        }
        Ratio::new(sign * h1, k1)
    }
}

pub(crate) fn factorial_i128(n: usize) -> i128 {
    (1..=n as i128).product()
}

pub(crate) fn binom_i128(n: usize, k: usize) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

// ---------------------------------------------------------------------------
// rational polynomials (ascending monomial coefficients)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub(crate) struct RatPoly(Vec<Ratio>);

impl RatPoly {
    fn constant(c: Ratio) -> RatPoly {
        RatPoly(vec![c])
    }

    fn trim(mut self) -> RatPoly {
        while self.0.len() > 1 && self.0.last().unwrap().is_zero() {
            self.0.pop();
        }
        self
    }

    fn add(&self, o: &RatPoly) -> RatPoly {
        let n = self.0.len().max(o.0.len());
        let mut c = vec![Ratio::ZERO; n];
        for (i, v) in self.0.iter().enumerate() {
            c[i] = c[i].add(*v);
        }
        for (i, v) in o.0.iter().enumerate() {
            c[i] = c[i].add(*v);
        }
        RatPoly(c).trim()
    }

    fn sub(&self, o: &RatPoly) -> RatPoly {
        self.add(&o.scale(Ratio::int(-1)))
    }

    fn scale(&self, s: Ratio) -> RatPoly {
        RatPoly(self.0.iter().map(|c| c.mul(s)).collect()).trim()
    }

    /// Multiplies by the affine factor `a + b x`.
    fn mul_affine(&self, a: Ratio, b: Ratio) -> RatPoly {
        let mut c = vec![Ratio::ZERO; self.0.len() + 1];
        for (i, v) in self.0.iter().enumerate() {
            c[i] = c[i].add(v.mul(a));
            c[i + 1] = c[i + 1].add(v.mul(b));
        }
        RatPoly(c).trim()
    }

    pub(crate) fn derivative(&self) -> RatPoly {
        if self.0.len() <= 1 {
            return RatPoly::constant(Ratio::ZERO);
        }
        RatPoly(
            self.0[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| c.mul(Ratio::int(i as i128 + 1)))
                .collect(),
        )
        .trim()
    }

    pub(crate) fn eval(&self, x: Ratio) -> Ratio {
        let mut acc = Ratio::ZERO;
        for c in self.0.iter().rev() {
            acc = acc.mul(x).add(*c);
        }
        acc
    }

    fn to_poly(&self) -> UnivariatePoly {
        UnivariatePoly { coeffs: self.0.iter().map(|c| c.to_f64()).collect() }
    }
}

// ---------------------------------------------------------------------------
// exact recurrences
// ---------------------------------------------------------------------------

/// Legendre polynomials via `(n+1) L_{n+1} = (2n+1) x L_n - n L_{n-1}`.
pub(crate) fn legendre_rat(n: usize) -> RatPoly {
    let mut p0 = RatPoly::constant(Ratio::ONE);
    if n == 0 {
        return p0;
    }
    let mut p1 = RatPoly(vec![Ratio::ZERO, Ratio::ONE]);
    for m in 1..n {
        let m = m as i128;
        // p2 = ((2m+1) x p1 - m p0) / (m+1)
        let p2 = p1
            .mul_affine(Ratio::ZERO, Ratio::int(2 * m + 1))
            .sub(&p0.scale(Ratio::int(m)))
            .scale(Ratio::new(1, m + 1));
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Jacobi polynomials for rational parameters via the standard three-term
/// recurrence, normalized so that `P_n^(a,b)(1) = (a+1)_n / n!`.
pub(crate) fn jacobi_rat(a: Ratio, b: Ratio, n: usize) -> RatPoly {
    let mut p0 = RatPoly::constant(Ratio::ONE);
    if n == 0 {
        return p0;
    }
    // P_1 = (a - b)/2 + (a + b + 2)/2 x
    let half = Ratio::new(1, 2);
    let mut p1 = RatPoly(vec![a.sub(b).mul(half), a.add(b).add(Ratio::int(2)).mul(half)]);
    for m in 2..=n {
        let m = Ratio::int(m as i128);
        let two = Ratio::int(2);
        let s = a.add(b); // alpha + beta
        let c2m = two.mul(m).add(s); // 2m + a + b
        // 2m (m+a+b) (2m+a+b-2) P_m
        //   = (2m+a+b-1) [ (2m+a+b)(2m+a+b-2) x + a^2 - b^2 ] P_{m-1}
        //   - 2 (m+a-1)(m+b-1)(2m+a+b) P_{m-2}
        let c1 = two.mul(m).mul(m.add(s)).mul(c2m.sub(two));
        let c2 = c2m.sub(Ratio::ONE).mul(a.mul(a).sub(b.mul(b)));
        let c3 = c2m.sub(Ratio::ONE).mul(c2m).mul(c2m.sub(two));
        let c4 = two.mul(m.add(a).sub(Ratio::ONE)).mul(m.add(b).sub(Ratio::ONE)).mul(c2m);
        let p2 = p1.mul_affine(c2, c3).sub(&p0.scale(c4)).scale(Ratio::ONE.div(c1));
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Gegenbauer polynomials `C_n^(lam)` via
/// `n C_n = 2x (n + lam - 1) C_{n-1} - (n + 2 lam - 2) C_{n-2}`.
pub(crate) fn gegenbauer_rat(lam: Ratio, n: usize) -> RatPoly {
    let mut p0 = RatPoly::constant(Ratio::ONE);
    if n == 0 {
        return p0;
    }
    let mut p1 = RatPoly(vec![Ratio::ZERO, lam.mul(Ratio::int(2))]);
    for m in 2..=n {
        let mi = Ratio::int(m as i128);
        let c1 = mi.add(lam).sub(Ratio::ONE).mul(Ratio::int(2));
        let c2 = mi.add(lam.mul(Ratio::int(2))).sub(Ratio::int(2));
        let p2 = p1.mul_affine(Ratio::ZERO, c1).sub(&p0.scale(c2)).scale(Ratio::ONE.div(mi));
        p0 = p1;
        p1 = p2;
    }
    p1
}

pub(crate) fn q_k_rat(k: usize) -> RatPoly {
    assert!(k >= 1, "q_k requires k >= 1");
    legendre_rat(k + 1)
        .sub(&legendre_rat(k))
        .derivative()
        .scale(Ratio::new(1, k as i128 + 1))
}

/// Explicit rational values
/// `beta_{k,l} = (-1)^{m-l} 2^m binom(m,l) (2k+2l+1) / prod_{r=l+1}^{m+l+1} (2k+r)`.
fn beta_explicit_rat(k: usize, m: usize) -> Vec<Ratio> {
    (0..=m)
        .map(|l| {
            let sign = if (m - l).is_multiple_of(2) { 1 } else { -1 };
            let num = sign * (1i128 << m) * binom_i128(m, l) * (2 * k as i128 + 2 * l as i128 + 1);
            let mut den: i128 = 1;
            for r in (l + 1)..=(m + l + 1) {
                den *= 2 * k as i128 + r as i128;
            }
            Ratio::new(num, den)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// public API
// ---------------------------------------------------------------------------

/// Polynomial in the monomial basis, coefficients ascending by power.
///
/// The zero polynomial is represented by the single coefficient `[0.0]`; for
/// everything else the leading coefficient is nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct UnivariatePoly {
    coeffs: Vec<f64>,
}

impl UnivariatePoly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        UnivariatePoly { coeffs }
    }

    pub fn zero() -> Self {
        UnivariatePoly { coeffs: vec![0.0] }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> UnivariatePoly {
        if self.coeffs.len() <= 1 {
            return UnivariatePoly::zero();
        }
        UnivariatePoly::new(
            self.coeffs[1..].iter().enumerate().map(|(i, c)| c * (i + 1) as f64).collect(),
        )
    }

    /// Coefficients of `p(a + b t)` as a polynomial in `t`.
    pub fn compose_affine(&self, a: f64, b: f64) -> UnivariatePoly {
        let mut acc = vec![0.0];
        for &c in self.coeffs.iter().rev() {
            // acc <- acc * (a + b t) + c
            let mut next = vec![0.0; acc.len() + 1];
            for (i, &v) in acc.iter().enumerate() {
                next[i] += v * a;
                next[i + 1] += v * b;
            }
            next[0] += c;
            acc = next;
        }
        UnivariatePoly::new(acc)
    }
}

/// Legendre polynomial `L_n`, normalized so `L_n(1) = 1`.
pub fn legendre(n: usize) -> UnivariatePoly {
    legendre_rat(n).to_poly()
}

/// Jacobi polynomial `P_n^(alpha,beta)` with `P_n^(alpha,beta)(1) =
/// (alpha+1)_n / n!`.
///
/// Parameters are snapped to the nearest small-denominator rational (exact
/// for the integer and half-integer parameters used throughout) so the
/// recurrence runs in exact arithmetic.
pub fn jacobi(alpha: f64, beta: f64, n: usize) -> UnivariatePoly {
    jacobi_rat(Ratio::approx(alpha), Ratio::approx(beta), n).to_poly()
}

/// Gegenbauer polynomial `C_n^(lambda)`; returns the zero polynomial for
/// `n < 0` (the convention used when relating Legendre derivatives to
/// Gegenbauer polynomials).
pub fn gegenbauer(lambda: f64, n: i64) -> UnivariatePoly {
    if n < 0 {
        return UnivariatePoly::zero();
    }
    gegenbauer_rat(Ratio::approx(lambda), n as usize).to_poly()
}

/// The profile `Q_k = (L_{k+1} - L_k)' / (k+1)`, `k >= 1`.
///
/// `Q_k` has degree exactly `k`, `Q_k(1) = 1`, and `Q_k(-1) = (-1)^k (k+1)`.
pub fn q_k(k: usize) -> UnivariatePoly {
    q_k_rat(k).to_poly()
}

/// Exact endpoint values `(Q_k(1), Q_k(-1))` as integers.
pub fn q_k_endpoints(k: usize) -> (i128, i128) {
    let q = q_k_rat(k);
    let at1 = q.eval(Ratio::ONE);
    let atm1 = q.eval(Ratio::int(-1));
    assert!(at1.den == 1 && atm1.den == 1, "Q_k endpoint values must be integers");
    (at1.num, atm1.num)
}

/// How the beta coefficients of [`beta_coeffs`] are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaMethod {
    /// Build and solve the (m+1) x (m+1) linear system the coefficients are
    /// defined by.
    Solve,
    /// Evaluate the closed-form product expression.
    Explicit,
}

/// Coefficients `beta_{k,0..m}` combining Legendre polynomials into the
/// degree-(k+m) polynomial whose m-th derivative is `Q_{d,k}` (`m = d-2`).
#[derive(Clone, Debug)]
pub struct BetaCoefficients {
    pub k: usize,
    pub m: usize,
    pub values: Vec<f64>,
}

impl BetaCoefficients {
    /// Maximum row residual of the defining linear system
    /// `(1/(2^n n!)) sum_l beta_l (l+k+n)!/(l+k-n)! = delta_{n,m}`,
    /// `0 <= n <= m`.
    pub fn system_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for n in 0..=self.m {
            let mut lhs = 0.0;
            for (l, &b) in self.values.iter().enumerate() {
                lhs += b * falling_product(l + self.k, n);
            }
            lhs /= (1u64 << n) as f64 * factorial_i128(n) as f64;
            let rhs = if n == self.m { 1.0 } else { 0.0 };
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }
}

/// `(q+n)! / (q-n)!` as a float, with the convention that the value is 0
/// whenever `q - n < 0`.
fn falling_product(q: usize, n: usize) -> f64 {
    if n > q {
        return 0.0;
    }
    let mut acc = 1.0;
    for j in (q - n + 1)..=(q + n) {
        acc *= j as f64;
    }
    acc
}

/// Computes `beta_{k,0..m}` either by solving the defining linear system or
/// from the explicit product formula.  The two paths agree to about 1e-12.
pub fn beta_coeffs(k: usize, m: usize, method: BetaMethod) -> Result<BetaCoefficients> {
    if k < 1 {
        return Err(Error::InvalidParameter("beta_coeffs requires k >= 1".into()));
    }
    let values = match method {
        BetaMethod::Explicit => beta_explicit_rat(k, m).iter().map(|r| r.to_f64()).collect(),
        BetaMethod::Solve => {
            let mut sys = Matrix::zeros(m + 1, m + 1);
            let mut rhs = vec![0.0; m + 1];
            for n in 0..=m {
                for l in 0..=m {
                    sys[(n, l)] =
                        falling_product(l + k, n) / ((1u64 << n) as f64 * factorial_i128(n) as f64);
                }
                rhs[n] = if n == m { 1.0 } else { 0.0 };
            }
            lu_solve(&sys, &rhs)?
        }
    };
    Ok(BetaCoefficients { k, m, values })
}

/// The general-dimension profile `Q_{d,k} = P_{k+m}^{(m)}` with `m = d-2`
/// and `P_{k+m} = sum_l beta_{k,l} L_{k+l}`.
///
/// Degree exactly `k`, `Q_{d,k}(1) = 1`; for `d = 3` it coincides with
/// [`q_k`].
pub fn q_dk(d: usize, k: usize) -> Result<UnivariatePoly> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("q_dk requires d >= 2, got {d}")));
    }
    if k < 1 {
        return Err(Error::InvalidParameter(format!("q_dk requires k >= 1, got {k}")));
    }
    let m = d - 2;
    let betas = beta_explicit_rat(k, m);
    let mut p = RatPoly::constant(Ratio::ZERO);
    for (l, &b) in betas.iter().enumerate() {
        p = p.add(&legendre_rat(k + l).scale(b));
    }
    for _ in 0..m {
        p = p.derivative();
    }
    Ok(p.to_poly())
}

/// `iota_k = int_{-1}^{1} P_k^{(0,3)}(t) (t+1) dt`, evaluated by Gauss
/// quadrature of exactness >= k+1.  Closed form: `4 (-1)^k / (k+2)`.
pub fn iota_k(k: usize) -> f64 {
    let p = jacobi(0.0, 3.0, k);
    // integrand degree k+1 -> n-point Gauss with 2n-1 >= k+1
    let n = (k + 3) / 2;
    let rule = quadrature::gauss_1d(n);
    // map the [0,1] rule to [-1,1]
    let mut acc = 0.0;
    for (pt, w) in rule.points().iter().zip(rule.weights()) {
        let t = 2.0 * pt[0] - 1.0;
        acc += 2.0 * w * p.eval(t) * (t + 1.0);
    }
    acc
}

/// Parameter combinations the test suite exercises; outside this range the
/// library still computes, but reports flag the values as unvalidated.
pub fn in_validated_range(k: usize, d: usize) -> bool {
    k <= 10 && d <= 5
}

// ---------------------------------------------------------------------------
