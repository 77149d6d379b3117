//! Coefficients `a_n` of the common-ancestor expansion, the table
//! `h_k = P(common ancestor has type 0 | k type-0 individuals)`, the
//! inversion between the two, and the large-population limits.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::chain::Pmf;
use crate::error::{Error, Result};
use crate::params::ModelParams;

/// `a[n]` for `n` in `0..N`; `a[0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientVector {
    pub a: Vec<f64>,
}

/// `h[k]` for `k` in `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AncestorTable {
    pub h: Vec<f64>,
}

/// Population size above which `invert_h` checks its cancellation estimate.
pub const EXACT_INVERSION_LIMIT: usize = 64;

/// Tridiagonal elimination without pivoting. `sub[i]` multiplies `x[i-1]`,
/// `sup[i]` multiplies `x[i+1]`; `sub[0]` and the last `sup` are ignored.
pub fn thomas<T>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Vec<T>
where
    T: Num + Clone,
{
    let n = diag.len();
    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    c.push(sup[0].clone() / diag[0].clone());
    d.push(rhs[0].clone() / diag[0].clone());
    for i in 1..n {
        let m = diag[i].clone() - sub[i].clone() * c[i - 1].clone();
        c.push(sup[i].clone() / m.clone());
        d.push((rhs[i].clone() - sub[i].clone() * d[i - 1].clone()) / m);
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        let next = x[i + 1].clone();
        x[i] = x[i].clone() - c[i].clone() * next;
    }
    x
}

/// Bands of the linear system for `a_0..a_{N-1}`. Row 0 pins `a_0 = 1`;
/// row `n >= 1` reads
/// `-(N-n)s/N a_{n-1} + ((n+1)/N + (N-n)s/N + u) a_n - ((n+1)/N + u nu1) a_{n+1} = 0`,
/// where the last row has no `a_N` term.
fn bands<T>(n: usize, s: &T, u: &T, nu1: &T) -> [Vec<T>; 4]
where
    T: Num + Clone + FromPrimitive,
{
    let big_n = T::from_usize(n).unwrap();
    let mut sub = vec![T::zero(); n];
    let mut diag = vec![T::one(); n];
    let mut sup = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    rhs[0] = T::one();
    for i in 1..n {
        let next = T::from_usize(i + 1).unwrap() / big_n.clone();
        let sel = T::from_usize(n - i).unwrap() * s.clone() / big_n.clone();
        sub[i] = T::zero() - sel.clone();
        diag[i] = next.clone() + sel + u.clone();
        sup[i] = T::zero() - (next + u.clone() * nu1.clone());
    }
    [sub, diag, sup, rhs]
}

fn require_solvable(params: &ModelParams) -> Result<()> {
    if params.u() == 0.0 && params.s() > 0.0 {
        return Err(Error::UseClosedForm);
    }
    Ok(())
}

/// Solves the tridiagonal system for the coefficients. The matrix is
/// strictly diagonally dominant for `u > 0`.
pub fn solve_coefficients(params: &ModelParams) -> Result<CoefficientVector> {
    require_solvable(params)?;
    let [sub, diag, sup, rhs] = bands(params.n(), &params.s(), &params.u(), &params.nu1());
    let mut a = thomas(&sub, &diag, &sup, &rhs);
    a[0] = 1.0;
    Ok(CoefficientVector { a })
}

/// Relative residual of each row of the system, in row order.
pub fn system_residuals(params: &ModelParams, a: &[f64]) -> Vec<f64> {
    let n = params.n();
    let [sub, diag, sup, rhs] = bands(n, &params.s(), &params.u(), &params.nu1());
    (0..n)
        .map(|i| {
            let mut terms = vec![diag[i] * a[i]];
            if i > 0 {
                terms.push(sub[i] * a[i - 1]);
            }
            if i + 1 < n {
                terms.push(sup[i] * a[i + 1]);
            }
            let lhs: f64 = terms.iter().sum();
            // subnormal coefficients carry no relative precision
            let scale = terms
                .iter()
                .map(|t| t.abs())
                .fold(rhs[i].abs(), f64::max)
                .max(f64::MIN_POSITIVE);
            (lhs - rhs[i]).abs() / scale
        })
        .collect()
}

/// `h_k = (k/N) sum_{n=0}^{N-k} a_n prod_{j<n} (N-k-j)/(N-1-j)`.
///
/// Evaluated in double-double so each entry is close to correctly rounded;
/// the inversion back to `a` amplifies any error in `h` by up to `~3^N`.
pub fn h_from_coefficients(a: &[f64]) -> AncestorTable {
    let n = a.len();
    let mut h = vec![0.0; n + 1];
    for (k, hk) in h.iter_mut().enumerate().skip(1) {
        let mut prod = Dd::from(1.0);
        let mut acc = Dd::from(a[0]);
        for i in 1..=(n - k) {
            prod = prod.mul_f64((n - k - i + 1) as f64).div_f64((n - i) as f64);
            if prod.hi == 0.0 {
                break;
            }
            acc = acc.add(prod.mul_f64(a[i]));
        }
        *hk = acc.mul_f64(k as f64).div_f64(n as f64).to_f64();
    }
    h[n] = 1.0;
    AncestorTable { h }
}

/// Unevaluated sum `hi + lo` carrying about 106 bits.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn quick(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::quick(s.hi, s.lo + self.lo + o.lo)
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        Dd::quick(p, e + self.lo * b)
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let p = Dd::from(q1).mul_f64(d);
        let r = Dd::two_sum(self.hi, -p.hi);
        let q2 = (r.hi + r.lo - p.lo + self.lo) / d;
        Dd::quick(q1, q2)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Common-ancestor type probabilities for every initial count `k`.
/// Without mutation the closed form is used.
pub fn h_table(params: &ModelParams) -> Result<AncestorTable> {
    let n = params.n();
    if params.u() == 0.0 {
        let h = (0..=n).map(|k| h_no_mutation(n, params.s(), k)).collect();
        return Ok(AncestorTable { h });
    }
    Ok(h_from_coefficients(&solve_coefficients(params)?.a))
}

/// Without mutation, the probability that the common ancestor has type 0
/// given `k` type-0 individuals: `(1 - r^-k) / (1 - r^-N)` with `r = 1 + s`.
/// For `s = 0` this is `k / N`.
pub fn h_no_mutation(n: usize, s: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k >= n {
        return 1.0;
    }
    if s == 0.0 {
        return k as f64 / n as f64;
    }
    let lr = s.ln_1p();
    (-(k as f64) * lr).exp_m1() / (-(n as f64) * lr).exp_m1()
}

/// Without mutation, `a_n = P(L > n)` for `L` binomial `(N, s/(1+s))`
/// conditioned to be positive.
pub fn no_mutation_coefficients(n: usize, s: f64) -> Result<CoefficientVector> {
    if !(s > 0.0) {
        return Err(Error::SelectionRequired);
    }
    let pmf = conditioned_binomial(n, s / (1.0 + s));
    Ok(CoefficientVector {
        a: (0..n).map(|i| pmf.tail(i)).collect(),
    })
}

/// Binomial `(n, p)` conditioned on being positive, on `1..=n`, computed in
/// log space.
pub fn conditioned_binomial(n: usize, p: f64) -> Pmf {
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut logc = 0.0;
    let mut logw = Vec::with_capacity(n);
    for k in 1..=n {
        logc += ((n - k + 1) as f64).ln() - (k as f64).ln();
        logw.push(logc + k as f64 * lp + (n - k) as f64 * lq);
    }
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    Pmf::normalized(1, w).expect("positive weights")
}

/// Inverts `h -> a`:
/// `a_{N-l} = sum_{k=l}^{N} (-1)^{k+l} C(k-1, l-1) C(N, k) h_k`.
///
/// The inputs are converted exactly to rationals and the alternating sums
/// are evaluated exactly, so the only error is the final rounding plus the
/// amplification of whatever error the inputs already carry. Above
/// [`EXACT_INVERSION_LIMIT`] that amplification is estimated as
/// `eps * sum |terms|` and a `PrecisionLoss` is returned past 1e-6.
pub fn invert_h(h: &AncestorTable, n: usize) -> Result<CoefficientVector> {
    if h.h.len() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "table has {} entries, expected {}",
            h.h.len(),
            n + 1
        )));
    }
    if n > EXACT_INVERSION_LIMIT {
        let estimate = inversion_error_estimate(&h.h);
        if !(estimate <= 1e-6) {
            return Err(Error::PrecisionLoss { estimate });
        }
    }
    let exact: Vec<BigRational> =
        h.h.iter()
            .map(|&x| {
                BigRational::from_float(x)
                    .ok_or_else(|| Error::InvalidArgument(format!("non-finite table entry {x}")))
            })
            .collect::<Result<_>>()?;
    let a = exact::invert(&exact)
        .iter()
        .map(|r| r.to_f64().unwrap_or(f64::NAN))
        .collect();
    Ok(CoefficientVector { a })
}

/// `eps * max_l sum_k C(k-1, l-1) C(N, k) |h_k|`.
pub fn inversion_error_estimate(h: &[f64]) -> f64 {
    let n = h.len() - 1;
    let binom_n = binomial_row_f64(n);
    let mut worst = 0.0f64;
    for l in 1..=n {
        // C(k-1, l-1) for k = l, l+1, ...
        let mut c = 1.0;
        let mut acc = 0.0;
        for k in l..=n {
            if k > l {
                c *= (k - 1) as f64 / (k - l) as f64;
            }
            acc += c * binom_n[k] * h[k].abs();
        }
        worst = worst.max(acc);
    }
    f64::EPSILON * worst
}

fn binomial_row_f64(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for k in 1..=n {
        row[k] = row[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    row
}

/// Law of `L_N` on `1..=N` from the coefficients:
/// `P(L = n) = a_{n-1} - a_n` and `P(L = N) = a_{N-1}`.
pub fn ln_distribution(a: &CoefficientVector) -> Result<Pmf> {
    let a = &a.a;
    if a.is_empty() || (a[0] - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("a[0] must equal 1".into()));
    }
    let n = a.len();
    let mut rho = Vec::with_capacity(n);
    for i in 1..n {
        let d = a[i - 1] - a[i];
        if d < -1e-12 {
            return Err(Error::NotMonotone { index: i });
        }
        rho.push(d.max(0.0));
    }
    if a[n - 1] < -1e-12 {
        return Err(Error::NotMonotone { index: n - 1 });
    }
    rho.push(a[n - 1].max(0.0));
    Pmf::normalized(1, rho)
}

fn require_limit(params: &ModelParams) -> Result<()> {
    if params.u() == 0.0 && params.s() > 0.0 {
        return Err(Error::MutationRequired);
    }
    Ok(())
}

/// `h(x) = x / (1 - l(1 - x))` with `l = ell_minus`.
pub fn limit_h(params: &ModelParams, x: f64) -> Result<f64> {
    require_limit(params)?;
    check_unit(x)?;
    let l = params.derive().ell_minus;
    Ok(x / (1.0 - l * (1.0 - x)))
}

/// Derivative of [`limit_h`]: `(1 - l) / (1 - l(1 - x))^2`.
pub fn limit_density(params: &ModelParams, x: f64) -> Result<f64> {
    require_limit(params)?;
    check_unit(x)?;
    let l = params.derive().ell_minus;
    let d = 1.0 - l * (1.0 - x);
    Ok((1.0 - l) / (d * d))
}

/// Large-population limit of `a_n`: `ell_minus^n`.
pub fn limit_coefficient(params: &ModelParams, n: usize) -> Result<f64> {
    require_limit(params)?;
    Ok(params.derive().ell_minus.powi(n as i32))
}

fn check_unit(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "x must lie in [0, 1], got {x}"
        )));
    }
    Ok(())
}

/// The same computations over exact rationals, for small populations with
/// rational rates.
pub mod exact {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    pub struct ExactParams {
        pub n: usize,
        pub s: BigRational,
        pub u: BigRational,
        pub nu0: BigRational,
    }

    impl ExactParams {
        /// Rates given as `(numerator, denominator)` pairs.
        pub fn new(n: usize, s: (i64, i64), u: (i64, i64), nu0: (i64, i64)) -> Result<Self> {
            let r = |(p, q): (i64, i64)| BigRational::new(BigInt::from(p), BigInt::from(q));
            let p = ExactParams {
                n,
                s: r(s),
                u: r(u),
                nu0: r(nu0),
            };
            if n == 0
                || p.s.is_negative()
                || !p.u.is_positive()
                || !p.nu0.is_positive()
                || p.nu0 >= BigRational::one()
            {
                return Err(Error::InvalidParams(
                    "exact solve needs N >= 1, s >= 0, u > 0, 0 < nu0 < 1".into(),
                ));
            }
            Ok(p)
        }

        pub fn nu1(&self) -> BigRational {
            BigRational::one() - &self.nu0
        }

        pub fn to_f64(&self) -> Result<ModelParams> {
            ModelParams::new(
                self.n,
                self.s.to_f64().unwrap(),
                self.u.to_f64().unwrap(),
                self.nu0.to_f64().unwrap(),
            )
        }
    }

    pub fn solve(p: &ExactParams) -> Vec<BigRational> {
        let [sub, diag, sup, rhs] = bands(p.n, &p.s, &p.u, &p.nu1());
        thomas(&sub, &diag, &sup, &rhs)
    }

    pub fn h_from_coefficients(a: &[BigRational]) -> Vec<BigRational> {
        let n = a.len();
        let big_n = BigRational::from_usize(n).unwrap();
        let mut h = vec![BigRational::zero(); n + 1];
        for (k, hk) in h.iter_mut().enumerate().skip(1) {
            let mut prod = BigRational::one();
            let mut acc = a[0].clone();
            for i in 1..=(n - k) {
                prod = prod * BigRational::from_usize(n - k - i + 1).unwrap()
                    / BigRational::from_usize(n - i).unwrap();
                acc += &a[i] * &prod;
            }
            *hk = BigRational::from_usize(k).unwrap() / &big_n * acc;
        }
        h
    }

    pub fn invert(h: &[BigRational]) -> Vec<BigRational> {
        let n = h.len() - 1;
        let mut binom_n = vec![BigInt::one(); n + 1];
        for k in 1..=n {
            binom_n[k] = &binom_n[k - 1] * BigInt::from(n - k + 1) / BigInt::from(k);
        }
        let mut a = vec![BigRational::zero(); n];
        for l in 1..=n {
            let mut c = BigInt::one();
            let mut acc = BigRational::zero();
            for k in l..=n {
                if k > l {
                    c = c * BigInt::from(k - 1) / BigInt::from(k - l);
                }
                let term = BigRational::from_integer(&c * &binom_n[k]) * &h[k];
                if (k + l) % 2 == 0 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            a[n - l] = acc;
        }
        a
    }
}
