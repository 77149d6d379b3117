//! Model parameters of the two-type Moran model and the closed-form
//! constants of its deterministic limit.
//!
//! Type 0 is the fit type: it reproduces at rate `1 + s`, type 1 at rate 1.
//! Every individual mutates at total rate `u`; the new type is 0 with
//! probability `nu0` and 1 with probability `nu1 = 1 - nu0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated model parameters. Construct through [`ModelParams::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    n: usize,
    s: f64,
    u: f64,
    nu0: f64,
    nu1: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "N")]
    n: usize,
    s: f64,
    u: f64,
    nu0: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.n, raw.s, raw.u, raw.nu0)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            n: p.n,
            s: p.s,
            u: p.u,
            nu0: p.nu0,
        }
    }
}

impl ModelParams {
    /// Population size `n >= 1`, selection `s >= 0`, mutation `u >= 0` and
    /// mutation target weight `nu0` in (0, 1). `nu1` is set to `1 - nu0`.
    pub fn new(n: usize, s: f64, u: f64, nu0: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("N must be at least 1".into()));
        }
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "s must be finite and >= 0, got {s}"
            )));
        }
        if !(u.is_finite() && u >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "u must be finite and >= 0, got {u}"
            )));
        }
        if !(nu0 > 0.0 && nu0 < 1.0) {
            return Err(Error::InvalidParams(format!(
                "nu0 must lie in (0, 1), got {nu0}"
            )));
        }
        Ok(ModelParams {
            n,
            s,
            u,
            nu0,
            nu1: 1.0 - nu0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn nu1(&self) -> f64 {
        self.nu1
    }

    /// Same rates, different population size.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        ModelParams::new(n, self.s, self.u, self.nu0)
    }

    pub fn derive(&self) -> DerivedConstants {
        derive(self)
    }
}

/// Closed-form constants shared by the limit formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `(s - u)^2 + 4 s u nu0`.
    pub delta: f64,
    /// Stable point of the deterministic frequency ODE.
    pub x_plus: f64,
    /// Smaller root of `u nu1 x^2 - (s + u) x + s`.
    pub ell_minus: f64,
    /// Larger root; `f64::INFINITY` when `u nu1 = 0`.
    pub ell_plus: f64,
}

/// Evaluates the derived constants without cancellation.
///
/// `x_plus` solves `s x^2 - (s - u) x - u nu0 = 0`; the root is taken with
/// the sign that avoids subtracting nearly equal numbers. The roots of
/// `u nu1 x^2 - (s + u) x + s` are taken as `2 s / (s + u + sqrt(delta))` and
/// `(s + u + sqrt(delta)) / (2 u nu1)`, which is the same as using
/// `ell_plus = 1 / (1 - x_plus)` with `1 - x_plus = 2 u nu1 / (s + u + sqrt(delta))`.
///
/// With `u = 0` and `s > 0` the quadratic degenerates to `-s x + s` and both
/// finite quantities collapse to 1: `ell_minus = 1`, `ell_plus = inf`.
pub fn derive(params: &ModelParams) -> DerivedConstants {
    let (s, u, nu0, nu1) = (params.s, params.u, params.nu0, params.nu1);
    let delta = (s - u) * (s - u) + 4.0 * s * u * nu0;
    let sqrt_delta = delta.sqrt();

    let x_plus = if s == 0.0 {
        nu0
    } else if s >= u {
        (s - u + sqrt_delta) / (2.0 * s)
    } else {
        2.0 * u * nu0 / (sqrt_delta + (u - s))
    };

    let sum = s + u + sqrt_delta;
    let (ell_minus, ell_plus) = if sum == 0.0 {
        // s = u = 0: no selection, no mutation.
        (0.0, f64::INFINITY)
    } else {
        let lower = 2.0 * s / sum;
        let upper = if u * nu1 == 0.0 {
            f64::INFINITY
        } else {
            sum / (2.0 * u * nu1)
        };
        (lower, upper)
    };

    DerivedConstants {
        delta,
        x_plus,
        ell_minus,
        ell_plus,
    }
}

/// Right-hand side of the deterministic frequency ODE at `z`.
pub fn drift(params: &ModelParams, z: f64) -> f64 {
    params.s * z * (1.0 - z) + params.u * params.nu0 * (1.0 - z) - params.u * params.nu1 * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: f64, u: f64, nu0: f64) -> ModelParams {
        ModelParams::new(10, s, u, nu0).unwrap()
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ModelParams::new(0, 1.0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(3, -1.0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(3, 1.0, f64::NAN, 0.5).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn nu1_complements_nu0() {
        let q = p(1.0, 1.0, 0.3);
        assert_eq!(q.nu0() + q.nu1(), 1.0);
    }

    #[test]
    fn neutral_stable_point_is_nu0() {
        let d = p(0.0, 1.0, 0.3).derive();
        assert_eq!(d.x_plus, 0.3);
        assert_eq!(d.ell_minus, 0.0);
    }

    #[test]
    fn baseline_constants() {
        let d = p(1.0, 1.0, 0.5).derive();
        let r2 = std::f64::consts::SQRT_2;
        assert!((d.delta - 2.0).abs() < 1e-15);
        assert!((d.x_plus - r2 / 2.0).abs() < 1e-15);
        assert!((d.ell_minus - (2.0 - r2)).abs() < 1e-15);
        assert!((d.ell_plus - (2.0 + r2)).abs() < 1e-14);
        // both are roots of p(x) = u nu1 x^2 - (s+u) x + s
        for root in [d.ell_minus, d.ell_plus] {
            let val = 0.5 * root * root - 2.0 * root + 1.0;
            assert!(val.abs() < 1e-14, "{val}");
        }
    }

    #[test]
    fn no_mutation_fixes_type_zero() {
        let d = p(1.0, 0.0, 0.5).derive();
        assert_eq!(d.delta, 1.0);
        assert_eq!(d.x_plus, 1.0);
        assert_eq!(d.ell_minus, 1.0);
        assert!(d.ell_plus.is_infinite());
    }

    #[test]
    fn params_json_round_trip_validates() {
        let q = p(1.5, 0.25, 0.4);
        let json = serde_json::to_string(&q).unwrap();
        assert!(json.contains("\"N\":10"));
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, q);
        let bad = r#"{"N":3,"s":1.0,"u":1.0,"nu0":1.5}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn root_identities(s in 1e-3f64..=5.0, u in 1e-3f64..=5.0, nu0 in 0.05f64..0.95) {
            let q = p(s, u, nu0);
            let d = q.derive();
            let nu1 = q.nu1();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            prop_assert!(rel(d.ell_plus, 1.0 / (1.0 - d.x_plus)) < 1e-10);
            prop_assert!(rel(d.ell_minus, s * (1.0 - d.x_plus) / (u * nu1)) < 1e-10);
            for root in [d.ell_minus, d.ell_plus] {
                let scale = u * nu1 * root * root + (s + u) * root + s;
                let val = u * nu1 * root * root - (s + u) * root + s;
                prop_assert!(val.abs() / scale < 1e-12);
            }
            prop_assert!(d.ell_minus > 0.0 && d.ell_minus < 1.0);
            prop_assert!(d.x_plus >= 0.0 && d.x_plus <= 1.0);
            let scale = s + u;
            prop_assert!(drift(&q, d.x_plus).abs() / scale < 1e-12);
        }
    }
}
