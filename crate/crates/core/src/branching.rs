//! Two-type branching process with the same selection and mutation rates:
//! mean matrix, Perron eigenvectors, ancestral distribution, and its link
//! to `h(x_plus)`.

use serde::Serialize;

use crate::coeffs::limit_h;
use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchingSummary {
    pub mean_matrix: [[f64; 2]; 2],
    pub lambda_plus: f64,
    /// Left eigenvector, `pi_0 + pi_1 = 1`.
    pub pi: [f64; 2],
    /// Right eigenvector, `hbar . pi = 1`.
    pub hbar: [f64; 2],
    /// Ancestral distribution `alpha_i = hbar_i pi_i`.
    pub alpha: [f64; 2],
}

fn check(params: &ModelParams) -> Result<()> {
    if params.s() == 0.0 {
        return Err(Error::SelectionRequired);
    }
    if params.u() == 0.0 {
        return Err(Error::MutationRequired);
    }
    Ok(())
}

pub fn mean_matrix(params: &ModelParams) -> [[f64; 2]; 2] {
    let (s, u, nu0, nu1) = (params.s(), params.u(), params.nu0(), params.nu1());
    [[1.0 + s - u * nu1, u * nu1], [u * nu0, 1.0 - u * nu0]]
}

/// Eigen-structure from the closed forms in `x_plus`.
pub fn branching_summary(params: &ModelParams) -> Result<BranchingSummary> {
    check(params)?;
    let (s, u, nu0) = (params.s(), params.u(), params.nu0());
    let x = params.derive().x_plus;
    let denom = u * nu0 + s * x * x;
    let hbar = [(u * nu0 + s * x) / denom, u * nu0 / denom];
    let pi = [x, 1.0 - x];
    Ok(BranchingSummary {
        mean_matrix: mean_matrix(params),
        lambda_plus: 1.0 + s * x,
        pi,
        hbar,
        alpha: [hbar[0] * pi[0], hbar[1] * pi[1]],
    })
}

/// Residuals of a summary against the generic 2x2 eigenproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenResiduals {
    /// `max_j |(pi A)_j - lambda pi_j|`
    pub left: f64,
    /// `max_i |(A hbar)_i - lambda hbar_i|`
    pub right: f64,
    /// Distance of `lambda_plus` from the larger root of the characteristic
    /// polynomial.
    pub root: f64,
    /// `|pi_0 + pi_1 - 1|`, `|hbar . pi - 1|` and `|alpha_0 + alpha_1 - 1|`.
    pub normalisation: f64,
}

pub fn eigen_residuals(b: &BranchingSummary) -> EigenResiduals {
    let a = b.mean_matrix;
    let l = b.lambda_plus;
    let left = (0..2)
        .map(|j| (b.pi[0] * a[0][j] + b.pi[1] * a[1][j] - l * b.pi[j]).abs())
        .fold(0.0, f64::max);
    let right = (0..2)
        .map(|i| (a[i][0] * b.hbar[0] + a[i][1] * b.hbar[1] - l * b.hbar[i]).abs())
        .fold(0.0, f64::max);
    let tr = a[0][0] + a[1][1];
    // tr^2 - 4 det, written without cancellation
    let disc = (a[0][0] - a[1][1]).powi(2) + 4.0 * a[0][1] * a[1][0];
    let larger = 0.5 * (tr + disc.sqrt());
    let root = (l - larger).abs();
    let normalisation = [
        (b.pi[0] + b.pi[1] - 1.0).abs(),
        (b.hbar[0] * b.pi[0] + b.hbar[1] * b.pi[1] - 1.0).abs(),
        (b.alpha[0] + b.alpha[1] - 1.0).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    EigenResiduals {
        left,
        right,
        root,
        normalisation,
    }
}

/// `(|hbar_0 - (Delta + (s+u) sqrt Delta) / (2 Delta)|, |hbar_0 - h(x_plus) / x_plus|)`.
pub fn check_ratad(params: &ModelParams) -> Result<(f64, f64)> {
    let b = branching_summary(params)?;
    let d = params.derive();
    let (s, u) = (params.s(), params.u());
    let closed = (d.delta + (s + u) * d.delta.sqrt()) / (2.0 * d.delta);
    let via_h = limit_h(params, d.x_plus)? / d.x_plus;
    Ok(((b.hbar[0] - closed).abs(), (b.hbar[0] - via_h).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn baseline_values() {
        let p = ModelParams::new(10, 1.0, 1.0, 0.5).unwrap();
        let b = branching_summary(&p).unwrap();
        let r2 = 2f64.sqrt();
        assert_eq!(b.mean_matrix, [[1.5, 0.5], [0.5, 0.5]]);
        assert!((b.lambda_plus - (1.0 + r2 / 2.0)).abs() < 1e-15);
        assert!((b.hbar[0] - (1.0 + r2) / 2.0).abs() < 1e-15);
        assert!((b.alpha[0] - 0.853_553_390_593_273_8).abs() < 1e-15);
        let (r1, r2) = check_ratad(&p).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
        let (r1, r2) = check_ratad(&ModelParams::new(10, 2.0, 0.5, 0.3).unwrap()).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
    }

    #[test]
    fn boundary_params_rejected() {
        let p = ModelParams::new(10, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(branching_summary(&p), Err(Error::SelectionRequired));
        let p = ModelParams::new(10, 1.0, 0.0, 0.5).unwrap();
        assert_eq!(check_ratad(&p), Err(Error::MutationRequired));
    }

    #[test]
    fn weak_selection_limit() {
        for s in [1e-2, 1e-4, 1e-6] {
            let p = ModelParams::new(10, s, 1.0, 0.4).unwrap();
            let b = branching_summary(&p).unwrap();
            assert!((b.hbar[0] - 1.0).abs() < 10.0 * s);
            let x = p.derive().x_plus;
            assert!((limit_h(&p, x).unwrap() / x - 1.0).abs() < 10.0 * s);
        }
    }

    proptest! {
        #[test]
        fn eigen_identities(s in 0.01f64..5.0, u in 0.01f64..5.0, nu0 in 0.01f64..0.99) {
            let p = ModelParams::new(10, s, u, nu0).unwrap();
            let b = branching_summary(&p).unwrap();
            let r = eigen_residuals(&b);
            prop_assert!(r.left < 1e-10 && r.right < 1e-10);
            prop_assert!(r.root < 1e-12 * b.lambda_plus.max(1.0));
            prop_assert!(r.normalisation < 1e-12);
            prop_assert!((b.alpha[0] - limit_h(&p, b.pi[0]).unwrap()).abs() < 1e-12);
        }
    }
}
