//! Small dense numerical kernels shared by the process, learner and
//! evaluation layers: matrix powers of stochastic matrices, total variation,
//! the ball-constrained quadratic solver behind FTAL-VAW, and an accelerated
//! projected-gradient minimizer for smooth objectives over a ball.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `m^k` by repeated squaring. `k = 0` gives the identity.
pub fn matrix_power(m: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Total variation distance in its density form, `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Euclidean projection onto `{w : ‖w − center‖ ≤ radius}`.
pub fn project_ball(w: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let diff = w - center;
    let norm = diff.norm();
    if norm <= radius {
        w.clone()
    } else {
        center + diff * (radius / norm)
    }
}

/// Solution of `min ⟨b, w⟩ + ½ wᵀ Q w` subject to `‖w − c‖ ≤ r`.
#[derive(Debug, Clone)]
pub struct BallQpSolution {
    pub w: DVector<f64>,
    /// Lagrange multiplier of the norm constraint (0 when inactive).
    pub multiplier: f64,
    /// `‖(Q + μI)(w − c) + b + Qc‖₂`, the stationarity residual.
    pub kkt_residual: f64,
}

/// Minimizes `⟨b, w⟩ + ½ wᵀ Q w` over a Euclidean ball for symmetric positive
/// definite `Q`.
///
/// Works in the eigenbasis of `Q`; the multiplier of the norm constraint is
/// found by safeguarded Newton iteration on the secular equation
/// `1/‖u(μ)‖ − 1/r = 0`, falling back to bisection whenever a Newton step
/// leaves the bracket. With `Q ≻ 0` the hard case cannot occur.
pub fn solve_ball_qp(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    center: &DVector<f64>,
    radius: f64,
) -> Result<BallQpSolution> {
    let shifted = b + q * center;
    let eig = SymmetricEigen::new(q.clone());
    let lambda = &eig.eigenvalues;
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::SingularSystem);
    }
    let beta = eig.eigenvectors.transpose() * &shifted;
    let norm_at = |mu: f64| -> f64 {
        beta.iter()
            .zip(lambda.iter())
            .map(|(bi, li)| (bi / (li + mu)).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut mu = 0.0;
    if norm_at(0.0) > radius {
        let mut lo = 0.0_f64;
        let mut hi = (beta.norm() / radius).max(f64::MIN_POSITIVE);
        while norm_at(hi) > radius {
            hi *= 2.0;
        }
        mu = 0.5 * (lo + hi);
        for _ in 0..500 {
            let nrm = norm_at(mu);
            if (nrm - radius).abs() <= 1e-15 * radius {
                break;
            }
            if nrm > radius {
                lo = mu;
            } else {
                hi = mu;
            }
            // d‖u‖/dμ = −Σ β²/(λ+μ)³ / ‖u‖
            let d_norm = -beta
                .iter()
                .zip(lambda.iter())
                .map(|(bi, li)| bi * bi / (li + mu).powi(3))
                .sum::<f64>()
                / nrm;
            // Newton on 1/‖u‖ − 1/r
            let phi = 1.0 / nrm - 1.0 / radius;
            let d_phi = -d_norm / (nrm * nrm);
            let mut next = mu - phi / d_phi;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (hi - lo) <= f64::EPSILON * hi.max(1.0) {
                mu = next;
                break;
            }
            mu = next;
        }
    }

    let coords = DVector::from_iterator(
        beta.len(),
        beta.iter().zip(lambda.iter()).map(|(bi, li)| -bi / (li + mu)),
    );
    let mut u = &eig.eigenvectors * coords;
    if mu > 0.0 {
        let nrm = u.norm();
        if nrm > 0.0 {
            u *= radius / nrm;
        }
    }
    let residual = (q * &u + &u * mu + &shifted).norm();
    Ok(BallQpSolution {
        w: center + u,
        multiplier: mu,
        kkt_residual: residual,
    })
}

/// Stopping rule for [`minimize_over_ball`].
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Tolerance on the norm of the projected-gradient mapping.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

/// Accelerated projected gradient (FISTA with backtracking and gradient-based
/// restart) for a smooth convex objective over a Euclidean ball.
///
/// `objective` returns the value and gradient at a point.
pub fn minimize_over_ball<F>(
    objective: F,
    center: &DVector<f64>,
    radius: f64,
    start: &DVector<f64>,
    opts: MinimizeOptions,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = project_ball(start, center, radius);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut step = 1.0_f64;

    for _ in 0..opts.max_iter {
        let (fy, gy) = objective(&y);
        // backtracking on the quadratic upper model
        let mut x_next;
        loop {
            x_next = project_ball(&(&y - &gy * step), center, radius);
            let d = &x_next - &y;
            let (fx, _) = objective(&x_next);
            if fx <= fy + gy.dot(&d) + d.norm_squared() / (2.0 * step) + 1e-15 * fy.abs().max(1.0)
                || step < 1e-20
            {
                break;
            }
            step *= 0.5;
        }
        let mapping = (&y - &x_next).norm() / step;
        if mapping <= opts.tol {
            return Ok(x_next);
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        // restart when the momentum direction opposes descent
        if gy.dot(&(&x_next - &x)) > 0.0 {
            momentum = 1.0;
            y = x_next.clone();
        } else {
            y = &x_next + (&x_next - &x) * ((momentum - 1.0) / next_momentum);
            momentum = next_momentum;
        }
        x = x_next;
        step *= 1.25;
    }
    Err(Error::NonConverged(opts.max_iter))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
