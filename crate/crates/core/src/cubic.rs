//! Global solver for the cubic-regularized Newton subproblem
//!
//! ```text
//! minimize  m(h) = gᵀh + ½ hᵀHh + (M/6)|h|³
//! ```
//!
//! A global minimizer is characterized by `(H + (M/2)|h| I) h = -g` together
//! with `H + (M/2)|h| I ⪰ 0`. With the eigendecomposition `H = Q Λ Qᵀ` and the
//! shift `σ = λ_min + (M/2)|h|`, the step in the eigenbasis is
//! `h̃_i = -g̃_i / (λ_i - λ_min + σ)` and `σ` is the root of the secular
//! equation `|h(σ)| = 2(σ - λ_min)/M` on `σ ≥ max(0, λ_min)`. Working in `σ`
//! rather than `|h|` keeps the near-hard case accurate: the small denominators
//! are formed without cancellation.
//!
//! When `g` has no component on the bottom eigenspace and the secular function
//! is non-positive at `σ = 0`, the solution lies on the boundary
//! `|h| = -2λ_min/M` and is completed along the bottom eigenvector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_mat, check_finite_vec, max_asymmetry, sym_min_eigenvalue, symmetrize};

/// Default relative tolerance for the secular root find.
pub const DEFAULT_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSolution {
    pub h: DVector<f64>,
    pub model_value: f64,
    /// `|g + Hh + (M/2)|h| h|`.
    pub stationarity_residual: f64,
    /// Smallest eigenvalue of `H + (M/2)|h| I`.
    pub psd_margin: f64,
    /// The boundary (hard-case) branch produced the solution.
    pub hard_case: bool,
}

fn check_inputs(g: &DVector<f64>, hess: &DMatrix<f64>, m: f64) -> Result<()> {
    let d = g.len();
    if hess.nrows() != d || hess.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: hess.nrows().max(hess.ncols()) });
    }
    check_finite_vec(g, "gradient")?;
    check_finite_mat(hess, "hessian")?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "M",
            reason: format!("cubic coefficient must be positive, got {m}"),
        });
    }
    Ok(())
}

/// `gᵀh + ½ hᵀHh + (M/6)|h|³`.
pub fn model_value(g: &DVector<f64>, hess: &DMatrix<f64>, m: f64, h: &DVector<f64>) -> Result<f64> {
    let d = g.len();
    if h.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: h.len() });
    }
    if hess.nrows() != d || hess.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: hess.nrows() });
    }
    let norm = h.norm();
    Ok(g.dot(h) + 0.5 * h.dot(&(hess * h)) + m / 6.0 * norm * norm * norm)
}

/// Optimality certificates at `h`: the stationarity residual and the PSD
/// margin of `H + (M/2)|h| I`.
pub fn check_optimality(g: &DVector<f64>, hess: &DMatrix<f64>, m: f64, h: &DVector<f64>) -> (f64, f64) {
    let norm = h.norm();
    let residual = (g + hess * h + h * (0.5 * m * norm)).norm();
    let margin = if hess.nrows() == 0 { 0.0 } else { sym_min_eigenvalue(hess) } + 0.5 * m * norm;
    (residual, margin)
}

struct Secular<'a> {
    lambda: &'a DVector<f64>,
    g_tilde: &'a DVector<f64>,
    lambda_min: f64,
    m: f64,
}

impl Secular<'_> {
    fn radius(&self, sigma: f64) -> f64 {
        2.0 * (sigma - self.lambda_min) / self.m
    }

    /// `(|h(σ)|, d|h|/dσ)`.
    fn step_norm(&self, sigma: f64) -> (f64, f64) {
        let mut sq = 0.0;
        let mut dsq = 0.0;
        for (l, g) in self.lambda.iter().zip(self.g_tilde.iter()) {
            if *g == 0.0 {
                continue;
            }
            let den = l - self.lambda_min + sigma;
            let c = g / den;
            sq += c * c;
            dsq -= 2.0 * c * c / den;
        }
        let n = sq.sqrt();
        (n, if n > 0.0 { 0.5 * dsq / n } else { 0.0 })
    }

    fn psi(&self, sigma: f64) -> f64 {
        self.step_norm(sigma).0 - self.radius(sigma)
    }

    /// Newton step on `1/|h| - 1/r`, which is nearly linear in `σ`.
    fn newton(&self, sigma: f64) -> Option<f64> {
        let (n, dn) = self.step_norm(sigma);
        let r = self.radius(sigma);
        if n <= 0.0 || r <= 0.0 {
            return None;
        }
        let phi = 1.0 / n - 1.0 / r;
        let dphi = -dn / (n * n) + 2.0 / (self.m * r * r);
        let next = sigma - phi / dphi;
        next.is_finite().then_some(next)
    }
}

/// Globally minimize the cubic model.
///
/// `tol` is the relative tolerance on `| |h| - 2(σ - λ_min)/M |` at which the
/// root find may stop early; the bracket is otherwise refined to machine
/// precision.
pub fn solve_cubic(g: &DVector<f64>, hess: &DMatrix<f64>, m: f64, tol: f64) -> Result<CubicSolution> {
    check_inputs(g, hess, m)?;
    let d = g.len();
    let scale = hess.amax().max(1.0);
    let asym = max_asymmetry(hess);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    if d == 0 {
        return Ok(CubicSolution {
            h: DVector::zeros(0),
            model_value: 0.0,
            stationarity_residual: 0.0,
            psd_margin: 0.0,
            hard_case: false,
        });
    }

    let eig = SymmetricEigen::new(symmetrize(hess));
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) || eig.eigenvectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen);
    }
    let lambda = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let bottom = lambda.imin();
    let lambda_min = lambda[bottom];
    let mut g_tilde = q.transpose() * g;

    let g_norm = g.norm();
    let lambda_scale = lambda.amax().max(1.0);
    let bottom_set: Vec<usize> = (0..d)
        .filter(|&i| lambda[i] - lambda_min <= 1e-13 * lambda_scale)
        .collect();
    let g_zero = 1e-14 * g_norm.max(f64::MIN_POSITIVE);

    let sigma_low = lambda_min.max(0.0);
    let mut hard_case = false;
    let sigma;

    if lambda_min <= 0.0 && bottom_set.iter().all(|&i| g_tilde[i].abs() <= g_zero) {
        // candidate boundary solution: drop the bottom components
        for &i in &bottom_set {
            g_tilde[i] = 0.0;
        }
        let sec = Secular { lambda, g_tilde: &g_tilde, lambda_min, m };
        hard_case = sec.psi(0.0) <= 0.0;
    }

    let sec = Secular { lambda, g_tilde: &g_tilde, lambda_min, m };
    if hard_case {
        sigma = 0.0;
    } else if g_norm == 0.0 {
        // lambda_min > 0 here, so h = 0
        sigma = sigma_low;
    } else {
        let mut lo = sigma_low;
        let mut hi = 0.5 * (lambda_min + (lambda_min * lambda_min + 2.0 * m * g_norm).sqrt());
        hi = hi.max(lo);
        let tol = tol.max(4.0 * f64::EPSILON);
        let mut best = hi;
        let mut best_abs = sec.psi(hi).abs();
        let mut candidate: Option<f64> = None;
        let mut last_width = hi - lo;
        for _ in 0..MAX_ITERS {
            let bisect = if lo > 0.0 && hi / lo > 4.0 {
                (lo * hi).sqrt()
            } else if lo == 0.0 {
                hi * 1e-3
            } else {
                0.5 * (lo + hi)
            };
            let x = match candidate.take() {
                Some(c) if c > lo && c < hi => c,
                _ => bisect,
            };
            if !(x > lo && x < hi) {
                break;
            }
            let psi = sec.psi(x);
            if psi.abs() < best_abs {
                best = x;
                best_abs = psi.abs();
            }
            if psi == 0.0 || psi.abs() <= tol * sec.radius(x).max(f64::MIN_POSITIVE) * 1e-3 {
                break;
            }
            if psi > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let width = hi - lo;
            if width <= 2.0 * f64::EPSILON * hi {
                break;
            }
            // only trust Newton while it keeps shrinking the bracket
            if width <= 0.5 * last_width {
                candidate = sec.newton(x);
            }
            last_width = width;
        }
        sigma = best;
    }

    let mut h_tilde = DVector::zeros(d);
    for i in 0..d {
        if g_tilde[i] != 0.0 {
            h_tilde[i] = -g_tilde[i] / (lambda[i] - lambda_min + sigma);
        }
    }
    if hard_case {
        let r = sec.radius(0.0);
        let tau = (r * r - h_tilde.norm_squared()).max(0.0).sqrt();
        h_tilde[bottom] = tau;
    }
    let mut h = q * &h_tilde;
    if hard_case {
        // fix the sign ambiguity of the bottom eigenvector deterministically
        let v = q.column(bottom);
        if v[v.iamax()] < 0.0 {
            h -= v * (2.0 * h_tilde[bottom]);
        }
    }

    let model = model_value(g, hess, m, &h)?;
    let (residual, margin) = check_optimality(g, hess, m, &h);
    Ok(CubicSolution {
        h,
        model_value: model,
        stationarity_residual: residual,
        psd_margin: margin,
        hard_case,
    })
}
