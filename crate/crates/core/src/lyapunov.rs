//! Lyapunov solves, closed-loop Gramians, the stability predicate and the cost.

use nalgebra::Schur;
use serde::{Deserialize, Serialize};

use crate::error::{OdcError, Result};
use crate::model::{LtiSystem, Matrix, PerformanceWeights};

/// Numeric tolerances shared by the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    /// A closed loop is stable when its spectral abscissa is below `-stability_margin`.
    pub stability_margin: f64,
    /// Largest accepted 1-norm condition number of a Kronecker Lyapunov system.
    pub lyapunov_max_condition: f64,
    /// QR sweeps allowed per eigenvalue (cap is `factor * n`).
    pub eig_iteration_factor: usize,
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            stability_margin: 1e-9,
            lyapunov_max_condition: 1e12,
            eig_iteration_factor: 100,
        }
    }
}

/// Solver for `M' X + X M = -Q`.
pub trait LyapunovBackend: Send + Sync {
    fn solve(&self, m: &Matrix, q: &Matrix, config: &NumericConfig) -> Result<Matrix>;
}

/// Dense LU on the vectorized system `(I ⊗ M' + M' ⊗ I) vec X = -vec Q`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KroneckerLu;

impl LyapunovBackend for KroneckerLu {
    fn solve(&self, m: &Matrix, q: &Matrix, config: &NumericConfig) -> Result<Matrix> {
        let n = m.nrows();
        if m.ncols() != n || q.nrows() != n || q.ncols() != n {
            return Err(OdcError::DimensionMismatch(format!(
                "lyapunov operands are {}x{} and {}x{}",
                m.nrows(),
                m.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        let nn = n * n;
        // column-major vec: X[i, j] sits at i + n * j
        let mut kron = Matrix::zeros(nn, nn);
        for j in 0..n {
            for i in 0..n {
                let row = i + n * j;
                for k in 0..n {
                    // (M' X)[i, j] = sum_k M[k, i] X[k, j]
                    kron[(row, k + n * j)] += m[(k, i)];
                    // (X M)[i, j] = sum_k X[i, k] M[k, j]
                    kron[(row, i + n * k)] += m[(k, j)];
                }
            }
        }
        let norm1 = one_norm(&kron);
        let lu = kron.lu();
        let inverse = lu.try_inverse().ok_or(OdcError::LyapunovSingular {
            condition: f64::INFINITY,
        })?;
        let condition = norm1 * one_norm(&inverse);
        if !condition.is_finite() || condition > config.lyapunov_max_condition {
            return Err(OdcError::LyapunovSingular { condition });
        }
        let rhs = Matrix::from_column_slice(nn, 1, (-q).as_slice());
        let x = inverse * rhs;
        let x = Matrix::from_column_slice(n, n, x.as_slice());
        Ok((&x + x.transpose()) * 0.5)
    }
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Symmetric `X` with `M' X + X M = -Q`.
pub fn solve_lyapunov(m: &Matrix, q: &Matrix) -> Result<Matrix> {
    KroneckerLu.solve(m, q, &NumericConfig::default())
}

/// Frobenius norm of `M' X + X M + Q`.
pub fn lyapunov_residual(m: &Matrix, x: &Matrix, q: &Matrix) -> f64 {
    (m.transpose() * x + x * m + q).norm()
}

/// Largest real part among the eigenvalues of `m`.
pub fn spectral_abscissa(m: &Matrix, config: &NumericConfig) -> Result<f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(OdcError::NumericFailure("non-finite closed-loop matrix".into()));
    }
    let cap = config.eig_iteration_factor.max(1) * n;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, cap).ok_or_else(|| {
        OdcError::NumericFailure(format!("eigenvalue iteration did not converge in {cap} sweeps"))
    })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub is_stable: bool,
    pub spectral_abscissa: f64,
    pub margin: f64,
}

pub fn stability_report(sys: &LtiSystem, k: &Matrix, config: &NumericConfig) -> Result<StabilityReport> {
    sys.check_gain(k)?;
    let abscissa = spectral_abscissa(&sys.closed_loop(k), config)?;
    Ok(StabilityReport {
        is_stable: abscissa < -config.stability_margin,
        spectral_abscissa: abscissa,
        margin: config.stability_margin,
    })
}

/// Closed-loop controllability (`l`) and observability (`p`) Gramians.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianPair {
    pub l: Matrix,
    pub p: Matrix,
}

/// `R1 - R12 K C - C'K'R12' + C'K'R2 K C`.
pub fn weighted_state_cost(sys: &LtiSystem, weights: &PerformanceWeights, k: &Matrix) -> Matrix {
    let kc = k * sys.c();
    let cross = weights.r12() * &kc;
    let r = weights.r1() - &cross - cross.transpose() + kc.transpose() * weights.r2() * &kc;
    (&r + r.transpose()) * 0.5
}

pub fn closed_loop_gramians(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    k: &Matrix,
    config: &NumericConfig,
) -> Result<GramianPair> {
    weights.check_against(sys)?;
    let report = stability_report(sys, k, config)?;
    if !report.is_stable {
        return Err(OdcError::NotStabilizing {
            abscissa: report.spectral_abscissa,
        });
    }
    let a_cl = sys.closed_loop(k);
    let l = KroneckerLu.solve(&a_cl.transpose(), sys.d0(), config)?;
    let p = KroneckerLu.solve(&a_cl, &weighted_state_cost(sys, weights, k), config)?;
    Ok(GramianPair { l, p })
}

/// `trace(P D0)`.
pub fn cost(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    k: &Matrix,
    config: &NumericConfig,
) -> Result<f64> {
    let g = closed_loop_gramians(sys, weights, k, config)?;
    Ok((&g.p * sys.d0()).trace())
}
