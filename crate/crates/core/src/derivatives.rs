//! First- and second-order information of the cost and of the augmented
//! Lagrangian.
//!
//! Every Hessian action costs two extra Lyapunov solves. The Gramians and the
//! closed loop at the base point are kept inside [`GradientEval`] so that a
//! conjugate-gradient loop can apply many actions at the same `K` without
//! recomputing them.

use serde::{Deserialize, Serialize};

use crate::error::{OdcError, Result};
use crate::lyapunov::{closed_loop_gramians, GramianPair, KroneckerLu, LyapunovBackend, NumericConfig};
use crate::model::{LtiSystem, Matrix, PerformanceWeights, StructureMask};

/// Frobenius inner product.
pub fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.dot(b)
}

/// Cost, gradient and projected gradient at one gain, plus the cached
/// quantities needed by [`GradientEval::hessian_action`].
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub k: Matrix,
    pub cost: f64,
    pub grad: Matrix,
    pub projected_grad: Matrix,
    pub gramians: GramianPair,
    closed_loop: Matrix,
    /// `R2 K C - R12' - B' P`
    gain_residual: Matrix,
}

pub fn gradient(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    config: &NumericConfig,
) -> Result<GradientEval> {
    if mask.nrows() != k.nrows() || mask.ncols() != k.ncols() {
        return Err(OdcError::DimensionMismatch("mask and gain shapes differ".into()));
    }
    let gramians = closed_loop_gramians(sys, weights, k, config)?;
    let gain_residual =
        weights.r2() * k * sys.c() - weights.r12().transpose() - sys.b().transpose() * &gramians.p;
    let grad = &gain_residual * &gramians.l * sys.c().transpose() * 2.0;
    let projected_grad = mask.apply(&grad);
    let cost = (&gramians.p * sys.d0()).trace();
    Ok(GradientEval {
        k: k.clone(),
        cost,
        grad,
        projected_grad,
        gramians,
        closed_loop: sys.closed_loop(k),
        gain_residual,
    })
}

impl GradientEval {
    /// `H_J(K, K̃)`, the derivative of the gradient at `K` along `K̃`.
    pub fn hessian_action(
        &self,
        sys: &LtiSystem,
        weights: &PerformanceWeights,
        k_tilde: &Matrix,
        config: &NumericConfig,
    ) -> Result<Matrix> {
        sys.check_gain(k_tilde)?;
        let c = sys.c();
        let l = &self.gramians.l;
        // A_cl L̃ + L̃ A_cl' = B K̃ C L + (B K̃ C L)'
        let bkcl = sys.b() * k_tilde * c * l;
        let son_l = &bkcl + bkcl.transpose();
        let l_tilde = KroneckerLu.solve(&self.closed_loop.transpose(), &-son_l, config)?;
        // A_cl' P̃ + P̃ A_cl = (R12' + B'P - R2 K C)' K̃ C + transpose
        let t = -self.gain_residual.transpose() * k_tilde * c;
        let son_p = &t + t.transpose();
        let p_tilde = KroneckerLu.solve(&self.closed_loop, &-son_p, config)?;

        let first = (weights.r2() * k_tilde * c - sys.b().transpose() * p_tilde) * l * c.transpose();
        let second = &self.gain_residual * l_tilde * c.transpose();
        Ok((first + second) * 2.0)
    }
}

pub fn hessian_action(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    k_tilde: &Matrix,
    config: &NumericConfig,
) -> Result<Matrix> {
    gradient(sys, weights, mask, k, config)?.hessian_action(sys, weights, k_tilde, config)
}

/// Multiplier and penalty weight of the augmented Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmState {
    v: Matrix,
    c: f64,
}

impl AlmState {
    pub fn new(mask: &StructureMask, v: Matrix, c: f64) -> Result<Self> {
        if v.nrows() != mask.nrows() || v.ncols() != mask.ncols() {
            return Err(OdcError::DimensionMismatch("multiplier and mask shapes differ".into()));
        }
        if mask.apply(&v).iter().any(|x| *x != 0.0) {
            return Err(OdcError::InvalidParameter(
                "multiplier must vanish on the free entries".into(),
            ));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(OdcError::InvalidParameter(format!("penalty weight must be positive, got {c}")));
        }
        Ok(Self { v, c })
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// Which penalty curvature the augmented Lagrangian Hessian action uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlmHessianForm {
    /// `H_J(K, K̃) + c (K̃ ∘ I_S^c)`, the exact second derivative.
    #[default]
    MaskRestricted,
    /// `H_J(K, K̃) + c K̃`.
    Unrestricted,
}

/// Augmented Lagrangian value and gradient at one gain.
#[derive(Debug, Clone)]
pub struct AlmEval {
    pub value: f64,
    pub grad: Matrix,
    pub base: GradientEval,
}

fn penalty_terms(mask: &StructureMask, k: &Matrix, state: &AlmState) -> (f64, Matrix) {
    let off = mask.complement(k);
    let value = inner(&state.v, &off) + 0.5 * state.c * off.norm_squared();
    (value, &state.v + off * state.c)
}

pub fn alm_eval(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    state: &AlmState,
    config: &NumericConfig,
) -> Result<AlmEval> {
    let base = gradient(sys, weights, mask, k, config)?;
    let (penalty, penalty_grad) = penalty_terms(mask, k, state);
    Ok(AlmEval {
        value: base.cost + penalty,
        grad: &base.grad + penalty_grad,
        base,
    })
}

pub fn alm_value(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    state: &AlmState,
    config: &NumericConfig,
) -> Result<f64> {
    let j = crate::lyapunov::cost(sys, weights, k, config)?;
    Ok(j + penalty_terms(mask, k, state).0)
}

pub fn alm_gradient(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    state: &AlmState,
    config: &NumericConfig,
) -> Result<Matrix> {
    Ok(alm_eval(sys, weights, mask, k, state, config)?.grad)
}

impl AlmEval {
    pub fn hessian_action(
        &self,
        sys: &LtiSystem,
        weights: &PerformanceWeights,
        mask: &StructureMask,
        state: &AlmState,
        k_tilde: &Matrix,
        form: AlmHessianForm,
        config: &NumericConfig,
    ) -> Result<Matrix> {
        let h = self.base.hessian_action(sys, weights, k_tilde, config)?;
        let penalty = match form {
            AlmHessianForm::MaskRestricted => mask.complement(k_tilde),
            AlmHessianForm::Unrestricted => k_tilde.clone(),
        };
        Ok(h + penalty * state.c)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn alm_hessian_action(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    state: &AlmState,
    k_tilde: &Matrix,
    form: AlmHessianForm,
    config: &NumericConfig,
) -> Result<Matrix> {
    alm_eval(sys, weights, mask, k, state, config)?
        .hessian_action(sys, weights, mask, state, k_tilde, form, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Benchmark;

    fn cfg() -> NumericConfig {
        NumericConfig::default()
    }

    #[test]
    fn closed_form_gradient() {
        let i = Matrix::identity(3, 3);
        let sys = LtiSystem::new(-&i, i.clone(), i.clone(), i.clone()).unwrap();
        let w = PerformanceWeights::new(i.clone(), Matrix::zeros(3, 3), i.clone()).unwrap();
        let mask = StructureMask::full(3, 3);
        let g = gradient(&sys, &w, &mask, &Matrix::zeros(3, 3), &cfg()).unwrap();
        assert!((g.grad + &i * 0.5).amax() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_inverse_optimum() {
        let b = Benchmark::chain_n3_a(0.05).unwrap();
        let g = gradient(&b.system, &b.weights, &b.mask, &b.k_opt, &cfg()).unwrap();
        assert!(g.cost.abs() < 1e-9);
        assert!(g.grad.norm() <= 1e-8 * (1.0 + b.k_opt.norm()));
    }

    #[test]
    fn projected_gradient_is_masked_exactly() {
        let b = Benchmark::chain_n3_a(0.0).unwrap();
        let k = b.mask.embed(&[6.0, -3.0, -0.6]);
        let g = gradient(&b.system, &b.weights, &b.mask, &k, &cfg()).unwrap();
        assert_eq!(g.projected_grad, b.mask.apply(&g.grad));
        assert!(b.mask.is_structured(&g.projected_grad));
        let dir = b.mask.embed(&[0.3, -1.0, 2.0]);
        assert_eq!(inner(&g.grad, &dir), inner(&g.projected_grad, &dir));
    }

    #[test]
    fn hessian_action_is_linear() {
        let b = Benchmark::chain_n3_a(0.0).unwrap();
        let k = b.mask.embed(&[6.0, -3.0, -0.6]);
        let g = gradient(&b.system, &b.weights, &b.mask, &k, &cfg()).unwrap();
        let zero = g.hessian_action(&b.system, &b.weights, &Matrix::zeros(3, 3), &cfg()).unwrap();
        assert_eq!(zero.amax(), 0.0);
        let x = Matrix::from_row_slice(3, 3, &[1.0, 0.2, -0.3, 0.0, 0.5, 0.1, -1.0, 0.0, 2.0]);
        let y = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.4, -0.5, 0.0, 0.3, 0.2, -0.1]);
        let hx = g.hessian_action(&b.system, &b.weights, &x, &cfg()).unwrap();
        let hy = g.hessian_action(&b.system, &b.weights, &y, &cfg()).unwrap();
        let hz = g
            .hessian_action(&b.system, &b.weights, &(&x * 2.5 - &y * 0.75), &cfg())
            .unwrap();
        let expected = hx * 2.5 - hy * 0.75;
        assert!((hz - &expected).amax() <= 1e-9 * (1.0 + expected.amax()));
    }

    #[test]
    fn alm_value_on_structured_gain_is_cost() {
        let b = Benchmark::chain_n3_alm().unwrap();
        let k = b.mask.embed(&[6.3, 6.1, 3.3]);
        let v = b.mask.complement(&Matrix::from_element(3, 3, 7.0));
        let state = AlmState::new(&b.mask, v, 123.0).unwrap();
        let j = crate::lyapunov::cost(&b.system, &b.weights, &k, &cfg()).unwrap();
        let l = alm_value(&b.system, &b.weights, &b.mask, &k, &state, &cfg()).unwrap();
        assert_eq!(l, j);
    }

    #[test]
    fn alm_value_single_off_pattern_entry() {
        let b = Benchmark::chain_n3_alm().unwrap();
        let mut k = b.mask.embed(&[6.3, 6.1, 3.3]);
        k[(0, 1)] = 0.1;
        let state = AlmState::new(&b.mask, Matrix::zeros(3, 3), 2.0).unwrap();
        let j = crate::lyapunov::cost(&b.system, &b.weights, &k, &cfg()).unwrap();
        let l = alm_value(&b.system, &b.weights, &b.mask, &k, &state, &cfg()).unwrap();
        assert!((l - (j + 0.01)).abs() <= 1e-12 * j.abs());
    }

    #[test]
    fn alm_gradient_reduces_to_gradient_on_structured_gain() {
        let b = Benchmark::chain_n3_alm().unwrap();
        let k = b.mask.embed(&[6.3, 6.1, 3.3]);
        let state = AlmState::new(&b.mask, Matrix::zeros(3, 3), 10.0).unwrap();
        let g = gradient(&b.system, &b.weights, &b.mask, &k, &cfg()).unwrap();
        let lg = alm_gradient(&b.system, &b.weights, &b.mask, &k, &state, &cfg()).unwrap();
        assert_eq!(lg, g.grad);
    }

    #[test]
    fn alm_hessian_forms() {
        let b = Benchmark::chain_n3_alm().unwrap();
        let k = b.mask.embed(&[6.3, 6.1, 3.3]);
        let state = AlmState::new(&b.mask, Matrix::zeros(3, 3), 10.0).unwrap();
        let eval = alm_eval(&b.system, &b.weights, &b.mask, &k, &state, &cfg()).unwrap();
        let structured = b.mask.embed(&[1.0, -2.0, 0.5]);
        let h = eval.base.hessian_action(&b.system, &b.weights, &structured, &cfg()).unwrap();
        let hl = eval
            .hessian_action(&b.system, &b.weights, &b.mask, &state, &structured, AlmHessianForm::MaskRestricted, &cfg())
            .unwrap();
        assert_eq!(h, hl);
        let hp = eval
            .hessian_action(&b.system, &b.weights, &b.mask, &state, &structured, AlmHessianForm::Unrestricted, &cfg())
            .unwrap();
        assert!((hp - (&h + &structured * 10.0)).amax() < 1e-12 * (1.0 + h.amax()));
    }

    #[test]
    fn alm_state_validation() {
        let mask = StructureMask::diagonal(2, 2);
        assert!(AlmState::new(&mask, Matrix::identity(2, 2), 1.0).is_err());
        assert!(AlmState::new(&mask, Matrix::zeros(2, 2), 0.0).is_err());
        assert!(AlmState::new(&mask, Matrix::zeros(2, 2), 1.0).is_ok());
    }
}
