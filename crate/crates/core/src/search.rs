//! Local search: Armijo backtracking, Anderson–Moore and Newton-CG directions,
//! the projection-based loop and the augmented Lagrangian loop.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::derivatives::{alm_eval, inner, AlmEval, AlmHessianForm, AlmState, GradientEval};
use crate::error::{OdcError, Result};
use crate::io::{matrix_rows, opt_matrix_rows};
use crate::lyapunov::GramianPair;
use crate::model::{LtiSystem, Matrix, PerformanceWeights, StructureMask};
use crate::problem::OdcProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmijoParams {
    /// Initial trial step. Large values make the search aggressive.
    pub s_bar: f64,
    pub beta: f64,
    pub alpha: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            s_bar: 1.0,
            beta: 0.5,
            alpha: 1e-2,
            max_backtracks: 60,
        }
    }
}

impl ArmijoParams {
    pub fn new(s_bar: f64, beta: f64, alpha: f64) -> Result<Self> {
        let params = Self {
            s_bar,
            beta,
            alpha,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_bar > 0.0) || !self.s_bar.is_finite() {
            return Err(OdcError::InvalidParameter(format!("s_bar must be positive, got {}", self.s_bar)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(OdcError::InvalidParameter(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(OdcError::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_backtracks == 0 {
            return Err(OdcError::InvalidParameter("max_backtracks must be positive".into()));
        }
        Ok(())
    }
}

/// One trial of the backtracking search. `value` is `None` when the trial
/// point is not stabilizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchTrial {
    pub step: f64,
    pub value: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct ArmijoOutcome {
    pub step: f64,
    pub k_next: Matrix,
    pub value: f64,
    pub trials: Vec<LineSearchTrial>,
}

/// Largest `s` in `{s̄, s̄β, s̄β², ...}` with `K + s d` stabilizing and
/// `f(K + s d) < f(K) + α s <∇f(K), d>`.
///
/// The objective returns `None` outside its domain; such trials are rejected.
pub fn armijo_search<F>(
    objective: F,
    k: &Matrix,
    current_value: f64,
    direction: &Matrix,
    grad: &Matrix,
    params: &ArmijoParams,
) -> Result<ArmijoOutcome>
where
    F: Fn(&Matrix) -> Option<f64>,
{
    params.validate()?;
    let slope = inner(grad, direction);
    let mut trials = Vec::new();
    if !(slope < 0.0) {
        return Err(OdcError::LineSearchFailed { trials });
    }
    let mut step = params.s_bar;
    for _ in 0..params.max_backtracks {
        let candidate = k + direction * step;
        let value = objective(&candidate).filter(|v| v.is_finite());
        let accepted = matches!(value, Some(v) if v < current_value + params.alpha * step * slope);
        trials.push(LineSearchTrial { step, value, accepted });
        if accepted {
            return Ok(ArmijoOutcome {
                step,
                k_next: candidate,
                value: value.unwrap_or(f64::NAN),
                trials,
            });
        }
        step *= params.beta;
    }
    Err(OdcError::LineSearchFailed { trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SearchMethod {
    #[serde(rename = "am")]
    AndersonMoore,
    #[serde(rename = "newton")]
    Newton,
    #[serde(rename = "gd")]
    GradientDescent,
}

impl SearchMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SearchMethod::AndersonMoore => "am",
            SearchMethod::Newton => "newton",
            SearchMethod::GradientDescent => "gd",
        }
    }
}

impl std::str::FromStr for SearchMethod {
    type Err = OdcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "am" => Ok(SearchMethod::AndersonMoore),
            "newton" => Ok(SearchMethod::Newton),
            "gd" => Ok(SearchMethod::GradientDescent),
            other => Err(OdcError::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn solve_dense(mat: Matrix, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let scale = mat.amax();
    let lu = mat.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| OdcError::DegenerateStep("singular frozen-Gramian system".into()))?;
    // tiny pivots give huge but finite solutions
    let smallest_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !x.iter().all(|v| v.is_finite()) || smallest_pivot <= 1e-13 * scale {
        return Err(OdcError::DegenerateStep("ill-conditioned frozen-Gramian system".into()));
    }
    Ok(x)
}

/// With the Gramians frozen, solves `((R2 K' C - R12' - B'P) L C') ∘ I_S = 0`
/// over the free entries of `K'` and returns `K' - K`. Entries of `K'` outside
/// the pattern keep the values of `K`.
pub fn anderson_moore_direction(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    gramians: &GramianPair,
) -> Result<Matrix> {
    let c = sys.c();
    let w = c * &gramians.l * c.transpose();
    let g = (weights.r12().transpose() + sys.b().transpose() * &gramians.p) * &gramians.l * c.transpose();
    let r2 = weights.r2();
    let free = mask.free_indices();
    if free.is_empty() {
        return Ok(Matrix::zeros(k.nrows(), k.ncols()));
    }
    let fixed = mask.complement(k);
    let fixed_term = r2 * &fixed * &w;
    let mut mat = Matrix::zeros(free.len(), free.len());
    let mut rhs = DVector::zeros(free.len());
    for (row, &(i, j)) in free.iter().enumerate() {
        rhs[row] = g[(i, j)] - fixed_term[(i, j)];
        for (col, &(a, b)) in free.iter().enumerate() {
            mat[(row, col)] = r2[(i, a)] * w[(b, j)];
        }
    }
    let x = solve_dense(mat, rhs)?;
    let mut next = fixed;
    for (&ij, v) in free.iter().zip(x.iter()) {
        next[ij] = *v;
    }
    Ok(next - k)
}

/// Frozen-Gramian step for the augmented Lagrangian: solves
/// `2 (R2 K' C - R12' - B'P) L C' + V + c (K' ∘ I_S^c) = 0` over all entries.
pub fn anderson_moore_alm_direction(
    sys: &LtiSystem,
    weights: &PerformanceWeights,
    mask: &StructureMask,
    k: &Matrix,
    gramians: &GramianPair,
    state: &AlmState,
) -> Result<Matrix> {
    let c = sys.c();
    let w = c * &gramians.l * c.transpose();
    let g = (weights.r12().transpose() + sys.b().transpose() * &gramians.p) * &gramians.l * c.transpose();
    let r2 = weights.r2();
    let (m, p) = k.shape();
    let idx = |i: usize, j: usize| i * p + j;
    let mut mat = Matrix::zeros(m * p, m * p);
    let mut rhs = DVector::zeros(m * p);
    for i in 0..m {
        for j in 0..p {
            let row = idx(i, j);
            rhs[row] = 2.0 * g[(i, j)] - state.v()[(i, j)];
            for a in 0..m {
                for b in 0..p {
                    mat[(row, idx(a, b))] = 2.0 * r2[(i, a)] * w[(b, j)];
                }
            }
            if !mask.is_free(i, j) {
                mat[(row, row)] += state.c();
            }
        }
    }
    let x = solve_dense(mat, rhs)?;
    let next = Matrix::from_fn(m, p, |i, j| x[idx(i, j)]);
    Ok(next - k)
}

/// Truncated conjugate gradient for `H d = -g` restricted to the pattern.
///
/// Stops on relative residual `cg_tol`, after `cg_max_iters` iterations, on
/// non-positive curvature, or when a Hessian action fails. Falls back to
/// `-g` whenever no better descent direction is available.
pub fn newton_cg_direction<H>(
    mut hessian_action: H,
    projected_grad: &Matrix,
    mask: &StructureMask,
    cg_tol: f64,
    cg_max_iters: usize,
) -> Matrix
where
    H: FnMut(&Matrix) -> Result<Matrix>,
{
    let steepest = -mask.apply(projected_grad);
    let rhs_norm = steepest.norm();
    if rhs_norm == 0.0 {
        return steepest;
    }
    let mut x = Matrix::zeros(projected_grad.nrows(), projected_grad.ncols());
    let mut r = steepest.clone();
    let mut d = r.clone();
    let mut rr = r.norm_squared();
    for iter in 0..cg_max_iters.max(1) {
        let hd = match hessian_action(&mask.apply(&d)) {
            Ok(h) => mask.apply(&h),
            Err(_) => break,
        };
        let curvature = inner(&d, &hd);
        if !(curvature > 1e-12 * d.norm_squared()) {
            if iter == 0 {
                return steepest;
            }
            break;
        }
        let alpha = rr / curvature;
        x += &d * alpha;
        r -= &hd * alpha;
        let rr_next = r.norm_squared();
        if rr_next.sqrt() <= cg_tol * rhs_norm {
            break;
        }
        d = &r + &d * (rr_next / rr);
        rr = rr_next;
    }
    if inner(projected_grad, &x) < 0.0 && x.iter().all(|v| v.is_finite()) {
        x
    } else {
        steepest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    LineSearchFailed,
    NumericFailure,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max-iters",
            RunStatus::LineSearchFailed => "line-search-failed",
            RunStatus::NumericFailure => "numeric-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    #[serde(with = "matrix_rows")]
    pub k: Matrix,
    /// `J(K)`.
    pub cost: f64,
    /// Value of the minimized function: `J` for projection runs, `L_c` inside
    /// the augmented Lagrangian.
    pub objective: f64,
    /// Step that produced this iterate; 0 for a starting point.
    pub step: f64,
    /// Norm of the gradient that drives the stopping test.
    pub grad_norm: f64,
    /// Backtracking trials that produced this iterate.
    pub trials: Vec<LineSearchTrial>,
    /// Outer augmented Lagrangian iteration, when applicable.
    pub outer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmOuterRecord {
    pub outer: usize,
    pub c: f64,
    pub feasibility: f64,
    pub inner_iterations: usize,
    pub inner_status: RunStatus,
    pub alm_value: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmTrace {
    #[serde(with = "matrix_rows")]
    pub pre_projection_k: Matrix,
    #[serde(with = "matrix_rows")]
    pub post_projection_k: Matrix,
    pub pre_projection_cost: Option<f64>,
    pub feasibility: f64,
    pub outer: Vec<AlmOuterRecord>,
}

/// Trajectory and outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: SearchMethod,
    pub iterates: Vec<IterateRecord>,
    #[serde(with = "matrix_rows")]
    pub final_k: Matrix,
    pub final_cost: f64,
    pub status: RunStatus,
    /// Atlas labels of the iterates (0 where unknown), filled in by the
    /// geometry module.
    pub component_labels: Option<Vec<u32>>,
    pub alm: Option<AlmTrace>,
}

impl RunRecord {
    /// Accepted steps (iterates after the starting point).
    pub fn steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn max_gain_norm(&self) -> f64 {
        self.iterates.iter().map(|it| it.k.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionOptions {
    pub method: SearchMethod,
    pub armijo: ArmijoParams,
    /// Stop when `||∇J(K) ∘ I_S|| < stop_tol`.
    pub stop_tol: f64,
    pub max_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            method: SearchMethod::AndersonMoore,
            armijo: ArmijoParams::default(),
            stop_tol: 1e-3,
            max_iters: 500,
            cg_tol: 1e-6,
            cg_max_iters: 100,
        }
    }
}

impl ProjectionOptions {
    pub fn with_method(method: SearchMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }
}

fn projection_direction(problem: &OdcProblem, eval: &GradientEval, options: &ProjectionOptions) -> Matrix {
    let steepest = -&eval.projected_grad;
    let direction = match options.method {
        SearchMethod::GradientDescent => steepest.clone(),
        SearchMethod::AndersonMoore => anderson_moore_direction(
            &problem.system,
            &problem.weights,
            &problem.mask,
            &eval.k,
            &eval.gramians,
        )
        .map(|d| problem.mask.apply(&d))
        .unwrap_or_else(|_| steepest.clone()),
        SearchMethod::Newton => newton_cg_direction(
            |x| eval.hessian_action(&problem.system, &problem.weights, x, &problem.numeric),
            &eval.projected_grad,
            &problem.mask,
            options.cg_tol,
            options.cg_max_iters,
        ),
    };
    if inner(&eval.projected_grad, &direction) < 0.0 {
        direction
    } else {
        steepest
    }
}

/// Projection-based local search from a structured stabilizing `k0`.
///
/// Every iterate stays structured and stabilizing. A line-search failure ends
/// the run with the partial trajectory.
pub fn solve_projection_method(
    problem: &OdcProblem,
    k0: &Matrix,
    options: &ProjectionOptions,
) -> Result<RunRecord> {
    options.armijo.validate()?;
    problem.system.check_gain(k0)?;
    if !problem.mask.is_structured(k0) {
        return Err(OdcError::Precondition("initial gain is not structured".into()));
    }
    let mut eval = match problem.gradient(k0) {
        Ok(e) => e,
        Err(OdcError::NotStabilizing { abscissa }) => {
            return Err(OdcError::Precondition(format!(
                "initial gain is not-stabilizing (spectral abscissa {abscissa:.6e})"
            )))
        }
        Err(e) => return Err(e),
    };
    let mut iterates = vec![IterateRecord {
        k: k0.clone(),
        cost: eval.cost,
        objective: eval.cost,
        step: 0.0,
        grad_norm: eval.projected_grad.norm(),
        trials: Vec::new(),
        outer: None,
    }];
    let status = loop {
        if eval.projected_grad.norm() < options.stop_tol {
            break RunStatus::Converged;
        }
        if iterates.len() > options.max_iters {
            break RunStatus::MaxIters;
        }
        let direction = projection_direction(problem, &eval, options);
        let outcome = match armijo_search(
            |k| problem.cost_or_infinite(k),
            &eval.k,
            eval.cost,
            &direction,
            &eval.grad,
            &options.armijo,
        ) {
            Ok(o) => o,
            Err(OdcError::LineSearchFailed { .. }) => break RunStatus::LineSearchFailed,
            Err(e) => return Err(e),
        };
        eval = match problem.gradient(&outcome.k_next) {
            Ok(e) => e,
            Err(_) => break RunStatus::NumericFailure,
        };
        iterates.push(IterateRecord {
            k: outcome.k_next,
            cost: eval.cost,
            objective: eval.cost,
            step: outcome.step,
            grad_norm: eval.projected_grad.norm(),
            trials: outcome.trials,
            outer: None,
        });
    };
    Ok(RunRecord {
        method: options.method,
        final_k: eval.k.clone(),
        final_cost: eval.cost,
        iterates,
        status,
        component_labels: None,
        alm: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlmParams {
    /// Initial multiplier (zero when absent); entries on the pattern are ignored.
    #[serde(with = "opt_matrix_rows")]
    pub v0: Option<Matrix>,
    pub c0: f64,
    pub gamma: f64,
    /// Cap on the penalty weight.
    pub tau: f64,
    /// Stop when `||K ∘ I_S^c|| < eps_feas`.
    pub eps_feas: f64,
    /// Inner stop when `||∇L_c(K)|| < inner_tol`.
    pub inner_tol: f64,
}

impl Default for AlmParams {
    fn default() -> Self {
        Self {
            v0: None,
            c0: 10.0,
            gamma: 3.0,
            tau: 1e5,
            eps_feas: 1e-4,
            inner_tol: 1e-2,
        }
    }
}

impl AlmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(OdcError::InvalidParameter(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if !(self.c0 > 0.0) {
            return Err(OdcError::InvalidParameter(format!("c0 must be positive, got {}", self.c0)));
        }
        if !(self.tau >= self.c0) {
            return Err(OdcError::InvalidParameter("tau must be at least c0".into()));
        }
        if !(self.eps_feas > 0.0) || !(self.inner_tol > 0.0) {
            return Err(OdcError::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlmOptions {
    pub inner_method: SearchMethod,
    pub armijo: ArmijoParams,
    pub alm: AlmParams,
    pub max_outer: usize,
    pub max_inner: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub hessian_form: AlmHessianForm,
}

impl Default for AlmOptions {
    fn default() -> Self {
        Self {
            inner_method: SearchMethod::AndersonMoore,
            armijo: ArmijoParams::default(),
            alm: AlmParams::default(),
            max_outer: 50,
            max_inner: 500,
            cg_tol: 1e-6,
            cg_max_iters: 100,
            hessian_form: AlmHessianForm::default(),
        }
    }
}

fn alm_direction(problem: &OdcProblem, eval: &AlmEval, state: &AlmState, options: &AlmOptions) -> Matrix {
    let steepest = -&eval.grad;
    let full = StructureMask::full(problem.mask.nrows(), problem.mask.ncols());
    let direction = match options.inner_method {
        SearchMethod::GradientDescent => steepest.clone(),
        SearchMethod::AndersonMoore => anderson_moore_alm_direction(
            &problem.system,
            &problem.weights,
            &problem.mask,
            &eval.base.k,
            &eval.base.gramians,
            state,
        )
        .unwrap_or_else(|_| steepest.clone()),
        SearchMethod::Newton => newton_cg_direction(
            |x| {
                eval.hessian_action(
                    &problem.system,
                    &problem.weights,
                    &problem.mask,
                    state,
                    x,
                    options.hessian_form,
                    &problem.numeric,
                )
            },
            &eval.grad,
            &full,
            options.cg_tol,
            options.cg_max_iters,
        ),
    };
    if inner(&eval.grad, &direction) < 0.0 {
        direction
    } else {
        steepest
    }
}

fn alm_objective(problem: &OdcProblem, state: &AlmState, k: &Matrix) -> Option<f64> {
    let j = problem.cost_or_infinite(k)?;
    let off = problem.mask.complement(k);
    Some(j + inner(state.v(), &off) + 0.5 * state.c() * off.norm_squared())
}

/// Augmented Lagrangian method from a stabilizing (not necessarily
/// structured) `k0`.
pub fn solve_alm(problem: &OdcProblem, k0: &Matrix, options: &AlmOptions) -> Result<RunRecord> {
    options.armijo.validate()?;
    options.alm.validate()?;
    problem.system.check_gain(k0)?;
    if !problem.is_stabilizing(k0) {
        let abscissa = problem.stability(k0).map(|r| r.spectral_abscissa).unwrap_or(f64::NAN);
        return Err(OdcError::Precondition(format!(
            "initial gain is not-stabilizing (spectral abscissa {abscissa:.6e})"
        )));
    }
    let mask = &problem.mask;
    let mut v = match &options.alm.v0 {
        Some(v0) => {
            problem.system.check_gain(v0)?;
            mask.complement(v0)
        }
        None => Matrix::zeros(k0.nrows(), k0.ncols()),
    };
    let mut c = options.alm.c0;
    let mut k = k0.clone();
    let mut iterates: Vec<IterateRecord> = Vec::new();
    let mut outer_log = Vec::new();
    let mut status = RunStatus::MaxIters;

    for outer in 0..options.max_outer {
        let feasibility = mask.complement(&k).norm();
        if feasibility < options.alm.eps_feas {
            status = RunStatus::Converged;
            break;
        }
        let state = AlmState::new(mask, v.clone(), c)?;
        let mut eval = match alm_eval(&problem.system, &problem.weights, mask, &k, &state, &problem.numeric) {
            Ok(e) => e,
            Err(_) => {
                status = RunStatus::NumericFailure;
                break;
            }
        };
        iterates.push(IterateRecord {
            k: k.clone(),
            cost: eval.base.cost,
            objective: eval.value,
            step: 0.0,
            grad_norm: eval.grad.norm(),
            trials: Vec::new(),
            outer: Some(outer),
        });
        let mut inner_iterations = 0;
        let inner_status = loop {
            if eval.grad.norm() < options.alm.inner_tol {
                break RunStatus::Converged;
            }
            if inner_iterations >= options.max_inner {
                break RunStatus::MaxIters;
            }
            let direction = alm_direction(problem, &eval, &state, options);
            let outcome = match armijo_search(
                |x| alm_objective(problem, &state, x),
                &eval.base.k,
                eval.value,
                &direction,
                &eval.grad,
                &options.armijo,
            ) {
                Ok(o) => o,
                Err(OdcError::LineSearchFailed { .. }) => break RunStatus::LineSearchFailed,
                Err(e) => return Err(e),
            };
            eval = match alm_eval(&problem.system, &problem.weights, mask, &outcome.k_next, &state, &problem.numeric) {
                Ok(e) => e,
                Err(_) => break RunStatus::NumericFailure,
            };
            inner_iterations += 1;
            iterates.push(IterateRecord {
                k: outcome.k_next,
                cost: eval.base.cost,
                objective: eval.value,
                step: outcome.step,
                grad_norm: eval.grad.norm(),
                trials: outcome.trials,
                outer: Some(outer),
            });
        };
        k = eval.base.k.clone();
        outer_log.push(AlmOuterRecord {
            outer,
            c,
            feasibility: mask.complement(&k).norm(),
            inner_iterations,
            inner_status,
            alm_value: eval.value,
            cost: eval.base.cost,
        });
        if matches!(inner_status, RunStatus::LineSearchFailed | RunStatus::NumericFailure) {
            status = inner_status;
            break;
        }
        v += mask.complement(&k) * c;
        c = (c * options.alm.gamma).min(options.alm.tau);
    }
    if status == RunStatus::MaxIters && mask.complement(&k).norm() < options.alm.eps_feas {
        status = RunStatus::Converged;
    }

    let pre_projection_cost = problem.cost_or_infinite(&k);
    let projected = mask.apply(&k);
    let final_cost = match problem.cost_or_infinite(&projected) {
        Some(j) => j,
        None => {
            status = RunStatus::NumericFailure;
            f64::INFINITY
        }
    };
    let feasibility = mask.complement(&k).norm();
    if iterates.is_empty() {
        iterates.push(IterateRecord {
            k: k.clone(),
            cost: pre_projection_cost.unwrap_or(f64::INFINITY),
            objective: pre_projection_cost.unwrap_or(f64::INFINITY),
            step: 0.0,
            grad_norm: problem.gradient(&k).map(|g| g.grad.norm()).unwrap_or(f64::NAN),
            trials: Vec::new(),
            outer: None,
        });
    }
    Ok(RunRecord {
        method: options.inner_method,
        iterates,
        final_k: projected.clone(),
        final_cost,
        status,
        component_labels: None,
        alm: Some(AlmTrace {
            pre_projection_k: k,
            post_projection_k: projected,
            pre_projection_cost,
            feasibility,
            outer: outer_log,
        }),
    })
}

/// `<∇J(K), target - K> < 0`.
pub fn is_descent_direction(problem: &OdcProblem, k: &Matrix, target: &Matrix) -> Result<bool> {
    let eval = problem.gradient(k)?;
    Ok(inner(&eval.grad, &(target - k)) < 0.0)
}
