//! Plant, cost weights and controller structure.
//!
//! The plant is `dx/dt = A x + B u`, `y = C x`, driven by a random initial state
//! with covariance `D0` and closed through a static output feedback `u = -K y`.
//! The controller `K` (m×p) is restricted to a sparsity subspace described by a
//! [`StructureMask`].

use nalgebra::DMatrix;

use crate::error::{OdcError, Result};

pub type Matrix = DMatrix<f64>;

fn symmetric_within(m: &Matrix, rel: f64) -> bool {
    let scale = 1.0 + m.amax();
    (m - m.transpose()).amax() <= rel * scale
}

fn check_square(name: &str, m: &Matrix, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(OdcError::DimensionMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_finite(name: &str, m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(OdcError::InvalidParameter(format!("{name} has non-finite entries")))
    }
}

/// Continuous-time LTI plant with initial-state covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d0: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d0: Matrix) -> Result<Self> {
        let n = a.nrows();
        check_square("A", &a, n)?;
        check_square("D0", &d0, n)?;
        if b.nrows() != n {
            return Err(OdcError::DimensionMismatch(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(OdcError::DimensionMismatch(format!(
                "C has {} columns, expected {n}",
                c.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D0", &d0)] {
            check_finite(name, m)?;
        }
        if !symmetric_within(&d0, 1e-12) {
            return Err(OdcError::InvalidParameter("D0 is not symmetric".into()));
        }
        if d0.clone().cholesky().is_none() {
            return Err(OdcError::InvalidParameter(
                "D0 is not positive definite".into(),
            ));
        }
        Ok(Self { a, b, c, d0 })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn d0(&self) -> &Matrix {
        &self.d0
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn check_gain(&self, k: &Matrix) -> Result<()> {
        if k.nrows() != self.m() || k.ncols() != self.p() {
            return Err(OdcError::DimensionMismatch(format!(
                "gain is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                self.m(),
                self.p()
            )));
        }
        Ok(())
    }

    /// `A - B K C`.
    pub fn closed_loop(&self, k: &Matrix) -> Matrix {
        &self.a - &self.b * k * &self.c
    }

    /// Rank test on `C` through its singular values.
    pub fn c_has_full_row_rank(&self) -> bool {
        let sv = self.c.clone().svd(false, false).singular_values;
        let tol = sv.max() * (self.n().max(self.p()) as f64) * f64::EPSILON;
        sv.iter().filter(|s| **s > tol).count() == self.p()
    }
}

/// Quadratic cost weights `R1`, `R12`, `R2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceWeights {
    r1: Matrix,
    r12: Matrix,
    r2: Matrix,
}

impl PerformanceWeights {
    pub fn new(r1: Matrix, r12: Matrix, r2: Matrix) -> Result<Self> {
        let n = r1.nrows();
        let m = r2.nrows();
        check_square("R1", &r1, n)?;
        check_square("R2", &r2, m)?;
        if r12.nrows() != n || r12.ncols() != m {
            return Err(OdcError::DimensionMismatch(format!(
                "R12 is {}x{}, expected {n}x{m}",
                r12.nrows(),
                r12.ncols()
            )));
        }
        for (name, mat) in [("R1", &r1), ("R12", &r12), ("R2", &r2)] {
            check_finite(name, mat)?;
        }
        if !symmetric_within(&r1, 1e-10) || !symmetric_within(&r2, 1e-10) {
            return Err(OdcError::InvalidParameter("R1 and R2 must be symmetric".into()));
        }
        if r2.clone().cholesky().is_none() {
            return Err(OdcError::InvalidParameter(
                "R2 is not positive definite".into(),
            ));
        }
        let weights = Self { r1, r12, r2 };
        let block = weights.block();
        let min_eig = block.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * (1.0 + block.amax()) {
            return Err(OdcError::InvalidParameter(format!(
                "[[R1, R12], [R12', R2]] is not positive semi-definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(weights)
    }

    pub fn r1(&self) -> &Matrix {
        &self.r1
    }

    pub fn r12(&self) -> &Matrix {
        &self.r12
    }

    pub fn r2(&self) -> &Matrix {
        &self.r2
    }

    /// The symmetrized block matrix `[[R1, R12], [R12', R2]]`.
    pub fn block(&self) -> Matrix {
        let n = self.r1.nrows();
        let m = self.r2.nrows();
        let mut block = Matrix::zeros(n + m, n + m);
        block.view_mut((0, 0), (n, n)).copy_from(&self.r1);
        block.view_mut((0, n), (n, m)).copy_from(&self.r12);
        block.view_mut((n, 0), (m, n)).copy_from(&self.r12.transpose());
        block.view_mut((n, n), (m, m)).copy_from(&self.r2);
        (&block + block.transpose()) * 0.5
    }

    pub fn is_block_positive_definite(&self) -> bool {
        self.block().cholesky().is_some()
    }

    pub fn check_against(&self, sys: &LtiSystem) -> Result<()> {
        if self.r1.nrows() != sys.n() || self.r2.nrows() != sys.m() {
            return Err(OdcError::DimensionMismatch(format!(
                "weights are sized for n={}, m={}, system has n={}, m={}",
                self.r1.nrows(),
                self.r2.nrows(),
                sys.n(),
                sys.m()
            )));
        }
        Ok(())
    }
}

/// Binary sparsity pattern `I_S` of the controller. An entry is `true` when the
/// corresponding entry of `K` is free.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StructureMask {
    pattern: DMatrix<bool>,
}

impl StructureMask {
    pub fn from_pattern(pattern: DMatrix<bool>) -> Self {
        Self { pattern }
    }

    /// Mask from a 0/1 matrix. Any other value is rejected.
    pub fn from_indicator(indicator: &Matrix) -> Result<Self> {
        let mut pattern = DMatrix::from_element(indicator.nrows(), indicator.ncols(), false);
        for (idx, v) in indicator.iter().enumerate() {
            pattern[idx] = if *v == 1.0 {
                true
            } else if *v == 0.0 {
                false
            } else {
                return Err(OdcError::InvalidParameter(format!(
                    "mask entries must be 0 or 1, found {v}"
                )));
            };
        }
        Ok(Self { pattern })
    }

    pub fn diagonal(m: usize, p: usize) -> Self {
        Self {
            pattern: DMatrix::from_fn(m, p, |i, j| i == j),
        }
    }

    /// No structural constraint.
    pub fn full(m: usize, p: usize) -> Self {
        Self {
            pattern: DMatrix::from_element(m, p, true),
        }
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols()
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        self.pattern[(i, j)]
    }

    pub fn pattern(&self) -> &DMatrix<bool> {
        &self.pattern
    }

    pub fn indicator(&self) -> Matrix {
        self.pattern.map(|b| if b { 1.0 } else { 0.0 })
    }

    /// `K ∘ I_S`.
    pub fn apply(&self, k: &Matrix) -> Matrix {
        Matrix::from_fn(k.nrows(), k.ncols(), |i, j| {
            if self.pattern[(i, j)] {
                k[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// `K ∘ I_S^c`.
    pub fn complement(&self, k: &Matrix) -> Matrix {
        Matrix::from_fn(k.nrows(), k.ncols(), |i, j| {
            if self.pattern[(i, j)] {
                0.0
            } else {
                k[(i, j)]
            }
        })
    }

    pub fn complement_mask(&self) -> Self {
        Self {
            pattern: self.pattern.map(|b| !b),
        }
    }

    /// Exact test `K ∘ I_S^c = 0`.
    pub fn is_structured(&self, k: &Matrix) -> bool {
        k.shape() == self.pattern.shape()
            && self
                .pattern
                .iter()
                .zip(k.iter())
                .all(|(free, v)| *free || *v == 0.0)
    }

    /// Free positions in row-major order.
    pub fn free_indices(&self) -> Vec<(usize, usize)> {
        let (m, p) = self.pattern.shape();
        (0..m)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| self.pattern[(i, j)])
            .collect()
    }

    pub fn free_count(&self) -> usize {
        self.pattern.iter().filter(|b| **b).count()
    }

    /// Values of `K` at the free positions, row-major.
    pub fn extract(&self, k: &Matrix) -> Vec<f64> {
        self.free_indices().into_iter().map(|ij| k[ij]).collect()
    }

    /// Structured matrix with the given free values (row-major free order).
    pub fn embed(&self, values: &[f64]) -> Matrix {
        let mut k = Matrix::zeros(self.nrows(), self.ncols());
        for (ij, v) in self.free_indices().into_iter().zip(values) {
            k[ij] = *v;
        }
        k
    }
}

/// Parameters of the tridiagonal chain family.
///
/// `f[0]` is `f_1`. `h` is stored 1-indexed like `f`: `h[0]` is a placeholder
/// and `h[i - 1]` holds `h_i` for `i = 2..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFamilyParams {
    pub n: usize,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub eps: f64,
}

impl ChainFamilyParams {
    /// `h_tail` holds `h_2..h_n`.
    pub fn new(f: Vec<f64>, h_tail: Vec<f64>, eps: f64) -> Result<Self> {
        let n = f.len();
        let mut h = Vec::with_capacity(n);
        h.push(0.0);
        h.extend(h_tail);
        let params = Self { n, f, h, eps };
        params.validate()?;
        Ok(params)
    }

    fn f_at(&self, i: usize) -> f64 {
        self.f[i - 1]
    }

    fn h_at(&self, i: usize) -> f64 {
        self.h[i - 1]
    }

    /// Sign rules: `f_1 < 0` and `(-1)^i (f_i - h_{i+1}) > 0` wherever `h_{i+1}`
    /// exists (`i = 2..n-1`).
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(OdcError::InvalidParameter(format!(
                "chain order must be at least 2, got {}",
                self.n
            )));
        }
        if self.f.len() != self.n || self.h.len() != self.n {
            return Err(OdcError::InvalidParameter(format!(
                "expected {} values of f and {} of h (with placeholder), got {} and {}",
                self.n,
                self.n,
                self.f.len(),
                self.h.len()
            )));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(OdcError::InvalidParameter(format!(
                "eps must be finite and nonnegative, got {}",
                self.eps
            )));
        }
        if self.f.iter().chain(&self.h).any(|v| !v.is_finite()) {
            return Err(OdcError::InvalidParameter("non-finite chain parameter".into()));
        }
        if !(self.f_at(1) < 0.0) {
            return Err(OdcError::InvalidParameter(format!(
                "f_1 must be negative, got {}",
                self.f_at(1)
            )));
        }
        for i in 2..self.n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let v = sign * (self.f_at(i) - self.h_at(i + 1));
            if !(v > 0.0) {
                return Err(OdcError::InvalidParameter(format!(
                    "sign rule violated at i={i}: (-1)^i (f_i - h_(i+1)) = {v}"
                )));
            }
        }
        Ok(())
    }

    /// `false` for `eps = 0`, where the component closures touch.
    pub fn is_strictly_separated(&self) -> bool {
        self.eps > 0.0
    }
}

/// Tridiagonal `A` with `eps` on the diagonal, skew-symmetric bidiagonal `B`,
/// `C = D0 = I`.
pub fn build_chain_system(params: &ChainFamilyParams) -> Result<LtiSystem> {
    params.validate()?;
    let n = params.n;
    let mut a = Matrix::from_diagonal_element(n, n, params.eps);
    a[(0, 0)] += params.f[0];
    for i in 1..n {
        a[(i - 1, i)] = params.f[i];
        a[(i, i - 1)] = -params.h[i];
    }
    let mut b = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        b[(i, i + 1)] = 1.0;
        b[(i + 1, i)] = -1.0;
    }
    LtiSystem::new(a, b, Matrix::identity(n, n), Matrix::identity(n, n))
}

/// Weights `R1 = C'K'R2KC`, `R12 = C'K'R2` that make `k_opt` a global minimizer
/// with zero cost.
pub fn inverse_optimal_weights(
    sys: &LtiSystem,
    k_opt: &Matrix,
    r2: &Matrix,
) -> Result<PerformanceWeights> {
    sys.check_gain(k_opt)?;
    check_square("R2", r2, sys.m())?;
    let r12 = sys.c().transpose() * k_opt.transpose() * r2;
    let r1 = &r12 * k_opt * sys.c();
    let r1 = (&r1 + r1.transpose()) * 0.5;
    PerformanceWeights::new(r1, r12, r2.clone())
}

/// A named problem instance with a known global optimum.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: String,
    pub params: ChainFamilyParams,
    pub system: LtiSystem,
    pub weights: PerformanceWeights,
    pub mask: StructureMask,
    pub k_opt: Matrix,
}

/// Optimal centralized gain of the three-state projection benchmark.
pub fn chain_n3_a_optimal_gain() -> Matrix {
    Matrix::from_diagonal_element(3, 3, 20.0)
}

pub fn chain_n3_a_input_weight() -> Matrix {
    Matrix::from_row_slice(3, 3, &[20.0, 1.0, -1.0, 1.0, 5.0, 2.0, -1.0, 2.0, 2.0])
}

/// Centralized optimum used by the augmented Lagrangian benchmark.
pub fn chain_n3_alm_optimal_gain() -> Matrix {
    Matrix::from_row_slice(3, 3, &[6.0, -10.0, 0.0, 0.0, 2.0, -10.0, 4.0, 0.0, 0.0])
}

/// First non-structured starting point of the augmented Lagrangian benchmark.
pub fn chain_n3_alm_start_one() -> Matrix {
    Matrix::from_row_slice(
        3,
        3,
        &[172.0, -260.0, 42.0, 130.0, 184.0, -130.0, 352.0, 0.0, -140.0],
    )
}

/// Second non-structured starting point of the augmented Lagrangian benchmark.
pub fn chain_n3_alm_start_two() -> Matrix {
    Matrix::from_row_slice(3, 3, &[28.0, -18.2, 31.0, 9.0, -6.0, -9.0, 18.0, 0.0, 40.0])
}

impl Benchmark {
    /// Three-state chain with `f = (-1, 10, 1)`, `h = (10, 1)`, `K_c = 20 I`.
    pub fn chain_n3_a(eps: f64) -> Result<Self> {
        let params = ChainFamilyParams::new(vec![-1.0, 10.0, 1.0], vec![10.0, 1.0], eps)?;
        let system = build_chain_system(&params)?;
        let k_opt = chain_n3_a_optimal_gain();
        let weights = inverse_optimal_weights(&system, &k_opt, &chain_n3_a_input_weight())?;
        Ok(Self {
            name: "chain-n3-a".into(),
            mask: StructureMask::diagonal(3, 3),
            params,
            system,
            weights,
            k_opt,
        })
    }

    /// Three-state chain with `f = (-1, 2, 1)`, `h = (2, 1)`, `eps = 0`, `R2 = I`
    /// and a non-diagonal centralized optimum.
    pub fn chain_n3_alm() -> Result<Self> {
        let params = ChainFamilyParams::new(vec![-1.0, 2.0, 1.0], vec![2.0, 1.0], 0.0)?;
        let system = build_chain_system(&params)?;
        let k_opt = chain_n3_alm_optimal_gain();
        let weights = inverse_optimal_weights(&system, &k_opt, &Matrix::identity(3, 3))?;
        Ok(Self {
            name: "chain-n3-alm".into(),
            mask: StructureMask::diagonal(3, 3),
            params,
            system,
            weights,
            k_opt,
        })
    }

    /// Parametric chain with diagonal structure and inverse-optimal weights for
    /// `k_opt` (default `20 I`) and `R2` (default `I`).
    pub fn chain_n(
        params: ChainFamilyParams,
        k_opt: Option<Matrix>,
        r2: Option<Matrix>,
    ) -> Result<Self> {
        let system = build_chain_system(&params)?;
        let n = params.n;
        let k_opt = k_opt.unwrap_or_else(|| Matrix::from_diagonal_element(n, n, 20.0));
        let r2 = r2.unwrap_or_else(|| Matrix::identity(n, n));
        let weights = inverse_optimal_weights(&system, &k_opt, &r2)?;
        Ok(Self {
            name: "chain-n".into(),
            mask: StructureMask::diagonal(n, n),
            params,
            system,
            weights,
            k_opt,
        })
    }
}

/// System, weights and diagonal mask of the augmented Lagrangian case study.
pub fn alm_case_study() -> (LtiSystem, PerformanceWeights, StructureMask) {
    let bench = Benchmark::chain_n3_alm().expect("built-in benchmark is valid");
    (bench.system, bench.weights, bench.mask)
}
