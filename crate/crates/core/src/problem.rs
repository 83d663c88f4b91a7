use crate::derivatives::{gradient, GradientEval};
use crate::error::{OdcError, Result};
use crate::lyapunov::{closed_loop_gramians, cost, stability_report, GramianPair, NumericConfig, StabilityReport};
use crate::model::{Benchmark, LtiSystem, Matrix, PerformanceWeights, StructureMask};

/// Plant, weights and structure bundled with the numeric tolerances.
#[derive(Debug, Clone)]
pub struct OdcProblem {
    pub system: LtiSystem,
    pub weights: PerformanceWeights,
    pub mask: StructureMask,
    pub numeric: NumericConfig,
}

impl OdcProblem {
    pub fn new(system: LtiSystem, weights: PerformanceWeights, mask: StructureMask) -> Result<Self> {
        weights.check_against(&system)?;
        if mask.nrows() != system.m() || mask.ncols() != system.p() {
            return Err(OdcError::DimensionMismatch(format!(
                "mask is {}x{}, expected {}x{}",
                mask.nrows(),
                mask.ncols(),
                system.m(),
                system.p()
            )));
        }
        Ok(Self {
            system,
            weights,
            mask,
            numeric: NumericConfig::default(),
        })
    }

    pub fn from_benchmark(bench: &Benchmark) -> Self {
        Self {
            system: bench.system.clone(),
            weights: bench.weights.clone(),
            mask: bench.mask.clone(),
            numeric: NumericConfig::default(),
        }
    }

    pub fn with_numeric(mut self, numeric: NumericConfig) -> Self {
        self.numeric = numeric;
        self
    }

    pub fn stability(&self, k: &Matrix) -> Result<StabilityReport> {
        stability_report(&self.system, k, &self.numeric)
    }

    /// Stability test that treats eigensolver failure as "not stabilizing".
    pub fn is_stabilizing(&self, k: &Matrix) -> bool {
        self.stability(k).map(|r| r.is_stable).unwrap_or(false)
    }

    pub fn gramians(&self, k: &Matrix) -> Result<GramianPair> {
        closed_loop_gramians(&self.system, &self.weights, k, &self.numeric)
    }

    pub fn cost(&self, k: &Matrix) -> Result<f64> {
        cost(&self.system, &self.weights, k, &self.numeric)
    }

    /// Cost as an extended-value function: `None` off the stabilizing set or on
    /// its numerical boundary.
    pub fn cost_or_infinite(&self, k: &Matrix) -> Option<f64> {
        self.cost(k).ok().filter(|v| v.is_finite())
    }

    pub fn gradient(&self, k: &Matrix) -> Result<GradientEval> {
        gradient(&self.system, &self.weights, &self.mask, k, &self.numeric)
    }
}
