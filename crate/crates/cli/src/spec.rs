//! The JSON run specification and its flag overrides.

use std::path::PathBuf;

use odc_core::atlas::{alternating_chain_params, ArmijoSetting, JumpExperimentConfig, SamplerBox};
use odc_core::derivatives::AlmHessianForm;
use odc_core::io::{matrix_from_rows, ProblemDocument};
use odc_core::model::{Benchmark, ChainFamilyParams, PerformanceWeights, StructureMask};
use odc_core::search::{AlmOptions, AlmParams, ArmijoParams, ProjectionOptions, SearchMethod};
use odc_core::{Matrix, OdcError, OdcProblem, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_BOX: (f64, f64) = (-60.0, 60.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub system: SystemSpec,
    pub solver: SolverSpec,
    /// Starting gain for `solve`; sampled from the atlas box when absent.
    pub k0: Option<Vec<Vec<f64>>>,
    pub experiment: JumpExperimentConfig,
    pub atlas: AtlasSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            out: PathBuf::from("out"),
            system: SystemSpec::default(),
            solver: SolverSpec::default(),
            k0: None,
            experiment: JumpExperimentConfig {
                trials: 1000,
                ..JumpExperimentConfig::default()
            },
            atlas: AtlasSpec::default(),
        }
    }
}

/// A named benchmark or a problem document on disk, with optional mask and
/// weight replacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSpec {
    /// `chain-n3-a`, `chain-n3-alm` or `chain-n`.
    pub benchmark: Option<String>,
    pub file: Option<PathBuf>,
    pub eps: f64,
    /// Order of `chain-n`.
    pub n: usize,
    /// `f_1..f_n` of `chain-n`; alternating `(-1, 10, 1, 10, ...)` when absent.
    pub f: Option<Vec<f64>>,
    /// `h_2..h_n` of `chain-n`.
    pub h: Option<Vec<f64>>,
    pub mask: Option<Vec<Vec<f64>>>,
    pub weights: Option<WeightsSpec>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            benchmark: Some("chain-n3-a".into()),
            file: None,
            eps: 0.0,
            n: 4,
            f: None,
            h: None,
            mask: None,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    #[serde(rename = "R1")]
    pub r1: Vec<Vec<f64>>,
    #[serde(rename = "R12")]
    pub r12: Vec<Vec<f64>>,
    #[serde(rename = "R2")]
    pub r2: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Projection,
    Alm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub algorithm: Algorithm,
    /// Projection method, or the inner method of the augmented Lagrangian loop.
    pub method: SearchMethod,
    pub armijo: ArmijoParams,
    pub stop_tol: f64,
    pub max_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub alm: AlmParams,
    pub max_outer: usize,
    pub hessian_form: AlmHessianForm,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let p = ProjectionOptions::default();
        let a = AlmOptions::default();
        Self {
            algorithm: Algorithm::Projection,
            method: p.method,
            armijo: p.armijo,
            stop_tol: p.stop_tol,
            max_iters: p.max_iters,
            cg_tol: p.cg_tol,
            cg_max_iters: p.cg_max_iters,
            alm: a.alm,
            max_outer: a.max_outer,
            hessian_form: a.hessian_form,
        }
    }
}

impl SolverSpec {
    pub fn projection_options(&self) -> ProjectionOptions {
        ProjectionOptions {
            method: self.method,
            armijo: self.armijo,
            stop_tol: self.stop_tol,
            max_iters: self.max_iters,
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
        }
    }

    pub fn alm_options(&self) -> AlmOptions {
        AlmOptions {
            inner_method: self.method,
            armijo: self.armijo,
            alm: self.alm.clone(),
            max_outer: self.max_outer,
            max_inner: self.max_iters,
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
            hessian_form: self.hessian_form,
        }
    }

    fn validate(&self) -> Result<()> {
        self.armijo.validate()?;
        if !(self.stop_tol > 0.0) || !(self.cg_tol > 0.0) {
            return Err(OdcError::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iters == 0 || self.cg_max_iters == 0 || self.max_outer == 0 {
            return Err(OdcError::InvalidParameter("iteration caps must be positive".into()));
        }
        self.alm.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtlasSpec {
    /// Cells per axis; chosen from the dimension when absent.
    pub resolution: Option<usize>,
    pub bounds: Option<SamplerBox>,
    /// Two-axis slab of labels written to `slice.csv`.
    pub slice: Option<SliceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub axes: [usize; 2],
    /// Coordinates of the point the slab passes through.
    pub through: Vec<f64>,
}

pub fn default_resolution(dim: usize) -> usize {
    match dim {
        0..=2 => 200,
        3 => 60,
        4 => 24,
        _ => 12,
    }
}

/// Command-line values that replace spec fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub method: Option<SearchMethod>,
    pub s_bar: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub trials: Option<usize>,
    pub resolution: Option<usize>,
    pub bounds: Option<(f64, f64)>,
}

pub fn parse_box(text: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(':').ok_or_else(|| format!("expected LO:HI, got {text:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(format!("box {text:?} must satisfy LO <= HI"));
    }
    Ok((lo, hi))
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(method) = o.method {
            self.solver.method = method;
            self.experiment.methods = vec![method];
        }
        if o.s_bar.is_some() || o.beta.is_some() {
            let s_bar = o.s_bar.unwrap_or(self.solver.armijo.s_bar);
            let beta = o.beta.unwrap_or(self.solver.armijo.beta);
            self.solver.armijo.s_bar = s_bar;
            self.solver.armijo.beta = beta;
            self.experiment.armijo_grid = vec![ArmijoSetting { s_bar, beta }];
        }
        if let Some(alpha) = o.alpha {
            self.solver.armijo.alpha = alpha;
            self.experiment.alpha = alpha;
        }
        if let Some(eps) = o.eps {
            self.system.eps = eps;
            self.experiment.eps_values = vec![eps];
        }
        if let Some(trials) = o.trials {
            self.experiment.trials = trials;
        }
        if o.resolution.is_some() {
            self.atlas.resolution = o.resolution;
        }
        if let Some((lo, hi)) = o.bounds {
            let dim = self.experiment.sampler_box.dim();
            self.experiment.sampler_box = SamplerBox::cube(dim, lo, hi);
            self.atlas.bounds = Some(SamplerBox::cube(self.free_dims_hint().unwrap_or(dim), lo, hi));
        }
    }

    /// Free entries of the mask when known without building the system.
    fn free_dims_hint(&self) -> Option<usize> {
        match self.system.benchmark.as_deref() {
            _ if self.system.mask.is_some() => {
                let rows = self.system.mask.as_ref()?;
                Some(rows.iter().flatten().filter(|v| **v != 0.0).count())
            }
            Some("chain-n3-a" | "chain-n3-alm") => Some(3),
            Some("chain-n") => Some(self.system.f.as_ref().map_or(self.system.n, Vec::len)),
            _ => None,
        }
    }

    /// Validates the spec, builds the problem and fills every defaulted
    /// field that depends on it.
    pub fn resolve(&mut self) -> Result<OdcProblem> {
        self.experiment.seed = self.seed;
        if self.threads == Some(0) {
            return Err(OdcError::InvalidParameter("threads must be positive".into()));
        }
        self.solver.validate()?;
        let problem = self.system.build()?;
        let dim = problem.mask.free_count();
        let bounds = self
            .atlas
            .bounds
            .get_or_insert_with(|| SamplerBox::cube(dim, DEFAULT_BOX.0, DEFAULT_BOX.1));
        bounds.validate()?;
        if bounds.dim() != dim {
            return Err(OdcError::DimensionMismatch(format!(
                "atlas box has {} coordinates, mask has {dim} free entries",
                bounds.dim()
            )));
        }
        let resolution = *self.atlas.resolution.get_or_insert_with(|| default_resolution(dim));
        if resolution == 0 {
            return Err(OdcError::InvalidParameter("resolution must be positive".into()));
        }
        if let Some(slice) = &self.atlas.slice {
            if slice.axes[0] == slice.axes[1] || slice.axes.iter().any(|a| *a >= dim) || slice.through.len() != dim {
                return Err(OdcError::InvalidParameter("slice needs two distinct axes and a point in the box".into()));
            }
        }
        if let Some(rows) = &self.k0 {
            let k0 = matrix_from_rows(rows)?;
            problem.system.check_gain(&k0)?;
        }
        Ok(problem)
    }

    pub fn k0(&self) -> Result<Option<Matrix>> {
        self.k0.as_deref().map(matrix_from_rows).transpose()
    }

    pub fn atlas_bounds(&self) -> SamplerBox {
        self.atlas.bounds.clone().expect("resolved spec")
    }

    pub fn atlas_resolution(&self) -> usize {
        self.atlas.resolution.expect("resolved spec")
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<OdcProblem> {
        let base = match (&self.benchmark, &self.file) {
            (Some(_), Some(_)) => {
                return Err(OdcError::InvalidParameter("give either system.benchmark or system.file".into()))
            }
            (None, None) => return Err(OdcError::InvalidParameter("system needs a benchmark or a file".into())),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| OdcError::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
                ProblemDocument::from_json(&text)?.into_problem()?
            }
            (Some(name), None) => OdcProblem::from_benchmark(&self.benchmark(name)?),
        };
        let mask = match &self.mask {
            Some(rows) => StructureMask::from_indicator(&matrix_from_rows(rows)?)?,
            None => base.mask.clone(),
        };
        let weights = match &self.weights {
            Some(w) => PerformanceWeights::new(
                matrix_from_rows(&w.r1)?,
                matrix_from_rows(&w.r12)?,
                matrix_from_rows(&w.r2)?,
            )?,
            None => base.weights.clone(),
        };
        OdcProblem::new(base.system, weights, mask)
    }

    pub fn benchmark(&self, name: &str) -> Result<Benchmark> {
        match name {
            "chain-n3-a" => Benchmark::chain_n3_a(self.eps),
            "chain-n3-alm" => {
                if self.eps != 0.0 {
                    return Err(OdcError::InvalidParameter("chain-n3-alm is defined for eps = 0".into()));
                }
                Benchmark::chain_n3_alm()
            }
            "chain-n" => {
                let params = match (&self.f, &self.h) {
                    (None, None) => alternating_chain_params(self.n, self.eps)?,
                    (Some(f), Some(h)) => ChainFamilyParams::new(f.clone(), h.clone(), self.eps)?,
                    _ => return Err(OdcError::InvalidParameter("chain-n needs both f and h or neither".into())),
                };
                Benchmark::chain_n(params, None, None)
            }
            other => Err(OdcError::InvalidParameter(format!("unknown benchmark {other:?}"))),
        }
    }
}
