//! Geometry of the structured stabilizing set.
//!
//! The free entries of the controller span a low-dimensional box. The box is
//! split into `resolution^d` cells; a cell is stable when its center is a
//! stabilizing gain, and face-adjacent stable cells are merged with a
//! union-find. Component ids are `1..=component_count`, largest first.
//!
//! Iterates of a solver run are labeled against the atlas. A step is a jump
//! when its endpoints carry different labels, or when any of ten evenly spaced
//! interior points of the segment between them is not stabilizing.

use std::collections::{BTreeMap, HashMap, VecDeque};

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OdcError, Result};
use crate::lyapunov::{spectral_abscissa, NumericConfig};
use crate::model::{Benchmark, LtiSystem, Matrix, StructureMask};
use crate::problem::OdcProblem;
use crate::search::{solve_projection_method, ArmijoParams, ProjectionOptions, RunRecord, RunStatus, SearchMethod};

/// Flood fill cost grows like `resolution^d`; atlases are limited to this many
/// free entries.
pub const MAX_FREE_DIMS: usize = 5;

/// Interior points checked on each step when detecting jumps.
pub const SEGMENT_SAMPLES: usize = 10;

/// Axis-aligned box over the free entries of the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SamplerBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Finite bounds with `lower <= upper` in every coordinate.
    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(OdcError::InvalidParameter("box bounds have different lengths".into()));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(OdcError::InvalidParameter(format!("invalid box interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn has_positive_volume(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(lo, hi)| hi > lo)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn check_against(&self, mask: &StructureMask) -> Result<()> {
        self.validate()?;
        if self.dim() != mask.free_count() {
            return Err(OdcError::DimensionMismatch(format!(
                "box has {} coordinates, mask has {} free entries",
                self.dim(),
                mask.free_count()
            )));
        }
        Ok(())
    }
}

fn closed_loop_is_stable(sys: &LtiSystem, k: &Matrix, numeric: &NumericConfig) -> bool {
    spectral_abscissa(&sys.closed_loop(k), numeric)
        .map(|a| a < -numeric.stability_margin)
        .unwrap_or(false)
}

/// Rejection sampling of a structured stabilizing gain, uniform in the box.
pub fn sample_stabilizing_with<R: Rng>(
    rng: &mut R,
    sys: &LtiSystem,
    mask: &StructureMask,
    bounds: &SamplerBox,
    max_rejects: usize,
    numeric: &NumericConfig,
) -> Result<Matrix> {
    bounds.check_against(mask)?;
    let mut x = vec![0.0; bounds.dim()];
    for _ in 0..=max_rejects {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds.lower.iter().zip(&bounds.upper)) {
            *v = lo + (hi - lo) * rng.random::<f64>();
        }
        let k = mask.embed(&x);
        if closed_loop_is_stable(sys, &k, numeric) {
            return Ok(k);
        }
    }
    let attempts = max_rejects + 1;
    Err(OdcError::SamplingFailure {
        attempts,
        rate_bound: 1.0 / attempts as f64,
    })
}

pub fn sample_stabilizing(
    sys: &LtiSystem,
    mask: &StructureMask,
    bounds: &SamplerBox,
    seed: u64,
    max_rejects: usize,
    numeric: &NumericConfig,
) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_stabilizing_with(&mut rng, sys, mask, bounds, max_rejects, numeric)
}

/// Generator for one experiment trial: stream `trial` of the top-level seed.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        Self {
            parent: (0..len as u32).collect(),
            size: vec![1; len],
        }
    }

    fn find(&mut self, id: u32) -> u32 {
        let mut root = id;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut id = id;
        while self.parent[id as usize] != root {
            let next = self.parent[id as usize];
            self.parent[id as usize] = root;
            id = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
    }
}

/// Hex SHA-256 of the plant, mask and stability margin an atlas was built for.
pub fn system_hash(sys: &LtiSystem, mask: &StructureMask, numeric: &NumericConfig) -> String {
    let mut hasher = Sha256::new();
    for m in [sys.a(), sys.b(), sys.c()] {
        hasher.update((m.nrows() as u64).to_le_bytes());
        hasher.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    for free in mask.pattern().iter() {
        hasher.update([*free as u8]);
    }
    hasher.update(numeric.stability_margin.to_le_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Result of locating a gain in the atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Classification {
    Component(u32),
    /// Unstable gain, or a stabilizing gain with no labeled cell within two cells.
    Unknown,
}

impl Classification {
    /// Component id, 0 when unknown.
    pub fn id(&self) -> u32 {
        match self {
            Classification::Component(id) => *id,
            Classification::Unknown => 0,
        }
    }
}

/// Labeled grid of the structured stabilizing set restricted to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentAtlas {
    pub bounds: SamplerBox,
    pub resolution: usize,
    /// 0 for unstable cells, otherwise the component id. The first coordinate
    /// varies fastest.
    labels: Vec<u32>,
    pub component_count: u32,
    /// Cells per component; entry `i` belongs to component `i + 1`.
    pub cell_counts: Vec<usize>,
    pub system_hash: String,
}

/// Cell index arithmetic with the first coordinate varying fastest.
fn cell_coords(mut index: usize, resolution: usize, dim: usize) -> Vec<usize> {
    (0..dim)
        .map(|_| {
            let c = index % resolution;
            index /= resolution;
            c
        })
        .collect()
}

fn cell_index(coords: &[usize], resolution: usize) -> usize {
    coords.iter().rev().fold(0, |acc, c| acc * resolution + c)
}

impl ComponentAtlas {
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn cell_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        (self.bounds.upper[axis] - self.bounds.lower[axis]) / self.resolution as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        (0..self.dim()).map(|a| self.cell_width(a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn cell_center(&self, index: usize) -> Vec<f64> {
        cell_coords(index, self.resolution, self.dim())
            .into_iter()
            .enumerate()
            .map(|(axis, c)| self.bounds.lower[axis] + (c as f64 + 0.5) * self.cell_width(axis))
            .collect()
    }

    /// Continuous grid position of `x` (cell units) or `None` outside the box.
    fn grid_position(&self, x: &[f64]) -> Option<Vec<f64>> {
        if !self.bounds.contains(x) {
            return None;
        }
        Some(
            x.iter()
                .enumerate()
                .map(|(axis, v)| {
                    let width = self.cell_width(axis);
                    if width > 0.0 {
                        (v - self.bounds.lower[axis]) / width
                    } else {
                        0.5
                    }
                })
                .collect(),
        )
    }

    fn cell_of_position(&self, pos: &[f64]) -> Vec<usize> {
        pos.iter()
            .map(|p| (p.floor().max(0.0) as usize).min(self.resolution - 1))
            .collect()
    }

    /// Component of a structured gain inside the box.
    pub fn classify(
        &self,
        sys: &LtiSystem,
        mask: &StructureMask,
        k: &Matrix,
        numeric: &NumericConfig,
    ) -> Result<Classification> {
        if !mask.is_structured(k) {
            return Err(OdcError::Precondition("classified gain is not structured".into()));
        }
        let x = mask.extract(k);
        let pos = self.grid_position(&x).ok_or(OdcError::OutOfAtlas)?;
        let cell = self.cell_of_position(&pos);
        let label = self.labels[cell_index(&cell, self.resolution)];
        if label > 0 {
            return Ok(Classification::Component(label));
        }
        if !closed_loop_is_stable(sys, k, numeric) {
            return Ok(Classification::Unknown);
        }
        // nearest labeled cell center within two cells
        let dim = self.dim();
        let mut best: Option<(f64, usize, u32)> = None;
        let span = 5usize.pow(dim as u32);
        for offset in 0..span {
            let mut neighbor = Vec::with_capacity(dim);
            let mut o = offset;
            let mut inside = true;
            for &c in &cell {
                let delta = (o % 5) as isize - 2;
                o /= 5;
                let v = c as isize + delta;
                if v < 0 || v >= self.resolution as isize {
                    inside = false;
                    break;
                }
                neighbor.push(v as usize);
            }
            if !inside {
                continue;
            }
            let idx = cell_index(&neighbor, self.resolution);
            let label = self.labels[idx];
            if label == 0 {
                continue;
            }
            let dist: f64 = neighbor
                .iter()
                .zip(&pos)
                .map(|(c, p)| (*c as f64 + 0.5 - p).powi(2))
                .sum();
            let better = match best {
                None => true,
                Some((d, i, _)) => dist < d || (dist == d && idx < i),
            };
            if better {
                best = Some((dist, idx, label));
            }
        }
        Ok(best.map_or(Classification::Unknown, |(_, _, l)| Classification::Component(l)))
    }

    /// Cells of each component with a face neighbor outside that component
    /// (an unstable cell or the box boundary).
    pub fn boundary_cells(&self, component: u32) -> Vec<usize> {
        let dim = self.dim();
        let res = self.resolution;
        (0..self.labels.len())
            .filter(|&idx| self.labels[idx] == component)
            .filter(|&idx| {
                let coords = cell_coords(idx, res, dim);
                (0..dim).any(|axis| {
                    let c = coords[axis];
                    let mut stride = 1;
                    for _ in 0..axis {
                        stride *= res;
                    }
                    (c == 0 || self.labels[idx - stride] != component)
                        || (c + 1 == res || self.labels[idx + stride] != component)
                })
            })
            .collect()
    }

    /// Smallest number of unstable cells separating two different components
    /// along a face-adjacent path, or `None` with fewer than two components.
    pub fn min_component_gap(&self) -> Option<usize> {
        let dim = self.dim();
        let res = self.resolution;
        let n = self.labels.len();
        let mut dist = vec![usize::MAX; n];
        let mut source = vec![0u32; n];
        let mut queue = VecDeque::new();
        for (idx, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                dist[idx] = 0;
                source[idx] = l;
                queue.push_back(idx);
            }
        }
        let mut best: Option<usize> = None;
        while let Some(idx) = queue.pop_front() {
            let coords = cell_coords(idx, res, dim);
            let mut stride = 1;
            for axis in 0..dim {
                let c = coords[axis];
                let mut visit = |nb: usize| {
                    if dist[nb] == usize::MAX {
                        dist[nb] = dist[idx] + 1;
                        source[nb] = source[idx];
                        queue.push_back(nb);
                    } else if source[nb] != source[idx] {
                        let gap = dist[nb] + dist[idx];
                        best = Some(best.map_or(gap, |b| b.min(gap)));
                    }
                };
                if c > 0 {
                    visit(idx - stride);
                }
                if c + 1 < res {
                    visit(idx + stride);
                }
                stride *= res;
            }
        }
        best
    }

    pub fn to_document(&self) -> AtlasDocument {
        let mut bytes = Vec::new();
        let mut iter = self.labels.iter().peekable();
        while let Some(&label) = iter.next() {
            let mut run: u32 = 1;
            while iter.peek() == Some(&&label) && run < u32::MAX {
                iter.next();
                run += 1;
            }
            bytes.extend_from_slice(&label.to_le_bytes());
            bytes.extend_from_slice(&run.to_le_bytes());
        }
        AtlasDocument {
            format: ATLAS_FORMAT.into(),
            lower: self.bounds.lower.clone(),
            upper: self.bounds.upper.clone(),
            resolution: self.resolution,
            system_hash: self.system_hash.clone(),
            component_count: self.component_count,
            cell_counts: self.cell_counts.clone(),
            labels_rle: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn from_document(doc: &AtlasDocument) -> Result<Self> {
        if doc.format != ATLAS_FORMAT {
            return Err(OdcError::Format(format!("unknown atlas format {:?}", doc.format)));
        }
        let bounds = SamplerBox {
            lower: doc.lower.clone(),
            upper: doc.upper.clone(),
        };
        bounds.validate()?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&doc.labels_rle)
            .map_err(|e| OdcError::Format(format!("label grid: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(OdcError::Format("truncated label grid".into()));
        }
        let expected = doc
            .resolution
            .checked_pow(bounds.dim() as u32)
            .ok_or_else(|| OdcError::Format("grid too large".into()))?;
        let mut labels = Vec::with_capacity(expected);
        for chunk in bytes.chunks_exact(8) {
            let label = u32::from_le_bytes(chunk[0..4].try_into().expect("4 bytes"));
            let run = u32::from_le_bytes(chunk[4..8].try_into().expect("4 bytes")) as usize;
            if label > doc.component_count || labels.len() + run > expected {
                return Err(OdcError::Format("label grid inconsistent with header".into()));
            }
            labels.extend(std::iter::repeat_n(label, run));
        }
        if labels.len() != expected || doc.cell_counts.len() != doc.component_count as usize {
            return Err(OdcError::Format("label grid inconsistent with header".into()));
        }
        Ok(Self {
            bounds,
            resolution: doc.resolution,
            labels,
            component_count: doc.component_count,
            cell_counts: doc.cell_counts.clone(),
            system_hash: doc.system_hash.clone(),
        })
    }
}

pub const ATLAS_FORMAT: &str = "odc-atlas-v1";

/// Portable atlas: JSON header plus a base64 run-length encoded label grid
/// made of little-endian `(label: u32, run: u32)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasDocument {
    pub format: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
    pub system_hash: String,
    pub component_count: u32,
    pub cell_counts: Vec<usize>,
    pub labels_rle: String,
}

pub fn build_atlas(
    sys: &LtiSystem,
    mask: &StructureMask,
    bounds: &SamplerBox,
    resolution: usize,
    numeric: &NumericConfig,
) -> Result<ComponentAtlas> {
    let dim = mask.free_count();
    if dim > MAX_FREE_DIMS {
        return Err(OdcError::UnsupportedDimension {
            free: dim,
            limit: MAX_FREE_DIMS,
        });
    }
    bounds.check_against(mask)?;
    if resolution == 0 {
        return Err(OdcError::InvalidParameter("resolution must be positive".into()));
    }
    let total = resolution
        .checked_pow(dim as u32)
        .filter(|t| *t < u32::MAX as usize)
        .ok_or_else(|| OdcError::InvalidParameter("atlas grid too large".into()))?;
    let mut atlas = ComponentAtlas {
        bounds: bounds.clone(),
        resolution,
        labels: Vec::new(),
        component_count: 0,
        cell_counts: Vec::new(),
        system_hash: system_hash(sys, mask, numeric),
    };
    let stable: Vec<bool> = (0..total)
        .into_par_iter()
        .map(|idx| closed_loop_is_stable(sys, &mask.embed(&atlas.cell_center(idx)), numeric))
        .collect();

    let mut uf = UnionFind::new(total);
    for idx in 0..total {
        if !stable[idx] {
            continue;
        }
        let coords = cell_coords(idx, resolution, dim);
        let mut stride = 1;
        for c in coords {
            if c + 1 < resolution && stable[idx + stride] {
                uf.union(idx as u32, (idx + stride) as u32);
            }
            stride *= resolution;
        }
    }
    // root -> (cells, first cell)
    let mut roots: HashMap<u32, (usize, usize)> = HashMap::new();
    for idx in 0..total {
        if stable[idx] {
            let root = uf.find(idx as u32);
            roots.entry(root).or_insert((0, idx)).0 += 1;
        }
    }
    let mut ordered: Vec<(u32, usize, usize)> = roots.into_iter().map(|(r, (n, first))| (r, n, first)).collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let ids: HashMap<u32, u32> = ordered
        .iter()
        .enumerate()
        .map(|(i, (root, _, _))| (*root, i as u32 + 1))
        .collect();
    atlas.labels = (0..total)
        .map(|idx| if stable[idx] { ids[&uf.find(idx as u32)] } else { 0 })
        .collect();
    atlas.component_count = ordered.len() as u32;
    atlas.cell_counts = ordered.iter().map(|(_, n, _)| *n).collect();
    Ok(atlas)
}

/// Atlas labels of every iterate of a run (0 where unknown or outside the box).
pub fn label_trajectory(
    atlas: &ComponentAtlas,
    problem: &OdcProblem,
    record: &RunRecord,
) -> Vec<u32> {
    record
        .iterates
        .iter()
        .map(|it| {
            atlas
                .classify(&problem.system, &problem.mask, &it.k, &problem.numeric)
                .map(|c| c.id())
                .unwrap_or(0)
        })
        .collect()
}

/// Whether the step from `from` to `to` leaves the stabilizing set at one of
/// the sampled interior points.
pub fn segment_leaves_stable_set(problem: &OdcProblem, from: &Matrix, to: &Matrix) -> bool {
    (1..=SEGMENT_SAMPLES).any(|i| {
        let t = i as f64 / (SEGMENT_SAMPLES + 1) as f64;
        let k = from + (to - from) * t;
        !closed_loop_is_stable(&problem.system, &k, &problem.numeric)
    })
}

/// Number of jumps along a labeled run.
pub fn count_jumps(problem: &OdcProblem, record: &RunRecord, labels: &[u32]) -> usize {
    record
        .iterates
        .windows(2)
        .zip(labels.windows(2))
        .filter(|(its, ls)| {
            let relabeled = ls[0] != 0 && ls[1] != 0 && ls[0] != ls[1];
            relabeled || segment_leaves_stable_set(problem, &its[0].k, &its[1].k)
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmijoSetting {
    pub s_bar: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpExperimentConfig {
    pub trials: usize,
    pub sampler_box: SamplerBox,
    pub armijo_grid: Vec<ArmijoSetting>,
    pub alpha: f64,
    pub methods: Vec<SearchMethod>,
    pub eps_values: Vec<f64>,
    pub seed: u64,
    pub stop_tol: f64,
    pub max_iters: usize,
    pub max_rejects: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for JumpExperimentConfig {
    fn default() -> Self {
        let projection = ProjectionOptions::default();
        Self {
            trials: 10_000,
            sampler_box: SamplerBox::cube(3, -60.0, 60.0),
            armijo_grid: vec![
                ArmijoSetting { s_bar: 1.0, beta: 0.5 },
                ArmijoSetting { s_bar: 5.0, beta: 0.9 },
            ],
            alpha: 1e-2,
            methods: vec![SearchMethod::AndersonMoore, SearchMethod::Newton],
            eps_values: vec![0.0, 0.05, 0.1],
            seed: 0,
            stop_tol: projection.stop_tol,
            max_iters: projection.max_iters,
            max_rejects: 100_000,
            cg_tol: projection.cg_tol,
            cg_max_iters: projection.cg_max_iters,
        }
    }
}

impl JumpExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(OdcError::InvalidParameter("trials must be positive".into()));
        }
        self.sampler_box.validate()?;
        if !self.sampler_box.has_positive_volume() {
            return Err(OdcError::InvalidParameter("sampler box must have positive volume".into()));
        }
        if self.armijo_grid.is_empty() || self.methods.is_empty() {
            return Err(OdcError::InvalidParameter("empty method or step-size grid".into()));
        }
        for s in &self.armijo_grid {
            ArmijoParams::new(s.s_bar, s.beta, self.alpha)?;
        }
        Ok(())
    }

    fn projection_options(&self, method: SearchMethod, setting: &ArmijoSetting) -> ProjectionOptions {
        ProjectionOptions {
            method,
            armijo: ArmijoParams {
                s_bar: setting.s_bar,
                beta: setting.beta,
                alpha: self.alpha,
                ..ArmijoParams::default()
            },
            stop_tol: self.stop_tol,
            max_iters: self.max_iters,
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
        }
    }
}

/// One system of a jump experiment together with its atlas and reference
/// points that name components.
#[derive(Debug, Clone)]
pub struct ExperimentCase {
    pub eps: f64,
    pub problem: OdcProblem,
    pub atlas: ComponentAtlas,
    /// Gain in the globally optimal component.
    pub global: Matrix,
    /// `(name, gain)` pairs; the component containing each gain gets the name.
    pub named_points: Vec<(String, Matrix)>,
}

impl ExperimentCase {
    pub fn component_names(&self) -> Result<BTreeMap<u32, String>> {
        let mut names = BTreeMap::new();
        for (name, k) in &self.named_points {
            let id = self
                .atlas
                .classify(&self.problem.system, &self.problem.mask, k, &self.problem.numeric)?
                .id();
            if id > 0 {
                names.entry(id).or_insert_with(|| name.clone());
            }
        }
        Ok(names)
    }

    pub fn global_component(&self) -> Result<u32> {
        Ok(self
            .atlas
            .classify(&self.problem.system, &self.problem.mask, &self.global, &self.problem.numeric)?
            .id())
    }

    fn name_of(&self, names: &BTreeMap<u32, String>, id: u32) -> String {
        match id {
            0 => "unknown".into(),
            id => names.get(&id).cloned().unwrap_or_else(|| format!("C{id}")),
        }
    }
}

/// Named reference points of the three-state projection benchmark: the
/// global optimum and the two suboptimal local solutions.
pub fn chain_n3_a_reference_points() -> Vec<(String, Matrix)> {
    let mask = StructureMask::diagonal(3, 3);
    vec![
        ("D1".into(), mask.embed(&[20.0, 20.0, 20.0])),
        ("D2".into(), mask.embed(&[6.06, -3.16, -0.63])),
        ("D3".into(), mask.embed(&[6.48, 6.46, 3.02])),
    ]
}

/// Benchmark, atlas and reference points for the three-state projection study.
pub fn chain_n3_a_case(eps: f64, bounds: &SamplerBox, resolution: usize) -> Result<ExperimentCase> {
    let bench = Benchmark::chain_n3_a(eps)?;
    let problem = OdcProblem::from_benchmark(&bench);
    let atlas = build_atlas(&problem.system, &problem.mask, bounds, resolution, &problem.numeric)?;
    Ok(ExperimentCase {
        eps,
        problem,
        atlas,
        global: bench.k_opt,
        named_points: chain_n3_a_reference_points(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub eps: f64,
    pub trial: usize,
    pub seed: u64,
    pub k0: Vec<f64>,
    pub start_component: u32,
    pub start_name: String,
    pub method: SearchMethod,
    pub s_bar: f64,
    pub beta: f64,
    pub final_j: f64,
    pub end_component: u32,
    pub end_name: String,
    pub n_iters: usize,
    pub status: String,
    pub n_jumps: usize,
}

/// Jump counts for one `(eps, method, s_bar, beta)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub eps: f64,
    pub method: SearchMethod,
    pub s_bar: f64,
    pub beta: f64,
    pub trials: usize,
    pub failures: usize,
    pub global_name: String,
    /// Trials that started in the named component and ended in the global one.
    pub jumps_to_global: BTreeMap<String, usize>,
    /// Trials per start component.
    pub starts: BTreeMap<String, usize>,
    /// `"from->to"` transition counts.
    pub transitions: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub seed: u64,
    pub trials: usize,
    pub cells: Vec<CellSummary>,
    pub rows: Vec<TrialRow>,
}

pub fn run_jump_experiment(case: &ExperimentCase, config: &JumpExperimentConfig) -> Result<JumpReport> {
    config.validate()?;
    let problem = &case.problem;
    config.sampler_box.check_against(&problem.mask)?;
    let names = case.component_names()?;
    let global = case.global_component()?;
    let global_name = case.name_of(&names, global);
    let combos: Vec<(SearchMethod, ArmijoSetting)> = config
        .methods
        .iter()
        .flat_map(|m| config.armijo_grid.iter().map(move |s| (*m, *s)))
        .collect();

    let per_trial: Vec<Vec<TrialRow>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(config.seed, trial as u64);
            let sample = sample_stabilizing_with(
                &mut rng,
                &problem.system,
                &problem.mask,
                &config.sampler_box,
                config.max_rejects,
                &problem.numeric,
            );
            combos
                .iter()
                .map(|(method, setting)| {
                    let mut row = TrialRow {
                        eps: case.eps,
                        trial,
                        seed: config.seed,
                        k0: Vec::new(),
                        start_component: 0,
                        start_name: "unknown".into(),
                        method: *method,
                        s_bar: setting.s_bar,
                        beta: setting.beta,
                        final_j: f64::NAN,
                        end_component: 0,
                        end_name: "unknown".into(),
                        n_iters: 0,
                        status: String::new(),
                        n_jumps: 0,
                    };
                    let k0 = match &sample {
                        Ok(k) => k,
                        Err(_) => {
                            row.status = "sampling-failure".into();
                            return row;
                        }
                    };
                    row.k0 = problem.mask.extract(k0);
                    let start = case
                        .atlas
                        .classify(&problem.system, &problem.mask, k0, &problem.numeric)
                        .map(|c| c.id())
                        .unwrap_or(0);
                    row.start_component = start;
                    row.start_name = case.name_of(&names, start);
                    let options = config.projection_options(*method, setting);
                    match solve_projection_method(problem, k0, &options) {
                        Ok(record) => {
                            let labels = label_trajectory(&case.atlas, problem, &record);
                            row.n_jumps = count_jumps(problem, &record, &labels);
                            let end = labels.last().copied().unwrap_or(0);
                            row.end_component = end;
                            row.end_name = case.name_of(&names, end);
                            row.final_j = record.final_cost;
                            row.n_iters = record.steps();
                            row.status = record.status.as_str().into();
                        }
                        Err(e) => row.status = format!("error: {e}"),
                    }
                    row
                })
                .collect()
        })
        .collect();
    let rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();

    let cells = combos
        .iter()
        .map(|(method, setting)| {
            let cell_rows: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| r.method == *method && r.s_bar == setting.s_bar && r.beta == setting.beta)
                .collect();
            let mut summary = CellSummary {
                eps: case.eps,
                method: *method,
                s_bar: setting.s_bar,
                beta: setting.beta,
                trials: cell_rows.len(),
                failures: 0,
                global_name: global_name.clone(),
                jumps_to_global: BTreeMap::new(),
                starts: BTreeMap::new(),
                transitions: BTreeMap::new(),
            };
            for id in names.keys().filter(|id| **id != global) {
                summary.jumps_to_global.insert(case.name_of(&names, *id), 0);
            }
            for r in cell_rows {
                if r.status != RunStatus::Converged.as_str() {
                    summary.failures += 1;
                }
                *summary.starts.entry(r.start_name.clone()).or_default() += 1;
                *summary
                    .transitions
                    .entry(format!("{}->{}", r.start_name, r.end_name))
                    .or_default() += 1;
                if r.start_component != 0 && r.start_component != global && r.end_component == global {
                    *summary.jumps_to_global.entry(r.start_name.clone()).or_default() += 1;
                }
            }
            summary
        })
        .collect();

    Ok(JumpReport {
        seed: config.seed,
        trials: config.trials,
        cells,
        rows,
    })
}

fn csv_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

impl JumpReport {
    pub fn merge(mut self, other: JumpReport) -> JumpReport {
        self.cells.extend(other.cells);
        self.rows.extend(other.rows);
        self
    }

    /// Jumps from `start_name` into the global component in the matching cell.
    pub fn jumps(&self, eps: f64, method: SearchMethod, s_bar: f64, beta: f64, start_name: &str) -> Option<usize> {
        self.cells
            .iter()
            .find(|c| c.eps == eps && c.method == method && c.s_bar == s_bar && c.beta == beta)
            .map(|c| c.jumps_to_global.get(start_name).copied().unwrap_or(0))
    }

    pub fn to_csv(&self) -> String {
        let k_len = self.rows.iter().map(|r| r.k0.len()).max().unwrap_or(0);
        let mut out = String::from("eps,trial,seed");
        for i in 0..k_len {
            out.push_str(&format!(",k0_{i}"));
        }
        out.push_str(",start_component,method,s_bar,beta,final_J,end_component,n_iters,status,n_jumps\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.eps, r.trial, r.seed));
            for i in 0..k_len {
                out.push(',');
                if let Some(v) = r.k0.get(i) {
                    out.push_str(&csv_f64(*v));
                }
            }
            out.push_str(&format!(
                ",{},{},{},{},{},{},{},{},{}\n",
                r.start_name,
                r.method,
                r.s_bar,
                r.beta,
                csv_f64(r.final_j),
                r.end_name,
                r.n_iters,
                r.status,
                r.n_jumps
            ));
        }
        out
    }

    /// Jumps into the global component: one row per suboptimal start
    /// component, one column per `(method, eps, s_bar, beta)` cell.
    pub fn summary_table(&self) -> String {
        let mut row_names: Vec<String> = Vec::new();
        for cell in &self.cells {
            for name in cell.jumps_to_global.keys() {
                if !row_names.contains(name) {
                    row_names.push(name.clone());
                }
            }
        }
        row_names.sort();
        let headers: Vec<[String; 3]> = self
            .cells
            .iter()
            .map(|c| {
                [
                    c.method.to_string(),
                    format!("eps={}", c.eps),
                    format!("s0={} b={}", c.s_bar, c.beta),
                ]
            })
            .collect();
        let width = headers
            .iter()
            .flat_map(|h| h.iter().map(String::len))
            .max()
            .unwrap_or(0)
            .max(6)
            + 2;
        let label_width = row_names.iter().map(String::len).max().unwrap_or(0).max(6) + 2;
        let mut out = format!(
            "jumps into the global component ({} trials per cell, seed {})\n",
            self.trials, self.seed
        );
        for line in 0..3 {
            out.push_str(&" ".repeat(label_width));
            for h in &headers {
                out.push_str(&format!("{:>width$}", h[line]));
            }
            out.push('\n');
        }
        out.push_str(&"-".repeat(label_width + width * headers.len()));
        out.push('\n');
        for name in &row_names {
            out.push_str(&format!("{name:<label_width$}"));
            for cell in &self.cells {
                let v = cell.jumps_to_global.get(name).copied().unwrap_or(0);
                out.push_str(&format!("{v:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `F_0 = F_1 = 1`, `F_{i+2} = F_{i+1} + F_i`.
pub fn fibonacci(n: usize) -> u64 {
    let (mut a, mut b) = (1u64, 1u64);
    for _ in 0..n {
        let next = a.saturating_add(b);
        a = b;
        b = next;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FibonacciProbe {
    pub n: usize,
    pub count: u32,
    pub bound: u64,
    pub satisfied: bool,
}

/// Chain family with `f = (-1, 10, 1, 10, ...)` and `h_i = f_i`.
pub fn alternating_chain_params(n: usize, eps: f64) -> Result<crate::model::ChainFamilyParams> {
    let value = |i: usize| if i % 2 == 0 { 10.0 } else { 1.0 };
    let mut f = vec![-1.0];
    f.extend((2..=n).map(value));
    let h: Vec<f64> = (2..=n).map(value).collect();
    crate::model::ChainFamilyParams::new(f, h, eps)
}

/// Builds the alternating chain of order `n`, counts the components of its
/// diagonal stabilizing set in the box and compares with `F_n`.
pub fn fibonacci_bound_probe(n: usize, eps: f64, bounds: &SamplerBox, resolution: usize) -> Result<FibonacciProbe> {
    if n > MAX_FREE_DIMS {
        return Err(OdcError::UnsupportedDimension {
            free: n,
            limit: MAX_FREE_DIMS,
        });
    }
    let params = alternating_chain_params(n, eps)?;
    let sys = crate::model::build_chain_system(&params)?;
    let mask = StructureMask::diagonal(n, n);
    let atlas = build_atlas(&sys, &mask, bounds, resolution, &NumericConfig::default())?;
    let bound = fibonacci(n);
    Ok(FibonacciProbe {
        n,
        count: atlas.component_count,
        bound,
        satisfied: atlas.component_count as u64 >= bound,
    })
}
