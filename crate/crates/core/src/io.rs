//! JSON and CSV forms of problems and run records.

use serde::{Deserialize, Serialize};

use crate::error::{OdcError, Result};
use crate::model::{LtiSystem, Matrix, PerformanceWeights, StructureMask};
use crate::problem::OdcProblem;
use crate::search::RunRecord;

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(OdcError::Format("ragged matrix rows".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(OdcError::Format("matrix entries must be finite".into()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapter writing a matrix as row-major nested arrays.
pub mod matrix_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod opt_matrix_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(matrix_to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Matrix>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.map(|r| matrix_from_rows(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Problem document with keys `A, B, C, D0, mask, R1, R12, R2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    #[serde(rename = "A", with = "matrix_rows")]
    pub a: Matrix,
    #[serde(rename = "B", with = "matrix_rows")]
    pub b: Matrix,
    #[serde(rename = "C", with = "matrix_rows")]
    pub c: Matrix,
    #[serde(rename = "D0", with = "matrix_rows")]
    pub d0: Matrix,
    #[serde(with = "matrix_rows")]
    pub mask: Matrix,
    #[serde(rename = "R1", with = "matrix_rows")]
    pub r1: Matrix,
    #[serde(rename = "R12", with = "matrix_rows")]
    pub r12: Matrix,
    #[serde(rename = "R2", with = "matrix_rows")]
    pub r2: Matrix,
}

impl ProblemDocument {
    pub fn from_problem(problem: &OdcProblem) -> Self {
        Self {
            a: problem.system.a().clone(),
            b: problem.system.b().clone(),
            c: problem.system.c().clone(),
            d0: problem.system.d0().clone(),
            mask: problem.mask.indicator(),
            r1: problem.weights.r1().clone(),
            r12: problem.weights.r12().clone(),
            r2: problem.weights.r2().clone(),
        }
    }

    pub fn into_problem(self) -> Result<OdcProblem> {
        let system = LtiSystem::new(self.a, self.b, self.c, self.d0)?;
        let weights = PerformanceWeights::new(self.r1, self.r12, self.r2)?;
        let mask = StructureMask::from_indicator(&self.mask)?;
        OdcProblem::new(system, weights, mask)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

/// One row per iterate: `iter, k_i_j..., cost, step, grad_norm, component_label`.
pub fn run_record_csv(record: &RunRecord) -> String {
    let (m, p) = record.final_k.shape();
    let mut out = String::from("iter");
    for i in 0..m {
        for j in 0..p {
            out.push_str(&format!(",k_{i}_{j}"));
        }
    }
    out.push_str(",cost,step,grad_norm,component_label\n");
    for (idx, it) in record.iterates.iter().enumerate() {
        out.push_str(&idx.to_string());
        for i in 0..m {
            for j in 0..p {
                out.push(',');
                out.push_str(&fmt_f64(it.k[(i, j)]));
            }
        }
        out.push(',');
        out.push_str(&fmt_f64(it.cost));
        out.push(',');
        out.push_str(&fmt_f64(it.step));
        out.push(',');
        out.push_str(&fmt_f64(it.grad_norm));
        out.push(',');
        if let Some(label) = record.component_labels.as_ref().and_then(|l| l.get(idx)) {
            out.push_str(&label.to_string());
        }
        out.push('\n');
    }
    out
}
