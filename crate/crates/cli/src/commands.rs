use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use odc_core::atlas::{
    build_atlas, chain_n3_a_case, chain_n3_a_reference_points, fibonacci, label_trajectory, run_jump_experiment,
    sample_stabilizing, Classification, ComponentAtlas, JumpReport, MAX_FREE_DIMS,
};
use odc_core::io::{matrix_to_rows, run_record_csv};
use odc_core::model::{chain_n3_alm_optimal_gain, Benchmark};
use odc_core::search::{solve_alm, solve_projection_method, RunRecord, RunStatus};
use odc_core::{Matrix, OdcError, OdcProblem};

use crate::output::Outputs;
use crate::spec::{Algorithm, ExperimentSpec};
use crate::Failure;

fn format_gain(k: &Matrix) -> String {
    let rows: Vec<String> = matrix_to_rows(k)
        .iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.4}")).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn uses_reference_benchmark(spec: &ExperimentSpec) -> bool {
    spec.system.benchmark.as_deref() == Some("chain-n3-a") && spec.system.mask.is_none() && spec.system.weights.is_none()
}

/// Atlas of the problem plus names for the components that contain a
/// reference point of the benchmark.
fn named_atlas(spec: &ExperimentSpec, problem: &OdcProblem) -> Result<(ComponentAtlas, BTreeMap<u32, String>), Failure> {
    let free = problem.mask.free_count();
    if free > MAX_FREE_DIMS {
        return Err(OdcError::UnsupportedDimension {
            free,
            limit: MAX_FREE_DIMS,
        }
        .into());
    }
    let atlas = build_atlas(
        &problem.system,
        &problem.mask,
        &spec.atlas_bounds(),
        spec.atlas_resolution(),
        &problem.numeric,
    )?;
    let mut names = BTreeMap::new();
    if uses_reference_benchmark(spec) {
        for (name, k) in chain_n3_a_reference_points() {
            if let Ok(Classification::Component(id)) =
                atlas.classify(&problem.system, &problem.mask, &k, &problem.numeric)
            {
                names.entry(id).or_insert(name);
            }
        }
    }
    Ok((atlas, names))
}

fn component_name(names: &BTreeMap<u32, String>, id: u32) -> String {
    match id {
        0 => "unknown".into(),
        id => names.get(&id).cloned().unwrap_or_else(|| format!("C{id}")),
    }
}

fn run_solver(spec: &ExperimentSpec, problem: &OdcProblem, k0: &Matrix) -> Result<RunRecord, Failure> {
    let record = match spec.solver.algorithm {
        Algorithm::Projection => solve_projection_method(problem, k0, &spec.solver.projection_options())?,
        Algorithm::Alm => solve_alm(problem, k0, &spec.solver.alm_options())?,
    };
    Ok(record)
}

pub fn solve(spec: &ExperimentSpec, problem: &OdcProblem) -> Result<u8, Failure> {
    let k0 = match spec.k0()? {
        Some(k) => k,
        None => sample_stabilizing(
            &problem.system,
            &problem.mask,
            &spec.atlas_bounds(),
            spec.seed,
            spec.experiment.max_rejects,
            &problem.numeric,
        )?,
    };
    let mut record = run_solver(spec, problem, &k0)?;

    let component = if problem.mask.free_count() <= MAX_FREE_DIMS && problem.mask.is_structured(&record.final_k) {
        let (atlas, names) = named_atlas(spec, problem)?;
        record.component_labels = Some(label_trajectory(&atlas, problem, &record));
        match atlas.classify(&problem.system, &problem.mask, &record.final_k, &problem.numeric) {
            Ok(c) => format!("{} ({})", c.id(), component_name(&names, c.id())),
            Err(OdcError::OutOfAtlas) => "outside atlas box".into(),
            Err(e) => return Err(e.into()),
        }
    } else {
        "n/a".into()
    };

    let mut out = Outputs::new(&spec.out);
    out.add("run.json", serde_json::to_string_pretty(&record).map_err(OdcError::from)?);
    out.add("trajectory.csv", run_record_csv(&record));
    out.commit()?;

    println!("status: {}", record.status.as_str());
    println!("J: {:.6e}", record.final_cost);
    println!("K: {}", format_gain(&record.final_k));
    println!("component: {component}");
    println!("iterations: {}", record.steps());
    Ok(if record.status == RunStatus::Converged { 0 } else { 2 })
}

pub fn experiment(spec: &ExperimentSpec) -> Result<u8, Failure> {
    if !uses_reference_benchmark(spec) {
        return Err(Failure::Config(
            "jump experiments run on the chain-n3-a benchmark without mask or weight overrides".into(),
        ));
    }
    spec.experiment.validate()?;
    let mut report: Option<JumpReport> = None;
    for &eps in &spec.experiment.eps_values {
        let case = chain_n3_a_case(eps, &spec.atlas_bounds(), spec.atlas_resolution())?;
        let part = run_jump_experiment(&case, &spec.experiment)?;
        report = Some(match report {
            Some(r) => r.merge(part),
            None => part,
        });
    }
    let report = report.ok_or_else(|| Failure::Config("experiment.eps_values is empty".into()))?;
    let summary = report.summary_table();
    let cells = serde_json::json!({
        "seed": report.seed,
        "trials": report.trials,
        "cells": report.cells,
    });

    let mut out = Outputs::new(&spec.out);
    out.add("summary.txt", summary.clone());
    out.add("report.csv", report.to_csv());
    out.add("report.json", serde_json::to_string_pretty(&cells).map_err(OdcError::from)?);
    out.commit()?;
    print!("{summary}");
    Ok(0)
}

/// Labels of the two-axis slab through `spec.atlas.slice.through`.
fn slice_csv(spec: &ExperimentSpec, atlas: &ComponentAtlas) -> Option<String> {
    let slice = spec.atlas.slice.as_ref()?;
    let res = atlas.resolution;
    let coords: Vec<usize> = slice
        .through
        .iter()
        .enumerate()
        .map(|(axis, v)| {
            let lo = atlas.bounds.lower[axis];
            let w = atlas.cell_width(axis);
            if w > 0.0 {
                (((v - lo) / w).floor().max(0.0) as usize).min(res - 1)
            } else {
                0
            }
        })
        .collect();
    let [a, b] = slice.axes;
    let mut csv = format!("k_{a},k_{b},label\n");
    let mut cell = coords;
    for j in 0..res {
        for i in 0..res {
            cell[a] = i;
            cell[b] = j;
            let index = cell.iter().rev().fold(0, |acc, c| acc * res + c);
            let center = atlas.cell_center(index);
            let _ = writeln!(csv, "{:e},{:e},{}", center[a], center[b], atlas.label(index));
        }
    }
    Some(csv)
}

pub fn atlas(spec: &ExperimentSpec, problem: &OdcProblem) -> Result<u8, Failure> {
    let start = Instant::now();
    let (atlas, names) = named_atlas(spec, problem)?;
    let cell_volume: f64 = (0..atlas.dim()).map(|axis| atlas.cell_width(axis)).product();

    let mut out = Outputs::new(&spec.out);
    out.add(
        "atlas.json",
        serde_json::to_string_pretty(&atlas.to_document()).map_err(OdcError::from)?,
    );
    if let Some(csv) = slice_csv(spec, &atlas) {
        out.add("slice.csv", csv);
    }
    out.commit()?;

    println!("components: {}", atlas.component_count);
    for (i, cells) in atlas.cell_counts.iter().enumerate() {
        let id = i as u32 + 1;
        println!(
            "component {id} ({}): {cells} cells, volume {:.6e}",
            component_name(&names, id),
            *cells as f64 * cell_volume
        );
    }
    if spec.system.benchmark.as_deref() == Some("chain-n") && spec.system.mask.is_none() {
        let n = problem.system.n();
        let bound = fibonacci(n);
        println!(
            "F_{n} = {bound}, bound satisfied: {}",
            atlas.component_count as u64 >= bound
        );
    }
    eprintln!(
        "atlas: {} cells at resolution {} in {:.2}s",
        atlas.cell_count(),
        atlas.resolution,
        start.elapsed().as_secs_f64()
    );
    Ok(0)
}

pub fn bench(spec: &ExperimentSpec) -> Result<u8, Failure> {
    let eps = spec.system.eps;
    let problem = OdcProblem::from_benchmark(&Benchmark::chain_n3_a(eps)?);
    let case_spec = ExperimentSpec {
        system: crate::spec::SystemSpec {
            benchmark: Some("chain-n3-a".into()),
            ..spec.system.clone()
        },
        ..spec.clone()
    };
    let (atlas, names) = named_atlas(&case_spec, &problem)?;
    let starts = [("D1", [40.0, 40.0, 40.0]), ("D2", [0.0, 0.0, 0.0]), ("D3", [-10.0, 5.0, 10.0])];

    let mut summary = format!("chain-n3-a, eps = {eps}\n");
    let _ = writeln!(
        summary,
        "{:<8} {:<22} {:>14} {:<32} {:<10} {:>6} {:<10} {:>9}",
        "method", "K0", "J", "K", "component", "iters", "status", "seconds"
    );
    let mut failed = false;
    for method in &spec.experiment.methods {
        let method_name = method.as_str();
        for (label, x) in starts {
            let k0 = problem.mask.embed(&x);
            let k0_text = format!("{label}({}, {}, {})", x[0], x[1], x[2]);
            if !problem.is_stabilizing(&k0) {
                let _ = writeln!(summary, "{method_name:<8} {k0_text:<22} not stabilizing");
                continue;
            }
            let opts = odc_core::search::ProjectionOptions {
                method: *method,
                ..spec.solver.projection_options()
            };
            let t = Instant::now();
            let run = solve_projection_method(&problem, &k0, &opts)?;
            let secs = t.elapsed().as_secs_f64();
            let diag: Vec<String> = (0..3).map(|i| format!("{:.2}", run.final_k[(i, i)])).collect();
            let component = atlas
                .classify(&problem.system, &problem.mask, &run.final_k, &problem.numeric)
                .map(|c| component_name(&names, c.id()))
                .unwrap_or_else(|_| "outside".into());
            failed |= run.status != RunStatus::Converged;
            let _ = writeln!(
                summary,
                "{method_name:<8} {k0_text:<22} {:>14.4} {:<32} {component:<10} {:>6} {:<10} {secs:>9.3}",
                if run.final_cost.abs() < 1e-9 { 0.0 } else { run.final_cost },
                format!("diag({})", diag.join(", ")),
                run.steps(),
                run.status.as_str(),
            );
        }
    }

    let alm_problem = OdcProblem::from_benchmark(&Benchmark::chain_n3_alm()?);
    let t = Instant::now();
    let run = solve_alm(&alm_problem, &chain_n3_alm_optimal_gain(), &spec.solver.alm_options())?;
    let secs = t.elapsed().as_secs_f64();
    failed |= run.status != RunStatus::Converged;
    let feasibility = run.alm.as_ref().map_or(f64::NAN, |a| a.feasibility);
    let _ = writeln!(summary, "\nchain-n3-alm from the centralized optimum");
    let _ = writeln!(
        summary,
        "J = {:.4}, K = {}, feasibility {:.2e}, {} iterations, {}, {secs:.3}s",
        run.final_cost,
        format_gain(&run.final_k),
        feasibility,
        run.steps(),
        run.status.as_str()
    );

    let mut out = Outputs::new(&spec.out);
    out.add("summary.txt", summary.clone());
    out.commit()?;
    print!("{summary}");
    Ok(if failed { 2 } else { 0 })
}
