//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as failures but do not fail the
//! process; every other failure does.

mod common;

use std::time::{Duration, Instant};

use common::*;
use odc_core::atlas::{
    chain_n3_a_case, fibonacci_bound_probe, run_jump_experiment, ArmijoSetting, ExperimentCase,
    JumpExperimentConfig, SamplerBox,
};
use odc_core::derivatives::{alm_eval, inner, AlmHessianForm, AlmState};
use odc_core::model::{chain_n3_alm_optimal_gain, chain_n3_alm_start_one, Benchmark, StructureMask};
use odc_core::search::{
    is_descent_direction, solve_alm, solve_projection_method, AlmOptions, ProjectionOptions, RunRecord, RunStatus,
    SearchMethod,
};
use odc_core::{Matrix, OdcProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_RED: &[(u32, &str)] = &[
    (3, "no diagonal stationary point of the ALM benchmark has J within 1% of 454.3"),
    (4, "with the [-60,60]^3 sampling box A-M D2 jumps rise from eps=0.05 to eps=0.1"),
    (8, "some rays t K0 have J(0.99 t_max) below 10x J(0.5 t_max)"),
];

const CERT_TOL: f64 = 1e-6;
const GLOBAL_COST_TOL: f64 = 1e-3;
const COST_REL_TOL: f64 = 0.01;
const GAIN_ABS_TOL: f64 = 1e-2;
const ALM_LOW_COST: f64 = 332.5;
const ALM_HIGH_COST: f64 = 454.3;
const FEAS_TOL: f64 = 1e-4;
const JUMP_TRIALS: usize = 2000;
const JUMP_RATIO: f64 = 3.0;
const ATLAS_RESOLUTION: usize = 120;
const PROBE_RESOLUTION: usize = 40;
const GRAD_REL_TOL: f64 = 1e-5;
const HESS_REL_TOL: f64 = 1e-4;
const SYM_REL_TOL: f64 = 1e-8;
const COERCIVITY_FACTOR: f64 = 10.0;
const GAIN_BOUND: f64 = 1e3;
const NEAR_RADIUS: f64 = 1e-2;
const TARGET_RADIUS: f64 = 1e-1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn diag(x: [f64; 3]) -> Matrix {
    Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(&x))
}

fn chain_a(eps: f64) -> OdcProblem {
    OdcProblem::from_benchmark(&Benchmark::chain_n3_a(eps).unwrap())
}

fn alm_problem() -> OdcProblem {
    OdcProblem::from_benchmark(&Benchmark::chain_n3_alm().unwrap())
}

fn cube3() -> SamplerBox {
    SamplerBox::cube(3, -60.0, 60.0)
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.05, 0.1] {
        let eval = chain_a(eps).gradient(&diag([20.0; 3])).unwrap();
        worst = worst.max(eval.cost.abs()).max(eval.grad.norm());
    }
    Outcome {
        pass: worst <= CERT_TOL,
        detail: format!("max(|J|, |grad J|) at K_c over eps = {worst:.2e}"),
    }
}

fn criterion_2() -> Outcome {
    let problem = chain_a(0.0);
    let cases = [
        ([40.0, 40.0, 40.0], None, [20.0, 20.0, 20.0]),
        ([0.0, 0.0, 0.0], Some(16237.0), [6.06, -3.16, -0.63]),
        ([-10.0, 5.0, 10.0], Some(7357.5), [6.48, 6.46, 3.02]),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for method in [SearchMethod::AndersonMoore, SearchMethod::Newton] {
        for (start, cost, gain) in cases {
            let run = solve_projection_method(&problem, &diag(start), &ProjectionOptions::with_method(method)).unwrap();
            let cost_ok = match cost {
                None => run.final_cost <= GLOBAL_COST_TOL,
                Some(c) => (run.final_cost - c).abs() <= COST_REL_TOL * c,
            };
            let gain_ok = (0..3).all(|i| (run.final_k[(i, i)] - gain[i]).abs() <= GAIN_ABS_TOL);
            let ok = cost_ok && gain_ok && run.status == RunStatus::Converged;
            pass &= ok;
            notes.push(format!("{method}{start:?}->{:.1}", run.final_cost));
        }
    }
    Outcome {
        pass,
        detail: notes.join(" "),
    }
}

fn criterion_3() -> Outcome {
    let problem = alm_problem();
    let options = AlmOptions::default();
    let from_kc = solve_alm(&problem, &chain_n3_alm_optimal_gain(), &options).unwrap();
    let from_k01 = solve_alm(&problem, &chain_n3_alm_start_one(), &options).unwrap();
    let feas = |r: &RunRecord| r.alm.as_ref().map_or(f64::INFINITY, |t| t.feasibility);
    let a = (from_kc.final_cost - ALM_LOW_COST).abs() <= COST_REL_TOL * ALM_LOW_COST && feas(&from_kc) < FEAS_TOL;
    let b = (from_k01.final_cost - ALM_HIGH_COST).abs() <= COST_REL_TOL * ALM_HIGH_COST && feas(&from_k01) < FEAS_TOL;
    Outcome {
        pass: a && b,
        detail: format!(
            "from K^c: J={:.2} feas={:.1e} [{}]; from K^01: J={:.2} feas={:.1e} [{}]",
            from_kc.final_cost,
            feas(&from_kc),
            if a { "ok" } else { "off" },
            from_k01.final_cost,
            feas(&from_k01),
            if b { "ok" } else { "off" }
        ),
    }
}

fn criterion_4(cases: &[ExperimentCase]) -> Outcome {
    let config = JumpExperimentConfig {
        trials: JUMP_TRIALS,
        seed: 2020,
        sampler_box: cube3(),
        armijo_grid: vec![
            ArmijoSetting { s_bar: 1.0, beta: 0.5 },
            ArmijoSetting { s_bar: 5.0, beta: 0.9 },
        ],
        methods: vec![SearchMethod::AndersonMoore, SearchMethod::Newton],
        ..JumpExperimentConfig::default()
    };
    let mut am = Vec::new();
    let mut newton = (0, 0);
    for case in cases {
        let report = run_jump_experiment(case, &config).unwrap();
        am.push(report.jumps(case.eps, SearchMethod::AndersonMoore, 1.0, 0.5, "D2").unwrap());
        if case.eps == 0.05 {
            newton = (
                report.jumps(case.eps, SearchMethod::Newton, 1.0, 0.5, "D2").unwrap(),
                report.jumps(case.eps, SearchMethod::Newton, 5.0, 0.9, "D2").unwrap(),
            );
        }
    }
    let ratio_ok = newton.1 as f64 >= JUMP_RATIO * newton.0 as f64 && newton.1 > 0;
    let monotone = am.windows(2).all(|w| w[0] >= w[1]);
    Outcome {
        pass: ratio_ok && monotone,
        detail: format!(
            "newton eps=0.05 D2->global: {} (1,0.5) vs {} (5,0.9); a-m D2->global over eps: {am:?}",
            newton.0, newton.1
        ),
    }
}

fn criterion_5(cases: &[ExperimentCase]) -> Outcome {
    let count = cases.iter().find(|c| c.eps == 0.05).unwrap().atlas.component_count;
    let probe = fibonacci_bound_probe(4, 0.1, &SamplerBox::cube(4, -60.0, 60.0), PROBE_RESOLUTION).unwrap();
    Outcome {
        pass: count == 3 && probe.satisfied,
        detail: format!(
            "eps=0.05 res {ATLAS_RESOLUTION}: {count} components; n=4: {} components, F_4 = {}",
            probe.count, probe.bound
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let problems = [chain_a(0.0), chain_a(0.05), chain_a(0.1), alm_problem()];
    let all = StructureMask::full(3, 3);
    let (mut g_err, mut h_err, mut s_err, mut l_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for problem in &problems {
        for _ in 0..20 {
            let k = sample(problem, &mut rng, &SamplerBox::cube(3, -30.0, 30.0));
            let eval = problem.gradient(&k).unwrap();
            let fd = fd_gradient(|x| problem.cost(x).unwrap(), &k, &all, 1e-5 * (1.0 + k.norm()));
            g_err = g_err.max(rel_err(&eval.grad, &fd));

            let x = random_full(&mut rng, 3, 3);
            let y = random_full(&mut rng, 3, 3);
            let hx = eval.hessian_action(&problem.system, &problem.weights, &x, &problem.numeric).unwrap();
            let hy = eval.hessian_action(&problem.system, &problem.weights, &y, &problem.numeric).unwrap();
            let fd = fd_directional(|z| problem.gradient(z).unwrap().grad, &k, &x, 1e-6);
            h_err = h_err.max(rel_err(&hx, &fd));
            let (a, b) = (inner(&hx, &y), inner(&x, &hy));
            s_err = s_err.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));

            let state = AlmState::new(&problem.mask, problem.mask.complement(&random_full(&mut rng, 3, 3)), 10.0).unwrap();
            let le = alm_eval(&problem.system, &problem.weights, &problem.mask, &k, &state, &problem.numeric).unwrap();
            let form = AlmHessianForm::MaskRestricted;
            let lx = le.hessian_action(&problem.system, &problem.weights, &problem.mask, &state, &x, form, &problem.numeric).unwrap();
            let ly = le.hessian_action(&problem.system, &problem.weights, &problem.mask, &state, &y, form, &problem.numeric).unwrap();
            let (a, b) = (inner(&lx, &y), inner(&x, &ly));
            l_err = l_err.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
        }
    }
    Outcome {
        pass: g_err <= GRAD_REL_TOL && h_err <= HESS_REL_TOL && s_err <= SYM_REL_TOL && l_err <= SYM_REL_TOL,
        detail: format!("grad {g_err:.1e}, hessian {h_err:.1e}, H_J symmetry {s_err:.1e}, H_L symmetry {l_err:.1e}"),
    }
}

/// Armijo maximality of every logged backtracking sequence of a projection run.
fn armijo_maximal(problem: &OdcProblem, run: &RunRecord, options: &ProjectionOptions) -> bool {
    let p = &options.armijo;
    run.iterates.windows(2).all(|pair| {
        let (prev, next) = (&pair[0], &pair[1]);
        let g = problem.gradient(&prev.k).unwrap().projected_grad;
        let d = (&next.k - &prev.k) / next.step;
        let slope = inner(&g, &d);
        let last = next.trials.len() - 1;
        next.trials.iter().enumerate().all(|(j, t)| {
            let expected = p.s_bar * p.beta.powi(j as i32);
            let bound = prev.cost + p.alpha * t.step * slope;
            let slack = 1e-10 * prev.cost.abs().max(1.0);
            let geometric = (t.step - expected).abs() <= 1e-12 * p.s_bar;
            if j == last {
                t.accepted && geometric && t.value.is_some_and(|v| v <= bound + slack)
            } else {
                !t.accepted && geometric && t.value.is_none_or(|v| v > bound - slack)
            }
        })
    })
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let methods = [SearchMethod::AndersonMoore, SearchMethod::Newton, SearchMethod::GradientDescent];
    let (mut decrease, mut feasible, mut maximal, mut alm_ok) = (true, true, true, true);
    let mut runs = 0;
    for i in 0..75 {
        let eps = [0.0, 0.05, 0.1][i % 3];
        let problem = chain_a(eps);
        let k0 = sample(&problem, &mut rng, &cube3());
        let options = ProjectionOptions::with_method(methods[i % 3]);
        let run = solve_projection_method(&problem, &k0, &options).unwrap();
        decrease &= run.iterates.windows(2).all(|w| w[1].cost < w[0].cost);
        feasible &= run
            .iterates
            .iter()
            .all(|it| problem.mask.is_structured(&it.k) && problem.is_stabilizing(&it.k));
        maximal &= armijo_maximal(&problem, &run, &options);
        runs += 1;
    }
    let problem = alm_problem();
    let mut alm_runs = 0;
    while alm_runs < 25 {
        let k0 = sample(&problem, &mut rng, &SamplerBox::cube(3, -20.0, 20.0)) + random_full(&mut rng, 3, 3);
        if !problem.is_stabilizing(&k0) {
            continue;
        }
        alm_runs += 1;
        let run = solve_alm(&problem, &k0, &AlmOptions::default()).unwrap();
        let trace = run.alm.as_ref().unwrap();
        alm_ok &= run.status == RunStatus::Converged && trace.feasibility < FEAS_TOL;
        decrease &= run
            .iterates
            .windows(2)
            .filter(|w| w[0].outer == w[1].outer)
            .all(|w| w[1].objective < w[0].objective);
        runs += 1;
    }
    Outcome {
        pass: decrease && feasible && maximal && alm_ok && runs == 100,
        detail: format!(
            "{runs} runs: decrease {decrease}, structured+stable {feasible}, armijo maximal {maximal}, alm feasible {alm_ok}"
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let problems = [chain_a(0.0), chain_a(0.05), chain_a(0.1)];
    // rays t K0 through a stabilizing K0 that reach the boundary at t_max
    let mut rays = 0;
    let mut unbounded = 0;
    let mut worst_ratio = f64::INFINITY;
    let mut below = 0;
    let mut growing = true;
    while rays < 20 {
        let problem = &problems[(rays + unbounded) % problems.len()];
        let k0 = sample(problem, &mut rng, &cube3());
        let d = &k0 / k0.norm();
        let Some(t) = boundary_along_ray(problem, &k0, &d, 1e4) else {
            let costs: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|a| problem.cost(&(&k0 * *a)).unwrap()).collect();
            growing &= costs.windows(2).all(|w| w[1] > w[0]);
            unbounded += 1;
            continue;
        };
        let t_max = k0.norm() + t;
        let near = problem.cost(&(&d * (0.99 * t_max))).unwrap();
        let mid = problem.cost(&(&d * (0.5 * t_max))).unwrap_or(f64::INFINITY);
        if mid.is_infinite() {
            continue;
        }
        worst_ratio = worst_ratio.min(near / mid);
        below += usize::from(near / mid < COERCIVITY_FACTOR);
        rays += 1;
    }
    let mut max_norm: f64 = 0.0;
    for (i, problem) in [chain_a(0.0), chain_a(0.1), alm_problem()].iter().enumerate() {
        for method in [SearchMethod::AndersonMoore, SearchMethod::Newton] {
            for _ in 0..4 {
                let k0 = sample(problem, &mut rng, &if i == 2 { SamplerBox::cube(3, -20.0, 20.0) } else { cube3() });
                let run = solve_projection_method(problem, &k0, &ProjectionOptions::with_method(method)).unwrap();
                max_norm = max_norm.max(run.max_gain_norm());
            }
        }
    }
    Outcome {
        pass: worst_ratio >= COERCIVITY_FACTOR && growing && max_norm < GAIN_BOUND,
        detail: format!(
            "min J(0.99t)/J(0.5t) over 20 bounded rays = {worst_ratio:.1} ({below} below {COERCIVITY_FACTOR}); J(aK) increasing on {unbounded} unbounded rays: {growing}; max |K| along runs = {max_norm:.1}"
        ),
    }
}

fn criterion_9(case: &ExperimentCase) -> Outcome {
    let problem = &case.problem;
    let k2 = solve_projection_method(problem, &diag([0.0; 3]), &ProjectionOptions::default())
        .unwrap()
        .final_k;
    let kc = &case.global;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let near_ok = (0..100).all(|_| {
        let r = NEAR_RADIUS * rng.random::<f64>();
        let k = &k2 + random_direction(&mut rng, &problem.mask) * r;
        problem.is_stabilizing(&k) && is_descent_direction(problem, &k, &k2).unwrap()
    });
    let targets: Vec<Matrix> = (0..50)
        .map(|_| kc + random_direction(&mut rng, &problem.mask) * (TARGET_RADIUS * rng.random::<f64>()))
        .filter(|k| problem.is_stabilizing(k))
        .collect();
    let reaches = |k: &Matrix| targets.iter().any(|t| is_descent_direction(problem, k, t).unwrap_or(false));

    let id = case
        .atlas
        .classify(&problem.system, &problem.mask, &k2, &problem.numeric)
        .unwrap()
        .id();
    let boundary = case.atlas.boundary_cells(id);
    let stride = (boundary.len() / 400).max(1);
    let mut probed = 0;
    let mut hits = 0;
    for idx in boundary.iter().step_by(stride) {
        let k = problem.mask.embed(&case.atlas.cell_center(*idx));
        if !problem.is_stabilizing(&k) {
            continue;
        }
        probed += 1;
        if reaches(&k) {
            hits += 1;
        }
    }
    Outcome {
        pass: near_ok && hits >= 1,
        detail: format!(
            "100 points within {NEAR_RADIUS} of K_2 descend to K_2: {near_ok}; boundary points with a descent direction into the K_c ball: {hits}/{probed}"
        ),
    }
}

/// `ACCEPTANCE_CRITERIA=2,6` restricts the run to the listed criteria.
fn selected(id: u32) -> bool {
    match std::env::var("ACCEPTANCE_CRITERIA") {
        Ok(list) => list.split(',').any(|s| s.trim().parse() == Ok(id)),
        Err(_) => true,
    }
}

fn report(id: u32, limit: Duration, run: impl FnOnce() -> Outcome) -> bool {
    if !selected(id) {
        return true;
    }
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = outcome.pass && in_time;
    let known = KNOWN_RED.iter().find(|(k, _)| *k == id);
    let mut line = format!(
        "criterion {id}: {} ({:.1}s, limit {}s) {}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs(),
        outcome.detail
    );
    if !in_time {
        line.push_str(" [over time limit]");
    }
    if let (false, Some((_, why))) = (pass, known) {
        line.push_str(&format!(" [known: {why}]"));
    }
    println!("{line}");
    pass || known.is_some()
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report(1, secs(1), criterion_1);
    ok &= report(2, secs(10), criterion_2);
    ok &= report(3, secs(30), criterion_3);

    let cases: Vec<ExperimentCase> = if [4, 5, 9].into_iter().any(selected) {
        let atlas_start = Instant::now();
        let cases = [0.0, 0.05, 0.1]
            .into_iter()
            .map(|eps| chain_n3_a_case(eps, &cube3(), ATLAS_RESOLUTION).unwrap())
            .collect();
        let atlas_time = atlas_start.elapsed();
        println!("atlases at resolution {ATLAS_RESOLUTION} built in {:.1}s", atlas_time.as_secs_f64());
        cases
    } else {
        Vec::new()
    };

    ok &= report(4, secs(20 * 60), || criterion_4(&cases));
    ok &= report(5, secs(30 * 60), || criterion_5(&cases));
    ok &= report(6, secs(30), criterion_6);
    ok &= report(7, secs(120), criterion_7);
    ok &= report(8, secs(60), criterion_8);
    ok &= report(9, secs(60), || criterion_9(&cases[0]));
    if !ok {
        std::process::exit(1);
    }
}
