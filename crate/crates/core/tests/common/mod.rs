#![allow(dead_code)]

use nalgebra::Complex;
use odc_core::atlas::{sample_stabilizing_with, SamplerBox};
use odc_core::model::StructureMask;
use odc_core::{Matrix, OdcProblem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// Fourth-order central differences of `f` in every entry of `k` that `mask`
/// marks free. Each step starts at `h` and is quartered until two successive
/// estimates agree.
pub fn fd_gradient<F: Fn(&Matrix) -> f64>(f: F, k: &Matrix, mask: &StructureMask, h: f64) -> Matrix {
    let mut g = Matrix::zeros(k.nrows(), k.ncols());
    for (i, j) in mask.free_indices() {
        let at = |t: f64| {
            let mut x = k.clone();
            x[(i, j)] += t;
            f(&x)
        };
        let stencil = |h: f64| (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        let mut step = h;
        let mut prev = stencil(step);
        for _ in 0..6 {
            step *= 0.25;
            let next = stencil(step);
            let settled = (next - prev).abs() <= 1e-7 * next.abs().max(1.0);
            prev = next;
            if settled {
                break;
            }
        }
        g[(i, j)] = prev;
    }
    g
}

/// Central difference of a matrix-valued map along `dir`.
pub fn fd_directional<F: Fn(&Matrix) -> Matrix>(f: F, k: &Matrix, dir: &Matrix, h: f64) -> Matrix {
    (f(&(k + dir * h)) - f(&(k - dir * h))) / (2.0 * h)
}

/// Integral of `exp(M^T t) Q exp(M t)` over `[0, horizon]` by composite
/// Simpson with `steps` (even) panels.
pub fn quadrature_gramian(m: &Matrix, q: &Matrix, horizon: f64, steps: usize) -> Matrix {
    assert!(steps % 2 == 0);
    let dt = horizon / steps as f64;
    let step = (m * dt).exp();
    let mut e = Matrix::identity(m.nrows(), m.ncols());
    let mut acc = Matrix::zeros(m.nrows(), m.ncols());
    for i in 0..=steps {
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (e.transpose() * q * &e) * w;
        e = &e * &step;
    }
    acc * (dt / 3.0)
}

/// Monic characteristic polynomial coefficients `c_1..c_n` of
/// `s^n + c_1 s^{n-1} + ... + c_n` by Faddeev-LeVerrier.
pub fn char_poly(m: &Matrix) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = Vec::with_capacity(n);
    let mut mk = Matrix::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        mk = m * (&mk + Matrix::identity(n, n) * c_prev);
        let c = -mk.trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

/// Roots of a monic polynomial by Durand-Kerner iteration.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len();
    let eval = |z: Complex<f64>| {
        let mut v = Complex::new(1.0, 0.0);
        for c in coeffs {
            v = v * z + c;
        }
        v
    };
    let scale = 1.0 + coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|i| seed.powu(i as u32) * scale).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-14 * scale {
            break;
        }
    }
    roots
}

pub fn root_abscissa(m: &Matrix) -> f64 {
    poly_roots(&char_poly(m)).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn sample(problem: &OdcProblem, rng: &mut ChaCha8Rng, bounds: &SamplerBox) -> Matrix {
    sample_stabilizing_with(rng, &problem.system, &problem.mask, bounds, 100_000, &problem.numeric)
        .expect("box contains stabilizing gains")
}

/// Random matrix supported on the free entries of `mask`, unit Frobenius norm.
pub fn random_direction(rng: &mut ChaCha8Rng, mask: &StructureMask) -> Matrix {
    let free: Vec<f64> = (0..mask.free_count()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let d = mask.embed(&free);
    let n = d.norm();
    d / n
}

pub fn random_full(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let d = Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let n = d.norm();
    d / n
}

/// A boundary crossing `t` of the ray `k + t d` located by doubling and then
/// bisection, or `None` when every doubling point up to `t_max` is stable.
pub fn boundary_along_ray(problem: &OdcProblem, k: &Matrix, d: &Matrix, t_max: f64) -> Option<f64> {
    let mut hi = 1e-2;
    while problem.is_stabilizing(&(k + d * hi)) {
        hi *= 2.0;
        if hi > t_max {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if problem.is_stabilizing(&(k + d * mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}
