//! Numerical optimization and differentiation helpers.
//!
//! Objectives are minimized; `+inf` (or NaN) marks an infeasible point.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Convergence tolerance on the spread of simplex objective values.
    pub tolerance: f64,
    /// Gradient tolerance for the quasi-Newton polish.
    pub gradient_tolerance: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-10,
            gradient_tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder–Mead simplex search from `x0` with per-coordinate initial steps.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], settings: &OptimizerSettings) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        clean(f(x))
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];

    while iterations < settings.max_iterations {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        if best.is_finite() && worst.is_finite() {
            let spread = (worst - best).abs();
            let size = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread <= settings.tolerance * (1.0 + best.abs()) && size < 1e-7 {
                converged = true;
                break;
            }
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |coef: f64, out: &mut Vec<f64>, worst_v: &[f64], centroid: &[f64]| {
            for i in 0..n {
                out[i] = centroid[i] + coef * (worst_v[i] - centroid[i]);
            }
        };

        along(-alpha, &mut trial, &simplex[n], &centroid);
        let fr = eval(&trial, &mut evals);
        if fr < values[0] {
            let reflected = trial.clone();
            along(-gamma, &mut trial, &simplex[n], &centroid);
            let fe = eval(&trial, &mut evals);
            if fe < fr {
                simplex[n] = trial.clone();
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = trial.clone();
            values[n] = fr;
            continue;
        }
        // contraction
        let outside = fr < values[n];
        along(if outside { -rho } else { rho }, &mut trial, &simplex[n], &centroid);
        let fc = eval(&trial, &mut evals);
        if fc < if outside { fr } else { values[n] } {
            simplex[n] = trial.clone();
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best_v = simplex[0].clone();
        for j in 1..=n {
            for i in 0..n {
                simplex[j][i] = best_v[i] + shrink * (simplex[j][i] - best_v[i]);
            }
            values[j] = eval(&simplex[j], &mut evals);
        }
    }

    let (bi, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is non-empty");
    Minimum {
        x: simplex[bi].clone(),
        value: values[bi],
        iterations,
        evaluations: evals,
        converged,
    }
}

/// Nelder–Mead followed by restarts from the incumbent until the objective
/// stops improving.
pub fn nelder_mead_restarted<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    settings: &OptimizerSettings,
    restarts: usize,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = nelder_mead(&mut f, x0, steps, settings);
    for _ in 0..restarts {
        if !best.value.is_finite() {
            break;
        }
        let small: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
        let next = nelder_mead(&mut f, &best.x, &small, settings);
        let improved = best.value - next.value;
        let evaluations = best.evaluations + next.evaluations;
        let iterations = best.iterations + next.iterations;
        if next.value <= best.value {
            best = Minimum {
                evaluations,
                iterations,
                ..next
            };
        } else {
            best.evaluations = evaluations;
            best.iterations = iterations;
        }
        if improved <= settings.tolerance * (1.0 + best.value.abs()) {
            break;
        }
    }
    best
}

/// BFGS with a backtracking line search; used to polish a simplex solution.
pub fn bfgs<F, G>(mut f: F, mut grad: G, x0: &[f64], settings: &OptimizerSettings) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = clean(f(&x));
    let mut evals = 1;
    let Some(mut g) = grad(&x) else {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            evaluations: evals,
            converged: false,
        };
    };
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut it = 0;
    let max_it = settings.max_iterations.min(500);
    while it < max_it {
        it += 1;
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < settings.gradient_tolerance {
            converged = true;
            break;
        }
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut d = -(&h * &gv);
        let mut slope = d.dot(&gv);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            d = -gv.clone();
            slope = d.dot(&gv);
        }
        let mut step = 1.0;
        let mut accepted = None;
        let noise = 1e-12 * (1.0 + fx.abs());
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
            let fnew = clean(f(&xn));
            evals += 1;
            if fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew, None));
                break;
            }
            // below the resolution of f, accept steps that shrink the gradient
            if (fnew - fx).abs() <= noise {
                if let Some(gn) = grad(&xn) {
                    if gn.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 0.5 * gnorm {
                        accepted = Some((xn, fnew, Some(gn)));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            // no descent possible at this resolution
            converged = gnorm < 1e-4 * (1.0 + fx.abs());
            break;
        };
        let Some(gn) = gn.or_else(|| grad(&xn)) else { break };
        let s = nalgebra::DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = nalgebra::DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-16 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - rho * &s * y.transpose();
            let b = &i - rho * &y * s.transpose();
            h = &a * &h * &b + rho * &s * s.transpose();
        }
        let progress = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if progress.abs() < 1e-15 * (1.0 + fx.abs()) && s.amax() < 1e-13 {
            converged = true;
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        iterations: it,
        evaluations: evals,
        converged,
    }
}

/// Newton iterations on the gradient alone, with a finite-difference Jacobian.
/// Each step is kept only if it shrinks the largest gradient component, so
/// this refines a point already close to a stationary point of a smooth
/// objective.
pub fn newton_polish<G>(mut grad: G, x0: &[f64], iterations: usize) -> Vec<f64>
where
    G: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let Some(mut g) = grad(&x) else { return x };
    let norm = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..iterations {
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let mut xp = x.clone();
        for j in 0..n {
            let h = fd_step(x[j], 1e-6, 1e-8);
            xp[j] = x[j] + h;
            let Some(a) = grad(&xp) else { return x };
            xp[j] = x[j] - h;
            let Some(b) = grad(&xp) else { return x };
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (a[i] - b[i]) / (2.0 * h);
            }
        }
        let jac = (&jac + jac.transpose()) * 0.5;
        let Some(step) = jac.lu().solve(&nalgebra::DVector::from_column_slice(&g)) else { return x };
        let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - d).collect();
        match grad(&xn) {
            Some(gn) if norm(&gn) < norm(&g) => {
                x = xn;
                g = gn;
            }
            _ => break,
        }
    }
    x
}

fn fd_step(x: f64, rel: f64, floor: f64) -> f64 {
    (rel * x.abs()).max(floor)
}

/// Central-difference gradient with per-coordinate step `max(rel |x_i|, floor)`.
pub fn fd_gradient<F>(mut f: F, x: &[f64], rel: f64, floor: f64) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut out = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step(x[i], rel, floor);
        xp[i] = x[i] + h;
        let a = f(&xp);
        xp[i] = x[i] - h;
        let b = f(&xp);
        xp[i] = x[i];
        let d = (a - b) / (2.0 * h);
        if !d.is_finite() {
            return None;
        }
        out.push(d);
    }
    Some(out)
}

/// Central-difference Hessian. Steps shrink by halves (up to ten times) when an
/// evaluation leaves the finite region.
pub fn fd_hessian<F>(mut f: F, x: &[f64], rel: f64, floor: f64) -> Option<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let f0 = f(x);
    if !f0.is_finite() {
        return None;
    }
    let mut scale = 1.0;
    'retry: for _ in 0..10 {
        let h: Vec<f64> = x.iter().map(|&v| scale * fd_step(v, rel, floor)).collect();
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut xp = x.to_vec();
        for i in 0..n {
            xp[i] = x[i] + h[i];
            let a = f(&xp);
            xp[i] = x[i] - h[i];
            let b = f(&xp);
            xp[i] = x[i];
            let d = (a - 2.0 * f0 + b) / (h[i] * h[i]);
            if !d.is_finite() {
                scale *= 0.5;
                continue 'retry;
            }
            m[(i, i)] = d;
            for j in 0..i {
                let mut corner = |si: f64, sj: f64| {
                    xp[i] = x[i] + si * h[i];
                    xp[j] = x[j] + sj * h[j];
                    let v = f(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                let d = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                    + corner(-1.0, -1.0))
                    / (4.0 * h[i] * h[j]);
                if !d.is_finite() {
                    scale *= 0.5;
                    continue 'retry;
                }
                m[(i, j)] = d;
                m[(j, i)] = d;
            }
        }
        return Some(m);
    }
    None
}

/// Inverse of a symmetric information matrix.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub covariance: DMatrix<f64>,
    /// Set when eigenvalues were dropped (near-singular or indefinite).
    pub pseudo_inverse: bool,
    pub min_eigenvalue: f64,
}

/// Invert an observed information matrix. Eigenvalues that are non-positive or
/// tiny relative to the largest are dropped, giving a positive semi-definite
/// pseudo-inverse.
pub fn invert_information(info: &DMatrix<f64>) -> CovarianceEstimate {
    let sym = (info + info.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let cutoff = 1e-10 * max;
    let mut pseudo = false;
    let n = info.nrows();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if !(lam > cutoff) {
            pseudo = true;
            continue;
        }
        let v = eig.eigenvectors.column(k);
        cov += (v * v.transpose()) / lam;
    }
    CovarianceEstimate {
        covariance: (&cov + cov.transpose()) * 0.5,
        pseudo_inverse: pseudo,
        min_eigenvalue: min,
    }
}

/// Smallest `x` in `[lo, hi]` (to within `tol`) where `accept(x)` holds,
/// assuming acceptance is monotone (rejected below a boundary, accepted above).
/// The caller establishes `accept(hi)`. Returns `hi` side of the final bracket.
pub fn bisect_boundary<E, A>(mut accept: A, lo: f64, hi: f64, tol: f64) -> Result<(f64, usize), E>
where
    A: FnMut(f64) -> Result<bool, E>,
{
    let (mut a, mut b) = (lo, hi);
    let mut n = 0;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        n += 1;
        if accept(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok((b, n))
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_section<E, F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64, usize), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut n = 2;
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        n += 1;
    }
    let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    Ok((x, fx, n))
}
