//! Levenberg-Marquardt for small, dense least-squares problems.
//!
//! Bounds are handled by smooth reparameterization: the solver iterates on
//! unconstrained internal coordinates and every residual evaluation sees a
//! feasible external point. The residual callback may still refuse a point
//! (return `false`) when it lies outside a model domain that the per-axis
//! transforms cannot express; such trial steps are treated as rejected.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Map from an unconstrained internal coordinate to the feasible range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// `x = exp(t)`, for `x > 0`.
    Log,
    /// `x = lower + (upper - lower) / (1 + exp(-t))`.
    Logistic {
        lower: f64,
        upper: f64,
    },
}

impl Transform {
    pub fn to_external(&self, t: f64) -> f64 {
        match *self {
            Transform::Identity => t,
            Transform::Log => libm::exp(t).max(f64::MIN_POSITIVE),
            Transform::Logistic { lower, upper } => {
                let width = upper - lower;
                let x = if t >= 0.0 {
                    lower + width / (1.0 + libm::exp(-t))
                } else {
                    let e = libm::exp(t);
                    lower + width * e / (1.0 + e)
                };
                // saturation would otherwise land exactly on a bound
                let margin = width * f64::EPSILON;
                x.clamp(lower + margin, upper - margin)
            }
        }
    }

    pub fn to_internal(&self, x: f64) -> Result<f64> {
        match *self {
            Transform::Identity => Ok(x),
            Transform::Log => {
                if x > 0.0 {
                    Ok(libm::log(x))
                } else {
                    Err(Error::Domain("log transform needs a positive value"))
                }
            }
            Transform::Logistic { lower, upper } => {
                if x > lower && x < upper {
                    Ok(libm::log((x - lower) / (upper - x)))
                } else {
                    Err(Error::Domain("value outside logistic bounds"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub jacobian_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            jacobian_step: 1e-7,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = self.gradient_tolerance > 0.0
            && self.step_tolerance > 0.0
            && self.initial_damping > 0.0
            && self.jacobian_step > 0.0;
        if !positive {
            return Err(Error::InvalidParams("LM tolerances must be positive"));
        }
        if !(self.damping_increase > 1.0 && self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return Err(Error::InvalidParams(
                "LM damping factors must satisfy increase > 1 > decrease > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LmStatus {
    ConvergedGradient,
    ConvergedStep,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmResult {
    /// Solution in external coordinates.
    pub solution: Vec<f64>,
    /// Final sum of squared residuals.
    pub objective: f64,
    pub iterations: usize,
    pub status: LmStatus,
    pub residual_evaluations: usize,
    /// Objective at the initial point followed by every accepted step.
    pub objective_trace: Vec<f64>,
}

/// A residual function together with the parameter transforms.
///
/// The callback receives external parameters and fills the residual slice;
/// it returns `false` when the point is outside the model domain.
pub struct LmProblem<F> {
    residual_count: usize,
    transforms: Vec<Transform>,
    residuals: F,
}

impl<F> LmProblem<F>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    pub fn new(residual_count: usize, transforms: Vec<Transform>, residuals: F) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::InvalidParams("LM problem needs at least one parameter"));
        }
        if residual_count < transforms.len() {
            return Err(Error::InvalidParams("fewer residuals than parameters"));
        }
        Ok(LmProblem {
            residual_count,
            transforms,
            residuals,
        })
    }

    pub fn dimension(&self) -> usize {
        self.transforms.len()
    }

    pub fn residual_count(&self) -> usize {
        self.residual_count
    }

    fn external(&self, t: &[f64], x: &mut [f64]) {
        for ((xi, ti), tr) in x.iter_mut().zip(t).zip(&self.transforms) {
            *xi = tr.to_external(*ti);
        }
    }

    /// Evaluates at internal coordinates; `None` when refused or non-finite.
    fn eval(&mut self, t: &[f64], x: &mut [f64], r: &mut [f64]) -> Option<f64> {
        self.external(t, x);
        self.eval_external(x, r)
    }

    fn eval_external(&mut self, x: &[f64], r: &mut [f64]) -> Option<f64> {
        if !(self.residuals)(x, r) {
            return None;
        }
        let sse: f64 = r.iter().map(|v| v * v).sum();
        if sse.is_finite() {
            Some(sse)
        } else {
            None
        }
    }
}

/// Forward-difference Jacobian (row-major, `m x d`) of a plain vector
/// function around `x`, falling back to a backward difference where the
/// forward point is refused. Step size is `step * (1 + |x_i|)`.
pub fn forward_jacobian<F>(f: &mut F, x: &[f64], r0: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    let m = r0.len();
    let d = x.len();
    let mut jac = vec![0.0; m * d];
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    for j in 0..d {
        let h = step * (1.0 + x[j].abs());
        let mut signed_h = h;
        xp[j] = x[j] + h;
        let mut ok = f(&xp, &mut rp) && rp.iter().all(|v| v.is_finite());
        if !ok {
            signed_h = -h;
            xp[j] = x[j] - h;
            ok = f(&xp, &mut rp) && rp.iter().all(|v| v.is_finite());
        }
        if ok {
            for i in 0..m {
                jac[i * d + j] = (rp[i] - r0[i]) / signed_h;
            }
        }
        xp[j] = x[j];
    }
    jac
}

/// Solves `a * x = b` in place for a small symmetric positive definite `a`
/// (row-major). Returns `false` if `a` is not numerically positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let l_jj = libm::sqrt(diag);
        a[j * d + j] = l_jj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / l_jj;
        }
    }
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * d + k] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s -= a[k * d + i] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    true
}

const MAX_DAMPING: f64 = 1e32;

/// Minimizes the sum of squared residuals starting from `init` (external
/// coordinates, must be feasible).
pub fn solve<F>(problem: &mut LmProblem<F>, init: &[f64], opts: &LmOptions) -> Result<LmResult>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    opts.validate()?;
    let d = problem.dimension();
    let m = problem.residual_count;
    if init.len() != d {
        return Err(Error::InvalidParams("initial point has the wrong dimension"));
    }
    let mut t = Vec::with_capacity(d);
    for (x, tr) in init.iter().zip(&problem.transforms) {
        t.push(tr.to_internal(*x)?);
    }

    // the external point of the current iterate, kept verbatim so that the
    // returned solution is exactly the point whose objective is reported
    let mut x_best = init.to_vec();
    let mut x = vec![0.0; d];
    let mut r = vec![0.0; m];
    let mut evaluations = 1;
    let mut f = problem.eval_external(&x_best, &mut r).ok_or(Error::NonFiniteResidual)?;
    let mut trace = vec![f];

    let mut jac = jacobian_internal(problem, &t, &r, opts.jacobian_step, &mut evaluations);
    let mut scale = vec![0.0_f64; d];
    let mut damping = opts.initial_damping;
    let mut a = vec![0.0; d * d];
    let mut g = vec![0.0; d];
    let mut delta = vec![0.0; d];
    let mut t_trial = vec![0.0; d];
    let mut r_trial = vec![0.0; m];
    let mut need_normal = true;
    let mut status = LmStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if need_normal {
            normal_equations(&jac, &r, m, d, &mut a, &mut g);
            for j in 0..d {
                scale[j] = scale[j].max(a[j * d + j]);
            }
            need_normal = false;
        }
        let g_max = g.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if g_max <= opts.gradient_tolerance {
            status = LmStatus::ConvergedGradient;
            break;
        }
        iterations += 1;

        let scale_max = scale.iter().fold(0.0_f64, |acc, v| acc.max(*v));
        let floor = (scale_max * 1e-12).max(f64::MIN_POSITIVE);
        let mut solved = false;
        while damping <= MAX_DAMPING {
            let mut damped = a.clone();
            for j in 0..d {
                damped[j * d + j] += damping * scale[j].max(floor);
            }
            for j in 0..d {
                delta[j] = -g[j];
            }
            if cholesky_solve(&mut damped, &mut delta, d) && delta.iter().all(|v| v.is_finite()) {
                solved = true;
                break;
            }
            damping *= opts.damping_increase;
        }
        if !solved {
            return Err(Error::SingularNormalEquations);
        }

        let step_norm = norm(&delta);
        let small_step = step_norm <= opts.step_tolerance * (norm(&t) + opts.step_tolerance);
        for j in 0..d {
            t_trial[j] = t[j] + delta[j];
        }
        evaluations += 1;
        let trial = problem.eval(&t_trial, &mut x, &mut r_trial);
        match trial {
            Some(f_trial) if f_trial < f => {
                core::mem::swap(&mut t, &mut t_trial);
                core::mem::swap(&mut r, &mut r_trial);
                x_best.copy_from_slice(&x);
                f = f_trial;
                trace.push(f);
                if small_step {
                    status = LmStatus::ConvergedStep;
                    break;
                }
                jac = jacobian_internal(problem, &t, &r, opts.jacobian_step, &mut evaluations);
                need_normal = true;
                damping = (damping * opts.damping_decrease).max(1e-20);
            }
            _ => {
                if small_step {
                    status = LmStatus::ConvergedStep;
                    break;
                }
                damping *= opts.damping_increase;
                if damping > MAX_DAMPING {
                    status = LmStatus::ConvergedStep;
                    break;
                }
            }
        }
    }

    Ok(LmResult {
        solution: x_best,
        objective: f,
        iterations,
        status,
        residual_evaluations: evaluations,
        objective_trace: trace,
    })
}

fn jacobian_internal<F>(
    problem: &mut LmProblem<F>,
    t: &[f64],
    r0: &[f64],
    step: f64,
    evaluations: &mut usize,
) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    let d = t.len();
    let transforms = problem.transforms.clone();
    let residuals = &mut problem.residuals;
    let mut x = vec![0.0; d];
    let mut count = 0;
    let mut internal = |ti: &[f64], out: &mut [f64]| {
        count += 1;
        for ((xj, tj), tr) in x.iter_mut().zip(ti).zip(&transforms) {
            *xj = tr.to_external(*tj);
        }
        residuals(&x, out)
    };
    let jac = forward_jacobian(&mut internal, t, r0, step);
    *evaluations += count;
    jac
}

fn normal_equations(jac: &[f64], r: &[f64], m: usize, d: usize, a: &mut [f64], g: &mut [f64]) {
    a.iter_mut().for_each(|v| *v = 0.0);
    g.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let row = &jac[i * d..(i + 1) * d];
        for j in 0..d {
            g[j] += row[j] * r[i];
            for k in 0..=j {
                a[j * d + k] += row[j] * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            a[k * d + j] = a[j * d + k];
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_system_is_solved_exactly() {
        let a = [[3.0, 1.0, 0.5], [1.0, 4.0, -1.0], [0.0, 2.0, 5.0]];
        let b = [1.0, -2.0, 3.0];
        let mut problem = LmProblem::new(3, vec![Transform::Identity; 3], |x: &[f64], r: &mut [f64]| {
            for i in 0..3 {
                r[i] = a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2] - b[i];
            }
            true
        })
        .unwrap();
        let res = solve(&mut problem, &[0.0, 0.0, 0.0], &LmOptions::default()).unwrap();
        // exact solution by Cramer's rule
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let full = det(a);
        for k in 0..3 {
            let mut mk = a;
            for i in 0..3 {
                mk[i][k] = b[i];
            }
            let want = det(mk) / full;
            assert!((res.solution[k] - want).abs() < 1e-10, "{:?}", res);
        }
        assert!(res.iterations <= 3, "{} iterations", res.iterations);
    }

    #[test]
    fn curved_valley() {
        let mut problem = LmProblem::new(2, vec![Transform::Identity; 2], |x: &[f64], r: &mut [f64]| {
            r[0] = 10.0 * (x[1] - x[0] * x[0]);
            r[1] = 1.0 - x[0];
            true
        })
        .unwrap();
        let res = solve(&mut problem, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!((res.solution[0] - 1.0).abs() < 1e-8);
        assert!((res.solution[1] - 1.0).abs() < 1e-8);
        assert!(res.objective < 1e-20);
    }

    #[test]
    fn log_transform_keeps_positivity() {
        let mut problem = LmProblem::new(1, vec![Transform::Log], |x: &[f64], r: &mut [f64]| {
            assert!(x[0] > 0.0, "infeasible iterate {}", x[0]);
            r[0] = x[0] + 1.0;
            true
        })
        .unwrap();
        let res = solve(&mut problem, &[2.0], &LmOptions::default()).unwrap();
        assert!(res.solution[0] <= 1e-6 && res.solution[0] > 0.0, "{:?}", res);
        assert!(libm::log(res.solution[0]).is_finite());
    }

    #[test]
    fn logistic_bounds_hold() {
        let tr = Transform::Logistic { lower: 1.0, upper: 3.0 };
        let mut problem = LmProblem::new(1, vec![tr], |x: &[f64], r: &mut [f64]| {
            assert!(x[0] > 1.0 && x[0] < 3.0);
            r[0] = x[0] - 10.0;
            true
        })
        .unwrap();
        let res = solve(&mut problem, &[2.0], &LmOptions::default()).unwrap();
        assert!(res.solution[0] > 2.999 && res.solution[0] < 3.0);
        assert!(tr.to_internal(1.0).is_err());
        assert!(tr.to_external(1e6) < 3.0 && tr.to_external(1e6) > 3.0 - 1e-12);
        assert!(tr.to_external(-1e6) > 1.0 && tr.to_external(-1e6) < 1.0 + 1e-12);
        assert!(Transform::Log.to_external(-1e4) > 0.0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let mut problem = LmProblem::new(1, vec![Transform::Identity], |_: &[f64], r: &mut [f64]| {
            r[0] = f64::NAN;
            true
        })
        .unwrap();
        assert_eq!(
            solve(&mut problem, &[0.0], &LmOptions::default()),
            Err(Error::NonFiniteResidual)
        );
    }

    #[test]
    fn refused_trial_points_are_rejected_steps() {
        // minimum at x = -1 but the model refuses x < 0.5
        let mut problem = LmProblem::new(1, vec![Transform::Identity], |x: &[f64], r: &mut [f64]| {
            r[0] = x[0] + 1.0;
            x[0] >= 0.5
        })
        .unwrap();
        let res = solve(&mut problem, &[3.0], &LmOptions::default()).unwrap();
        assert!(res.solution[0] >= 0.5 && res.solution[0] < 0.5 + 1e-6, "{:?}", res);
    }

    #[test]
    fn bad_options_are_rejected() {
        let opts = LmOptions {
            damping_increase: 0.5,
            ..LmOptions::default()
        };
        assert!(opts.validate().is_err());
    }
}
