use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{predict, ModelKind, ModelSpec};
use crate::{Error, Result};

/// Stopping rules for [`fit_curve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged when an accepted step lowers the RSS by less than this fraction.
    pub ftol: f64,
    /// Converged when the scaled gradient falls below this value.
    pub gtol: f64,
    /// Converged when a near-Gauss-Newton step (λ ≤ 1) moves every free
    /// parameter by less than this fraction of its magnitude.
    pub xtol: f64,
    pub initial_lambda: f64,
    pub max_lambda: f64,
    /// Relative finite-difference step for the Jacobian.
    pub diff_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-10,
            gtol: 1e-12,
            xtol: 1e-12,
            initial_lambda: 1e-3,
            max_lambda: 1e16,
            diff_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: ModelKind,
    pub names: Vec<&'static str>,
    pub values: Vec<f64>,
    /// One-sigma uncertainties from the scaled covariance; 0 for fixed parameters.
    pub sigmas: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// RSS at the start and after every accepted step.
    pub rss_history: Vec<f64>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| *n == name).map(|i| self.sigmas[i])
    }
}

#[derive(Serialize)]
struct ParamOut {
    value: f64,
    sigma: f64,
}

#[derive(Serialize)]
struct FitOut<'a> {
    model: &'a str,
    params: BTreeMap<&'a str, ParamOut>,
    rss: f64,
    iterations: usize,
    converged: bool,
}

impl Serialize for FitResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let params = self
            .names
            .iter()
            .zip(self.values.iter().zip(&self.sigmas))
            .map(|(n, (&value, &sigma))| (*n, ParamOut { value, sigma }))
            .collect();
        FitOut {
            model: self.model.name(),
            params,
            rss: self.rss,
            iterations: self.iterations,
            converged: self.converged,
        }
        .serialize(s)
    }
}

/// Scaled-gradient bound under which a fit whose damping ran out still counts as converged.
const STALL_GTOL: f64 = 1e-6;

struct Problem<'a> {
    model: &'a ModelSpec,
    x: &'a [f64],
    y: &'a [f64],
    free: Vec<usize>,
    scale: Vec<f64>,
    diff_step: f64,
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> Result<DVector<f64>> {
        let f = predict(self.model, p, self.x)?;
        Ok(DVector::from_iterator(self.y.len(), self.y.iter().zip(&f).map(|(y, f)| y - f)))
    }

    /// Jacobian of the model (not the residual) with respect to the free parameters.
    fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.y.len();
        let mut jac = DMatrix::zeros(n, self.free.len());
        let mut q = p.to_vec();
        for (col, &j) in self.free.iter().enumerate() {
            let spec = &self.model.params[j];
            let h = self.diff_step * p[j].abs().max(self.scale[col]);
            let (lo, hi) = match (p[j] - h >= spec.lower, p[j] + h <= spec.upper) {
                (true, true) => (p[j] - h, p[j] + h),
                (false, true) => (p[j], p[j] + h),
                (true, false) => (p[j] - h, p[j]),
                (false, false) => return Err(Error::InvalidArgument(format!("bounds on {} too narrow to differentiate", spec.name))),
            };
            q[j] = hi;
            let f_hi = predict(self.model, &q, self.x)?;
            q[j] = lo;
            let f_lo = predict(self.model, &q, self.x)?;
            q[j] = p[j];
            let width = hi - lo;
            for i in 0..n {
                jac[(i, col)] = (f_hi[i] - f_lo[i]) / width;
            }
        }
        Ok(jac)
    }
}

/// Bounded Levenberg-Marquardt fit of `model` to `(x, y)` starting at `initial`.
///
/// `initial` holds every parameter; fixed ones are overwritten by their
/// fixed value. Failure to converge within `max_iter` is reported through
/// [`FitResult::converged`], not as an error.
pub fn fit_curve(model: &ModelSpec, x: &[f64], y: &[f64], initial: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("x has {} points, y has {}", x.len(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite data".into()));
    }
    if initial.len() != model.params.len() {
        return Err(Error::InvalidArgument(format!(
            "model {} takes {} parameters, got {}",
            model.kind,
            model.params.len(),
            initial.len()
        )));
    }
    if !(opts.diff_step > 0.0 && opts.initial_lambda > 0.0 && opts.max_lambda >= opts.initial_lambda) {
        return Err(Error::InvalidArgument("fit options must be positive".into()));
    }
    let mut p: Vec<f64> = model
        .params
        .iter()
        .zip(initial)
        .map(|(spec, &v)| spec.fixed.unwrap_or(v.clamp(spec.lower, spec.upper)))
        .collect();
    let free = model.free_indices();
    if y.len() <= free.len() {
        return Err(Error::DegenerateData(format!(
            "{} points cannot determine {} free parameters",
            y.len(),
            free.len()
        )));
    }
    let scale = free
        .iter()
        .map(|&j| if p[j] != 0.0 { p[j].abs() } else { 1.0 })
        .collect();
    let prob = Problem { model, x, y, free, scale, diff_step: opts.diff_step };

    let mut r = prob.residuals(&p)?;
    let mut rss = r.norm_squared();
    let data_scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut history = vec![rss];
    let mut lambda = opts.initial_lambda;
    let mut converged = prob.free.is_empty();
    let mut iterations = 0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        if rss <= 1e-28 * data_scale {
            converged = true;
            break;
        }
        let jac = prob.jacobian(&p)?;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let diag: Vec<f64> = {
            let max = (0..jtj.nrows()).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
            (0..jtj.nrows()).map(|i| jtj[(i, i)].max(1e-30 * max).max(f64::MIN_POSITIVE)).collect()
        };
        let scaled_grad = grad
            .iter()
            .zip(&diag)
            .map(|(g, d)| g.abs() / (d * rss).sqrt())
            .fold(0.0, f64::max);
        if scaled_grad < opts.gtol {
            converged = true;
            break;
        }
        loop {
            let mut a = jtj.clone();
            for (i, d) in diag.iter().enumerate() {
                a[(i, i)] += lambda * d;
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&grad),
                None => match a.lu().solve(&grad) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        if lambda > opts.max_lambda {
                            break;
                        }
                        continue;
                    }
                },
            };
            let mut trial = p.clone();
            for (col, &j) in prob.free.iter().enumerate() {
                let spec = &model.params[j];
                trial[j] = (p[j] + step[col]).clamp(spec.lower, spec.upper);
            }
            let trial_r = match prob.residuals(&trial) {
                Ok(tr) if tr.iter().all(|v| v.is_finite()) => Some(tr),
                _ => None,
            };
            match trial_r {
                Some(tr) if tr.norm_squared() < rss => {
                    let new_rss = tr.norm_squared();
                    let drop = (rss - new_rss) / rss;
                    let tiny_step = lambda <= 1.0
                        && prob.free.iter().all(|&j| (trial[j] - p[j]).abs() <= opts.xtol * (p[j].abs() + opts.xtol));
                    p = trial;
                    r = tr;
                    rss = new_rss;
                    history.push(rss);
                    lambda = (lambda / 10.0).max(1e-12);
                    if drop < opts.ftol || tiny_step {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > opts.max_lambda {
                        break;
                    }
                }
            }
        }
        if lambda > opts.max_lambda {
            // no step lowers the RSS; accept only if the point is stationary
            converged = scaled_grad < STALL_GTOL;
            break;
        }
    }

    if model.kind == ModelKind::RamseyEq4 {
        let j = 3;
        let spec = &model.params[j];
        if spec.fixed.is_none() && spec.lower <= -PI && spec.upper >= PI {
            p[j] = wrap_phase(p[j]);
        }
    }

    let sigmas = sigmas(&prob, &p, rss)?;
    Ok(FitResult {
        model: model.kind,
        names: model.params.iter().map(|s| s.name).collect(),
        values: p,
        sigmas,
        rss,
        iterations,
        converged,
        rss_history: history,
    })
}

fn sigmas(prob: &Problem<'_>, p: &[f64], rss: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; p.len()];
    if prob.free.is_empty() {
        return Ok(out);
    }
    let jac = prob.jacobian(p)?;
    let jtj = jac.transpose() * &jac;
    let dof = (prob.y.len() - prob.free.len()) as f64;
    let eps = 1e-14 * jtj.diagonal().max();
    let cov = jtj
        .pseudo_inverse(eps)
        .map_err(|e| Error::DegenerateData(e.to_string()))?;
    for (col, &j) in prob.free.iter().enumerate() {
        out[j] = (cov[(col, col)].max(0.0) * rss / dof).sqrt();
    }
    Ok(out)
}

/// Map an angle into (−π, π].
pub(crate) fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}
