//! Least-squares recovery of model parameters from traces.
//!
//! Four signal models are supported: a damped Rabi oscillation computed by
//! integrating the Bloch equations, the thermally averaged Ramsey fringe, the
//! rectangular-pulse lineshape and an exponential decay. [`fit_curve`] is a
//! bounded Levenberg-Marquardt minimiser with a central-difference Jacobian;
//! [`initial_guess`] seeds it from the data.

mod guess;
mod lm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bloch::{rabi_transfer, segment_propagator, AffineMap, BlochState, DriveParams, PulseSegment, RelaxationParams};

use crate::dephasing::{ramsey_unchecked, RamseyParams};
use crate::{Error, Result};

pub use guess::{initial_guess, periodogram_peak};
pub use lm::{fit_curve, FitOptions, FitResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `amplitude · P0(t)` from the damped Bloch equations, starting in |1⟩ on resonance.
    RabiBloch,
    /// `A α(t) cos(δ t + κ(t) + Φ) + C`.
    RamseyEq4,
    /// `offset + amplitude · (Ω²/W²) sin²(W t_p / 2)` with `W² = Ω² + (x − center)²`.
    Lineshape,
    /// `v0 · exp(−x / τ)`.
    ExpDecay,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::RabiBloch, ModelKind::RamseyEq4, ModelKind::Lineshape, ModelKind::ExpDecay];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::RabiBloch => "rabi_bloch",
            ModelKind::RamseyEq4 => "ramsey_eq4",
            ModelKind::Lineshape => "lineshape",
            ModelKind::ExpDecay => "exp_decay",
        }
    }

    /// Parameter names in the order used by parameter vectors.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::RabiBloch => &["omega", "damping_rate", "background_rate", "w_eq", "amplitude"],
            ModelKind::RamseyEq4 => &["amplitude", "offset", "detuning", "phase", "t2_star"],
            ModelKind::Lineshape => &["omega", "pulse_time", "center", "amplitude", "offset"],
            ModelKind::ExpDecay => &["v0", "tau"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model {s:?}")))
    }
}

/// Bounds and (optional) fixed value of one model parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    /// When set the parameter is held at this value.
    pub fixed: Option<f64>,
}

impl ParamSpec {
    fn new(name: &'static str, lower: f64, upper: f64) -> Self {
        Self { name, lower, upper, fixed: None }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub params: Vec<ParamSpec>,
}

impl ModelSpec {
    /// Default bounds. `w_eq` of the Rabi model is fixed at 0; everything
    /// else is free.
    pub fn new(kind: ModelKind) -> Self {
        const INF: f64 = f64::INFINITY;
        let params = match kind {
            ModelKind::RabiBloch => vec![
                ParamSpec::new("omega", 0.0, INF),
                ParamSpec::new("damping_rate", 0.0, INF),
                ParamSpec::new("background_rate", 0.0, INF),
                ParamSpec { fixed: Some(0.0), ..ParamSpec::new("w_eq", -1.0, 1.0) },
                ParamSpec::new("amplitude", 0.0, INF),
            ],
            ModelKind::RamseyEq4 => vec![
                ParamSpec::new("amplitude", 0.0, INF),
                ParamSpec::new("offset", -INF, INF),
                ParamSpec::new("detuning", -INF, INF),
                ParamSpec::new("phase", -INF, INF),
                ParamSpec::new("t2_star", 1e-12, INF),
            ],
            ModelKind::Lineshape => vec![
                ParamSpec::new("omega", 0.0, INF),
                ParamSpec::new("pulse_time", 0.0, INF),
                ParamSpec::new("center", -INF, INF),
                ParamSpec::new("amplitude", -INF, INF),
                ParamSpec::new("offset", -INF, INF),
            ],
            ModelKind::ExpDecay => vec![ParamSpec::new("v0", -INF, INF), ParamSpec::new("tau", 1e-15, INF)],
        };
        Self { kind, params }
    }

    /// Hold `name` at `value`.
    pub fn fix(mut self, name: &str, value: f64) -> Result<Self> {
        let p = self.param_mut(name)?;
        p.fixed = Some(value);
        Ok(self)
    }

    /// Let `name` vary.
    pub fn free(mut self, name: &str) -> Result<Self> {
        self.param_mut(name)?.fixed = None;
        Ok(self)
    }

    pub fn bound(mut self, name: &str, lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidArgument(format!("empty bounds [{lower}, {upper}] for {name}")));
        }
        let p = self.param_mut(name)?;
        p.lower = lower;
        p.upper = upper;
        Ok(self)
    }

    fn param_mut(&mut self, name: &str) -> Result<&mut ParamSpec> {
        let kind = self.kind;
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("model {kind} has no parameter {name:?}")))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn free_indices(&self) -> Vec<usize> {
        self.params.iter().enumerate().filter(|(_, p)| p.fixed.is_none()).map(|(i, _)| i).collect()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "model {} takes {} parameters, got {}",
                self.kind,
                self.params.len(),
                params.len()
            )));
        }
        for (spec, &v) in self.params.iter().zip(params) {
            if v.is_nan() || !spec.contains(v) {
                return Err(Error::InvalidArgument(format!(
                    "{} = {v} outside [{}, {}]",
                    spec.name, spec.lower, spec.upper
                )));
            }
        }
        Ok(())
    }
}

/// Model values at `x` for the full parameter vector `params`.
pub fn predict(model: &ModelSpec, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    model.check_params(params)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite abscissa".into()));
    }
    let out = match model.kind {
        ModelKind::RabiBloch => predict_rabi(params, x)?,
        ModelKind::RamseyEq4 => {
            let p = RamseyParams {
                amplitude: params[0],
                offset: params[1],
                detuning: params[2],
                phase: params[3],
                t2_star: params[4],
            };
            x.iter().map(|&t| ramsey_unchecked(t, &p)).collect()
        }
        ModelKind::Lineshape => {
            let (omega, t, center, amp, offset) = (params[0], params[1], params[2], params[3], params[4]);
            x.iter()
                .map(|&d| rabi_transfer(t, omega, d - center).map(|p| offset + amp * p))
                .collect::<Result<_>>()?
        }
        ModelKind::ExpDecay => x.iter().map(|&t| params[0] * (-t / params[1]).exp()).collect(),
    };
    if out.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::InvalidArgument("model produced non-finite values".into()));
    }
    Ok(out)
}

fn predict_rabi(params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let (omega, damping, background, w_eq, amp) = (params[0], params[1], params[2], params[3], params[4]);
    if x.windows(2).any(|w| w[1] <= w[0]) || x.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("rabi_bloch needs strictly increasing, non-negative times".into()));
    }
    let relax = RelaxationParams {
        t1: 1.0 / background,
        t2: 1.0 / damping,
        t2_homogeneous: f64::INFINITY,
        w_eq,
    };
    let drive = DriveParams::resonant(omega);
    // exact affine propagators between consecutive samples; uniform grids reuse one map
    let mut state = BlochState::UPPER;
    let mut cursor = 0.0;
    let mut cached: Option<(f64, AffineMap)> = None;
    let mut out = Vec::with_capacity(x.len());
    for &t in x {
        let dt = t - cursor;
        if dt > 0.0 {
            let map = match &cached {
                Some((d, m)) if ((d - dt) / dt).abs() < 1e-12 => *m,
                _ => {
                    let m = segment_propagator(&PulseSegment::timed(dt, drive), &relax)?;
                    cached = Some((dt, m));
                    m
                }
            };
            state = map.apply(state);
        }
        cursor = t;
        out.push(amp * state.p0());
    }
    Ok(out)
}
