use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};

use super::{fit_curve, predict, FitOptions, ModelKind, ModelSpec};
use crate::bloch::rabi_transfer;
use crate::{Error, Result};

/// Starting parameters for `model` estimated from `(x, y)`.
///
/// Fixed parameters keep their fixed value. Fails with
/// [`Error::DegenerateData`] when `y` carries no signal.
pub fn initial_guess(model: &ModelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_data(x, y)?;
    let fixed = |name: &str| model.index_of(name).and_then(|i| model.params[i].fixed);
    let mut p = match model.kind {
        ModelKind::RamseyEq4 => guess_ramsey(x, y, fixed("detuning"), fixed("t2_star"))?,
        ModelKind::ExpDecay => guess_decay(x, y),
        ModelKind::Lineshape => guess_lineshape(x, y, fixed("pulse_time"))?,
        ModelKind::RabiBloch => guess_rabi(model, x, y)?,
    };
    for (v, spec) in p.iter_mut().zip(&model.params) {
        *v = spec.fixed.unwrap_or(v.clamp(spec.lower, spec.upper));
    }
    Ok(p)
}

fn check_data(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("x has {} points, y has {}", x.len(), y.len())));
    }
    if x.len() < 4 {
        return Err(Error::DegenerateData(format!("need at least 4 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite data".into()));
    }
    let (lo, hi) = min_max(y);
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1e-300) {
        return Err(Error::DegenerateData("data are constant".into()));
    }
    let (xl, xh) = min_max(x);
    if xh <= xl {
        return Err(Error::DegenerateData("abscissa has zero span".into()));
    }
    Ok(())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn median_spacing(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
    median(&gaps)
}

fn logspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
}

/// Angular frequency of the strongest periodogram line of `y` (mean removed),
/// searched up to the Nyquist frequency of the median sample spacing with
/// eightfold oversampling.
pub fn periodogram_peak(x: &[f64], y: &[f64]) -> Result<f64> {
    check_data(x, y)?;
    let (xl, xh) = min_max(x);
    let span = xh - xl;
    let dx = median_spacing(x);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let df = 1.0 / (8.0 * span);
    let n_freq = ((0.5 / dx) / df).ceil() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 1..=n_freq {
        let w = TAU * df * k as f64;
        let (mut c, mut s) = (0.0, 0.0);
        for (&t, &v) in x.iter().zip(y) {
            let (sn, cs) = (w * (t - xl)).sin_cos();
            c += (v - mean) * cs;
            s += (v - mean) * sn;
        }
        let power = c * c + s * s;
        if power > best.1 {
            best = (w, power);
        }
    }
    Ok(best.0)
}

/// Linear least squares of `y` on three basis columns; returns coefficients and RSS.
fn lstsq3(cols: &[[f64; 3]], y: &[f64]) -> Option<(Vector3<f64>, f64)> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (c, &v) in cols.iter().zip(y) {
        let c = Vector3::from(*c);
        a += c * c.transpose();
        b += c * v;
    }
    let coef = a.try_inverse()? * b;
    let rss = cols
        .iter()
        .zip(y)
        .map(|(c, &v)| {
            let r = v - Vector3::from(*c).dot(&coef);
            r * r
        })
        .sum();
    Some((coef, rss))
}

fn guess_ramsey(x: &[f64], y: &[f64], detuning: Option<f64>, t2_star: Option<f64>) -> Result<Vec<f64>> {
    let (xl, xh) = min_max(x);
    let span = xh - xl;
    let detunings: Vec<f64> = match detuning {
        Some(d) => vec![d],
        None => {
            let w = periodogram_peak(x, y)?;
            // candidates beyond the Nyquist limit alias onto the other sign branch
            let nyquist = PI / median_spacing(x);
            (0..=60)
                .map(|k| w * (0.7 + 0.01 * k as f64))
                .filter(|d| *d < nyquist)
                .flat_map(|d| [d, -d])
                .collect()
        }
    };
    let t2s: Vec<f64> = match t2_star {
        Some(t) => vec![t],
        None => logspace(span / 30.0, 30.0 * span, 31).collect(),
    };
    // best grid point on each sign branch of the detuning
    let mut best: [Option<(f64, [f64; 5])>; 2] = [None, None];
    let mut cols = vec![[0.0; 3]; x.len()];
    for &t2 in &t2s {
        for &d in &detunings {
            for (c, &t) in cols.iter_mut().zip(x) {
                let u = t / t2;
                let alpha = (1.0 + 0.95 * u * u).powf(-1.5);
                let theta = d * t - 3.0 * (0.97 * u).atan();
                *c = [alpha * theta.cos(), alpha * theta.sin(), 1.0];
            }
            let Some((coef, rss)) = lstsq3(&cols, y) else { continue };
            let branch = &mut best[usize::from(d < 0.0)];
            if branch.as_ref().is_none_or(|b| rss < b.0) {
                let amp = coef[0].hypot(coef[1]);
                let phase = (-coef[1]).atan2(coef[0]);
                *branch = Some((rss, [amp, coef[2], d, phase, t2]));
            }
        }
    }
    let starts: Vec<[f64; 5]> = best.iter().flatten().map(|b| b.1).collect();
    if starts.len() < 2 {
        return starts
            .first()
            .map(|p| p.to_vec())
            .ok_or_else(|| Error::DegenerateData("no Ramsey fringe found".into()));
    }
    // the two branches mirror each other closely; settle the sign by refining both
    let mut model = ModelSpec::new(ModelKind::RamseyEq4);
    for (name, v) in [("detuning", detuning), ("t2_star", t2_star)] {
        if let Some(v) = v {
            model = model.fix(name, v)?;
        }
    }
    let mut chosen: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let refined = match fit_curve(&model, x, y, &start, &FitOptions::default()) {
            Ok(f) => (f.rss, f.values),
            Err(_) => continue,
        };
        if chosen.as_ref().is_none_or(|c| refined.0 < c.0) {
            chosen = Some(refined);
        }
    }
    chosen.map(|c| c.1).ok_or_else(|| Error::DegenerateData("no Ramsey fringe found".into()))
}

fn guess_decay(x: &[f64], y: &[f64]) -> Vec<f64> {
    let (xl, xh) = min_max(x);
    let span = xh - xl;
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        if sxx > 0.0 {
            let slope = sxy / sxx;
            let tau = if slope < 0.0 { -1.0 / slope } else { 10.0 * span };
            return vec![(ml - slope * mt).exp(), tau];
        }
    }
    // half-life of the first sample
    let i0 = x.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let v0 = y[i0];
    let half = x
        .iter()
        .zip(y)
        .filter(|(_, v)| v.abs() <= 0.5 * v0.abs())
        .map(|(t, _)| *t - xl)
        .fold(f64::INFINITY, f64::min);
    let tau = if half.is_finite() && half > 0.0 { half / std::f64::consts::LN_2 } else { span };
    vec![v0, tau]
}

fn guess_lineshape(x: &[f64], y: &[f64], pulse_time: Option<f64>) -> Result<Vec<f64>> {
    let med = median(y);
    let (lo, hi) = min_max(y);
    let peak_up = hi - med >= med - lo;
    let extreme = if peak_up { hi } else { lo };
    let i_ext = y.iter().position(|v| *v == extreme).unwrap_or(0);
    let center = x[i_ext];
    let base = if peak_up { lo } else { hi };
    let half = 0.5 * (extreme + base);
    let inside: Vec<f64> = x
        .iter()
        .zip(y)
        .filter(|(_, v)| if peak_up { **v >= half } else { **v <= half })
        .map(|(t, _)| *t)
        .collect();
    let (xl, xh) = min_max(x);
    let (il, ih) = min_max(&inside);
    let dx = median_spacing(x);
    let fwhm = (ih - il).max(dx).min(xh - xl);
    let omega0 = fwhm / 1.598;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut cols = vec![[0.0; 2]; x.len()];
    for omega in logspace(omega0 / 3.0, omega0 * 3.0, 81) {
        let tp = pulse_time.unwrap_or(PI / omega);
        for (c, &d) in cols.iter_mut().zip(x) {
            *c = [rabi_transfer(tp, omega, d - center)?, 1.0];
        }
        let Some((coef, rss)) = lstsq2(&cols, y) else { continue };
        if best.as_ref().is_none_or(|b| rss < b.0) {
            best = Some((rss, vec![omega, tp, center, coef.0, coef.1]));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::DegenerateData("no lineshape found".into()))
}

fn lstsq2(cols: &[[f64; 2]], y: &[f64]) -> Option<((f64, f64), f64)> {
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (c, &v) in cols.iter().zip(y) {
        saa += c[0] * c[0];
        sab += c[0] * c[1];
        sbb += c[1] * c[1];
        say += c[0] * v;
        sby += c[1] * v;
    }
    let det = saa * sbb - sab * sab;
    if det.abs() <= 1e-14 * saa * sbb {
        return None;
    }
    let a = (say * sbb - sby * sab) / det;
    let b = (saa * sby - sab * say) / det;
    let rss = cols.iter().zip(y).map(|(c, &v)| (v - a * c[0] - b * c[1]).powi(2)).sum();
    Some(((a, b), rss))
}

fn guess_rabi(model: &ModelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let (xl, xh) = min_max(x);
    let span = xh - xl;
    let w_eq = model.index_of("w_eq").and_then(|i| model.params[i].fixed).unwrap_or(0.0);
    let omega_fixed = model.index_of("omega").and_then(|i| model.params[i].fixed);
    let omegas: Vec<f64> = match omega_fixed {
        Some(w) => vec![w],
        None => {
            let w = periodogram_peak(x, y)?;
            (0..=20).map(|k| w * (0.9 + 0.01 * k as f64)).collect()
        }
    };
    let dampings: Vec<f64> = std::iter::once(0.0).chain(logspace(0.01 / span, 10.0 / span, 12)).collect();
    let backgrounds = [0.0, 0.1 / span, 1.0 / span];
    let unit = ModelSpec::new(ModelKind::RabiBloch);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &w in &omegas {
        for &g2 in &dampings {
            for &g1 in &backgrounds {
                let p = predict(&unit, &[w, g2, g1, w_eq, 1.0], x)?;
                let spp: f64 = p.iter().map(|v| v * v).sum();
                if spp <= 0.0 {
                    continue;
                }
                let amp = p.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / spp;
                let rss: f64 = p.iter().zip(y).map(|(a, b)| (b - amp * a).powi(2)).sum();
                if best.as_ref().is_none_or(|b| rss < b.0) {
                    best = Some((rss, vec![w, g2, g1, w_eq, amp.max(0.0)]));
                }
            }
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::DegenerateData("no Rabi oscillation found".into()))
}
