//! Four-parameter logistic mapping of objective scores onto subjective scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f(s) = beta2 + (beta1 - beta2) / (1 + exp(-(s - beta3) / |beta4|))`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Logistic4(pub [f64; 4]);

impl Logistic4 {
    pub fn eval(&self, s: f64) -> f64 {
        let [b1, b2, b3, b4] = self.0;
        let scale = b4.abs().max(f64::MIN_POSITIVE);
        b2 + (b1 - b2) / (1.0 + (-(s - b3) / scale).exp())
    }

    pub fn map(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.eval(s)).collect()
    }

    pub fn sse(&self, scores: &[f64], targets: &[f64]) -> f64 {
        scores
            .iter()
            .zip(targets)
            .map(|(&s, &t)| (self.eval(s) - t).powi(2))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    pub params: Logistic4,
    pub mapped: Vec<f64>,
    pub sse: f64,
}

pub const SIMPLEX_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

/// Result of a Nelder-Mead minimization.
#[derive(Clone, Debug)]
pub struct Minimum<const N: usize> {
    pub point: [f64; N],
    pub value: f64,
    pub iterations: usize,
}

/// Nelder-Mead simplex descent with standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
///
/// Stops when the simplex diameter falls below `tol` or after `max_iter` iterations.
pub fn nelder_mead<const N: usize>(
    f: impl Fn(&[f64; N]) -> f64,
    start: [f64; N],
    steps: [f64; N],
    tol: f64,
    max_iter: usize,
) -> Minimum<N> {
    let eval = |p: &[f64; N]| {
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, eval(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] += steps[i];
        simplex.push((p, eval(&p)));
    }
    let lerp = |a: &[f64; N], b: &[f64; N], t: f64| {
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = a[k] + t * (b[k] - a[k]);
        }
        out
    };
    let mut iterations = 0;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex
            .iter()
            .skip(1)
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if diameter < tol {
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for k in 0..N {
                centroid[k] += p[k] / N as f64;
            }
        }
        let (worst, f_worst) = simplex[N];
        let reflected = lerp(&centroid, &worst, -1.0);
        let f_r = eval(&reflected);
        if f_r < simplex[0].1 {
            let expanded = lerp(&centroid, &worst, -2.0);
            let f_e = eval(&expanded);
            simplex[N] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < simplex[N - 1].1 {
            simplex[N] = (reflected, f_r);
            continue;
        }
        let (contracted, f_c) = if f_r < f_worst {
            let c = lerp(&centroid, &reflected, 0.5);
            (c, eval(&c))
        } else {
            let c = lerp(&centroid, &worst, 0.5);
            (c, eval(&c))
        };
        if f_c < f_worst.min(f_r) {
            simplex[N] = (contracted, f_c);
            continue;
        }
        let best = simplex[0].0;
        for entry in simplex.iter_mut().skip(1) {
            let p = lerp(&best, &entry.0, 0.5);
            *entry = (p, eval(&p));
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Minimum {
        point: simplex[0].0,
        value: simplex[0].1,
        iterations,
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Least-squares fit of [`Logistic4`] by simplex descent.
///
/// Starts from `beta1 = max(mos)`, `beta2 = min(mos)`, `beta3 = mean(scores)`,
/// `beta4 = std(scores) / 4`. A second start approximating the least-squares line
/// is also descended, and the lower-SSE result is kept; this keeps the mapped
/// scores at least as linearly correlated with `mos` as the raw scores.
pub fn logistic_fit(scores: &[f64], mos: &[f64]) -> Result<LogisticFit> {
    if scores.len() != mos.len() {
        return Err(Error::Input(format!(
            "logistic fit needs equal lengths, got {} and {}",
            scores.len(),
            mos.len()
        )));
    }
    if scores.len() < 5 {
        return Err(Error::Input(format!(
            "logistic fit needs at least 5 points, got {}",
            scores.len()
        )));
    }
    if scores.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(Error::Input("logistic fit input contains non-finite values".into()));
    }
    let (s_mean, s_std) = mean_std(scores);
    if s_std == 0.0 {
        return Err(Error::Input("logistic fit needs non-constant scores".into()));
    }
    let (m_mean, m_std) = mean_std(mos);
    let m_max = mos.iter().copied().fold(f64::MIN, f64::max);
    let m_min = mos.iter().copied().fold(f64::MAX, f64::min);

    let objective = |b: &[f64; 4]| Logistic4(*b).sse(scores, mos);
    let spread = (m_max - m_min).max(m_std).max(1e-3);
    let steps = [0.1 * spread, 0.1 * spread, 0.1 * s_std, 0.05 * s_std];

    let primary = [m_max, m_min, s_mean, s_std / 4.0];

    // Near-linear start: a wide logistic whose central slope equals the regression slope.
    let cov = scores
        .iter()
        .zip(mos)
        .map(|(s, m)| (s - s_mean) * (m - m_mean))
        .sum::<f64>()
        / scores.len() as f64;
    let slope = cov / (s_std * s_std);
    let width = 100.0 * s_std;
    let half_span = 2.0 * width * slope;
    let linear = [m_mean + half_span, m_mean - half_span, s_mean, width];

    let mut best: Option<Minimum<4>> = None;
    for start in [primary, linear] {
        // restart from the optimum until the descent stops improving
        let mut point = start;
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            let m = nelder_mead(objective, point, steps, SIMPLEX_TOL, MAX_ITERATIONS);
            let improved = m.value < prev * (1.0 - 1e-12);
            point = m.point;
            prev = m.value;
            if best.as_ref().is_none_or(|b| m.value < b.value) {
                best = Some(m);
            }
            if !improved {
                break;
            }
        }
    }
    let best = best.expect("at least one descent ran");
    let params = Logistic4(best.point);
    Ok(LogisticFit {
        mapped: params.map(scores),
        sse: best.value,
        params,
    })
}
