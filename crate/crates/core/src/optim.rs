//! Derivative-free local minimizers and a low-discrepancy start sequence.
//!
//! Nelder–Mead uses the dimension-adaptive coefficients of Gao and Han
//! (2012), which behave much better than the textbook constants once the
//! problem has more than a handful of parameters.

use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct NelderMeadConfig {
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Stop once the spread of simplex values falls below this.
    pub ftol: f64,
    /// ...and every vertex lies within this distance (max-norm) of the best.
    pub xtol: f64,
    pub max_evals: usize,
    /// Optional box `[lo, hi]` applied to every coordinate by clamping.
    pub bounds: Option<(f64, f64)>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.25,
            ftol: 1e-10,
            xtol: 1e-8,
            max_evals: 4000,
            bounds: None,
        }
    }
}

fn clamp(x: &mut [f64], bounds: Option<(f64, f64)>) {
    if let Some((lo, hi)) = bounds {
        for v in x {
            *v = v.clamp(lo, hi);
        }
    }
}

pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    cfg: &NelderMeadConfig,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start, cfg.bounds);
    if n == 0 {
        let value = eval(&start, &mut evals);
        return Minimum {
            x: start,
            value,
            evaluations: evals,
            converged: true,
        };
    }

    let nf = n as f64;
    let (alpha, beta) = (1.0, 1.0 + 2.0 / nf);
    let gamma = (0.75 - 0.5 / nf).max(0.25);
    let delta = (1.0 - 1.0 / nf).max(0.5);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&start, &mut evals);
    simplex.push((start.clone(), v0));
    for i in 0..n {
        let mut x = start.clone();
        x[i] += cfg.initial_step;
        if let Some((_, hi)) = cfg.bounds {
            if x[i] > hi {
                x[i] = start[i] - cfg.initial_step;
            }
        }
        clamp(&mut x, cfg.bounds);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    while evals < cfg.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= cfg.ftol && diameter <= cfg.xtol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp(&mut p, cfg.bounds);
            p
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < best {
            let xe = along(beta);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = x_best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + delta * (v - b))
                .collect();
            clamp(&mut x, cfg.bounds);
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evaluations: evals,
        converged,
    }
}

#[derive(Clone, Debug)]
pub struct CompassConfig {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evals: usize,
    pub bounds: Option<(f64, f64)>,
}

impl Default for CompassConfig {
    fn default() -> Self {
        Self {
            initial_step: 1e-2,
            min_step: 1e-9,
            max_evals: 2000,
            bounds: None,
        }
    }
}

/// Coordinate pattern search: try `±step` along each axis, accept the first
/// improvement, halve the step when none is found.
pub fn compass_search(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    cfg: &CompassConfig,
) -> Minimum {
    let mut x = x0.to_vec();
    clamp(&mut x, cfg.bounds);
    let mut value = f(&x);
    let mut evals = 1;
    let mut step = cfg.initial_step;
    while step >= cfg.min_step && evals < cfg.max_evals {
        let mut improved = false;
        'axes: for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] += sign * step;
                clamp(&mut trial, cfg.bounds);
                let v = f(&trial);
                evals += 1;
                if v < value {
                    x = trial;
                    value = v;
                    improved = true;
                    break 'axes;
                }
                if evals >= cfg.max_evals {
                    break 'axes;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Minimum {
        x,
        value,
        evaluations: evals,
        converged: step < cfg.min_step,
    }
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `index` of the Halton sequence in `[0, 1)^dims`. Index 0 is the
/// origin; callers usually start at 1.
pub fn halton(index: usize, dims: usize) -> Vec<f64> {
    assert!(
        dims <= PRIMES.len(),
        "halton supports at most {} dimensions",
        PRIMES.len()
    );
    PRIMES[..dims]
        .iter()
        .map(|&base| {
            let base = base as usize;
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}
