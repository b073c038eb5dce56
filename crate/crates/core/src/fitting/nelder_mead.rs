//! Bounded Nelder-Mead simplex search.
//!
//! Trial points are projected onto the box before evaluation. Coefficients
//! follow the dimension-adaptive scheme of Gao and Han, which behaves better
//! than the classic constants once there are more than a handful of
//! parameters. Restarts rebuild a simplex around the incumbent with
//! pseudo-random step signs drawn from a seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Parameter("bounds have mismatched lengths".into()));
        }
        if let Some(i) = (0..self.lower.len()).find(|&i| !(self.lower[i] <= self.upper[i])) {
            return Err(Error::Parameter(format!(
                "bound {i} is empty: [{}, {}]",
                self.lower[i], self.upper[i]
            )));
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when every vertex lies within this distance (max norm) of the best.
    pub x_tol: f64,
    /// Stop when the objective spread over the simplex falls below this.
    pub f_tol: f64,
    /// Initial simplex edge, relative to `|x|` (absolute where `x` is zero).
    pub initial_step: f64,
    /// Additional searches started from the incumbent after convergence. A
    /// restart that fails to improve halves the initial edge of the next one.
    pub restarts: usize,
    pub seed: u64,
    /// Stop as soon as the best value is at or below this.
    #[serde(default)]
    pub target_value: Option<f64>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 5000,
            x_tol: 1e-6,
            f_tol: 1e-8,
            initial_step: 0.1,
            restarts: 2,
            seed: 0x5eed,
            target_value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective after every simplex iteration.
    pub trace: Vec<f64>,
}

struct Counter<'a, F> {
    f: &'a F,
    bounds: &'a Bounds,
    evaluations: usize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Counter<'_, F> {
    fn eval(&mut self, x: &mut [f64]) -> Result<f64> {
        self.bounds.project(x);
        self.evaluations += 1;
        check((self.f)(x), x)
    }

    /// Evaluates several points concurrently; the result is independent of
    /// scheduling because each point is evaluated in isolation.
    fn eval_many(&mut self, xs: &mut [Vec<f64>]) -> Result<Vec<f64>> {
        for x in xs.iter_mut() {
            self.bounds.project(x);
        }
        self.evaluations += xs.len();
        let f = self.f;
        xs.par_iter().map(|x| check(f(x), x)).collect()
    }
}

fn check(v: f64, x: &[f64]) -> Result<f64> {
    if v.is_nan() {
        return Err(Error::NonFinite {
            value: v,
            point: x.to_vec(),
        });
    }
    Ok(v)
}

/// Minimises `f` inside `bounds` starting from `x0`.
///
/// A NaN objective anywhere aborts with the offending point. The returned
/// value is never worse than the value at the (projected) start.
pub fn minimize<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &NelderMeadOptions) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    bounds.validate()?;
    if bounds.dim() != x0.len() {
        return Err(Error::Parameter(format!(
            "start has {} parameters but bounds have {}",
            x0.len(),
            bounds.dim()
        )));
    }
    if x0.is_empty() {
        return Err(Error::Parameter("nothing to optimise".into()));
    }
    let mut counter = Counter {
        f,
        bounds,
        evaluations: 0,
    };
    let mut start = x0.to_vec();
    let f0 = counter.eval(&mut start)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite {
            value: f0,
            point: start,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = (start, f0);
    let mut trace = vec![f0];
    let mut converged = false;
    let mut step = opts.initial_step;
    let reached = |v: f64| opts.target_value.is_some_and(|t| v <= t);
    for round in 0..=opts.restarts {
        if reached(best.1) {
            converged = true;
            break;
        }
        if counter.evaluations + x0.len() > opts.max_evaluations {
            break;
        }
        let signs: Vec<f64> = (0..x0.len())
            .map(|_| if round == 0 || rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let (x, v, ok) = search(&mut counter, &best, &signs, step, opts, &mut trace)?;
        converged = ok;
        let improved = v < best.1;
        if improved {
            best = (x, v);
        }
        if round > 0 && !improved {
            step *= 0.5;
        }
    }
    Ok(OptimResult {
        x: best.0,
        value: best.1,
        evaluations: counter.evaluations,
        converged,
        trace,
    })
}

fn search<F>(
    counter: &mut Counter<'_, F>,
    start: &(Vec<f64>, f64),
    signs: &[f64],
    initial_step: f64,
    opts: &NelderMeadOptions,
    trace: &mut Vec<f64>,
) -> Result<(Vec<f64>, f64, bool)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = start.0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let bounds = counter.bounds;

    let mut others: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v = start.0.clone();
            let mut step = if v[i] != 0.0 {
                initial_step * v[i].abs()
            } else {
                initial_step
            };
            if bounds.width(i).is_finite() {
                step = step.min(0.5 * bounds.width(i));
            }
            let mut s = signs[i];
            // Step away from an active bound so the simplex keeps full rank.
            if v[i] + s * step > bounds.upper[i] || v[i] + s * step < bounds.lower[i] {
                s = -s;
            }
            v[i] += s * step;
            v
        })
        .collect();
    let values = counter.eval_many(&mut others)?;
    let mut simplex: Vec<(Vec<f64>, f64)> = std::iter::once(start.clone()).chain(others.into_iter().zip(values)).collect();

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = simplex[n].1 - simplex[0].1;
        let on_target = opts.target_value.is_some_and(|t| simplex[0].1 <= t);
        if diameter < opts.x_tol || spread < opts.f_tol || on_target {
            let (x, v) = simplex.swap_remove(0);
            return Ok((x, v, true));
        }
        // The costliest iteration (reflect, contract, shrink) needs n + 2 evaluations.
        if counter.evaluations + n + 2 > opts.max_evaluations {
            let (x, v) = simplex.swap_remove(0);
            return Ok((x, v, false));
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let mut xr = along(alpha);
        let fr = counter.eval(&mut xr)?;
        if fr < simplex[0].1 {
            let mut xe = along(alpha * beta);
            let fe = counter.eval(&mut xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (mut xc, fc_bound) = if fr < simplex[n].1 {
            (along(alpha * gamma), fr)
        } else {
            (along(-gamma), simplex[n].1)
        };
        let fc = counter.eval(&mut xc)?;
        if fc < fc_bound {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        let mut shrunk: Vec<Vec<f64>> = simplex[1..]
            .iter()
            .map(|(x, _)| best.iter().zip(x).map(|(b, v)| b + delta * (v - b)).collect())
            .collect();
        let values = counter.eval_many(&mut shrunk)?;
        for (slot, pair) in simplex[1..].iter_mut().zip(shrunk.into_iter().zip(values)) {
            *slot = pair;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let r = minimize(&f, &[0.5], &Bounds::unbounded(1), &NelderMeadOptions::default()).unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_in_bounds() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let bounds = Bounds {
            lower: vec![-2.0, -2.0],
            upper: vec![2.0, 2.0],
        };
        let opts = NelderMeadOptions {
            f_tol: 1e-14,
            x_tol: 1e-9,
            ..Default::default()
        };
        let r = minimize(&f, &[-1.2, 1.0], &bounds, &opts).unwrap();
        assert!(r.value < 1e-8, "{r:?}");
    }

    #[test]
    fn bounds_are_respected() {
        let f = |x: &[f64]| (x[0] + 5.0).powi(2) + (x[1] - 1.0).powi(2);
        let bounds = Bounds {
            lower: vec![0.0, -1.0],
            upper: vec![2.0, 3.0],
        };
        let r = minimize(&f, &[1.0, 0.0], &bounds, &NelderMeadOptions::default()).unwrap();
        assert!(r.x[0].abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nan_aborts_with_point() {
        let f = |x: &[f64]| if x[0] > 1.05 { f64::NAN } else { -x[0] };
        match minimize(&f, &[1.0], &Bounds::unbounded(1), &NelderMeadOptions::default()) {
            Err(Error::NonFinite { point, .. }) => assert!(point[0] > 1.05),
            other => panic!("expected NaN abort, got {other:?}"),
        }
        let inf = |_: &[f64]| f64::INFINITY;
        assert!(minimize(&inf, &[0.0], &Bounds::unbounded(1), &NelderMeadOptions::default()).is_err());
    }

    #[test]
    fn deterministic_and_never_worse() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + 0.1 * x[1] * x[1] + (x[0] - x[1]).abs();
        let opts = NelderMeadOptions {
            restarts: 4,
            ..Default::default()
        };
        let a = minimize(&f, &[0.3, -0.2], &Bounds::unbounded(2), &opts).unwrap();
        let b = minimize(&f, &[0.3, -0.2], &Bounds::unbounded(2), &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.value <= f(&[0.3, -0.2]));
    }

    #[test]
    fn evaluation_budget_is_honoured() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs().sqrt()).sum::<f64>();
        let opts = NelderMeadOptions {
            max_evaluations: 50,
            restarts: 0,
            ..Default::default()
        };
        let r = minimize(&f, &[1.0; 6], &Bounds::unbounded(6), &opts).unwrap();
        assert!(r.evaluations <= 50, "{}", r.evaluations);
    }

    #[test]
    fn target_value_stops_early() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>();
        let free = minimize(&f, &[0.0; 4], &Bounds::unbounded(4), &NelderMeadOptions::default()).unwrap();
        let opts = NelderMeadOptions {
            target_value: Some(1e-3),
            ..Default::default()
        };
        let r = minimize(&f, &[0.0; 4], &Bounds::unbounded(4), &opts).unwrap();
        assert!(r.value <= 1e-3 && r.converged);
        assert!(r.evaluations < free.evaluations);
    }
}
