use serde::{Deserialize, Serialize};

/// Outcome of a minimisation or fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub residual_ss: f64,
    pub iterations: usize,
    /// False when the iteration cap stopped the search; `params` then holds
    /// the best point seen.
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop once every vertex lies within this distance of the best one.
    pub x_tolerance: f64,
    /// Stop once the objective spread across the simplex falls below this.
    pub f_tolerance: f64,
    /// Edge length of the starting simplex, per coordinate. A zero entry is
    /// replaced by `5% of |x0|` or 0.1 when x0 is zero there.
    pub initial_step: Vec<f64>,
    /// Fresh simplices built around the best point after convergence.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            x_tolerance: 1e-10,
            f_tolerance: 1e-15,
            initial_step: Vec::new(),
            restarts: 2,
        }
    }
}

fn step_for(opts: &SimplexOptions, x0: &[f64], i: usize) -> f64 {
    match opts.initial_step.get(i) {
        Some(&s) if s != 0.0 => s,
        _ if x0[i] != 0.0 => 0.05 * x0[i].abs(),
        _ => 0.1,
    }
}

/// Nelder–Mead minimisation with the standard coefficients
/// (reflect 1, expand 2, contract ½, shrink ½). Fully deterministic.
///
/// The objective value at the returned point is stored in `residual_ss`.
pub fn simplex_minimize<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> FitResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0);
    let mut iterations = 0;
    let mut converged = false;

    for round in 0..=opts.restarts {
        let (x, fx, it, ok) = descend(&mut eval, &best_x, opts, opts.max_iterations - iterations);
        iterations += it;
        let improved = best_f - fx;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = ok;
        if !ok || iterations >= opts.max_iterations {
            break;
        }
        if round > 0 && improved.abs() <= opts.f_tolerance {
            break;
        }
    }
    FitResult { params: best_x, residual_ss: best_f, iterations, converged }
}

fn descend<F>(f: &mut F, x0: &[f64], opts: &SimplexOptions, budget: usize) -> (Vec<f64>, f64, usize, bool)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return (Vec::new(), f(x0), 0, true);
    }
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step_for(opts, x0, i);
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut order: Vec<usize> = (0..=n).collect();

    let mut it = 0;
    loop {
        // Stable sort keeps tie-breaking deterministic.
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (lo, hi, second) = (order[0], order[n], order[n - 1]);

        let spread = vals[hi] - vals[lo];
        let size = pts
            .iter()
            .map(|p| p.iter().zip(&pts[lo]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size <= opts.x_tolerance || spread <= opts.f_tolerance {
            return (pts[lo].clone(), vals[lo], it, true);
        }
        if it >= budget {
            return (pts[lo].clone(), vals[lo], it, false);
        }
        it += 1;

        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[k]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[hi]).map(|(c, h)| c + t * (c - h)).collect()
        };

        let xr = along(1.0);
        let fr = f(&xr);
        if fr < vals[lo] {
            let xe = along(2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[hi] = xe;
                vals[hi] = fe;
            } else {
                pts[hi] = xr;
                vals[hi] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[hi] = xr;
            vals[hi] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[hi] {
            let xc = along(0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < vals[hi].min(fr) {
            pts[hi] = xc;
            vals[hi] = fc;
            continue;
        }
        let best = pts[lo].clone();
        for k in 0..=n {
            if k == lo {
                continue;
            }
            for (p, b) in pts[k].iter_mut().zip(&best) {
                *p = b + 0.5 * (*p - b);
            }
            vals[k] = f(&pts[k]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn bowl() {
        let r = simplex_minimize(|x| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), &[0.0, 0.0], &SimplexOptions::default());
        assert!(r.converged);
        assert!((r.params[0] - 3.0).abs() < 1e-5 && (r.params[1] + 1.0).abs() < 1e-5, "{:?}", r.params);
    }

    #[test]
    fn rosenbrock_valley() {
        let r = simplex_minimize(rosenbrock, &[-1.2, 1.0], &SimplexOptions::default());
        assert!(r.converged);
        assert!((r.params[0] - 1.0).abs() < 1e-3 && (r.params[1] - 1.0).abs() < 1e-3, "{:?}", r.params);
    }

    #[test]
    fn start_at_minimum() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let r = simplex_minimize(f, &[3.0, -1.0], &SimplexOptions::default());
        assert_eq!(r.params, vec![3.0, -1.0]);
        assert_eq!(r.residual_ss, 0.0);
        assert!(r.iterations <= 100, "{}", r.iterations);
    }

    #[test]
    fn iteration_cap_reports_best() {
        let opts = SimplexOptions { max_iterations: 5, ..Default::default() };
        let r = simplex_minimize(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(!r.converged);
        assert!(r.residual_ss <= rosenbrock(&[-1.2, 1.0]));
    }

    #[test]
    fn deterministic() {
        let a = simplex_minimize(rosenbrock, &[-1.2, 1.0], &SimplexOptions::default());
        let b = simplex_minimize(rosenbrock, &[-1.2, 1.0], &SimplexOptions::default());
        assert_eq!(a, b);
    }
}
